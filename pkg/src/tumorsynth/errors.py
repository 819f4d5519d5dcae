"""Exception hierarchy shared by every stage of the synthesis pipeline."""


class SynthesisError(Exception):
    """Base class. ``stage`` names the pipeline stage that raised."""

    stage = "unknown"

    def __init__(self, message: str, stage: str | None = None):
        if stage is not None:
            self.stage = stage
        super().__init__(f"[{self.stage}] {message}")


# volume_io
class MalformedHeader(SynthesisError):
    stage = "volume_io"


class DimensionMismatch(SynthesisError):
    stage = "volume_io"


class UnsupportedDatatype(SynthesisError):
    stage = "volume_io"


class IoFailure(SynthesisError):
    stage = "volume_io"


class NonBinaryMask(SynthesisError):
    stage = "volume_io"


class VesselOutsideOrgan(SynthesisError):
    stage = "volume_io"


# quantize / ca_engine
class EmptyOrgan(SynthesisError):
    stage = "quantize"


class SeedOutsideOrgan(SynthesisError):
    stage = "quantize"


class NoEligibleSeed(SynthesisError):
    stage = "seed_selection"


class InvalidRules(SynthesisError):
    stage = "ca_engine"


# interaction
class EmptyTumor(SynthesisError):
    stage = "interaction"


# handcrafted
class DegenerateShape(SynthesisError):
    stage = "handcrafted"


class PlacementFailed(SynthesisError):
    stage = "handcrafted"


# metrics
class EmptyInput(SynthesisError):
    stage = "metrics"


class EmptyMask(SynthesisError):
    stage = "metrics"


# pipeline
class ManifestRowInvalid(SynthesisError):
    stage = "pipeline"


class ConfigError(SynthesisError):
    stage = "pipeline"
