"""Label-free synthetic tumor generation for CT volumes."""

from .ca_engine import GrowthRules, StepReport, grow_lesion, sample_seed, step
from .config import load_config, make_recipe
from .ct_mapping import IntensityModel, render, value_noise
from .handcrafted import generate_shape, synthesize_handcrafted
from .interaction import DisplacementField, mass_effect_field, warp
from .metrics import dsc, extract_features, nsd, reader_metrics
from .pipeline import epoch_stream, synthesize
from .quantize import OrganMap, Phase, TumorMap, build_organ_map, init_tumor_map
from .recipe import LesionRecipe, ShapeSpec, SynthesisResult
from .volume_io import MaskSet, Volume, VolumeKind, derive_boundary, load_volume, save_volume

__version__ = "0.1.0"
