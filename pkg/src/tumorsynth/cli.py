"""Command-line entry point.

Usage:
    tumorsynth synth --manifest M --config C --epoch K --out DIR [--backend ca|handcrafted] [--seed S] [--jobs N]
    tumorsynth eval dsc|nsd --pred P --gt G [--tau MM]
    tumorsynth features --image I --mask M
    tumorsynth reader-metrics --csv F [--unsure incorrect|drop]
    tumorsynth phantom --out DIR [--cases N] [--size N]

Exit codes: 0 success, 1 usage, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import load_config
from .errors import SynthesisError
from .metrics import DEFAULT_TAU_MM, dsc, extract_features, metrics_csv, nsd, read_reader_csv, reader_metrics
from .pipeline import read_manifest, synthesize_row, write_result
from .volume_io import load_volume, save_volume

log = logging.getLogger("tumorsynth")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
_BACKENDS = {"ca": "cellular_automata", "handcrafted": "handcrafted"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _run_row(args):
    row, config, epoch, out_dir = args
    try:
        results = synthesize_row(row, config, epoch)
    except SynthesisError as exc:
        return row.case_id, str(exc)
    for result in results:
        write_result(result, out_dir)
    return row.case_id, None


def cmd_synth(args) -> int:
    backend = _BACKENDS[args.backend] if args.backend else None
    config = load_config(args.config, backend=backend, seed=args.seed)
    rows = read_manifest(args.manifest)
    jobs = [(row, config, args.epoch, args.out) for row in rows]
    failed = 0
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(_run_row, jobs))
    else:
        outcomes = [_run_row(job) for job in jobs]
    for case_id, err in outcomes:
        if err:
            failed += 1
            log.warning("skipped %s: %s", case_id, err)
        else:
            print(f"{case_id}: ok")
    print(f"wrote {len(outcomes) - failed}/{len(outcomes)} cases to {args.out}")
    return EXIT_OK if rows and failed < len(rows) else EXIT_DATA


def cmd_eval(args) -> int:
    pred, gt = load_volume(args.pred), load_volume(args.gt)
    if args.metric == "dsc":
        value = dsc(pred, gt)
    else:
        value = nsd(pred, gt, args.tau)
    sys.stdout.write(metrics_csv([(Path(args.pred).stem, args.metric, value)]))
    return EXIT_OK


def cmd_features(args) -> int:
    image, mask = load_volume(args.image), load_volume(args.mask)
    feats = extract_features(image, mask)
    case = Path(args.image).stem
    sys.stdout.write(metrics_csv((case, k, v) for k, v in feats.to_dict().items()))
    return EXIT_OK


def cmd_reader(args) -> int:
    sens, spec, acc = reader_metrics(read_reader_csv(args.csv), unsure=args.unsure)
    case = Path(args.csv).stem
    sys.stdout.write(metrics_csv([(case, "sensitivity", sens), (case, "specificity", spec), (case, "accuracy", acc)]))
    return EXIT_OK


def cmd_phantom(args) -> int:
    from .phantom import organ_phantom

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    for k in range(args.cases):
        ct, masks = organ_phantom((args.size,) * 3, seed=k)
        case = f"case{k:03d}"
        save_volume(ct, out / f"{case}_ct.rvol")
        save_volume(masks.organ, out / f"{case}_organ.rvol")
        save_volume(masks.vessels, out / f"{case}_vessels.rvol")
        lines.append(f"{case},{case}_ct.rvol,{case}_organ.rvol,{case}_vessels.rvol")
    (out / "manifest.csv").write_text("\n".join(lines) + "\n")
    print(f"wrote {args.cases} phantom cases and {out / 'manifest.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tumorsynth", description="Synthetic tumor generation and evaluation.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate one epoch of synthetic lesions")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config")
    p.add_argument("--epoch", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--backend", choices=sorted(_BACKENDS))
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="overlap metric between two masks")
    p.add_argument("metric", choices=["dsc", "nsd"])
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--tau", type=float, default=DEFAULT_TAU_MM, help="NSD tolerance in mm (default 2)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("features", help="first-order and shape features of a masked lesion")
    p.add_argument("--image", required=True)
    p.add_argument("--mask", required=True)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("reader-metrics", help="sensitivity/specificity/accuracy from a truth,call CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--unsure", choices=["incorrect", "drop"], default="incorrect")
    p.set_defaults(func=cmd_reader)

    p = sub.add_parser("phantom", help="write phantom cases and a manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--cases", type=int, default=3)
    p.add_argument("--size", type=int, default=64)
    p.set_defaults(func=cmd_phantom)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SynthesisError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error: %s", exc)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
