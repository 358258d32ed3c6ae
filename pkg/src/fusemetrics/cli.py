"""``fusemetrics`` command-line entry point.

Exit codes: 0 success, 1 usage/config error, 2 I/O error, 3 one or more
cases failed validation (the rest of the batch still ran).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .batch import run_evaluate, run_fuse, run_postprocess
from .config import ConfigError, RunConfig, load_config, load_schema
from .manifest import ManifestError, load_manifest, write_manifest
from .nifti import NiftiError, read_nifti, read_volume, write_volume
from .preprocess import preprocess_case
from .report import emit_report, format_table, load_report, render_csv, render_json

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_CASES = 0, 1, 2, 3

log = logging.getLogger("fusemetrics")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML or JSON run configuration")
    p.add_argument("--schema", help="YAML or JSON label schema (labels + regions)")
    p.add_argument("--workers", type=int, help="worker processes (default 1)")


def _lesion_flags(p):
    p.add_argument("--connectivity", type=int, choices=(6, 18, 26))
    p.add_argument("--penalty-mm", type=float, help="HD95 for an empty prediction/target and per unmatched lesion")
    p.add_argument("--percentile-method", choices=("nearest-rank",))
    p.add_argument("--surface", choices=("boundary", "full"), help="HD95 point sets")
    p.add_argument("--dilation-radius", type=int, help="gt dilation (voxels) for lesion matching")
    p.add_argument("--min-lesion-size", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="fusemetrics",
        description="Fuse, post-process and evaluate 3D brain-tumor segmentations (NIfTI-1).",
        epilog="exit codes: 0 ok, 1 usage/config error, 2 I/O error, 3 some cases failed",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("info", help="print NIfTI header geometry and label counts")
    p.add_argument("paths", nargs="+")

    p = sub.add_parser("preprocess", help="reorient, resample, crop, resize and normalize one case")
    _common(p)
    p.add_argument("images", nargs="+", help="co-registered modality images")
    p.add_argument("--labels", help="segmentation to carry through the same geometry steps")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--spacing", type=float, nargs=3, metavar=("SX", "SY", "SZ"))
    p.add_argument("--fov", type=int, nargs=3, metavar=("NX", "NY", "NZ"))
    for step in ("reorient", "resample", "crop", "resize", "normalize"):
        p.add_argument(f"--no-{step}", action="store_true")

    p = sub.add_parser("fuse", help="STAPLE or majority-vote fusion of multiple predictions")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--fusion", choices=("staple", "majority"))
    p.add_argument("--threshold", type=float, help="posterior threshold for the STAPLE consensus")
    p.add_argument("--max-iterations", type=int)

    p = sub.add_parser("postprocess", help="enhancing-tumor refinement")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--et-min-component", type=int)
    p.add_argument("--et-min-total", type=int)
    p.add_argument("--et-prob-threshold", type=float)
    p.add_argument("--connectivity", type=int, choices=(6, 18, 26))

    p = sub.add_parser("evaluate", help="classic and lesion-wise DSC/HD95 per case and region")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="report file")
    p.add_argument("--format", choices=("csv", "json"))
    _lesion_flags(p)

    p = sub.add_parser("report", help="summarize or convert a saved report")
    p.add_argument("input")
    p.add_argument("--format", choices=("table", "csv", "json"), default="table")
    p.add_argument("--out")
    return parser


def _config(args, extra: dict) -> RunConfig:
    overrides = {"workers": getattr(args, "workers", None), **extra}
    cfg = load_config(getattr(args, "config", None), overrides)
    if getattr(args, "schema", None):
        cfg.schema = load_schema(args.schema)
    return cfg


def _exit_for(failures) -> int:
    for f in failures:
        print(f"case {f.case_id}: {f.error}", file=sys.stderr)
    return EXIT_CASES if failures else EXIT_OK


def cmd_info(args) -> int:
    for path in args.paths:
        hdr, geom, data = read_nifti(path)
        print(f"{path}")
        print(f"  datatype   {hdr.datatype} ({data.dtype})")
        print(f"  dims       {geom.dims}")
        print(f"  spacing    {tuple(round(s, 6) for s in geom.spacing)}")
        print(f"  origin     {tuple(round(o, 4) for o in geom.origin)}")
        print(f"  direction  {[tuple(round(x, 4) for x in row) for row in geom.direction]}")
        print(f"  qform/sform {hdr.qform_code}/{hdr.sform_code}  slope/inter {hdr.scl_slope}/{hdr.scl_inter}")
        if data.dtype.kind in "iu":
            values, counts = np.unique(data, return_counts=True)
            print("  labels     " + ", ".join(f"{v}:{c}" for v, c in zip(values.tolist(), counts.tolist())))
        else:
            print(f"  range      [{data.min():.6g}, {data.max():.6g}]")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    extra = {"preprocess.spacing": tuple(args.spacing) if args.spacing else None}
    extra["preprocess.fov"] = tuple(args.fov) if args.fov else None
    for step in ("reorient", "resample", "crop", "resize", "normalize"):
        if getattr(args, f"no_{step}"):
            extra[f"preprocess.{step}"] = False
    cfg = _config(args, extra)
    images = [read_volume(p) for p in args.images]
    labels = None
    if args.labels:
        g, v = read_volume(args.labels)
        labels = (g, np.rint(v).astype(np.int32))
    res = preprocess_case(images, labels, cfg.preprocess)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for path, vox in zip(args.images, res.images):
        write_volume(out / Path(path).name, res.geometry, vox.astype(np.float32), "float32")
    if res.labels is not None:
        write_volume(out / Path(args.labels).name, res.geometry, res.labels, "uint8")
    (out / "preprocess_plan.json").write_text(json.dumps({**res.plan.to_dict(), "applied": res.log}, indent=2) + "\n")
    return EXIT_OK


def cmd_fuse(args) -> int:
    cfg = _config(
        args,
        {"fusion": args.fusion, "staple.threshold": args.threshold, "staple.max_iterations": args.max_iterations},
    )
    manifest = load_manifest(args.manifest, cfg.suffixes)
    result = run_fuse(manifest, cfg, args.out)
    write_manifest(Path(args.out) / "fused_manifest.csv", result.cases)
    return _exit_for(result.failures)


def cmd_postprocess(args) -> int:
    cfg = _config(
        args,
        {
            "refine.min_component_size": args.et_min_component,
            "refine.min_total_size": args.et_min_total,
            "refine.prob_threshold": args.et_prob_threshold,
            "refine.connectivity": args.connectivity,
        },
    )
    manifest = load_manifest(args.manifest, cfg.suffixes)
    result = run_postprocess(manifest, cfg, args.out)
    write_manifest(Path(args.out) / "postprocessed_manifest.csv", result.cases)
    return _exit_for(result.failures)


def cmd_evaluate(args) -> int:
    cfg = _config(
        args,
        {
            "lesion.connectivity": args.connectivity,
            "lesion.penalty_mm": args.penalty_mm,
            "lesion.percentile_method": args.percentile_method,
            "lesion.surface": args.surface,
            "lesion.dilation_radius": args.dilation_radius,
            "lesion.min_lesion_size": args.min_lesion_size,
        },
    )
    manifest = load_manifest(args.manifest, cfg.suffixes)
    if len(manifest) == 0:
        raise UsageError("manifest has no cases")
    result = run_evaluate(manifest, cfg)
    fmt = args.format or ("json" if args.out.endswith(".json") else "csv")
    failures = [f.to_dict() for f in result.failures]
    if result.rows:
        emit_report(result.rows, result.summary, fmt, args.out, cfg.to_dict(), failures)
        print(format_table(result.summary))
    return _exit_for(result.failures)


def cmd_report(args) -> int:
    rows, summary = load_report(args.input)
    if args.format == "table":
        text = format_table(summary) + "\n"
    elif args.format == "csv":
        text = render_csv(rows, summary)
    else:
        text = render_json(rows, summary)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "info": cmd_info,
    "preprocess": cmd_preprocess,
    "fuse": cmd_fuse,
    "postprocess": cmd_postprocess,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def main(argv=None) -> int:
    level = os.environ.get("FUSEMETRICS_LOG", "WARNING").upper()
    logging.basicConfig(
        level=level if isinstance(logging.getLevelName(level), int) else "WARNING",
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, UsageError) as exc:
        print(f"fusemetrics: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ManifestError, NiftiError, OSError) as exc:
        print(f"fusemetrics: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"fusemetrics: validation failed: {exc}", file=sys.stderr)
        return EXIT_CASES


if __name__ == "__main__":
    sys.exit(main())
