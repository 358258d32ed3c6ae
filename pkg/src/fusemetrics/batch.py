"""Batch orchestration over a case manifest.

Cases run in a bounded process pool; results are collected in manifest
order, so reports do not depend on the worker count.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .fusion import fuse_hierarchical
from .manifest import CaseEntry, CaseManifest
from .metrics import evaluate_case
from .nifti import read_label_volume, read_volume, write_volume
from .postprocess import refine_enhancing_tumor
from .report import ReportRow, rows_from_case, summarize
from .volume import ProbabilityVolume, region_mask

log = logging.getLogger(__name__)


@dataclass
class CaseFailure:
    case_id: str
    error: str

    def to_dict(self) -> dict:
        return {"case_id": self.case_id, "error": self.error}


@dataclass
class BatchResult:
    rows: list[ReportRow] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    failures: list[CaseFailure] = field(default_factory=list)
    outputs: dict = field(default_factory=dict)
    cases: list[CaseEntry] = field(default_factory=list)  # manifest of written outputs


def _map_cases(fn, cases, config: RunConfig):
    args = [(c, config) for c in cases]
    if config.workers == 1 or len(args) <= 1:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(fn, args))


def _evaluate_one(arg):
    case, config = arg
    try:
        if case.gt is None:
            raise ValueError("no ground truth")
        if len(case.preds) != 1:
            raise ValueError(f"expected exactly one prediction, got {len(case.preds)}")
        gt = read_label_volume(case.gt, config.schema)
        pred = read_label_volume(case.preds[0], config.schema)
        metrics = evaluate_case(gt, pred, config.schema, config.lesion)
        return rows_from_case(case.case_id, metrics), None
    except (ValueError, OSError) as exc:
        return None, CaseFailure(case.case_id, f"{type(exc).__name__}: {exc}")


def run_evaluate(manifest: CaseManifest, config: RunConfig) -> BatchResult:
    if len(manifest) == 0:
        raise ValueError("manifest has no cases")
    result = BatchResult()
    for rows, failure in _map_cases(_evaluate_one, manifest.cases, config):
        if failure is not None:
            log.warning("case %s skipped: %s", failure.case_id, failure.error)
            result.failures.append(failure)
        else:
            result.rows.extend(rows)
    result.summary = summarize(result.rows)
    return result


def _nesting_ok(vol, schema) -> bool:
    et = region_mask(vol, schema, "ET").voxels
    tc = region_mask(vol, schema, "TC").voxels
    wt = region_mask(vol, schema, "WT").voxels
    return not (et & ~tc).any() and not (tc & ~wt).any()


def _fuse_one(arg):
    (case, out_dir), config = arg
    try:
        if len(case.preds) < 2:
            raise ValueError(f"fusion needs at least two predictions, got {len(case.preds)}")
        preds = [read_label_volume(p, config.schema) for p in case.preds]
        fused, states = fuse_hierarchical(
            preds, config.schema, config.staple, method=config.fusion, fraction=config.vote_fraction
        )
        if not _nesting_ok(fused, config.schema):
            raise ValueError("fused labels violate region nesting")
        out = Path(out_dir) / f"{case.case_id}-fused.nii.gz"
        write_volume(out, fused.geometry, fused.voxels, "uint8")
        sidecar = {r: (s.summary() if s is not None else None) for r, s in states.items()}
        return str(out), sidecar, None
    except (ValueError, OSError) as exc:
        return None, None, CaseFailure(case.case_id, f"{type(exc).__name__}: {exc}")


def run_fuse(manifest: CaseManifest, config: RunConfig, out_dir) -> BatchResult:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = BatchResult()
    cases = [(c, str(out_dir)) for c in manifest.cases]
    sidecar = {"method": config.fusion, "cases": {}}
    for case, (path, states, failure) in zip(manifest.cases, _map_cases(_fuse_one, cases, config)):
        if failure is not None:
            log.warning("case %s not fused: %s", failure.case_id, failure.error)
            result.failures.append(failure)
            continue
        result.outputs[case.case_id] = path
        sidecar["cases"][case.case_id] = states
        result.cases.append(CaseEntry(case.case_id, case.gt, (Path(path),), ()))
    (out_dir / "staple_states.json").write_text(json.dumps(sidecar, indent=2) + "\n")
    return result


def _output_stem(path: Path) -> str:
    name = path.name
    for ext in (".nii.gz", ".nii"):
        if name.endswith(ext):
            return name[: -len(ext)]
    return path.stem


def _postprocess_one(arg):
    (case, out_dir), config = arg
    try:
        if not case.preds:
            raise ValueError("no prediction to post-process")
        if case.probs and len(case.probs) not in (1, len(case.preds)):
            raise ValueError("need one ET probability map per prediction, or a single shared one")
        outputs, reports = [], []
        for i, pred_path in enumerate(case.preds):
            seg = read_label_volume(pred_path, config.schema)
            prob = None
            if case.probs:
                g, values = read_volume(case.probs[i if len(case.probs) > 1 else 0])
                if values.size and (values.min() < -1e-6 or values.max() > 1 + 1e-6):
                    raise ValueError("ET probability map has values outside [0, 1]")
                # float32 storage can drift a hair past the unit interval
                prob = ProbabilityVolume(g, np.clip(values, 0.0, 1.0))
            refined, report = refine_enhancing_tumor(seg, prob, config.schema, config.refine)
            out = Path(out_dir) / f"{_output_stem(pred_path)}-post.nii.gz"
            write_volume(out, refined.geometry, refined.voxels, "uint8")
            outputs.append(out)
            reports.append({"input": str(pred_path), "output": str(out), **report.to_dict()})
        return outputs, reports, None
    except (ValueError, OSError) as exc:
        return None, None, CaseFailure(case.case_id, f"{type(exc).__name__}: {exc}")


def run_postprocess(manifest: CaseManifest, config: RunConfig, out_dir) -> BatchResult:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = BatchResult()
    cases = [(c, str(out_dir)) for c in manifest.cases]
    sidecar = {}
    for case, (paths, reports, failure) in zip(manifest.cases, _map_cases(_postprocess_one, cases, config)):
        if failure is not None:
            log.warning("case %s not post-processed: %s", failure.case_id, failure.error)
            result.failures.append(failure)
            continue
        sidecar[case.case_id] = reports
        result.outputs[case.case_id] = [str(p) for p in paths]
        result.cases.append(CaseEntry(case.case_id, case.gt, tuple(paths), ()))
    (out_dir / "refine_reports.json").write_text(json.dumps(sidecar, indent=2) + "\n")
    return result
