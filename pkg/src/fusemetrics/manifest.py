"""Case manifests: a CSV file (``case_id,gt,pred,prob``) or a BraTS-style directory."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

from .config import DEFAULT_SUFFIXES

MANIFEST_HEADER = ("case_id", "gt", "pred", "prob")
NIFTI_EXTS = (".nii.gz", ".nii")


class ManifestError(OSError):
    """Manifest cannot be read or references missing files."""


@dataclass(frozen=True)
class CaseEntry:
    case_id: str
    gt: Path | None = None
    preds: tuple[Path, ...] = ()
    probs: tuple[Path, ...] = ()


@dataclass
class CaseManifest:
    cases: list[CaseEntry] = field(default_factory=list)
    source: str = ""

    def __len__(self):
        return len(self.cases)

    def __iter__(self):
        return iter(self.cases)


def _split(cell: str | None) -> list[str]:
    if not cell:
        return []
    return [part.strip() for part in cell.split(";") if part.strip()]


def _resolve(base: Path, raw: str, row: int, case_id: str) -> Path:
    p = Path(raw)
    if not p.is_absolute():
        p = base / p
    if not p.exists():
        raise ManifestError(f"row {row} (case {case_id}): file not found: {raw}")
    return p


def _load_csv(path: Path) -> CaseManifest:
    try:
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or "case_id" not in reader.fieldnames:
                raise ManifestError(f"{path}: missing header; expected {','.join(MANIFEST_HEADER)}")
            rows = list(reader)
    except (OSError, UnicodeDecodeError) as exc:
        if isinstance(exc, ManifestError):
            raise
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    base = path.parent
    seen = set()
    cases = []
    for n, row in enumerate(rows, start=2):
        cid = (row.get("case_id") or "").strip()
        if not cid:
            raise ManifestError(f"row {n}: empty case_id")
        if cid in seen:
            raise ManifestError(f"row {n}: duplicate case_id {cid}")
        seen.add(cid)
        gt = (row.get("gt") or "").strip()
        cases.append(
            CaseEntry(
                case_id=cid,
                gt=_resolve(base, gt, n, cid) if gt else None,
                preds=tuple(_resolve(base, p, n, cid) for p in _split(row.get("pred"))),
                probs=tuple(_resolve(base, p, n, cid) for p in _split(row.get("prob"))),
            )
        )
    return CaseManifest(sorted(cases, key=lambda c: c.case_id), str(path))


def _strip_ext(name: str) -> str | None:
    for ext in NIFTI_EXTS:
        if name.endswith(ext):
            return name[: -len(ext)]
    return None


def _load_dir(path: Path, suffixes: dict) -> CaseManifest:
    cases = []
    for sub in sorted(p for p in path.iterdir() if p.is_dir()):
        cid = sub.name
        gt, preds, probs = None, [], []
        for f in sorted(sub.iterdir()):
            stem = _strip_ext(f.name)
            if stem is None or not stem.startswith(cid):
                continue
            tail = stem[len(cid) :]
            if tail == suffixes["gt"]:
                gt = f
            elif tail.startswith(suffixes["pred"]):
                preds.append(f)
            elif tail == suffixes["prob"]:
                probs.append(f)
        if gt is None and not preds:
            continue
        cases.append(CaseEntry(cid, gt, tuple(preds), tuple(probs)))
    return CaseManifest(cases, str(path))


def load_manifest(path, suffixes: dict | None = None) -> CaseManifest:
    """Load cases from a manifest CSV or a directory of ``<case>/<case>-seg.nii.gz`` folders."""
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    if path.is_dir():
        return _load_dir(path, {**DEFAULT_SUFFIXES, **(suffixes or {})})
    return _load_csv(path)


def write_manifest(path, cases) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_HEADER)
        for c in cases:
            w.writerow(
                [
                    c.case_id,
                    str(c.gt) if c.gt else "",
                    ";".join(str(p) for p in c.preds),
                    ";".join(str(p) for p in c.probs),
                ]
            )
