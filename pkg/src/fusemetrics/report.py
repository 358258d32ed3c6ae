"""Report rows, cohort summaries and CSV/JSON emission."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from pathlib import Path

from . import __version__
from .metrics import CaseMetrics
from .volume import REGIONS

CSV_HEADER = ("case_id", "region", "dsc", "hd95_mm", "lw_dsc", "lw_hd95_mm", "tp", "fn", "fp")
FLOAT_FIELDS = ("dsc", "hd95_mm", "lw_dsc", "lw_hd95_mm")
COUNT_FIELDS = ("tp", "fn", "fp")
SUMMARY_CASE_ID = "mean"
AVG = "Avg"


@dataclass(frozen=True)
class ReportRow:
    case_id: str
    region: str
    dsc: float
    hd95_mm: float
    lw_dsc: float
    lw_hd95_mm: float
    tp: int
    fn: int
    fp: int

    def __post_init__(self):
        for name in ("dsc", "lw_dsc"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        for name in ("hd95_mm", "lw_hd95_mm"):
            if not getattr(self, name) >= 0.0:
                raise ValueError(f"{name} must be >= 0")


def rows_from_case(case_id: str, metrics: CaseMetrics) -> list[ReportRow]:
    rows = []
    for region, m in metrics.regions.items():
        rows.append(ReportRow(case_id, region, m.dsc, m.hd95, m.lw_dsc, m.lw_hd95, m.tp, m.fn, m.fp))
    return rows


def summarize(rows: list[ReportRow], regions=REGIONS) -> dict:
    """Per-region means over cases plus the cross-region ``Avg``; counts are totals."""
    out = {}
    for region in regions:
        sel = [r for r in rows if r.region == region]
        if not sel:
            continue
        entry = {f: sum(getattr(r, f) for r in sel) / len(sel) for f in FLOAT_FIELDS}
        entry.update({f: sum(getattr(r, f) for r in sel) for f in COUNT_FIELDS})
        entry["n_cases"] = len(sel)
        out[region] = entry
    present = [r for r in regions if r in out]
    if present:
        avg = {f: sum(out[r][f] for r in present) / len(present) for f in FLOAT_FIELDS}
        avg.update({f: sum(out[r][f] for r in present) for f in COUNT_FIELDS})
        avg["n_cases"] = max(out[r]["n_cases"] for r in present)
        out[AVG] = avg
    return out


def _fmt(v: float) -> str:
    return f"{v:.4f}"


def render_csv(rows: list[ReportRow], summary: dict | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([r.case_id, r.region, *(_fmt(getattr(r, f)) for f in FLOAT_FIELDS), r.tp, r.fn, r.fp])
    for region, s in (summary or {}).items():
        w.writerow([SUMMARY_CASE_ID, region, *(_fmt(s[f]) for f in FLOAT_FIELDS), *(s[f] for f in COUNT_FIELDS)])
    return buf.getvalue()


def render_json(rows, summary, config_echo=None, failures=None) -> str:
    doc = {
        "rows": [asdict(r) for r in rows],
        "summary": summary,
        "config_echo": config_echo or {},
        "tool_version": __version__,
        "failures": failures or [],
    }
    return json.dumps(doc, indent=2) + "\n"


def emit_report(rows, summary, fmt: str, path, config_echo=None, failures=None) -> None:
    if not rows:
        raise ValueError("no rows to report")
    if fmt == "csv":
        text = render_csv(rows, summary)
    elif fmt == "json":
        text = render_json(rows, summary, config_echo, failures)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    Path(path).write_text(text)


def load_report(path) -> tuple[list[ReportRow], dict]:
    """Read a report written by :func:`emit_report` (CSV or JSON)."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        doc = json.loads(text)
        return [ReportRow(**r) for r in doc["rows"]], doc.get("summary", {})
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        if rec["case_id"] == SUMMARY_CASE_ID:
            continue
        rows.append(
            ReportRow(
                rec["case_id"],
                rec["region"],
                *(float(rec[f]) for f in FLOAT_FIELDS),
                *(int(rec[f]) for f in COUNT_FIELDS),
            )
        )
    return rows, summarize(rows)


def format_table(summary: dict) -> str:
    """Challenge-table layout: DSC and HD95 (classic, then lesion-wise) for ET, TC, WT, Avg."""
    cols = [c for c in (*REGIONS, AVG) if c in summary]
    head = "  ".join(f"{c:>9}" for c in cols)
    lines = []
    for title, keys in (("Classic", ("dsc", "hd95_mm")), ("Lesion-wise", ("lw_dsc", "lw_hd95_mm"))):
        lines.append(title)
        lines.append(f"{'':12}{head}")
        for label, key in zip(("DSC", "HD95"), keys):
            lines.append(f"{label:12}" + "  ".join(f"{summary[c][key]:9.4f}" for c in cols))
    return "\n".join(lines)
