"""Classic and lesion-wise Dice / HD95 for nested tumor regions.

Empty-set conventions: both masks empty gives dice 1.0 and hd95 0.0; exactly
one empty gives dice 0.0 and hd95 equal to the configured penalty.

Unmatched lesions (FN and FP) contribute a fixed penalty (default 374 mm) to
the lesion-wise HD95 numerator. Set ``penalty_mm=0`` for the reading in
which only matched lesions are summed.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .morphology import boundary, connected_components, dilate, squared_distance_transform
from .volume import (
    REGIONS,
    BinaryMask,
    LabelSchema,
    LabelVolume,
    check_same_grid,
    region_mask,
)

DEFAULT_PENALTY_MM = 374.0
PERCENTILE = 95.0
SURFACE_MODES = ("boundary", "full")


@dataclass(frozen=True)
class LesionMatchParams:
    connectivity: int = 26
    dilation_radius: int = 1
    min_lesion_size: int = 1
    penalty_mm: float = DEFAULT_PENALTY_MM
    surface: str = "boundary"
    percentile_method: str = "nearest-rank"

    def __post_init__(self):
        if self.connectivity not in (6, 18, 26):
            raise ValueError(f"connectivity must be 6, 18 or 26, got {self.connectivity}")
        if self.dilation_radius < 0:
            raise ValueError("dilation radius must be >= 0")
        if self.min_lesion_size < 1:
            raise ValueError("minimum lesion size must be >= 1")
        if not self.penalty_mm >= 0:
            raise ValueError("penalty must be non-negative")
        if self.surface not in SURFACE_MODES:
            raise ValueError(f"surface must be one of {SURFACE_MODES}")
        if self.percentile_method != "nearest-rank":
            raise ValueError("only the nearest-rank percentile method is supported")


DEFAULT_PARAMS = LesionMatchParams()


def nearest_rank(values: np.ndarray, q: float = PERCENTILE) -> float:
    """Nearest-rank percentile: the ceil(q/100 * n)-th smallest value (1-based)."""
    n = len(values)
    if n == 0:
        raise ValueError("percentile of an empty set")
    # integer arithmetic so 0.95 * 20 is exactly rank 19
    rank = max(1, -(-round(q * 100) * n // 10000))
    return float(np.partition(values, rank - 1)[rank - 1])


def dice(a: BinaryMask, b: BinaryMask) -> float:
    check_same_grid(a.geometry, b.geometry)
    na = int(np.count_nonzero(a.voxels))
    nb = int(np.count_nonzero(b.voxels))
    if na + nb == 0:
        return 1.0
    inter = int(np.count_nonzero(a.voxels & b.voxels))
    return 2.0 * inter / (na + nb)


def _bbox(arr: np.ndarray) -> tuple[slice, ...]:
    slices = []
    for axis in range(3):
        other = tuple(i for i in range(3) if i != axis)
        idx = np.flatnonzero(arr.any(axis=other))
        slices.append(slice(int(idx[0]), int(idx[-1]) + 1))
    return tuple(slices)


def directed_percentile_distances(src: np.ndarray, dst: np.ndarray, spacing) -> np.ndarray:
    """Distances (mm) from each true voxel of ``src`` to the nearest true voxel of ``dst``."""
    # the nearest dst voxel always lies inside the joint bounding box
    box = _bbox(src | dst)
    sq = squared_distance_transform(dst[box], spacing)
    return np.sqrt(sq[src[box]])


def _surface(mask: BinaryMask, mode: str) -> np.ndarray:
    return boundary(mask).voxels if mode == "boundary" else mask.voxels


def hd95(a: BinaryMask, b: BinaryMask, params: LesionMatchParams = DEFAULT_PARAMS) -> float:
    """Symmetric 95th-percentile Hausdorff distance in mm."""
    check_same_grid(a.geometry, b.geometry)
    a_empty = not a.voxels.any()
    b_empty = not b.voxels.any()
    if a_empty and b_empty:
        return 0.0
    if a_empty or b_empty:
        return float(params.penalty_mm)
    sa = _surface(a, params.surface)
    sb = _surface(b, params.surface)
    spacing = a.geometry.spacing
    d_ab = nearest_rank(directed_percentile_distances(sa, sb, spacing))
    d_ba = nearest_rank(directed_percentile_distances(sb, sa, spacing))
    return max(d_ab, d_ba)


@dataclass
class LesionMatch:
    gt_id: int
    pred_ids: list[int]
    gt_size: int
    pred_size: int
    dice: float
    hd95: float


@dataclass
class LesionMatchTable:
    tp: int = 0
    fn: int = 0
    fp: int = 0
    matches: list[LesionMatch] = field(default_factory=list)
    missed_gt_ids: list[int] = field(default_factory=list)
    false_pred_ids: list[int] = field(default_factory=list)
    n_gt_lesions: int = 0
    n_pred_lesions: int = 0

    @property
    def num_lesions(self) -> int:
        """L: every lesion entering the lesion-wise sums, i.e. TP + FN + FP."""
        return self.tp + self.fn + self.fp


def _counted_components(mask: BinaryMask, params: LesionMatchParams):
    cc = connected_components(mask, params.connectivity)
    keep = [cid for cid in range(1, cc.count + 1) if cc.sizes[cid - 1] >= params.min_lesion_size]
    return cc, keep


def match_lesions(gt: BinaryMask, pred: BinaryMask, params: LesionMatchParams = DEFAULT_PARAMS) -> LesionMatchTable:
    check_same_grid(gt.geometry, pred.geometry)
    gt_cc, gt_ids = _counted_components(gt, params)
    pred_cc, pred_ids = _counted_components(pred, params)
    pred_lookup = set(pred_ids)
    dil_conn = 6 if params.connectivity == 6 else 26

    # overlap[g][p] = voxels of predicted lesion p inside dilated gt lesion g
    overlaps: dict[int, dict[int, int]] = {}
    for g in gt_ids:
        region = BinaryMask(gt.geometry, gt_cc.labels == g)
        if params.dilation_radius > 0:
            region = dilate(region, params.dilation_radius, dil_conn)
        hit = pred_cc.labels[region.voxels]
        ids, counts = np.unique(hit[hit > 0], return_counts=True)
        overlaps[g] = {int(p): int(c) for p, c in zip(ids, counts) if int(p) in pred_lookup}

    assigned: dict[int, list[int]] = {g: [] for g in gt_ids}
    matched_pred = set()
    for p in pred_ids:
        best = None
        for g in gt_ids:  # ascending id, so ties keep the lower gt id
            c = overlaps[g].get(p, 0)
            if c > 0 and (best is None or c > best[1]):
                best = (g, c)
        if best is not None:
            assigned[best[0]].append(p)
            matched_pred.add(p)

    table = LesionMatchTable(n_gt_lesions=len(gt_ids), n_pred_lesions=len(pred_ids))
    for g in gt_ids:
        preds = assigned[g]
        if not preds:
            table.fn += 1
            table.missed_gt_ids.append(g)
            continue
        gt_l = BinaryMask(gt.geometry, gt_cc.labels == g)
        pred_l = BinaryMask(gt.geometry, np.isin(pred_cc.labels, preds))
        table.tp += 1
        table.matches.append(
            LesionMatch(
                gt_id=g,
                pred_ids=list(preds),
                gt_size=int(gt_cc.sizes[g - 1]),
                pred_size=int(sum(pred_cc.sizes[p - 1] for p in preds)),
                dice=dice(gt_l, pred_l),
                hd95=hd95(gt_l, pred_l, params),
            )
        )
    table.false_pred_ids = [p for p in pred_ids if p not in matched_pred]
    table.fp = len(table.false_pred_ids)
    return table


def lesion_wise_dice(table: LesionMatchTable) -> float:
    denom = table.tp + table.fn + table.fp
    if denom == 0:
        return 1.0
    return sum(m.dice for m in table.matches) / denom


def lesion_wise_hd95(table: LesionMatchTable, params: LesionMatchParams = DEFAULT_PARAMS) -> float:
    denom = table.tp + table.fn + table.fp
    if denom == 0:
        return 0.0
    total = sum(m.hd95 for m in table.matches) + params.penalty_mm * (table.fn + table.fp)
    return total / denom


@dataclass
class RegionMetrics:
    dsc: float
    hd95: float
    lw_dsc: float
    lw_hd95: float
    tp: int
    fn: int
    fp: int


@dataclass
class CaseMetrics:
    regions: dict[str, RegionMetrics]

    def average(self) -> dict[str, float]:
        """Cross-region means, the "Avg" column of the challenge tables."""
        names = list(self.regions)
        return {
            key: sum(getattr(self.regions[r], key) for r in names) / len(names)
            for key in ("dsc", "hd95", "lw_dsc", "lw_hd95")
        }

    def to_dict(self) -> dict:
        return {"regions": {k: asdict(v) for k, v in self.regions.items()}, "Avg": self.average()}


def evaluate_region(gt: BinaryMask, pred: BinaryMask, params: LesionMatchParams = DEFAULT_PARAMS) -> RegionMetrics:
    table = match_lesions(gt, pred, params)
    return RegionMetrics(
        dsc=dice(gt, pred),
        hd95=hd95(gt, pred, params),
        lw_dsc=lesion_wise_dice(table),
        lw_hd95=lesion_wise_hd95(table, params),
        tp=table.tp,
        fn=table.fn,
        fp=table.fp,
    )


def evaluate_case(
    gt: LabelVolume,
    pred: LabelVolume,
    schema: LabelSchema | None = None,
    params: LesionMatchParams = DEFAULT_PARAMS,
    regions=REGIONS,
) -> CaseMetrics:
    check_same_grid(gt.geometry, pred.geometry)
    schema = schema or gt.schema
    out = {}
    for name in regions:
        out[name] = evaluate_region(region_mask(gt, schema, name), region_mask(pred, schema, name), params)
    return CaseMetrics(out)
