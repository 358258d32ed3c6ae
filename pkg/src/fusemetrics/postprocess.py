"""Two-stage enhancing-tumor refinement.

Stage 1 relabels each ET connected component that is both small and
low-confidence. Stage 2 then relabels all remaining ET when the total is
still small and low-confidence. Relabeled voxels become necrosis (NCR)
by default.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .morphology import connected_components
from .volume import (
    BinaryMask,
    LabelSchema,
    LabelVolume,
    ProbabilityVolume,
    SchemaError,
    check_same_grid,
)


@dataclass(frozen=True)
class EtRefineParams:
    min_component_size: int = 16
    min_total_size: int = 73
    prob_threshold: float = 0.9
    relabel_to: str = "NCR"
    connectivity: int = 26

    def __post_init__(self):
        if self.min_component_size < 1 or self.min_total_size < 1:
            raise ValueError("size thresholds must be >= 1")
        if not 0 < self.prob_threshold <= 1:
            raise ValueError("probability threshold must lie in (0, 1]")
        if self.connectivity not in (6, 18, 26):
            raise ValueError("connectivity must be 6, 18 or 26")


@dataclass
class RelabeledComponent:
    component_id: int
    size: int
    mean_prob: float | None


@dataclass
class RefineReport:
    components_examined: int = 0
    relabeled: list[RelabeledComponent] = field(default_factory=list)
    total_rule_fired: bool = False
    total_rule_mean_prob: float | None = None
    et_voxels_before: int = 0
    et_voxels_after: int = 0
    size_only: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def refine_enhancing_tumor(
    seg: LabelVolume,
    et_prob: ProbabilityVolume | None,
    schema: LabelSchema | None = None,
    params: EtRefineParams = EtRefineParams(),
) -> tuple[LabelVolume, RefineReport]:
    """Relabel small / low-confidence ET to ``params.relabel_to``.

    With ``et_prob=None`` only the size conditions are applied; the report's
    ``size_only`` flag marks such results.
    """
    schema = schema or seg.schema
    et_label = schema.label("ET")
    target = schema.label(params.relabel_to)
    if et_prob is not None:
        check_same_grid(seg.geometry, et_prob.geometry)
        prob = et_prob.voxels
    else:
        prob = None
    schema.validate(seg.voxels)

    labels = seg.voxels.copy()
    et = labels == et_label
    report = RefineReport(size_only=prob is None, et_voxels_before=int(et.sum()))
    if not et.any():
        return LabelVolume(seg.geometry, labels, schema), report

    cc = connected_components(BinaryMask(seg.geometry, et), params.connectivity)
    report.components_examined = cc.count
    if prob is not None:
        prob_sums = np.bincount(cc.labels.ravel(), weights=prob.ravel(), minlength=cc.count + 1)[1:]
    for cid in range(1, cc.count + 1):
        size = int(cc.sizes[cid - 1])
        if size >= params.min_component_size:
            continue
        mean_prob = float(prob_sums[cid - 1] / size) if prob is not None else None
        if mean_prob is not None and mean_prob >= params.prob_threshold:
            continue
        labels[cc.labels == cid] = target
        report.relabeled.append(RelabeledComponent(cid, size, mean_prob))

    remaining = labels == et_label
    n_left = int(remaining.sum())
    if 0 < n_left < params.min_total_size:
        mean_prob = float(prob[remaining].mean()) if prob is not None else None
        report.total_rule_mean_prob = mean_prob
        if mean_prob is None or mean_prob < params.prob_threshold:
            labels[remaining] = target
            report.total_rule_fired = True
    report.et_voxels_after = int((labels == et_label).sum())
    return LabelVolume(seg.geometry, labels, schema), report


__all__ = ["EtRefineParams", "RefineReport", "SchemaError", "refine_enhancing_tumor"]
