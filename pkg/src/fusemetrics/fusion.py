"""Multi-rater label fusion: binary STAPLE, majority voting and hierarchical
multi-class reconstruction over the nested ET/TC/WT regions."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .volume import (
    REGIONS,
    BinaryMask,
    GeometryMismatchError,
    ImageGeometry,
    LabelSchema,
    LabelVolume,
    SchemaError,
    check_same_grid,
    label_volume_from_regions,
    region_mask,
)

log = logging.getLogger(__name__)

PRIOR_CLAMP = 1e-6
_LOG_EPS = 1e-300
PRIOR_MODES = ("sample-mean", "voxelwise", "fixed")


class RaterStack:
    """R >= 2 binary decision layers on a shared grid, shape ``(R, nx, ny, nz)``."""

    def __init__(self, geometry: ImageGeometry, layers):
        layers = np.asarray(layers, dtype=bool)
        if layers.ndim != 4 or layers.shape[1:] != geometry.dims:
            raise ValueError(f"layers must have shape (R, {geometry.dims}), got {layers.shape}")
        if layers.shape[0] < 2:
            raise ValueError("a rater stack needs at least two raters")
        self.geometry = geometry
        self.layers = layers
        self.layers.setflags(write=False)

    @classmethod
    def from_masks(cls, masks: Sequence[BinaryMask]) -> "RaterStack":
        if len(masks) < 2:
            raise ValueError("a rater stack needs at least two raters")
        check_same_grid(*(m.geometry for m in masks))
        return cls(masks[0].geometry, np.stack([m.voxels for m in masks]))

    @property
    def n_raters(self) -> int:
        return self.layers.shape[0]


@dataclass(frozen=True)
class StapleParams:
    init_sensitivity: float = 0.99999
    init_specificity: float = 0.99999
    prior_mode: str = "sample-mean"
    prior_value: float = 0.5
    tolerance: float = 1e-7
    max_iterations: int = 100
    threshold: float = 0.5

    def __post_init__(self):
        for name in ("init_sensitivity", "init_specificity"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.prior_mode not in PRIOR_MODES:
            raise ValueError(f"prior_mode must be one of {PRIOR_MODES}")
        if self.prior_mode == "fixed" and not 0 < self.prior_value < 1:
            raise ValueError("fixed prior must lie in (0, 1)")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")


@dataclass
class StapleState:
    sensitivity: np.ndarray
    specificity: np.ndarray
    posterior: np.ndarray
    iterations: int = 0
    converged: bool = False
    degenerate: bool = False
    log_likelihood: list[float] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "sensitivity": [float(x) for x in self.sensitivity],
            "specificity": [float(x) for x in self.specificity],
            "iterations": self.iterations,
            "converged": self.converged,
            "degenerate": self.degenerate,
            "final_log_likelihood": self.log_likelihood[-1] if self.log_likelihood else None,
        }


def majority_vote(stack: RaterStack, fraction: float = 0.5) -> BinaryMask:
    """Strict majority: true iff votes / R > fraction (unanimity always wins)."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    votes = stack.layers.sum(axis=0, dtype=np.int64)
    r = stack.n_raters
    # votes > fraction * R without float rounding at exact ties
    num, den = float(fraction).as_integer_ratio()
    out = (votes * den > num * r) | (votes == r)
    return BinaryMask(stack.geometry, out)


def _prior(d: np.ndarray, params: StapleParams) -> np.ndarray | float:
    if params.prior_mode == "fixed":
        return float(params.prior_value)
    if params.prior_mode == "voxelwise":
        return np.clip(d.mean(axis=0), PRIOR_CLAMP, 1 - PRIOR_CLAMP)
    return float(np.clip(d.mean(), PRIOR_CLAMP, 1 - PRIOR_CLAMP))


def _log(x):
    return np.log(np.maximum(x, _LOG_EPS))


def _e_step(d: np.ndarray, prior, p: np.ndarray, q: np.ndarray):
    """Posterior W and observed-data log-likelihood, computed in log space."""
    # log prod_j a_ij and log prod_j b_ij, summed in fixed rater order
    log_a = np.where(d, _log(p)[:, None], _log(1 - p)[:, None]).sum(axis=0)
    log_b = np.where(d, _log(1 - q)[:, None], _log(q)[:, None]).sum(axis=0)
    fg = _log(prior) + log_a
    bg = _log(1 - np.asarray(prior)) + log_b
    norm = np.logaddexp(fg, bg)
    w = np.exp(fg - norm)
    return w, float(norm.sum())


def _m_step(d: np.ndarray, w: np.ndarray, p: np.ndarray, q: np.ndarray):
    sw = w.sum()
    sv = (1 - w).sum()
    new_p = (d @ w) / sw if sw > 0 else p.copy()
    new_q = ((~d) @ (1 - w)) / sv if sv > 0 else q.copy()
    return new_p, new_q


def staple_binary(stack: RaterStack, params: StapleParams = StapleParams()) -> tuple[BinaryMask, StapleState]:
    """Binary STAPLE expectation-maximization.

    Returns the consensus mask (posterior >= threshold) and the final state.
    The log-likelihood list holds the observed-data log-likelihood evaluated
    at the start of each iteration, which EM keeps non-decreasing.
    """
    r = stack.n_raters
    # canonical rater order makes every float reduction independent of input order
    order = sorted(range(r), key=lambda j: np.packbits(stack.layers[j]).tobytes())
    d = stack.layers.reshape(r, -1)[order]
    p = np.full(r, params.init_sensitivity)
    q = np.full(r, params.init_specificity)

    if not d.any():
        state = StapleState(p, q, np.zeros(stack.geometry.dims), iterations=0, converged=True, degenerate=True)
        log.debug("all raters empty; returning empty consensus")
        return BinaryMask.empty(stack.geometry), state

    prior = _prior(d, params)
    trace = []
    converged = False
    it = 0
    for it in range(1, params.max_iterations + 1):
        w, ll = _e_step(d, prior, p, q)
        trace.append(ll)
        new_p, new_q = _m_step(d, w, p, q)
        delta = abs(float(new_p.sum() + new_q.sum()) - float(p.sum() + q.sum()))
        p, q = new_p, new_q
        if delta < params.tolerance:
            converged = True
            break
    w, ll = _e_step(d, prior, p, q)
    trace.append(ll)
    posterior = w.reshape(stack.geometry.dims)
    inverse = np.argsort(order)
    state = StapleState(p[inverse], q[inverse], posterior, iterations=it, converged=converged, log_likelihood=trace)
    return BinaryMask(stack.geometry, posterior >= params.threshold), state


def _check_predictions(predictions: Sequence[LabelVolume], schema: LabelSchema) -> None:
    if len(predictions) < 2:
        raise ValueError(f"fusion needs at least two predictions, got {len(predictions)}")
    check_same_grid(*(p.geometry for p in predictions))
    for p in predictions:
        schema.validate(p.voxels)


def fuse_hierarchical(
    predictions: Sequence[LabelVolume],
    schema: LabelSchema | None = None,
    params: StapleParams = StapleParams(),
    method: str = "staple",
    fraction: float = 0.5,
) -> tuple[LabelVolume, dict[str, StapleState | None]]:
    """Fuse WT, TC and ET independently, then rebuild nested labels.

    ``method="majority"`` swaps STAPLE for strict majority voting per region.
    """
    schema = schema or predictions[0].schema
    _check_predictions(predictions, schema)
    geometry = predictions[0].geometry
    consensus = {}
    states: dict[str, StapleState | None] = {}
    for region in REGIONS:
        stack = RaterStack.from_masks([region_mask(p, schema, region) for p in predictions])
        if method == "staple":
            mask, state = staple_binary(stack, params)
        elif method == "majority":
            mask, state = majority_vote(stack, fraction), None
        else:
            raise ValueError(f"unknown fusion method {method!r}")
        consensus[region] = mask.voxels
        states[region] = state
    labels = label_volume_from_regions(geometry, consensus, schema)
    return LabelVolume(geometry, labels, schema), states


__all__ = [
    "GeometryMismatchError",
    "RaterStack",
    "SchemaError",
    "StapleParams",
    "StapleState",
    "fuse_hierarchical",
    "majority_vote",
    "staple_binary",
]
