"""Run configuration: a YAML/JSON file with flag overrides on top."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .fusion import StapleParams
from .metrics import LesionMatchParams
from .postprocess import EtRefineParams
from .preprocess import PreprocessPlan
from .volume import DEFAULT_SCHEMA, LabelSchema

DEFAULT_SUFFIXES = {
    "gt": "-seg",
    "pred": "-pred",
    "prob": "-etprob",
    "modalities": ["-t1c", "-t1n", "-t2f", "-t2w"],
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    schema: LabelSchema = DEFAULT_SCHEMA
    lesion: LesionMatchParams = field(default_factory=LesionMatchParams)
    staple: StapleParams = field(default_factory=StapleParams)
    refine: EtRefineParams = field(default_factory=EtRefineParams)
    preprocess: PreprocessPlan = field(default_factory=PreprocessPlan)
    fusion: str = "staple"
    vote_fraction: float = 0.5
    workers: int = 1
    suffixes: dict = field(default_factory=lambda: dict(DEFAULT_SUFFIXES))

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigError("worker count must be >= 1")
        if self.fusion not in ("staple", "majority"):
            raise ConfigError(f"fusion must be 'staple' or 'majority', got {self.fusion!r}")

    def to_dict(self) -> dict:
        plan = self.preprocess.to_dict()
        return {
            "schema": self.schema.to_dict(),
            "lesion": asdict(self.lesion),
            "staple": asdict(self.staple),
            "refine": asdict(self.refine),
            "preprocess": {"spacing": plan["spacing"], "fov": plan["fov"], **plan["steps"]},
            "fusion": self.fusion,
            "vote_fraction": self.vote_fraction,
            "workers": self.workers,
            "suffixes": self.suffixes,
        }


def _build(cls, data: dict | None, section: str):
    if not data:
        return cls()
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{section}] section: {exc}") from exc


def load_schema(path) -> LabelSchema:
    data = _load_mapping(path)
    try:
        return LabelSchema.from_dict(data)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid schema file {path}: {exc}") from exc


def _load_mapping(path) -> dict:
    path = Path(path)
    text = path.read_text()
    data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def config_from_dict(data: dict) -> RunConfig:
    data = dict(data)
    allowed = {"schema", "lesion", "staple", "refine", "preprocess", "fusion", "vote_fraction", "workers", "suffixes"}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    schema = DEFAULT_SCHEMA
    if data.get("schema"):
        try:
            schema = LabelSchema.from_dict(data["schema"])
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"invalid schema: {exc}") from exc
    suffixes = dict(DEFAULT_SUFFIXES)
    suffixes.update(data.get("suffixes") or {})
    try:
        return RunConfig(
            schema=schema,
            lesion=_build(LesionMatchParams, data.get("lesion"), "lesion"),
            staple=_build(StapleParams, data.get("staple"), "staple"),
            refine=_build(EtRefineParams, data.get("refine"), "refine"),
            preprocess=_build(PreprocessPlan, data.get("preprocess"), "preprocess"),
            fusion=data.get("fusion", "staple"),
            vote_fraction=float(data.get("vote_fraction", 0.5)),
            workers=int(data.get("workers", 1)),
            suffixes=suffixes,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read ``path`` (if any) and apply flag ``overrides`` (flags win).

    Override keys are ``section.field`` (e.g. ``lesion.penalty_mm``) or a
    top-level field name; ``None`` values are ignored.
    """
    cfg = config_from_dict(_load_mapping(path)) if path else RunConfig()
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        try:
            if "." in key:
                section, name = key.split(".", 1)
                setattr(cfg, section, replace(getattr(cfg, section), **{name: value}))
            else:
                cfg = replace(cfg, **{key: value})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid override {key}={value!r}: {exc}") from exc
    return cfg
