"""Run configuration, atomic output writes and run manifests."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .lattice import Box, BoundaryRule

TOOL_VERSION = "0.1.0"


class ConfigError(ValueError):
    """Invalid or unreadable configuration (exit code 2)."""


class _Base(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True, frozen=True)


class BoxSpec(_Base):
    d: int = Field(1, ge=1)
    lo: list[int]
    hi: list[int]
    boundary: Literal["absorbing", "periodic"] = "absorbing"

    def build(self) -> tuple[Box, BoundaryRule]:
        return Box.from_json(self.model_dump())


def box_from_half_width(half: int, d: int, boundary: str = "absorbing") -> BoxSpec:
    return BoxSpec(d=d, lo=[-half] * d, hi=[half] * d, boundary=boundary)


def _coerce_box(v, info):
    # an integer L stands for [-L, L]^d
    if isinstance(v, int):
        return {"d": 1, "lo": [-v], "hi": [v]}
    return v


class SimulateConfig(_Base):
    command: Literal["simulate"] = "simulate"
    kind: Literal["contact", "is", "spont"] = "is"
    lam: float = Field(2.0, alias="lambda", ge=0)
    p: float = Field(0.9, ge=0, le=1)
    box: BoxSpec = Field(default_factory=lambda: box_from_half_width(50, 1))
    T: float = Field(10.0, gt=0)
    seed: int = Field(0, ge=0)
    snapshots: list[float] = Field(default_factory=list)
    initial: Literal["origin", "full"] = "origin"
    out: Optional[str] = None
    dump_timeline: Optional[str] = None

    _box = field_validator("box", mode="before")(_coerce_box)


class CoupleConfig(_Base):
    command: Literal["couple"] = "couple"
    pair: Literal["is-contact", "spont-is", "spont-spont"] = "is-contact"
    lam: float = Field(2.0, alias="lambda", ge=0)
    p: Optional[float] = Field(None, ge=0, le=1)
    p1: Optional[float] = Field(None, ge=0, le=1)
    p2: Optional[float] = Field(None, ge=0, le=1)
    box: BoxSpec = Field(default_factory=lambda: box_from_half_width(50, 1))
    T: float = Field(20.0, gt=0)
    trials: int = Field(1000, ge=1)
    seed0: int = Field(0, ge=0)
    out: Optional[str] = None

    _box = field_validator("box", mode="before")(_coerce_box)

    @model_validator(mode="after")
    def _check_p(self):
        if self.pair == "spont-spont":
            if self.p1 is None or self.p2 is None:
                raise ValueError("spont-spont needs p1 and p2")
            if self.p1 > self.p2:
                raise ValueError("need p1 <= p2")
        elif self.p is None:
            raise ValueError(f"{self.pair} needs p")
        return self


class MonoConfig(_Base):
    command: Literal["mono"] = "mono"
    process: Optional[Literal["is", "spont", "contact"]] = None
    table: Optional[str] = None
    order: Literal["neg-first", "zero-first", "partial"] = "neg-first"
    lam: Optional[float] = Field(None, alias="lambda", ge=0)
    p: Optional[float] = Field(None, ge=0, le=1)
    p2: Optional[float] = Field(None, ge=0, le=1)
    d: int = Field(1, ge=1)
    out: Optional[str] = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.process is None) == (self.table is None):
            raise ValueError("give exactly one of process or table")
        return self


class PercConfig(_Base):
    command: Literal["perc"] = "perc"
    p: Optional[float] = Field(None, ge=0, le=1)
    gamma: Optional[float] = Field(None, gt=0, lt=1)
    M: int = Field(0, ge=0)
    height: int = Field(50, ge=0)
    width: Optional[int] = Field(None, ge=0)
    trials: int = Field(1000, ge=1)
    seed0: int = Field(0, ge=0)
    out: Optional[str] = None

    @model_validator(mode="after")
    def _one_sampler(self):
        if (self.p is None) == (self.gamma is None):
            raise ValueError("give exactly one of p or gamma")
        return self


class BlockConfig(_Base):
    command: Literal["block"] = "block"
    lam: float = Field(4.0, alias="lambda", gt=0)
    p: float = Field(0.97, ge=0, le=1)
    N: int = Field(5, ge=1)
    K: Optional[int] = Field(None, ge=1)
    d: Literal[1] = 1
    gamma: float = Field(0.5, gt=0)
    trials: int = Field(100, ge=1)
    inner_trials: int = Field(100, ge=1)
    seed0: int = Field(0, ge=0)
    horizon_mult: float = Field(1.0, gt=0)
    alpha1: Optional[float] = Field(None, gt=0)
    alpha2: Optional[float] = Field(None, gt=0)
    alpha_prime: Optional[float] = Field(None, gt=0)
    calibration_trials: int = Field(200, ge=1)
    events: list[Literal["E1", "E2", "E3", "E4", "G"]] = Field(
        default_factory=lambda: ["E1", "E2", "E3", "E4", "G"])
    audit_restriction: bool = True
    wet_levels: int = Field(0, ge=0)
    wet_seeds: int = Field(0, ge=0)
    out: Optional[str] = None

    @model_validator(mode="after")
    def _check_k(self):
        if self.K is not None and self.K > self.N:
            raise ValueError("need K <= N")
        return self


class SweepConfig(_Base):
    command: Literal["sweep"] = "sweep"
    kind: Literal["contact", "is", "spont"] = "spont"
    lambdas: list[float] = Field(default_factory=lambda: [4.0], min_length=1)
    ps: list[float] = Field(default_factory=lambda: [0.5, 0.75, 1.0], min_length=1)
    box: BoxSpec = Field(default_factory=lambda: box_from_half_width(50, 1))
    T: float = Field(20.0, gt=0)
    trials: int = Field(1000, ge=100)
    seed0: int = Field(0, ge=0)
    workers: int = Field(1, ge=1)
    out: Optional[str] = None
    report: Optional[str] = None

    _box = field_validator("box", mode="before")(_coerce_box)

    @field_validator("lambdas")
    @classmethod
    def _lams(cls, v):
        if any(x < 0 for x in v):
            raise ValueError("lambda must be >= 0")
        return v

    @field_validator("ps")
    @classmethod
    def _ps(cls, v):
        if any(not 0 <= x <= 1 for x in v):
            raise ValueError("p must lie in [0, 1]")
        return v


class DualityConfig(_Base):
    command: Literal["duality"] = "duality"
    zeta: list[int] = Field(default_factory=lambda: [0])
    lam: float = Field(2.0, alias="lambda", ge=0)
    t: float = Field(10.0, ge=0)
    box: BoxSpec = Field(default_factory=lambda: box_from_half_width(60, 1))
    trials: int = Field(10000, ge=1)
    seed0: int = Field(0, ge=0)
    out: Optional[str] = None

    _box = field_validator("box", mode="before")(_coerce_box)


RunConfig = Annotated[Union[SimulateConfig, CoupleConfig, MonoConfig, PercConfig, BlockConfig,
                            SweepConfig, DualityConfig], Field(discriminator="command")]

COMMANDS = {c.model_fields["command"].default: c for c in
            (SimulateConfig, CoupleConfig, MonoConfig, PercConfig, BlockConfig, SweepConfig,
             DualityConfig)}


class _Envelope(_Base):
    cfg: RunConfig


def parse_config(obj: dict):
    try:
        return _Envelope(cfg=obj).cfg
    except ValidationError as exc:
        raise ConfigError(_describe(exc)) from None


def _describe(exc: ValidationError) -> str:
    parts = []
    for e in exc.errors():
        loc = ".".join(str(x) for x in e["loc"][2:]) or "config"
        parts.append(f"{loc}: {e['msg']}")
    return "; ".join(parts)


def read_json(path: str | os.PathLike) -> dict:
    """JSON object from ``path``; syntax errors carry line and column."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return obj


def load_config(path: str | os.PathLike, overrides: dict | None = None):
    obj = read_json(path)
    if overrides:
        obj = {**obj, **overrides}
    return parse_config(obj)


def config_to_json(cfg) -> dict:
    return cfg.model_dump(mode="json", by_alias=True)


def save_config(cfg, path: str | os.PathLike) -> None:
    atomic_write(path, json.dumps(config_to_json(cfg), indent=2, sort_keys=True) + "\n")


def atomic_write(path: str | os.PathLike, data: str | bytes) -> None:
    """Write to a temporary file next to ``path`` and rename it into place."""
    path = Path(path)
    if path.parent and not path.parent.exists():
        raise OSError(f"output directory {path.parent} does not exist")
    raw = data.encode() if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(raw)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def file_digest(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


class RunManifest(_Base):
    tool_version: str
    config: dict
    wall_time: float
    outputs: dict[str, str]


def write_manifest(cfg, outputs: list[str], wall_time: float, path: str | os.PathLike) -> RunManifest:
    m = RunManifest(tool_version=TOOL_VERSION, config=config_to_json(cfg),
                    wall_time=round(wall_time, 3),
                    outputs={str(o): file_digest(o) for o in outputs})
    atomic_write(path, json.dumps(m.model_dump(), indent=2, sort_keys=True) + "\n")
    return m


def load_manifest(path: str | os.PathLike) -> RunManifest:
    try:
        return RunManifest(**read_json(path))
    except ValidationError as exc:
        raise ConfigError(_describe(exc)) from None
