"""Flat ``key = value`` run configuration.

Precedence, lowest first: built-in defaults, ``--config`` file,
``QFIDSUS_<KEY>`` environment variables, explicit command-line flags.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, fields, replace
from typing import Mapping

import numpy as np

from .core import NoiseModel
from .pipeline import ESTIMATORS, EstimatorSpec
from .zne import FOLDINGS, MitigationPlan

ENV_PREFIX = "QFIDSUS_"
# keys that do not change results and stay out of the hash
_UNHASHED = ("out",)


class ConfigError(ValueError):
    pass


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(" ", "").split(",") if x)


def _strs(text: str) -> tuple[str, ...]:
    return tuple(x for x in text.replace(" ", "").split(",") if x)


@dataclass(frozen=True)
class RunConfig:
    L: int = 4
    r_start: float = 0.5
    r_stop: float = 1.4
    r_step: float = 0.1
    estimator: str = "exact"
    shots: int = 8192
    trials: int = 0  # 0: 20 unmitigated, 100 mitigated
    p1: float = 2e-4
    p2: float = 8e-3
    scale_factors: tuple[int, ...] = (1, 3)
    folding: str = "unitary"
    max_order: int = 0  # 0: 4 for L=4, 3 for L=6 (mitigation study)
    foldings: tuple[str, ...] = ("unitary", "cnot")
    overlap_methods: tuple[str, ...] = ("compute_uncompute", "hadamard_real", "swap_test")
    master_seed: int = 1234
    out: str = "results"

    def __post_init__(self):
        if self.L not in (4, 6):
            raise ConfigError(f"L must be 4 or 6, got {self.L}")
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"estimator must be one of {ESTIMATORS}")
        if self.shots < 1 or self.trials < 0 or self.max_order < 0:
            raise ConfigError("shots must be >= 1; trials and max_order >= 0")
        if self.r_step <= 0 or self.r_stop < self.r_start:
            raise ConfigError("need r_step > 0 and r_stop >= r_start")
        for f in (self.folding, *self.foldings):
            if f not in FOLDINGS:
                raise ConfigError(f"folding must be one of {FOLDINGS}")
        try:
            NoiseModel(self.p1, self.p2)
            MitigationPlan(self.scale_factors, self.folding, self.shots)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    # derived -------------------------------------------------------------

    @property
    def r_values(self) -> tuple[float, ...]:
        n = int(round((self.r_stop - self.r_start) / self.r_step))
        return tuple(float(np.round(self.r_start + k * self.r_step, 10)) for k in range(n + 1))

    @property
    def noise(self) -> NoiseModel:
        return NoiseModel(self.p1, self.p2)

    @property
    def n_trials(self) -> int:
        if self.trials:
            return self.trials
        return 100 if self.estimator == "mitigated" else 20

    @property
    def n_max(self) -> int:
        return self.max_order or (4 if self.L == 4 else 3)

    def plan(self, scale_factors=None, folding=None) -> MitigationPlan:
        return MitigationPlan(
            tuple(scale_factors or self.scale_factors), folding or self.folding, self.shots
        )

    def estimator_spec(self, kind: str | None = None, plan: MitigationPlan | None = None) -> EstimatorSpec:
        kind = kind or self.estimator
        if kind == "mitigated" and plan is None:
            plan = self.plan()
        return EstimatorSpec(kind, self.shots, self.noise, plan if kind == "mitigated" else None)

    # serialisation -------------------------------------------------------

    def items(self) -> list[tuple[str, str]]:
        return [(f.name, _format(getattr(self, f.name))) for f in fields(self)]

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.items())

    @property
    def hash(self) -> str:
        text = "".join(f"{k}={v}\n" for k, v in self.items() if k not in _UNHASHED)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _format(v) -> str:
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    kind = _TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "tuple[int, ...]":
            return _ints(raw)
        if kind == "tuple[str, ...]":
            return _strs(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        out[key] = value
    return out


def apply(cfg: RunConfig, raw: Mapping[str, str]) -> RunConfig:
    unknown = set(raw) - set(_TYPES)
    if unknown:
        raise ConfigError(f"unknown keys: {sorted(unknown)}")
    return replace(cfg, **{k: _coerce(k, v) for k, v in raw.items()})


def from_env(environ: Mapping[str, str] | None = None) -> dict[str, str]:
    environ = os.environ if environ is None else environ
    out = {}
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        key = name[len(ENV_PREFIX) :]
        if key == "DISABLE_NUMBA":  # kernel switch, not a run setting
            continue
        matches = [k for k in _TYPES if k.lower() == key.lower()]
        if not matches:
            raise ConfigError(f"unknown environment override {name}")
        out[matches[0]] = value
    return out


def load(path: str | None = None, overrides: Mapping[str, str] | None = None, environ=None) -> RunConfig:
    cfg = RunConfig()
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                cfg = apply(cfg, parse_text(fh.read()))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    cfg = apply(cfg, from_env(environ))
    return apply(cfg, overrides or {})
