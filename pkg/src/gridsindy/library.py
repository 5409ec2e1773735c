"""Candidate feature libraries over the states (theta, omega, T)."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from gridsindy.errors import ConfigError, DataError

STATE_NAMES = ("theta", "omega", "T")

MONOMIAL, SIN, COS = 0, 1, 2


@dataclass(frozen=True)
class Feature:
    name: str
    kind: int
    exps: tuple[int, int, int]


@dataclass(frozen=True)
class LibrarySpec:
    """Polynomial terms up to ``poly_degree`` plus optional first-order Fourier terms.

    Time enters as the elapsed seconds within the chunk.  Trig terms of time
    use ``sin(time_scale * T)``; polynomial terms use bare ``T``.
    """

    poly_degree: int = 2
    fourier_order: int = 0
    include_time: bool = True
    time_scale: float = 1.0

    def __post_init__(self):
        if self.poly_degree not in (1, 2, 3):
            raise ConfigError(f"unsupported polynomial degree {self.poly_degree}")
        if self.fourier_order not in (0, 1):
            raise ConfigError(f"unsupported Fourier order {self.fourier_order}")
        if self.poly_degree == 3 and self.fourier_order == 1:
            raise ConfigError("p3f1 is not a supported library")
        if not (self.time_scale > 0 and math.isfinite(self.time_scale)):
            raise ConfigError("time_scale must be positive")

    @property
    def name(self) -> str:
        return f"p{self.poly_degree}" + (f"f{self.fourier_order}" if self.fourier_order else "")

    @property
    def n_states(self) -> int:
        return 3 if self.include_time else 2

    @cached_property
    def features(self) -> tuple[Feature, ...]:
        return tuple(_enumerate_features(self))

    @property
    def feature_names(self) -> list[str]:
        return [f.name for f in self.features]

    def kernel_encoding(self) -> tuple[np.ndarray, np.ndarray]:
        kinds = np.array([f.kind for f in self.features], dtype=np.int_)
        exps = np.array([f.exps for f in self.features], dtype=np.int_).reshape(-1, 3)
        return kinds, exps

    def to_dict(self) -> dict:
        return {"poly_degree": self.poly_degree, "fourier_order": self.fourier_order,
                "include_time": self.include_time, "time_scale": self.time_scale}

    @classmethod
    def from_dict(cls, d: dict) -> "LibrarySpec":
        unknown = set(d) - {"poly_degree", "fourier_order", "include_time", "time_scale", "name"}
        if unknown:
            raise ConfigError(f"unknown library keys {sorted(unknown)}")
        if "name" in d and len(d) == 1:
            return cls.from_name(d["name"])
        return cls(int(d.get("poly_degree", 2)), int(d.get("fourier_order", 0)),
                   bool(d.get("include_time", True)), float(d.get("time_scale", 1.0)))

    @classmethod
    def from_name(cls, name: str, include_time: bool = True, time_scale: float = 1.0):
        presets = {"p1": (1, 0), "p2": (2, 0), "p3": (3, 0), "p1f1": (1, 1), "p2f1": (2, 1)}
        if name not in presets:
            raise ConfigError(f"unknown library {name!r}; expected one of {sorted(presets)}")
        d, k = presets[name]
        return cls(d, k, include_time, time_scale)


def _monomial_name(combo: tuple[int, ...]) -> str:
    if not combo:
        return "1"
    parts = []
    for s in sorted(set(combo)):
        power = combo.count(s)
        parts.append(STATE_NAMES[s] + (f"^{power}" if power > 1 else ""))
    return " ".join(parts)


def _enumerate_features(spec: LibrarySpec) -> list[Feature]:
    n = spec.n_states
    out = []
    for degree in range(spec.poly_degree + 1):
        # combinations_with_replacement yields graded lexicographic order
        for combo in itertools.combinations_with_replacement(range(n), degree):
            exps = [0, 0, 0]
            for s in combo:
                exps[s] += 1
            out.append(Feature(_monomial_name(combo), MONOMIAL, tuple(exps)))
    if spec.fourier_order:
        for s in range(n):
            out.append(Feature(f"sin({STATE_NAMES[s]})", SIN, (s, 0, 0)))
            out.append(Feature(f"cos({STATE_NAMES[s]})", COS, (s, 0, 0)))
    return out


def feature_count(spec: LibrarySpec, n_states: int | None = None) -> int:
    n = spec.n_states if n_states is None else n_states
    return math.comb(n + spec.poly_degree, spec.poly_degree) + 2 * spec.fourier_order * n


@dataclass
class FeatureMatrix:
    values: np.ndarray
    names: list[str]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.names):
            raise DataError("feature matrix shape does not match its names")
        if len(set(self.names)) != len(self.names):
            raise DataError("duplicate feature names")

    @property
    def shape(self):
        return self.values.shape


def evaluate_features(theta, omega, time, spec: LibrarySpec) -> np.ndarray:
    """Evaluate every library function; one row per sample."""
    states = [np.asarray(theta, dtype=float), np.asarray(omega, dtype=float),
              np.asarray(time, dtype=float)]
    n = len(states[0])
    cols = []
    for f in spec.features:
        if f.kind == MONOMIAL:
            col = np.ones(n)
            # same multiplication order as the simulation kernels
            for s, power in enumerate(f.exps):
                for _ in range(power):
                    col = col * states[s]
        else:
            s = f.exps[0]
            arg = spec.time_scale * states[2] if s == 2 else states[s]
            col = np.sin(arg) if f.kind == SIN else np.cos(arg)
        cols.append(col)
    return np.column_stack(cols) if cols else np.empty((n, 0))


def build_feature_matrix(traj, spec: LibrarySpec) -> FeatureMatrix:
    theta, omega, time = traj.theta, traj.omega, traj.time
    for arr in (theta, omega, time):
        if not np.all(np.isfinite(arr)):
            raise DataError("trajectory contains non-finite values")
    return FeatureMatrix(evaluate_features(theta, omega, time, spec), spec.feature_names)
