"""Sparse regression of state derivatives onto a candidate library.

Three optimizers share one calling convention::

    coeffs = fit(features, xdot, config)

``features`` is a :class:`~gridsindy.library.FeatureMatrix` (or a plain 2-D
array), ``xdot`` a vector or an ``(n_samples, n_targets)`` matrix.  A column
named ``"1"`` is treated as the intercept: it is never thresholded,
penalized or standardized.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
import scipy.linalg

from gridsindy._backend import kernels
from gridsindy.errors import ConfigError, DataError, SingularityError
from gridsindy.library import FeatureMatrix

INTERCEPT = "1"
NORMS = ("L0", "L1", "L2")


@dataclass(frozen=True)
class STLSQConfig:
    threshold: float = 1e-6
    alpha: float = 10.0
    max_iter: int = 20

    def __post_init__(self):
        if self.threshold < 0 or self.alpha < 0:
            raise ConfigError("STLSQ threshold and alpha must be non-negative")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")

    kind = "stlsq"

    @property
    def label(self) -> str:
        return "STLSQ"

    def params(self) -> dict:
        return {"lambda": self.threshold, "alpha": self.alpha}

    def to_dict(self) -> dict:
        return {"type": self.kind, **self.params(), "max_iter": self.max_iter}


@dataclass(frozen=True)
class LassoConfig:
    alpha: float = 1e-6
    tol: float = 1e-6
    max_iter: int = 100_000

    def __post_init__(self):
        if self.alpha < 0:
            raise ConfigError("LASSO alpha must be non-negative")
        if not self.tol > 0:
            raise ConfigError("LASSO tol must be positive")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")

    kind = "lasso"

    @property
    def label(self) -> str:
        return "LASSO"

    def params(self) -> dict:
        return {"alpha": self.alpha, "tol": self.tol}

    def to_dict(self) -> dict:
        return {"type": self.kind, **self.params(), "max_iter": self.max_iter}


@dataclass(frozen=True)
class SR3Config:
    kappa: float = 1e-6
    nu: float = 1.0
    norm: str = "L0"
    tol: float = 1e-8
    max_iter: int = 10_000

    def __post_init__(self):
        if self.kappa < 0:
            raise ConfigError("SR3 kappa must be non-negative")
        if not self.nu > 0:
            raise ConfigError("SR3 nu must be strictly positive")
        if self.norm not in NORMS:
            raise ConfigError(f"SR3 norm must be one of {NORMS}")
        if not self.tol > 0 or self.max_iter < 1:
            raise ConfigError("SR3 needs tol > 0 and max_iter >= 1")

    @property
    def label(self) -> str:
        return f"SR3 ({self.norm})"

    kind = "sr3"

    def params(self) -> dict:
        return {"kappa": self.kappa, "nu": self.nu, "norm": self.norm}

    def to_dict(self) -> dict:
        return {"type": self.kind, **self.params(), "tol": self.tol, "max_iter": self.max_iter}


OptimizerConfig = Union[STLSQConfig, LassoConfig, SR3Config]


def optimizer_from_dict(d: dict) -> OptimizerConfig:
    d = dict(d)
    kind = str(d.pop("type", "")).lower()
    try:
        if kind == "stlsq":
            return STLSQConfig(float(d.pop("lambda", 1e-6)), float(d.pop("alpha", 10.0)),
                               int(d.pop("max_iter", 20)), **_no_extra(d))
        if kind == "lasso":
            return LassoConfig(float(d.pop("alpha", 1e-6)), float(d.pop("tol", 1e-6)),
                               int(d.pop("max_iter", 100_000)), **_no_extra(d))
        if kind == "sr3":
            return SR3Config(float(d.pop("kappa", 1e-6)), float(d.pop("nu", 1.0)),
                             str(d.pop("norm", "L0")), float(d.pop("tol", 1e-8)),
                             int(d.pop("max_iter", 10_000)), **_no_extra(d))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad optimizer config: {exc}") from None
    raise ConfigError(f"unknown optimizer type {kind!r}")


def _no_extra(d: dict) -> dict:
    if d:
        raise ConfigError(f"unknown optimizer keys {sorted(d)}")
    return {}


@dataclass
class CoefficientMatrix:
    values: np.ndarray
    feature_names: list[str]
    converged: bool = True
    iterations: int = 0
    target_names: list[str] = field(default_factory=lambda: ["omega_dot"])
    diagnostics: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.values.shape[0] != len(self.feature_names):
            raise DataError("coefficient rows do not match the feature names")
        if len(self.target_names) != self.values.shape[1]:
            self.target_names = [f"target_{j}" for j in range(self.values.shape[1])]
        if not np.all(np.isfinite(self.values)):
            raise DataError("non-finite coefficients")

    def column(self, target: str | int = 0) -> np.ndarray:
        j = self.target_names.index(target) if isinstance(target, str) else target
        return self.values[:, j]

    def equation(self, target: int = 0, precision: int = 6) -> str:
        terms = [f"{c:+.{precision}g} {n}" for c, n in zip(self.values[:, target],
                                                            self.feature_names) if c != 0.0]
        return " ".join(terms) if terms else "0"


# -- shared helpers ----------------------------------------------------------

def _design(theta_mat) -> tuple[np.ndarray, list[str]]:
    if isinstance(theta_mat, FeatureMatrix):
        return theta_mat.values, list(theta_mat.names)
    X = np.asarray(theta_mat, dtype=float)
    if X.ndim != 2:
        raise DataError("design matrix must be 2-D")
    return X, [f"x{j}" for j in range(X.shape[1])]


def _targets(xdot, n_rows: int) -> np.ndarray:
    Y = np.asarray(xdot, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.ndim != 2 or Y.shape[0] != n_rows:
        raise DataError(f"target has {Y.shape[0]} rows, design has {n_rows}")
    if not np.all(np.isfinite(Y)):
        raise DataError("non-finite target values")
    return Y


def _check_design(X: np.ndarray):
    if not np.all(np.isfinite(X)):
        raise DataError("non-finite feature values")


def _intercept_mask(names: list[str]) -> np.ndarray:
    return np.array([n == INTERCEPT for n in names], dtype=bool)


def _column_scale(X: np.ndarray) -> np.ndarray:
    d = np.linalg.norm(X, axis=0)
    d[d == 0] = 1.0
    return d


def _dependent_columns(Xs: np.ndarray, names: list[str]) -> list[str]:
    _, r, piv = scipy.linalg.qr(Xs, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = diag[0] * max(Xs.shape) * np.finfo(float).eps if len(diag) else 0.0
    rank = int(np.sum(diag > tol))
    return [names[j] for j in sorted(piv[rank:])]


def _ridge_column(X: np.ndarray, y: np.ndarray, alpha: float, names: list[str]) -> np.ndarray:
    """Minimize ||X c - y||^2 + alpha ||c||^2 through an equilibrated least-squares solve."""
    p = X.shape[1]
    if p == 0:
        return np.zeros(0)
    d = _column_scale(X)
    Xs = X / d
    if alpha > 0:
        A = np.vstack([Xs, np.diag(math.sqrt(alpha) / d)])
        b = np.concatenate([y, np.zeros(p)])
        sol = np.linalg.lstsq(A, b, rcond=None)[0]
    else:
        sol, _, rank, _ = np.linalg.lstsq(Xs, y, rcond=None)
        if rank < p:
            cols = _dependent_columns(Xs, names)
            raise SingularityError(
                f"rank-deficient design (rank {rank} < {p}); dependent columns: {cols}", cols)
    return sol / d


def ridge_solve(theta_mat, xdot, alpha: float = 0.0) -> CoefficientMatrix:
    """Ridge regression per target column; ``alpha = 0`` gives ordinary least squares."""
    if alpha < 0:
        raise ConfigError("alpha must be non-negative")
    X, names = _design(theta_mat)
    _check_design(X)
    Y = _targets(xdot, X.shape[0])
    coef = np.column_stack([_ridge_column(X, Y[:, j], alpha, names) for j in range(Y.shape[1])])
    return CoefficientMatrix(coef.reshape(X.shape[1], Y.shape[1]), names, True, 1,
                             _target_names(Y))


def _target_names(Y: np.ndarray) -> list[str]:
    return ["omega_dot"] if Y.shape[1] == 1 else [f"target_{j}" for j in range(Y.shape[1])]


# -- STLSQ -------------------------------------------------------------------

def stlsq(theta_mat, xdot, cfg: STLSQConfig) -> CoefficientMatrix:
    """Sequentially thresholded ridge regression.

    Alternates a ridge solve over the active columns with zeroing of every
    coefficient below ``cfg.threshold`` until the active set stops changing.
    """
    X, names = _design(theta_mat)
    _check_design(X)
    Y = _targets(xdot, X.shape[0])
    keep = _intercept_mask(names)
    p, m = X.shape[1], Y.shape[1]
    coef = np.zeros((p, m))
    masks = np.zeros((p, m), dtype=bool)
    converged, iters = True, 0
    for j in range(m):
        active = np.ones(p, dtype=bool)
        col_conv = False
        for it in range(1, cfg.max_iter + 1):
            idx = np.flatnonzero(active)
            c = np.zeros(p)
            # the full design is passed as-is so lambda = 0 reproduces ridge_solve bit for bit
            sub = X if len(idx) == p else X[:, idx]
            c[idx] = _ridge_column(sub, Y[:, j], cfg.alpha, [names[i] for i in idx])
            new_active = active & ((np.abs(c) >= cfg.threshold) | keep)
            c[~new_active] = 0.0
            iters = max(iters, it)
            if np.array_equal(new_active, active) or not new_active.any():
                col_conv = True
                active = new_active
                break
            active = new_active
        coef[:, j] = c
        masks[:, j] = active
        converged &= col_conv
    return CoefficientMatrix(coef, names, converged, iters, _target_names(Y),
                             {"active_mask": masks})


# -- LASSO -------------------------------------------------------------------

@dataclass
class _Standardized:
    Z: np.ndarray
    cols: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    intercept: int | None


def _standardize(X: np.ndarray, names: list[str]) -> _Standardized:
    n = X.shape[0]
    icpt = names.index(INTERCEPT) if INTERCEPT in names else None
    cols = np.array([j for j in range(X.shape[1]) if j != icpt], dtype=int)
    sub = X[:, cols]
    mean = sub.mean(axis=0) if icpt is not None else np.zeros(len(cols))
    centered = sub - mean
    scale = np.sqrt(np.sum(centered * centered, axis=0) / n)
    usable = scale > 0
    cols, mean, scale = cols[usable], mean[usable], scale[usable]
    Z = (X[:, cols] - mean) / scale
    return _Standardized(Z, cols, mean, scale, icpt)


def lasso(theta_mat, xdot, cfg: LassoConfig) -> CoefficientMatrix:
    """L1-penalized least squares by cyclic coordinate descent.

    Minimizes ``||Z b - y||^2 + alpha ||b||_1`` over standardized features
    ``Z`` (zero mean, unit variance); the intercept absorbs the means and
    coefficients are mapped back to raw feature units.
    """
    X, names = _design(theta_mat)
    _check_design(X)
    Y = _targets(xdot, X.shape[0])
    std = _standardize(X, names)
    gram = std.Z.T @ std.Z
    penalize = np.ones(len(std.cols), dtype=np.uint8)
    p, m = X.shape[1], Y.shape[1]
    coef = np.zeros((p, m))
    converged, iters = True, 0
    for j in range(m):
        y = Y[:, j]
        y_mean = y.mean() if std.intercept is not None else 0.0
        corr = std.Z.T @ (y - y_mean)
        b, it, ok = kernels.lasso_cd(gram, corr, 0.5 * cfg.alpha, penalize,
                                     np.zeros(len(std.cols)), cfg.tol, cfg.max_iter)
        raw = b / std.scale
        coef[std.cols, j] = raw
        if std.intercept is not None:
            coef[std.intercept, j] = (y_mean - std.mean @ raw) / X[0, std.intercept]
        converged &= bool(ok)
        iters = max(iters, int(it))
    return CoefficientMatrix(coef, names, converged, iters, _target_names(Y))


def lasso_kkt_violation(theta_mat, xdot, coeffs: CoefficientMatrix, alpha: float) -> np.ndarray:
    """Optimality gap of a LASSO solution, per standardized coefficient.

    The subgradient condition ``2 z_j^T r in alpha * d|b_j|`` is checked and
    each violation is divided by ``2 z_j^T z_j``, the size of the coordinate
    step it would trigger.  Returns an ``(n_cols, n_targets)`` array.
    """
    X, names = _design(theta_mat)
    Y = _targets(xdot, X.shape[0])
    std = _standardize(X, names)
    out = np.zeros((len(std.cols), Y.shape[1]))
    for j in range(Y.shape[1]):
        y = Y[:, j]
        y_mean = y.mean() if std.intercept is not None else 0.0
        b = coeffs.values[std.cols, j] * std.scale
        grad = 2.0 * std.Z.T @ (y - y_mean - std.Z @ b)
        gap = np.where(b == 0, np.maximum(np.abs(grad) - alpha, 0.0),
                       np.abs(grad - alpha * np.sign(b)))
        out[:, j] = gap / (2.0 * np.diag(std.Z.T @ std.Z))
    return out


# -- SR3 ---------------------------------------------------------------------

_NORM_CODE = {"L0": 0, "L1": 1, "L2": 2}


def prox(x, norm: str, kappa: float, nu: float):
    """Proximal map of ``(kappa / nu) * R`` evaluated elementwise."""
    x = np.asarray(x, dtype=float)
    level = _prox_level(norm, kappa, nu)
    if norm == "L0":
        return np.where(np.abs(x) >= level, x, 0.0)
    if norm == "L1":
        return np.sign(x) * np.maximum(np.abs(x) - level, 0.0)
    return x * level


def _prox_level(norm: str, kappa: float, nu: float) -> float:
    if norm == "L0":
        return math.sqrt(2.0 * kappa / nu)
    if norm == "L1":
        return kappa / nu
    return 1.0 / (1.0 + 2.0 * kappa / nu)


def _penalty(w: np.ndarray, norm: str) -> float:
    if norm == "L0":
        return float(np.count_nonzero(w))
    if norm == "L1":
        return float(np.abs(w).sum())
    return float(w @ w)


def sr3_objective(X, y, xi, w, cfg: SR3Config, penalize: np.ndarray) -> float:
    r = X @ xi - y
    gap = xi - w
    return (0.5 * float(r @ r) + cfg.kappa * _penalty(w[penalize], cfg.norm)
            + 0.5 * cfg.nu * float(gap @ gap))


def _relaxed_step(X: np.ndarray, nu: float):
    """Factor the relaxed least-squares step ``xi = u + K w``.

    Uses a QR factorization of ``[X D^-1; sqrt(nu) D^-1]`` with column
    equilibration ``D``.  Returns ``(Q1, R, D, K)``; for a target ``y`` the
    offset is ``u = D^-1 R^-1 Q1^T y``.
    """
    n, p = X.shape
    d = _column_scale(X)
    A = np.vstack([X / d, np.diag(math.sqrt(nu) / d)])
    q, r = np.linalg.qr(A)
    q1, q2 = q[:n], q[n:]
    K = math.sqrt(nu) * scipy.linalg.solve_triangular(r, q2.T) / d[:, None]
    return q1, r, d, K


def sr3(theta_mat, xdot, cfg: SR3Config, track_objective: bool = False) -> CoefficientMatrix:
    """Sparse relaxed regularized regression.

    Alternates the closed-form minimizer over the data-fitting variable
    ``xi`` with the proximal map of ``kappa * R`` over the sparse copy ``w``.
    The returned coefficients are ``w``; ``xi`` is kept in
    ``diagnostics["xi"]``.  With ``track_objective`` the objective after
    every iteration is recorded in ``diagnostics["objective"]``.
    """
    X, names = _design(theta_mat)
    _check_design(X)
    Y = _targets(xdot, X.shape[0])
    penalize = ~_intercept_mask(names)
    p, m = X.shape[1], Y.shape[1]
    q1, r, d, K = _relaxed_step(X, cfg.nu)
    mode = _NORM_CODE[cfg.norm]
    level = _prox_level(cfg.norm, cfg.kappa, cfg.nu)
    pen_u8 = penalize.astype(np.uint8)
    W = np.zeros((p, m))
    XI = np.zeros((p, m))
    converged, iters = True, 0
    history = []
    for j in range(m):
        y = Y[:, j]
        u = scipy.linalg.solve_triangular(r, q1.T @ y) / d
        w0 = np.linalg.lstsq(X / d, y, rcond=None)[0] / d
        if track_objective:
            w, xi, it, ok = w0, w0, 0, False
            trace = [sr3_objective(X, y, w0, w0, cfg, penalize)]
            while it < cfg.max_iter and not ok:
                w, xi, _, ok = kernels.sr3_loop(u, K, w, mode, level, pen_u8, cfg.tol, 1)
                it += 1
                trace.append(sr3_objective(X, y, xi, w, cfg, penalize))
            history.append(trace)
        else:
            w, xi, it, ok = kernels.sr3_loop(u, K, w0, mode, level, pen_u8, cfg.tol,
                                             cfg.max_iter)
        W[:, j], XI[:, j] = w, xi
        converged &= bool(ok)
        iters = max(iters, int(it))
    diag = {"xi": XI}
    if track_objective:
        diag["objective"] = history
    return CoefficientMatrix(W, names, converged, iters, _target_names(Y), diag)


def fit(theta_mat, xdot, cfg: OptimizerConfig) -> CoefficientMatrix:
    if isinstance(cfg, STLSQConfig):
        return stlsq(theta_mat, xdot, cfg)
    if isinstance(cfg, LassoConfig):
        return lasso(theta_mat, xdot, cfg)
    if isinstance(cfg, SR3Config):
        return sr3(theta_mat, xdot, cfg)
    raise ConfigError(f"unknown optimizer config {cfg!r}")
