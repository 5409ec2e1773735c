"""Per-chunk evaluation of the identification pipeline and dataset-level summaries."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Sequence

import numpy as np

from gridsindy.errors import DataError, GridSindyError
from gridsindy.ingest import FrequencyChunk, to_angular
from gridsindy.library import FeatureMatrix, LibrarySpec, build_feature_matrix
from gridsindy.preprocess import SmoothingConfig, build_trajectory
from gridsindy.regression import (CoefficientMatrix, LassoConfig, OptimizerConfig, fit)
from gridsindy.simulate import (DIVERGENCE_FACTOR, DIVERGENCE_FLOOR, SimulationResult,
                                divergence_bound, simulate_model)

ACTIVE_THRESHOLD = 1e-6


@dataclass(frozen=True)
class Pipeline:
    """Everything needed to go from a raw chunk to a simulated model."""

    smoothing: SmoothingConfig | None = field(default_factory=SmoothingConfig)
    library: LibrarySpec = field(default_factory=LibrarySpec)
    optimizer: OptimizerConfig = field(default_factory=LassoConfig)
    divergence_factor: float = DIVERGENCE_FACTOR
    divergence_floor: float = DIVERGENCE_FLOOR
    active_threshold: float = ACTIVE_THRESHOLD

    def to_dict(self) -> dict:
        return {
            "smoothing": None if self.smoothing is None else self.smoothing.to_dict(),
            "library": self.library.to_dict(),
            "optimizer": self.optimizer.to_dict(),
            "divergence_factor": self.divergence_factor,
            "divergence_floor": self.divergence_floor,
            "active_threshold": self.active_threshold,
        }


@dataclass
class EvaluationRecord:
    chunk_id: str
    stable: bool
    rmse: float | None
    n_active: int
    converged: bool = True
    divergence_step: int | None = None

    def __post_init__(self):
        if self.rmse is not None and self.rmse < 0:
            raise DataError("rmse must be non-negative")


@dataclass
class AggregateReport:
    mean_stable_rmse: float | None
    rmse_std: float | None
    stability_fraction: float
    mean_active_features: float
    n_chunks: int
    n_stable: int
    n_unconverged: int = 0

    def to_dict(self) -> dict:
        return {
            "mean_stable_rmse": self.mean_stable_rmse,
            "rmse_std": self.rmse_std,
            "stability_fraction": self.stability_fraction,
            "mean_active_features": self.mean_active_features,
            "n_chunks": self.n_chunks,
            "n_stable": self.n_stable,
            "n_unconverged": self.n_unconverged,
        }


@dataclass
class ChunkFit:
    """Intermediate products of one chunk evaluation."""

    record: EvaluationRecord
    coeffs: CoefficientMatrix
    simulation: SimulationResult
    omega_raw: np.ndarray
    omega_smooth: np.ndarray


def rmse(sim_omega, ref_omega) -> float:
    a = np.asarray(sim_omega, dtype=float)
    b = np.asarray(ref_omega, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 1:
        raise DataError(f"rmse needs equal-length sequences, got {a.shape} and {b.shape}")
    d = a - b
    return math.sqrt(float(np.mean(d * d)))


def active_features(coeffs: CoefficientMatrix, threshold: float = ACTIVE_THRESHOLD) -> np.ndarray:
    """Number of coefficients with magnitude at or above ``threshold``, per target."""
    if threshold < 0:
        raise DataError("threshold must be non-negative")
    return np.count_nonzero(np.abs(coeffs.values) >= threshold, axis=0)


def aggregate(records: Sequence[EvaluationRecord]) -> AggregateReport:
    """Table-style summary; RMSE statistics use stable chunks only."""
    if not records:
        raise DataError("aggregate needs at least one record")
    stable = [r.rmse for r in records if r.stable]
    n = len(records)
    if stable:
        arr = np.sort(np.asarray(stable, dtype=float))  # order-independent sum
        mean = float(np.mean(arr))
        std = float(np.std(arr))
    else:
        mean = std = None
    return AggregateReport(
        mean_stable_rmse=mean,
        rmse_std=std,
        stability_fraction=len(stable) / n,
        mean_active_features=float(np.mean([r.n_active for r in records])),
        n_chunks=n,
        n_stable=len(stable),
        n_unconverged=sum(not r.converged for r in records),
    )


@dataclass
class PreparedChunk:
    """Smoothed states and library of one chunk, reusable across optimizers."""

    chunk_id: str
    features: FeatureMatrix
    omega_dot: np.ndarray
    x0: tuple[float, float]
    omega_raw: np.ndarray
    omega_smooth: np.ndarray
    dt: float


def prepare_chunk(chunk: FrequencyChunk, smoothing: SmoothingConfig | None,
                  library: LibrarySpec) -> PreparedChunk:
    ang = to_angular(chunk)
    traj = build_trajectory(ang, smoothing)
    features = build_feature_matrix(traj, library)
    return PreparedChunk(chunk.chunk_id, features, traj.omega_dot,
                         (float(traj.theta[0]), float(traj.omega[0])), ang.omega, traj.omega,
                         ang.dt)


def fit_prepared(prep: PreparedChunk, pipeline: Pipeline) -> ChunkFit:
    coeffs = fit(prep.features, prep.omega_dot, pipeline.optimizer)
    bound = divergence_bound(prep.omega_raw, pipeline.divergence_factor,
                             pipeline.divergence_floor)
    sim = simulate_model(coeffs, pipeline.library, prep.x0, prep.dt, len(prep.omega_raw) - 1,
                         bound)
    err = rmse(sim.trajectory.omega, prep.omega_raw) if sim.stable else None
    n_active = int(active_features(coeffs, pipeline.active_threshold)[0])
    record = EvaluationRecord(prep.chunk_id, sim.stable, err, n_active, coeffs.converged,
                              sim.divergence_step)
    return ChunkFit(record, coeffs, sim, prep.omega_raw, prep.omega_smooth)


def fit_chunk(chunk: FrequencyChunk, pipeline: Pipeline) -> ChunkFit:
    return fit_prepared(prepare_chunk(chunk, pipeline.smoothing, pipeline.library), pipeline)


def evaluate_chunk(chunk: FrequencyChunk, pipeline: Pipeline) -> EvaluationRecord:
    """Smooth, fit, simulate over the chunk's horizon and score against raw omega."""
    try:
        return fit_chunk(chunk, pipeline).record
    except GridSindyError as exc:
        raise type(exc)(f"chunk {chunk.chunk_id}: {exc}") from exc


def evaluate_batch(chunks: Sequence[FrequencyChunk], pipeline: Pipeline,
                   jobs: int = 1) -> list[EvaluationRecord]:
    """Evaluate chunks in order; ``jobs > 1`` spreads them over worker processes."""
    work = partial(evaluate_chunk, pipeline=pipeline)
    if jobs > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(work, chunks, chunksize=max(1, len(chunks) // (4 * jobs))))
    return [work(c) for c in chunks]
