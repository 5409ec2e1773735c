"""Forward simulation of identified models and of the stochastic swing equation."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from gridsindy._backend import kernels
from gridsindy.errors import ConfigError, DataError
from gridsindy.ingest import FrequencyChunk, _chunk_label, to_frequency
from gridsindy.library import LibrarySpec
from gridsindy.preprocess import StateTrajectory
from gridsindy.regression import CoefficientMatrix

DIVERGENCE_FACTOR = 50.0
DIVERGENCE_FLOOR = 10.0


@dataclass(frozen=True)
class PowerSchedule:
    """Piecewise-constant power imbalance: ``value[i]`` holds from ``times[i]`` on.

    Before the first breakpoint the imbalance is zero.
    """

    times: tuple[float, ...] = ()
    values: tuple[float, ...] = ()

    def __post_init__(self):
        if len(self.times) != len(self.values):
            raise ConfigError("schedule needs one value per breakpoint")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ConfigError("schedule breakpoints must increase")

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if not self.times:
            return np.zeros_like(t)
        idx = np.searchsorted(np.asarray(self.times), t, side="right") - 1
        vals = np.concatenate(([0.0], np.asarray(self.values, dtype=float)))
        return vals[idx + 1]

    def to_dict(self) -> dict:
        return {"times": list(self.times), "values": list(self.values)}


@dataclass(frozen=True)
class SwingParams:
    c_omega: float
    c_theta: float
    epsilon: float = 0.0
    delta_p: PowerSchedule = field(default_factory=PowerSchedule)

    def __post_init__(self):
        if min(self.c_omega, self.c_theta, self.epsilon) < 0:
            raise ConfigError("swing parameters must be non-negative")

    def to_dict(self) -> dict:
        return {"c_omega": self.c_omega, "c_theta": self.c_theta, "epsilon": self.epsilon,
                "delta_p": self.delta_p.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "SwingParams":
        try:
            sched = d.get("delta_p") or {}
            return cls(float(d["c_omega"]), float(d["c_theta"]), float(d.get("epsilon", 0.0)),
                       PowerSchedule(tuple(map(float, sched.get("times", ()))),
                                     tuple(map(float, sched.get("values", ())))))
        except KeyError as exc:
            raise ConfigError(f"swing parameters missing {exc}") from None


@dataclass
class SimulationResult:
    trajectory: StateTrajectory
    stable: bool
    divergence_step: int | None = None


def divergence_bound(omega_ref, factor: float = DIVERGENCE_FACTOR,
                     floor: float = DIVERGENCE_FLOOR) -> float:
    """Scale-aware cut-off for |omega| beyond which a simulation counts as diverged."""
    peak = float(np.max(np.abs(omega_ref))) if len(omega_ref) else 0.0
    return max(factor * peak, floor)


def simulate_model(coeffs: CoefficientMatrix, spec: LibrarySpec, x0, dt: float, n_steps: int,
                   bound: float, target: int | str = 0) -> SimulationResult:
    """RK4 integration of d(theta)/dt = omega, d(omega)/dt = f(theta, omega, t).

    The run stops at the first non-finite state or the first step with
    ``|omega| > bound``; the samples before that point are returned.
    """
    if list(coeffs.feature_names) != spec.feature_names:
        raise ConfigError("model features do not match the library")
    if not bound > 0:
        raise ConfigError("divergence bound must be positive")
    kinds, exps = spec.kernel_encoding()
    theta, omega, n_valid, div = kernels.rk4_simulate(
        np.ascontiguousarray(coeffs.column(target)), kinds, exps, spec.time_scale,
        float(x0[0]), float(x0[1]), float(dt), int(n_steps), float(bound))
    n_valid = int(n_valid)
    time = dt * np.arange(n_valid, dtype=float)
    traj = StateTrajectory(theta[:n_valid], omega[:n_valid], time, None, dt)
    stable = div < 0
    return SimulationResult(traj, stable, None if stable else int(div))


def euler_maruyama_swing(params: SwingParams, x0, dt: float, n_steps: int, seed,
                         substeps: int = 1) -> StateTrajectory:
    """Simulate the linear stochastic swing equation with Euler-Maruyama.

    ``seed`` is an integer or a :class:`numpy.random.Generator`; one standard
    normal draw is consumed per integration step even when ``epsilon`` is
    zero.  With ``substeps > 1`` the scheme runs at ``dt / substeps`` and
    every ``substeps``-th state is kept.
    """
    if not dt > 0:
        raise ConfigError("dt must be positive")
    if substeps < 1:
        raise ConfigError("substeps must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    h = dt / substeps
    n_fine = n_steps * substeps
    noise = rng.standard_normal(n_fine)
    drive = params.delta_p(h * np.arange(n_fine))
    theta, omega = kernels.euler_maruyama(params.c_omega, params.c_theta, params.epsilon,
                                          drive, noise, float(x0[0]), float(x0[1]), float(h))
    if substeps > 1:
        theta, omega = theta[::substeps].copy(), omega[::substeps].copy()
    return StateTrajectory(theta, omega, dt * np.arange(n_steps + 1, dtype=float), None, dt)


def generate_synthetic_dataset(params: SwingParams, n_chunks: int, chunk_len: int = 900,
                               dt: float = 1.0, seed: int = 0, f_ref: float = 50.0,
                               x0=(0.0, 0.0), omega0_spread: float = 0.0,
                               start: float = 0.0, substeps: int = 1) -> list[FrequencyChunk]:
    """Independent Euler-Maruyama chunks converted to frequency.

    Chunk ``i`` draws from ``default_rng(seed + i)``: first a uniform offset
    in ``[-omega0_spread, omega0_spread]`` added to the initial omega (only
    when the spread is positive), then the noise sequence.  Chunks are laid
    end to end in time starting at ``start``.
    """
    if n_chunks < 1:
        raise ConfigError("n_chunks must be >= 1")
    chunks = []
    for i in range(n_chunks):
        rng = np.random.default_rng(seed + i)
        om0 = float(x0[1])
        if omega0_spread > 0:
            om0 += omega0_spread * (2.0 * rng.random() - 1.0)
        traj = euler_maruyama_swing(params, (float(x0[0]), om0), dt, chunk_len - 1, rng,
                                    substeps)
        t0 = start + i * chunk_len * dt
        label = _chunk_label(int(t0), 0) if float(t0).is_integer() else f"synthetic-{i:05d}"
        chunks.append(FrequencyChunk(label, t0, to_frequency(traj.omega, f_ref), f_ref, dt))
    return chunks


def write_trajectory_csv(path, traj: StateTrajectory) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(["t", "theta", "omega"])
        for row in zip(traj.time.tolist(), traj.theta.tolist(), traj.omega.tolist()):
            writer.writerow([repr(v) for v in row])


def write_frequency_csv(path, chunks: list[FrequencyChunk]) -> None:
    """Write chunks in the ingest schema (``timestamp,frequency``); needs a 1 s grid."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(["timestamp", "frequency"])
        for c in chunks:
            if c.dt != 1.0 or not float(c.start).is_integer():
                raise DataError("the ingest CSV schema needs integer 1 s timestamps")
            for k, f in enumerate(c.frequency.tolist()):
                writer.writerow([int(c.start) + k, repr(f)])

