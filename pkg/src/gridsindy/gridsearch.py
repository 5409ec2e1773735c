"""Hyperparameter sweeps over libraries and optimizers, with selection and heatmap export."""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

from gridsindy.errors import ConfigError, GridSindyError, SelectionError
from gridsindy.evaluate import (AggregateReport, Pipeline, aggregate, fit_prepared,
                                prepare_chunk)
from gridsindy.ingest import FrequencyChunk
from gridsindy.library import LibrarySpec
from gridsindy.regression import NORMS, LassoConfig, SR3Config, STLSQConfig

DECADES = tuple(float(f"1e{k}") for k in range(-10, -2))

# parameter -> (low, high) for numeric axes
RANGES = {
    "lasso": {"alpha": (1e-10, 1e-3), "tol": (1e-7, 1e-6)},
    "stlsq": {"lambda": (1e-10, 1e-3), "alpha": (1e-3, 10.0)},
    "sr3": {"kappa": (1e-10, 1e-3), "nu": (1e-3, 10.0)},
}
AXES = {"lasso": ("alpha", "tol"), "stlsq": ("lambda", "alpha"), "sr3": ("kappa", "nu", "norm")}
FIXED = {"lasso": ("max_iter",), "stlsq": ("max_iter",), "sr3": ("tol", "max_iter")}
SPARSITY = {"lasso": "alpha", "stlsq": "lambda", "sr3": "kappa"}
OPTIMIZER_ORDER = ("lasso", "sr3", "stlsq")
NON_CONVERGENCE_FLAG = 0.5
_REL_SLACK = 1e-9


def _default_grids() -> dict:
    return {
        "lasso": {"alpha": DECADES, "tol": (1e-7, 1e-6)},
        "stlsq": {"lambda": DECADES, "alpha": (1e-3, 1e-2, 1e-1, 1.0, 10.0)},
        "sr3": {"kappa": DECADES, "nu": (1e-3, 1e-2, 1e-1, 1.0, 10.0), "norm": NORMS},
    }


@dataclass(frozen=True)
class GridSpec:
    """Libraries crossed with per-optimizer parameter grids.

    ``grids`` maps an optimizer kind (``lasso``, ``stlsq``, ``sr3``) to its
    axes; list-valued entries are swept and the scalar ``max_iter`` / SR3
    ``tol`` are held fixed.
    """

    libraries: tuple[LibrarySpec, ...] = (LibrarySpec.from_name("p2"),
                                          LibrarySpec.from_name("p2f1"),
                                          LibrarySpec.from_name("p3"))
    grids: dict = field(default_factory=_default_grids)

    def __post_init__(self):
        if not self.libraries:
            raise ConfigError("grid needs at least one library")
        names = [lib.name for lib in self.libraries]
        if len(set(map(repr, self.libraries))) != len(self.libraries):
            raise ConfigError(f"duplicate libraries in grid: {names}")
        if not self.grids:
            raise ConfigError("grid needs at least one optimizer")
        clean = {}
        for kind, axes in self.grids.items():
            if kind not in AXES:
                raise ConfigError(f"unknown optimizer {kind!r} in grid")
            clean[kind] = _validate_axes(kind, dict(axes))
        object.__setattr__(self, "grids", clean)

    def configs(self, kind: str) -> list:
        """Every configuration of one optimizer, in lexicographic axis order."""
        axes = self.grids[kind]
        names = AXES[kind]
        fixed = {k: axes[k] for k in FIXED[kind] if k in axes}
        out = []
        for combo in itertools.product(*(axes[n] for n in names)):
            out.append(_make_config(kind, dict(zip(names, combo)), fixed))
        return out

    def to_dict(self) -> dict:
        grids = {}
        for kind, axes in self.grids.items():
            grids[kind] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in axes.items()}
        return {"libraries": [lib.to_dict() for lib in self.libraries], "grids": grids}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        unknown = set(d) - {"libraries", "grids"}
        if unknown:
            raise ConfigError(f"unknown grid keys {sorted(unknown)}")
        libs = d.get("libraries")
        if libs is None:
            libraries = cls.libraries
        else:
            if not isinstance(libs, list):
                raise ConfigError("libraries must be a list")
            libraries = tuple(LibrarySpec.from_name(x) if isinstance(x, str)
                              else LibrarySpec.from_dict(x) for x in libs)
        grids = d.get("grids")
        if grids is None:
            grids = _default_grids()
        elif not isinstance(grids, dict):
            raise ConfigError("grids must be an object keyed by optimizer")
        return cls(libraries, grids)


def _validate_axes(kind: str, axes: dict) -> dict:
    allowed = set(AXES[kind]) | set(FIXED[kind])
    unknown = set(axes) - allowed
    if unknown:
        raise ConfigError(f"unknown {kind} grid parameters {sorted(unknown)}")
    defaults = _default_grids()[kind]
    out = {}
    for name in AXES[kind]:
        values = axes.get(name, defaults[name])
        if isinstance(values, (str, int, float)):
            values = [values]
        values = list(values)
        if not values:
            raise ConfigError(f"{kind} grid for {name} is empty")
        if name == "norm":
            bad = [v for v in values if v not in NORMS]
            if bad:
                raise ConfigError(f"SR3 norms must be in {NORMS}, got {bad}")
            values = sorted(set(values), key=NORMS.index)
        else:
            try:
                values = sorted(set(float(v) for v in values))
            except (TypeError, ValueError):
                raise ConfigError(f"{kind} {name} values must be numbers") from None
            lo, hi = RANGES[kind][name]
            for v in values:
                if not (lo * (1 - _REL_SLACK) <= v <= hi * (1 + _REL_SLACK)):
                    raise ConfigError(f"{kind} {name}={v!r} outside [{lo:g}, {hi:g}]")
        out[name] = tuple(values)
    for name in FIXED[kind]:
        if name in axes:
            if isinstance(axes[name], (list, tuple)):
                raise ConfigError(f"{kind} {name} is fixed, not a grid axis")
            out[name] = axes[name]
    return out


def _make_config(kind: str, values: dict, fixed: dict):
    if kind == "lasso":
        return LassoConfig(values["alpha"], values["tol"], **fixed)
    if kind == "stlsq":
        return STLSQConfig(values["lambda"], values["alpha"], **fixed)
    return SR3Config(values["kappa"], values["nu"], values["norm"], **fixed)


@dataclass
class GridRow:
    library: str
    optimizer: str
    kind: str
    params: dict
    report: AggregateReport | None
    error: str | None = None

    @property
    def flagged(self) -> bool:
        """More than half of the chunk fits did not converge."""
        if self.report is None:
            return False
        return self.report.n_unconverged > NON_CONVERGENCE_FLAG * self.report.n_chunks

    @property
    def mean_stable_rmse(self) -> float | None:
        return None if self.report is None else self.report.mean_stable_rmse

    @property
    def stability_fraction(self) -> float | None:
        return None if self.report is None else self.report.stability_fraction

    def config_text(self) -> str:
        return ", ".join(f"{k}={v}" if isinstance(v, str) else f"{k}={v:g}"
                         for k, v in self.params.items())

    def to_dict(self) -> dict:
        return {"library": self.library, "optimizer": self.optimizer, "kind": self.kind,
                "params": dict(self.params),
                "report": None if self.report is None else self.report.to_dict(),
                "flagged": self.flagged, "error": self.error}


PARAM_COLUMNS = ("alpha", "tol", "lambda", "kappa", "nu", "norm")
REPORT_COLUMNS = ("mean_stable_rmse", "rmse_std", "stability_fraction", "mean_active_features",
                  "n_chunks", "n_stable", "n_unconverged")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class GridResult:
    rows: list[GridRow]

    def csv_rows(self) -> list[list[str]]:
        header = ["library", "optimizer", *PARAM_COLUMNS, *REPORT_COLUMNS, "flagged", "error"]
        out = [header]
        for r in self.rows:
            rep = r.report.to_dict() if r.report is not None else {}
            out.append([r.library, r.optimizer, *(_cell(r.params.get(p)) for p in PARAM_COLUMNS),
                        *(_cell(rep.get(c)) for c in REPORT_COLUMNS), _cell(r.flagged),
                        _cell(r.error)])
        return out

    def to_dict(self) -> dict:
        return {"rows": [r.to_dict() for r in self.rows]}

    def groups(self) -> dict[tuple[str, str], list[GridRow]]:
        out: dict[tuple[str, str], list[GridRow]] = {}
        for r in self.rows:
            out.setdefault((r.library, r.optimizer), []).append(r)
        return out


# worker state: prepared chunks per library, installed once per process
_PREPARED: dict = {}


def _install(prepared: dict) -> None:
    global _PREPARED
    _PREPARED = prepared


def _evaluate_config(task) -> tuple[AggregateReport | None, str | None]:
    lib_index, pipeline = task
    prepared = _PREPARED[lib_index]
    if isinstance(prepared, str):
        return None, prepared
    try:
        records = [fit_prepared(p, pipeline).record for p in prepared]
        return aggregate(records), None
    except (GridSindyError, ArithmeticError, ValueError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def _prepare_library(chunks, smoothing, library):
    try:
        return [prepare_chunk(c, smoothing, library) for c in chunks]
    except GridSindyError as exc:
        return f"{type(exc).__name__}: {exc}"


def run_grid(chunks: Sequence[FrequencyChunk], spec: GridSpec, base: Pipeline | None = None,
             jobs: int = 1) -> GridResult:
    """Evaluate every (library, optimizer, config) cell on all chunks.

    ``base`` supplies smoothing and divergence settings.  Rows come out in
    library order, then LASSO, SR3 (per norm), STLSQ, then lexicographic
    parameter order.  A failing cell records its error instead of a report.
    """
    if not chunks:
        raise ConfigError("run_grid needs at least one chunk")
    base = base or Pipeline()
    prepared = {i: _prepare_library(chunks, base.smoothing, lib)
                for i, lib in enumerate(spec.libraries)}
    cells = []
    for i, lib in enumerate(spec.libraries):
        for kind in OPTIMIZER_ORDER:
            if kind not in spec.grids:
                continue
            configs = spec.configs(kind)
            if kind == "sr3":
                configs.sort(key=lambda c: NORMS.index(c.norm))
            for cfg in configs:
                cells.append((i, lib, cfg))
    tasks = [(i, replace(base, library=lib, optimizer=cfg)) for i, lib, cfg in cells]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_install,
                                 initargs=(prepared,)) as pool:
            outcomes = list(pool.map(_evaluate_config, tasks,
                                     chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        _install(prepared)
        outcomes = [_evaluate_config(t) for t in tasks]
    rows = [GridRow(lib.name, cfg.label, cfg.kind, cfg.params(), report, error)
            for (_, lib, cfg), (report, error) in zip(cells, outcomes)]
    return GridResult(rows)


def _selection_key(row: GridRow, position: int, criterion: str):
    strength = row.params[SPARSITY[row.kind]]
    if criterion == "min_rmse":
        return (row.mean_stable_rmse, -strength, position)
    return (-row.stability_fraction, -strength, position)


def best_config(result: GridResult, criterion: str = "min_rmse",
                skip_empty: bool = False) -> dict[tuple[str, str], GridRow | None]:
    """Best row per (library, optimizer) group.

    Ties go to the stronger sparsity parameter, then to the earlier row.
    A group with no usable row raises :class:`SelectionError`, or maps to
    None when ``skip_empty`` is set.
    """
    if criterion not in ("min_rmse", "max_stability"):
        raise ConfigError(f"unknown selection criterion {criterion!r}")
    if not result.rows:
        raise SelectionError("empty grid result")
    out = {}
    for group, rows in result.groups().items():
        if criterion == "min_rmse":
            usable = [(k, r) for k, r in enumerate(rows) if r.mean_stable_rmse is not None]
        else:
            usable = [(k, r) for k, r in enumerate(rows) if r.report is not None]
        if not usable:
            if skip_empty:
                out[group] = None
                continue
            raise SelectionError(f"no selectable row for {group[0]} / {group[1]}")
        out[group] = min(usable, key=lambda kr: _selection_key(kr[1], kr[0], criterion))[1]
    return out


def heatmap_filename(optimizer: str, library: str, metric: str) -> str:
    slug = optimizer.lower().replace(" (", "-").replace(")", "").replace(" ", "-")
    return f"{slug}_{library}_{metric}.csv"


def emit_heatmap(result: GridResult, axes: tuple[str, str], metric: str = "rmse",
                 optimizer: str | None = None,
                 library: str | None = None) -> dict[str, list[list[str]]]:
    """Long-format tables (param_x, param_y, value), one per (optimizer, library) group.

    ``optimizer`` may be a kind (``sr3``) or a label (``SR3 (L0)``).  Every
    selected group must vary both axes; remaining parameters must be fixed
    within a group.  Null metrics become empty cells.
    """
    if metric not in ("rmse", "stability"):
        raise ConfigError(f"unknown heatmap metric {metric!r}")
    px, py = axes
    if px == py:
        raise ConfigError("heatmap axes must differ")
    groups = {g: rows for g, rows in result.groups().items()
              if (library is None or g[0] == library)
              and (optimizer is None or optimizer in (g[1], rows[0].kind))}
    if not groups:
        raise ConfigError("no grid rows match the requested heatmap")
    tables = {}
    for (lib, opt), rows in groups.items():
        for p in axes:
            if p not in rows[0].params:
                raise ConfigError(f"{p!r} is not a {opt} parameter")
        xs = {r.params[px] for r in rows}
        ys = {r.params[py] for r in rows}
        if len(xs) < 2 or len(ys) < 2:
            raise ConfigError(f"heatmap axis has a single value for {opt} / {lib}")
        others = {tuple(v for k, v in r.params.items() if k not in axes) for r in rows}
        if len(others) > 1:
            raise ConfigError(f"parameters other than {axes} vary for {opt} / {lib}")
        table = [[px, py, metric]]
        for r in sorted(rows, key=lambda r: (r.params[px], r.params[py])):
            value = r.mean_stable_rmse if metric == "rmse" else r.stability_fraction
            table.append([_cell(r.params[px]), _cell(r.params[py]), _cell(value)])
        tables[heatmap_filename(opt, lib, metric)] = table
    return tables


def stability_trend(result: GridResult, kind: str, fixed: dict, library: str) -> list[float]:
    """Stability fractions along the sparsity axis with the other parameters held at ``fixed``."""
    axis = SPARSITY[kind]
    rows = [r for r in result.rows if r.kind == kind and r.library == library
            and all(r.params.get(k) == v for k, v in fixed.items())]
    rows.sort(key=lambda r: r.params[axis])
    return [math.nan if r.report is None else r.report.stability_fraction for r in rows]
