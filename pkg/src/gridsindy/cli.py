"""Command-line entry point: ``gridsindy <command> --config run.json --out DIR``.

Every command writes its payload files plus ``manifest.json`` into the
output directory.  The manifest records the resolved configuration; the
only non-reproducible value (the wall-clock time) sits under ``metadata``.

Exit codes: 0 success, 1 data error, 2 configuration error.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from datetime import datetime, timezone

import numpy as np

from gridsindy import __version__
from gridsindy.errors import ConfigError, DataError, GridSindyError, SelectionError
from gridsindy.evaluate import Pipeline, aggregate, evaluate_batch, fit_chunk, rmse
from gridsindy.gridsearch import GridSpec, best_config, emit_heatmap, run_grid
from gridsindy.ingest import (ColumnSpec, IngestSummary, ingest, read_chunk_store, to_angular,
                              write_chunk_store)
from gridsindy.library import LibrarySpec
from gridsindy.preprocess import SmoothingConfig, optimize_sigma
from gridsindy.regression import LassoConfig, optimizer_from_dict
from gridsindy.simulate import (SwingParams, euler_maruyama_swing, generate_synthetic_dataset,
                                write_frequency_csv)

EXIT_OK, EXIT_DATA, EXIT_CONFIG = 0, 1, 2
MANIFEST = "manifest.json"


# -- config -----------------------------------------------------------------

def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _section(cfg: dict, key: str, default=None):
    value = cfg.get(key, default)
    if value is not None and not isinstance(value, dict):
        raise ConfigError(f"config section {key!r} must be an object")
    return value


def _smoothing(cfg: dict) -> SmoothingConfig | None:
    if "smoothing" in cfg and cfg["smoothing"] is None:
        return None
    d = _section(cfg, "smoothing", {})
    try:
        return SmoothingConfig(**d)
    except TypeError as exc:
        raise ConfigError(f"bad smoothing config: {exc}") from None


def _library(cfg: dict) -> LibrarySpec:
    lib = cfg.get("library", "p2")
    if isinstance(lib, str):
        return LibrarySpec.from_name(lib)
    if not isinstance(lib, dict):
        raise ConfigError("library must be a name or an object")
    return LibrarySpec.from_dict(lib)


def _pipeline(cfg: dict) -> Pipeline:
    opt = cfg.get("optimizer")
    optimizer = LassoConfig() if opt is None else optimizer_from_dict(opt)
    div = _section(cfg, "divergence", {})
    try:
        return Pipeline(_smoothing(cfg), _library(cfg), optimizer,
                        float(div.get("factor", 50.0)), float(div.get("floor", 10.0)),
                        float(cfg.get("active_threshold", 1e-6)))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, GridSindyError):
            raise
        raise ConfigError(f"bad pipeline config: {exc}") from None


def _swing(cfg: dict, key: str) -> SwingParams:
    d = _section(cfg, key)
    if d is None or "params" not in d:
        raise ConfigError(f"config needs {key}.params (c_omega, c_theta, epsilon)")
    return SwingParams.from_dict(d["params"])


def _data_path(args, cfg: dict) -> str:
    path = args.data or cfg.get("data")
    if not path:
        raise ConfigError("no input given; pass --data or set 'data' in the config")
    return path


def _load_chunks(args, cfg: dict):
    path = _data_path(args, cfg)
    if not os.path.isdir(path):
        raise DataError(f"chunk store {path} not found")
    chunks = read_chunk_store(path)
    if not chunks:
        raise DataError(f"chunk store {path} holds no chunks")
    return chunks


# -- output helpers ---------------------------------------------------------

def _write_csv(path: str, rows) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\r\n").writerows(rows)


def _write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def _records_rows(records) -> list[list[str]]:
    rows = [["chunk_id", "stable", "rmse", "n_active"]]
    rows += [[r.chunk_id, _cell(r.stable), _cell(r.rmse), str(r.n_active)] for r in records]
    return rows


def _safe_name(chunk_id: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_." else "-" for ch in chunk_id)


# -- commands ---------------------------------------------------------------

def cmd_ingest(args, cfg: dict) -> dict:
    paths = args.data or cfg.get("data")
    if not paths:
        raise ConfigError("no input given; pass --data or set 'data' in the config")
    if isinstance(paths, str):
        paths = [paths]
    try:
        spec = ColumnSpec(**_section(cfg, "columns", {}))
    except TypeError as exc:
        raise ConfigError(f"bad columns config: {exc}") from None
    chunks, total = [], IngestSummary(0, 0, 0, 0, 0)
    for p in paths:
        if not os.path.isfile(p):
            raise DataError(f"input file {p} not found")
        got, s = ingest(p, spec, int(cfg.get("chunk_len", 900)), float(cfg.get("f_ref", 50.0)))
        chunks += got
        total = IngestSummary(*(a + b for a, b in zip(
            (total.rows_read, total.rows_dropped, total.chunks_emitted, total.chunks_skipped,
             total.duplicates),
            (s.rows_read, s.rows_dropped, s.chunks_emitted, s.chunks_skipped, s.duplicates))))
    ids = [c.chunk_id for c in chunks]
    if len(set(ids)) != len(ids):
        raise DataError("input files overlap: duplicate chunk ids")
    if not chunks:
        raise DataError("no complete chunk found in the input")
    chunks.sort(key=lambda c: c.start)
    write_chunk_store(args.out, chunks)
    _write_json(os.path.join(args.out, "summary.json"), total.to_dict())
    print(f"{len(chunks)} chunks written to {args.out}")
    return {"inputs": list(paths), "outputs": ["chunks.csv", "store.json", "summary.json"]}


def cmd_synth(args, cfg: dict) -> dict:
    if args.seed is None:
        raise ConfigError("synth needs --seed")
    syn = _section(cfg, "synth")
    if syn is None:
        raise ConfigError("config needs a 'synth' section")
    params = _swing(cfg, "synth")
    allowed = {"params", "n_chunks", "chunk_len", "dt", "f_ref", "x0", "omega0_spread", "start",
               "substeps"}
    unknown = set(syn) - allowed
    if unknown:
        raise ConfigError(f"unknown synth keys {sorted(unknown)}")
    kwargs = {k: syn[k] for k in allowed - {"params"} if k in syn}
    if "x0" in kwargs:
        kwargs["x0"] = tuple(map(float, kwargs["x0"]))
    chunks = generate_synthetic_dataset(params, seed=args.seed, **{"n_chunks": 1, **kwargs})
    write_chunk_store(args.out, chunks)
    outputs = ["chunks.csv", "store.json"]
    if all(c.dt == 1.0 and float(c.start).is_integer() for c in chunks):
        write_frequency_csv(os.path.join(args.out, "synthetic.csv"), chunks)
        outputs.append("synthetic.csv")
    print(f"{len(chunks)} synthetic chunks written to {args.out}")
    return {"outputs": outputs}


def cmd_sigma_sweep(args, cfg: dict) -> dict:
    chunks = _load_chunks(args, cfg)
    pipe = _pipeline(cfg)
    candidates = cfg.get("sigma_candidates", [1, 20, 60, 200, 500])
    unit = cfg.get("sigma_unit", "seconds")
    if unit not in ("seconds", "samples"):
        raise ConfigError("sigma_unit must be 'seconds' or 'samples'")
    if not isinstance(candidates, list) or not candidates:
        raise ConfigError("sigma_candidates must be a non-empty list")
    dts = {c.dt for c in chunks}
    if unit == "samples" and len(dts) != 1:
        raise DataError("sigma in samples needs a common sampling interval")
    scale = dts.pop() if unit == "samples" else 1.0
    sweep = optimize_sigma(chunks, [float(s) * scale for s in candidates], pipe, args.jobs)
    rows = sweep.to_csv_rows()
    if unit == "samples":
        rows[0].insert(1, "sigma_samples")
        for row, s in zip(rows[1:], candidates):
            row.insert(1, _cell(float(s)))
    _write_csv(os.path.join(args.out, "sigma_sweep.csv"), rows)
    _write_json(os.path.join(args.out, "sigma_best.json"), {"best_sigma": sweep.best_sigma})
    print(f"best sigma {sweep.best_sigma!r} s")
    return {"outputs": ["sigma_sweep.csv", "sigma_best.json"]}


def model_to_dict(chunk_id: str, fitted, pipe: Pipeline) -> dict:
    coeffs = fitted.coeffs
    return {
        "chunk_id": chunk_id,
        "library_spec": pipe.library.to_dict(),
        "feature_names": list(coeffs.feature_names),
        "coefficients": {name: coeffs.column(k).tolist()
                         for k, name in enumerate(coeffs.target_names)},
        "optimizer_config": pipe.optimizer.to_dict(),
        "converged": bool(coeffs.converged),
        "iterations": int(coeffs.iterations),
    }


def cmd_fit(args, cfg: dict) -> dict:
    chunks = _load_chunks(args, cfg)
    pipe = _pipeline(cfg)
    model_dir = os.path.join(args.out, "models")
    os.makedirs(model_dir, exist_ok=True)
    outputs = []
    for chunk in chunks:
        try:
            fitted = fit_chunk(chunk, pipe)
        except GridSindyError as exc:
            raise type(exc)(f"chunk {chunk.chunk_id}: {exc}") from exc
        name = f"models/{_safe_name(chunk.chunk_id)}.json"
        _write_json(os.path.join(args.out, name), model_to_dict(chunk.chunk_id, fitted, pipe))
        outputs.append(name)
    print(f"{len(outputs)} models written to {model_dir}")
    return {"outputs": outputs}


def cmd_evaluate(args, cfg: dict) -> dict:
    chunks = _load_chunks(args, cfg)
    pipe = _pipeline(cfg)
    records = evaluate_batch(chunks, pipe, args.jobs)
    _write_csv(os.path.join(args.out, "records.csv"), _records_rows(records))
    report = aggregate(records)
    _write_json(os.path.join(args.out, "aggregate.json"),
                {"library": pipe.library.name, "optimizer": pipe.optimizer.label,
                 "config": pipe.optimizer.params(), **report.to_dict()})
    print(f"stability {report.stability_fraction:.3f}, mean stable rmse {report.mean_stable_rmse}")
    return {"outputs": ["records.csv", "aggregate.json"]}


def cmd_grid(args, cfg: dict) -> dict:
    chunks = _load_chunks(args, cfg)
    pipe = _pipeline(cfg)
    spec = GridSpec.from_dict(_section(cfg, "grid", {}))
    result = run_grid(chunks, spec, pipe, args.jobs)
    _write_csv(os.path.join(args.out, "grid.csv"), result.csv_rows())
    _write_json(os.path.join(args.out, "grid.json"), result.to_dict())
    outputs = ["grid.csv", "grid.json"]

    best_rows = [["library", "optimizer", "criterion", "config", "mean_stable_rmse",
                  "stability_fraction"]]
    for criterion in ("min_rmse", "max_stability"):
        for (lib, opt), row in best_config(result, criterion, skip_empty=True).items():
            if row is None:
                best_rows.append([lib, opt, criterion, "", "", ""])
            else:
                best_rows.append([lib, opt, criterion, row.config_text(),
                                  _cell(row.mean_stable_rmse), _cell(row.stability_fraction)])
    _write_csv(os.path.join(args.out, "best.csv"), best_rows)
    outputs.append("best.csv")

    heatmaps = cfg.get("heatmaps")
    if heatmaps is None:
        heatmaps = _default_heatmaps(spec)
    os.makedirs(os.path.join(args.out, "heatmaps"), exist_ok=True)
    for hm in heatmaps:
        axes = tuple(hm.get("axes", ()))
        if len(axes) != 2:
            raise ConfigError("each heatmap needs two axes")
        for metric in hm.get("metrics", ["rmse", "stability"]):
            tables = emit_heatmap(result, axes, metric, hm.get("optimizer"), hm.get("library"))
            for name, table in tables.items():
                _write_csv(os.path.join(args.out, "heatmaps", name), table)
                outputs.append(f"heatmaps/{name}")
    print(f"{len(result.rows)} grid cells evaluated")
    return {"outputs": outputs}


def _default_heatmaps(spec: GridSpec) -> list[dict]:
    natural = {"lasso": ("alpha", "tol"), "stlsq": ("lambda", "alpha"), "sr3": ("kappa", "nu")}
    out = []
    for kind, axes in natural.items():
        grid = spec.grids.get(kind)
        if grid and all(len(grid[a]) > 1 for a in axes):
            out.append({"optimizer": kind, "axes": list(axes)})
    return out


def cmd_baseline(args, cfg: dict) -> dict:
    chunks = _load_chunks(args, cfg)
    params = _swing(cfg, "baseline")
    if params.epsilon > 0 and args.seed is None:
        raise ConfigError("a noisy baseline needs --seed")
    seed = 0 if args.seed is None else args.seed
    substeps = int(cfg["baseline"].get("substeps", 1))
    rows = [["chunk_id", "rmse"]]
    errors = []
    for i, chunk in enumerate(chunks):
        ang = to_angular(chunk)
        traj = euler_maruyama_swing(params, (0.0, float(ang.omega[0])), ang.dt,
                                    len(ang.omega) - 1, seed + i, substeps)
        err = rmse(traj.omega, ang.omega)
        errors.append(err)
        rows.append([chunk.chunk_id, _cell(err)])
    _write_csv(os.path.join(args.out, "baseline.csv"), rows)
    arr = np.sort(np.asarray(errors))
    report = {"params": params.to_dict(), "n_chunks": len(errors),
              "mean_rmse": float(np.mean(arr)), "rmse_std": float(np.std(arr))}
    _write_json(os.path.join(args.out, "baseline.json"), report)
    print(f"baseline mean rmse {report['mean_rmse']!r}")
    return {"outputs": ["baseline.csv", "baseline.json"]}


COMMANDS = {
    "ingest": cmd_ingest,
    "synth": cmd_synth,
    "sigma-sweep": cmd_sigma_sweep,
    "fit": cmd_fit,
    "evaluate": cmd_evaluate,
    "grid": cmd_grid,
    "baseline": cmd_baseline,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridsindy",
                                     description="Sparse identification of grid frequency dynamics")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="run configuration (JSON)")
        p.add_argument("--data", nargs="+" if name == "ingest" else None,
                       help="input CSV file(s) for ingest, chunk store directory otherwise")
        p.add_argument("--seed", type=int, help="base random seed")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")
        p.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg = load_config(args.config)
        os.makedirs(args.out, exist_ok=True)
        info = COMMANDS[args.command](args, cfg)
        manifest = {
            "command": args.command,
            "config": cfg,
            "data": args.data,
            "seed": args.seed,
            **info,
            "metadata": {"created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
                         "version": __version__},
        }
        _write_json(os.path.join(args.out, MANIFEST), manifest)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, SelectionError, GridSindyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
