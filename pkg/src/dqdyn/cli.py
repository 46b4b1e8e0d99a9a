"""Command line harness: run configured experiments and emit CSV artifacts.

Subcommands
-----------
simulate   trajectory of the configured protocol (distance, memory, Bloch)
figures    canonical data sets (ids 2-5): distance / memory series over the
           reference plate values (80, 120) and mixing values
sweep      long-format grid over (eta, delta_l) with summary diagnostics
maps       per-step divisibility report of the configured protocol
optimize   budgeted schedule search maximizing the memory witness

Every command writes RFC-4180 CSV files (17-significant-digit floats) plus a
JSON manifest carrying the config snapshot, resolved settings, tool version,
timestamp and sha256 digest of every artifact. Identical config and seed
give byte-identical CSV files. A manifest can be passed back to --config to
re-run from its embedded snapshot.

Exit codes: 0 success, 2 configuration or backend-precondition error,
3 backend disagreement beyond tolerance.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, engine, measures, qmath, search
from .config import (
    ConfigError,
    OptimizeConfig,
    RunConfig,
    config_to_dict,
    default_config,
    load_config,
    parse_config,
)
from .environment import SpectralModel
from .protocol import Protocol

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

REFERENCE_DELTA_LS = (80.0, 120.0)
REFERENCE_ETAS = (0.9045, 0.6545, 0.5, 0.3127, 0.1654)
REFERENCE_FWHM_NM = 6.0
REFERENCE_STEPS = 20


class BackendMismatch(RuntimeError):
    """The two backends disagree beyond the acceptance tolerance."""


def _fmt(value) -> str:
    return "%.17g" % float(value)


def _write_csv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    return f"sha256:{digest}"


def _write_manifest(
    out_dir: Path, command: str, cfg: RunConfig, settings: dict, files: list[Path]
) -> Path:
    manifest = {
        "tool": "dqdyn",
        "version": __version__,
        "command": command,
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "config": config_to_dict(cfg),
        "settings": settings,
        "outputs": {p.name: _sha256(p) for p in files},
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _resolve_settings(cfg: RunConfig, args) -> dict:
    backend = args.backend if args.backend else cfg.run.backend
    nodes = args.nodes if args.nodes is not None else cfg.run.nodes
    if nodes < 3 or nodes % 2 == 0:
        raise ConfigError("run.nodes", f"node count must be odd and >= 3, got {nodes}")
    return {
        "backend": backend,
        "nodes": nodes,
        "span_sigmas": cfg.run.span_sigmas,
        "lattice_cap": cfg.run.lattice_cap,
        "seed": args.seed if args.seed is not None else cfg.run.seed,
        "workers": args.workers if args.workers is not None else cfg.run.workers,
    }


def _evolve_kwargs(settings: dict) -> dict:
    return {
        "nodes": settings["nodes"],
        "span_sigmas": settings["span_sigmas"],
        "lattice_cap": settings["lattice_cap"],
    }


def _single_backend(settings: dict) -> str:
    return "lattice" if settings["backend"] == "both" else settings["backend"]


def _require_protocol(cfg: RunConfig) -> Protocol:
    if cfg.protocol is None:
        raise ConfigError("protocol", "section with steps is required for this command")
    return cfg.protocol


def _trajectory_rows(traj: engine.Trajectory) -> list[list[str]]:
    series = measures.distance_series(traj)
    report = measures.blp_lower_bound(series)
    rows = []
    for k, step in enumerate(traj.steps):
        inc = series.values[k] - series.values[k - 1] if k > 0 else 0.0
        bloch = [qmath.bloch_vector(traj.states[k, r]) for r in (0, 1)]
        rows.append(
            [str(step), _fmt(series.values[k]), _fmt(inc), _fmt(report.cumulative[k])]
            + [_fmt(v) for v in np.concatenate(bloch)]
        )
    return rows


def cmd_simulate(cfg: RunConfig, settings: dict, out_dir: Path) -> list[Path]:
    proto = _require_protocol(cfg)
    states = np.stack(cfg.pair)
    kwargs = _evolve_kwargs(settings)
    if settings["backend"] == "both":
        lat = engine.evolve(proto, cfg.model, states, backend="lattice", **kwargs)
        quad = engine.evolve(proto, cfg.model, states, backend="quadrature", **kwargs)
        agreement = engine.backend_agreement(lat, quad)
        settings["backend_agreement"] = agreement
        if agreement > qmath.DEFAULT_TOLS.backend_agreement:
            raise BackendMismatch(
                f"lattice and quadrature backends disagree by {agreement:.3e} "
                f"(tolerance {qmath.DEFAULT_TOLS.backend_agreement:.1e})"
            )
        traj = lat
    else:
        traj = engine.evolve(
            proto, cfg.model, states, backend=_single_backend(settings), **kwargs
        )
    header = ["step", "D", "dD", "N", "x1", "y1", "z1", "x2", "y2", "z2"]
    path = out_dir / "simulate.csv"
    _write_csv(path, header, _trajectory_rows(traj))
    return [path]


def _reference_model() -> SpectralModel:
    return SpectralModel.single_gaussian(800.0, fwhm_nm=REFERENCE_FWHM_NM)


def _figure_series(figure_id: int, settings: dict):
    model = _reference_model()
    backend = _single_backend(settings)
    kwargs = _evolve_kwargs(settings)
    if figure_id in (2, 3):
        key, values = "delta_l", REFERENCE_DELTA_LS
        protos = [Protocol.uniform(0.5, d, REFERENCE_STEPS) for d in values]
    else:
        key, values = "eta", REFERENCE_ETAS
        protos = [Protocol.uniform(e, 120.0, REFERENCE_STEPS) for e in values]
    out = []
    for value, proto in zip(values, protos):
        traj = engine.evolve(proto, model, backend=backend, **kwargs)
        series = measures.distance_series(traj)
        if figure_id in (2, 4):
            ys = series.values
        else:
            ys = measures.blp_lower_bound(series).cumulative
        out.append((value, ys))
    return key, out


def _plot_series(path: Path, key: str, series, ylabel: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for value, ys in series:
        ax.plot(range(len(ys)), ys, marker="o", markersize=3, label=f"{key}={value:g}")
    ax.set_xlabel("step")
    ax.set_ylabel(ylabel)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def cmd_figures(figure_id: int, settings: dict, out_dir: Path, plot: bool) -> list[Path]:
    key, series = _figure_series(figure_id, settings)
    quantity = "D" if figure_id in (2, 4) else "N"
    rows = []
    for value, ys in series:
        for step, y in enumerate(ys):
            rows.append([_fmt(value), str(step), _fmt(y)])
    path = out_dir / f"figure{figure_id}.csv"
    _write_csv(path, [key, "step", quantity], rows)
    files = [path]
    if plot:
        svg = out_dir / f"figure{figure_id}.svg"
        _plot_series(svg, key, series, quantity)
        files.append(svg)
    return files


def _sweep_point(payload):
    """Summary of one (eta, delta_l) grid point; top-level for pickling."""
    model, pair, eta, delta_l, n_steps, backend, kwargs = payload
    proto = Protocol.uniform(eta, delta_l, n_steps)
    traj = engine.evolve(proto, model, np.stack(pair), backend=backend, **kwargs)
    series = measures.distance_series(traj)
    report = measures.blp_lower_bound(series)
    first_revival = report.contributing_steps[0] if report.contributing_steps else -1
    offdiag = measures.control_basis_offdiag(traj.states[-1, 0], eta)
    return report.total, first_revival, float(series.values[-1]), offdiag


def _run_jobs(fn, payloads, workers: int):
    if workers <= 1 or len(payloads) <= 1:
        return [fn(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, payloads))


def cmd_sweep(cfg: RunConfig, settings: dict, out_dir: Path) -> list[Path]:
    if cfg.sweep is None:
        raise ConfigError("sweep", "section is required for this command")
    sweep = cfg.sweep
    n_points = len(sweep.etas) * len(sweep.delta_ls)
    if n_points > sweep.max_points:
        raise ConfigError(
            "sweep", f"grid has {n_points} points, exceeding max_points {sweep.max_points}"
        )
    backend = _single_backend(settings)
    kwargs = _evolve_kwargs(settings)
    payloads = [
        (cfg.model, cfg.pair, eta, delta_l, sweep.n_steps, backend, kwargs)
        for eta in sweep.etas
        for delta_l in sweep.delta_ls
    ]
    results = _run_jobs(_sweep_point, payloads, settings["workers"])
    rows = []
    for (_, _, eta, delta_l, n_steps, _, _), (nm, first_rev, final_d, offdiag) in zip(
        payloads, results
    ):
        rows.append(
            [
                _fmt(eta),
                _fmt(delta_l),
                str(n_steps),
                _fmt(nm),
                str(first_rev),
                _fmt(final_d),
                _fmt(offdiag),
            ]
        )
    header = ["eta", "delta_l", "steps", "N", "first_revival_step", "final_D", "steady_offdiag"]
    path = out_dir / "sweep.csv"
    _write_csv(path, header, rows)
    return [path]


def cmd_maps(cfg: RunConfig, settings: dict, out_dir: Path) -> list[Path]:
    proto = _require_protocol(cfg)
    report = measures.classify_divisibility(
        proto,
        cfg.model,
        backend=_single_backend(settings),
        probe_pair=cfg.pair,
        **_evolve_kwargs(settings),
    )
    rows = []
    for i, step in enumerate(report.steps):
        rows.append(
            [
                str(step),
                report.labels[i].value,
                _fmt(report.min_choi[i]),
                _fmt(report.expansion[i]),
                _fmt(report.condition_numbers[i]),
                _fmt(report.rel_min_sv[i]),
            ]
        )
    header = ["step", "label", "min_choi_eigenvalue", "max_expansion", "condition_number", "rel_min_sv"]
    path = out_dir / "maps.csv"
    _write_csv(path, header, rows)
    return [path]


def cmd_optimize(
    cfg: RunConfig, settings: dict, out_dir: Path, budget: int | None
) -> list[Path]:
    opt = cfg.optimize if cfg.optimize is not None else OptimizeConfig()
    if budget is not None:
        if budget < 1:
            raise ConfigError("optimize.budget", f"must be >= 1, got {budget}")
        opt = OptimizeConfig(
            budget=budget,
            n_steps=opt.n_steps,
            delta_l=opt.delta_l,
            delta_l_choices=opt.delta_l_choices,
        )
    workers = settings["workers"]
    batch = (lambda fn, payloads: _run_jobs(fn, payloads, workers)) if workers > 1 else None
    result = search.optimize_schedule(
        cfg.model,
        n_steps=opt.n_steps,
        delta_l=opt.delta_l,
        budget=opt.budget,
        seed=settings["seed"],
        pair=cfg.pair,
        backend=_single_backend(settings),
        delta_l_choices=opt.delta_l_choices,
        batch_map=batch,
        **_evolve_kwargs(settings),
    )
    schedule_path = out_dir / "schedule.csv"
    _write_csv(
        schedule_path,
        ["step", "eta", "delta_l"],
        [
            [str(k + 1), _fmt(result.etas[k]), _fmt(result.delta_ls[k])]
            for k in range(len(result.etas))
        ],
    )
    evals_path = out_dir / "evaluations.csv"
    n = len(result.etas)
    header = (
        ["index", "N"]
        + [f"eta_{k+1}" for k in range(n)]
        + [f"delta_l_{k+1}" for k in range(n)]
    )
    rows = []
    for idx, ev in enumerate(result.history):
        rows.append(
            [str(idx), _fmt(ev.nm)]
            + [_fmt(v) for v in ev.etas]
            + [_fmt(v) for v in ev.delta_ls]
        )
    _write_csv(evals_path, header, rows)
    settings["best_N"] = result.nm
    settings["n_evaluations"] = result.n_evaluations
    return [schedule_path, evals_path]


def _load_cfg(path: str | None) -> RunConfig:
    if path is None:
        return default_config()
    text = Path(path).read_text()
    try:
        import yaml

        data = yaml.safe_load(text)
    except Exception as exc:  # yaml errors formatted by load_config below
        return load_config(path)
    if isinstance(data, dict) and "outputs" in data and "config" in data:
        # A manifest: re-run from its embedded config snapshot.
        return parse_config(data["config"])
    return parse_config(data)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file (or a manifest.json)")
    common.add_argument(
        "--backend",
        choices=["quadrature", "lattice", "both"],
        help="override the configured backend",
    )
    common.add_argument("--nodes", type=int, help="quadrature node count (odd)")
    common.add_argument("--out-dir", default="out", help="artifact directory")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--workers", type=int, help="worker processes for grids")

    parser = argparse.ArgumentParser(
        prog="dqdyn",
        description="Discrete-time qubit dynamics under control and dephasing plates",
    )
    parser.add_argument("--version", action="version", version=f"dqdyn {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="run the configured protocol")
    fig = sub.add_parser("figures", parents=[common], help="canonical data sets")
    fig.add_argument("figure_id", type=int, choices=[2, 3, 4, 5], help="data set id")
    fig.add_argument("--plot", action="store_true", help="also write an SVG chart")
    sub.add_parser("sweep", parents=[common], help="grid over (eta, delta_l)")
    sub.add_parser("maps", parents=[common], help="per-step divisibility report")
    opt = sub.add_parser("optimize", parents=[common], help="schedule search")
    opt.add_argument("--budget", type=int, help="override evaluation budget")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_cfg(args.config)
        settings = _resolve_settings(cfg, args)
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            files = cmd_simulate(cfg, settings, out_dir)
        elif args.command == "figures":
            files = cmd_figures(args.figure_id, settings, out_dir, args.plot)
        elif args.command == "sweep":
            files = cmd_sweep(cfg, settings, out_dir)
        elif args.command == "maps":
            files = cmd_maps(cfg, settings, out_dir)
        elif args.command == "optimize":
            files = cmd_optimize(cfg, settings, out_dir, args.budget)
        else:  # pragma: no cover - argparse enforces choices
            raise ConfigError("", f"unknown command {args.command!r}")
        manifest = _write_manifest(out_dir, args.command, cfg, settings, files)
        for p in files + [manifest]:
            print(p)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except engine.BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BackendMismatch as exc:
        print(f"numerical contract violation: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
