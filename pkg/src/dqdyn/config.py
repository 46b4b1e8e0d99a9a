"""Run configuration: YAML schema, validation with key paths, round-trip save.

Schema (all sections optional unless a command needs them)::

    spectrum:
      lambda0_nm: 800.0
      sigma_nm: 2.55            # or fwhm_nm, or a components list
      # components:
      #   - {weight: 0.6, center_nm: 799.0, sigma_nm: 2.0}
      #   - {weight: 0.4, center_nm: 802.0, fwhm_nm: 5.0}
    protocol:
      uniform: {eta: 0.5, delta_l: 120.0, count: 20}
      # or steps: [{eta: 0.5, delta_l: 120.0}, {angle_deg: 33, thickness_mm: 7.111}]
      pair: [H, V]              # or [{bloch: [0, 0, 1]}, {bloch: [0, 0, -1]}]
    run:
      backend: lattice          # lattice | quadrature | both
      nodes: 4097
      span_sigmas: 8.0
      lattice_cap: 10000
      seed: 0
    sweep:
      eta: {start: 0.0, stop: 1.0, count: 11}
      delta_l: {values: [80.0, 120.0]}
      count: 20
      max_points: 10000
    optimize:
      budget: 400
      count: 2
      delta_l: 120.0
      # delta_l_choices: [0.0, 40.0, 80.0, 120.0]

Errors are reported as :class:`ConfigError` carrying the offending key path
(and the line number for YAML syntax problems).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .environment import SpectralComponent, SpectralModel, default_model
from .protocol import (
    ControlSpec,
    PlateSpec,
    Protocol,
    Step,
    delta_l_from_thickness,
    eta_from_angle,
    QUARTZ_DELTA_N,
)
from . import qmath

BACKENDS = ("lattice", "quadrature", "both")

_REQUIRED = object()


class ConfigError(ValueError):
    """Configuration problem, annotated with the offending key path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


def _as_map(obj: Any, path: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(path, f"expected a mapping, got {type(obj).__name__}")
    return obj


def _check_keys(d: dict, allowed: set[str], path: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        key = sorted(str(k) for k in unknown)[0]
        raise ConfigError(f"{path}.{key}" if path else key, "unknown key")


def _get_number(
    d: dict, key: str, path: str, default=_REQUIRED, lo=None, hi=None
) -> float:
    if key not in d:
        if default is _REQUIRED:
            raise ConfigError(f"{path}.{key}", "required key is missing")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}", f"expected a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError(f"{path}.{key}", "must be finite")
    if lo is not None and v < lo:
        raise ConfigError(f"{path}.{key}", f"must be >= {lo}, got {v}")
    if hi is not None and v > hi:
        raise ConfigError(f"{path}.{key}", f"must be <= {hi}, got {v}")
    return v


def _get_int(d: dict, key: str, path: str, default=_REQUIRED, lo=None, hi=None) -> int:
    if key not in d:
        if default is _REQUIRED:
            raise ConfigError(f"{path}.{key}", "required key is missing")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}.{key}", f"expected an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(f"{path}.{key}", f"must be >= {lo}, got {v}")
    if hi is not None and v > hi:
        raise ConfigError(f"{path}.{key}", f"must be <= {hi}, got {v}")
    return v


@dataclass(frozen=True)
class RunSettings:
    backend: str = "lattice"
    nodes: int = 4097
    span_sigmas: float = 8.0
    lattice_cap: int = 10000
    seed: int = 0
    workers: int = 1


@dataclass(frozen=True)
class SweepConfig:
    etas: tuple[float, ...]
    delta_ls: tuple[float, ...]
    n_steps: int = 20
    max_points: int = 10000


@dataclass(frozen=True)
class OptimizeConfig:
    budget: int = 400
    n_steps: int = 2
    delta_l: float = 120.0
    delta_l_choices: tuple[float, ...] | None = None


@dataclass(frozen=True)
class RunConfig:
    model: SpectralModel
    protocol: Protocol | None
    pair: tuple[np.ndarray, np.ndarray]
    pair_labels: tuple[str, str] | None
    run: RunSettings
    sweep: SweepConfig | None = None
    optimize: OptimizeConfig | None = None
    raw: dict = field(default_factory=dict)


def default_config() -> RunConfig:
    pair = (qmath.density("H"), qmath.density("V"))
    return RunConfig(
        model=default_model(),
        protocol=None,
        pair=pair,
        pair_labels=("H", "V"),
        run=RunSettings(),
    )


def _parse_component(entry: Any, path: str) -> SpectralComponent:
    entry = _as_map(entry, path)
    _check_keys(entry, {"weight", "center_nm", "sigma_nm", "fwhm_nm"}, path)
    weight = _get_number(entry, "weight", path)
    center = _get_number(entry, "center_nm", path)
    if ("sigma_nm" in entry) == ("fwhm_nm" in entry):
        raise ConfigError(path, "give exactly one of sigma_nm or fwhm_nm")
    if "sigma_nm" in entry:
        sigma = _get_number(entry, "sigma_nm", path)
    else:
        from .environment import FWHM_TO_SIGMA

        sigma = _get_number(entry, "fwhm_nm", path) * FWHM_TO_SIGMA
    try:
        return SpectralComponent(weight, center, sigma)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def _parse_spectrum(data: Any, path: str) -> SpectralModel:
    data = _as_map(data, path)
    _check_keys(data, {"lambda0_nm", "sigma_nm", "fwhm_nm", "components"}, path)
    lambda0 = _get_number(data, "lambda0_nm", path, default=800.0)
    if "components" in data:
        if "sigma_nm" in data or "fwhm_nm" in data:
            raise ConfigError(path, "components excludes sigma_nm / fwhm_nm")
        entries = data["components"]
        if not isinstance(entries, list) or not entries:
            raise ConfigError(f"{path}.components", "expected a non-empty list")
        comps = tuple(
            _parse_component(e, f"{path}.components[{i}]") for i, e in enumerate(entries)
        )
        try:
            return SpectralModel(lambda0, comps)
        except ValueError as exc:
            raise ConfigError(path, str(exc)) from None
    if ("sigma_nm" in data) == ("fwhm_nm" in data):
        raise ConfigError(path, "give exactly one of sigma_nm or fwhm_nm")
    try:
        if "sigma_nm" in data:
            return SpectralModel.single_gaussian(
                lambda0, sigma_nm=_get_number(data, "sigma_nm", path)
            )
        return SpectralModel.single_gaussian(
            lambda0, fwhm_nm=_get_number(data, "fwhm_nm", path)
        )
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def _parse_step(entry: Any, path: str, lambda0_nm: float) -> Step:
    entry = _as_map(entry, path)
    _check_keys(entry, {"eta", "angle_deg", "delta_l", "thickness_mm", "delta_n"}, path)
    if ("eta" in entry) == ("angle_deg" in entry):
        raise ConfigError(path, "give exactly one of eta or angle_deg")
    if "eta" in entry:
        eta = _get_number(entry, "eta", path, lo=0.0, hi=1.0)
    else:
        eta = eta_from_angle(_get_number(entry, "angle_deg", path))
    if ("delta_l" in entry) == ("thickness_mm" in entry):
        raise ConfigError(path, "give exactly one of delta_l or thickness_mm")
    if "delta_l" in entry:
        if "delta_n" in entry:
            raise ConfigError(f"{path}.delta_n", "only valid with thickness_mm")
        delta_l = _get_number(entry, "delta_l", path, lo=0.0)
    else:
        delta_n = _get_number(entry, "delta_n", path, default=QUARTZ_DELTA_N)
        delta_l = delta_l_from_thickness(
            _get_number(entry, "thickness_mm", path, lo=0.0), delta_n, lambda0_nm
        )
    try:
        return Step(ControlSpec(eta), PlateSpec(delta_l))
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def _parse_state(entry: Any, path: str) -> tuple[np.ndarray, str | None]:
    if isinstance(entry, str):
        try:
            return qmath.density(entry), entry
        except ValueError as exc:
            raise ConfigError(path, str(exc)) from None
    entry = _as_map(entry, path)
    _check_keys(entry, {"bloch"}, path)
    b = entry.get("bloch")
    if not (isinstance(b, list) and len(b) == 3):
        raise ConfigError(f"{path}.bloch", "expected a list of 3 numbers")
    for i, v in enumerate(b):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{path}.bloch[{i}]", f"expected a number, got {v!r}")
    try:
        return qmath.density_from_bloch([float(v) for v in b]), None
    except ValueError as exc:
        raise ConfigError(f"{path}.bloch", str(exc)) from None


def _parse_protocol_section(
    data: Any, path: str, lambda0_nm: float
) -> tuple[Protocol | None, tuple, tuple[str, str] | None]:
    data = _as_map(data, path)
    _check_keys(data, {"uniform", "steps", "pair"}, path)
    proto = None
    if ("uniform" in data) and ("steps" in data):
        raise ConfigError(path, "give at most one of uniform or steps")
    if "uniform" in data:
        u = _as_map(data["uniform"], f"{path}.uniform")
        _check_keys(u, {"eta", "delta_l", "count"}, f"{path}.uniform")
        eta = _get_number(u, "eta", f"{path}.uniform", lo=0.0, hi=1.0)
        delta_l = _get_number(u, "delta_l", f"{path}.uniform", lo=0.0)
        count = _get_int(u, "count", f"{path}.uniform", lo=1)
        proto = Protocol.uniform(eta, delta_l, count)
    elif "steps" in data:
        entries = data["steps"]
        if not isinstance(entries, list) or not entries:
            raise ConfigError(f"{path}.steps", "expected a non-empty list")
        steps = tuple(
            _parse_step(e, f"{path}.steps[{i}]", lambda0_nm)
            for i, e in enumerate(entries)
        )
        proto = Protocol(steps)
    pair_entry = data.get("pair", ["H", "V"])
    if not (isinstance(pair_entry, list) and len(pair_entry) == 2):
        raise ConfigError(f"{path}.pair", "expected a list of 2 states")
    st0, lab0 = _parse_state(pair_entry[0], f"{path}.pair[0]")
    st1, lab1 = _parse_state(pair_entry[1], f"{path}.pair[1]")
    labels = (lab0, lab1) if lab0 is not None and lab1 is not None else None
    return proto, (st0, st1), labels


def _parse_axis(data: Any, path: str, lo=None, hi=None) -> tuple[float, ...]:
    data = _as_map(data, path)
    if "values" in data:
        _check_keys(data, {"values"}, path)
        entries = data["values"]
        if not isinstance(entries, list) or not entries:
            raise ConfigError(f"{path}.values", "expected a non-empty list")
        out = []
        for i, v in enumerate(entries):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{path}.values[{i}]", f"expected a number, got {v!r}")
            v = float(v)
            if lo is not None and v < lo:
                raise ConfigError(f"{path}.values[{i}]", f"must be >= {lo}, got {v}")
            if hi is not None and v > hi:
                raise ConfigError(f"{path}.values[{i}]", f"must be <= {hi}, got {v}")
            out.append(v)
        return tuple(out)
    _check_keys(data, {"start", "stop", "count"}, path)
    start = _get_number(data, "start", path, lo=lo, hi=hi)
    stop = _get_number(data, "stop", path, lo=lo, hi=hi)
    count = _get_int(data, "count", path, lo=1)
    return tuple(float(v) for v in np.linspace(start, stop, count))


def _parse_run(data: Any, path: str) -> RunSettings:
    data = _as_map(data, path)
    allowed = {"backend", "nodes", "span_sigmas", "lattice_cap", "seed", "workers"}
    _check_keys(data, allowed, path)
    backend = data.get("backend", "lattice")
    if backend not in BACKENDS:
        raise ConfigError(f"{path}.backend", f"expected one of {BACKENDS}, got {backend!r}")
    nodes = _get_int(data, "nodes", path, default=4097, lo=3)
    if nodes % 2 == 0:
        raise ConfigError(f"{path}.nodes", f"node count must be odd, got {nodes}")
    return RunSettings(
        backend=backend,
        nodes=nodes,
        span_sigmas=_get_number(data, "span_sigmas", path, default=8.0, lo=1.0),
        lattice_cap=_get_int(data, "lattice_cap", path, default=10000, lo=1),
        seed=_get_int(data, "seed", path, default=0, lo=0),
        workers=_get_int(data, "workers", path, default=1, lo=1),
    )


def _parse_sweep(data: Any, path: str) -> SweepConfig:
    data = _as_map(data, path)
    _check_keys(data, {"eta", "delta_l", "count", "max_points"}, path)
    if "eta" not in data:
        raise ConfigError(f"{path}.eta", "required key is missing")
    if "delta_l" not in data:
        raise ConfigError(f"{path}.delta_l", "required key is missing")
    return SweepConfig(
        etas=_parse_axis(data["eta"], f"{path}.eta", lo=0.0, hi=1.0),
        delta_ls=_parse_axis(data["delta_l"], f"{path}.delta_l", lo=0.0),
        n_steps=_get_int(data, "count", path, default=20, lo=1),
        max_points=_get_int(data, "max_points", path, default=10000, lo=1),
    )


def _parse_optimize(data: Any, path: str) -> OptimizeConfig:
    data = _as_map(data, path)
    _check_keys(data, {"budget", "count", "delta_l", "delta_l_choices"}, path)
    choices = None
    if "delta_l_choices" in data:
        choices = _parse_axis({"values": data["delta_l_choices"]}, path, lo=0.0)
    return OptimizeConfig(
        budget=_get_int(data, "budget", path, default=400, lo=1),
        n_steps=_get_int(data, "count", path, default=2, lo=1),
        delta_l=_get_number(data, "delta_l", path, default=120.0, lo=0.0),
        delta_l_choices=choices,
    )


def parse_config(data: Any) -> RunConfig:
    """Build a RunConfig from a parsed YAML document (mapping or None)."""
    if data is None:
        data = {}
    data = _as_map(data, "")
    _check_keys(data, {"spectrum", "protocol", "run", "sweep", "optimize"}, "")
    if "spectrum" in data:
        model = _parse_spectrum(data["spectrum"], "spectrum")
    else:
        model = default_model()
    proto = None
    pair = (qmath.density("H"), qmath.density("V"))
    labels: tuple[str, str] | None = ("H", "V")
    if "protocol" in data:
        proto, pair, labels = _parse_protocol_section(
            data["protocol"], "protocol", model.lambda0_nm
        )
    run = _parse_run(data["run"], "run") if "run" in data else RunSettings()
    sweep = _parse_sweep(data["sweep"], "sweep") if "sweep" in data else None
    optimize = _parse_optimize(data["optimize"], "optimize") if "optimize" in data else None
    return RunConfig(
        model=model,
        protocol=proto,
        pair=pair,
        pair_labels=labels,
        run=run,
        sweep=sweep,
        optimize=optimize,
        raw=data,
    )


def load_config(path: str | Path) -> RunConfig:
    """Load and validate a YAML config file."""
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError("", f"YAML syntax error at {where}: {exc}") from None
    return parse_config(data)


def config_to_dict(cfg: RunConfig) -> dict:
    """Canonical plain-dict form of a config; floats keep full precision."""
    spectrum: dict[str, Any] = {"lambda0_nm": cfg.model.lambda0_nm}
    comps = cfg.model.components
    if len(comps) == 1 and comps[0].center_nm == cfg.model.lambda0_nm:
        spectrum["sigma_nm"] = comps[0].sigma_nm
    else:
        spectrum["components"] = [
            {"weight": c.weight, "center_nm": c.center_nm, "sigma_nm": c.sigma_nm}
            for c in comps
        ]
    out: dict[str, Any] = {"spectrum": spectrum}
    protocol: dict[str, Any] = {}
    if cfg.protocol is not None:
        steps = cfg.protocol.steps
        if len(set(steps)) == 1:
            protocol["uniform"] = {
                "eta": steps[0].control.eta,
                "delta_l": steps[0].plate.delta_l,
                "count": len(steps),
            }
        else:
            protocol["steps"] = [
                {"eta": s.control.eta, "delta_l": s.plate.delta_l} for s in steps
            ]
    if cfg.pair_labels is not None:
        protocol["pair"] = list(cfg.pair_labels)
    else:
        protocol["pair"] = [
            {"bloch": [float(v) for v in qmath.bloch_vector(rho)]} for rho in cfg.pair
        ]
    out["protocol"] = protocol
    out["run"] = {
        "backend": cfg.run.backend,
        "nodes": cfg.run.nodes,
        "span_sigmas": cfg.run.span_sigmas,
        "lattice_cap": cfg.run.lattice_cap,
        "seed": cfg.run.seed,
        "workers": cfg.run.workers,
    }
    if cfg.sweep is not None:
        out["sweep"] = {
            "eta": {"values": list(cfg.sweep.etas)},
            "delta_l": {"values": list(cfg.sweep.delta_ls)},
            "count": cfg.sweep.n_steps,
            "max_points": cfg.sweep.max_points,
        }
    if cfg.optimize is not None:
        opt: dict[str, Any] = {
            "budget": cfg.optimize.budget,
            "count": cfg.optimize.n_steps,
            "delta_l": cfg.optimize.delta_l,
        }
        if cfg.optimize.delta_l_choices is not None:
            opt["delta_l_choices"] = list(cfg.optimize.delta_l_choices)
        out["optimize"] = opt
    return out


def save_config(cfg: RunConfig, path: str | Path) -> None:
    """Write a config back to YAML; decimal inputs round-trip exactly."""
    Path(path).write_text(yaml.safe_dump(config_to_dict(cfg), sort_keys=False))
