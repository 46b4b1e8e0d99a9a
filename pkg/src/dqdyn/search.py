"""Budgeted derivative-free search for memory-maximizing schedules.

The objective is the pair memory witness of a protocol whose per-step mixing
parameters (and optionally plate values) are free. Search is deterministic
for a fixed seed: a coarse grid (or seeded random starts when the dimension
is too high for a grid) followed by Nelder-Mead refinement of the best
starts, all under one shared evaluation budget. Coarse-stage evaluations are
independent and can be dispatched through ``batch_map`` (e.g. a process
pool's map); results are merged in submission order, so the evaluation log
does not depend on worker timing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from . import measures, qmath
from .protocol import Protocol


@dataclass(frozen=True)
class Evaluation:
    etas: tuple[float, ...]
    delta_ls: tuple[float, ...]
    nm: float


@dataclass(frozen=True)
class ScheduleResult:
    etas: np.ndarray
    delta_ls: np.ndarray
    nm: float
    n_evaluations: int
    history: tuple[Evaluation, ...]


def _objective(payload) -> float:
    """Memory witness of one candidate schedule; top-level for pickling."""
    model, etas, plates, pair, backend, increment_floor, kwargs = payload
    proto = Protocol.from_arrays(etas, plates)
    report = measures.pair_memory(
        proto, model, pair, backend=backend, increment_floor=increment_floor, **kwargs
    )
    return report.total


class _BudgetExhausted(Exception):
    """Internal signal: the shared evaluation budget ran out mid-refinement."""


def optimize_schedule(
    model=None,
    n_steps: int = 2,
    delta_l: float = 120.0,
    *,
    budget: int = 400,
    seed: int = 0,
    pair=None,
    backend: str = "lattice",
    delta_l_choices=None,
    increment_floor: float = qmath.DEFAULT_TOLS.increment_floor,
    batch_map=None,
    **kwargs,
) -> ScheduleResult:
    """Search mixing parameters (one per step) maximizing the memory witness.

    When ``delta_l_choices`` is given, a discrete coordinate-descent pass
    also reassigns each step's plate value from those choices (they must be
    commensurate for the lattice backend).
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    rng = np.random.default_rng(seed)
    used = 0
    history: list[Evaluation] = []
    plate_state = np.full(n_steps, float(delta_l))

    best_val = -math.inf
    best_etas = np.full(n_steps, 0.5)
    best_plates = plate_state.copy()

    def remaining() -> int:
        return max(0, budget - used)

    def record(etas: np.ndarray, plates: np.ndarray, val: float) -> None:
        nonlocal used, best_val, best_etas, best_plates
        used += 1
        history.append(
            Evaluation(tuple(float(e) for e in etas), tuple(float(p) for p in plates), val)
        )
        if val > best_val:
            best_val = val
            best_etas = etas.copy()
            best_plates = plates.copy()

    def consider(etas, plates) -> float:
        # Hard stop: scipy's Nelder-Mead only checks maxfev between
        # iterations, so the cap is enforced here as well.
        if remaining() == 0:
            raise _BudgetExhausted
        etas = np.clip(np.asarray(etas, dtype=float), 0.0, 1.0)
        plates = np.asarray(plates, dtype=float)
        val = _objective((model, etas, plates, pair, backend, increment_floor, kwargs))
        record(etas, plates, val)
        return val

    # Coarse stage: full factorial grid if it fits in half the budget,
    # otherwise seeded random starts around the uniform schedule.
    starts: list[np.ndarray] = []
    for pts in (11, 5, 3):
        if pts**n_steps <= max(1, budget // 2):
            axes = np.linspace(0.0, 1.0, pts)
            mesh = np.meshgrid(*([axes] * n_steps), indexing="ij")
            starts = [np.array(v) for v in zip(*(m.ravel() for m in mesh))]
            break
    if not starts:
        n_random = max(1, budget // 4)
        starts = [np.full(n_steps, 0.5)] + [
            rng.uniform(0.0, 1.0, n_steps) for _ in range(n_random - 1)
        ]
    starts = starts[: max(1, remaining())]
    scored: list[tuple[float, np.ndarray]] = []
    if batch_map is not None and len(starts) > 1:
        payloads = [
            (model, x, plate_state, pair, backend, increment_floor, kwargs)
            for x in starts
        ]
        for x0, val in zip(starts, batch_map(_objective, payloads)):
            record(np.asarray(x0, dtype=float), plate_state, val)
            scored.append((val, np.asarray(x0, dtype=float)))
    else:
        for x0 in starts:
            if remaining() == 0:
                break
            scored.append((consider(x0, plate_state), np.asarray(x0, dtype=float)))

    # Refinement stage: Nelder-Mead from the best coarse points.
    scored.sort(key=lambda sv: -sv[0])
    refine = [sv[1] for sv in scored[:3]]
    for i, x0 in enumerate(refine):
        share = remaining() // (len(refine) - i)
        if share < n_steps + 2:
            break
        try:
            minimize(
                lambda x: -consider(x, plate_state),
                x0,
                method="Nelder-Mead",
                options={"maxfev": share, "xatol": 1e-9, "fatol": 1e-12},
            )
        except _BudgetExhausted:
            break

    # Optional discrete pass over plate values.
    if delta_l_choices is not None:
        choices = [float(c) for c in delta_l_choices]
        improved = True
        while improved and remaining() > 0:
            improved = False
            for k in range(n_steps):
                current = best_plates[k]
                for choice in choices:
                    if remaining() == 0:
                        break
                    if choice == current:
                        continue
                    trial = best_plates.copy()
                    trial[k] = choice
                    before = best_val
                    consider(best_etas, trial)
                    if best_val > before:
                        improved = True
    return ScheduleResult(
        etas=best_etas,
        delta_ls=best_plates,
        nm=best_val,
        n_evaluations=used,
        history=tuple(history),
    )
