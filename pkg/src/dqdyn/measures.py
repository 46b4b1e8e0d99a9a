"""Distance series, memory witnesses and divisibility classification.

The trace-distance series D(n) of a state pair is the basic observable.
Its positive increments sum to the standard lower bound N on the memory of
the evolution; a step that increases any pair's distance cannot be a
one-Bloch-ball contraction, which ties N > 0 to the per-step map tests.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import engine, qmath
from .protocol import control_eigenvectors


@dataclass(frozen=True)
class DistanceSeries:
    """Trace distance per recorded step for one state pair."""

    steps: tuple[int, ...]
    values: np.ndarray

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)


@dataclass(frozen=True)
class NmReport:
    """Sum of positive distance increments and where they happened."""

    total: float
    cumulative: np.ndarray
    contributing_steps: tuple[int, ...]


@dataclass(frozen=True)
class PairOptimum:
    """Best antipodal pure pair found for the memory witness."""

    nm: float
    direction: np.ndarray
    states: np.ndarray
    values: np.ndarray


class StepClass(str, enum.Enum):
    CP_DIVISIBLE = "CP_DIVISIBLE"
    P_ONLY = "P_ONLY"
    NON_P = "NON_P"
    SINGULAR = "SINGULAR"


@dataclass(frozen=True)
class DivisibilityReport:
    """Per-step classification of the connecting maps of a protocol."""

    steps: tuple[int, ...]
    labels: tuple[StepClass, ...]
    min_choi: np.ndarray
    expansion: np.ndarray
    condition_numbers: np.ndarray
    rel_min_sv: np.ndarray

    def label_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for lab in self.labels:
            out[lab.value] = out.get(lab.value, 0) + 1
        return out


def distance_series(traj: engine.Trajectory, i: int = 0, j: int = 1) -> DistanceSeries:
    """Trace distance between two of the trajectory's states, per step."""
    if traj.states.shape[1] <= max(i, j):
        raise ValueError(
            f"trajectory carries {traj.states.shape[1]} states, need indices {i}, {j}"
        )
    values = np.array(
        [
            qmath.trace_distance(a, b, validate=False)
            for a, b in zip(traj.states[:, i], traj.states[:, j])
        ]
    )
    return DistanceSeries(steps=traj.steps, values=values)


def blp_lower_bound(
    series: DistanceSeries,
    increment_floor: float = qmath.DEFAULT_TOLS.increment_floor,
) -> NmReport:
    """Sum the positive increments of a full distance series."""
    if series.steps != tuple(range(len(series.steps))):
        raise ValueError("memory accounting needs a series recorded at every step")
    inc = series.increments
    keep = inc > increment_floor
    cumulative = np.concatenate([[0.0], np.cumsum(np.where(keep, inc, 0.0))])
    contributing = tuple(int(s) for s in np.nonzero(keep)[0] + 1)
    return NmReport(
        total=float(cumulative[-1]),
        cumulative=cumulative,
        contributing_steps=contributing,
    )


def pair_memory(
    protocol,
    model=None,
    pair=None,
    *,
    backend: str = "lattice",
    increment_floor: float = qmath.DEFAULT_TOLS.increment_floor,
    **kwargs,
) -> NmReport:
    """Memory witness of one state pair under a protocol."""
    states = None if pair is None else np.stack(pair)
    traj = engine.evolve(protocol, model, states, backend=backend, **kwargs)
    return blp_lower_bound(distance_series(traj), increment_floor)


def hemisphere_directions(resolution: int) -> np.ndarray:
    """Unit vectors covering the closed upper hemisphere, (k, 3).

    Polar angle takes resolution+1 values in [0, pi/2], azimuth 2*resolution
    values in [0, 2 pi); antipodal pairs are equivalent so this covers every
    axis. The pole (0, 0, 1) is always included.
    """
    if resolution < 1:
        raise ValueError(f"resolution must be >= 1, got {resolution}")
    polar = np.linspace(0.0, 0.5 * math.pi, resolution + 1)
    azimuth = np.linspace(0.0, 2.0 * math.pi, 2 * resolution, endpoint=False)
    dirs = [np.array([0.0, 0.0, 1.0])]
    for th in polar[1:]:
        st, ct = math.sin(th), math.cos(th)
        for ph in azimuth:
            dirs.append(np.array([st * math.cos(ph), st * math.sin(ph), ct]))
    return np.stack(dirs)


def _bloch_t_matrices(maps: np.ndarray) -> np.ndarray:
    """(n, 3, 3) Bloch matrices of a stack of 4x4 superoperators."""
    out = np.empty((maps.shape[0], 3, 3))
    for k in range(maps.shape[0]):
        out[k], _ = qmath.bloch_affine(maps[k])
    return out


def optimize_pair(
    protocol,
    model=None,
    *,
    resolution: int = 32,
    backend: str = "lattice",
    increment_floor: float = qmath.DEFAULT_TOLS.increment_floor,
    **kwargs,
) -> PairOptimum:
    """Maximize the memory witness over antipodal pure pairs.

    The distance of the antipodal pair along axis v is |T_n v| where T_n is
    the Bloch matrix of the n-step map, so one evolution with maps covers
    every axis on the hemisphere grid.
    """
    traj = engine.evolve(protocol, model, backend=backend, want_maps=True, **kwargs)
    tmats = _bloch_t_matrices(traj.maps)
    dirs = hemisphere_directions(resolution)
    dists = np.linalg.norm(np.einsum("nab,kb->nka", tmats, dirs), axis=2)
    inc = np.diff(dists, axis=0)
    nm = np.where(inc > increment_floor, inc, 0.0).sum(axis=0)
    best = int(np.argmax(nm))
    direction = dirs[best]
    states = np.stack(
        [qmath.density_from_bloch(direction), qmath.density_from_bloch(-direction)]
    )
    return PairOptimum(
        nm=float(nm[best]),
        direction=direction,
        states=states,
        values=dists[:, best],
    )


def classify_divisibility(
    protocol,
    model=None,
    *,
    resolution: int = 24,
    backend: str = "lattice",
    tols: qmath.Tolerances = qmath.DEFAULT_TOLS,
    probe_pair=None,
    **kwargs,
) -> DivisibilityReport:
    """Classify every step's connecting map as CP, P-only, non-P or singular.

    The P test takes the largest Bloch expansion over a hemisphere grid plus
    the evolved difference directions of a probe pair (default H/V), so a
    step that grows that pair's distance is always caught expanding.
    """
    states = None if probe_pair is None else np.stack(probe_pair)
    traj = engine.evolve(
        protocol, model, states, backend=backend, want_maps=True, **kwargs
    )
    if not traj.is_full:
        raise ValueError("classification needs maps recorded at every step")
    n = traj.n_steps
    probes = hemisphere_directions(resolution)
    # Difference directions of the evolved probe pair, one per step.
    diffs = np.array(
        [
            qmath.bloch_vector(traj.states[k, 0]) - qmath.bloch_vector(traj.states[k, 1])
            for k in range(n + 1)
        ]
    )
    labels: list[StepClass] = []
    min_choi = np.full(n, np.nan)
    expansion = np.full(n, np.nan)
    conds = np.full(n, np.inf)
    rel_sv = np.zeros(n)
    for k in range(1, n + 1):
        inter = engine.intermediate_map(traj.maps[k], traj.maps[k - 1], tols)
        conds[k - 1] = inter.condition_number
        rel_sv[k - 1] = inter.rel_min_singular_value
        if inter.singular:
            labels.append(StepClass.SINGULAR)
            continue
        step_probes = probes
        norm = np.linalg.norm(diffs[k - 1])
        if norm > 1e-12:
            step_probes = np.vstack([probes, diffs[k - 1] / norm])
        tmat, _ = qmath.bloch_affine(inter.matrix)
        expansion[k - 1] = float(
            np.linalg.norm(step_probes @ tmat.T, axis=1).max()
        )
        min_choi[k - 1] = qmath.min_choi_eigenvalue(inter.matrix)
        if min_choi[k - 1] >= tols.cp_floor:
            labels.append(StepClass.CP_DIVISIBLE)
        elif expansion[k - 1] <= 1.0 + tols.p_expansion:
            labels.append(StepClass.P_ONLY)
        else:
            labels.append(StepClass.NON_P)
    return DivisibilityReport(
        steps=tuple(range(1, n + 1)),
        labels=tuple(labels),
        min_choi=min_choi,
        expansion=expansion,
        condition_numbers=conds,
        rel_min_sv=rel_sv,
    )


def control_basis_offdiag(rho: np.ndarray, eta: float) -> float:
    """Magnitude of the state's off-diagonal element in the control eigenbasis."""
    v = control_eigenvectors(eta)
    rotated = v.conj().T @ np.asarray(rho, dtype=complex) @ v
    return float(abs(rotated[0, 1]))
