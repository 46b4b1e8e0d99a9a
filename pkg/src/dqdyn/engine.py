"""Trajectory evolution with two interchangeable backends.

Both backends average the conditional step unitary

    U_x(step) = diag(1, exp(i theta x)) @ C(eta),    theta = 2 pi delta_l,

over the scaled frequency x of the spectral model; they differ only in how
the average is taken:

* ``quadrature``: a fixed frequency grid; approximate, works for any plate
  values, guarded by a Nyquist check on the accumulated phase.
* ``lattice``: exact contraction of the phase polynomial of the accumulated
  unitary; requires plate values with rational ratios so all phases live on
  a common lattice ``m * theta_base``.

Superoperators use the column-stacking convention of :mod:`dqdyn.qmath`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import kernels, qmath
from .environment import FrequencyGrid, SpectralModel, build_grid, default_model
from .protocol import Protocol

BACKENDS = ("lattice", "quadrature")

#: Largest tolerable (node spacing) x (accumulated phase) for the quadrature
#: backend; above this the discrete average aliases.
NYQUIST_LIMIT = math.pi / 4.0

#: Relative tolerance when matching plate ratios to rationals.
COMMENSURATE_RTOL = 1e-9


class BackendError(ValueError):
    """A backend cannot run the requested protocol as configured."""


class NyquistError(BackendError):
    """Frequency grid too coarse for the accumulated plate phase."""


class CommensurabilityError(BackendError):
    """Plate values have no common lattice within tolerance."""


class LatticeSpanError(BackendError):
    """The integer lattice span exceeds the configured cap."""


@dataclass(frozen=True)
class Trajectory:
    """States (and optionally n-step maps) recorded along a protocol."""

    protocol: Protocol
    model: SpectralModel
    backend: str
    steps: tuple[int, ...]
    states: np.ndarray
    maps: np.ndarray | None

    @property
    def n_steps(self) -> int:
        return self.protocol.n_steps

    @property
    def is_full(self) -> bool:
        return self.steps == tuple(range(self.n_steps + 1))

    def _index(self, step: int) -> int:
        try:
            return self.steps.index(step)
        except ValueError:
            raise KeyError(f"step {step} was not recorded (steps: {self.steps})") from None

    def state(self, step: int, which: int = 0) -> np.ndarray:
        return self.states[self._index(step), which]

    def map_at(self, step: int) -> np.ndarray:
        if self.maps is None:
            raise ValueError("trajectory was computed without maps")
        return self.maps[self._index(step)]


@dataclass(frozen=True)
class PhasePolynomial:
    """Accumulated unitary as sum_m z^m K_m with z = exp(i theta_base x)."""

    theta_base: float
    lifts: np.ndarray
    coefficients: np.ndarray

    def isometry_defect(self) -> float:
        """Max deviation of sum_m K_m^dag K_m from the identity."""
        k = self.coefficients
        gram = np.einsum("mca,mcb->ab", k.conj(), k)
        return float(np.abs(gram - np.eye(2)).max())

    def evaluate(self, x: float) -> np.ndarray:
        """The accumulated unitary at scaled frequency x."""
        m = np.arange(self.coefficients.shape[0])
        z = np.exp(1j * self.theta_base * x * m)
        return np.einsum("m,mab->ab", z, self.coefficients)


@dataclass(frozen=True)
class IntermediateMap:
    """Map from step m to step n, or a singularity report instead."""

    matrix: np.ndarray | None
    singular: bool
    condition_number: float
    rel_min_singular_value: float


def _prepare_states(states) -> np.ndarray:
    if states is None:
        arr = np.stack([qmath.density("H"), qmath.density("V")])
    else:
        arr = np.asarray(states, dtype=complex)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3 or arr.shape[1:] != (2, 2):
            raise ValueError(f"states must have shape (r, 2, 2), got {arr.shape}")
        for rho in arr:
            qmath.validate_density(rho)
    return arr


def _prepare_record(record, n_steps: int) -> np.ndarray:
    mask = np.zeros(n_steps + 1, dtype=np.uint8)
    if record is None:
        mask[:] = 1
        return mask
    mask[0] = 1
    for step in record:
        step = int(step)
        if not 0 <= step <= n_steps:
            raise ValueError(f"recorded step {step} outside [0, {n_steps}]")
        mask[step] = 1
    return mask


def commensurate_lifts(delta_ls, cap: int = 10000) -> tuple[float, np.ndarray]:
    """Common plate base and integer weights: delta_l[i] = lifts[i] * base.

    Raises CommensurabilityError if the ratios are not rational within
    tolerance, LatticeSpanError if the total integer span exceeds cap.
    """
    vals = np.asarray(delta_ls, dtype=float)
    nonzero = vals[vals > 0.0]
    if nonzero.size == 0:
        return 0.0, np.zeros(vals.size, dtype=np.int64)
    ref = float(nonzero[0])
    denom = 1
    for v in nonzero:
        ratio = float(v) / ref
        frac = Fraction(ratio).limit_denominator(max(2, cap))
        if abs(ratio - float(frac)) > COMMENSURATE_RTOL * max(1.0, ratio):
            raise CommensurabilityError(
                f"plate value {v} is incommensurate with {ref} "
                f"(ratio {ratio} has no rational form within {COMMENSURATE_RTOL}); "
                "use the quadrature backend for incommensurate plates"
            )
        denom = denom * frac.denominator // math.gcd(denom, frac.denominator)
    base = ref / denom
    lifts = np.rint(vals / base).astype(np.int64)
    total = int(lifts.sum())
    if total > cap:
        raise LatticeSpanError(
            f"integer lattice span {total} exceeds cap {cap}; raise the cap "
            "or use the quadrature backend"
        )
    return base, lifts


def required_nodes(grid: FrequencyGrid, theta_total: float) -> int:
    """Smallest odd node count keeping spacing * theta_total below the limit."""
    span = float(grid.xs[-1] - grid.xs[0])
    needed = int(math.ceil(span * theta_total / NYQUIST_LIMIT)) + 1
    if needed % 2 == 0:
        needed += 1
    return max(needed, 3)


def evolve_quadrature(
    protocol: Protocol,
    model: SpectralModel | None = None,
    states=None,
    *,
    grid: FrequencyGrid | None = None,
    nodes: int = 4097,
    span_sigmas: float = 8.0,
    want_maps: bool = False,
    record=None,
) -> Trajectory:
    """Evolve on a frequency grid; approximate but unconditional on plates."""
    model = model if model is not None else default_model()
    if grid is None:
        grid = build_grid(model, n_nodes=nodes, span_sigmas=span_sigmas)
    rhos = _prepare_states(states)
    thetas = protocol.thetas()
    theta_total = float(np.abs(thetas).sum())
    if grid.max_spacing * theta_total >= NYQUIST_LIMIT:
        raise NyquistError(
            f"grid spacing {grid.max_spacing:.3e} is too coarse for the "
            f"accumulated plate phase {theta_total:.6g}: need at least "
            f"{required_nodes(grid, theta_total)} nodes over this span, "
            f"have {grid.n_nodes}"
        )
    states_all, maps_all = kernels.propagate_quadrature(
        protocol.control_matrices(), thetas, grid.xs, grid.weights, rhos, want_maps
    )
    mask = _prepare_record(record, protocol.n_steps)
    idx = np.nonzero(mask)[0]
    return Trajectory(
        protocol=protocol,
        model=model,
        backend="quadrature",
        steps=tuple(int(i) for i in idx),
        states=states_all[idx],
        maps=maps_all[idx] if want_maps else None,
    )


def evolve_lattice(
    protocol: Protocol,
    model: SpectralModel | None = None,
    states=None,
    *,
    cap: int = 10000,
    want_maps: bool = False,
    record=None,
) -> Trajectory:
    """Evolve exactly on the commensurate phase lattice."""
    model = model if model is not None else default_model()
    rhos = _prepare_states(states)
    base, lifts = commensurate_lifts(protocol.delta_ls, cap=cap)
    theta_base = 2.0 * math.pi * base
    total = int(lifts.sum())
    fvals = np.atleast_1d(model.coherence(theta_base * np.arange(total + 1)))
    mask = _prepare_record(record, protocol.n_steps)
    states_rec, maps_rec, _ = kernels.propagate_lattice(
        protocol.control_matrices(), lifts, fvals, rhos, mask, want_maps
    )
    idx = np.nonzero(mask)[0]
    return Trajectory(
        protocol=protocol,
        model=model,
        backend="lattice",
        steps=tuple(int(i) for i in idx),
        states=states_rec,
        maps=maps_rec,
    )


def evolve(
    protocol: Protocol,
    model: SpectralModel | None = None,
    states=None,
    *,
    backend: str = "lattice",
    grid: FrequencyGrid | None = None,
    nodes: int = 4097,
    span_sigmas: float = 8.0,
    lattice_cap: int = 10000,
    want_maps: bool = False,
    record=None,
) -> Trajectory:
    """Evolve with the named backend ('lattice' or 'quadrature')."""
    if backend == "lattice":
        return evolve_lattice(
            protocol, model, states, cap=lattice_cap, want_maps=want_maps, record=record
        )
    if backend == "quadrature":
        return evolve_quadrature(
            protocol,
            model,
            states,
            grid=grid,
            nodes=nodes,
            span_sigmas=span_sigmas,
            want_maps=want_maps,
            record=record,
        )
    raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")


def backend_agreement(a: Trajectory, b: Trajectory) -> float:
    """Largest state-entry deviation between two trajectories."""
    if a.steps != b.steps:
        raise ValueError("trajectories recorded different steps")
    return float(np.abs(a.states - b.states).max())


def phase_polynomial(protocol: Protocol, cap: int = 10000) -> PhasePolynomial:
    """Coefficients of the accumulated unitary on the plate lattice."""
    base, lifts = commensurate_lifts(protocol.delta_ls, cap=cap)
    total = int(lifts.sum())
    mask = np.zeros(protocol.n_steps + 1, dtype=np.uint8)
    mask[0] = 1
    dummy = np.stack([qmath.density("H")])
    _, _, kcoefs = kernels.propagate_lattice(
        protocol.control_matrices(),
        lifts,
        np.zeros(total + 1, dtype=complex),
        dummy,
        mask,
        False,
    )
    return PhasePolynomial(
        theta_base=2.0 * math.pi * base, lifts=lifts, coefficients=kcoefs
    )


def superoperator_at(
    protocol: Protocol,
    model: SpectralModel | None = None,
    step: int | None = None,
    *,
    backend: str = "lattice",
    **kwargs,
) -> np.ndarray:
    """The n-step map at a given step (default: after the whole protocol)."""
    step = protocol.n_steps if step is None else step
    traj = evolve(
        protocol, model, backend=backend, want_maps=True, record=[step], **kwargs
    )
    return traj.map_at(step)


def intermediate_map(
    later: np.ndarray,
    earlier: np.ndarray,
    tols: qmath.Tolerances = qmath.DEFAULT_TOLS,
) -> IntermediateMap:
    """Connecting map later = M @ earlier, or a singularity flag.

    The earlier map is inverted only when its smallest relative singular
    value clears ``tols.singular_rel``; otherwise no matrix is fabricated.
    """
    later = np.asarray(later, dtype=complex)
    earlier = np.asarray(earlier, dtype=complex)
    svals = np.linalg.svd(earlier, compute_uv=False)
    rel = float(svals[-1] / svals[0]) if svals[0] > 0.0 else 0.0
    cond = float(svals[0] / svals[-1]) if svals[-1] > 0.0 else math.inf
    if rel < tols.singular_rel:
        return IntermediateMap(
            matrix=None, singular=True, condition_number=cond, rel_min_singular_value=rel
        )
    matrix = later @ np.linalg.inv(earlier)
    return IntermediateMap(
        matrix=matrix, singular=False, condition_number=cond, rel_min_singular_value=rel
    )
