"""Step schedules: control unitaries interleaved with dephasing plates.

One step applies the control first, then the plate. The control

    C(eta) = sqrt(eta) sigma_z + sqrt(1 - eta) sigma_x

is Hermitian and unitary for every eta in [0, 1]; eta = 1 is pure sigma_z,
eta = 0 is pure sigma_x (bit flip), eta = 1/2 is the Hadamard gate. In the
optical realization eta = cos^2(2 phi) for a half-wave plate tilted by phi.

A plate delays the V component by ``delta_l`` carrier wavelengths, i.e. it
applies ``diag(1, exp(i * 2 pi * delta_l * x))`` at scaled frequency x.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: Birefringent index contrast of the quartz plates used for the reference runs.
QUARTZ_DELTA_N = 0.008995


def control_matrix(eta: float) -> np.ndarray:
    """2x2 control unitary for a given mixing parameter eta in [0, 1]."""
    if not (0.0 <= eta <= 1.0):
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    a = math.sqrt(eta)
    b = math.sqrt(1.0 - eta)
    return np.array([[a, b], [b, -a]], dtype=complex)


def control_axis(eta: float) -> np.ndarray:
    """Bloch axis of the control: C(eta) = n . sigma with n this unit vector."""
    if not (0.0 <= eta <= 1.0):
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    return np.array([math.sqrt(1.0 - eta), 0.0, math.sqrt(eta)])


def control_eigenvectors(eta: float) -> np.ndarray:
    """Unitary whose columns are the +1 / -1 eigenvectors of C(eta)."""
    nx, _, nz = control_axis(eta)
    beta = math.atan2(nx, nz)
    c, s = math.cos(0.5 * beta), math.sin(0.5 * beta)
    return np.array([[c, -s], [s, c]], dtype=complex)


def eta_from_angle(angle_deg: float) -> float:
    """Mixing parameter of a half-wave plate tilted by angle_deg: cos^2(2 phi)."""
    return math.cos(2.0 * math.radians(angle_deg)) ** 2


def angle_from_eta(eta: float) -> float:
    """Tilt angle in degrees realizing a given eta; inverse of eta_from_angle."""
    if not (0.0 <= eta <= 1.0):
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    return 0.5 * math.degrees(math.acos(math.sqrt(eta)))


def delta_l_from_thickness(
    thickness_mm: float,
    delta_n: float = QUARTZ_DELTA_N,
    lambda0_nm: float = 800.0,
) -> float:
    """Path-length difference in carrier wavelengths of a birefringent plate."""
    if thickness_mm < 0.0:
        raise ValueError(f"thickness must be non-negative, got {thickness_mm}")
    return delta_n * thickness_mm * 1e6 / lambda0_nm


@dataclass(frozen=True)
class ControlSpec:
    eta: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.eta) and 0.0 <= self.eta <= 1.0):
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")

    def matrix(self) -> np.ndarray:
        return control_matrix(self.eta)


@dataclass(frozen=True)
class PlateSpec:
    """Dephasing plate with path-length difference in units of lambda0."""

    delta_l: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.delta_l) and self.delta_l >= 0.0):
            raise ValueError(f"delta_l must be non-negative, got {self.delta_l}")

    @classmethod
    def from_thickness(
        cls,
        thickness_mm: float,
        delta_n: float = QUARTZ_DELTA_N,
        lambda0_nm: float = 800.0,
    ) -> "PlateSpec":
        return cls(delta_l_from_thickness(thickness_mm, delta_n, lambda0_nm))


@dataclass(frozen=True)
class Step:
    control: ControlSpec
    plate: PlateSpec


@dataclass(frozen=True)
class Protocol:
    """Ordered sequence of (control, plate) steps."""

    steps: tuple[Step, ...]

    def __post_init__(self) -> None:
        if not self.steps:
            raise ValueError("protocol needs at least one step")

    @classmethod
    def uniform(cls, eta: float, delta_l: float, n_steps: int) -> "Protocol":
        """The same control and plate repeated n_steps times."""
        if n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {n_steps}")
        step = Step(ControlSpec(eta), PlateSpec(delta_l))
        return cls((step,) * n_steps)

    @classmethod
    def from_arrays(cls, etas, delta_ls) -> "Protocol":
        etas = np.asarray(etas, dtype=float)
        delta_ls = np.asarray(delta_ls, dtype=float)
        if etas.shape != delta_ls.shape or etas.ndim != 1:
            raise ValueError("etas and delta_ls must be 1-d arrays of equal length")
        return cls(
            tuple(Step(ControlSpec(e), PlateSpec(d)) for e, d in zip(etas, delta_ls))
        )

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    @property
    def etas(self) -> np.ndarray:
        return np.array([s.control.eta for s in self.steps])

    @property
    def delta_ls(self) -> np.ndarray:
        return np.array([s.plate.delta_l for s in self.steps])

    def control_matrices(self) -> np.ndarray:
        """(n_steps, 2, 2) array of control unitaries."""
        return np.stack([s.control.matrix() for s in self.steps])

    def thetas(self) -> np.ndarray:
        """Per-step plate phases 2 pi delta_l (per unit scaled frequency)."""
        return 2.0 * math.pi * self.delta_ls
