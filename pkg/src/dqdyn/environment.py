"""Spectral environment: Gaussian mixtures in wavelength and their coherence.

The environment of a step is the photon's frequency. Internally everything
is dimensionless: frequencies are expressed as ``x = omega / omega0`` where
``omega0 = 2 pi c / lambda0`` is the carrier of the model, and a plate of
path-length difference ``delta_l`` (in units of lambda0) accumulates phase
``theta = 2 pi delta_l`` per unit ``x``.

The coherence function (characteristic function of the spectral density)

    f(theta) = sum_j w_j exp(i x_j theta - (s_j theta)^2 / 2)

is all the dynamics ever needs of the spectrum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT = 299792458.0  # m / s

#: sigma = FWHM_TO_SIGMA * full width at half maximum, for a Gaussian.
FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))

DEFAULT_LAMBDA0_NM = 800.0
DEFAULT_SIGMA_NM = 2.55


@dataclass(frozen=True)
class SpectralComponent:
    """One Gaussian line: relative weight, center and width in nanometres."""

    weight: float
    center_nm: float
    sigma_nm: float

    def __post_init__(self) -> None:
        if not (self.weight > 0.0 and math.isfinite(self.weight)):
            raise ValueError(f"component weight must be positive, got {self.weight}")
        if not (self.center_nm > 0.0 and math.isfinite(self.center_nm)):
            raise ValueError(f"component center must be positive, got {self.center_nm}")
        if not (self.sigma_nm > 0.0 and math.isfinite(self.sigma_nm)):
            raise ValueError(f"component width must be positive, got {self.sigma_nm}")


@dataclass(frozen=True)
class SpectralModel:
    """Mixture of Gaussian spectral lines referenced to a carrier wavelength."""

    lambda0_nm: float
    components: tuple[SpectralComponent, ...]

    def __post_init__(self) -> None:
        if not (self.lambda0_nm > 0.0 and math.isfinite(self.lambda0_nm)):
            raise ValueError(f"carrier wavelength must be positive, got {self.lambda0_nm}")
        if not self.components:
            raise ValueError("spectral model needs at least one component")
        total = sum(c.weight for c in self.components)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"component weights must sum to 1, got {total!r}")

    @classmethod
    def single_gaussian(
        cls,
        lambda0_nm: float = DEFAULT_LAMBDA0_NM,
        sigma_nm: float | None = None,
        fwhm_nm: float | None = None,
    ) -> "SpectralModel":
        """Single line centered on the carrier, width given as sigma or FWHM."""
        if (sigma_nm is None) == (fwhm_nm is None):
            raise ValueError("give exactly one of sigma_nm or fwhm_nm")
        if sigma_nm is None:
            sigma_nm = fwhm_nm * FWHM_TO_SIGMA
        return cls(lambda0_nm, (SpectralComponent(1.0, lambda0_nm, sigma_nm),))

    @property
    def omega0(self) -> float:
        """Carrier angular frequency in rad/s."""
        return 2.0 * math.pi * SPEED_OF_LIGHT / (self.lambda0_nm * 1e-9)

    def scaled_components(self) -> list[tuple[float, float, float]]:
        """(weight, center, width) per component in carrier units x = omega/omega0."""
        out = []
        for c in self.components:
            x = self.lambda0_nm / c.center_nm
            s = c.sigma_nm * self.lambda0_nm / c.center_nm**2
            out.append((c.weight, x, s))
        return out

    def coherence(self, theta):
        """Characteristic function at dimensionless phase theta (scalar or array)."""
        theta = np.asarray(theta, dtype=float)
        total = np.zeros(theta.shape, dtype=complex)
        for w, x, s in self.scaled_components():
            total += w * np.exp(1j * x * theta - 0.5 * (s * theta) ** 2)
        return total if total.shape else complex(total)

    def characteristic(self, tau):
        """Characteristic function at a physical delay tau in seconds."""
        return self.coherence(self.omega0 * np.asarray(tau, dtype=float))


def default_model() -> SpectralModel:
    return SpectralModel.single_gaussian(DEFAULT_LAMBDA0_NM, sigma_nm=DEFAULT_SIGMA_NM)


@dataclass(frozen=True)
class FrequencyGrid:
    """Quadrature nodes (in carrier units) with normalized weights."""

    xs: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        xs = np.asarray(self.xs, dtype=float)
        ws = np.asarray(self.weights, dtype=float)
        if xs.ndim != 1 or xs.shape != ws.shape:
            raise ValueError("nodes and weights must be 1-d arrays of equal length")
        if xs.size < 3:
            raise ValueError("grid needs at least 3 nodes")
        if not np.all(np.diff(xs) > 0.0):
            raise ValueError("grid nodes must be strictly increasing")
        if abs(ws.sum() - 1.0) > 1e-9:
            raise ValueError(f"grid weights must sum to 1, got {ws.sum()!r}")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "weights", ws)

    @property
    def n_nodes(self) -> int:
        return self.xs.size

    @property
    def max_spacing(self) -> float:
        return float(np.diff(self.xs).max())

    def coherence(self, theta):
        """Discrete estimate sum_k w_k exp(i x_k theta) of the coherence."""
        theta = np.asarray(theta, dtype=float)
        phases = np.exp(1j * np.multiply.outer(theta, self.xs))
        total = phases @ self.weights
        return total if total.shape else complex(total)


def build_grid(
    model: SpectralModel,
    n_nodes: int = 4097,
    span_sigmas: float = 8.0,
) -> FrequencyGrid:
    """Uniform trapezoid grid covering every component out to span_sigmas widths.

    Node count must be odd so that a symmetric single line keeps its center
    on a node. Weights are the trapezoid-weighted spectral density,
    renormalized to sum to exactly 1.
    """
    if n_nodes < 3 or n_nodes % 2 == 0:
        raise ValueError(f"n_nodes must be odd and >= 3, got {n_nodes}")
    if not (span_sigmas > 0.0 and math.isfinite(span_sigmas)):
        raise ValueError(f"span_sigmas must be positive, got {span_sigmas}")
    scaled = model.scaled_components()
    lo = min(x - span_sigmas * s for _, x, s in scaled)
    hi = max(x + span_sigmas * s for _, x, s in scaled)
    xs = np.linspace(lo, hi, n_nodes)
    dens = np.zeros(n_nodes)
    for w, x, s in scaled:
        dens += w / (s * math.sqrt(2.0 * math.pi)) * np.exp(-0.5 * ((xs - x) / s) ** 2)
    coeff = np.full(n_nodes, xs[1] - xs[0])
    coeff[0] *= 0.5
    coeff[-1] *= 0.5
    ws = dens * coeff
    ws /= ws.sum()
    return FrequencyGrid(xs, ws)
