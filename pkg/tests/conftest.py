"""Shared fixtures and random-object helpers for the test suite."""

import math

import numpy as np
import pytest

from dqdyn import default_model


@pytest.fixture(scope="session")
def model():
    """The package-default single-Gaussian spectral model."""
    return default_model()


@pytest.fixture
def rng():
    """Fresh deterministic generator per test."""
    return np.random.default_rng(20260823)


def random_unitary(rng) -> np.ndarray:
    """Haar-ish random 2x2 unitary via QR of a complex Gaussian."""
    z = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_density(rng, pure: bool = False) -> np.ndarray:
    """Random qubit state drawn uniformly-ish inside (or on) the Bloch ball."""
    b = rng.normal(size=3)
    b /= np.linalg.norm(b)
    if not pure:
        b *= rng.uniform(0.0, 1.0) ** (1.0 / 3.0)
    from dqdyn import qmath

    return qmath.density_from_bloch(b)


def gaussian_mag(delta_l: float, n: int = 1, s: float = 2.55 / 800.0) -> float:
    """Closed-form |f| of a single Gaussian line after n plates of delta_l."""
    return math.exp(-0.5 * (s * 2.0 * math.pi * delta_l * n) ** 2)
