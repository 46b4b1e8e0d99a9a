"""Qubit linear algebra: states, distances, superoperators, Choi tests.

Conventions used across the package:

* Density matrices are 2x2 complex numpy arrays in the H/V basis.
* Vectorization is column-stacking: ``vec(rho)[c * 2 + r] = rho[r, c]``,
  so a map ``rho -> U rho U^dag`` has superoperator ``kron(conj(U), U)``.
* The Choi matrix is unnormalized (trace 2 for a trace-preserving map).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ID2 = np.eye(2, dtype=complex)
PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
PAULI_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
PAULIS = (PAULI_X, PAULI_Y, PAULI_Z)

_SQRT2 = math.sqrt(2.0)

#: Basis kets: horizontal/vertical, diagonal/antidiagonal, circular.
KETS = {
    "H": np.array([1.0, 0.0], dtype=complex),
    "V": np.array([0.0, 1.0], dtype=complex),
    "D": np.array([1.0, 1.0], dtype=complex) / _SQRT2,
    "A": np.array([1.0, -1.0], dtype=complex) / _SQRT2,
    "R": np.array([1.0, 1.0j], dtype=complex) / _SQRT2,
    "L": np.array([1.0, -1.0j], dtype=complex) / _SQRT2,
}


@dataclass(frozen=True)
class Tolerances:
    """Numerical thresholds shared by validation, classification and tests."""

    hermiticity: float = 1e-12
    unit_trace: float = 1e-12
    psd_floor: float = -1e-12
    trace_preserving: float = 1e-10
    cp_floor: float = -1e-8
    p_expansion: float = 1e-9
    singular_rel: float = 1e-12
    backend_agreement: float = 1e-8
    increment_floor: float = 1e-12


DEFAULT_TOLS = Tolerances()


def ket(name: str) -> np.ndarray:
    """Return a named basis ket (one of H, V, D, A, R, L)."""
    try:
        return KETS[name].copy()
    except KeyError:
        raise ValueError(
            f"unknown state name {name!r}; expected one of {sorted(KETS)}"
        ) from None


def pure_density(psi: np.ndarray) -> np.ndarray:
    """Density matrix |psi><psi| of a (normalized) ket."""
    psi = np.asarray(psi, dtype=complex)
    norm = np.linalg.norm(psi)
    if not np.isfinite(norm) or abs(norm - 1.0) > 1e-9:
        raise ValueError(f"ket must be normalized, got |psi| = {norm}")
    return np.outer(psi, psi.conj())


def density(name: str) -> np.ndarray:
    """Density matrix of a named pure state."""
    return pure_density(ket(name))


def density_from_bloch(b) -> np.ndarray:
    """Density matrix (I + b . sigma) / 2 for a Bloch vector with |b| <= 1."""
    b = np.asarray(b, dtype=float)
    if b.shape != (3,):
        raise ValueError(f"Bloch vector must have shape (3,), got {b.shape}")
    r = float(np.linalg.norm(b))
    if not math.isfinite(r) or r > 1.0 + 1e-9:
        raise ValueError(f"Bloch vector must satisfy |b| <= 1, got |b| = {r}")
    rho = 0.5 * (ID2 + b[0] * PAULI_X + b[1] * PAULI_Y + b[2] * PAULI_Z)
    return rho


def bloch_vector(rho: np.ndarray) -> np.ndarray:
    """Bloch vector (tr(sigma_a rho)) of a 2x2 density matrix."""
    rho = np.asarray(rho, dtype=complex)
    return np.array([np.trace(p @ rho).real for p in PAULIS])


def validate_density(rho: np.ndarray, tols: Tolerances = DEFAULT_TOLS) -> np.ndarray:
    """Check Hermiticity, unit trace, positivity and finiteness of a 2x2 state.

    Returns the input as a complex array; raises ValueError on violation.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (2, 2):
        raise ValueError(f"density matrix must be 2x2, got shape {rho.shape}")
    if not np.all(np.isfinite(rho.view(float))):
        raise ValueError("density matrix has non-finite entries")
    herm = np.abs(rho - rho.conj().T).max()
    if herm > tols.hermiticity:
        raise ValueError(f"density matrix is not Hermitian (deviation {herm:.3e})")
    tr = rho[0, 0].real + rho[1, 1].real
    if abs(tr - 1.0) > tols.unit_trace:
        raise ValueError(f"density matrix trace is {tr!r}, expected 1")
    lo, _ = herm_eigvals_2x2(rho)
    if lo < tols.psd_floor:
        raise ValueError(f"density matrix has negative eigenvalue {lo:.3e}")
    return rho


def herm_eigvals_2x2(m: np.ndarray) -> tuple[float, float]:
    """Eigenvalues (ascending) of a 2x2 Hermitian matrix, in closed form.

    Only the Hermitian part of ``m`` enters (off-diagonal magnitude and real
    diagonal), so tiny anti-Hermitian noise does not leak into the result.
    """
    a = m[0, 0].real
    d = m[1, 1].real
    b = 0.5 * (m[0, 1] + np.conj(m[1, 0]))
    mean = 0.5 * (a + d)
    disc = math.hypot(0.5 * (a - d), abs(b))
    return mean - disc, mean + disc


def trace_distance(a: np.ndarray, b: np.ndarray, *, validate: bool = True) -> float:
    """Trace distance ``0.5 * ||a - b||_1`` between two qubit states."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if validate:
        validate_density(a)
        validate_density(b)
    lo, hi = herm_eigvals_2x2(a - b)
    return 0.5 * (abs(lo) + abs(hi))


# ---------------------------------------------------------------------------
# Superoperators (column-stacking convention)
# ---------------------------------------------------------------------------


def vec(rho: np.ndarray) -> np.ndarray:
    """Column-stack a 2x2 matrix into a length-4 vector."""
    return np.asarray(rho, dtype=complex).T.reshape(4)


def unvec(v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`vec`."""
    return np.asarray(v, dtype=complex).reshape(2, 2).T


def superoperator_from_unitary(u: np.ndarray) -> np.ndarray:
    """4x4 superoperator of the conjugation ``rho -> u rho u^dag``."""
    u = np.asarray(u, dtype=complex)
    return np.kron(u.conj(), u)


def apply_superoperator(s: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Apply a 4x4 superoperator to a 2x2 matrix."""
    return unvec(np.asarray(s, dtype=complex) @ vec(rho))


def choi(s: np.ndarray) -> np.ndarray:
    """Choi matrix of a superoperator (reshuffle; involutive).

    ``choi(choi(s)) == s``, so the same function converts back.
    """
    s = np.asarray(s, dtype=complex)
    if s.shape != (4, 4):
        raise ValueError(f"superoperator must be 4x4, got shape {s.shape}")
    return s.reshape(2, 2, 2, 2).transpose(3, 1, 2, 0).reshape(4, 4)


def min_choi_eigenvalue(s: np.ndarray) -> float:
    """Smallest eigenvalue of the Choi matrix; >= 0 iff the map is CP."""
    c = choi(s)
    c = 0.5 * (c + c.conj().T)
    return float(np.linalg.eigvalsh(c)[0])


def is_trace_preserving(s: np.ndarray, tol: float = DEFAULT_TOLS.trace_preserving) -> bool:
    """Whether the map preserves the trace of every input."""
    s = np.asarray(s, dtype=complex)
    row = s[0] + s[3]
    target = np.array([1.0, 0.0, 0.0, 1.0])
    return bool(np.abs(row - target).max() <= tol)


def bloch_affine(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Affine Bloch form of a map: returns (T, t) with b -> T b + t.

    T is the real 3x3 matrix acting on Bloch vectors; t is the translation
    (zero for unital maps).
    """
    s = np.asarray(s, dtype=complex)
    t_mat = np.empty((3, 3))
    image_id = apply_superoperator(s, ID2)
    shift = np.array([0.5 * np.trace(p @ image_id).real for p in PAULIS])
    for b_idx, pb in enumerate(PAULIS):
        image = apply_superoperator(s, pb)
        for a_idx, pa in enumerate(PAULIS):
            t_mat[a_idx, b_idx] = 0.5 * np.trace(pa @ image).real
    return t_mat, shift
