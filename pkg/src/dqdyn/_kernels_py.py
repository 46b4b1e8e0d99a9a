"""Numpy implementation of the propagation kernels.

This is the fallback used when the compiled extension is unavailable. Both
implementations reduce over frequency nodes with the same fixed
stride-doubling pairwise tree, so they agree to rounding and runs are
reproducible regardless of which one is active.
"""

from __future__ import annotations

import numpy as np

IMPL = "numpy"


def _pairwise_reduce(buf: np.ndarray) -> np.ndarray:
    """Sum over axis 0 in place with a stride-doubling pairwise tree."""
    n = buf.shape[0]
    step = 1
    while step < n:
        buf[0 : n - step : 2 * step] += buf[step : n : 2 * step]
        step *= 2
    return buf[0]


def propagate_quadrature(cmats, thetas, xs, ws, rhos, want_maps):
    """Propagate states (and optionally maps) on a frequency grid.

    Per node the step unitary is diag(1, e^{i theta x}) @ C; states and
    superoperators are weighted node averages after every step.

    Returns (states, maps): states has shape (n_steps+1, n_states, 2, 2),
    maps has shape (n_steps+1, 4, 4) or is None.
    """
    cmats = np.ascontiguousarray(cmats, dtype=complex)
    thetas = np.asarray(thetas, dtype=float)
    xs = np.asarray(xs, dtype=float)
    ws = np.asarray(ws, dtype=float)
    rhos = np.ascontiguousarray(rhos, dtype=complex)
    n = cmats.shape[0]
    n_nodes = xs.size
    n_states = rhos.shape[0]

    states = np.empty((n + 1, n_states, 2, 2), dtype=complex)
    states[0] = rhos
    maps = None
    if want_maps:
        maps = np.empty((n + 1, 4, 4), dtype=complex)
        maps[0] = np.eye(4)

    u = np.broadcast_to(np.eye(2, dtype=complex), (n_nodes, 2, 2)).copy()
    for k in range(n):
        u = np.matmul(cmats[k], u)
        u[:, 1, :] *= np.exp(1j * thetas[k] * xs)[:, None]
        udag = u.conj().transpose(0, 2, 1)
        for r in range(n_states):
            contrib = np.matmul(np.matmul(u, rhos[r]), udag)
            contrib *= ws[:, None, None]
            states[k + 1, r] = _pairwise_reduce(contrib)
        if want_maps:
            kr = np.einsum("nab,ncd->nacbd", u.conj(), u).reshape(n_nodes, 4, 4)
            kr *= ws[:, None, None]
            maps[k + 1] = _pairwise_reduce(kr)
    return states, maps


def propagate_lattice(cmats, lifts, fvals, rhos, record, want_maps):
    """Propagate exactly on the commensurate phase lattice.

    The accumulated unitary is a polynomial sum_m z^m K_m in z = e^{i
    theta_base x} with 2x2 coefficients K_m; a plate of integer weight l
    shifts bottom rows by l, a control multiplies every coefficient.
    States/maps are contracted against f(theta_base * d) only at steps
    where ``record`` is set.

    Returns (states, maps, kcoefs) with states (n_recorded, n_states, 2, 2),
    maps (n_recorded, 4, 4) or None, kcoefs the final (M+1, 2, 2) array.
    """
    cmats = np.ascontiguousarray(cmats, dtype=complex)
    lifts = np.asarray(lifts, dtype=np.int64)
    fvals = np.asarray(fvals, dtype=complex)
    rhos = np.ascontiguousarray(rhos, dtype=complex)
    record = np.asarray(record, dtype=bool)
    n = cmats.shape[0]
    n_states = rhos.shape[0]
    total = int(lifts.sum())

    kcoefs = np.zeros((total + 1, 2, 2), dtype=complex)
    kcoefs[0] = np.eye(2)
    cur = 0

    # Only offsets with non-negligible coherence contribute to contractions.
    ds = np.nonzero(np.abs(fvals) > 1e-30)[0]

    n_rec = int(record.sum())
    states = np.empty((n_rec, n_states, 2, 2), dtype=complex)
    maps = np.empty((n_rec, 4, 4), dtype=complex) if want_maps else None
    pos = 0
    if record[0]:
        states[0] = rhos
        if want_maps:
            maps[0] = np.eye(4)
        pos = 1

    for k in range(n):
        view = kcoefs[: cur + 1]
        prod = np.matmul(cmats[k], view)
        lift = int(lifts[k])
        bottom = prod[:, 1, :].copy()
        kcoefs[: cur + 1, 0, :] = prod[:, 0, :]
        kcoefs[: cur + 1 + lift, 1, :] = 0.0
        kcoefs[lift : cur + 1 + lift, 1, :] = bottom
        cur += lift
        if record[k + 1]:
            _contract_states(kcoefs[: cur + 1], fvals, ds, rhos, states[pos])
            if want_maps:
                _contract_map(kcoefs[: cur + 1], fvals, ds, maps[pos])
            pos += 1
    return states, maps, kcoefs


def _contract_states(kc, fvals, ds, rhos, out):
    m_top = kc.shape[0]
    for r in range(rhos.shape[0]):
        acc = np.zeros((2, 2), dtype=complex)
        for d in ds:
            if d >= m_top:
                break
            block = np.einsum(
                "mab,bc,mec->ae", kc[d:], rhos[r], kc[: m_top - d].conj()
            )
            acc += fvals[d] * block
            if d > 0:
                acc += np.conj(fvals[d]) * block.conj().T
        out[r] = acc


def _contract_map(kc, fvals, ds, out):
    m_top = kc.shape[0]
    acc = np.zeros((4, 4), dtype=complex)
    for d in ds:
        if d >= m_top:
            break
        fwd = np.einsum("mab,mcd->acbd", kc[: m_top - d].conj(), kc[d:]).reshape(4, 4)
        acc += fvals[d] * fwd
        if d > 0:
            rev = np.einsum("mab,mcd->acbd", kc[d:].conj(), kc[: m_top - d]).reshape(
                4, 4
            )
            acc += np.conj(fvals[d]) * rev
    out[:] = acc
