# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled propagation kernels.

Semantics mirror _kernels_py exactly; the frequency-node reduction uses the
same stride-doubling pairwise tree so both implementations agree to rounding.
"""

import numpy as np

from libc.math cimport cos, sin

IMPL = "cython"


cdef inline double complex cj(double complex x) noexcept nogil:
    return x.conjugate()


cdef void _reduce_tree(double complex* buf, Py_ssize_t n, Py_ssize_t width) noexcept nogil:
    cdef Py_ssize_t step = 1, i, j
    while step < n:
        i = 0
        while i + step < n:
            for j in range(width):
                buf[i * width + j] = buf[i * width + j] + buf[(i + step) * width + j]
            i += 2 * step
        step *= 2


def propagate_quadrature(cmats_in, thetas_in, xs_in, ws_in, rhos_in, bint want_maps):
    """See _kernels_py.propagate_quadrature."""
    cmats_np = np.ascontiguousarray(cmats_in, dtype=np.complex128)
    thetas_np = np.ascontiguousarray(thetas_in, dtype=np.float64)
    xs_np = np.ascontiguousarray(xs_in, dtype=np.float64)
    ws_np = np.ascontiguousarray(ws_in, dtype=np.float64)
    rhos_np = np.ascontiguousarray(rhos_in, dtype=np.complex128)

    cdef double complex[:, :, ::1] cm = cmats_np
    cdef double[::1] th = thetas_np
    cdef double[::1] xs = xs_np
    cdef double[::1] ws = ws_np
    cdef double complex[:, :, ::1] rh = rhos_np

    cdef Py_ssize_t n = cm.shape[0]
    cdef Py_ssize_t n_nodes = xs.shape[0]
    cdef Py_ssize_t n_states = rh.shape[0]

    states_np = np.empty((n + 1, n_states, 2, 2), dtype=np.complex128)
    states_np[0] = rhos_np
    maps_np = np.empty((n + 1 if want_maps else 1, 4, 4), dtype=np.complex128)
    cdef double complex[:, :, :, ::1] st = states_np
    cdef double complex[:, :, ::1] mp = maps_np
    if want_maps:
        maps_np[0] = np.eye(4)

    u_np = np.empty((n_nodes, 2, 2), dtype=np.complex128)
    u_np[:] = np.eye(2)
    cbuf_np = np.empty((n_nodes, 4), dtype=np.complex128)
    mbuf_np = np.empty((n_nodes if want_maps else 1, 16), dtype=np.complex128)
    cdef double complex[:, :, ::1] u = u_np
    cdef double complex[:, ::1] cbuf = cbuf_np
    cdef double complex[:, ::1] mbuf = mbuf_np

    cdef Py_ssize_t k, j, r, a, b, c, d
    cdef double arg
    cdef double complex c00, c01, c10, c11, ph
    cdef double complex u00, u01, u10, u11
    cdef double complex r00, r01, r10, r11
    cdef double complex p00, p01, p10, p11
    cdef double w

    for k in range(n):
        c00 = cm[k, 0, 0]
        c01 = cm[k, 0, 1]
        c10 = cm[k, 1, 0]
        c11 = cm[k, 1, 1]
        for j in range(n_nodes):
            u00 = u[j, 0, 0]
            u01 = u[j, 0, 1]
            u10 = u[j, 1, 0]
            u11 = u[j, 1, 1]
            p00 = c00 * u00 + c01 * u10
            p01 = c00 * u01 + c01 * u11
            p10 = c10 * u00 + c11 * u10
            p11 = c10 * u01 + c11 * u11
            arg = th[k] * xs[j]
            ph = cos(arg) + 1j * sin(arg)
            u[j, 0, 0] = p00
            u[j, 0, 1] = p01
            u[j, 1, 0] = ph * p10
            u[j, 1, 1] = ph * p11
        for r in range(n_states):
            r00 = rh[r, 0, 0]
            r01 = rh[r, 0, 1]
            r10 = rh[r, 1, 0]
            r11 = rh[r, 1, 1]
            for j in range(n_nodes):
                u00 = u[j, 0, 0]
                u01 = u[j, 0, 1]
                u10 = u[j, 1, 0]
                u11 = u[j, 1, 1]
                p00 = u00 * r00 + u01 * r10
                p01 = u00 * r01 + u01 * r11
                p10 = u10 * r00 + u11 * r10
                p11 = u10 * r01 + u11 * r11
                w = ws[j]
                cbuf[j, 0] = w * (p00 * cj(u00) + p01 * cj(u01))
                cbuf[j, 1] = w * (p00 * cj(u10) + p01 * cj(u11))
                cbuf[j, 2] = w * (p10 * cj(u00) + p11 * cj(u01))
                cbuf[j, 3] = w * (p10 * cj(u10) + p11 * cj(u11))
            _reduce_tree(&cbuf[0, 0], n_nodes, 4)
            st[k + 1, r, 0, 0] = cbuf[0, 0]
            st[k + 1, r, 0, 1] = cbuf[0, 1]
            st[k + 1, r, 1, 0] = cbuf[0, 2]
            st[k + 1, r, 1, 1] = cbuf[0, 3]
        if want_maps:
            for j in range(n_nodes):
                w = ws[j]
                for a in range(2):
                    for b in range(2):
                        for c in range(2):
                            for d in range(2):
                                mbuf[j, (a * 2 + c) * 4 + b * 2 + d] = (
                                    w * cj(u[j, a, b]) * u[j, c, d]
                                )
            _reduce_tree(&mbuf[0, 0], n_nodes, 16)
            for a in range(4):
                for b in range(4):
                    mp[k + 1, a, b] = mbuf[0, a * 4 + b]
    return states_np, (maps_np if want_maps else None)


def propagate_lattice(cmats_in, lifts_in, fvals_in, rhos_in, record_in, bint want_maps):
    """See _kernels_py.propagate_lattice."""
    cmats_np = np.ascontiguousarray(cmats_in, dtype=np.complex128)
    lifts_np = np.ascontiguousarray(lifts_in, dtype=np.int64)
    fvals_np = np.ascontiguousarray(fvals_in, dtype=np.complex128)
    rhos_np = np.ascontiguousarray(rhos_in, dtype=np.complex128)
    record_np = np.ascontiguousarray(record_in, dtype=np.uint8)

    cdef double complex[:, :, ::1] cm = cmats_np
    cdef long long[::1] lifts = lifts_np
    cdef double complex[::1] fv = fvals_np
    cdef double complex[:, :, ::1] rh = rhos_np
    cdef unsigned char[::1] rec = record_np

    cdef Py_ssize_t n = cm.shape[0]
    cdef Py_ssize_t n_states = rh.shape[0]
    cdef Py_ssize_t total = 0
    cdef Py_ssize_t k
    for k in range(n):
        total += lifts[k]

    kcoefs_np = np.zeros((total + 1, 2, 2), dtype=np.complex128)
    kcoefs_np[0] = np.eye(2)
    cdef double complex[:, :, ::1] kc = kcoefs_np
    scratch_np = np.empty((total + 1, 2), dtype=np.complex128)
    cdef double complex[:, ::1] scratch = scratch_np

    ds_np = np.nonzero(np.abs(fvals_np) > 1e-30)[0].astype(np.int64)
    cdef long long[::1] ds = ds_np

    cdef Py_ssize_t n_rec = 0
    for k in range(n + 1):
        if rec[k]:
            n_rec += 1
    states_np = np.empty((n_rec, n_states, 2, 2), dtype=np.complex128)
    maps_np = np.empty((n_rec if want_maps else 1, 4, 4), dtype=np.complex128)
    cdef double complex[:, :, :, ::1] st = states_np
    cdef double complex[:, :, ::1] mp = maps_np

    cdef Py_ssize_t pos = 0
    if rec[0]:
        states_np[0] = rhos_np
        if want_maps:
            maps_np[0] = np.eye(4)
        pos = 1

    cdef Py_ssize_t cur = 0, lift, m, idx, d, r, a, b, c, e
    cdef double complex c00, c01, c10, c11
    cdef double complex k00, k01, k10, k11
    cdef double complex r00, r01, r10, r11
    cdef double complex p00, p01, p10, p11
    cdef double complex b00, b01, b10, b11
    cdef double complex a00, a01, a10, a11
    cdef double complex fd
    cdef double complex bacc[16]
    cdef double complex macc[16]

    for k in range(n):
        c00 = cm[k, 0, 0]
        c01 = cm[k, 0, 1]
        c10 = cm[k, 1, 0]
        c11 = cm[k, 1, 1]
        lift = lifts[k]
        for m in range(cur + 1):
            k00 = kc[m, 0, 0]
            k01 = kc[m, 0, 1]
            k10 = kc[m, 1, 0]
            k11 = kc[m, 1, 1]
            kc[m, 0, 0] = c00 * k00 + c01 * k10
            kc[m, 0, 1] = c00 * k01 + c01 * k11
            scratch[m, 0] = c10 * k00 + c11 * k10
            scratch[m, 1] = c10 * k01 + c11 * k11
        for m in range(cur + 1 + lift):
            kc[m, 1, 0] = 0.0
            kc[m, 1, 1] = 0.0
        for m in range(cur + 1):
            kc[m + lift, 1, 0] = scratch[m, 0]
            kc[m + lift, 1, 1] = scratch[m, 1]
        cur += lift
        if not rec[k + 1]:
            continue
        for r in range(n_states):
            r00 = rh[r, 0, 0]
            r01 = rh[r, 0, 1]
            r10 = rh[r, 1, 0]
            r11 = rh[r, 1, 1]
            a00 = a01 = a10 = a11 = 0.0
            for idx in range(ds.shape[0]):
                d = ds[idx]
                if d > cur:
                    break
                b00 = b01 = b10 = b11 = 0.0
                for m in range(cur + 1 - d):
                    k00 = kc[m + d, 0, 0]
                    k01 = kc[m + d, 0, 1]
                    k10 = kc[m + d, 1, 0]
                    k11 = kc[m + d, 1, 1]
                    p00 = k00 * r00 + k01 * r10
                    p01 = k00 * r01 + k01 * r11
                    p10 = k10 * r00 + k11 * r10
                    p11 = k10 * r01 + k11 * r11
                    b00 += p00 * cj(kc[m, 0, 0]) + p01 * cj(kc[m, 0, 1])
                    b01 += p00 * cj(kc[m, 1, 0]) + p01 * cj(kc[m, 1, 1])
                    b10 += p10 * cj(kc[m, 0, 0]) + p11 * cj(kc[m, 0, 1])
                    b11 += p10 * cj(kc[m, 1, 0]) + p11 * cj(kc[m, 1, 1])
                fd = fv[d]
                a00 += fd * b00
                a01 += fd * b01
                a10 += fd * b10
                a11 += fd * b11
                if d > 0:
                    a00 += cj(fd) * cj(b00)
                    a01 += cj(fd) * cj(b10)
                    a10 += cj(fd) * cj(b01)
                    a11 += cj(fd) * cj(b11)
            st[pos, r, 0, 0] = a00
            st[pos, r, 0, 1] = a01
            st[pos, r, 1, 0] = a10
            st[pos, r, 1, 1] = a11
        if want_maps:
            for a in range(16):
                macc[a] = 0.0
            for idx in range(ds.shape[0]):
                d = ds[idx]
                if d > cur:
                    break
                for a in range(16):
                    bacc[a] = 0.0
                for m in range(cur + 1 - d):
                    for a in range(2):
                        for b in range(2):
                            for c in range(2):
                                for e in range(2):
                                    bacc[(a * 2 + c) * 4 + b * 2 + e] += (
                                        cj(kc[m, a, b]) * kc[m + d, c, e]
                                    )
                fd = fv[d]
                for a in range(16):
                    macc[a] += fd * bacc[a]
                if d > 0:
                    for a in range(16):
                        bacc[a] = 0.0
                    for m in range(cur + 1 - d):
                        for a in range(2):
                            for b in range(2):
                                for c in range(2):
                                    for e in range(2):
                                        bacc[(a * 2 + c) * 4 + b * 2 + e] += (
                                            cj(kc[m + d, a, b]) * kc[m, c, e]
                                        )
                    for a in range(16):
                        macc[a] += cj(fd) * bacc[a]
            for a in range(4):
                for b in range(4):
                    mp[pos, a, b] = macc[a * 4 + b]
        pos += 1
    return states_np, (maps_np if want_maps else None), kcoefs_np
