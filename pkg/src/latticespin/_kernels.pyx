# cython: language_level=3
"""Compiled stepping core.

Mirrors `_kernels_py` function-for-function; replicas are embarrassingly
parallel, so the ensemble entry points use a prange over replicas with all
writes to disjoint rows (results are independent of the thread count).
"""

import numpy as np

cimport cython
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport sin, sqrt, tanh

cnp.import_array()

cdef double BLOWUP_SQ = 1.0e24


cdef inline double _flocal(int drift_kind, double d1, double d2, double z) nogil:
    if drift_kind == 0:
        return d1 * z
    if drift_kind == 1:
        return d1 * z + d2 * (z * z * z)
    return d1 * z + d2 * tanh(z)


cdef inline double _modfac(int mod_kind, double depth, double omega, double phase,
                           double t) nogil:
    if mod_kind == 0:
        return 1.0
    return 1.0 + depth * sin(omega * t + phase)


@cython.boundscheck(False)
@cython.wraparound(False)
cdef inline int _step_chain(int drift_kind, double d1, double d2,
                            double[::1] sub0, double[::1] sup0,
                            double fac, int tamed, double h,
                            double* x, double* buf, int n) nogil:
    """One Euler step of the drift part into x (noise added by the caller).
    Returns 1 if the post-step squared norm exceeds the blowup threshold."""
    cdef int j
    cdef double d, norm, scale, s
    for j in range(n):
        d = _flocal(drift_kind, d1, d2, x[j])
        if j > 0:
            d = d + (fac * sub0[j]) * x[j - 1]
        if j < n - 1:
            d = d + (fac * sup0[j]) * x[j + 1]
        buf[j] = d
    if tamed:
        norm = 0.0
        for j in range(n):
            norm += buf[j] * buf[j]
        norm = sqrt(norm)
        scale = 1.0 / (1.0 + h * norm)
        for j in range(n):
            buf[j] = buf[j] * scale
    for j in range(n):
        x[j] = x[j] + h * buf[j]
    return 0


cdef inline double _sumsq(double* x, int n) nogil:
    cdef double s = 0.0
    cdef int j
    for j in range(n):
        s += x[j] * x[j]
    return s


@cython.boundscheck(False)
@cython.wraparound(False)
def run_path(int drift_kind, double d1, double d2,
             double[::1] sub0, double[::1] sup0,
             int mod_kind, double depth, double omega, double phase, int tamed,
             x0, dw, double h, double t0, int record_every, int threads=1):
    cdef double[::1] xv = np.array(x0, dtype=np.float64)
    cdef double[::1] dwv = np.ascontiguousarray(dw, dtype=np.float64)
    cdef int n = xv.shape[0]
    cdef Py_ssize_t steps = dwv.shape[0]
    cdef Py_ssize_t nrec = steps // record_every + 1
    states_arr = np.empty((nrec, n), dtype=np.float64)
    cdef double[:, ::1] states = states_arr
    buf_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] buf = buf_arr
    cdef Py_ssize_t k, row = 1
    cdef int j
    cdef long blow_step = -1
    cdef double fac, s
    for j in range(n):
        states[0, j] = xv[j]
    with nogil:
        for k in range(steps):
            if blow_step < 0:
                fac = _modfac(mod_kind, depth, omega, phase, t0 + k * h)
                _step_chain(drift_kind, d1, d2, sub0, sup0, fac, tamed, h,
                            &xv[0], &buf[0], n)
                xv[0] = xv[0] + dwv[k]
                s = _sumsq(&xv[0], n)
                if not (s <= BLOWUP_SQ):
                    blow_step = k
            if (k + 1) % record_every == 0:
                for j in range(n):
                    states[row, j] = xv[j]
                row += 1
    return states_arr, int(blow_step)


@cython.boundscheck(False)
@cython.wraparound(False)
def run_ensemble(int drift_kind, double d1, double d2,
                 double[::1] sub0, double[::1] sup0,
                 int mod_kind, double depth, double omega, double phase, int tamed,
                 X0, dw, double h, double t0, int threads=1):
    X_arr = np.array(X0, dtype=np.float64, order="C")
    cdef double[:, ::1] X = X_arr
    cdef double[:, ::1] dwv = np.ascontiguousarray(dw, dtype=np.float64)
    cdef Py_ssize_t m = X.shape[0]
    cdef int n = X.shape[1]
    cdef Py_ssize_t steps = dwv.shape[1]
    blown_arr = np.zeros(m, dtype=np.uint8)
    cdef unsigned char[::1] blown = blown_arr
    scratch_arr = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] scratch = scratch_arr
    cdef Py_ssize_t r, k
    cdef double fac, s
    for r in prange(m, nogil=True, schedule="static", num_threads=threads):
        for k in range(steps):
            fac = _modfac(mod_kind, depth, omega, phase, t0 + k * h)
            _step_chain(drift_kind, d1, d2, sub0, sup0, fac, tamed, h,
                        &X[r, 0], &scratch[r, 0], n)
            X[r, 0] = X[r, 0] + dwv[r, k]
            s = _sumsq(&X[r, 0], n)
            if not (s <= BLOWUP_SQ):
                blown[r] = 1
                break
    return X_arr, blown_arr


@cython.boundscheck(False)
@cython.wraparound(False)
def run_pair_supdiff(int drift_kind, double d1, double d2,
                     double[::1] sub0a, double[::1] sup0a,
                     double[::1] sub0b, double[::1] sup0b,
                     int mod_kind, double depth, double omega, double phase, int tamed,
                     X0a, X0b, dw, double h, double t0, int k_coords, wts,
                     int threads=1):
    Xa_arr = np.array(X0a, dtype=np.float64, order="C")
    Xb_arr = np.array(X0b, dtype=np.float64, order="C")
    cdef double[:, ::1] Xa = Xa_arr
    cdef double[:, ::1] Xb = Xb_arr
    cdef double[:, ::1] dwv = np.ascontiguousarray(dw, dtype=np.float64)
    cdef double[::1] w = np.ascontiguousarray(wts, dtype=np.float64)
    cdef Py_ssize_t m = Xa.shape[0]
    cdef int na = Xa.shape[1]
    cdef int nb = Xb.shape[1]
    cdef int kc = k_coords
    cdef Py_ssize_t steps = dwv.shape[1]
    sup_arr = np.zeros(m, dtype=np.float64)
    blown_arr = np.zeros(m, dtype=np.uint8)
    cdef double[::1] sup = sup_arr
    cdef unsigned char[::1] blown = blown_arr
    bufa_arr = np.empty((m, na), dtype=np.float64)
    bufb_arr = np.empty((m, nb), dtype=np.float64)
    cdef double[:, ::1] bufa = bufa_arr
    cdef double[:, ::1] bufb = bufb_arr
    cdef Py_ssize_t r, k
    cdef int j
    cdef double fac, sa, sb, d, acc
    for r in prange(m, nogil=True, schedule="static", num_threads=threads):
        acc = 0.0
        for j in range(kc):
            d = (Xa[r, j] if j < na else 0.0) - (Xb[r, j] if j < nb else 0.0)
            acc = acc + w[j] * d * d
        sup[r] = acc
        for k in range(steps):
            fac = _modfac(mod_kind, depth, omega, phase, t0 + k * h)
            _step_chain(drift_kind, d1, d2, sub0a, sup0a, fac, tamed, h,
                        &Xa[r, 0], &bufa[r, 0], na)
            _step_chain(drift_kind, d1, d2, sub0b, sup0b, fac, tamed, h,
                        &Xb[r, 0], &bufb[r, 0], nb)
            Xa[r, 0] = Xa[r, 0] + dwv[r, k]
            Xb[r, 0] = Xb[r, 0] + dwv[r, k]
            sa = _sumsq(&Xa[r, 0], na)
            sb = _sumsq(&Xb[r, 0], nb)
            if not (sa <= BLOWUP_SQ and sb <= BLOWUP_SQ):
                blown[r] = 1
                break
            acc = 0.0
            for j in range(kc):
                d = (Xa[r, j] if j < na else 0.0) - (Xb[r, j] if j < nb else 0.0)
                acc = acc + w[j] * d * d
            if acc > sup[r]:
                sup[r] = acc
    return sup_arr, blown_arr


@cython.boundscheck(False)
@cython.wraparound(False)
def run_ensemble_supfeature(int drift_kind, double d1, double d2,
                            double[::1] sub0, double[::1] sup0,
                            int mod_kind, double depth, double omega, double phase,
                            int tamed, X0, dw, double h, double t0, wts, double q,
                            int threads=1):
    X_arr = np.array(X0, dtype=np.float64, order="C")
    cdef double[:, ::1] X = X_arr
    cdef double[:, ::1] dwv = np.ascontiguousarray(dw, dtype=np.float64)
    cdef double[::1] w = np.ascontiguousarray(wts, dtype=np.float64)
    cdef Py_ssize_t m = X.shape[0]
    cdef int n = X.shape[1]
    cdef Py_ssize_t steps = dwv.shape[1]
    sup_arr = np.zeros(m, dtype=np.float64)
    blown_arr = np.zeros(m, dtype=np.uint8)
    cdef double[::1] sup = sup_arr
    cdef unsigned char[::1] blown = blown_arr
    scratch_arr = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] scratch = scratch_arr
    cdef Py_ssize_t r, k
    cdef int j
    cdef double fac, s, acc, az
    for r in prange(m, nogil=True, schedule="static", num_threads=threads):
        acc = 0.0
        for j in range(n):
            az = X[r, j] if X[r, j] >= 0.0 else -X[r, j]
            acc = acc + w[j] * az ** q
        sup[r] = acc
        for k in range(steps):
            fac = _modfac(mod_kind, depth, omega, phase, t0 + k * h)
            _step_chain(drift_kind, d1, d2, sub0, sup0, fac, tamed, h,
                        &X[r, 0], &scratch[r, 0], n)
            X[r, 0] = X[r, 0] + dwv[r, k]
            s = _sumsq(&X[r, 0], n)
            if not (s <= BLOWUP_SQ):
                blown[r] = 1
                break
            acc = 0.0
            for j in range(n):
                az = X[r, j] if X[r, j] >= 0.0 else -X[r, j]
                acc = acc + w[j] * az ** q
            if acc > sup[r]:
                sup[r] = acc
    return sup_arr, blown_arr
