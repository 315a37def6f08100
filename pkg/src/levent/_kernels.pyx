# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for the 4x4 covariance flows and the Euler-Maruyama filter.

Every routine releases the GIL while it integrates, so independent scan cells
or trajectories can run on a thread pool. The pure-numpy twin lives in
:mod:`levent._fallback` and has the same signatures.
"""
import numpy as np

from libc.math cimport cos, fabs, isfinite
from libc.string cimport memcpy

DEF D = 4
DEF DD = 16


cdef inline double _modulation(double alpha, double omega, double t) noexcept nogil:
    cdef double s = 1.0 + alpha * cos(omega * t)
    return s * s


cdef inline void _combine(double* out, const double* a, double w, const double* b) noexcept nogil:
    cdef int i
    for i in range(DD):
        out[i] = a[i] + w * b[i]


cdef inline void _matmul(double* out, const double* a, const double* b) noexcept nogil:
    cdef int i, j, k
    cdef double acc
    for i in range(D):
        for j in range(D):
            acc = 0.0
            for k in range(D):
                acc += a[i * D + k] * b[k * D + j]
            out[i * D + j] = acc


cdef inline void _riccati_rhs(double* out, const double* X, const double* F,
                              const double* N, const double* G,
                              double* tmp1, double* tmp2) noexcept nogil:
    # out = F X + X F^T + N - X G X  (X, N, G symmetric)
    cdef int i, j
    _matmul(tmp1, F, X)
    _matmul(tmp2, X, G)
    _matmul(out, tmp2, X)
    for i in range(D):
        for j in range(D):
            out[i * D + j] = tmp1[i * D + j] + tmp1[j * D + i] + N[i * D + j] - out[i * D + j]


cdef inline void _lyapunov_rhs(double* out, const double* X, const double* M,
                               const double* S) noexcept nogil:
    # out = M X + X M^T + S
    cdef int i, j
    cdef double tmp[DD]
    _matmul(tmp, M, X)
    for i in range(D):
        for j in range(D):
            out[i * D + j] = tmp[i * D + j] + tmp[j * D + i] + S[i * D + j]


cdef inline void _symmetrize(double* X) noexcept nogil:
    cdef int i, j
    cdef double m
    for i in range(D):
        for j in range(i + 1, D):
            m = 0.5 * (X[i * D + j] + X[j * D + i])
            X[i * D + j] = m
            X[j * D + i] = m


cdef inline bint _blown_up(const double* X, double limit) noexcept nogil:
    cdef int i
    for i in range(DD):
        if not isfinite(X[i]) or fabs(X[i]) > limit:
            return True
    return False


def riccati_flow(const double[:, ::1] X0,
                 const double[:, ::1] F0, const double[:, ::1] F1,
                 const double[:, ::1] N0, const double[:, ::1] N1,
                 const double[:, ::1] G0, const double[:, ::1] G1,
                 double alpha, double omega, double t0, double tsign,
                 double h, Py_ssize_t n_steps,
                 double[:, :, ::1] samples=None, double blowup=1e12):
    """RK4 for dX/dtau = F X + X F^T + N - X G X.

    Each coefficient is ``C0 + w(t) C1`` with ``w(t) = (1 + alpha cos(omega t))**2``
    evaluated at ``t = t0 + tsign * tau``. ``samples[k]`` receives X before
    step k. Returns ``(X_final, blowup_step)``; the step is -1 when the flow
    stayed below ``blowup``.
    """
    cdef double X[DD]
    cdef double Y[DD]
    cdef double k1[DD]
    cdef double k2[DD]
    cdef double k3[DD]
    cdef double k4[DD]
    cdef double F[DD]
    cdef double N[DD]
    cdef double G[DD]
    cdef double tmp1[DD]
    cdef double tmp2[DD]
    cdef double w, t
    cdef Py_ssize_t step
    cdef Py_ssize_t bad = -1
    cdef int i
    cdef bint store = samples is not None
    cdef double* f0 = <double*>&F0[0, 0]
    cdef double* f1 = <double*>&F1[0, 0]
    cdef double* n0 = <double*>&N0[0, 0]
    cdef double* n1 = <double*>&N1[0, 0]
    cdef double* g0 = <double*>&G0[0, 0]
    cdef double* g1 = <double*>&G1[0, 0]
    cdef double* out = NULL

    if store:
        if samples.shape[0] < n_steps:
            raise ValueError("samples buffer shorter than n_steps")
        out = &samples[0, 0, 0]
    memcpy(X, &X0[0, 0], DD * sizeof(double))

    with nogil:
        for step in range(n_steps):
            if store:
                memcpy(out + step * DD, X, DD * sizeof(double))
            t = t0 + tsign * step * h
            w = _modulation(alpha, omega, t)
            _combine(F, f0, w, f1)
            _combine(N, n0, w, n1)
            _combine(G, g0, w, g1)
            _riccati_rhs(k1, X, F, N, G, tmp1, tmp2)

            w = _modulation(alpha, omega, t + tsign * 0.5 * h)
            _combine(F, f0, w, f1)
            _combine(N, n0, w, n1)
            _combine(G, g0, w, g1)
            for i in range(DD):
                Y[i] = X[i] + 0.5 * h * k1[i]
            _riccati_rhs(k2, Y, F, N, G, tmp1, tmp2)
            for i in range(DD):
                Y[i] = X[i] + 0.5 * h * k2[i]
            _riccati_rhs(k3, Y, F, N, G, tmp1, tmp2)

            w = _modulation(alpha, omega, t + tsign * h)
            _combine(F, f0, w, f1)
            _combine(N, n0, w, n1)
            _combine(G, g0, w, g1)
            for i in range(DD):
                Y[i] = X[i] + h * k3[i]
            _riccati_rhs(k4, Y, F, N, G, tmp1, tmp2)

            for i in range(DD):
                X[i] = X[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            _symmetrize(X)
            if _blown_up(X, blowup):
                bad = step
                break

    result = np.empty((D, D))
    cdef double[:, ::1] rv = result
    memcpy(&rv[0, 0], X, DD * sizeof(double))
    return result, bad


def lyapunov_sampled(const double[:, ::1] X0,
                     const double[:, :, ::1] M, const double[:, :, ::1] S,
                     double h, Py_ssize_t n_pairs,
                     double[:, :, ::1] samples=None, double blowup=1e12):
    """RK4 for dX/dt = M X + X M^T + S with coefficients given on a grid of spacing h.

    One RK4 step spans two grid intervals so the midpoint stage lands on a
    sample: step j uses ``M[2j], M[2j+1], M[2j+2]``. ``M`` and ``S`` need
    ``2 * n_pairs + 1`` entries. ``samples[j]`` receives X before step j.
    """
    cdef double X[DD]
    cdef double Y[DD]
    cdef double k1[DD]
    cdef double k2[DD]
    cdef double k3[DD]
    cdef double k4[DD]
    cdef Py_ssize_t j
    cdef Py_ssize_t bad = -1
    cdef int i
    cdef double H = 2.0 * h
    cdef bint store = samples is not None
    cdef double* out = NULL
    cdef double* m = <double*>&M[0, 0, 0]
    cdef double* s = <double*>&S[0, 0, 0]

    if M.shape[0] < 2 * n_pairs + 1 or S.shape[0] < 2 * n_pairs + 1:
        raise ValueError("coefficient grid too short for n_pairs")
    if store:
        if samples.shape[0] < n_pairs:
            raise ValueError("samples buffer shorter than n_pairs")
        out = &samples[0, 0, 0]
    memcpy(X, &X0[0, 0], DD * sizeof(double))

    with nogil:
        for j in range(n_pairs):
            if store:
                memcpy(out + j * DD, X, DD * sizeof(double))
            _lyapunov_rhs(k1, X, m + 2 * j * DD, s + 2 * j * DD)
            for i in range(DD):
                Y[i] = X[i] + h * k1[i]
            _lyapunov_rhs(k2, Y, m + (2 * j + 1) * DD, s + (2 * j + 1) * DD)
            for i in range(DD):
                Y[i] = X[i] + h * k2[i]
            _lyapunov_rhs(k3, Y, m + (2 * j + 1) * DD, s + (2 * j + 1) * DD)
            for i in range(DD):
                Y[i] = X[i] + H * k3[i]
            _lyapunov_rhs(k4, Y, m + (2 * j + 2) * DD, s + (2 * j + 2) * DD)
            for i in range(DD):
                X[i] = X[i] + (H / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            _symmetrize(X)
            if _blown_up(X, blowup):
                bad = j
                break

    result = np.empty((D, D))
    cdef double[:, ::1] rv = result
    memcpy(&rv[0, 0], X, DD * sizeof(double))
    return result, bad


def em_closed_loop(const double[::1] x0,
                   const double[:, :, ::1] M, const double[:, :, ::1] L,
                   const double[:, :, ::1] R, const double[:, ::1] dW,
                   double h, Py_ssize_t k0, Py_ssize_t stride,
                   double[:, ::1] means, double[:, ::1] dy):
    """Euler-Maruyama for dx = M x dt + L dW with record dy = R x dt + dW.

    ``M`` (n_grid, 4, 4), ``L`` (n_grid, 4, 2) and ``R`` (n_grid, 2, 4) are
    one period of coefficients, indexed cyclically from ``k0``. ``dW`` holds
    the already-scaled increments for every step. ``means[j]`` receives x at
    step ``j * stride``; ``dy[j]`` the record summed over that stride window.
    Returns ``(x_final, bad_step)``.
    """
    cdef Py_ssize_t n = dW.shape[0]
    cdef Py_ssize_t n_grid = M.shape[0]
    cdef Py_ssize_t k, idx, row
    cdef Py_ssize_t bad = -1
    cdef int i, j
    cdef double x[D]
    cdef double xn[D]
    cdef double acc, w0, w1
    cdef double* m
    cdef double* l
    cdef double* r

    if L.shape[0] != n_grid or R.shape[0] != n_grid:
        raise ValueError("coefficient grids differ in length")
    if means.shape[0] < n // stride + 1 or dy.shape[0] < (n + stride - 1) // stride:
        raise ValueError("output buffers too short")
    for i in range(D):
        x[i] = x0[i]
    means[:, :] = 0.0
    dy[:, :] = 0.0

    with nogil:
        for k in range(n):
            idx = (k0 + k) % n_grid
            m = <double*>&M[idx, 0, 0]
            l = <double*>&L[idx, 0, 0]
            r = <double*>&R[idx, 0, 0]
            w0 = dW[k, 0]
            w1 = dW[k, 1]
            row = k // stride
            if k % stride == 0:
                for i in range(D):
                    means[row, i] = x[i]
            for i in range(2):
                acc = 0.0
                for j in range(D):
                    acc += r[i * D + j] * x[j]
                dy[row, i] += h * acc + (w0 if i == 0 else w1)
            for i in range(D):
                acc = 0.0
                for j in range(D):
                    acc += m[i * D + j] * x[j]
                xn[i] = x[i] + h * acc + l[i * 2] * w0 + l[i * 2 + 1] * w1
            for i in range(D):
                x[i] = xn[i]
                if not isfinite(x[i]):
                    bad = k
            if bad >= 0:
                break
        if bad < 0 and n % stride == 0:
            for i in range(D):
                means[n // stride, i] = x[i]

    result = np.empty(D)
    for i in range(D):
        result[i] = x[i]
    return result, bad
