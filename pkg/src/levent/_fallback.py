"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Same signatures and return conventions. Roughly two orders of magnitude
slower; used when the extension was not built or ``LEVENT_PURE_PYTHON`` is set.
"""
import numpy as np


def _modulation(alpha, omega, t):
    s = 1.0 + alpha * np.cos(omega * t)
    return s * s


def _blown_up(X, limit):
    return not np.all(np.isfinite(X)) or np.max(np.abs(X)) > limit


def riccati_flow(X0, F0, F1, N0, N1, G0, G1, alpha, omega, t0, tsign, h,
                 n_steps, samples=None, blowup=1e12):
    X = np.array(X0, dtype=float)
    F0, F1, N0, N1, G0, G1 = (np.asarray(a, dtype=float) for a in (F0, F1, N0, N1, G0, G1))

    def rhs(X, w):
        FX = (F0 + w * F1) @ X
        return FX + FX.T + (N0 + w * N1) - X @ (G0 + w * G1) @ X

    bad = -1
    for step in range(n_steps):
        if samples is not None:
            samples[step] = X
        t = t0 + tsign * step * h
        w0 = _modulation(alpha, omega, t)
        wm = _modulation(alpha, omega, t + tsign * 0.5 * h)
        w1 = _modulation(alpha, omega, t + tsign * h)
        k1 = rhs(X, w0)
        k2 = rhs(X + 0.5 * h * k1, wm)
        k3 = rhs(X + 0.5 * h * k2, wm)
        k4 = rhs(X + h * k3, w1)
        X = X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        X = 0.5 * (X + X.T)
        if _blown_up(X, blowup):
            bad = step
            break
    return X, bad


def lyapunov_sampled(X0, M, S, h, n_pairs, samples=None, blowup=1e12):
    if len(M) < 2 * n_pairs + 1 or len(S) < 2 * n_pairs + 1:
        raise ValueError("coefficient grid too short for n_pairs")
    X = np.array(X0, dtype=float)
    H = 2.0 * h

    def rhs(X, k):
        MX = M[k] @ X
        return MX + MX.T + S[k]

    bad = -1
    for j in range(n_pairs):
        if samples is not None:
            samples[j] = X
        k1 = rhs(X, 2 * j)
        k2 = rhs(X + h * k1, 2 * j + 1)
        k3 = rhs(X + h * k2, 2 * j + 1)
        k4 = rhs(X + H * k3, 2 * j + 2)
        X = X + (H / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        X = 0.5 * (X + X.T)
        if _blown_up(X, blowup):
            bad = j
            break
    return X, bad


def em_closed_loop(x0, M, L, R, dW, h, k0, stride, means, dy):
    n = len(dW)
    n_grid = len(M)
    if len(L) != n_grid or len(R) != n_grid:
        raise ValueError("coefficient grids differ in length")
    if len(means) < n // stride + 1 or len(dy) < (n + stride - 1) // stride:
        raise ValueError("output buffers too short")
    x = np.array(x0, dtype=float)
    means[:] = 0.0
    dy[:] = 0.0
    for k in range(n):
        idx = (k0 + k) % n_grid
        row = k // stride
        if k % stride == 0:
            means[row] = x
        dy[row] += h * (R[idx] @ x) + dW[k]
        x = x + h * (M[idx] @ x) + L[idx] @ dW[k]
        if not np.all(np.isfinite(x)):
            return x, k
    if n % stride == 0:
        means[n // stride] = x
    return x, -1
