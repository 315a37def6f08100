"""Deterministic covariance flows: Kalman filter, LQR and excess noise.

The conditional covariance obeys the filter Riccati equation

    dV/dt = A V + V A^T + N - 4 V C C^T V,

the optimal-control matrix the backward Riccati equation

    dS/d(-t) = A^T S + S A + P - S B Q^{-1} B^T S,

and the covariance of the filtered mean under feedback the Lyapunov equation

    dV_ex/dt = (A - B K) V_ex + V_ex (A - B K)^T + 4 V C C^T V.

All three are integrated with classical RK4 on a grid of ``steps_per_period``
points per modulation period and symmetrized after every step.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import gaussian, kernels
from .errors import (
    ConfigError,
    ControllabilityError,
    ConvergenceError,
    GridMismatchError,
    InstabilityError,
    PhysicalityError,
)
from .model import (
    cost_matrices,
    drift_parts,
    feedback_matrix,
    mean_drift,
    measurement_gain_parts,
    noise_parts,
    omega_x,
)

STEPS_PER_PERIOD = 2000
MAX_DT = 1e-3 * 2.0 * math.pi
BLOWUP = 1e12
TOL = 1e-8
MAX_PERIODS = 500
PHYSICAL_TOL = 1e-6


@dataclass
class PeriodicSolution:
    """One period of a converged periodic covariance flow.

    ``covs[i]`` is the covariance at ``times[i]``, measured from the start of
    a modulation period; the grid is uniform and excludes the endpoint.
    """

    times: np.ndarray
    covs: np.ndarray
    period: float
    converged: bool
    residual: float
    periods: int

    @property
    def step(self):
        return self.period / len(self.times)

    @property
    def samples(self):
        return list(zip(self.times, self.covs))

    def tiled(self, n_periods):
        """Samples repeated over ``n_periods`` with absolute times."""
        n = len(self.times)
        times = (np.arange(n * n_periods) * self.step)
        return times, np.tile(self.covs, (n_periods, 1, 1))


@dataclass
class GainSchedule:
    """Optimal feedback gain ``K(t) = Q^-1 B^T S(t)`` over one period."""

    times: np.ndarray
    gains: np.ndarray
    period: float
    B: np.ndarray
    sigma: np.ndarray = None
    converged: bool = True
    residual: float = 0.0

    @property
    def step(self):
        return self.period / len(self.times)


@dataclass
class ExcessNoiseSeries:
    times: np.ndarray
    v_ex: np.ndarray
    v_u: np.ndarray


@dataclass
class StabilityReport:
    stable: bool
    blowup_time: float = None

    def __bool__(self):
        return self.stable


def period_grid(cfg, dt=None, steps_per_period=STEPS_PER_PERIOD):
    """``(period, n_steps, h)`` for a grid that divides one modulation period.

    ``n_steps`` is even (the excess-noise integrator pairs steps) and large
    enough that ``h <= 2 pi * 1e-3``.
    """
    T = cfg.period
    if dt is None:
        n = max(int(steps_per_period), math.ceil(T / MAX_DT))
    else:
        if dt <= 0:
            raise ConfigError(f"must be > 0, got {dt}", key="dt")
        n = round(T / dt)
        if n < 1 or abs(n * dt - T) > 1e-9 * T:
            raise ConfigError(f"dt={dt} does not divide the modulation period {T}", key="dt")
        if dt > MAX_DT * (1 + 1e-12):
            raise ConfigError(f"dt={dt} exceeds the maximum step {MAX_DT:.6g}", key="dt")
    if n % 2:
        if dt is not None:
            raise ConfigError("dt must split the period into an even number of steps", key="dt")
        n += 1
    return T, n, T / n


def _filter_coefficients(cfg):
    F0, F1 = drift_parts(cfg)
    N0, N1 = noise_parts(cfg)
    G0, G1 = measurement_gain_parts(cfg)
    return F0, F1, N0, N1, G0, G1


def _scaled_residual(new, old):
    return float(np.max(np.abs(new - old)) / max(1.0, float(np.max(np.abs(new)))))


def _secular(increments):
    # per-period increments that stop shrinking mean the flow drifts away
    # (linear or faster growth); a contracting flow shrinks them geometrically
    n = len(increments)
    if n < 20:
        return False
    return increments[-1] >= 0.95 * increments[n // 2]


def _check_series_physical(covs, what):
    nu = gaussian.min_symplectic_eigenvalue(covs)
    worst = float(np.min(nu))
    if worst < 0.5 - PHYSICAL_TOL:
        raise PhysicalityError(f"{what} became unphysical (min symplectic eigenvalue {worst:.6g})",
                               min_eigenvalue=worst)


def integrate_conditional_covariance(V0, cfg, t_span, dt, blowup=BLOWUP):
    """Integrate the filter Riccati equation over ``t_span``.

    Returns ``(times, covs)`` including both endpoints. ``dt`` is adjusted
    down slightly so that it divides the span.

    Raises
    ------
    InstabilityError
        When an entry exceeds ``blowup``; ``.time`` holds the blow-up time.
    """
    V0 = gaussian.check_physical(V0)
    if dt > MAX_DT * (1 + 1e-12):
        raise ConfigError(f"dt={dt} exceeds the maximum step {MAX_DT:.6g}", key="dt")
    t0, t1 = map(float, t_span)
    if t1 <= t0:
        raise ConfigError("t_span must be increasing", key="t_span")
    n = max(1, round((t1 - t0) / dt))
    h = (t1 - t0) / n
    covs = np.empty((n + 1, 4, 4))
    final, bad = kernels.riccati_flow(
        np.ascontiguousarray(V0), *_filter_coefficients(cfg),
        cfg.alpha, cfg.Omega, t0, 1.0, h, n, covs, blowup,
    )
    if bad >= 0:
        raise InstabilityError(f"conditional covariance diverged at t={t0 + (bad + 1) * h:.6g}",
                               time=t0 + (bad + 1) * h)
    covs[n] = final
    _check_series_physical(covs, "conditional covariance")
    return t0 + h * np.arange(n + 1), covs


def periodic_steady_state(cfg, dt=None, tol=TOL, max_periods=MAX_PERIODS, V0=None,
                          steps_per_period=STEPS_PER_PERIOD, blowup=BLOWUP):
    """Run the filter Riccati flow from vacuum until it repeats every period.

    Convergence is declared when the covariance at consecutive period
    boundaries differs by less than ``tol`` in the sup norm (relative to the
    largest entry once entries exceed 1). Without modulation the flow is
    autonomous and this returns its fixed point, replicated over the grid.

    Raises
    ------
    InstabilityError
        If the flow exceeds ``blowup`` or keeps drifting without contracting.
    ConvergenceError
        If it is still contracting after ``max_periods``.
    """
    T, n, h = period_grid(cfg, dt, steps_per_period)
    X = gaussian.vacuum() if V0 is None else gaussian.check_physical(V0)
    coeffs = _filter_coefficients(cfg)
    buf = np.empty((n, 4, 4))
    residuals, increments = [], []
    for k in range(max_periods):
        Xn, bad = kernels.riccati_flow(np.ascontiguousarray(X), *coeffs, cfg.alpha, cfg.Omega,
                                       0.0, 1.0, h, n, buf, blowup)
        if bad >= 0:
            t_bad = k * T + (bad + 1) * h
            raise InstabilityError(f"conditional covariance diverged at t={t_bad:.6g}", time=t_bad)
        residuals.append(_scaled_residual(Xn, X))
        increments.append(float(np.max(np.abs(Xn - X))))
        X = Xn
        if residuals[-1] < tol:
            break
    else:
        if _secular(increments):
            raise InstabilityError(
                f"conditional covariance grows without bound (residual {residuals[-1]:.3g} "
                f"not contracting after {max_periods} periods)",
                time=max_periods * T,
            )
        raise ConvergenceError(
            f"no periodic steady state after {max_periods} periods (residual {residuals[-1]:.3g})",
            residual=residuals[-1],
        )
    _check_series_physical(buf, "conditional covariance")
    return PeriodicSolution(times=h * np.arange(n), covs=buf, period=T, converged=True,
                            residual=residuals[-1], periods=len(residuals))


def stability_probe(cfg, horizon=None, steps_per_period=STEPS_PER_PERIOD, blowup=BLOWUP):
    """Classify the filter Riccati flow from vacuum as bounded or divergent over ``horizon``.

    ``horizon`` defaults to 200 modulation periods.
    """
    T, n, h = period_grid(cfg, None, steps_per_period)
    if horizon is None:
        horizon = 200 * T
    coeffs = _filter_coefficients(cfg)
    X = gaussian.vacuum()
    t = 0.0
    while t < horizon - 1e-12:
        steps = min(n, max(1, round((horizon - t) / h)))
        X, bad = kernels.riccati_flow(np.ascontiguousarray(X), *coeffs, cfg.alpha, cfg.Omega,
                                      t, 1.0, h, steps, None, blowup)
        if bad >= 0:
            return StabilityReport(False, t + (bad + 1) * h)
        t += steps * h
    return StabilityReport(True)


def is_controllable(A, B, tol=1e-9):
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    ctrb = np.hstack(blocks)
    return np.linalg.matrix_rank(ctrb, tol=tol * max(1.0, np.abs(ctrb).max())) == n


def backward_control_riccati(cfg, dt=None, tol=TOL, max_periods=MAX_PERIODS, B=None,
                             steps_per_period=STEPS_PER_PERIOD, blowup=BLOWUP):
    """Periodic LQR gain schedule from the backward Riccati equation.

    Starts from ``S = 0`` at a terminal time on a period boundary and steps
    backwards one period at a time until ``S`` repeats. ``B`` overrides the
    feedback matrix implied by ``cfg.strategy``.

    Raises
    ------
    ControllabilityError
        If some mode cannot be reached by the feedback input.
    """
    T, n, h = period_grid(cfg, dt, steps_per_period)
    A0, A1 = drift_parts(cfg)
    if B is None:
        B = feedback_matrix(cfg.strategy, cfg.charge_ratio)
    B = np.asarray(B, dtype=float)
    P, Q = cost_matrices(cfg)
    if Q.shape[0] != B.shape[1]:
        Q = cfg.q * np.eye(B.shape[1])
    Qinv = np.linalg.inv(Q)
    if np.any(P) and not (is_controllable(mean_drift(cfg), B) and is_controllable(A0 + A1, B)):
        raise ControllabilityError("feedback matrix leaves a mode uncontrollable; "
                                   "the control Riccati equation diverges")
    G = B @ Qinv @ B.T
    zero = np.zeros((4, 4))
    F0, F1 = np.ascontiguousarray(A0.T), np.ascontiguousarray(A1.T)
    X = zero.copy()
    buf = np.empty((n, 4, 4))
    residuals, increments = [], []
    for k in range(max_periods):
        Xn, bad = kernels.riccati_flow(X, F0, F1, P, zero, G, zero, cfg.alpha, cfg.Omega,
                                       0.0, -1.0, h, n, buf, blowup)
        if bad >= 0:
            raise InstabilityError("control Riccati equation diverged", time=-(k * T + (bad + 1) * h))
        residuals.append(_scaled_residual(Xn, X))
        increments.append(float(np.max(np.abs(Xn - X))))
        X = Xn
        if residuals[-1] < tol:
            break
    else:
        if _secular(increments):
            raise InstabilityError("control Riccati equation grows without bound",
                                   time=-max_periods * T)
        raise ConvergenceError(
            f"control Riccati equation not periodic after {max_periods} periods "
            f"(residual {residuals[-1]:.3g})", residual=residuals[-1])
    # buf[j] holds S at t = -j h, i.e. at period phase T - j h
    order = (-np.arange(n)) % n
    sigma = buf[order]
    gains = np.einsum("ij,njk->nik", Qinv @ B.T, sigma)
    return GainSchedule(times=h * np.arange(n), gains=gains, period=T, B=B, sigma=sigma,
                        converged=True, residual=residuals[-1])


def stationary_gain(cfg, dt=None, steps_per_period=STEPS_PER_PERIOD, B=None):
    """Constant LQR gain for the period-averaged drift, on the usual grid.

    Provided for comparison with the periodic schedule.
    """
    T, n, h = period_grid(cfg, dt, steps_per_period)
    if B is None:
        B = feedback_matrix(cfg.strategy, cfg.charge_ratio)
    P, Q = cost_matrices(cfg)
    Abar = mean_drift(cfg)
    if np.any(P) and not is_controllable(Abar, B):
        raise ControllabilityError("feedback matrix leaves a mode uncontrollable")
    S = linalg.solve_continuous_are(Abar, B, P, Q)
    S = 0.5 * (S + S.T)
    K = np.linalg.solve(Q, B.T @ S)
    return GainSchedule(times=h * np.arange(n), gains=np.repeat(K[None], n, axis=0), period=T,
                        B=np.asarray(B, dtype=float), sigma=np.repeat(S[None], n, axis=0))


def _check_grids(vc, gains):
    if len(vc.times) != len(gains.times) or not math.isclose(vc.period, gains.period, rel_tol=1e-12):
        raise GridMismatchError(
            f"conditional covariance ({len(vc.times)} samples, period {vc.period}) and gain "
            f"schedule ({len(gains.times)} samples, period {gains.period}) use different grids")
    if len(vc.times) % 2:
        raise GridMismatchError("the sampling grid needs an even number of points per period")


def closed_loop_coefficients(vc, gains, cfg):
    """Per-sample closed-loop drift ``A - B K`` and innovation source ``4 V C C^T V``."""
    _check_grids(vc, gains)
    w = omega_x(vc.times, cfg)
    A0, A1 = drift_parts(cfg)
    A = A0[None] + w[:, None, None] * A1[None]
    M = A - np.einsum("ij,njk->nik", gains.B, gains.gains)
    _, G1 = measurement_gain_parts(cfg)
    S = np.einsum("nij,jk,nkl->nil", vc.covs, G1, vc.covs) * w[:, None, None]
    return np.ascontiguousarray(M), np.ascontiguousarray(0.5 * (S + S.transpose(0, 2, 1)))


def excess_noise_evolution(vc, gains, cfg, t_span=None, V0=None, blowup=BLOWUP):
    """Excess noise ``V_ex`` and unconditional covariance ``V_u = V_c + V_ex`` over ``t_span``.

    ``vc`` and ``gains`` are periodic and must share one grid. Integration
    starts from ``V_ex = 0`` (or ``V0``) and uses RK4 steps spanning two grid
    intervals, so the output is on every other grid point.
    """
    M, S = closed_loop_coefficients(vc, gains, cfg)
    n = len(vc.times)
    h = vc.step
    if t_span is None:
        t_span = (0.0, vc.period)
    t0, t1 = map(float, t_span)
    i0 = round(t0 / h)
    if abs(i0 * h - t0) > 1e-9 * max(1.0, abs(t0)):
        raise GridMismatchError("t_span must start on the sampling grid")
    n_pairs = round((t1 - t0) / (2 * h))
    if n_pairs < 1:
        raise ConfigError("t_span shorter than one integration step", key="t_span")
    X = np.zeros((4, 4)) if V0 is None else np.array(V0, dtype=float)
    out = np.empty((n_pairs + 1, 4, 4))
    done = 0
    chunk = n // 2
    while done < n_pairs:
        m = min(chunk, n_pairs - done)
        idx = (i0 + 2 * done + np.arange(2 * m + 1)) % n
        X, bad = kernels.lyapunov_sampled(np.ascontiguousarray(X), M[idx], S[idx], h, m,
                                          out[done:done + m], blowup)
        if bad >= 0:
            t_bad = t0 + 2 * h * (done + bad + 1)
            raise InstabilityError(f"excess noise diverged at t={t_bad:.6g}; the closed loop is unstable",
                                   time=t_bad)
        done += m
    out[n_pairs] = X
    times = t0 + 2 * h * np.arange(n_pairs + 1)
    vc_idx = (i0 + 2 * np.arange(n_pairs + 1)) % n
    return ExcessNoiseSeries(times=times, v_ex=out, v_u=vc.covs[vc_idx] + out)


def periodic_excess_noise(vc, gains, cfg, tol=TOL, max_periods=MAX_PERIODS, blowup=BLOWUP):
    """Periodic steady state of ``V_ex`` on every other grid point of ``vc``.

    Returns ``(v_ex, v_u)`` as :class:`PeriodicSolution` objects.
    """
    M, S = closed_loop_coefficients(vc, gains, cfg)
    n = len(vc.times)
    h = vc.step
    idx = np.arange(n + 1) % n
    M, S = M[idx], S[idx]
    X = np.zeros((4, 4))
    buf = np.empty((n // 2, 4, 4))
    residuals, increments = [], []
    for k in range(max_periods):
        Xn, bad = kernels.lyapunov_sampled(X, M, S, h, n // 2, buf, blowup)
        if bad >= 0:
            t_bad = k * vc.period + 2 * h * (bad + 1)
            raise InstabilityError(f"excess noise diverged at t={t_bad:.6g}; the closed loop is unstable",
                                   time=t_bad)
        residuals.append(_scaled_residual(Xn, X))
        increments.append(float(np.max(np.abs(Xn - X))))
        X = Xn
        if residuals[-1] < tol:
            break
    else:
        if _secular(increments):
            raise InstabilityError("excess noise grows without bound", time=max_periods * vc.period)
        raise ConvergenceError(f"excess noise not periodic after {max_periods} periods "
                               f"(residual {residuals[-1]:.3g})", residual=residuals[-1])
    times = vc.times[::2]
    v_u = vc.covs[::2] + buf
    _check_series_physical(v_u, "unconditional covariance")
    common = dict(times=times, period=vc.period, converged=True, residual=residuals[-1],
                  periods=len(residuals))
    return PeriodicSolution(covs=buf, **common), PeriodicSolution(covs=v_u, **common)
