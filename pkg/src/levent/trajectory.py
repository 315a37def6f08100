"""Closed-loop stochastic trajectories of the filtered mean.

The conditional mean follows

    d<X> = (A - B K) <X> dt + 2 V_c C dW,

integrated with Euler-Maruyama on the grid of a periodic conditional
solution. Each trajectory draws its Wiener increments from a Philox
(counter-based) generator keyed by ``(seed, index)``, so results do not depend
on how trajectories are scheduled across threads.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, GridMismatchError, PropagationError
from .model import drift_parts, omega_x
from .riccati import _check_grids

RECORD_FORMS = ("consistent", "half")
CHUNK_STEPS = 1 << 16


@dataclass
class TrajectoryRecord:
    """One simulated measurement run.

    Row ``k`` holds the state at ``times[k]``, the feedback applied there, and
    the homodyne record integrated over ``[times[k], times[k] + stride * dt)``.
    """

    times: np.ndarray
    means: np.ndarray
    records: np.ndarray
    controls: np.ndarray
    seed: int
    index: int
    dt: float
    stride: int
    record_form: str
    final_time: float
    final_mean: np.ndarray


@dataclass
class EnsembleStatistics:
    times: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    mean_se: np.ndarray
    cov_se: np.ndarray
    n_trajectories: int


def noise_generator(seed, index=0):
    """Independent standard-normal stream for trajectory ``index`` of ensemble ``seed``."""
    key = np.array([int(seed) % 2**64, int(index) % 2**64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _coefficients(cfg, vc, gains, record_form):
    _check_grids(vc, gains)
    w = omega_x(vc.times, cfg)
    A0, A1 = drift_parts(cfg)
    M = A0[None] + w[:, None, None] * A1[None] - np.einsum("ij,njk->nik", gains.B, gains.gains)
    C = np.zeros((len(w), 4, 2))
    amp = np.sqrt(cfg.eta * cfg.kba_ratio * w)
    C[:, 0, 0] = amp
    C[:, 2, 1] = amp
    L = 2.0 * np.einsum("nij,njk->nik", vc.covs, C)
    # the innovation gain 2 V C pairs with a record of mean 2 C^T <X>
    R = (2.0 if record_form == "consistent" else 1.0) * C.transpose(0, 2, 1)
    return M, L, np.ascontiguousarray(R)


def _resolve_grid(vc, dt, t_span):
    h = vc.step
    n_grid = len(vc.times)
    m = 1
    if dt is not None:
        m = round(dt / h)
        if m < 1 or abs(m * h - dt) > 1e-9 * h or n_grid % m:
            raise GridMismatchError(f"dt={dt} is not a whole multiple of the covariance grid step {h}")
        if dt > 1e-3 * vc.period * (1 + 1e-12):
            raise ConfigError(f"dt={dt} exceeds 1e-3 of the modulation period", key="dt")
    h_eff = m * h
    if t_span is None:
        t_span = (0.0, vc.period)
    t0, t1 = map(float, t_span)
    i0 = round(t0 / h_eff)
    if abs(i0 * h_eff - t0) > 1e-9 * max(1.0, abs(t0)):
        raise GridMismatchError("t_span must start on the sampling grid")
    n = round((t1 - t0) / h_eff)
    if n < 1:
        raise ConfigError("t_span shorter than one step", key="t_span")
    return m, h_eff, i0, n, t0


def simulate_closed_loop(cfg, vc, gains, t_span=None, dt=None, seed=0, index=0, x0=None,
                         stride=1, record_form="consistent", zero_noise=False):
    """Simulate one closed-loop trajectory with optimal Bayesian feedback ``u = -K <X>``.

    Parameters
    ----------
    cfg : ModelConfig
    vc : PeriodicSolution
        Periodic conditional covariance; supplies the time grid.
    gains : GainSchedule
        Feedback gains on the same grid.
    t_span : (float, float), optional
        Start and end time; defaults to one period from 0.
    dt : float, optional
        Step; must be a whole multiple of the covariance grid step.
    seed, index : int
        Key of the counter-based noise stream.
    x0 : array_like, optional
        Initial mean, zero by default.
    stride : int
        Store every ``stride``-th step; records are summed over each window.
    record_form : {"consistent", "half"}
        ``"consistent"`` emits ``dy = 2 C^T <X> dt + dW``, matching the filter
        gain; ``"half"`` emits ``C^T <X> dt + dW``.
    zero_noise : bool
        Replace every Wiener increment by zero (testing hook).

    Returns
    -------
    TrajectoryRecord

    Raises
    ------
    PropagationError
        If the state becomes non-finite.
    """
    if record_form not in RECORD_FORMS:
        raise ConfigError(f"must be one of {RECORD_FORMS}", key="record_form")
    stride = int(stride)
    if stride < 1:
        raise ConfigError("must be >= 1", key="stride")
    m, h, i0, n, t0 = _resolve_grid(vc, dt, t_span)
    if n % stride:
        raise ConfigError(f"the number of steps ({n}) must be a multiple of stride={stride}",
                          key="stride")
    M, L, R = (np.ascontiguousarray(a[::m]) for a in _coefficients(cfg, vc, gains, record_form))
    n_grid = len(M)
    K = gains.gains[::m]

    x = np.zeros(4) if x0 is None else np.array(x0, dtype=float)
    rng = noise_generator(seed, index)
    sq = math.sqrt(h)
    chunk = max(stride, (CHUNK_STEPS // stride) * stride)
    rows = n // stride
    means = np.empty((rows + 1, 4))
    records = np.empty((rows, 2))
    done = 0
    while done < n:
        c = min(chunk, n - done)
        if zero_noise:
            dW = np.zeros((c, 2))
        else:
            dW = rng.standard_normal((c, 2)) * sq
        r0 = done // stride
        cm = np.empty((c // stride + 1, 4))
        cd = np.empty((c // stride, 2))
        x, bad = kernels.em_closed_loop(x, M, L, R, dW, h, (i0 + done) % n_grid, stride, cm, cd)
        if bad >= 0:
            raise PropagationError(f"trajectory became non-finite at step {done + bad}",
                                   step=done + bad, seed=seed, index=index)
        means[r0:r0 + c // stride] = cm[:-1]
        records[r0:r0 + c // stride] = cd
        done += c
    means[rows] = x
    times = t0 + h * stride * np.arange(rows)
    k_idx = (i0 + stride * np.arange(rows)) % n_grid
    controls = -np.einsum("nij,nj->ni", K[k_idx], means[:rows])
    return TrajectoryRecord(times=times, means=means[:rows], records=records, controls=controls,
                            seed=int(seed), index=int(index), dt=h, stride=stride,
                            record_form=record_form, final_time=t0 + h * n,
                            final_mean=means[rows].copy())


def _sampled_states(cfg, vc, gains, t_span, dt, seed, index, stride):
    rec = simulate_closed_loop(cfg, vc, gains, t_span=t_span, dt=dt, seed=seed, index=index,
                               stride=stride)
    return np.vstack([rec.means, rec.final_mean[None]]), np.append(rec.times, rec.final_time)


def ensemble_statistics(cfg, n_trajectories, t_span=None, dt=None, seed_base=0, vc=None,
                        gains=None, stride=None, threads=1):
    """Empirical mean and covariance of the filtered mean across seeded trajectories.

    The covariance estimates ``V_ex``; standard errors are those of the sample
    mean of the centered products. Trajectory ``i`` uses the noise stream
    ``(seed_base, i)``, so the result is independent of ``threads``.
    """
    from .riccati import backward_control_riccati, periodic_steady_state

    n_trajectories = int(n_trajectories)
    if n_trajectories < 2:
        raise ConfigError("need at least 2 trajectories", key="n_trajectories")
    if vc is None:
        vc = periodic_steady_state(cfg)
    if gains is None:
        gains = backward_control_riccati(cfg)
    if stride is None:
        stride = max(1, len(vc.times) // 20)

    def one(i):
        try:
            return _sampled_states(cfg, vc, gains, t_span, dt, seed_base, i, stride)
        except PropagationError as exc:
            raise PropagationError(f"trajectory {i} (seed {seed_base}): {exc}", step=exc.step,
                                   seed=seed_base, index=i) from exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(n_trajectories)))
    else:
        results = [one(i) for i in range(n_trajectories)]
    times = results[0][1]
    X = np.stack([r[0] for r in results])
    n = n_trajectories
    mean = X.mean(axis=0)
    D = X - mean
    prod = D[..., :, None] * D[..., None, :]
    cov = prod.sum(axis=0) / (n - 1)
    return EnsembleStatistics(
        times=times,
        mean=mean,
        cov=cov,
        mean_se=X.std(axis=0, ddof=1) / math.sqrt(n),
        cov_se=prod.std(axis=0, ddof=1) / math.sqrt(n),
        n_trajectories=n,
    )


def write_trajectory(record, path):
    """Write a trajectory as whitespace-separated columns behind a ``#`` header."""
    n_u = record.controls.shape[1]
    cols = ["t", "x1", "p1", "x2", "p2"] + [f"u{i + 1}" for i in range(n_u)] + ["dy1", "dy2"]
    meta = (f"levent trajectory seed={record.seed} index={record.index} dt={record.dt!r} "
            f"stride={record.stride} record_form={record.record_form} "
            f"final_time={record.final_time!r}")
    data = np.column_stack([record.times, record.means, record.controls, record.records])
    np.savetxt(path, data, fmt="%.17g", header=meta + "\n" + " ".join(cols))


def read_trajectory(path):
    """Inverse of :func:`write_trajectory` (the final state is not stored)."""
    with open(path) as fh:
        meta_line = fh.readline()
        cols = fh.readline().lstrip("#").split()
    meta = dict(item.split("=", 1) for item in meta_line.lstrip("#").split()[2:])
    data = np.loadtxt(path, ndmin=2)
    n_u = len([c for c in cols if c.startswith("u")])
    return TrajectoryRecord(
        times=data[:, 0],
        means=data[:, 1:5],
        controls=data[:, 5:5 + n_u],
        records=data[:, 5 + n_u:7 + n_u],
        seed=int(meta["seed"]),
        index=int(meta["index"]),
        dt=float(meta["dt"]),
        stride=int(meta["stride"]),
        record_form=meta["record_form"],
        final_time=float(meta["final_time"]),
        final_mean=None,
    )
