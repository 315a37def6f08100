"""Entanglement and squeezing metrics, parameter scans and sweeps."""
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import gaussian, riccati
from .errors import (
    ConfigError,
    ControllabilityError,
    ConvergenceError,
    InstabilityError,
    LeventError,
    PhysicalityError,
)
from .model import ModelConfig

METRICS = ("conditional_EN", "unconditional_EN", "S_plus", "S_minus")
GAIN_MODES = ("periodic", "stationary")

FAILURE_CLASSES = (
    (ControllabilityError, "controllability"),
    (InstabilityError, "instability"),
    (ConvergenceError, "nonconvergence"),
    (PhysicalityError, "unphysical"),
    (ConfigError, "config"),
)


@dataclass(frozen=True)
class Numerics:
    steps_per_period: int = riccati.STEPS_PER_PERIOD
    tol: float = riccati.TOL
    max_periods: int = riccati.MAX_PERIODS
    gain_mode: str = "periodic"

    def __post_init__(self):
        if int(self.steps_per_period) != self.steps_per_period or self.steps_per_period < 2:
            raise ConfigError("must be an integer >= 2", key="steps_per_period")
        if not self.tol > 0:
            raise ConfigError("must be > 0", key="tol")
        if int(self.max_periods) != self.max_periods or self.max_periods < 1:
            raise ConfigError("must be a positive integer", key="max_periods")
        if self.gain_mode not in GAIN_MODES:
            raise ConfigError(f"must be one of {GAIN_MODES}", key="gain_mode")


@dataclass
class SteadyState:
    """Periodic conditional (and optionally unconditional) solution for one parameter point."""

    cfg: ModelConfig
    vc: riccati.PeriodicSolution
    gains: riccati.GainSchedule = None
    v_ex: riccati.PeriodicSolution = None
    v_u: riccati.PeriodicSolution = None


def solve_steady(cfg, numerics=Numerics(), unconditional=True):
    vc = riccati.periodic_steady_state(cfg, tol=numerics.tol, max_periods=numerics.max_periods,
                                       steps_per_period=numerics.steps_per_period)
    if not unconditional:
        return SteadyState(cfg, vc)
    if numerics.gain_mode == "stationary":
        gains = riccati.stationary_gain(cfg, steps_per_period=len(vc.times))
    else:
        gains = riccati.backward_control_riccati(cfg, tol=numerics.tol,
                                                 max_periods=numerics.max_periods,
                                                 steps_per_period=len(vc.times))
    v_ex, v_u = riccati.periodic_excess_noise(vc, gains, cfg, tol=numerics.tol,
                                              max_periods=numerics.max_periods)
    return SteadyState(cfg, vc, gains, v_ex, v_u)


def entanglement_time_series(solution):
    """Logarithmic negativity of every sample of a solution or covariance stack."""
    covs = solution.covs if hasattr(solution, "covs") else np.asarray(solution)
    nu = gaussian.min_symplectic_eigenvalue(covs)
    if np.any(nu < 0.5 - riccati.PHYSICAL_TOL):
        raise PhysicalityError("series contains unphysical covariances",
                               min_eigenvalue=float(np.min(nu)))
    return gaussian.log_negativity_series(covs)


def squeezing_time_series(solution):
    """``(S_plus(t), S_minus(t))`` in dB for every sample."""
    covs = solution.covs if hasattr(solution, "covs") else np.asarray(solution)
    W = gaussian.normal_mode_covariance(covs)
    return (gaussian.squeezing_degree_series(W[..., :2, :2]),
            gaussian.squeezing_degree_series(W[..., 2:, 2:]))


def period_average(values, times, period):
    """Mean over the last full period of a uniformly sampled series.

    The samples must span at least one period; a series that covers exactly
    one period without its endpoint is averaged as a whole.
    """
    values = np.asarray(values, dtype=float)
    times = np.asarray(times, dtype=float)
    if len(times) < 2:
        raise ValueError("need at least two samples")
    h = times[1] - times[0]
    n = int(round(period / h))
    if n < 1 or len(values) < n:
        raise ValueError(f"series spans {len(values) * h:.6g}, shorter than one period {period:.6g}")
    return float(np.mean(values[-n:]))


def metric_value(cfg, metric, numerics=Numerics()):
    """Period-averaged value of ``metric`` at the periodic steady state of ``cfg``."""
    if metric not in METRICS:
        raise ConfigError(f"unknown metric {metric!r}; choose from {METRICS}", key="metric")
    state = solve_steady(cfg, numerics, unconditional=(metric == "unconditional_EN"))
    if metric == "conditional_EN":
        return float(np.mean(entanglement_time_series(state.vc)))
    if metric == "unconditional_EN":
        return float(np.mean(entanglement_time_series(state.v_u)))
    s_plus, s_minus = squeezing_time_series(state.vc)
    return float(np.mean(s_plus if metric == "S_plus" else s_minus))


def failure_class(exc):
    for cls, name in FAILURE_CLASSES:
        if isinstance(exc, cls):
            return name
    return type(exc).__name__


@dataclass(frozen=True)
class Axis:
    """A swept :class:`ModelConfig` field sampled on ``linspace(start, stop, num)``."""

    name: str
    start: float
    stop: float
    num: int

    def __post_init__(self):
        if self.name not in {f.name for f in fields(ModelConfig)} or self.name == "strategy":
            raise ConfigError(f"cannot sweep {self.name!r}", key="axis")
        if int(self.num) != self.num or self.num < 1:
            raise ConfigError("axis needs a positive integer sample count", key=self.name)

    @property
    def values(self):
        return np.linspace(self.start, self.stop, int(self.num))


@dataclass
class ScanGrid:
    """Scalar metric on a 2-D parameter grid; failed cells hold NaN and a status."""

    x_param: str
    x_values: np.ndarray
    y_param: str
    y_values: np.ndarray
    metric: str
    values: np.ndarray
    status: np.ndarray
    failures: list = field(default_factory=list)

    @property
    def counts(self):
        return {"computed": int(np.sum(self.status == "ok")), "failed": len(self.failures)}

    def rows(self):
        for i, y in enumerate(self.y_values):
            for j, x in enumerate(self.x_values):
                yield x, y, self.values[i, j], self.status[i, j]

    def metadata(self, **extra):
        meta = {
            "x_param": self.x_param,
            "y_param": self.y_param,
            "metric": self.metric,
            "resolution": [len(self.x_values), len(self.y_values)],
            "counts": self.counts,
            "failures": [[i, j, c] for i, j, c in self.failures],
        }
        meta.update(extra)
        return meta

    def write_text(self, path, **extra):
        """Columnar ``x y value status``, preceded by one ``#``-prefixed JSON metadata line."""
        with open(path, "w") as fh:
            fh.write("# " + json.dumps(self.metadata(**extra), sort_keys=True) + "\n")
            fh.write(f"{self.x_param}\t{self.y_param}\t{self.metric}\tstatus\n")
            for x, y, v, s in self.rows():
                fh.write(f"{float(x)!r}\t{float(y)!r}\t{'nan' if np.isnan(v) else repr(float(v))}\t{s}\n")

    def to_json(self, **extra):
        out = self.metadata(**extra)
        out["x_values"] = [float(v) for v in self.x_values]
        out["y_values"] = [float(v) for v in self.y_values]
        out["values"] = [[None if np.isnan(v) else float(v) for v in row] for row in self.values]
        out["status"] = self.status.tolist()
        return out

    @classmethod
    def read_text(cls, path):
        with open(path) as fh:
            meta = json.loads(fh.readline()[1:])
            fh.readline()
            rows = [line.rstrip("\n").split("\t") for line in fh if line.strip()]
        nx, ny = meta["resolution"]
        xs = np.array([float(r[0]) for r in rows[:nx]])
        ys = np.array([float(r[1]) for r in rows[::nx]])
        values = np.array([float(r[2]) for r in rows]).reshape(ny, nx)
        status = np.array([r[3] for r in rows], dtype=object).reshape(ny, nx)
        failures = [tuple(f) for f in meta["failures"]]
        return cls(meta["x_param"], xs, meta["y_param"], ys, meta["metric"], values, status, failures)


def _evaluate(cfg_template, assignments, metric, numerics):
    try:
        cfg = replace(cfg_template, **assignments)
        return metric_value(cfg, metric, numerics), "ok"
    except (LeventError, np.linalg.LinAlgError) as exc:
        return float("nan"), failure_class(exc)


def _map(func, items, threads):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(func, items))
    return [func(item) for item in items]


def scan_2d(cfg_template, x_spec, y_spec, metric, numerics=Numerics(), threads=1):
    """Evaluate ``metric`` over the Cartesian grid of two axes.

    Cells that fail (divergence, no periodic convergence, invalid parameters)
    are recorded in ``failures`` as ``(i, j, class)`` and hold NaN; they never
    abort the scan. Results are ordered by cell index regardless of ``threads``.
    """
    if metric not in METRICS:
        raise ConfigError(f"unknown metric {metric!r}; choose from {METRICS}", key="metric")
    xs, ys = x_spec.values, y_spec.values
    cells = [(i, j) for i in range(len(ys)) for j in range(len(xs))]

    def run(cell):
        i, j = cell
        return _evaluate(cfg_template, {x_spec.name: xs[j], y_spec.name: ys[i]}, metric, numerics)

    results = _map(run, cells, threads)
    values = np.full((len(ys), len(xs)), np.nan)
    status = np.empty((len(ys), len(xs)), dtype=object)
    failures = []
    for (i, j), (v, s) in zip(cells, results):
        values[i, j] = v
        status[i, j] = s
        if s != "ok":
            failures.append((i, j, s))
    return ScanGrid(x_spec.name, xs, y_spec.name, ys, metric, values, status, failures)


def row_peaks(grid, min_value=1e-3):
    """Positions of interior local maxima along x for every row of a scan grid."""
    peaks = []
    for row in grid.values:
        found = []
        for j in range(1, len(row) - 1):
            v = row[j]
            if np.isnan(v) or v < min_value:
                continue
            left, right = row[j - 1], row[j + 1]
            if (np.isnan(left) or v >= left) and (np.isnan(right) or v > right):
                found.append(float(grid.x_values[j]))
        peaks.append(found)
    return peaks


@dataclass
class SqueezingCurves:
    param: str
    values: np.ndarray
    s_plus: np.ndarray
    s_minus: np.ndarray
    status: list

    @property
    def failures(self):
        return [(i, s) for i, s in enumerate(self.status) if s != "ok"]


def squeezing_vs_param(cfg_template, swept, values, numerics=Numerics(), threads=1):
    """Period-averaged normal-mode squeezing ``S_plus``, ``S_minus`` along one parameter."""
    if swept not in ("g", "alpha"):
        raise ConfigError(f"squeezing sweeps run over 'g' or 'alpha', not {swept!r}", key="swept")
    values = np.asarray(values, dtype=float)

    def run(v):
        try:
            state = solve_steady(replace(cfg_template, **{swept: v}), numerics, unconditional=False)
            s_plus, s_minus = squeezing_time_series(state.vc)
            return float(np.mean(s_plus)), float(np.mean(s_minus)), "ok"
        except LeventError as exc:
            return float("nan"), float("nan"), failure_class(exc)

    results = _map(run, list(values), threads)
    return SqueezingCurves(
        param=swept,
        values=values,
        s_plus=np.array([r[0] for r in results]),
        s_minus=np.array([r[1] for r in results]),
        status=[r[2] for r in results],
    )


def time_series(cfg, n_periods=3, numerics=Numerics(), unconditional=False):
    """Negativity over ``n_periods`` of the periodic steady state, with the unmodulated reference.

    Returns a dict of equal-length columns: ``t``, ``EN`` and ``EN_unmodulated``
    (conditional, or unconditional when requested).
    """
    out = {}
    for label, c in (("EN", cfg), ("EN_unmodulated", replace(cfg, alpha=0.0))):
        state = solve_steady(c, numerics, unconditional=unconditional)
        sol = state.v_u if unconditional else state.vc
        t, covs = sol.tiled(n_periods)
        out["t"] = t
        out[label] = entanglement_time_series(covs)
    return out
