"""Command-line entry point: ``levent {steady,trajectory,ensemble,scan,reproduce}``.

Every run writes its outputs plus ``manifest.json`` into the output
directory. Exit codes: 0 ok, 2 config error, 3 instability (divergence,
unphysical state, failed trajectory), 4 non-convergence, 5 I/O error.
"""
import argparse
import hashlib
import json
import logging
import math
import os
import platform
import sys
import time
from dataclasses import asdict, replace

import numpy as np
import scipy

from . import __version__, analysis, config, kernels, riccati, trajectory
from .errors import (
    ConfigError,
    ConvergenceError,
    GridMismatchError,
    InstabilityError,
    LeventError,
    PhysicalityError,
    PropagationError,
    ValidationError,
)

log = logging.getLogger("levent")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INSTABILITY = 3
EXIT_CONVERGENCE = 4
EXIT_IO = 5


def exit_code(exc):
    if isinstance(exc, (ConfigError, ValidationError, GridMismatchError)):
        return EXIT_CONFIG
    if isinstance(exc, (InstabilityError, PhysicalityError, PropagationError)):
        return EXIT_INSTABILITY
    if isinstance(exc, ConvergenceError):
        return EXIT_CONVERGENCE
    if isinstance(exc, OSError):
        return EXIT_IO
    raise exc


def _num(v):
    return "nan" if isinstance(v, float) and math.isnan(v) else repr(float(v))


def write_table(path, columns, meta, fmt):
    """Columnar output: CSV behind a ``#`` JSON metadata line, or one JSON object."""
    names = list(columns)
    if fmt == "json":
        body = {"meta": meta, "columns": {
            k: [None if isinstance(v, float) and math.isnan(v) else v for v in
                (np.asarray(columns[k]).tolist())] for k in names}}
        with open(path, "w") as fh:
            json.dump(body, fh, sort_keys=True, indent=1)
            fh.write("\n")
        return
    cols = [np.asarray(columns[k]) for k in names]
    with open(path, "w") as fh:
        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        fh.write(",".join(names) + "\n")
        for row in zip(*cols):
            fh.write(",".join(v if isinstance(v, str) else _num(v) for v in row) + "\n")


def read_table(path):
    """Inverse of :func:`write_table` for either format; returns ``(meta, columns)``."""
    with open(path) as fh:
        first = fh.read(1)
        fh.seek(0)
        if first == "{":
            body = json.load(fh)
            return body["meta"], {k: np.array([np.nan if v is None else v for v in col])
                                  if col and not isinstance(col[0], str) else np.array(col)
                                  for k, col in body["columns"].items()}
        meta = json.loads(fh.readline()[1:])
        names = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    out = {}
    for i, name in enumerate(names):
        raw = [r[i] for r in rows]
        try:
            out[name] = np.array([float(v) for v in raw])
        except ValueError:
            out[name] = np.array(raw)
    return meta, out


_UPPER = [(i, j) for i in range(4) for j in range(i, 4)]
_LABELS = ["x1", "p1", "x2", "p2"]


def _cov_columns(prefix, covs):
    return {f"{prefix}_{_LABELS[i]}{_LABELS[j]}": covs[:, i, j] for i, j in _UPPER}


class Runner:
    """Executes one :class:`~levent.config.ExperimentSpec` into ``out_dir``."""

    def __init__(self, spec, out_dir, threads=1):
        self.spec = spec
        self.out_dir = out_dir
        self.threads = max(1, int(threads))
        self.files = []
        self.failures = {}
        self.summary = {}
        self.ext = "json" if spec.fmt == "json" else "csv"

    def _numerics(self, cfg):
        # a global dt fixes the covariance grid through the step count per period
        n = self.spec.numerics
        if self.spec.run.dt is None:
            return n
        T, steps, _ = riccati.period_grid(cfg, steps_per_period=math.ceil(cfg.period / self.spec.run.dt))
        if self.spec.run.dt > riccati.MAX_DT * (1 + 1e-12):
            raise ConfigError(f"exceeds the maximum step {riccati.MAX_DT:.6g}", key="dt")
        return replace(n, steps_per_period=steps)

    def _write(self, name, columns, meta):
        path = os.path.join(self.out_dir, f"{name}.{self.ext}")
        write_table(path, columns, meta, self.spec.fmt)
        self.files.append(path)
        return path

    def run(self):
        getattr(self, f"_run_{self.spec.mode}")()

    def _run_steady(self, cfg=None, name="steady"):
        cfg = cfg or self.spec.model_config()
        state = analysis.solve_steady(cfg, self._numerics(cfg), unconditional=True)
        vc, vu = state.vc, state.v_u
        t = vc.times[::2]
        s_plus, s_minus = analysis.squeezing_time_series(vc.covs[::2])
        columns = {"t": t,
                   "EN_conditional": analysis.entanglement_time_series(vc.covs[::2]),
                   "EN_unconditional": analysis.entanglement_time_series(vu),
                   "S_plus_dB": s_plus, "S_minus_dB": s_minus}
        columns.update(_cov_columns("Vc", vc.covs[::2]))
        columns.update(_cov_columns("Vu", vu.covs))
        meta = {"kind": "steady", "period": cfg.period, "conditional_periods": vc.periods,
                "conditional_residual": vc.residual, "unconditional_periods": vu.periods}
        self._write(name, columns, meta)
        self.summary.update({k: float(np.mean(columns[k])) for k in
                             ("EN_conditional", "EN_unconditional", "S_plus_dB", "S_minus_dB")})

    def _trajectory_setup(self):
        cfg = self.spec.model_config()
        num = self._numerics(cfg)
        vc = riccati.periodic_steady_state(cfg, tol=num.tol, max_periods=num.max_periods,
                                           steps_per_period=num.steps_per_period)
        if num.gain_mode == "stationary":
            gains = riccati.stationary_gain(cfg, steps_per_period=len(vc.times))
        else:
            gains = riccati.backward_control_riccati(cfg, tol=num.tol, max_periods=num.max_periods,
                                                     steps_per_period=len(vc.times))
        t_end = self.spec.run.t_end_periods * cfg.period
        return cfg, vc, gains, (0.0, t_end)

    def _write_trajectory(self, rec, name):
        columns = {"t": rec.times}
        columns.update({k: rec.means[:, i] for i, k in enumerate(_LABELS)})
        columns.update({f"u{i + 1}": rec.controls[:, i] for i in range(rec.controls.shape[1])})
        columns.update({"dy1": rec.records[:, 0], "dy2": rec.records[:, 1]})
        meta = {"kind": "trajectory", "seed": rec.seed, "index": rec.index, "dt": rec.dt,
                "stride": rec.stride, "record_form": rec.record_form,
                "final_time": rec.final_time}
        self._write(name, columns, meta)

    def _run_trajectory(self):
        cfg, vc, gains, span = self._trajectory_setup()
        r = self.spec.run
        rec = trajectory.simulate_closed_loop(cfg, vc, gains, t_span=span, dt=r.dt, seed=r.seed,
                                              index=0, stride=r.stride, record_form=r.record_form)
        self._write_trajectory(rec, f"trajectory_seed{r.seed}_0")
        self.summary["final_time"] = rec.final_time

    def _run_ensemble(self):
        cfg, vc, gains, span = self._trajectory_setup()
        r = self.spec.run
        stats = trajectory.ensemble_statistics(cfg, r.n_trajectories, t_span=span, dt=r.dt,
                                               seed_base=r.seed, vc=vc, gains=gains,
                                               stride=r.stride, threads=self.threads)
        columns = {"t": stats.times}
        columns.update({f"mean_{k}": stats.mean[:, i] for i, k in enumerate(_LABELS)})
        columns.update(_cov_columns("cov", stats.cov))
        columns.update(_cov_columns("cov_se", stats.cov_se))
        # the deterministic excess-noise flow on the same checkpoints, where they coincide
        ode = riccati.excess_noise_evolution(vc, gains, cfg, t_span=span)
        h2 = ode.times[1] - ode.times[0]
        idx = np.rint((stats.times - span[0]) / h2).astype(int)
        if np.allclose(ode.times[np.clip(idx, 0, len(ode.times) - 1)], stats.times, rtol=0, atol=1e-9 * h2):
            columns.update(_cov_columns("Vex", ode.v_ex[idx]))
        meta = {"kind": "ensemble", "n_trajectories": stats.n_trajectories, "seed": r.seed,
                "stride": r.stride}
        self._write("ensemble", columns, meta)
        if r.dump_trajectories:
            for i in range(r.n_trajectories):
                rec = trajectory.simulate_closed_loop(cfg, vc, gains, t_span=span, dt=r.dt,
                                                      seed=r.seed, index=i, stride=r.stride,
                                                      record_form=r.record_form)
                self._write_trajectory(rec, f"trajectory_seed{r.seed}_{i}")

    def _run_scan(self, name="scan"):
        sc = self.spec.scan
        cfg = self.spec.model_config()
        num = self._numerics(cfg)
        if sc.metric == "squeezing":
            curves = analysis.squeezing_vs_param(cfg, sc.x.name, sc.x.values, num, self.threads)
            self.failures = {"computed": len(curves.values) - len(curves.failures),
                             "failed": len(curves.failures)}
            columns = {sc.x.name: curves.values, "S_plus_dB": curves.s_plus,
                       "S_minus_dB": curves.s_minus, "status": np.array(curves.status)}
            self._write(name, columns, {"kind": "squeezing_sweep", "param": sc.x.name,
                                        "counts": self.failures})
            return
        grid = analysis.scan_2d(cfg, sc.x, sc.y, sc.metric, num, threads=self.threads)
        self.failures = grid.counts
        self.failures["by_class"] = {}
        for _, _, c in grid.failures:
            self.failures["by_class"][c] = self.failures["by_class"].get(c, 0) + 1
        xs, ys, vs, ss = zip(*grid.rows())
        meta = grid.metadata(kind="scan")
        self._write(name, {sc.x.name: np.array(xs), sc.y.name: np.array(ys),
                           sc.metric: np.array(vs), "status": np.array(ss)}, meta)
        peaks = analysis.row_peaks(grid)
        self.summary["row_peaks"] = {repr(float(y)): p for y, p in zip(grid.y_values, peaks)}

    def _run_reproduce(self):
        target = self.spec.target
        if self.spec.scan is not None:
            self._run_scan(name=target)
            return
        cfg = self.spec.model_config()
        unconditional = config.SERIES_TARGETS.get(target, False)
        series = analysis.time_series(cfg, self.spec.run.n_periods, self._numerics(cfg),
                                      unconditional=unconditional)
        self._write(target, series, {"kind": "time_series", "target": target, "period": cfg.period,
                                     "unconditional": unconditional})
        self.summary["EN_mean"] = float(np.mean(series["EN"]))
        self.summary["EN_unmodulated_mean"] = float(np.mean(series["EN_unmodulated"]))


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _check_writable(out_dir):
    os.makedirs(out_dir, exist_ok=True)
    probe = os.path.join(out_dir, ".levent-write-test")
    with open(probe, "w"):
        pass
    os.remove(probe)


def run(spec, out_dir=None, threads=1):
    """Execute ``spec``, write outputs and ``manifest.json``; return the exit status.

    Errors are reported on stderr and mapped to exit codes instead of raised.
    """
    out_dir = out_dir or spec.out_dir or "levent-out"
    try:
        _check_writable(out_dir)
    except OSError as exc:
        print(f"levent: cannot write to {out_dir}: {exc}", file=sys.stderr)
        return EXIT_IO
    text = config.serialize(spec)
    runner = Runner(spec, out_dir, threads)
    start = time.perf_counter()
    status, error = EXIT_OK, None
    try:
        runner.run()
    except (LeventError, OSError) as exc:
        status = exit_code(exc)
        error = {"type": type(exc).__name__, "message": str(exc)}
        print(f"levent: {type(exc).__name__}: {exc}", file=sys.stderr)
    wall = time.perf_counter() - start

    with open(os.path.join(out_dir, "config.txt"), "w") as fh:
        fh.write(text)
    files = runner.files + [os.path.join(out_dir, "config.txt")]
    manifest = {
        "mode": spec.mode,
        "target": spec.target,
        "exit_code": status,
        "error": error,
        "inputs": {"config": text, "config_sha256": hashlib.sha256(text.encode()).hexdigest(),
                   "model": asdict(spec.model_config())},
        "versions": {"levent": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "backend": kernels.BACKEND,
        "threads": runner.threads,
        "wall_time_s": wall,
        "failure_counts": runner.failures,
        "summary": runner.summary,
        "files": [{"path": os.path.basename(p), "sha256": _sha256(p)} for p in files],
    }
    try:
        with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True, default=str)
            fh.write("\n")
    except OSError as exc:
        print(f"levent: cannot write manifest: {exc}", file=sys.stderr)
        return EXIT_IO
    return status


def build_parser():
    p = argparse.ArgumentParser(prog="levent", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="mode", required=True)
    for mode in config.MODES:
        s = sub.add_parser(mode)
        s.add_argument("--config", metavar="PATH", help="key = value experiment file")
        s.add_argument("--out", metavar="DIR", help="output directory")
        s.add_argument("--seed", type=int, help="noise seed")
        s.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
        s.add_argument("--dt", type=float, help="integration step in units of 1/omega_m")
        s.add_argument("--format", choices=config.FORMATS, help="output format")
        if mode == "reproduce":
            s.add_argument("target", nargs="?", choices=sorted(config.PRESETS),
                           help="figure preset")
            s.add_argument("--resolution", type=int, metavar="N",
                           help="override the scan grid to N points per axis")
    return p


def spec_from_args(args):
    if args.config:
        spec = config.load(args.config)
        spec = replace(spec, mode=args.mode) if spec.mode != args.mode else spec
    elif args.mode == "reproduce":
        if not args.target:
            raise ConfigError("reproduce needs a target or --config", key="target")
        spec = config.preset(args.target)
    else:
        spec = config.ExperimentSpec(mode=args.mode)
    if args.mode == "reproduce" and args.target and spec.target != args.target:
        spec = config.preset(args.target)
    run_kw = {}
    if args.seed is not None:
        run_kw["seed"] = args.seed
    if args.dt is not None:
        run_kw["dt"] = args.dt
    if run_kw:
        spec = replace(spec, run=replace(spec.run, **run_kw))
    if args.format:
        spec = replace(spec, fmt=args.format)
    if getattr(args, "resolution", None) and spec.scan is not None:
        n = args.resolution
        sc = spec.scan
        spec = replace(spec, scan=replace(sc, x=replace(sc.x, num=n),
                                          y=None if sc.y is None else replace(sc.y, num=n)))
    return spec


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="levent: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        spec = spec_from_args(args)
    except ConfigError as exc:
        print(f"levent: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"levent: {exc}", file=sys.stderr)
        return EXIT_IO
    return run(spec, out_dir=args.out, threads=args.threads)


if __name__ == "__main__":
    sys.exit(main())
