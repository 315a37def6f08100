"""Time the compiled kernels against the numpy fallback.

Usage: ``python benchmarks/bench_kernels.py [--repeat N]``
"""
import argparse
import json
import time

import numpy as np

from levent import _fallback, analysis, gaussian, model

try:
    from levent import _kernels as compiled
except ImportError:  # extension not built
    compiled = None


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    cfg = model.ModelConfig()
    st = analysis.solve_steady(cfg)
    A0, A1 = model.drift_parts(cfg)
    N0, N1 = model.noise_parts(cfg)
    G0, G1 = model.measurement_gain_parts(cfg)
    h = st.vc.step
    from levent.riccati import closed_loop_coefficients
    from levent.trajectory import _coefficients
    M, S = closed_loop_coefficients(st.vc, st.gains, cfg)
    Mt, L, R = _coefficients(cfg, st.vc, st.gains, "consistent")
    rng = np.random.default_rng(0)

    cases = {
        # name: (steps, callable taking a backend module)
        "riccati_flow (RK4, 4x4)": (2000, lambda k, n: k.riccati_flow(
            gaussian.vacuum(), A0, A1, N0, N1, G0, G1, cfg.alpha, cfg.Omega, 0.0, 1.0, h, n)),
        "lyapunov_sampled (RK4 pairs)": (900, lambda k, n: k.lyapunov_sampled(
            np.zeros((4, 4)), M[:2 * n + 1], S[:2 * n + 1], h, n)),
        "em_closed_loop (Euler-Maruyama)": (2000, lambda k, n: k.em_closed_loop(
            np.zeros(4), Mt, L, R, rng.standard_normal((n, 2)) * np.sqrt(h), h, 0, 1,
            np.empty((n + 1, 4)), np.empty((n, 2)))),
    }
    rows = []
    for name, (n, fn) in cases.items():
        py = _best(lambda: fn(_fallback, n), args.repeat) / n
        cy = _best(lambda: fn(compiled, n), args.repeat) / n if compiled else float("nan")
        rows.append({"kernel": name, "python_us_per_step": py * 1e6, "cython_us_per_step": cy * 1e6,
                     "speedup": py / cy if compiled else float("nan")})
    print(f"{'kernel':34s} {'python us/step':>15s} {'cython us/step':>15s} {'speedup':>8s}")
    for r in rows:
        print(f"{r['kernel']:34s} {r['python_us_per_step']:15.2f} {r['cython_us_per_step']:15.3f} "
              f"{r['speedup']:8.0f}")

    # end-to-end: one periodic conditional steady state
    t = time.perf_counter()
    analysis.solve_steady(cfg, unconditional=True)
    print(f"\nconditional + unconditional steady state, default point: {time.perf_counter() - t:.3f} s "
          f"({'cython' if compiled else 'python'} kernels)")
    print(json.dumps(rows))


if __name__ == "__main__":
    main()
