"""Kernel backend selection.

The compiled Cython module is used when importable. Setting the environment
variable ``LEVENT_PURE_PYTHON=1`` before import forces the numpy fallback.
"""
import os

BACKEND = "python"

if os.environ.get("LEVENT_PURE_PYTHON", "") not in ("", "0"):
    from ._fallback import em_closed_loop, lyapunov_sampled, riccati_flow
else:
    try:
        from ._kernels import em_closed_loop, lyapunov_sampled, riccati_flow
        BACKEND = "cython"
    except ImportError:  # extension not built
        from ._fallback import em_closed_loop, lyapunov_sampled, riccati_flow

__all__ = ["BACKEND", "em_closed_loop", "lyapunov_sampled", "riccati_flow"]
