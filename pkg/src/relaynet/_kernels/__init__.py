"""Flow-solver kernel with compiled and pure-Python backends.

The Cython extension is used when built; set RELAYNET_PURE_PY=1 to force
the pure-Python reference (used by the equivalence tests and the
benchmark in benchmarks/bench_kernels.py).
"""

import os

if os.environ.get("RELAYNET_PURE_PY"):
    from .mcmf_py import solve_mcmf

    BACKEND = "python"
else:
    try:
        from ._mcmf_cy import solve_mcmf  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        from .mcmf_py import solve_mcmf  # type: ignore[no-redef]

        BACKEND = "python"

__all__ = ["solve_mcmf", "BACKEND"]
