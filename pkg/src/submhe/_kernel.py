"""Kernel selection: compiled extension when available, numpy otherwise.

Set SUBMHE_PURE_PYTHON=1 to force the fallback (used by the benchmark and
the backend-equivalence test).
"""

import os

if os.environ.get("SUBMHE_PURE_PYTHON"):
    from ._pgd_fallback import run_pgd
    BACKEND = "python"
else:
    try:
        from ._pgd import run_pgd
        BACKEND = "cython"
    except ImportError:
        from ._pgd_fallback import run_pgd
        BACKEND = "python"

__all__ = ["run_pgd", "BACKEND"]
