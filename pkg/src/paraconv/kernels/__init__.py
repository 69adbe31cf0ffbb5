"""Closed-loop integration kernels.

The compiled Cython kernel is used when it has been built; otherwise the
pure-Python reference is selected at import. Set ``PARACONV_PURE_PYTHON=1``
to force the fallback.
"""

import os

from . import _rk4_py

BACKEND = "python"
run_python = _rk4_py.run
run_compiled = None

if os.environ.get("PARACONV_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _rk4 as _compiled
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        run_compiled = _compiled.run
        BACKEND = "cython"

run = run_compiled if run_compiled is not None else run_python


def get_runner(backend=None):
    """Kernel entry point for ``backend`` in {None, "python", "cython"}."""
    if backend is None:
        return run
    if backend == "python":
        return run_python
    if backend == "cython":
        if run_compiled is None:
            raise ImportError("compiled kernel not available; build the extension first")
        return run_compiled
    raise ValueError(f"unknown backend {backend!r}")
