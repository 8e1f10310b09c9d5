"""Pick the compiled kernels when importable, the NumPy ones otherwise.

Set ``GLMM_PURE_PYTHON=1`` to force the fallback (the benchmark and the
kernel-parity tests load both explicitly via :func:`load`).
"""

import importlib
import os

__all__ = ["kernels", "BACKEND", "load"]


def load(name: str):
    if name == "compiled":
        return importlib.import_module("glmm.solvers._kernels")
    if name == "python":
        return importlib.import_module("glmm.solvers._kernels_py")
    raise ValueError(f"unknown backend {name!r}")


if os.environ.get("GLMM_PURE_PYTHON") == "1":
    kernels = load("python")
    BACKEND = "python"
else:
    try:
        kernels = load("compiled")
        BACKEND = "compiled"
    except ImportError:
        kernels = load("python")
        BACKEND = "python"
