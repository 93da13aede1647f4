"""Hot numeric kernels with a compiled core and a pure-numpy fallback.

The compiled Cython extension (``itfkan.kernels._core``) is used when it
built successfully; otherwise the numpy fallback takes over. Selection can
be forced with the ``ITFKAN_KERNELS`` environment variable:

    auto      prefer the compiled core, fall back silently (default)
    compiled  require the compiled core, raise if unavailable
    python    always use the numpy fallback

``benchmarks/bench_kernels.py`` compares the two backends.
"""

import importlib
import os

import numpy as np

from . import _fallback

_MODE = os.environ.get("ITFKAN_KERNELS", "auto")
if _MODE not in ("auto", "compiled", "python"):
    raise ValueError(f"ITFKAN_KERNELS must be auto|compiled|python, got {_MODE!r}")

_core = None
if _MODE != "python":
    try:
        _core = importlib.import_module("itfkan.kernels._core")
    except ImportError:
        if _MODE == "compiled":
            raise ImportError(
                "ITFKAN_KERNELS=compiled but itfkan.kernels._core is not built"
            )

USING_COMPILED = _core is not None
BACKEND = "compiled" if USING_COMPILED else "python"


def _flat(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def silu(x):
    """Elementwise x * sigmoid(x)."""
    if _core is None:
        return _fallback.silu(x)
    x = _flat(x)
    out = np.empty_like(x)
    _core.silu(x.ravel(), out.ravel())
    return out


def silu_grad(x, gout):
    """gout * d/dx silu(x)."""
    if _core is None:
        return _fallback.silu_grad(x, gout)
    x = _flat(x)
    g = _flat(gout)
    out = np.empty_like(x)
    _core.silu_grad(x.ravel(), g.ravel(), out.ravel())
    return out


def adam_step(param, grad, m, v, step, lr, beta1, beta2, eps):
    """One bias-corrected Adam update, in place on param/m/v."""
    bc1 = 1.0 - beta1 ** step
    bc2 = 1.0 - beta2 ** step
    if _core is None:
        _fallback.adam_step(param, grad, m, v, lr, beta1, beta2, eps, bc1, bc2)
        return
    _core.adam_step(
        param.ravel(), _flat(grad).ravel(), m.ravel(), v.ravel(),
        lr, beta1, beta2, eps, bc1, bc2,
    )
