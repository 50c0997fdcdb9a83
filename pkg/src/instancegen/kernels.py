"""Hot numerical kernels with a compiled fast path.

The Cython extension ``instancegen._kernels`` is preferred; when it is not
built (or ``INSTANCEGEN_PURE_PYTHON=1`` is set) the NumPy versions in
``_kernels_py`` are used instead. ``BACKEND`` reports which one is active.
"""

import os

import numpy as np

from . import _kernels_py

_impl = _kernels_py
BACKEND = "python"

if os.environ.get("INSTANCEGEN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"


def _as_grid(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _as_mask(m):
    return np.ascontiguousarray(m, dtype=np.uint8)


def weighted_bce(attn, mask, fg_weight, bg_weight, eps, impl=None):
    """Loss and gradient of the per-pixel weighted binary cross entropy."""
    impl = impl or _impl
    loss, grad = impl.weighted_bce(_as_grid(attn), _as_mask(mask),
                                   float(fg_weight), float(bg_weight), float(eps))
    return float(loss), np.asarray(grad)


def masked_ce(attn, mask, eps, impl=None):
    """Loss and gradient of ``-sum(mask * log(attn))``."""
    impl = impl or _impl
    loss, grad = impl.masked_ce(_as_grid(attn), _as_mask(mask), float(eps))
    return float(loss), np.asarray(grad)


def otsu_threshold(values, nbins=256, impl=None):
    """Otsu threshold (bin centre) over ``nbins`` bins; NaN for constant input."""
    impl = impl or _impl
    return float(impl.otsu_threshold(_as_grid(values).ravel(), int(nbins)))


def window_maxima(grid, radius, impl=None):
    """Boolean grid of pixels that are maximal in their clipped square window.

    Pixels equal to the global minimum are never maxima.
    """
    impl = impl or _impl
    return np.asarray(impl.window_maxima(_as_grid(grid), int(radius)), dtype=bool)


def implementations():
    """All importable implementations, keyed by name (for tests/benchmarks)."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels as _compiled
    except ImportError:
        return out
    out["cython"] = _compiled
    return out
