"""Backend selection for the numeric hot loops.

The compiled ``aiol._kernels`` extension is preferred; the numpy module
``aiol._kernels_py`` is used when the extension failed to build or when the
environment variable ``AIOL_PURE_PYTHON`` is set to ``1``.
"""

import os

from . import _kernels_py

if os.environ.get("AIOL_PURE_PYTHON") == "1":
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "python" if _impl is _kernels_py else "cython"

confidence_scores = _impl.confidence_scores
temperature_nll = _impl.temperature_nll
em_gmm_1d = _impl.em_gmm_1d


def available_backends():
    """Map backend name to kernel module for every backend importable here."""
    backends = {"python": _kernels_py}
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        backends["cython"] = _kernels
    return backends
