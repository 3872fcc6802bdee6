"""Kernel backend selection.

The compiled extension is used when it imports; setting ``TORUSDISC_PURE=1``
forces the pure Python twin.
"""

import logging
import os

from . import _pykernels

log = logging.getLogger(__name__)

try:
    from . import _ckernels
except ImportError:  # pragma: no cover - depends on the build
    _ckernels = None

if _ckernels is not None and not os.environ.get("TORUSDISC_PURE"):
    kernels = _ckernels
else:
    if _ckernels is None:
        log.debug("compiled kernels unavailable, using pure Python fallback")
    kernels = _pykernels

BACKEND = kernels.NAME


def available():
    """Names of the backends importable in this environment."""
    return ("cython", "python") if _ckernels is not None else ("python",)


def get(name=None):
    if name is None:
        return kernels
    if name == "python":
        return _pykernels
    if name == "cython":
        if _ckernels is None:
            raise ImportError("compiled kernels are not built")
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
