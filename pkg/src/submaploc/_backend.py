"""Kernel backend selection.

The compiled extension is preferred when it imported cleanly; the numpy
fallback is always available.  ``SUBMAPLOC_BACKEND=python|compiled|auto``
overrides the choice at import time (``compiled`` fails loudly instead of
silently falling back).
"""

import os

from .errors import ConfigError

_CHOICES = ("auto", "compiled", "python")


def _load():
    choice = os.environ.get("SUBMAPLOC_BACKEND", "auto")
    if choice not in _CHOICES:
        raise ConfigError(
            f"SUBMAPLOC_BACKEND must be one of {_CHOICES}, got {choice!r}")
    if choice in ("auto", "compiled"):
        try:
            from . import _kernels as impl
            return impl
        except ImportError:
            if choice == "compiled":
                raise
    from . import _kernels_py as impl
    return impl


kernels = _load()
BACKEND = kernels.BACKEND_NAME


def get_kernels(name=None):
    """Kernel module by name ("compiled" or "python"); default is the active one."""
    if name is None:
        return kernels
    if name == "python":
        from . import _kernels_py
        return _kernels_py
    if name == "compiled":
        from . import _kernels
        return _kernels
    raise ConfigError(f"unknown kernel backend {name!r}")
