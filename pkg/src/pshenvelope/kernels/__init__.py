"""Sweep kernels: the compiled extension when it is built, numpy otherwise.

Set ``PSHENVELOPE_BACKEND=python`` to force the numpy implementation.
"""

import os

from . import _reference

BACKEND = "python"
_impl = _reference

if os.environ.get("PSHENVELOPE_BACKEND", "").lower() not in ("python", "numpy", "reference"):
    try:
        from . import _sweep as _impl  # noqa: F811

        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _reference


def get_backend(name=None):
    """Kernel module by name (``"compiled"``, ``"python"``) or the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _reference
    if name == "compiled":
        from . import _sweep

        return _sweep
    raise ValueError(f"unknown backend {name!r}")


def available_backends():
    names = ["python"]
    try:
        from . import _sweep  # noqa: F401

        names.insert(0, "compiled")
    except ImportError:
        pass
    return names
