"""Rasterization kernels.

The compiled extension is preferred when available; otherwise the numpy
reference implementation is selected at import. Both produce
bit-identical images (same arithmetic, same evaluation order), so the
choice only affects speed.
"""

from . import _numpy_ref as reference

try:
    from . import _rasterize as _impl

    BACKEND = "compiled"
except ImportError:
    _impl = reference
    BACKEND = "reference"

compiled = _impl if BACKEND == "compiled" else None

draw_disk = _impl.draw_disk


def active_backend() -> str:
    """Name of the kernel backend in use: 'compiled' or 'reference'."""
    return BACKEND
