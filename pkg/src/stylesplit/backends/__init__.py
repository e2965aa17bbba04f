"""Kernel backend selection.

The hot pixel-grid kernels exist twice: a Cython extension
(``stylesplit.backends._core``) and a numpy reference (``.pure``). The
compiled backend is used when importable; set ``STYLESPLIT_BACKEND=pure``
or ``=compiled`` to force a choice. Both produce identical outputs.
"""
from __future__ import annotations

import os

from . import pure

_FORCED = os.environ.get("STYLESPLIT_BACKEND", "").strip().lower()

if _FORCED == "pure":
    _impl = pure
elif _FORCED == "compiled":
    from . import _core as _impl  # type: ignore[no-redef]
else:
    if _FORCED:
        raise RuntimeError(f"unknown STYLESPLIT_BACKEND={_FORCED!r} (use 'pure' or 'compiled')")
    try:
        from . import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = pure

disk_erode = _impl.disk_erode
disk_dilate = _impl.disk_dilate
border_points = _impl.border_points
count_within = _impl.count_within
distance_field = _impl.distance_field


def backend_name() -> str:
    """Name of the active kernel backend ('compiled' or 'pure')."""
    return _impl.NAME
