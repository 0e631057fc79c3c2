"""Backend selection for the hot kernels.

The compiled Cython extension is used when importable; otherwise the numpy
fallback. Override with WRSN_SIM_BACKEND=compiled|pure|auto. Each backend is
deterministic; `drain_step` is bit-identical across backends, Brandes matches
to float rounding.
"""
from __future__ import annotations

import os

from . import _kernels_py

_choice = os.environ.get("WRSN_SIM_BACKEND", "auto").lower()
if _choice not in ("auto", "compiled", "pure"):
    raise RuntimeError(f"WRSN_SIM_BACKEND must be auto|compiled|pure, got {_choice!r}")

_impl = None
if _choice in ("auto", "compiled"):
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        if _choice == "compiled":
            raise RuntimeError(
                "WRSN_SIM_BACKEND=compiled but the extension is not built"
            ) from None
if _impl is None:
    _impl = _kernels_py

BACKEND: str = _impl.BACKEND

ACTIVE = _kernels_py.ACTIVE
REQUESTING = _kernels_py.REQUESTING
BEING_CHARGED = _kernels_py.BEING_CHARGED
DEAD = _kernels_py.DEAD

drain_step = _impl.drain_step
nearest_eligible = _impl.nearest_eligible
brandes_accumulate = _impl.brandes_accumulate
