"""Selects the scoring backend at import.

The compiled extension (phraseboost._kernels, built from _kernels.pyx)
is preferred when importable; otherwise the pure-NumPy implementation
takes over. Override with PHRASEBOOST_BACKEND=python|compiled.
"""

from __future__ import annotations

import os
from contextlib import contextmanager

try:
    from . import _kernels
except ImportError:
    _kernels = None

_FORCED = os.environ.get("PHRASEBOOST_BACKEND", "").strip().lower()
if _FORCED not in ("", "python", "compiled"):
    raise RuntimeError(f"PHRASEBOOST_BACKEND must be 'python' or 'compiled', got {_FORCED!r}")
if _FORCED == "compiled" and _kernels is None:
    raise RuntimeError("PHRASEBOOST_BACKEND=compiled but the compiled extension is not importable")

HAVE_COMPILED = _kernels is not None


def compiled_active() -> bool:
    return HAVE_COMPILED and _FORCED != "python"


def backend_name() -> str:
    return "compiled" if compiled_active() else "python"


def kernels():
    """The compiled module, or None when inactive."""
    return _kernels if compiled_active() else None


@contextmanager
def forced_backend(name: str):
    """Temporarily pin the backend ("python" or "compiled")."""
    global _FORCED
    if name == "compiled" and _kernels is None:
        raise RuntimeError("compiled extension is not importable")
    if name not in ("python", "compiled"):
        raise ValueError(f"unknown backend {name!r}")
    previous = _FORCED
    _FORCED = name
    try:
        yield
    finally:
        _FORCED = previous
