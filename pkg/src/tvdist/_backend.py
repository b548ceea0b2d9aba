"""Kernel selection: the compiled extension when importable, else pure Python.

Set TVDIST_BACKEND=python to force the fallback.
"""

from __future__ import annotations

import os

from . import _pykernel

_compiled = None
if os.environ.get("TVDIST_BACKEND", "").lower() != "python":
    try:
        from . import _kernel as _compiled  # type: ignore[attr-defined,no-redef]
    except ImportError:  # pragma: no cover - depends on the build
        _compiled = None

# 64-bit counters and masks in the compiled kernel
COMPILED_MAX_ITEMS = 62


def available() -> list[str]:
    return (["compiled"] if _compiled is not None else []) + ["python"]


def default_name() -> str:
    return "compiled" if _compiled is not None else "python"


def kernel(name: str | None = None, n_items: int = 0):
    """Return the kernel module for ``name`` (None = default), honouring size limits."""
    name = name or default_name()
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernel is not available")
        if n_items > COMPILED_MAX_ITEMS:
            return _pykernel
        return _compiled
    if name == "python":
        return _pykernel
    raise ValueError(f"unknown backend {name!r}")
