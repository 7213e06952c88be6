"""Backend selection for the numerical kernels.

The compiled extension is preferred when it imported cleanly.  Setting the
environment variable ``GRAVELAST_BACKEND`` to ``python`` or ``compiled``
pins the choice at import time; ``use()`` switches it afterwards.
"""

import os
from contextlib import contextmanager

from . import _fallback

try:
    from . import _core
except ImportError:
    _core = None

_BACKENDS = {"python": _fallback}
if _core is not None:
    _BACKENDS["compiled"] = _core


def _initial():
    forced = os.environ.get("GRAVELAST_BACKEND", "").strip().lower()
    if forced:
        if forced not in ("python", "compiled"):
            raise RuntimeError(
                "GRAVELAST_BACKEND must be 'python' or 'compiled', got %r" % forced)
        if forced == "compiled" and _core is None:
            raise RuntimeError(
                "GRAVELAST_BACKEND=compiled but the extension is not built")
        return forced
    return "compiled" if _core is not None else "python"


_active_name = _initial()


def have_compiled():
    """True if the compiled extension imported successfully."""
    return _core is not None


def active():
    """Return the module providing the kernel functions."""
    return _BACKENDS[_active_name]


def active_name():
    return _active_name


@contextmanager
def use(name):
    """Temporarily switch backends ('python' or 'compiled')."""
    global _active_name
    if name not in _BACKENDS:
        raise ValueError("backend %r not available" % name)
    prev = _active_name
    _active_name = name
    try:
        yield _BACKENDS[name]
    finally:
        _active_name = prev


def worker_count():
    """Number of worker threads, from GRAVELAST_THREADS (default 1)."""
    raw = os.environ.get("GRAVELAST_THREADS", "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise RuntimeError("GRAVELAST_THREADS must be an integer, got %r" % raw)
    return max(1, n)
