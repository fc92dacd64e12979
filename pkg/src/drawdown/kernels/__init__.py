"""Kernel backend selection: compiled Cython core with a numpy fallback.

Set DRAWDOWN_KERNEL=python to force the fallback (e.g. for benchmarking).
"""

from __future__ import annotations

import os

from . import layout  # noqa: F401  (re-exported for callers)

_forced = os.environ.get("DRAWDOWN_KERNEL", "").lower()

if _forced == "python":
    from . import _pyref as _impl

    BACKEND = "python"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        if _forced == "compiled":
            raise
        from . import _pyref as _impl

        BACKEND = "python"

run_paths = _impl.run_paths

MODE_OPTIMAL = 0
MODE_PROP = 1
