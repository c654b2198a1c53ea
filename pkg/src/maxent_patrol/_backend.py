"""Pick the compiled kernels when importable, else the numpy fallback.

Set ``MAXENT_PATROL_BACKEND=python`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
walk_chains = _kernels_py.walk_chains
fams_log_dp = _kernels_py.fams_log_dp
fams_max_dp = _kernels_py.fams_max_dp

if os.environ.get("MAXENT_PATROL_BACKEND", "").lower() != "python":
    try:
        from . import _kernels  # type: ignore[attr-defined]
    except ImportError:
        pass
    else:
        BACKEND = "cython"
        walk_chains = _kernels.walk_chains
        fams_log_dp = _kernels.fams_log_dp
        fams_max_dp = _kernels.fams_max_dp


def get_kernels(name: str | None = None):
    """Return ``(walk_chains, fams_log_dp, fams_max_dp)`` for ``"cython"``, ``"python"`` or the active backend."""
    if name is None:
        return walk_chains, fams_log_dp, fams_max_dp
    if name == "python":
        return _kernels_py.walk_chains, _kernels_py.fams_log_dp, _kernels_py.fams_max_dp
    from . import _kernels  # type: ignore[attr-defined]

    return _kernels.walk_chains, _kernels.fams_log_dp, _kernels.fams_max_dp
