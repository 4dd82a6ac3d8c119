"""Backend selection for the sampling kernels.

The compiled extension is used when it imported cleanly; otherwise the
pure NumPy fallback takes over. Set DEPO_FORCE_FALLBACK=1 to skip the
extension even when it is available (useful for parity testing and
benchmarking). Both backends are bit-identical by contract.
"""

import os

from . import _fallback

if os.environ.get("DEPO_FORCE_FALLBACK", "0") not in ("", "0"):
    _impl = _fallback
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _fallback

sample_episode = _impl.sample_episode
iql_sweep = _impl.iql_sweep
BACKEND: str = _impl.BACKEND


def backend() -> str:
    """Name of the active kernel backend: 'cython' or 'python'."""
    return BACKEND
