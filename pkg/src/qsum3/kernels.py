"""Backend selection for the per-particle kernels.

The compiled Cython module is used when importable; set ``QSUM3_PURE_PYTHON=1``
to force the numpy fallback. Both backends consume identical random inputs, so
transcripts do not depend on which one is active.
"""
import os

from . import _kernels_py

if os.environ.get("QSUM3_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = "cython" if _impl is not _kernels_py else "python"

bell_sample = _impl.bell_sample
measure_bases = _impl.measure_bases
announce = _impl.announce
audit_xx = _impl.audit_xx
message_indices = _impl.message_indices

__all__ = ["BACKEND", "bell_sample", "measure_bases", "announce", "audit_xx", "message_indices"]
