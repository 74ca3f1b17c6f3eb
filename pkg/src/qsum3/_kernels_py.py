"""Pure-Python (numpy) implementation of the per-particle kernels.

Mirrors ``_kernels.pyx`` exactly; used when the compiled module is not
available or ``QSUM3_PURE_PYTHON`` is set.
"""
import numpy as np

from ._tables import BELL_QUARTERS, SUMMATION

_QUARTERS = np.array(BELL_QUARTERS, dtype=np.int8)
_CUM = np.cumsum(_QUARTERS, axis=1).astype(np.float64)


def bell_sample(s1, s2, u):
    cum = _CUM[4 * s1.astype(np.intp) + s2]
    return np.count_nonzero(4.0 * u[:, None] >= cum, axis=1).astype(np.int8)


def measure_bases(states, bases, u):
    same = (states >> 1) == bases
    bits = np.where(same, states & 1, (u >= 0.5).astype(np.int8)).astype(np.int8)
    post = np.where(same, states, 2 * bases + bits).astype(np.int8)
    return bits, post


def announce(outcomes):
    masked = (outcomes == 1) | (outcomes == 2)
    return np.where(masked, SUMMATION, outcomes).astype(np.int8)


def audit_xx(bob, charlie, ann):
    xx = ((bob >> 1) == 1) & ((charlie >> 1) == 1)
    summ = ann == SUMMATION
    direct = xx & ~summ
    idx = 4 * bob.astype(np.intp) + charlie
    legal = _QUARTERS[idx, np.where(summ, 0, ann)] > 0
    bad = np.flatnonzero(direct & ~legal)
    first = int(bad[0]) if bad.size else -1
    return int(xx.sum()), int((xx & summ).sum()), int(bad.size), first


def message_indices(bob, charlie, ann):
    return np.flatnonzero((bob < 2) & (charlie < 2) & (ann == SUMMATION)).astype(np.int64)
