# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-particle kernels. Same contract as ``_kernels_py``."""
import numpy as np

from ._tables import BELL_QUARTERS

cdef signed char QUARTERS[16][4]
cdef signed char CUM[16][4]
cdef int _r, _k, _acc
for _r in range(16):
    _acc = 0
    for _k in range(4):
        QUARTERS[_r][_k] = BELL_QUARTERS[_r][_k]
        _acc += BELL_QUARTERS[_r][_k]
        CUM[_r][_k] = _acc

cdef enum:
    SUMMATION = 4


def bell_sample(const signed char[::1] s1, const signed char[::1] s2, const double[::1] u):
    cdef Py_ssize_t i, n = s1.shape[0]
    cdef int row, k
    cdef double x
    out = np.empty(n, dtype=np.int8)
    cdef signed char[::1] o = out
    for i in range(n):
        row = 4 * s1[i] + s2[i]
        x = 4.0 * u[i]
        k = 0
        while k < 3 and x >= CUM[row][k]:
            k += 1
        o[i] = k
    return out


def measure_bases(const signed char[::1] states, const signed char[::1] bases, const double[::1] u):
    cdef Py_ssize_t i, n = states.shape[0]
    cdef signed char s, b, bit
    bits = np.empty(n, dtype=np.int8)
    post = np.empty(n, dtype=np.int8)
    cdef signed char[::1] bv = bits
    cdef signed char[::1] pv = post
    for i in range(n):
        s = states[i]
        b = bases[i]
        if (s >> 1) == b:
            bv[i] = s & 1
            pv[i] = s
        else:
            bit = 1 if u[i] >= 0.5 else 0
            bv[i] = bit
            pv[i] = 2 * b + bit
    return bits, post


def announce(const signed char[::1] outcomes):
    cdef Py_ssize_t i, n = outcomes.shape[0]
    out = np.empty(n, dtype=np.int8)
    cdef signed char[::1] o = out
    for i in range(n):
        if outcomes[i] == 1 or outcomes[i] == 2:
            o[i] = SUMMATION
        else:
            o[i] = outcomes[i]
    return out


def audit_xx(const signed char[::1] bob, const signed char[::1] charlie, const signed char[::1] ann):
    cdef Py_ssize_t i, n = bob.shape[0]
    cdef long xx = 0, summ = 0, bad = 0
    cdef Py_ssize_t first = -1
    for i in range(n):
        if (bob[i] >> 1) != 1 or (charlie[i] >> 1) != 1:
            continue
        xx += 1
        if ann[i] == SUMMATION:
            summ += 1
        elif QUARTERS[4 * bob[i] + charlie[i]][ann[i]] == 0:
            bad += 1
            if first < 0:
                first = i
    return xx, summ, bad, first


def message_indices(const signed char[::1] bob, const signed char[::1] charlie, const signed char[::1] ann):
    cdef Py_ssize_t i, m = 0, n = bob.shape[0]
    out = np.empty(n, dtype=np.int64)
    cdef long long[::1] o = out
    # branch-free: write every index, advance only on a hit
    for i in range(n):
        o[m] = i
        m += (bob[i] < 2) & (charlie[i] < 2) & (ann[i] == SUMMATION)
    return out[:m]
