# cython: cdivision=True, boundscheck=False, wraparound=False
"""Compiled kernels: SplitMix64 steps and FNV-1a 64-bit hashing.

Bit-identical to the pure-Python backend in ``_pykernels``.
"""

from libc.stdint cimport uint64_t
from cpython.bytes cimport PyBytes_AS_STRING, PyBytes_FromStringAndSize

cdef uint64_t _GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t _FNV_OFFSET = 0xCBF29CE484222325ULL
cdef uint64_t _FNV_PRIME = 0x100000001B3ULL

FNV_OFFSET = _FNV_OFFSET
FNV_PRIME = _FNV_PRIME


cdef inline uint64_t _mix(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


def fnv1a64(data):
    cdef const unsigned char[::1] view = data
    cdef uint64_t h = _FNV_OFFSET
    cdef Py_ssize_t i
    for i in range(view.shape[0]):
        h = (h ^ view[i]) * _FNV_PRIME
    return h


def splitmix64_next(state):
    cdef uint64_t s = state
    s += _GOLDEN
    return s, _mix(s)


def splitmix64_bounded(state, bound):
    """Advance past rejected draws and return an unbiased value in [0, bound)."""
    cdef uint64_t s = state
    cdef uint64_t b = bound
    cdef uint64_t threshold, value
    if b < 1:
        raise ValueError("bound must be >= 1")
    threshold = (<uint64_t>0 - b) % b
    while True:
        s += _GOLDEN
        value = _mix(s)
        if value >= threshold:
            return s, value % b


def splitmix64_fill_bounded(state, bound, count):
    cdef uint64_t s = state
    cdef uint64_t b = bound
    cdef Py_ssize_t n = count
    cdef uint64_t threshold, value
    cdef Py_ssize_t i
    if b < 1:
        raise ValueError("bound must be >= 1")
    threshold = (<uint64_t>0 - b) % b
    out = []
    for i in range(n):
        while True:
            s += _GOLDEN
            value = _mix(s)
            if value >= threshold:
                out.append(value % b)
                break
    return s, out


def splitmix64_bytes(state, count):
    """Return `count` deterministic bytes (little-endian packed u64 draws)."""
    cdef uint64_t s = state
    cdef Py_ssize_t n = count
    cdef bytes out = PyBytes_FromStringAndSize(NULL, n)
    cdef unsigned char* p = <unsigned char*>PyBytes_AS_STRING(out)
    cdef Py_ssize_t i = 0, j, step
    cdef uint64_t value
    while i < n:
        s += _GOLDEN
        value = _mix(s)
        step = 8 if n - i >= 8 else n - i
        for j in range(step):
            p[i + j] = <unsigned char>((value >> (8 * j)) & 0xFF)
        i += step
    return s, out
