# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled edit-distance kernels. API mirrors ``_pure``."""

import numpy as np

cimport numpy as cnp
from libc.stdlib cimport free, malloc

cnp.import_array()


cdef inline int _imin3(int x, int y, int z) nogil:
    cdef int m = x
    if y < m:
        m = y
    if z < m:
        m = z
    return m


cdef int _lev(const Py_UCS4* a, int la, const Py_UCS4* b, int lb, int sub_cost) nogil:
    cdef int i, j, tmp, cost
    cdef int* prev
    cdef int* cur
    cdef int* swap
    if la == 0:
        return lb
    if lb == 0:
        return la
    prev = <int*> malloc((lb + 1) * sizeof(int))
    cur = <int*> malloc((lb + 1) * sizeof(int))
    if prev == NULL or cur == NULL:
        if prev != NULL:
            free(prev)
        if cur != NULL:
            free(cur)
        return -1
    for j in range(lb + 1):
        prev[j] = j
    for i in range(1, la + 1):
        cur[0] = i
        for j in range(1, lb + 1):
            cost = 0 if a[i - 1] == b[j - 1] else sub_cost
            cur[j] = _imin3(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
        swap = prev
        prev = cur
        cur = swap
    tmp = prev[lb]
    free(prev)
    free(cur)
    return tmp


cdef int _lev_str(str a, str b, int sub_cost) except -1:
    cdef cnp.ndarray[cnp.uint32_t, ndim=1] ua = np.frombuffer(
        a.encode("utf-32-le"), dtype=np.uint32).copy()
    cdef cnp.ndarray[cnp.uint32_t, ndim=1] ub = np.frombuffer(
        b.encode("utf-32-le"), dtype=np.uint32).copy()
    cdef int la = ua.shape[0]
    cdef int lb = ub.shape[0]
    cdef int r = _lev(<const Py_UCS4*> cnp.PyArray_DATA(ua), la,
                      <const Py_UCS4*> cnp.PyArray_DATA(ub), lb, sub_cost)
    if r < 0:
        raise MemoryError()
    return r


def levenshtein(str a, str b):
    """Unit-cost edit distance."""
    if a == b:
        return 0
    return _lev_str(a, b, 1)


def levenshtein2(str a, str b):
    """Edit distance with substitution cost 2, insert/delete cost 1."""
    if a == b:
        return 0
    return _lev_str(a, b, 2)


def _many(list xs, list ys, int sub_cost):
    if len(xs) != len(ys):
        raise ValueError("input lists must have equal length")
    cdef Py_ssize_t n = len(xs)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t i
    for i in range(n):
        if xs[i] == ys[i]:
            out[i] = 0
        else:
            out[i] = _lev_str(xs[i], ys[i], sub_cost)
    return out


def levenshtein_many(list xs, list ys):
    return _many(xs, ys, 1)


def levenshtein2_many(list xs, list ys):
    return _many(xs, ys, 2)


def distance_matrix(list xs, list ys, int sub_cost):
    """Full cross matrix of edit distances; strings are encoded once."""
    cdef Py_ssize_t nx = len(xs)
    cdef Py_ssize_t ny = len(ys)
    cdef list ex = [np.frombuffer(s.encode("utf-32-le"), dtype=np.uint32).copy()
                    for s in xs]
    cdef list ey = [np.frombuffer(s.encode("utf-32-le"), dtype=np.uint32).copy()
                    for s in ys]
    cdef cnp.ndarray[cnp.int32_t, ndim=2] out = np.empty((nx, ny), dtype=np.int32)
    cdef cnp.ndarray[cnp.uint32_t, ndim=1] ua, ub
    cdef Py_ssize_t i, j
    cdef int r
    for i in range(nx):
        ua = ex[i]
        for j in range(ny):
            ub = ey[j]
            r = _lev(<const Py_UCS4*> cnp.PyArray_DATA(ua), ua.shape[0],
                     <const Py_UCS4*> cnp.PyArray_DATA(ub), ub.shape[0],
                     sub_cost)
            if r < 0:
                raise MemoryError()
            out[i, j] = r
    return out
