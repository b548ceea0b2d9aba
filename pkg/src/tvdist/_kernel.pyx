# distutils: language = c++
# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled DP and sampling kernels (see _pykernel for the reference semantics)."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport int64_t, uint8_t, uint64_t
from libcpp cimport bool as cbool

cnp.import_array()

cdef extern from "_ckernel.hpp" namespace "tvk":
    cdef cppclass Tables:
        int steps
        cbool full
        uint64_t lookup(int step, uint64_t key) nogil
        size_t size(int step) nogil
    void build(Tables &t, int k, const int64_t *dx, const int64_t *dz, const uint8_t *fl,
               const int64_t *s2lim, int64_t s1max, cbool keep) nogil
    void walk(const Tables &t, int k, const int64_t *dx, const int64_t *dz, const uint8_t *fl,
              const uint64_t *bits, const double *xs, const double *zs, size_t ns,
              const uint64_t *term, uint64_t seed, uint64_t *masks, double *X, double *Z) nogil

cdef extern from *:
    """
    static inline uint64_t tvk_key_at(const tvk::Tables &t, int step, size_t i) {
        return t.keys[t.off[step] + i];
    }
    static inline uint64_t tvk_count_at(const tvk::Tables &t, int step, size_t i) {
        return t.counts[t.off[step] + i];
    }
    """
    uint64_t tvk_key_at(const Tables &t, int step, size_t i) nogil
    uint64_t tvk_count_at(const Tables &t, int step, size_t i) nogil


BACKEND = "compiled"


cdef class Table:
    cdef Tables t
    cdef int64_t[::1] dx
    cdef int64_t[::1] dz
    cdef uint8_t[::1] fl
    cdef readonly int k
    cdef readonly bint full

    def __init__(self, dx, dz, fl, s2lim, int64_t s1max, bint keep=True):
        self.dx = np.ascontiguousarray(dx, dtype=np.int64)
        self.dz = np.ascontiguousarray(dz, dtype=np.int64)
        self.fl = np.ascontiguousarray(fl, dtype=np.uint8)
        cdef int64_t[::1] lim = np.ascontiguousarray(s2lim, dtype=np.int64)
        self.k = self.dx.shape[0]
        self.full = keep
        cdef const int64_t *px = &self.dx[0] if self.k else NULL
        cdef const int64_t *pz = &self.dz[0] if self.k else NULL
        cdef const uint8_t *pf = &self.fl[0] if self.k else NULL
        cdef const int64_t *pl = &lim[0]
        with nogil:
            build(self.t, self.k, px, pz, pf, pl, s1max, keep)

    @property
    def n_states(self):
        cdef size_t tot = 0
        cdef int i
        for i in range(self.t.steps):
            tot += self.t.size(i)
        return tot

    def final(self):
        """Sorted final keys and counts as uint64 arrays."""
        cdef int last = self.t.steps - 1
        cdef size_t m = self.t.size(last)
        keys = np.empty(m, dtype=np.uint64)
        counts = np.empty(m, dtype=np.uint64)
        cdef uint64_t[::1] kv = keys
        cdef uint64_t[::1] cv = counts
        cdef size_t i
        for i in range(m):
            kv[i] = _key_at(self, last, i)
            cv[i] = _count_at(self, last, i)
        return keys, counts

    def count(self, int step, uint64_t key):
        if not self.full:
            raise ValueError("table was built without per-step storage")
        return self.t.lookup(step, key)

    def walk(self, terminals, uint64_t seed, bits, xs, zs):
        if not self.full:
            raise ValueError("table was built without per-step storage")
        cdef uint64_t[::1] term = np.ascontiguousarray(terminals, dtype=np.uint64)
        cdef uint64_t[::1] bv = np.ascontiguousarray(bits, dtype=np.uint64)
        cdef double[::1] xv = np.ascontiguousarray(xs, dtype=np.float64)
        cdef double[::1] zv = np.ascontiguousarray(zs, dtype=np.float64)
        cdef size_t ns = term.shape[0]
        masks = np.zeros(ns, dtype=np.uint64)
        X = np.zeros(ns, dtype=np.float64)
        Z = np.zeros(ns, dtype=np.float64)
        if ns == 0:
            return masks, X, Z
        cdef uint64_t[::1] mv = masks
        cdef double[::1] Xv = X
        cdef double[::1] Zv = Z
        cdef const int64_t *px = &self.dx[0] if self.k else NULL
        cdef const int64_t *pz = &self.dz[0] if self.k else NULL
        cdef const uint8_t *pf = &self.fl[0] if self.k else NULL
        cdef const uint64_t *pb = &bv[0] if self.k else NULL
        cdef const double *pxs = &xv[0] if self.k else NULL
        cdef const double *pzs = &zv[0] if self.k else NULL
        with nogil:
            walk(self.t, self.k, px, pz, pf, pb, pxs, pzs, ns, &term[0], seed,
                 &mv[0], &Xv[0], &Zv[0])
        return masks, X, Z


cdef inline uint64_t _key_at(Table tb, int step, size_t i):
    return tvk_key_at(tb.t, step, i)


cdef inline uint64_t _count_at(Table tb, int step, size_t i):
    return tvk_count_at(tb.t, step, i)
