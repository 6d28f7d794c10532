# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Same signatures as vidmeter._pykernels."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


def ap_from_flags(rel, Py_ssize_t n_relevant):
    cdef const signed char[::1] r = np.ascontiguousarray(rel, dtype=np.int8)
    cdef Py_ssize_t k, hits = 0
    cdef double total = 0.0
    if n_relevant <= 0:
        return 0.0
    with nogil:
        for k in range(r.shape[0]):
            if r[k] != 0:
                hits += 1
                total += <double>hits / <double>(k + 1)
    return total / <double>n_relevant


def xinfap_scan(stratum, status, rates, double eps):
    cdef const int[::1] st = np.ascontiguousarray(stratum, dtype=np.int32)
    cdef const signed char[::1] js = np.ascontiguousarray(status, dtype=np.int8)
    cdef const double[::1] rt = np.ascontiguousarray(rates, dtype=np.float64)
    cdef Py_ssize_t n = st.shape[0], n_strata = rt.shape[0]
    cdef Py_ssize_t k, s
    cdef double[::1] pooled = np.zeros(n_strata)
    cdef double[::1] rel = np.zeros(n_strata)
    cdef double[::1] non = np.zeros(n_strata)
    cdef double acc, total = 0.0
    cdef int sk
    if n_strata == 0:
        return 0.0
    with nogil:
        for k in range(n):
            sk = st[k]
            if js[k] == 1 and sk >= 0:
                acc = 1.0
                for s in range(n_strata):
                    if pooled[s] > 0.0:
                        acc += pooled[s] * (rel[s] + eps) / (rel[s] + non[s] + 2.0 * eps)
                total += (acc / <double>(k + 1)) / rt[sk]
            if sk >= 0:
                pooled[sk] += 1.0
                if js[k] == 1:
                    rel[sk] += 1.0
                elif js[k] == 0:
                    non[sk] += 1.0
    return total


def signflip_exact_count(diffs, double threshold):
    """Gray-code walk over all sign vectors; one add per step."""
    cdef const double[::1] d = np.ascontiguousarray(diffs, dtype=np.float64)
    cdef Py_ssize_t t = d.shape[0], i, bit
    cdef unsigned long long step, n_steps = 1ULL << t, g, prev = 0, changed
    cdef signed char[::1] sign = np.ones(t, dtype=np.int8)
    cdef double cur = 0.0
    cdef long long count = 0
    for i in range(t):
        cur += d[i]
    with nogil:
        if fabs(cur) >= threshold:
            count += 1
        for step in range(1, n_steps):
            g = step ^ (step >> 1)
            changed = g ^ prev
            prev = g
            bit = 0
            while changed > 1:
                changed >>= 1
                bit += 1
            cur -= 2.0 * sign[bit] * d[bit]
            sign[bit] = -sign[bit]
            if fabs(cur) >= threshold:
                count += 1
    return count
