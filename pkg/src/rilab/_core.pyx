# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops.

Every kernel mirrors a function of the same name in :mod:`rilab._pycore`
and draws from the raw 64-bit stream of the supplied numpy bit generator in
the same order, so both backends return identical results for identical
generators.
"""
import numpy as np
cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport log
from libc.stdlib cimport malloc, realloc, free
from libc.stdint cimport uint64_t, int64_t
from numpy.random cimport bitgen_t

cnp.import_array()

cdef double TWO_M52 = 2.220446049250313e-16


cdef inline bitgen_t* _bitgen(object bit_generator) except NULL:
    return <bitgen_t*> PyCapsule_GetPointer(bit_generator.capsule, "BitGenerator")


cdef inline int _direction(bitgen_t* rng, int ndir) noexcept nogil:
    cdef uint64_t raw = rng.next_uint64(rng.state)
    return <int> (((raw >> 32) * <uint64_t> ndir) >> 32)


cdef inline double _uniform(bitgen_t* rng) noexcept nogil:
    # strictly inside (0, 1)
    cdef uint64_t raw = rng.next_uint64(rng.state)
    return ((raw >> 12) + 0.5) * TWO_M52


cdef inline double _exponential(bitgen_t* rng) noexcept nogil:
    return -log(_uniform(rng))


def escape_walks(int d, int R, int64_t[:] start, const unsigned char[:] kmask,
                 int64_t nwalks, object bit_generator):
    """Count walks from ``start`` that reach ``|y|_inf = R`` before returning to the mask."""
    cdef bitgen_t* rng = _bitgen(bit_generator)
    cdef int64_t side = 2 * R + 1
    cdef int64_t stride[16]
    cdef int64_t c[16]
    cdef int a, k, ndir = 2 * d
    cdef int64_t f, f0 = 0, w, escaped = 0
    if d > 16:
        raise ValueError("dimension too large")
    stride[d - 1] = 1
    for a in range(d - 2, -1, -1):
        stride[a] = stride[a + 1] * side
    for a in range(d):
        f0 += (start[a] + R) * stride[a]
    with bit_generator.lock, nogil:
        for w in range(nwalks):
            for a in range(d):
                c[a] = start[a]
            f = f0
            while True:
                k = _direction(rng, ndir)
                a = k >> 1
                if k & 1:
                    c[a] -= 1
                    f -= stride[a]
                else:
                    c[a] += 1
                    f += stride[a]
                if c[a] >= R or c[a] <= -R:
                    escaped += 1
                    break
                if kmask[f]:
                    break
    return escaped


def return_counts(int d, int R, int64_t nwalks, object bit_generator):
    """Number of returns to the origin of each walk before it reaches ``|y|_inf = R``."""
    cdef bitgen_t* rng = _bitgen(bit_generator)
    cdef int64_t c[16]
    cdef int a, k, ndir = 2 * d
    cdef int64_t w, nonzero
    out = np.zeros(nwalks, dtype=np.int64)
    cdef int64_t[:] counts = out
    if d > 16:
        raise ValueError("dimension too large")
    with bit_generator.lock, nogil:
        for w in range(nwalks):
            for a in range(d):
                c[a] = 0
            nonzero = 0
            while True:
                k = _direction(rng, ndir)
                a = k >> 1
                if c[a] == 0:
                    nonzero += 1
                if k & 1:
                    c[a] -= 1
                else:
                    c[a] += 1
                if c[a] == 0:
                    nonzero -= 1
                if c[a] >= R or c[a] <= -R:
                    break
                if nonzero == 0:
                    counts[w] += 1
    return out


cdef struct Recorder:
    int64_t n
    int64_t cap
    int64_t* site
    double* hold
    int64_t* step


cdef int _rec_push(Recorder* rec, int64_t site, double hold, int64_t step) noexcept nogil:
    cdef int64_t newcap
    if rec.n == rec.cap:
        newcap = 1024 if rec.cap == 0 else 2 * rec.cap
        rec.site = <int64_t*> realloc(rec.site, newcap * sizeof(int64_t))
        rec.hold = <double*> realloc(rec.hold, newcap * sizeof(double))
        rec.step = <int64_t*> realloc(rec.step, newcap * sizeof(int64_t))
        if rec.site == NULL or rec.hold == NULL or rec.step == NULL:
            return -1
        rec.cap = newcap
    rec.site[rec.n] = site
    rec.hold[rec.n] = hold
    rec.step[rec.n] = step
    rec.n += 1
    return 0


cdef object _rec_finish(Recorder* rec):
    sites = np.empty(rec.n, dtype=np.int64)
    holds = np.empty(rec.n, dtype=np.float64)
    steps = np.empty(rec.n, dtype=np.int64)
    cdef int64_t i
    cdef int64_t[:] s = sites
    cdef double[:] h = holds
    cdef int64_t[:] st = steps
    for i in range(rec.n):
        s[i] = rec.site[i]
        h[i] = rec.hold[i]
        st[i] = rec.step[i]
    free(rec.site)
    free(rec.hold)
    free(rec.step)
    return sites, holds, steps


def trace_chain(const int64_t[:, :] nbr, const int64_t[:] bsites,
                const double[:, :] ret_cdf, const int64_t[:] entries,
                const int64_t[:] offsets, object bit_generator, bint record=False):
    """Run the exact trace of forward walks on a window.

    ``nbr[i, k]`` is the window index reached from site ``i`` in direction
    ``k``, or ``-1 - z`` when the step leaves the window at outer site ``z``.
    ``ret_cdf[z]`` is the cumulative re-entry law of a walk started at ``z``
    over the inner-boundary sites ``bsites``; its last entry is the total
    return probability.
    """
    cdef bitgen_t* rng = _bitgen(bit_generator)
    cdef int64_t nsites = nbr.shape[0]
    cdef int ndir = nbr.shape[1]
    cdef int64_t nb = bsites.shape[0]
    cdef int64_t nsamp = offsets.shape[0] - 1
    cdef int64_t s, t, x, nxt, z, lo, hi, mid
    cdef int k
    cdef double hold, u
    cdef Recorder rec
    occ = np.zeros((nsamp, nsites), dtype=np.float64)
    sig = np.zeros((nsamp, nsites), dtype=np.float64)
    lengths = np.zeros(entries.shape[0], dtype=np.int64)
    cdef double[:, :] L = occ
    cdef double[:, :] S = sig
    cdef int64_t[:] nvis = lengths
    rec.n = 0
    rec.cap = 0
    rec.site = NULL
    rec.hold = NULL
    rec.step = NULL
    cdef int failed = 0
    with bit_generator.lock, nogil:
        for s in range(nsamp):
            for t in range(offsets[s], offsets[s + 1]):
                x = entries[t]
                while True:
                    hold = _exponential(rng)
                    L[s, x] += hold
                    if S[s, x] == 0.0:
                        S[s, x] = hold
                    k = _direction(rng, ndir)
                    nvis[t] += 1
                    if record:
                        if _rec_push(&rec, x, hold, k) != 0:
                            failed = 1
                            break
                    nxt = nbr[x, k]
                    if nxt >= 0:
                        x = nxt
                        continue
                    z = -1 - nxt
                    u = _uniform(rng)
                    if u >= ret_cdf[z, nb - 1]:
                        break
                    lo = 0
                    hi = nb - 1
                    while lo < hi:
                        mid = (lo + hi) >> 1
                        if ret_cdf[z, mid] > u:
                            hi = mid
                        else:
                            lo = mid + 1
                    x = bsites[lo]
                if failed:
                    break
            if failed:
                break
    if failed:
        free(rec.site)
        free(rec.hold)
        free(rec.step)
        raise MemoryError("trajectory record buffer")
    if record:
        return occ, sig, lengths, _rec_finish(&rec)
    return occ, sig, lengths, None


def killed_chain(int d, int R, const int64_t[:] wmap, const int64_t[:] starts,
                 const int64_t[:] offsets, int64_t nsites, object bit_generator,
                 bint record=False):
    """Forward walks killed on reaching ``|y|_inf = R``; holds drawn inside the window only.

    ``wmap`` maps flat indices of the box ``[-R, R]^d`` to window indices
    (``-1`` outside the window); ``starts`` are flat box indices.
    """
    cdef bitgen_t* rng = _bitgen(bit_generator)
    cdef int64_t side = 2 * R + 1
    cdef int64_t stride[16]
    cdef int64_t c[16]
    cdef int a, k, ndir = 2 * d
    cdef int64_t nsamp = offsets.shape[0] - 1
    cdef int64_t s, t, f, rem, x
    cdef double hold
    cdef Recorder rec
    cdef int failed = 0
    if d > 16:
        raise ValueError("dimension too large")
    stride[d - 1] = 1
    for a in range(d - 2, -1, -1):
        stride[a] = stride[a + 1] * side
    occ = np.zeros((nsamp, nsites), dtype=np.float64)
    sig = np.zeros((nsamp, nsites), dtype=np.float64)
    lengths = np.zeros(starts.shape[0], dtype=np.int64)
    cdef double[:, :] L = occ
    cdef double[:, :] S = sig
    cdef int64_t[:] nvis = lengths
    rec.n = 0
    rec.cap = 0
    rec.site = NULL
    rec.hold = NULL
    rec.step = NULL
    with bit_generator.lock, nogil:
        for s in range(nsamp):
            for t in range(offsets[s], offsets[s + 1]):
                f = starts[t]
                rem = f
                for a in range(d):
                    c[a] = rem // stride[a] - R
                    rem = rem % stride[a]
                while True:
                    x = wmap[f]
                    if x >= 0:
                        hold = _exponential(rng)
                        L[s, x] += hold
                        if S[s, x] == 0.0:
                            S[s, x] = hold
                    k = _direction(rng, ndir)
                    if x >= 0:
                        nvis[t] += 1
                        if record:
                            if _rec_push(&rec, x, hold, k) != 0:
                                failed = 1
                                break
                    a = k >> 1
                    if k & 1:
                        c[a] -= 1
                        f -= stride[a]
                    else:
                        c[a] += 1
                        f += stride[a]
                    if c[a] >= R or c[a] <= -R:
                        break
                if failed:
                    break
            if failed:
                break
    if failed:
        free(rec.site)
        free(rec.hold)
        free(rec.step)
        raise MemoryError("trajectory record buffer")
    if record:
        return occ, sig, lengths, _rec_finish(&rec)
    return occ, sig, lengths, None


cdef inline int64_t _find(int64_t* parent, int64_t i) noexcept nogil:
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


def label_components(const unsigned char[:] bits, const int64_t[:] shape,
                     const int64_t[:, :] back_offsets):
    """Union-find labelling of open sites on a box.

    ``back_offsets`` lists neighbour displacements whose first nonzero
    coordinate is negative, so every adjacent pair is visited once. The
    returned array holds, for each open site, the smallest flat index in its
    component, and ``-1`` for closed sites.
    """
    cdef int d = shape.shape[0]
    cdef int64_t n = bits.shape[0]
    cdef int noff = back_offsets.shape[0]
    cdef int64_t stride[16]
    cdef int64_t c[16]
    cdef int a, j
    cdef int64_t i, rem, nb, ra, rb, q
    cdef bint ok
    if d > 16:
        raise ValueError("dimension too large")
    out = np.full(n, -1, dtype=np.int64)
    cdef int64_t[:] parent = out
    stride[d - 1] = 1
    for a in range(d - 2, -1, -1):
        stride[a] = stride[a + 1] * shape[a + 1]
    with nogil:
        for i in range(n):
            if not bits[i]:
                continue
            parent[i] = i
            rem = i
            for a in range(d):
                c[a] = rem // stride[a]
                rem = rem % stride[a]
            for j in range(noff):
                ok = True
                nb = i
                for a in range(d):
                    q = c[a] + back_offsets[j, a]
                    if q < 0 or q >= shape[a]:
                        ok = False
                        break
                    nb += back_offsets[j, a] * stride[a]
                if not ok or not bits[nb]:
                    continue
                ra = _find(&parent[0], i)
                rb = _find(&parent[0], nb)
                if ra < rb:
                    parent[rb] = ra
                elif rb < ra:
                    parent[ra] = rb
        for i in range(n):
            if parent[i] >= 0:
                parent[i] = _find(&parent[0], i)
    return out
