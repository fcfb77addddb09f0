"""Pure-Python twins of the compiled kernels in ``_core.pyx``.

The functions consume the raw 64-bit output of the bit generator in exactly
the same order as the compiled versions, so results are bit-identical. They
are slow and exist so the package works without a C compiler.
"""
import math

import numpy as np

_TWO_M52 = 2.0 ** -52
_MASK32 = (1 << 32) - 1


class _RawStream:
    """Buffered reader over ``bit_generator.random_raw``."""

    def __init__(self, bit_generator, chunk=4096):
        self._bg = bit_generator
        self._chunk = chunk
        self._buf = []
        self._pos = 0

    def next(self):
        if self._pos == len(self._buf):
            self._buf = self._bg.random_raw(self._chunk).tolist()
            self._pos = 0
        raw = self._buf[self._pos]
        self._pos += 1
        return raw

    def direction(self, ndir):
        return ((self.next() >> 32) * ndir) >> 32

    def uniform(self):
        return ((self.next() >> 12) + 0.5) * _TWO_M52

    def exponential(self):
        return -math.log(self.uniform())


def escape_walks(d, R, start, kmask, nwalks, bit_generator):
    rng = _RawStream(bit_generator)
    side = 2 * R + 1
    stride = [side ** (d - 1 - a) for a in range(d)]
    f0 = sum((int(start[a]) + R) * stride[a] for a in range(d))
    kmask = np.asarray(kmask)
    ndir = 2 * d
    escaped = 0
    for _ in range(nwalks):
        c = [int(v) for v in start]
        f = f0
        while True:
            k = rng.direction(ndir)
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


def return_counts(d, R, nwalks, bit_generator):
    rng = _RawStream(bit_generator)
    ndir = 2 * d
    out = np.zeros(nwalks, dtype=np.int64)
    for w in range(nwalks):
        c = [0] * d
        nonzero = 0
        count = 0
        while True:
            k = rng.direction(ndir)
            a = k >> 1
            if c[a] == 0:
                nonzero += 1
            c[a] += -1 if k & 1 else 1
            if c[a] == 0:
                nonzero -= 1
            if c[a] >= R or c[a] <= -R:
                break
            if nonzero == 0:
                count += 1
        out[w] = count
    return out


def _records(sites, holds, steps):
    return (np.asarray(sites, dtype=np.int64), np.asarray(holds, dtype=np.float64),
            np.asarray(steps, dtype=np.int64))


def trace_chain(nbr, bsites, ret_cdf, entries, offsets, bit_generator, record=False):
    rng = _RawStream(bit_generator)
    nbr = np.asarray(nbr)
    nsites, ndir = nbr.shape
    nbr_l = nbr.tolist()
    bsites_l = np.asarray(bsites).tolist()
    cdf_l = np.asarray(ret_cdf).tolist()
    nb = len(bsites_l)
    offsets = np.asarray(offsets)
    entries_l = np.asarray(entries).tolist()
    nsamp = len(offsets) - 1
    occ = np.zeros((nsamp, nsites))
    sig = np.zeros((nsamp, nsites))
    lengths = np.zeros(len(entries_l), dtype=np.int64)
    rs, rh, rk = [], [], []
    for s in range(nsamp):
        L = [0.0] * nsites
        S = [0.0] * nsites
        for t in range(int(offsets[s]), int(offsets[s + 1])):
            x = entries_l[t]
            n = 0
            while True:
                hold = rng.exponential()
                L[x] += hold
                if S[x] == 0.0:
                    S[x] = hold
                k = rng.direction(ndir)
                n += 1
                if record:
                    rs.append(x)
                    rh.append(hold)
                    rk.append(k)
                nxt = nbr_l[x][k]
                if nxt >= 0:
                    x = nxt
                    continue
                row = cdf_l[-1 - nxt]
                u = rng.uniform()
                if u >= row[nb - 1]:
                    break
                lo, hi = 0, nb - 1
                while lo < hi:
                    mid = (lo + hi) >> 1
                    if row[mid] > u:
                        hi = mid
                    else:
                        lo = mid + 1
                x = bsites_l[lo]
            lengths[t] = n
        occ[s] = L
        sig[s] = S
    return occ, sig, lengths, (_records(rs, rh, rk) if record else None)


def killed_chain(d, R, wmap, starts, offsets, nsites, bit_generator, record=False):
    rng = _RawStream(bit_generator)
    side = 2 * R + 1
    stride = [side ** (d - 1 - a) for a in range(d)]
    wmap = np.asarray(wmap).tolist()
    offsets = np.asarray(offsets)
    starts = np.asarray(starts).tolist()
    nsamp = len(offsets) - 1
    ndir = 2 * d
    occ = np.zeros((nsamp, nsites))
    sig = np.zeros((nsamp, nsites))
    lengths = np.zeros(len(starts), dtype=np.int64)
    rs, rh, rk = [], [], []
    for s in range(nsamp):
        L = [0.0] * nsites
        S = [0.0] * nsites
        for t in range(int(offsets[s]), int(offsets[s + 1])):
            f = starts[t]
            rem = f
            c = []
            for a in range(d):
                c.append(rem // stride[a] - R)
                rem %= stride[a]
            n = 0
            while True:
                x = wmap[f]
                if x >= 0:
                    hold = rng.exponential()
                    L[x] += hold
                    if S[x] == 0.0:
                        S[x] = hold
                k = rng.direction(ndir)
                if x >= 0:
                    n += 1
                    if record:
                        rs.append(x)
                        rh.append(hold)
                        rk.append(k)
                a = k >> 1
                if k & 1:
                    c[a] -= 1
                    f -= stride[a]
                else:
                    c[a] += 1
                    f += stride[a]
                if c[a] >= R or c[a] <= -R:
                    break
            lengths[t] = n
        occ[s] = L
        sig[s] = S
    return occ, sig, lengths, (_records(rs, rh, rk) if record else None)


def label_components(bits, shape, back_offsets):
    bits = np.asarray(bits, dtype=bool)
    shape = [int(v) for v in shape]
    d = len(shape)
    n = bits.size
    parent = [-1] * n
    stride = [1] * d
    for a in range(d - 2, -1, -1):
        stride[a] = stride[a + 1] * shape[a + 1]
    offs = [list(map(int, o)) for o in np.asarray(back_offsets)]
    open_l = bits.tolist()

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        if not open_l[i]:
            continue
        parent[i] = i
        rem = i
        c = []
        for a in range(d):
            c.append(rem // stride[a])
            rem %= stride[a]
        for o in offs:
            nb = i
            ok = True
            for a in range(d):
                q = c[a] + o[a]
                if q < 0 or q >= shape[a]:
                    ok = False
                    break
                nb += o[a] * stride[a]
            if not ok or not open_l[nb]:
                continue
            ra, rb = find(i), find(nb)
            if ra < rb:
                parent[rb] = ra
            elif rb < ra:
                parent[ra] = rb
    out = np.array([find(i) if parent[i] >= 0 else -1 for i in range(n)], dtype=np.int64)
    return out
