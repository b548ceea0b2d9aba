"""Pure-Python DP and sampling kernels.

Reference semantics for the compiled kernel: same key packing, same pruning,
same PRNG (splitmix64-seeded xoshiro256**) and the same walk, so both
backends return identical results for a given seed.  Counts are Python ints,
so this backend also covers pools too large for 64-bit counters.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"

S1_SHIFT = 34
S2_MASK = 0xFFFFFFFF
M64 = (1 << 64) - 1


def _splitmix64(x: int) -> tuple[int, int]:
    x = (x + 0x9E3779B97F4A7C15) & M64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M64
    return x, z ^ (z >> 31)


class Xoshiro256:
    """xoshiro256** with splitmix64 seeding."""

    __slots__ = ("s",)

    def __init__(self, seed: int):
        x = seed & M64
        s = []
        for _ in range(4):
            x, v = _splitmix64(x)
            s.append(v)
        self.s = s

    def next(self) -> int:
        s = self.s
        s1 = s[1]
        r = (s1 * 5) & M64
        r = (((r << 7) | (r >> 57)) & M64) * 9 & M64
        t = (s1 << 17) & M64
        s[2] ^= s[0]
        s[3] ^= s1
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = ((s[3] << 45) | (s[3] >> 19)) & M64
        return r

    def below(self, c: int) -> int:
        """Uniform integer in [0, c); Lemire's method for c < 2**64."""
        if c >= 1 << 64:
            # wide range: rejection on concatenated words
            nbits = c.bit_length()
            while True:
                v = 0
                for _ in range((nbits + 63) // 64):
                    v = (v << 64) | self.next()
                v >>= (-nbits) % 64
                if v < c:
                    return v
        m = self.next() * c
        lo = m & M64
        if lo < c:
            t = ((1 << 64) - c) % c
            while lo < t:
                m = self.next() * c
                lo = m & M64
        return m >> 64


class Table:
    def __init__(self, dx, dz, fl, s2lim, s1max: int, keep: bool = True):
        self.dx = [int(v) for v in dx]
        self.dz = [int(v) for v in dz]
        self.fl = [int(v) for v in fl]
        self.k = len(self.dx)
        self.full = keep
        lim = [int(v) for v in s2lim]
        cur: dict[int, int] = {0: 1}
        steps = [cur] if keep else []
        for x, z, f in zip(self.dx, self.dz, self.fl):
            nxt = dict(cur)
            for key, c in cur.items():
                s1 = (key >> S1_SHIFT) + x
                if s1 > s1max:
                    continue
                s2 = ((key >> 2) & S2_MASK) + z
                if s2 > lim[s1]:
                    continue
                nk = (s1 << S1_SHIFT) | (s2 << 2) | ((key & 3) | f)
                nxt[nk] = nxt.get(nk, 0) + c
            cur = nxt
            if keep:
                steps.append(cur)
        if not keep:
            steps = [cur]
        self._steps = steps

    @property
    def n_states(self) -> int:
        return sum(len(s) for s in self._steps)

    def final(self):
        last = self._steps[-1]
        keys = sorted(last)
        counts = [last[k] for k in keys]
        if counts and max(counts) >= 1 << 63:
            return np.array(keys, dtype=object), np.array(counts, dtype=object)
        return np.array(keys, dtype=np.uint64), np.array(counts, dtype=np.uint64)

    def count(self, step: int, key: int) -> int:
        if not self.full:
            raise ValueError("table was built without per-step storage")
        return self._steps[step].get(int(key), 0)

    def walk(self, terminals, seed: int, bits, xs, zs):
        if not self.full:
            raise ValueError("table was built without per-step storage")
        rng = Xoshiro256(int(seed))
        steps = self._steps
        k = self.k
        bits = [int(b) for b in bits]
        xs = [float(v) for v in xs]
        zs = [float(v) for v in zs]
        masks, X, Z = [], [], []
        for key in terminals:
            key = int(key)
            cnt = steps[k][key]
            mask = 0
            sx = 0.0
            sz = 0.0
            for i in range(k - 1, -1, -1):
                prev = steps[i]
                ex = prev.get(key, 0)
                r = rng.below(cnt)
                if r < ex:
                    cnt = ex
                    continue
                r -= ex
                base = (((key >> S1_SHIFT) - self.dx[i]) << S1_SHIFT) | (
                    (((key >> 2) & S2_MASK) - self.dz[i]) << 2
                )
                f = key & 3
                phi = self.fl[i]
                for g in range(4):
                    if (g | phi) != f:
                        continue
                    c = prev.get(base | g, 0)
                    if r < c:
                        key = base | g
                        cnt = c
                        break
                    r -= c
                mask |= bits[i]
                sx += xs[i]
                sz += zs[i]
            masks.append(mask)
            X.append(sx)
            Z.append(sz)
        if masks and max(masks) >= 1 << 64:
            marr = np.array(masks, dtype=object)
        else:
            marr = np.array(masks, dtype=np.uint64)
        return marr, np.array(X, dtype=np.float64), np.array(Z, dtype=np.float64)
