// Sparse subset-sum DP over packed (s1, s2, flags) keys and backward sampling walks.
// Key layout: s1 << 34 | s2 << 2 | flags.  Must stay in lockstep with _pykernel.py.
#pragma once
#include <algorithm>
#include <cstdint>
#include <utility>
#include <vector>

namespace tvk {

static const int S1_SHIFT = 34;
static const uint64_t S2_MASK = 0xFFFFFFFFULL;

struct Rng {
    uint64_t s[4];
};

static inline uint64_t splitmix64(uint64_t *x) {
    uint64_t z = (*x += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

static inline void rng_seed(Rng *r, uint64_t seed) {
    uint64_t x = seed;
    for (int i = 0; i < 4; i++) r->s[i] = splitmix64(&x);
}

static inline uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

static inline uint64_t rng_next(Rng *r) {
    uint64_t *s = r->s;
    uint64_t result = rotl(s[1] * 5, 7) * 9;
    uint64_t t = s[1] << 17;
    s[2] ^= s[0];
    s[3] ^= s[1];
    s[1] ^= s[2];
    s[0] ^= s[3];
    s[2] ^= t;
    s[3] = rotl(s[3], 45);
    return result;
}

// Uniform integer in [0, c), c >= 1 (Lemire's multiply-and-reject).
static inline uint64_t rng_below(Rng *r, uint64_t c) {
    uint64_t x = rng_next(r);
    __uint128_t m = (__uint128_t)x * c;
    uint64_t l = (uint64_t)m;
    if (l < c) {
        uint64_t t = (0 - c) % c;
        while (l < t) {
            x = rng_next(r);
            m = (__uint128_t)x * c;
            l = (uint64_t)m;
        }
    }
    return (uint64_t)(m >> 64);
}

struct Tables {
    std::vector<uint64_t> keys;
    std::vector<uint64_t> counts;
    std::vector<size_t> off;  // step k occupies [off[k], off[k+1])
    int steps = 0;            // number of stored steps (initial table included)
    bool full = false;

    uint64_t lookup(int step, uint64_t key) const {
        const uint64_t *b = keys.data() + off[step];
        const uint64_t *e = keys.data() + off[step + 1];
        const uint64_t *it = std::lower_bound(b, e, key);
        if (it == e || *it != key) return 0;
        return counts[it - keys.data()];
    }
    size_t size(int step) const { return off[step + 1] - off[step]; }
};

// Build the DP over items 0..k-1.  A shifted state survives iff s1 <= s1max and
// s2 <= s2lim[s1].  With keep=false only the final table is retained.
static void build(Tables &t, int k, const int64_t *dx, const int64_t *dz, const uint8_t *fl,
                  const int64_t *s2lim, int64_t s1max, bool keep) {
    std::vector<uint64_t> ck{0}, cc{1}, nk, nc;
    std::vector<std::pair<uint64_t, uint64_t>> sh;
    t.keys.clear();
    t.counts.clear();
    t.off.assign(1, 0);
    t.full = keep;
    if (keep) {
        t.keys.push_back(0);
        t.counts.push_back(1);
        t.off.push_back(1);
    }
    for (int i = 0; i < k; i++) {
        uint64_t x = (uint64_t)dx[i], z = (uint64_t)dz[i], f = fl[i];
        sh.clear();
        for (size_t a = 0; a < ck.size(); a++) {
            uint64_t key = ck[a];
            uint64_t s1 = (key >> S1_SHIFT) + x;
            if ((int64_t)s1 > s1max) continue;
            uint64_t s2 = ((key >> 2) & S2_MASK) + z;
            if ((int64_t)s2 > s2lim[s1]) continue;
            sh.emplace_back((s1 << S1_SHIFT) | (s2 << 2) | ((key & 3) | f), cc[a]);
        }
        if (f) {
            std::sort(sh.begin(), sh.end());
            size_t w = 0;
            for (size_t a = 0; a < sh.size(); a++) {
                if (w > 0 && sh[w - 1].first == sh[a].first) sh[w - 1].second += sh[a].second;
                else sh[w++] = sh[a];
            }
            sh.resize(w);
        }
        nk.clear();
        nc.clear();
        size_t a = 0, b = 0;
        while (a < ck.size() || b < sh.size()) {
            if (b == sh.size() || (a < ck.size() && ck[a] < sh[b].first)) {
                nk.push_back(ck[a]);
                nc.push_back(cc[a]);
                a++;
            } else if (a == ck.size() || sh[b].first < ck[a]) {
                nk.push_back(sh[b].first);
                nc.push_back(sh[b].second);
                b++;
            } else {
                nk.push_back(ck[a]);
                nc.push_back(cc[a] + sh[b].second);
                a++;
                b++;
            }
        }
        ck.swap(nk);
        cc.swap(nc);
        if (keep) {
            t.keys.insert(t.keys.end(), ck.begin(), ck.end());
            t.counts.insert(t.counts.end(), cc.begin(), cc.end());
            t.off.push_back(t.keys.size());
        }
    }
    if (!keep) {
        t.keys = ck;
        t.counts = cc;
        t.off.push_back(t.keys.size());
        t.steps = 1;
    } else {
        t.steps = k + 1;
    }
}

// Walk back from each terminal key through a full table set.  Returns the
// subset as a bitmask plus the float sums of xs/zs accumulated in walk order.
static void walk(const Tables &t, int k, const int64_t *dx, const int64_t *dz, const uint8_t *fl,
                 const uint64_t *bits, const double *xs, const double *zs, size_t ns,
                 const uint64_t *term, uint64_t seed, uint64_t *masks, double *X, double *Z) {
    Rng rng;
    rng_seed(&rng, seed);
    for (size_t s = 0; s < ns; s++) {
        uint64_t key = term[s];
        uint64_t cnt = t.lookup(k, key);
        uint64_t mask = 0;
        double sx = 0.0, sz = 0.0;
        for (int i = k - 1; i >= 0; i--) {
            uint64_t ex = t.lookup(i, key);
            uint64_t r = rng_below(&rng, cnt);
            if (r < ex) {
                cnt = ex;
                continue;
            }
            r -= ex;
            uint64_t s1 = key >> S1_SHIFT, s2 = (key >> 2) & S2_MASK, f = key & 3;
            uint64_t base = ((s1 - (uint64_t)dx[i]) << S1_SHIFT) | ((s2 - (uint64_t)dz[i]) << 2);
            uint64_t phi = fl[i];
            for (uint64_t g = 0; g < 4; g++) {
                if ((g | phi) != f) continue;
                uint64_t c = t.lookup(i, base | g);
                if (r < c) {
                    key = base | g;
                    cnt = c;
                    break;
                }
                r -= c;
            }
            mask |= bits[i];
            sx += xs[i];
            sz += zs[i];
        }
        masks[s] = mask;
        X[s] = sx;
        Z[s] = sz;
    }
}

}  // namespace tvk
