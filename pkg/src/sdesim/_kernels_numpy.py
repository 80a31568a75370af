"""Pure-numpy kernels.

Every function vectorises across independent streams (one per path or per
sample).  Within one stream the draw order is strictly sequential so the
numba twins in ``_kernels_numba`` reproduce the same random integers.

Stream layout: Philox4x64-10 with key ``(seed, stream_id)`` and counter
``(block, lane, 0, 0)``; the k-th 64-bit word of a lane is word ``k % 4``
of block ``k // 4``.
"""
import math

import numpy as np

M0 = np.uint64(0xD2E7470EE14C6C93)
M1 = np.uint64(0xCA5A826395121157)
W0 = np.uint64(0x9E3779B97F4A7C15)
W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_S63 = np.uint64(63)
TWO_M53 = 2.0 ** -53
ROUNDS = 10


def _mulhilo(a, b):
    lo = a * b
    a_lo = a & _MASK32
    a_hi = a >> _S32
    b_lo = b & _MASK32
    b_hi = b >> _S32
    p0 = a_lo * b_lo
    p1 = a_lo * b_hi
    p2 = a_hi * b_lo
    p3 = a_hi * b_hi
    mid = (p0 >> _S32) + (p1 & _MASK32) + (p2 & _MASK32)
    hi = p3 + (p1 >> _S32) + (p2 >> _S32) + (mid >> _S32)
    return lo, hi


def philox4x64(c0, c1, c2, c3, k0, k1):
    """Philox4x64-10 on broadcastable uint64 arrays."""
    c0, c1, c2, c3, k0, k1 = np.broadcast_arrays(
        *(np.asarray(x, dtype=np.uint64) for x in (c0, c1, c2, c3, k0, k1)))
    c0, c1, c2, c3 = (np.array(x) for x in (c0, c1, c2, c3))
    k0, k1 = np.array(k0), np.array(k1)
    with np.errstate(over="ignore"):
        for r in range(ROUNDS):
            if r:
                k0 = k0 + W0
                k1 = k1 + W1
            lo0, hi0 = _mulhilo(c0, M0)
            lo1, hi1 = _mulhilo(c2, M1)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


def _as_u64(x):
    return np.asarray(x).astype(np.uint64) if np.ndim(x) else np.uint64(int(x) % 2**64)


def raw_u64(seed, sids, lane, start, n):
    """Words ``start .. start+n-1`` of each stream; ``start`` may be per-stream."""
    sids = np.asarray(sids, dtype=np.uint64).reshape(-1)
    P = sids.size
    start = np.broadcast_to(np.asarray(start, dtype=np.int64), (P,))
    if n == 0:
        return np.empty((P, 0), dtype=np.uint64)
    first = start // 4
    nb = (start % 4 + n + 3).max() // 4
    blocks = (first[:, None] + np.arange(nb, dtype=np.int64)[None, :]).astype(np.uint64)
    seed64 = np.uint64(int(seed) % 2**64)
    x = philox4x64(blocks, np.uint64(lane), 0, 0, seed64, sids[:, None])
    words = np.stack(x, axis=-1).reshape(P, nb * 4)
    cols = (start % 4)[:, None] + np.arange(n)[None, :]
    return np.take_along_axis(words, cols, axis=1)


def to_unit(words, kind="co"):
    """Map 64-bit words to doubles: 'co' [0,1), 'oo' (0,1), 'oc' (0,1]."""
    m = (words >> _S11).astype(np.float64)
    if kind == "co":
        return m * TWO_M53
    if kind == "oo":
        return (m + 0.5) * TWO_M53
    if kind == "oc":
        return (m + 1.0) * TWO_M53
    raise ValueError(kind)


def uniforms(seed, sids, lane, start, n, kind="co"):
    return to_unit(raw_u64(seed, sids, lane, start, n), kind)


def binomial_signs(seed, sids, lane, start, n):
    """+1/-1 from the top bit of each word."""
    w = raw_u64(seed, sids, lane, start, n)
    return 1.0 - 2.0 * (w >> _S63).astype(np.float64)


def polar_factor(s):
    return np.sqrt(-2.0 * np.log(s) / s)


def normals_polar(seed, sids, lane, start, n):
    """Marsaglia polar normals; returns ``(z[P, 2*ceil(n/2)], end_word[P])``."""
    sids = np.asarray(sids, dtype=np.uint64).reshape(-1)
    P = sids.size
    m = (n + 1) // 2
    out = np.empty((P, 2 * m))
    pos = np.broadcast_to(np.asarray(start, dtype=np.int64), (P,)).copy()
    if m == 0:
        return out, pos
    have = np.zeros(P, dtype=np.int64)
    pending = np.arange(P)
    while pending.size:
        need = m - have[pending]
        nmax = int(need.max())
        chunk = int(nmax / 0.785 + 4.0 * math.sqrt(nmax) + 16)
        w = raw_u64(seed, sids[pending], lane, pos[pending], 2 * chunk)
        u = 2.0 * to_unit(w) - 1.0
        u1 = u[:, 0::2]
        u2 = u[:, 1::2]
        s = u1 * u1 + u2 * u2
        acc = (s < 1.0) & (s > 0.0)
        rank = np.cumsum(acc, axis=1)
        take = acc & (rank <= need[:, None])
        r, c = np.nonzero(take)
        f = polar_factor(s[r, c])
        dest = have[pending][r] + rank[r, c] - 1
        rows = pending[r]
        out[rows, 2 * dest] = u1[r, c] * f
        out[rows, 2 * dest + 1] = u2[r, c] * f
        done = rank[:, -1] >= need
        last = np.argmax(rank >= need[:, None], axis=1)
        pos[pending] += np.where(done, 2 * (last + 1), 2 * chunk)
        have[pending] += np.minimum(rank[:, -1], need)
        pending = pending[~done]
    return out, pos


def normals_box_muller(seed, sids, lane, start, n):
    """Box-Muller normals; each pair uses exactly two words."""
    m = (n + 1) // 2
    w = raw_u64(seed, sids, lane, start, 2 * m)
    u1 = to_unit(w[:, 0::2], "oc")
    u2 = to_unit(w[:, 1::2], "co")
    r = np.sqrt(-2.0 * np.log(u1))
    t = 2.0 * np.pi * u2
    out = np.empty((w.shape[0], 2 * m))
    out[:, 0::2] = r * np.cos(t)
    out[:, 1::2] = r * np.sin(t)
    end = np.broadcast_to(np.asarray(start, dtype=np.int64), (w.shape[0],)) + 2 * m
    return out, end


def kl_areas(seed, sids, lane, dw1, dw2, h, Q):
    """Truncated Karhunen-Loeve Levy areas, one per (stream, step).

    Per step the stream supplies 4Q normals ordered U_1..U_Q, V_1..V_Q,
    X_1..X_Q, Y_1..Y_Q.
    """
    dw1 = np.atleast_2d(dw1)
    dw2 = np.atleast_2d(dw2)
    P, n = dw1.shape
    z, _ = normals_polar(seed, sids, lane, 0, 4 * Q * n)
    z = z[:, :4 * Q * n].reshape(P, n, 4, Q)
    U, V, X, Y = z[:, :, 0], z[:, :, 1], z[:, :, 2], z[:, :, 3]
    c = math.sqrt(2.0 / h)
    inv_k = 1.0 / np.arange(1, Q + 1)
    terms = U * (Y - c * dw2[..., None]) - V * (X - c * dw1[..., None])
    return h / (2.0 * np.pi) * (terms @ inv_k)


class _Cursor:
    """Per-stream word positions for variable-consumption samplers."""

    def __init__(self, seed, sids, lane):
        self.seed = seed
        self.sids = np.asarray(sids, dtype=np.uint64).reshape(-1)
        self.lane = lane
        self.pos = np.zeros(self.sids.size, dtype=np.int64)

    def words(self, idx):
        p = self.pos[idx]
        blocks = (p // 4).astype(np.uint64)
        x = philox4x64(blocks, np.uint64(self.lane), 0, 0,
                       np.uint64(int(self.seed) % 2**64), self.sids[idx])
        w = np.stack(x, axis=-1)[np.arange(p.size), p % 4]
        self.pos[idx] += 1
        return w

    def unit(self, idx, kind):
        return to_unit(self.words(idx), kind)


def _poisson(cur, idx, lam):
    """Inversion by sequential search; rates above 30 are split into equal parts."""
    counts = np.zeros(idx.size, dtype=np.int64)
    parts = np.where(lam > 30.0, np.ceil(lam / 30.0), 1.0).astype(np.int64)
    for part in range(int(parts.max()) if idx.size else 0):
        a = np.nonzero(parts > part)[0]
        lp = lam[a] / parts[a]
        u = cur.unit(idx[a], "oo")
        k = np.zeros(a.size, dtype=np.int64)
        p = np.exp(-lp)
        F = p.copy()
        live = np.nonzero(u > F)[0]
        while live.size:
            k[live] += 1
            p[live] *= lp[live] / k[live]
            F[live] += p[live]
            stop = (p[live] == 0.0) & (k[live] > lp[live])
            live = live[(u[live] > F[live]) & ~stop]
        counts[a] += k
    return counts


def _laplace(u, b):
    return np.where(u < 0.5, b * np.log(2.0 * u), -b * np.log(2.0 - 2.0 * u))


def _polar_one(cur, idx):
    z = np.empty(idx.size)
    live = np.arange(idx.size)
    while live.size:
        u1 = 2.0 * cur.unit(idx[live], "co") - 1.0
        u2 = 2.0 * cur.unit(idx[live], "co") - 1.0
        s = u1 * u1 + u2 * u2
        ok = (s < 1.0) & (s > 0.0)
        z[live[ok]] = u1[ok] * polar_factor(s[ok])
        live = live[~ok]
    return z


def rw_areas(seed, sids, lane, dw1, dw2, h, Q, tail_coef):
    """Ryden-Wiktorsson Levy areas: logistic part + truncated compound Poisson
    Laplace sum + Normal tail with std ``tail_coef * a``."""
    dw1 = np.atleast_2d(dw1)
    dw2 = np.atleast_2d(dw2)
    P, n = dw1.shape
    scale = h / (2.0 * np.pi)
    cur = _Cursor(seed, sids, lane)
    everyone = np.arange(P)
    out = np.empty((P, n))
    for m in range(n):
        a2 = (dw1[:, m] ** 2 + dw2[:, m] ** 2) / h
        u = cur.unit(everyone, "oo")
        x = scale * np.log(u / (1.0 - u))
        y = np.zeros(P)
        for k in range(1, Q + 1):
            N = _poisson(cur, everyone, a2)
            for j in range(int(N.max())):
                a = np.nonzero(N > j)[0]
                y[a] += _laplace(cur.unit(a, "oo"), 1.0 / k)
        tail = _polar_one(cur, everyone)
        out[:, m] = x + scale * y + tail_coef * np.sqrt(a2) * tail
    return out


def heston_ft(dw1, dw2, h, mu, kappa, theta, eps, rho, S0, v0, keep_path=False):
    """Full-truncation Euler on (S, v); log-space update for S."""
    dw1 = np.atleast_2d(dw1)
    dw2 = np.atleast_2d(dw2)
    P, n = dw1.shape
    S = np.full(P, float(S0))
    v = np.full(P, float(v0))
    traj = np.empty((P, n + 1, 2)) if keep_path else None
    if keep_path:
        traj[:, 0, 0] = S
        traj[:, 0, 1] = v
    cr = math.sqrt(1.0 - rho * rho)
    for m in range(n):
        vp = np.maximum(0.0, v)
        sq = np.sqrt(vp)
        S = np.exp((mu - vp / 2.0) * h + sq * dw1[:, m]) * S
        v = v + kappa * (theta - vp) * h + eps * (rho * dw1[:, m] + cr * dw2[:, m]) * sq
        if keep_path:
            traj[:, m + 1, 0] = S
            traj[:, m + 1, 1] = v
    return traj if keep_path else np.stack([S, v], axis=-1)
