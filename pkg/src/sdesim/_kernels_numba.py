"""numba kernels mirroring ``_kernels_numpy`` one-for-one.

Loops run per stream, so the random-integer sequence is the same as the
vectorised numpy path.  Uniform/float conversions are identical; only libm
``log``/``sqrt``/``cos`` may differ in the last ulp.
"""
import math

import numpy as np
from numba import njit

from ._kernels_numpy import philox4x64 as _philox_np  # noqa: F401  (re-exported for tests)
from ._kernels_numpy import to_unit, uniforms as _uniforms_np  # noqa: F401

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_S63 = np.uint64(63)
_TWO_M53 = 2.0 ** -53

_opts = dict(cache=True, nogil=True)


@njit(inline="always", **_opts)
def _mulhi(a, b):
    a_lo = a & _MASK32
    a_hi = a >> _S32
    b_lo = b & _MASK32
    b_hi = b >> _S32
    p0 = a_lo * b_lo
    p1 = a_lo * b_hi
    p2 = a_hi * b_lo
    p3 = a_hi * b_hi
    mid = (p0 >> _S32) + (p1 & _MASK32) + (p2 & _MASK32)
    return p3 + (p1 >> _S32) + (p2 >> _S32) + (mid >> _S32)


@njit(**_opts)
def _philox(c0, c1, c2, c3, k0, k1, out):
    for r in range(10):
        if r > 0:
            k0 = k0 + _W0
            k1 = k1 + _W1
        hi0 = _mulhi(c0, _M0)
        lo0 = c0 * _M0
        hi1 = _mulhi(c2, _M1)
        lo1 = c2 * _M1
        n0 = hi1 ^ c1 ^ k0
        n2 = hi0 ^ c3 ^ k1
        c0 = n0
        c1 = lo1
        c2 = n2
        c3 = lo0
    out[0] = c0
    out[1] = c1
    out[2] = c2
    out[3] = c3


@njit(**_opts)
def _word(seed, sid, lane, k, buf, cur):
    """Word k of a stream, refilling the 4-word block cache when needed."""
    b = k >> 2
    if b != cur[0]:
        _philox(np.uint64(b), lane, np.uint64(0), np.uint64(0), seed, sid, buf)
        cur[0] = b
    return buf[k & 3]


@njit(inline="always", **_opts)
def _co(w):
    return np.float64(w >> _S11) * _TWO_M53


@njit(inline="always", **_opts)
def _oo(w):
    return (np.float64(w >> _S11) + 0.5) * _TWO_M53


@njit(inline="always", **_opts)
def _oc(w):
    return (np.float64(w >> _S11) + 1.0) * _TWO_M53


@njit(**_opts)
def _raw(seed, sids, lane, start, n):
    P = sids.shape[0]
    out = np.empty((P, n), dtype=np.uint64)
    buf = np.empty(4, dtype=np.uint64)
    cur = np.empty(1, dtype=np.int64)
    for p in range(P):
        cur[0] = -1
        for i in range(n):
            out[p, i] = _word(seed, sids[p], lane, start[p] + i, buf, cur)
    return out


def _prep(seed, sids, lane, start):
    sids = np.ascontiguousarray(np.asarray(sids, dtype=np.uint64).reshape(-1))
    start = np.ascontiguousarray(np.broadcast_to(np.asarray(start, dtype=np.int64), sids.shape))
    return np.uint64(int(seed) % 2**64), sids, np.uint64(lane), start


def raw_u64(seed, sids, lane, start, n):
    seed, sids, lane, start = _prep(seed, sids, lane, start)
    return _raw(seed, sids, lane, start, int(n))


def uniforms(seed, sids, lane, start, n, kind="co"):
    return to_unit(raw_u64(seed, sids, lane, start, n), kind)


def binomial_signs(seed, sids, lane, start, n):
    w = raw_u64(seed, sids, lane, start, n)
    return 1.0 - 2.0 * (w >> _S63).astype(np.float64)


@njit(**_opts)
def _polar_stream(seed, sid, lane, k, out, npairs, buf, cur):
    """Fill ``out[:2*npairs]`` from word position k; returns the new position."""
    got = 0
    while got < npairs:
        u1 = 2.0 * _co(_word(seed, sid, lane, k, buf, cur)) - 1.0
        u2 = 2.0 * _co(_word(seed, sid, lane, k + 1, buf, cur)) - 1.0
        k += 2
        s = u1 * u1 + u2 * u2
        if s < 1.0 and s > 0.0:
            f = math.sqrt(-2.0 * math.log(s) / s)
            out[2 * got] = u1 * f
            out[2 * got + 1] = u2 * f
            got += 1
    return k


@njit(**_opts)
def _normals_polar(seed, sids, lane, start, m):
    P = sids.shape[0]
    out = np.empty((P, 2 * m))
    end = np.empty(P, dtype=np.int64)
    buf = np.empty(4, dtype=np.uint64)
    cur = np.empty(1, dtype=np.int64)
    for p in range(P):
        cur[0] = -1
        end[p] = _polar_stream(seed, sids[p], lane, start[p], out[p], m, buf, cur)
    return out, end


def normals_polar(seed, sids, lane, start, n):
    seed, sids, lane, start = _prep(seed, sids, lane, start)
    return _normals_polar(seed, sids, lane, start, (int(n) + 1) // 2)


@njit(**_opts)
def _normals_bm(seed, sids, lane, start, m):
    P = sids.shape[0]
    out = np.empty((P, 2 * m))
    end = np.empty(P, dtype=np.int64)
    buf = np.empty(4, dtype=np.uint64)
    cur = np.empty(1, dtype=np.int64)
    for p in range(P):
        cur[0] = -1
        k = start[p]
        for i in range(m):
            u1 = _oc(_word(seed, sids[p], lane, k, buf, cur))
            u2 = _co(_word(seed, sids[p], lane, k + 1, buf, cur))
            k += 2
            r = math.sqrt(-2.0 * math.log(u1))
            t = 2.0 * np.pi * u2
            out[p, 2 * i] = r * math.cos(t)
            out[p, 2 * i + 1] = r * math.sin(t)
        end[p] = k
    return out, end


def normals_box_muller(seed, sids, lane, start, n):
    seed, sids, lane, start = _prep(seed, sids, lane, start)
    return _normals_bm(seed, sids, lane, start, (int(n) + 1) // 2)


@njit(**_opts)
def _kl(seed, sids, lane, dw1, dw2, h, Q):
    P, n = dw1.shape
    out = np.empty((P, n))
    z = np.empty(4 * Q)
    buf = np.empty(4, dtype=np.uint64)
    cur = np.empty(1, dtype=np.int64)
    c = math.sqrt(2.0 / h)
    scale = h / (2.0 * np.pi)
    for p in range(P):
        cur[0] = -1
        k = np.int64(0)
        for m in range(n):
            k = _polar_stream(seed, sids[p], lane, k, z, 2 * Q, buf, cur)
            c1 = c * dw1[p, m]
            c2 = c * dw2[p, m]
            acc = 0.0
            for j in range(Q):
                acc += (z[j] * (z[3 * Q + j] - c2) - z[Q + j] * (z[2 * Q + j] - c1)) * (1.0 / (j + 1))
            out[p, m] = scale * acc
    return out


def kl_areas(seed, sids, lane, dw1, dw2, h, Q):
    seed, sids, lane, _ = _prep(seed, sids, lane, 0)
    dw1 = np.ascontiguousarray(np.atleast_2d(dw1), dtype=np.float64)
    dw2 = np.ascontiguousarray(np.atleast_2d(dw2), dtype=np.float64)
    return _kl(seed, sids, lane, dw1, dw2, float(h), int(Q))


@njit(**_opts)
def _rw(seed, sids, lane, dw1, dw2, h, Q, tail_coef):
    P, n = dw1.shape
    out = np.empty((P, n))
    buf = np.empty(4, dtype=np.uint64)
    cur = np.empty(1, dtype=np.int64)
    scale = h / (2.0 * np.pi)
    for p in range(P):
        cur[0] = -1
        k = np.int64(0)
        sid = sids[p]
        for m in range(n):
            a2 = (dw1[p, m] ** 2 + dw2[p, m] ** 2) / h
            u = _oo(_word(seed, sid, lane, k, buf, cur))
            k += 1
            x = scale * math.log(u / (1.0 - u))
            y = 0.0
            parts = 1
            if a2 > 30.0:
                parts = int(math.ceil(a2 / 30.0))
            lp = a2 / parts
            for kk in range(1, Q + 1):
                N = 0
                for part in range(parts):
                    u = _oo(_word(seed, sid, lane, k, buf, cur))
                    k += 1
                    j = 0
                    pr = math.exp(-lp)
                    F = pr
                    while u > F:
                        j += 1
                        pr *= lp / j
                        F += pr
                        if pr == 0.0 and j > lp:
                            break
                    N += j
                b = 1.0 / kk
                for j in range(N):
                    u = _oo(_word(seed, sid, lane, k, buf, cur))
                    k += 1
                    if u < 0.5:
                        y += b * math.log(2.0 * u)
                    else:
                        y += -b * math.log(2.0 - 2.0 * u)
            tail = 0.0
            while True:
                u1 = 2.0 * _co(_word(seed, sid, lane, k, buf, cur)) - 1.0
                u2 = 2.0 * _co(_word(seed, sid, lane, k + 1, buf, cur)) - 1.0
                k += 2
                s = u1 * u1 + u2 * u2
                if s < 1.0 and s > 0.0:
                    tail = u1 * math.sqrt(-2.0 * math.log(s) / s)
                    break
            out[p, m] = x + scale * y + tail_coef * math.sqrt(a2) * tail
    return out


def rw_areas(seed, sids, lane, dw1, dw2, h, Q, tail_coef):
    seed, sids, lane, _ = _prep(seed, sids, lane, 0)
    dw1 = np.ascontiguousarray(np.atleast_2d(dw1), dtype=np.float64)
    dw2 = np.ascontiguousarray(np.atleast_2d(dw2), dtype=np.float64)
    return _rw(seed, sids, lane, dw1, dw2, float(h), int(Q), float(tail_coef))


@njit(**_opts)
def _heston(dw1, dw2, h, mu, kappa, theta, eps, rho, S0, v0, keep_path):
    P, n = dw1.shape
    traj = np.empty((P, n + 1 if keep_path else 1, 2))
    cr = math.sqrt(1.0 - rho * rho)
    for p in range(P):
        S = S0
        v = v0
        if keep_path:
            traj[p, 0, 0] = S
            traj[p, 0, 1] = v
        for m in range(n):
            vp = max(0.0, v)
            sq = math.sqrt(vp)
            S = math.exp((mu - vp / 2.0) * h + sq * dw1[p, m]) * S
            v = v + kappa * (theta - vp) * h + eps * (rho * dw1[p, m] + cr * dw2[p, m]) * sq
            if keep_path:
                traj[p, m + 1, 0] = S
                traj[p, m + 1, 1] = v
        if not keep_path:
            traj[p, 0, 0] = S
            traj[p, 0, 1] = v
    return traj


def heston_ft(dw1, dw2, h, mu, kappa, theta, eps, rho, S0, v0, keep_path=False):
    dw1 = np.ascontiguousarray(np.atleast_2d(dw1), dtype=np.float64)
    dw2 = np.ascontiguousarray(np.atleast_2d(dw2), dtype=np.float64)
    out = _heston(dw1, dw2, float(h), float(mu), float(kappa), float(theta),
                  float(eps), float(rho), float(S0), float(v0), bool(keep_path))
    return out if keep_path else out[:, 0, :]
