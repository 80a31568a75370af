"""Counter-based random streams and the variate generators built on them.

A stream is addressed by ``(seed, stream_id, lane)``; its n-th 64-bit word is
a pure function of those values and n (Philox4x64-10), so any path can be
replayed in isolation and the result does not depend on how paths are
scheduled across workers.

Lane assignment used by the simulation modules (stream_id = path index):

    LANE_GAUSSIAN  driving Gaussian increments
    LANE_BINOMIAL  driving +-sqrt(h) increments
    LANE_KL        Karhunen-Loeve area normals
    LANE_RW        Ryden-Wiktorsson area draws
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from ._kernels_numpy import TWO_M53
from .errors import InvalidParameterError

LANE_GAUSSIAN = 0
LANE_BINOMIAL = 1
LANE_KL = 2
LANE_RW = 3
LANE_USER = 8

POISSON_INVERSION_MAX = 30.0


def polar_transform(u1: float, u2: float):
    """Polar map of a point in the square [-1, 1]^2.

    Returns the Normal pair, or ``None`` when the point is rejected
    (``S = 0`` or ``S >= 1``).
    """
    s = u1 * u1 + u2 * u2
    if not 0.0 < s < 1.0:
        return None
    f = math.sqrt(-2.0 * math.log(s) / s)
    return u1 * f, u2 * f


def box_muller_transform(u1: float, u2: float):
    """``u1`` in (0, 1], ``u2`` in [0, 1)."""
    if not 0.0 < u1 <= 1.0:
        raise InvalidParameterError("Box-Muller needs u1 in (0, 1]")
    r = math.sqrt(-2.0 * math.log(u1))
    t = 2.0 * math.pi * u2
    return r * math.cos(t), r * math.sin(t)


def poisson_inversion(u: float, rate: float) -> int:
    """Sequential-search inversion of the Poisson CDF at ``u``."""
    k = 0
    p = math.exp(-rate)
    F = p
    while u > F:
        k += 1
        p *= rate / k
        F += p
        if p == 0.0 and k > rate:
            break
    return k


def laplace_inverse(u: float, scale: float) -> float:
    if u < 0.5:
        return scale * math.log(2.0 * u)
    return -scale * math.log(2.0 - 2.0 * u)


def _check_positive(name, value):
    if not value > 0:
        raise InvalidParameterError(f"{name} must be positive, got {value}")


@dataclass
class RngStream:
    """One replayable stream; ``counter`` counts 64-bit words consumed.

    Instances are cheap values: copy one (``dataclasses.replace``) to fork a
    replay point.  Bulk methods go through the active kernel backend.
    """

    seed: int
    stream_id: int = 0
    lane: int = 0
    counter: int = 0
    _spare: float | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not 0 <= int(self.stream_id) < 2**64:
            raise InvalidParameterError("stream_id must fit in 64 bits")
        self.seed = int(self.seed) % 2**64

    def substream(self, lane: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id, lane)

    # -- raw material -------------------------------------------------
    def words(self, n: int) -> np.ndarray:
        w = kernels.raw_u64(self.seed, [self.stream_id], self.lane, self.counter, n)[0]
        self.counter += n
        return w

    def uniform(self) -> float:
        """Uniform on [0, 1)."""
        return float(self.uniforms(1)[0])

    def uniforms(self, n: int, kind: str = "co") -> np.ndarray:
        """``kind``: 'co' [0,1), 'oo' (0,1), 'oc' (0,1]."""
        m = self.words(n) >> np.uint64(11)
        offset = {"co": 0.0, "oo": 0.5, "oc": 1.0}[kind]
        return (m.astype(np.float64) + offset) * TWO_M53

    # -- Normals ------------------------------------------------------
    def normal_pair(self) -> tuple[float, float]:
        """Two independent standard Normals by the polar method."""
        while True:
            u1, u2 = 2.0 * self.uniforms(2) - 1.0
            pair = polar_transform(u1, u2)
            if pair is not None:
                return pair

    def normal_box_muller(self) -> tuple[float, float]:
        u1 = float(self.uniforms(1, "oc")[0])
        u2 = float(self.uniforms(1, "co")[0])
        return box_muller_transform(u1, u2)

    def normals(self, n: int, method: str = "polar") -> np.ndarray:
        """``n`` standard Normals continuing the stream's Normal sequence."""
        out = np.empty(n)
        i = 0
        if self._spare is not None and n:
            out[0] = self._spare
            self._spare = None
            i = 1
        rest = n - i
        if rest:
            gen = {"polar": kernels.normals_polar,
                   "box_muller": kernels.normals_box_muller}[method]
            z, end = gen(self.seed, [self.stream_id], self.lane, self.counter, rest)
            self.counter = int(end[0])
            out[i:] = z[0, :rest]
            if z.shape[1] > rest:
                self._spare = float(z[0, rest])
        return out

    # -- Increments and auxiliary variates ---------------------------------
    def wiener_increment(self, h: float) -> float:
        _check_positive("h", h)
        return math.sqrt(h) * float(self.normals(1)[0])

    def wiener_increments(self, h: float, n: int) -> np.ndarray:
        _check_positive("h", h)
        return math.sqrt(h) * self.normals(n)

    def binomial_increment(self, h: float) -> float:
        return float(self.binomial_increments(h, 1)[0])

    def binomial_increments(self, h: float, n: int) -> np.ndarray:
        _check_positive("h", h)
        top = (self.words(n) >> np.uint64(63)).astype(np.float64)
        return math.sqrt(h) * (1.0 - 2.0 * top)

    def poisson(self, rate: float) -> int:
        if rate < 0 or not math.isfinite(rate):
            raise InvalidParameterError(f"Poisson rate must be >= 0, got {rate}")
        parts = max(1, math.ceil(rate / POISSON_INVERSION_MAX))
        return sum(poisson_inversion(float(self.uniforms(1, "oo")[0]), rate / parts)
                   for _ in range(parts))

    def poissons(self, rate: float, n: int) -> np.ndarray:
        return np.array([self.poisson(rate) for _ in range(n)], dtype=np.int64)

    def laplace(self, scale: float) -> float:
        _check_positive("scale", scale)
        return laplace_inverse(float(self.uniforms(1, "oo")[0]), scale)

    def laplaces(self, scale: float, n: int) -> np.ndarray:
        _check_positive("scale", scale)
        u = self.uniforms(n, "oo")
        return np.where(u < 0.5, scale * np.log(2.0 * u), -scale * np.log(2.0 - 2.0 * u))


def path_normals(seed: int, stream_ids, n: int, lane: int = LANE_GAUSSIAN,
                 method: str = "polar") -> np.ndarray:
    """``(len(stream_ids), n)`` Normals, each row from the start of its lane."""
    gen = {"polar": kernels.normals_polar, "box_muller": kernels.normals_box_muller}[method]
    z, _ = gen(seed, np.asarray(stream_ids), lane, 0, n)
    return z[:, :n]


def path_signs(seed: int, stream_ids, n: int, lane: int = LANE_BINOMIAL) -> np.ndarray:
    return kernels.binomial_signs(seed, np.asarray(stream_ids), lane, 0, n)
