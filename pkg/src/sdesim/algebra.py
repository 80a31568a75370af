"""Word combinatorics for iterated Stratonovich and Ito integrals.

A word is a tuple of letters in ``{0, 1, ..., d}``; letter 0 is time.
``J_w`` denotes the iterated Stratonovich integral with the first letter
innermost, ``I_w`` the Ito one.  Words also parse from digit strings such
as ``"1122"`` (single-digit letters only).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import InvalidParameterError, SdeSimError

WordLike = Union[str, Sequence[int]]


class UnsupportedLengthError(SdeSimError, ValueError):
    """Raised for Stratonovich-to-Ito relations beyond length four."""


def as_word(w: WordLike) -> tuple:
    if isinstance(w, str):
        if w and not w.isdigit():
            raise InvalidParameterError(f"bad word {w!r}")
        return tuple(int(c) for c in w)
    word = tuple(int(a) for a in w)
    if any(a < 0 for a in word):
        raise InvalidParameterError("letters must be nonnegative")
    return word


def word_str(w) -> str:
    return "".join(str(a) for a in w) if all(a < 10 for a in w) else ",".join(map(str, w))


@dataclass(frozen=True)
class WordStats:
    z: int
    d: int
    in_D: bool

    @property
    def n(self) -> int:
        return self.z + self.d


def decompose(word: WordLike) -> WordStats:
    """Greedy left-to-right tiling by the blocks ``0`` and ``ii`` (i != 0)."""
    w = as_word(word)
    z = sum(1 for a in w if a == 0)
    pairs = 0
    tiled = True
    i = 0
    while i < len(w):
        if w[i] == 0:
            i += 1
        elif i + 1 < len(w) and w[i + 1] == w[i]:
            pairs += 1
            i += 2
        else:
            tiled = False
            i += 1
    return WordStats(z, pairs, tiled)


@dataclass(frozen=True)
class Monomial:
    """``coef * t**power`` with an exact rational coefficient."""

    coef: Fraction
    power: int

    def __call__(self, t):
        return float(self.coef) * t ** self.power

    def integrate(self) -> "Monomial":
        return Monomial(self.coef / (self.power + 1), self.power + 1)


def expected_stratonovich(word: WordLike, t=None):
    """``E J_w(t) = t^n / (2^d n!)`` on D*, else 0.

    Returns a ``Monomial`` when ``t`` is None, otherwise a float.
    """
    s = decompose(word)
    if s.in_D:
        m = Monomial(Fraction(1, 2 ** s.d * math.factorial(s.n)), s.n)
    else:
        m = Monomial(Fraction(0), 0)
    return m if t is None else m(t)


def expected_ito(word: WordLike, t=None):
    """``E I_w``: ``t^k/k!`` for the all-zero word of length k, else 0."""
    w = as_word(word)
    if any(a != 0 for a in w):
        m = Monomial(Fraction(0), 0)
    else:
        m = Monomial(Fraction(1, math.factorial(len(w))), len(w))
    return m if t is None else m(t)


def _eq(a, b):
    return a == b and a != 0


def strat_to_ito(word: WordLike) -> list:
    """``J_w`` as a list of ``(coefficient, Ito word)`` pairs, length <= 4."""
    w = as_word(word)
    n = len(w)
    half, quarter = Fraction(1, 2), Fraction(1, 4)
    out = [(Fraction(1), w)]
    if n <= 1:
        return out
    if n == 2:
        if _eq(w[0], w[1]):
            out.append((half, (0,)))
        return out
    if n == 3:
        a1, a2, a3 = w
        if _eq(a1, a2):
            out.append((half, (0, a3)))
        if _eq(a2, a3):
            out.append((half, (a1, 0)))
        return out
    if n == 4:
        a1, a2, a3, a4 = w
        if _eq(a1, a2) and _eq(a3, a4):
            out.append((quarter, (0, 0)))
        if _eq(a1, a2):
            out.append((half, (0, a3, a4)))
        if _eq(a2, a3):
            out.append((half, (a1, 0, a4)))
        if _eq(a3, a4):
            out.append((half, (a1, a2, 0)))
        return out
    raise UnsupportedLengthError(f"relations are tabulated up to length 4, got {n}")


def expected_stratonovich_via_ito(word: WordLike) -> Monomial:
    """``E J_w`` assembled from ``strat_to_ito`` and ``expected_ito``."""
    total = {}
    for c, iw in strat_to_ito(word):
        m = expected_ito(iw)
        if m.coef:
            total[m.power] = total.get(m.power, Fraction(0)) + c * m.coef
    total = {p: c for p, c in total.items() if c}
    if not total:
        return Monomial(Fraction(0), 0)
    if len(total) > 1:
        raise SdeSimError("mixed powers of t; relation table is inconsistent")
    (p, c), = total.items()
    return Monomial(c, p)


def all_words(d: int, max_len: int, min_len: int = 0) -> Iterable[tuple]:
    for n in range(min_len, max_len + 1):
        yield from itertools.product(range(d + 1), repeat=n)


# -- drift conversion ----------------------------------------------------------

def ito_correction(model, y):
    """``(1/2) sum_i dV_i(y)[V_i(y)]``."""
    y = np.asarray(y, dtype=float)
    V = model.diffusion(y)
    corr = np.zeros_like(y)
    for i in range(model.d):
        corr = corr + model.diffusion_jvp(y, V[..., :, i])[..., :, i]
    return 0.5 * corr


def ito_drift_to_strat(model, y):
    """``V0 = V0_ito - (1/2) sum_i dV_i[V_i]`` at ``y``."""
    return np.asarray(model.drift_ito(y)) - ito_correction(model, y)


def strat_drift_to_ito(model, y, v0):
    return np.asarray(v0) + ito_correction(model, y)


# -- semigroup expansion -------------------------------------------------------

@dataclass
class SemigroupReport:
    d: int
    k: int
    expansion: dict = field(repr=False)
    expected: dict = field(repr=False)
    count: int = 0
    expansion_matches: bool = False
    count_matches: bool = False
    expectations_match: bool = False

    @property
    def ok(self) -> bool:
        return self.expansion_matches and self.count_matches and self.expectations_match


def expand_generator_power(d: int, k: int) -> dict:
    """Formal expansion of ``(V0 + (1/2) sum_i V_i V_i)^k`` as ``{word: coefficient}``."""
    blocks = [((0,), Fraction(1))] + [((i, i), Fraction(1, 2)) for i in range(1, d + 1)]
    out = {}
    for choice in itertools.product(blocks, repeat=k):
        w = tuple(itertools.chain.from_iterable(b for b, _ in choice))
        c = math.prod((c for _, c in choice), start=Fraction(1))
        out[w] = out.get(w, Fraction(0)) + c
    return out


def semigroup_coefficient_check(d: int, k: int) -> SemigroupReport:
    """Compare the formal expansion with D* words of ``n(w) = k`` found by brute force."""
    if d < 1 or k < 0:
        raise InvalidParameterError("need d >= 1 and k >= 0")
    expansion = expand_generator_power(d, k)
    expected = {}
    for w in all_words(d, 2 * k, k):
        s = decompose(w)
        if s.in_D and s.n == k:
            expected[w] = Fraction(1, 2 ** s.d)
    # E J_w = t^k/k! times the expansion coefficient
    exp_ok = all(expected_stratonovich(w) == Monomial(c / math.factorial(k), k)
                 for w, c in expansion.items())
    return SemigroupReport(d, k, expansion, expected, len(expected),
                           expansion == expected, len(expected) == (d + 1) ** k, exp_ok)


# -- Monte Carlo iterated integrals --------------------------------------------

def mc_iterated_integrals(words, t: float, increments):
    """Stratonovich iterated integrals of sampled paths by the trapezoid recursion.

    ``increments`` has shape ``(P, d, n)``; letter 0 uses ``dt = t/n``.
    Returns ``{word: (P,) values}``.
    """
    dW = np.asarray(increments, dtype=float)
    P, d, n = dW.shape
    dt = t / n
    words = [as_word(w) for w in words]
    prefixes = sorted({w[:j] for w in words for j in range(len(w) + 1)}, key=len)
    cache = {(): None}
    for pre in prefixes:
        if not pre:
            continue
        if max(pre) > d:
            raise InvalidParameterError(f"letter out of range in {pre}")
        parent = cache[pre[:-1]]
        a = pre[-1]
        inc = np.full((P, n), dt) if a == 0 else dW[:, a - 1, :]
        if parent is None:
            avg = np.ones((P, n))
        else:
            avg = 0.5 * (parent[:, :-1] + parent[:, 1:])
        vals = np.zeros((P, n + 1))
        np.cumsum(avg * inc, axis=1, out=vals[:, 1:])
        cache[pre] = vals
    return {w: (cache[w][:, -1] if w else np.ones(P)) for w in words}


def identity_suite(max_len: int = 4, d: int = 2) -> list:
    """Exact checks used by ``selftest``: list of ``(name, passed)``."""
    results = []
    for w in all_words(d, max_len, 1):
        results.append((f"E J_{word_str(w)} via Ito",
                        expected_stratonovich(w) == expected_stratonovich_via_ito(w)))
    for dd in (1, 2, 3):
        for k in range(0, 5):
            results.append((f"semigroup d={dd} k={k}", semigroup_coefficient_check(dd, k).ok))
    return results
