"""Levy area of a 2-D Wiener path over one step, given the step increments.

Three samplers with a cost knob ``Q``:

* ``kl``   truncated Karhunen-Loeve series, Q terms (4Q Normals);
* ``rw``   logistic + compound-Poisson Laplace series truncated at Q with a
           Normal surrogate for the dropped tail;
* ``cond`` conditional expectation given Q sub-step increments.

``char_function`` and the Fourier-inversion density/CDF are the oracle the
samplers are tested against.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import integrate, optimize, special
from scipy.interpolate import CubicSpline

from ._backend import kernels
from .errors import InvalidParameterError, QuadratureError
from .rng import LANE_KL, LANE_RW, RngStream, path_normals
from .wiener import PathBundle, pair_indices

METHODS = ("kl", "rw", "cond")
PHI_CUTOFF = 1e-12


@dataclass(frozen=True)
class LevyContext:
    h: float
    dw1: float
    dw2: float

    def __post_init__(self):
        if not self.h > 0:
            raise InvalidParameterError("h must be positive")

    @property
    def a2(self) -> float:
        return (self.dw1 ** 2 + self.dw2 ** 2) / self.h

    @classmethod
    def from_a2(cls, h, a2):
        """Context with ``dW1 = sqrt(a2 h)``, ``dW2 = 0``; the law depends on a2 only."""
        return cls(h, math.sqrt(a2 * h), 0.0)


@dataclass(frozen=True)
class SamplerBudget:
    """Truncation count; ``Q=None`` means the method's automatic rule."""

    Q: Optional[int] = None

    def __post_init__(self):
        if self.Q is not None and int(self.Q) < 1:
            raise InvalidParameterError("Q must be >= 1")

    def resolve(self, method: str, h: float) -> int:
        if self.Q is not None:
            return int(self.Q)
        return auto_q(method, h)


def auto_q(method: str, h: float) -> int:
    # small epsilon keeps exact powers of two from rounding up
    if method in ("kl", "cond"):
        return max(1, math.ceil(1.0 / h - 1e-9))
    if method == "rw":
        return max(1, math.ceil(h ** -0.5 - 1e-9))
    raise InvalidParameterError(f"unknown sampler {method!r}")


# -- characteristic function and density oracle ------------------------------

def _z_over_sinh(z):
    z = np.abs(z)
    out = np.ones_like(z)
    mid = (z > 0) & (z <= 20.0)
    big = z > 20.0
    out[mid] = z[mid] / np.sinh(z[mid])
    out[big] = 2.0 * z[big] * np.exp(-z[big]) / (1.0 - np.exp(-2.0 * z[big]))
    return out


def _z_coth_minus_one(z):
    z = np.abs(z)
    out = np.empty_like(z)
    small = z < 1e-3
    zs = z[small] ** 2
    out[small] = zs / 3.0 - zs ** 2 / 45.0 + 2.0 * zs ** 3 / 945.0
    zl = z[~small]
    out[~small] = zl / np.tanh(zl) - 1.0
    return out


def char_function(ctx: LevyContext, xi):
    """Characteristic function of the area given the increments (even in xi)."""
    xi = np.asarray(xi, dtype=float)
    z = np.atleast_1d(0.5 * ctx.h * xi)
    val = _z_over_sinh(z) * np.exp(-0.5 * ctx.a2 * _z_coth_minus_one(z))
    return val.reshape(xi.shape) if xi.ndim else float(val[0])


def xi_cutoff(ctx: LevyContext, tol: float = PHI_CUTOFF) -> float:
    """Frequency beyond which the characteristic function stays below ``tol``."""
    # |phi| <= 2z e^{-z} exp(-a2 (z - 1)/2) for z >= 1, decreasing
    g = lambda z: math.log(2 * z) - z - 0.5 * ctx.a2 * (z - 1.0) - math.log(tol)
    z = optimize.brentq(g, 1.0, 200.0)
    return 2.0 * z / ctx.h


def area_variance(ctx: LevyContext) -> float:
    """Conditional variance ``h^2 (1 + a^2) / 12``."""
    return ctx.h ** 2 * (1.0 + ctx.a2) / 12.0


def density_oracle(ctx: LevyContext, x: float, tol: float = 1e-8) -> float:
    """Density by adaptive cosine-weighted quadrature of the char. function.

    ``tol`` is relative to the density scale ``1/std``.
    """
    xmax = xi_cutoff(ctx)
    atol = tol / math.sqrt(area_variance(ctx))
    val, err = integrate.quad(lambda s: char_function(ctx, s), 0.0, xmax,
                              weight="cos", wvar=float(x), limit=400, epsabs=0.1 * atol)
    if not err < atol:
        raise QuadratureError("density quadrature did not converge", achieved=err)
    return val / math.pi


class _GaussPanels:
    def __init__(self, upper, panels=256, order=16):
        t, w = np.polynomial.legendre.leggauss(order)
        edges = np.linspace(0.0, upper, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        self.nodes = (mid[:, None] + half[:, None] * t[None, :]).ravel()
        self.weights = (half[:, None] * w[None, :]).ravel()


def density_grid(ctx: LevyContext, x, panels=128):
    """Vectorised density values (fixed Gauss-Legendre panels)."""
    x = np.asarray(x, dtype=float)
    g = _GaussPanels(xi_cutoff(ctx), panels)
    wphi = g.weights * char_function(ctx, g.nodes)
    out = np.empty(x.size)
    flat = x.ravel()
    for s in range(0, flat.size, 2048):
        out[s:s + 2048] = np.cos(np.outer(flat[s:s + 2048], g.nodes)) @ wphi
    return (out / math.pi).reshape(x.shape)


def cdf_grid(ctx: LevyContext, x, panels=128):
    """Vectorised CDF: 1/2 + (1/pi) int phi(s) sin(x s) / s ds."""
    x = np.asarray(x, dtype=float)
    g = _GaussPanels(xi_cutoff(ctx), panels)
    wphi = g.weights * char_function(ctx, g.nodes) / g.nodes
    out = np.empty(x.size)
    flat = x.ravel()
    for s in range(0, flat.size, 2048):
        out[s:s + 2048] = np.sin(np.outer(flat[s:s + 2048], g.nodes)) @ wphi
    return (0.5 + out / math.pi).reshape(x.shape)


class AreaCdf:
    """CDF interpolated from a dense grid over +-14 standard deviations."""

    def __init__(self, ctx: LevyContext, points: int = 4001):
        self.ctx = ctx
        self.half_width = 14.0 * math.sqrt(area_variance(ctx))
        grid = np.linspace(-self.half_width, self.half_width, points)
        self._spline = CubicSpline(grid, cdf_grid(ctx, grid))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.clip(np.where(x < -self.half_width, 0.0,
                                np.where(x > self.half_width, 1.0, self._spline(x))), 0.0, 1.0)


def conditional_pit(areas, dw1, dw2, h, panels=64, chunk=512):
    """``F(A_k | a_k^2)`` for samples with their own conditioning increments.

    Uniform on [0, 1] when the samples follow the conditional law, which
    allows a KS test for samplers that draw their own increments.
    """
    A = np.asarray(areas, dtype=float).ravel()
    a2 = ((np.asarray(dw1, dtype=float) ** 2 + np.asarray(dw2, dtype=float) ** 2) / h).ravel()
    g = _GaussPanels(xi_cutoff(LevyContext(h, 0.0, 0.0)), panels)
    z = 0.5 * h * g.nodes
    base = g.weights * _z_over_sinh(z) / g.nodes
    zc = _z_coth_minus_one(z)
    out = np.empty(A.size)
    for s in range(0, A.size, chunk):
        sl = slice(s, s + chunk)
        w = base[None, :] * np.exp(-0.5 * a2[sl, None] * zc[None, :])
        out[sl] = 0.5 + np.sum(w * np.sin(A[sl, None] * g.nodes[None, :]), axis=1) / math.pi
    return np.clip(out, 0.0, 1.0)


def uniform_cdf(u):
    return np.clip(np.asarray(u, dtype=float), 0.0, 1.0)


def ks_distance(samples, cdf) -> float:
    """Two-sided Kolmogorov-Smirnov statistic against a CDF callable."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    F = cdf(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


# -- samplers: single draws from a stream ------------------------------------

def sample_kl(stream: RngStream, ctx: LevyContext, budget: SamplerBudget = SamplerBudget()) -> float:
    """One truncated KL draw; consumes 4Q Normals (U, V, X, Y blocks)."""
    Q = budget.resolve("kl", ctx.h)
    U, V, X, Y = stream.normals(4 * Q).reshape(4, Q)
    c = math.sqrt(2.0 / ctx.h)
    k = np.arange(1, Q + 1)
    terms = (U * (Y - c * ctx.dw2) - V * (X - c * ctx.dw1)) / k
    return ctx.h / (2.0 * math.pi) * float(np.sum(terms))


def rw_tail_coef(h: float, Q: int) -> float:
    """Std of the dropped tail per unit ``a``: (h/2pi) sqrt(2 sum_{k>Q} k^-2)."""
    return h / (2.0 * math.pi) * math.sqrt(2.0 * float(special.polygamma(1, Q + 1)))


def sample_rw(stream: RngStream, ctx: LevyContext, budget: SamplerBudget = SamplerBudget(),
              tail: bool = True) -> float:
    """One Ryden-Wiktorsson draw (same word order as the bulk kernel)."""
    Q = budget.resolve("rw", ctx.h)
    scale = ctx.h / (2.0 * math.pi)
    u = float(stream.uniforms(1, "oo")[0])
    x = scale * math.log(u / (1.0 - u))
    y = 0.0
    for k in range(1, Q + 1):
        for _ in range(stream.poisson(ctx.a2)):
            y += stream.laplace(1.0 / k)
    z = stream.normal_pair()[0]
    t = rw_tail_coef(ctx.h, Q) * math.sqrt(ctx.a2) * z if tail else 0.0
    return x + scale * y + t


def sample_conditional(stream: RngStream, h: float, Q: int, return_path: bool = False):
    """``(dW1, dW2, J12_hat)`` from Q sub-steps; optionally the sub-increments too.

    ``J12_hat = sum_q (W1(tau_q) - W1(t_n)) dW2(tau_q)``; the area-form
    estimate is ``J12_hat - dW1 dW2 / 2``.
    """
    if Q < 1:
        raise InvalidParameterError("Q must be >= 1")
    z = stream.normals(2 * Q).reshape(2, Q) * math.sqrt(h / Q)
    d1, d2 = z
    w1_before = np.cumsum(d1) - d1
    jhat = float(np.sum(w1_before * d2))
    out = (float(np.sum(d1)), float(np.sum(d2)), jhat)
    return out + (z,) if return_path else out


def conditional_area_form(dw1, dw2, jhat):
    return jhat - 0.5 * dw1 * dw2


def j_pair_from_area(dwi, dwj, aij):
    """``(J_ij, J_ji)`` from the increments and the area."""
    jij = 0.5 * dwi * dwj + aij
    return jij, dwi * dwj - jij


def j_diag(dwi):
    return 0.5 * dwi * dwi


# -- bulk sampling -------------------------------------------------------------

def kl_samples(seed, stream_ids, ctx_or_dw1, dw2=None, h=None, Q=None, lane=LANE_KL):
    """KL areas for many streams; per-step increments as ``(P, n)`` arrays.

    Row p, step m equals the m-th consecutive ``sample_kl`` draw of stream
    ``RngStream(seed, stream_ids[p], lane)``.
    """
    dw1, dw2, h = _unpack(ctx_or_dw1, dw2, h, len(np.atleast_1d(stream_ids)))
    Q = SamplerBudget(Q).resolve("kl", h)
    return kernels.kl_areas(seed, np.asarray(stream_ids), lane, dw1, dw2, h, Q)


def rw_samples(seed, stream_ids, ctx_or_dw1, dw2=None, h=None, Q=None, lane=LANE_RW):
    dw1, dw2, h = _unpack(ctx_or_dw1, dw2, h, len(np.atleast_1d(stream_ids)))
    Q = SamplerBudget(Q).resolve("rw", h)
    return kernels.rw_areas(seed, np.asarray(stream_ids), lane, dw1, dw2, h, Q,
                            rw_tail_coef(h, Q))


def conditional_samples(seed, stream_ids, h, Q, lane=LANE_KL):
    """Bulk ``sample_conditional``: arrays ``dW1, dW2, J12_hat, sub`` with
    ``sub`` of shape ``(P, 2, Q)``."""
    ids = np.asarray(stream_ids).reshape(-1)
    z = path_normals(seed, ids, 2 * Q, lane).reshape(ids.size, 2, Q) * math.sqrt(h / Q)
    d1, d2 = z[:, 0], z[:, 1]
    jhat = np.sum((np.cumsum(d1, axis=1) - d1) * d2, axis=1)
    return d1.sum(axis=1), d2.sum(axis=1), jhat, z


def _unpack(ctx_or_dw1, dw2, h, P):
    if isinstance(ctx_or_dw1, LevyContext):
        ctx = ctx_or_dw1
        return np.full((P, 1), ctx.dw1), np.full((P, 1), ctx.dw2), ctx.h
    if h is None or dw2 is None:
        raise InvalidParameterError("pass a LevyContext or (dw1, dw2, h)")
    dw1 = np.asarray(ctx_or_dw1, dtype=float)
    dw2 = np.asarray(dw2, dtype=float)
    if dw1.ndim == 1:
        dw1, dw2 = dw1[:, None], dw2[:, None]
    return dw1, dw2, float(h)


@dataclass(frozen=True)
class AreaSampler:
    """Where Levy areas come from when a scheme needs them.

    ``kl``/``rw`` attach sampled areas to every finest step of a bundle;
    ``cond`` builds areas from finer sub-steps of the bundle itself;
    ``none`` supplies no areas.
    """

    method: str = "none"
    q: Union[int, None] = None

    def __post_init__(self):
        if self.method not in METHODS + ("none",):
            raise InvalidParameterError(f"area sampler must be one of {METHODS + ('none',)}")
        if self.q is not None and int(self.q) < 1:
            raise InvalidParameterError("area Q must be >= 1")

    def resolve_q(self, h: float) -> int:
        return SamplerBudget(self.q).resolve(self.method, h)


def pair_lane(base: int, pair: int) -> int:
    return base + 256 * pair


def attach_areas(bundle: PathBundle, sampler: AreaSampler, seed: int, stream_ids) -> PathBundle:
    """Copy of ``bundle`` carrying sampled areas on each finest step.

    Each component pair draws from its own lane so pairs are independent
    (joint dependence across pairs for d > 2 is not modelled).
    """
    if sampler.method not in ("kl", "rw") or bundle.d < 2:
        return bundle
    inc = bundle.increments
    if inc.ndim != 3:
        raise InvalidParameterError("attach_areas expects a batched (P, d, n) bundle")
    h = bundle.dt_fine
    Q = sampler.resolve_q(h)
    fn = kernels.kl_areas if sampler.method == "kl" else kernels.rw_areas
    base = LANE_KL if sampler.method == "kl" else LANE_RW
    extra = () if sampler.method == "kl" else (rw_tail_coef(h, Q),)
    areas = np.stack([fn(seed, np.asarray(stream_ids), pair_lane(base, p),
                         np.ascontiguousarray(inc[:, i]), np.ascontiguousarray(inc[:, j]),
                         h, Q, *extra)
                      for p, (i, j) in enumerate(pair_indices(bundle.d))], axis=1)
    return PathBundle(inc, bundle.t0, bundle.T, bundle.kind, areas)
