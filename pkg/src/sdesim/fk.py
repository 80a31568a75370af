"""Feynman-Kac cross-check for scalar models.

``u(t, y) = E f(y_t | y_0 = y)`` solves ``u_t = c1(y) u_y + c2(y) u_yy`` with
``c1 = V0~`` (Ito drift) and ``c2 = sum_i V_i^2 / 2``.  An explicit
central-difference solve is compared against a Monte Carlo estimate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConfigurationError, InvalidParameterError
from .mc import EnsembleConfig, estimate_expectation
from .model import SdeModel

SAFETY = 0.4

PAYOFFS = {
    "id": lambda y: np.asarray(y, dtype=float),
    "square": lambda y: np.asarray(y, dtype=float) ** 2,
    "exp": lambda y: np.exp(np.asarray(y, dtype=float)),
}


class Generator(NamedTuple):
    first: Callable   # coefficient of u_y
    second: Callable  # coefficient of u_yy


def build_generator(model: SdeModel) -> Generator:
    """Ito-form coefficients of the generator of a scalar model."""
    if model.N != 1:
        raise ConfigurationError("the finite-difference check handles scalar models only")

    def first(y):
        y = np.asarray(y, dtype=float)
        return model.drift_ito(y[..., None])[..., 0]

    def second(y):
        y = np.asarray(y, dtype=float)
        V = model.diffusion(y[..., None])[..., 0, :]
        return 0.5 * np.sum(V * V, axis=-1)

    return Generator(first, second)


def strat_form_generator(model: SdeModel) -> Generator:
    """Coefficients of ``V0 + (1/2) sum V_i V_i`` expanded with directional derivatives.

    ``V_i V_i u = V_i^2 u_yy + dV_i[V_i] u_y``, so the first-order part is
    ``V0 + (1/2) sum dV_i[V_i]``.
    """
    if model.N != 1:
        raise ConfigurationError("scalar models only")

    def first(y):
        y = np.asarray(y, dtype=float)[..., None]
        V = model.diffusion(y)
        corr = sum(model.diffusion_jvp(y, V[..., :, i])[..., 0, i] for i in range(model.d))
        return model.strat_drift(y)[..., 0] + 0.5 * corr

    def second(y):
        y = np.asarray(y, dtype=float)
        V = model.diffusion(y[..., None])[..., 0, :]
        return 0.5 * np.sum(V * V, axis=-1)

    return Generator(first, second)


def generator_form_gap(model: SdeModel, ys) -> float:
    """Largest coefficient mismatch between the Ito and Stratonovich forms at ``ys``."""
    a, b = build_generator(model), strat_form_generator(model)
    ys = np.asarray(ys, dtype=float)
    return float(max(np.max(np.abs(a.first(ys) - b.first(ys))),
                     np.max(np.abs(a.second(ys) - b.second(ys)))))


@dataclass
class FkProblem:
    """``u(t, .)`` on ``[y_lo, y_hi]`` with ``n_y`` grid points.

    ``n_t=None`` picks the smallest stable step count.  ``boundary(t, y)``
    pins Dirichlet values; otherwise the edges are extrapolated
    quadratically from the interior.
    """

    model: SdeModel
    f: Callable
    t: float
    y_lo: float
    y_hi: float
    n_y: int = 401
    n_t: Optional[int] = None
    boundary: Optional[Callable] = None

    def __post_init__(self):
        if not self.y_hi > self.y_lo:
            raise InvalidParameterError("need y_hi > y_lo")
        if self.n_y < 5:
            raise InvalidParameterError("need n_y >= 5")
        if self.t < 0:
            raise InvalidParameterError("need t >= 0")


@dataclass
class PdeSolution:
    grid: np.ndarray
    u: np.ndarray
    t: float
    n_t: int
    _spline: CubicSpline = field(init=False, repr=False)

    def __post_init__(self):
        self._spline = CubicSpline(self.grid, self.u)

    def __call__(self, y):
        return self._spline(y)


def stable_steps(problem: FkProblem) -> int:
    """Smallest step count meeting the parabolic and cell-Peclet bounds."""
    gen = build_generator(problem.model)
    y = np.linspace(problem.y_lo, problem.y_hi, problem.n_y)
    dy = y[1] - y[0]
    c1 = np.abs(gen.first(y))
    c2 = gen.second(y)
    c2max = float(np.max(c2))
    if c2max <= 0:
        raise ConfigurationError("explicit central differences need a positive diffusion coefficient")
    dt = SAFETY * dy * dy / c2max
    c1max = float(np.max(c1))
    if c1max > 0:
        dt = min(dt, SAFETY * 2.0 * c2max / c1max ** 2, SAFETY * dy / c1max)
    return max(1, math.ceil(problem.t / dt - 1e-12))


def solve_pde(problem: FkProblem) -> PdeSolution:
    gen = build_generator(problem.model)
    y = np.linspace(problem.y_lo, problem.y_hi, problem.n_y)
    dy = y[1] - y[0]
    need = stable_steps(problem) if problem.t > 0 else 1
    n_t = problem.n_t or need
    if n_t < need:
        raise ConfigurationError(f"explicit step unstable: need n_t >= {need}, got {n_t}")
    dt = problem.t / n_t
    c1 = gen.first(y[1:-1])
    c2 = gen.second(y[1:-1])
    # row weights for u[j-1], u[j], u[j+1]; they sum to one
    lo = dt * (c2 / dy ** 2 - c1 / (2 * dy))
    hi = dt * (c2 / dy ** 2 + c1 / (2 * dy))
    mid = 1.0 - lo - hi
    u = np.asarray(problem.f(y), dtype=float).copy()
    for k in range(n_t if problem.t > 0 else 0):
        u[1:-1] = lo * u[:-2] + mid * u[1:-1] + hi * u[2:]
        tk = (k + 1) * dt
        if problem.boundary is not None:
            u[0] = problem.boundary(tk, y[0])
            u[-1] = problem.boundary(tk, y[-1])
        else:
            u[0] = 3 * u[1] - 3 * u[2] + u[3]
            u[-1] = 3 * u[-2] - 3 * u[-3] + u[-4]
    return PdeSolution(y, u, problem.t, n_t)


@dataclass
class FkReport:
    y0: float
    pde: float
    pde_error: float
    mc_mean: float
    mc_stderr: float
    exact: Optional[float] = None

    @property
    def difference(self) -> float:
        return abs(self.pde - self.mc_mean)

    @property
    def tolerance(self) -> float:
        return 4.0 * math.hypot(self.mc_stderr, self.pde_error)

    @property
    def passed(self) -> bool:
        return self.difference < self.tolerance

    def rows(self):
        out = [("pde", self.pde, self.pde_error), ("mc", self.mc_mean, self.mc_stderr)]
        if self.exact is not None:
            out.append(("exact", self.exact, 0.0))
        return out


def cross_validate(problem: FkProblem, mc_config: EnsembleConfig, y0: float,
                   exact: Optional[float] = None) -> FkReport:
    """PDE value at ``y0`` against ``E f(y_t)`` from ``mc_config``.

    The PDE error estimate is the change under halving the grid resolution.
    """
    if mc_config.model is not problem.model:
        mc_config = replace(mc_config, model=problem.model)
    fine = solve_pde(problem)
    coarse = solve_pde(replace(problem, n_y=(problem.n_y - 1) // 2 + 1, n_t=None))
    u = float(fine(y0))
    err = abs(u - float(coarse(y0)))
    cfg = replace(mc_config, y0=(float(y0),), t0=0.0, T=problem.t)
    est = estimate_expectation(cfg, lambda s: problem.f(s[:, 0]))
    return FkReport(float(y0), u, err, est.mean, est.stderr, exact)


def auto_domain(mean: float, sd: float, y0: float, width: float = 8.0):
    """Interval covering ``y0`` and the law of ``y_t`` with ``width`` std margins."""
    lo = min(y0, mean) - width * sd
    hi = max(y0, mean) + width * sd
    return lo, hi
