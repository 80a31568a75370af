"""SDE models: drift in both conventions, diffusion fields and their derivatives.

States carry leading batch axes: ``y`` has shape ``(..., N)``; the diffusion
returns ``(..., N, d)`` with column ``i`` the field ``V_i``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import InvalidParameterError

_FD_SCALE = np.finfo(float).eps ** (1.0 / 3.0)


def fd_jvp(diffusion, y, v):
    """Central-difference ``dV_i(y)[v]`` for every column ``i``.

    The step ``eps^(1/3) (1 + |y|)`` is taken along ``v/|v|`` and the
    quotient rescaled by ``|v|``.
    """
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    nv = np.linalg.norm(v, axis=-1, keepdims=True)
    safe = np.where(nv > 0, nv, 1.0)
    u = v / safe
    eps = _FD_SCALE * (1.0 + np.linalg.norm(y, axis=-1, keepdims=True))
    diff = diffusion(y + eps * u) - diffusion(y - eps * u)
    return diff / (2.0 * eps[..., None]) * (nv * (nv > 0))[..., None]


@dataclass(frozen=True)
class SdeModel:
    """Autonomous SDE ``dy = V0~(y) dt + sum_i V_i(y) dW^i``.

    Parameters
    ----------
    drift_ito : callable
        Ito drift ``V0~``.
    diffusion : callable
        ``y -> (..., N, d)``.
    drift_strat : callable, optional
        Stratonovich drift; derived from the Ito drift when omitted.
    jvp : callable, optional
        ``(y, v) -> (..., N, d)``, column i is ``dV_i(y)[v]``.  Central
        differences are used when omitted.
    exact_solution : callable, optional
        ``(y0, t, W_t) -> state`` for models solvable pathwise.
    exact_mean : callable, optional
        ``(y0, t) -> E y_t``.
    """

    name: str
    N: int
    d: int
    drift_ito: Callable
    diffusion: Callable
    drift_strat: Optional[Callable] = None
    jvp: Optional[Callable] = None
    exact_solution: Optional[Callable] = None
    exact_mean: Optional[Callable] = None
    commutative: bool = False
    params: dict = field(default_factory=dict)
    state_labels: tuple = ()
    default_y0: tuple = ()

    def diffusion_jvp(self, y, v):
        if self.jvp is not None:
            return self.jvp(y, v)
        return fd_jvp(self.diffusion, y, v)

    def strat_drift(self, y):
        if self.drift_strat is not None:
            return self.drift_strat(y)
        from .algebra import ito_drift_to_strat
        return ito_drift_to_strat(self, y)

    def bracket(self, y, i, j):
        """Lie bracket ``[V_i, V_j](y) = dV_j[V_i] - dV_i[V_j]`` (0-based i, j)."""
        V = self.diffusion(y)
        return (self.diffusion_jvp(y, V[..., :, i])[..., :, j]
                - self.diffusion_jvp(y, V[..., :, j])[..., :, i])

    @property
    def labels(self):
        return self.state_labels or tuple(f"y{k + 1}" for k in range(self.N))


def lie_bracket(model: SdeModel, y, i: int, j: int):
    return model.bracket(y, i, j)


# -- scalar examples --------------------------------------------------------------

def make_langevin(a: float, b: float, y0: float = 1.0) -> SdeModel:
    """``dy = -a y dt + sqrt(b) dW`` (additive noise, so both drifts agree)."""
    if b < 0:
        raise InvalidParameterError("Langevin needs b >= 0")
    sb = math.sqrt(b)
    drift = lambda y: -a * np.asarray(y, dtype=float)
    return SdeModel(
        "langevin", 1, 1, drift,
        diffusion=lambda y: np.full(np.shape(y) + (1,), sb),
        drift_strat=drift,
        jvp=lambda y, v: np.zeros(np.shape(y) + (1,)),
        exact_mean=lambda y0, t: np.asarray(y0, dtype=float) * math.exp(-a * t),
        commutative=True, params={"a": a, "b": b}, state_labels=("y",),
        default_y0=(y0,))


def make_gbm(a: float, b: float, y0: float = 1.0) -> SdeModel:
    """``dy = a y dt + b y dW`` with pathwise solution ``y0 exp((a - b^2/2) t + b W_t)``."""
    def exact(y0, t, W):
        return np.asarray(y0, dtype=float) * np.exp((a - 0.5 * b * b) * t + b * np.asarray(W))

    return SdeModel(
        "gbm", 1, 1,
        drift_ito=lambda y: a * np.asarray(y, dtype=float),
        diffusion=lambda y: b * np.asarray(y, dtype=float)[..., None],
        drift_strat=lambda y: (a - 0.5 * b * b) * np.asarray(y, dtype=float),
        jvp=lambda y, v: b * np.asarray(v, dtype=float)[..., None],
        exact_solution=exact,
        exact_mean=lambda y0, t: np.asarray(y0, dtype=float) * math.exp(a * t),
        commutative=True, params={"a": a, "b": b}, state_labels=("y",),
        default_y0=(y0,))


# -- Heston -----------------------------------------------------------------------

@dataclass(frozen=True)
class HestonParams:
    mu: float = 0.05
    kappa: float = 2.0
    theta: float = 0.09
    epsilon: float = 0.1
    rho: float = 0.5
    S0: float = 1.0
    v0: float = 0.09

    def __post_init__(self):
        if self.kappa < 0 or self.theta < 0 or self.epsilon < 0:
            raise InvalidParameterError("kappa, theta and epsilon must be >= 0")
        if not -1.0 <= self.rho <= 1.0:
            raise InvalidParameterError("rho must lie in [-1, 1]")
        if self.S0 <= 0:
            raise InvalidParameterError("S0 must be positive")


def make_heston(params: HestonParams = HestonParams()) -> SdeModel:
    """Heston in ``(x, v)``: ``dx = mu dt + sqrt(v+) dW1``,
    ``dv = kappa (theta - v+) dt + eps sqrt(v+) (rho dW1 + sqrt(1-rho^2) dW2)``.

    ``v+ = max(v, 0)``; the stored variance may go negative.
    """
    p = params
    cr = math.sqrt(1.0 - p.rho ** 2)

    def drift(y):
        y = np.asarray(y, dtype=float)
        out = np.empty_like(y)
        out[..., 0] = p.mu
        out[..., 1] = p.kappa * (p.theta - np.maximum(y[..., 1], 0.0))
        return out

    def diffusion(y):
        y = np.asarray(y, dtype=float)
        s = np.sqrt(np.maximum(y[..., 1], 0.0))
        out = np.zeros(y.shape + (2,))
        out[..., 0, 0] = s
        out[..., 1, 0] = p.epsilon * p.rho * s
        out[..., 1, 1] = p.epsilon * cr * s
        return out

    def jvp(y, v):
        y = np.asarray(y, dtype=float)
        vv = y[..., 1]
        ds = np.where(vv > 0, 0.5 / np.sqrt(np.where(vv > 0, vv, 1.0)), 0.0) * np.asarray(v)[..., 1]
        out = np.zeros(y.shape + (2,))
        out[..., 0, 0] = ds
        out[..., 1, 0] = p.epsilon * p.rho * ds
        out[..., 1, 1] = p.epsilon * cr * ds
        return out

    return SdeModel("heston", 2, 2, drift, diffusion, jvp=jvp,
                    params={"heston": p}, state_labels=("x", "v"),
                    default_y0=(math.log(p.S0), p.v0))


class HestonPdeCoefficients(NamedTuple):
    u_x: Callable
    u_v: Callable
    u_xx: Callable
    u_xv: Callable
    u_vv: Callable


def heston_pde_coefficients(params: HestonParams = HestonParams()) -> HestonPdeCoefficients:
    """Coefficients of ``u_t = mu u_x + kappa (theta - v) u_v + v/2 u_xx
    + rho eps v u_xv + eps^2 v/2 u_vv`` as functions of ``(x, v)``."""
    p = params
    return HestonPdeCoefficients(
        u_x=lambda x, v: np.full(np.broadcast(x, v).shape, p.mu) if np.ndim(x) or np.ndim(v) else p.mu,
        u_v=lambda x, v: p.kappa * (p.theta - np.asarray(v)),
        u_xx=lambda x, v: 0.5 * np.asarray(v),
        u_xv=lambda x, v: p.rho * p.epsilon * np.asarray(v),
        u_vv=lambda x, v: 0.5 * p.epsilon ** 2 * np.asarray(v),
    )


# -- bilinear non-commuting testbed ---------------------------------------------------

LINEAR2D_A1 = ((0.0, 1.0), (0.0, 0.0))
LINEAR2D_A2 = ((0.0, 0.0), (1.0, 0.0))


def make_linear2d(A1=LINEAR2D_A1, A2=LINEAR2D_A2, A0=None, y0=(1.0, 1.0)) -> SdeModel:
    """Stratonovich ``dy = A0 y dt + A1 y o dW1 + A2 y o dW2``.

    The default matrices do not commute, so Levy areas matter at order one.
    """
    A1 = np.asarray(A1, dtype=float)
    A2 = np.asarray(A2, dtype=float)
    A0 = np.zeros((2, 2)) if A0 is None else np.asarray(A0, dtype=float)
    stack = np.stack([A1, A2])  # (d, N, N)
    ito_A = A0 + 0.5 * (A1 @ A1 + A2 @ A2)

    def diffusion(y):
        return np.einsum("inm,...m->...ni", stack, np.asarray(y, dtype=float))

    def jvp(y, v):
        return np.einsum("inm,...m->...ni", stack, np.asarray(v, dtype=float))

    return SdeModel(
        "linear2d", 2, 2,
        drift_ito=lambda y: np.asarray(y, dtype=float) @ ito_A.T,
        diffusion=diffusion,
        drift_strat=lambda y: np.asarray(y, dtype=float) @ A0.T,
        jvp=jvp,
        commutative=bool(np.allclose(A1 @ A2, A2 @ A1)),
        params={"A0": A0.tolist(), "A1": A1.tolist(), "A2": A2.tolist()},
        state_labels=("y1", "y2"), default_y0=tuple(float(c) for c in y0))


MODEL_NAMES = ("langevin", "gbm", "heston", "linear2d")


def make_model(name: str, **params) -> SdeModel:
    """Build a named model from keyword parameters (CLI/config entry point)."""
    if name == "langevin":
        return make_langevin(float(params.get("a", 3.0)), float(params.get("b", 0.25)),
                             float(params.get("y0", 1.0)))
    if name == "gbm":
        return make_gbm(float(params.get("a", 3.0)), float(params.get("b", 1.4)),
                        float(params.get("y0", 1.0)))
    if name == "heston":
        keys = {"mu", "kappa", "theta", "epsilon", "rho", "S0", "v0"}
        alias = {"alpha": "kappa", "beta": "epsilon"}
        kw = {alias.get(k, k): float(v) for k, v in params.items() if alias.get(k, k) in keys}
        return make_heston(HestonParams(**kw))
    if name == "linear2d":
        kw = {k: params[k] for k in ("A0", "A1", "A2") if k in params}
        if "y0" in params:
            kw["y0"] = tuple(params["y0"])
        return make_linear2d(**kw)
    raise InvalidParameterError(f"unknown model {name!r}; choose from {MODEL_NAMES}")
