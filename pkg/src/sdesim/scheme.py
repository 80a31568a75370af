"""One-step strong integrators and the path driver.

All steppers act on a batch of states ``y`` of shape ``(P, N)`` with
increments ``dW`` of shape ``(P, d)`` and, where used, Levy areas of shape
``(P, n_pairs)`` for pairs ``i < j`` in ``wiener.pair_indices`` order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from ._backend import kernels
from .errors import ConfigurationError, InvalidParameterError, NonFiniteStateError
from .levy import AreaSampler
from .model import HestonParams, SdeModel
from .wiener import pair_indices

SCHEMES = ("em", "milstein", "cg_half", "cg_one", "heston_ft")
ALIASES = {
    "euler_maruyama": "em",
    "castell_gaines_half": "cg_half",
    "castell_gaines_one": "cg_one",
    "heston_full_truncation": "heston_ft",
}
NEEDS_AREAS = ("milstein", "cg_one")


class StepInputs(NamedTuple):
    h: float
    dW: np.ndarray
    areas: Optional[np.ndarray] = None


@dataclass(frozen=True)
class SchemeKind:
    name: str = "em"
    ode_substeps: int = 2

    def __post_init__(self):
        object.__setattr__(self, "name", canonical_scheme(self.name))
        if self.ode_substeps < 1:
            raise InvalidParameterError("ode_substeps must be >= 1")


def canonical_scheme(name: str) -> str:
    name = ALIASES.get(name, name)
    if name not in SCHEMES:
        raise InvalidParameterError(f"unknown scheme {name!r}; choose from {SCHEMES}")
    return name


def needs_areas(model: SdeModel, scheme: str) -> bool:
    return canonical_scheme(scheme) in NEEDS_AREAS and model.d >= 2 and not model.commutative


def _missing_areas(model, scheme):
    return ConfigurationError(
        f"scheme {scheme!r} on non-commuting model {model.name!r} needs Levy areas; "
        "set an area sampler (kl, rw or cond)")


def em_step(model: SdeModel, y, inp: StepInputs):
    """``y + h V0~(y) + sum_i dW^i V_i(y)`` (Ito drift)."""
    y = np.asarray(y, dtype=float)
    V = model.diffusion(y)
    return y + inp.h * model.drift_ito(y) + np.einsum("...nd,...d->...n", V, np.asarray(inp.dW))


def _j_matrix(dW, areas, d):
    """``J[..., i, j]`` for all pairs; diagonal ``dW_i^2 / 2``."""
    dW = np.asarray(dW, dtype=float)
    J = 0.5 * dW[..., :, None] * dW[..., None, :]
    if areas is not None:
        for k, (i, j) in enumerate(pair_indices(d)):
            J[..., i, j] += areas[..., k]
            J[..., j, i] -= areas[..., k]
    return J


def milstein_step(model: SdeModel, y, inp: StepInputs):
    """``y + h V0 + sum_i dW^i V_i + sum_ij J_ij dV_j[V_i]`` (Stratonovich drift)."""
    if inp.areas is None and needs_areas(model, "milstein"):
        raise _missing_areas(model, "milstein")
    y = np.asarray(y, dtype=float)
    V = model.diffusion(y)
    J = _j_matrix(inp.dW, inp.areas, model.d)
    out = y + inp.h * model.strat_drift(y) + np.einsum("...nd,...d->...n", V, np.asarray(inp.dW))
    for i in range(model.d):
        Vij = model.diffusion_jvp(y, V[..., :, i])  # column j is dV_j[V_i]
        out = out + np.einsum("...nj,...j->...n", Vij, J[..., i, :])
    return out


def _psi(model, h, dW, areas):
    pairs = pair_indices(model.d)

    def field(u):
        V = model.diffusion(u)
        out = h * model.strat_drift(u) + np.einsum("...nd,...d->...n", V, dW)
        if areas is not None:
            for k, (i, j) in enumerate(pairs):
                br = (model.diffusion_jvp(u, V[..., :, i])[..., :, j]
                      - model.diffusion_jvp(u, V[..., :, j])[..., :, i])
                out = out + areas[..., k, None] * br
        return out

    return field


def rk4(field, y, substeps: int):
    """Classical fourth-order Runge-Kutta for ``u' = field(u)`` on ``[0, 1]``."""
    dt = 1.0 / substeps
    u = y
    for _ in range(substeps):
        k1 = field(u)
        k2 = field(u + 0.5 * dt * k1)
        k3 = field(u + 0.5 * dt * k2)
        k4 = field(u + dt * k3)
        u = u + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return u


def castell_gaines_step(model: SdeModel, y, inp: StepInputs, order: str = "half",
                        ode_substeps: int = 2):
    """Flow of the frozen field ``psi = h V0 + sum dW^i V_i [+ sum A_ij [V_i, V_j]]``.

    ``order='half'`` drops the bracket terms; ``order='one'`` needs areas on
    non-commuting models.
    """
    if order not in ("half", "one"):
        raise InvalidParameterError("order must be 'half' or 'one'")
    areas = None
    if order == "one" and model.d >= 2:
        if inp.areas is None:
            if not model.commutative:
                raise _missing_areas(model, "cg_one")
        else:
            areas = np.asarray(inp.areas, dtype=float)
    y = np.asarray(y, dtype=float)
    return rk4(_psi(model, inp.h, np.asarray(inp.dW, dtype=float), areas), y, ode_substeps)


def heston_ft_step(params: HestonParams, S, v, h, J1, J2):
    """One full-truncation step on ``(S, v)``; ``max(v, 0)`` in all four places."""
    vp = np.maximum(0.0, v)
    sq = np.sqrt(vp)
    S_new = np.exp((params.mu - vp / 2.0) * h + sq * J1) * S
    v_new = (v + params.kappa * (params.theta - vp) * h
             + params.epsilon * (params.rho * J1 + math.sqrt(1.0 - params.rho ** 2) * J2) * sq)
    return S_new, v_new


def step(model: SdeModel, scheme: SchemeKind, y, inp: StepInputs):
    name = scheme.name
    if name == "em":
        return em_step(model, y, inp)
    if name == "milstein":
        return milstein_step(model, y, inp)
    if name == "cg_half":
        return castell_gaines_step(model, y, inp, "half", scheme.ode_substeps)
    if name == "cg_one":
        return castell_gaines_step(model, y, inp, "one", scheme.ode_substeps)
    if name == "heston_ft":
        S, v = heston_ft_step(_heston_params(model), y[..., 0], y[..., 1], inp.h,
                              inp.dW[..., 0], inp.dW[..., 1])
        return np.stack([S, v], axis=-1)
    raise InvalidParameterError(name)


def _heston_params(model):
    p = model.params.get("heston")
    if model.name != "heston" or p is None:
        raise ConfigurationError("heston_ft runs only on the heston model")
    return p


def heston_ft_y0(params: HestonParams):
    return (params.S0, params.v0)


def integrate_path(model: SdeModel, scheme, view, y0=None, sampler: AreaSampler = AreaSampler(),
                   keep_path: bool = True, on_nonfinite: str = "raise", areas=None):
    """Integrate over every step of ``view`` (a ``CoarseView`` or ``PathBundle``).

    Areas, when the scheme needs them, are taken from ``areas`` if given,
    else from the view: bundles with attached samples (``kl``/``rw``) or,
    for ``cond``, the piecewise-linear areas of the view's finer grid.

    Returns states of shape ``(..., n+1, N)`` (``keep_path``) or ``(..., N)``.
    """
    if not isinstance(scheme, SchemeKind):
        scheme = SchemeKind(scheme)
    if hasattr(view, "view") and not hasattr(view, "parent"):
        view = view.view()
    inc = view.increments
    batch = inc.shape[:-2]
    n = inc.shape[-1]
    h = view.h
    if y0 is None:
        y0 = heston_ft_y0(_heston_params(model)) if scheme.name == "heston_ft" else model.default_y0
    y = np.broadcast_to(np.asarray(y0, dtype=float), batch + (model.N,)).copy()

    if scheme.name == "heston_ft":
        return _integrate_heston(model, view, y, keep_path, on_nonfinite)

    if areas is None and scheme.name in NEEDS_AREAS and model.d >= 2:
        if view.parent.areas is not None or sampler.method == "cond":
            areas = view.areas
        elif not model.commutative:
            raise _missing_areas(model, scheme.name)

    traj = np.empty(batch + (n + 1, model.N)) if keep_path else None
    if keep_path:
        traj[..., 0, :] = y
    for m in range(n):
        a = None if areas is None else areas[..., m]
        y = step(model, scheme, y, StepInputs(h, inc[..., m], a))
        if on_nonfinite == "raise" and not np.all(np.isfinite(y)):
            bad = np.nonzero(~np.all(np.isfinite(y.reshape(-1, model.N)), axis=-1))[0]
            raise NonFiniteStateError(m + 1, bad)
        if keep_path:
            traj[..., m + 1, :] = y
    return traj if keep_path else y


def _integrate_heston(model, view, y, keep_path, on_nonfinite):
    p = _heston_params(model)
    inc = view.increments
    shape = inc.shape[:-2]
    dw1 = inc[..., 0, :].reshape(-1, inc.shape[-1])
    dw2 = inc[..., 1, :].reshape(-1, inc.shape[-1])
    y = y.reshape(-1, 2)
    if np.all(y == y[:1]):
        out = kernels.heston_ft(dw1, dw2, view.h, p.mu, p.kappa, p.theta, p.epsilon, p.rho,
                                y[0, 0], y[0, 1], keep_path)
    else:
        out = np.concatenate([kernels.heston_ft(dw1[k:k + 1], dw2[k:k + 1], view.h, p.mu, p.kappa,
                                                p.theta, p.epsilon, p.rho, y[k, 0], y[k, 1],
                                                keep_path) for k in range(y.shape[0])])
    if on_nonfinite == "raise" and not np.all(np.isfinite(out)):
        raise NonFiniteStateError(inc.shape[-1], np.nonzero(~np.isfinite(out).all(axis=-1))[0])
    return out.reshape(shape + out.shape[1:])
