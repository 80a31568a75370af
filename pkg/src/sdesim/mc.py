"""Ensemble runs: expectations, matched-path strong errors, order fits.

Paths are processed in batches of consecutive path indices.  Every path
draws from its own streams (stream_id = path index), and batch results are
concatenated in index order, so outputs do not depend on ``threads``.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import ConfigurationError, FittingError, InvalidParameterError, NonFiniteStateError
from .levy import AreaSampler, attach_areas
from .model import SdeModel
from .scheme import SchemeKind, integrate_path, needs_areas
from .wiener import aggregate, generate_bundles

log = logging.getLogger(__name__)

NONFINITE_LIMIT = 0.01
MAX_FINE_STEPS = 2 ** 20
BATCH_BUDGET = 2 ** 23  # floats of fine increments held per batch


@dataclass
class EnsembleConfig:
    """Settings shared by every ensemble run.

    Levels are ``h_r = hmin 2^(r-1)``, ``r = 1..R``, with
    ``hmin = (T - t0) / 2^M`` and ``R = M - Mstart + 1``.  ``n_steps``
    overrides the grid for single-grid runs (``simulate``, expectations).
    ``reference`` is ``auto`` (exact solution when the model has one, else
    the finest level), ``exact``, ``finest`` or a scheme name run on a grid
    ``2^reference_extra`` times finer than ``hmin``.
    """

    model: SdeModel
    scheme: str = "em"
    P: int = 1000
    seed: int = 0
    t0: float = 0.0
    T: float = 1.0
    M: int = 9
    Mstart: int = 4
    y0: Optional[tuple] = None
    sampler: AreaSampler = field(default_factory=AreaSampler)
    kind: str = "gaussian"
    normal_method: str = "polar"
    ode_substeps: int = 2
    n_steps: Optional[int] = None
    reference: str = "auto"
    reference_extra: int = 0
    threads: int = 1
    batch_size: int = 250

    def __post_init__(self):
        if self.P < 1:
            raise InvalidParameterError("P must be >= 1")
        if not self.T > self.t0:
            raise InvalidParameterError("need T > t0")
        if self.M < 0 or self.Mstart < 0 or self.Mstart > self.M:
            raise InvalidParameterError("need 0 <= Mstart <= M")
        if self.n_steps is not None and self.n_steps < 1:
            raise InvalidParameterError("n_steps must be >= 1")
        if self.threads < 1 or self.batch_size < 1:
            raise InvalidParameterError("threads and batch_size must be >= 1")
        self.scheme_kind  # validates the name

    @property
    def scheme_kind(self) -> SchemeKind:
        return SchemeKind(self.scheme, self.ode_substeps)

    @property
    def R(self) -> int:
        return self.M - self.Mstart + 1

    @property
    def hmin(self) -> float:
        return (self.T - self.t0) / 2 ** self.M

    @property
    def levels_h(self) -> np.ndarray:
        return self.hmin * 2.0 ** np.arange(self.R)

    def initial_state(self):
        if self.y0 is not None:
            return tuple(np.atleast_1d(np.asarray(self.y0, dtype=float)))
        if self.scheme_kind.name == "heston_ft":
            p = self.model.params["heston"]
            return (p.S0, p.v0)
        return self.model.default_y0


# -- statistics -------------------------------------------------------------------

class Estimate(NamedTuple):
    mean: float
    stderr: float
    n_used: int
    n_excluded: int


def mean_and_stderr(values) -> tuple:
    """Sample mean and ``std(ddof=1)/sqrt(n)``."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size < 2:
        raise InvalidParameterError("need at least two values for a standard error")
    return float(np.mean(v)), float(np.std(v, ddof=1) / math.sqrt(v.size))


class FitResult(NamedTuple):
    slope: float
    intercept: float
    residual: float


def fit_order(h, e) -> FitResult:
    """Least squares of ``log10 e`` on ``log10 h``; residual is the RMS misfit."""
    h = np.asarray(h, dtype=float)
    e = np.asarray(e, dtype=float)
    if h.size < 2 or h.size != e.size:
        raise FittingError("need at least two (h, e) levels")
    if np.any(e <= 0) or np.any(h <= 0) or not np.all(np.isfinite(e)):
        raise FittingError("errors and step sizes must be positive and finite")
    x, y = np.log10(h), np.log10(e)
    slope, intercept = np.polyfit(x, y, 1)
    res = y - (slope * x + intercept)
    return FitResult(float(slope), float(intercept), float(np.sqrt(np.mean(res ** 2))))


# -- batching -----------------------------------------------------------------------

def _batches(P, size):
    return [np.arange(s, min(P, s + size)) for s in range(0, P, size)]


def _run_batches(fn, config, n_fine):
    per = max(1, min(config.batch_size, BATCH_BUDGET // max(1, config.model.d * n_fine)))
    batches = _batches(config.P, per)
    if config.threads == 1 or len(batches) == 1:
        return [fn(ids) for ids in batches]
    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        return list(pool.map(fn, batches))


def _check_nonfinite(ok, where):
    bad = int(np.count_nonzero(~ok))
    if bad:
        log.warning("%d of %d paths non-finite in %s; excluded", bad, ok.size, where)
    if bad > NONFINITE_LIMIT * ok.size:
        raise NonFiniteStateError(where, np.nonzero(~ok)[0])
    return bad


# -- simulation on one grid ---------------------------------------------------------

@dataclass
class EnsembleResult:
    times: np.ndarray
    states: np.ndarray          # (P, n+1, N) or (P, N)
    finite: np.ndarray          # (P,) bool
    labels: tuple
    cpu_seconds: float

    @property
    def n_excluded(self) -> int:
        return int(np.count_nonzero(~self.finite))

    def final(self):
        return self.states[:, -1, :] if self.states.ndim == 3 else self.states


def _bundle(config, ids, n_fine, kind=None):
    return generate_bundles(config.seed, ids, config.model.d, config.t0, config.T, n_fine,
                            kind or config.kind, config.normal_method)


def simulate_ensemble(config: EnsembleConfig, keep_path: bool = True) -> EnsembleResult:
    """Integrate ``P`` paths on ``n_steps`` (default ``2^M``) equal steps."""
    n = config.n_steps or 2 ** config.M
    model, sk, sampler = config.model, config.scheme_kind, config.sampler
    use_areas = needs_areas(model, sk.name)
    q = sampler.resolve_q((config.T - config.t0) / n) if use_areas and sampler.method == "cond" else 1
    if use_areas and sampler.method == "none":
        raise ConfigurationError(f"scheme {sk.name!r} on {model.name!r} needs an area sampler")
    y0 = config.initial_state()

    def run(ids):
        t = time.perf_counter()
        b = _bundle(config, ids, n * q)
        if use_areas and sampler.method in ("kl", "rw"):
            b = attach_areas(b, sampler, config.seed, ids)
        out = integrate_path(model, sk, b.coarsen(q), y0, sampler, keep_path, "ignore")
        return out, time.perf_counter() - t

    parts = _run_batches(run, config, n * q)
    states = np.concatenate([p[0] for p in parts])
    flat = states.reshape(states.shape[0], -1)
    finite = np.all(np.isfinite(flat), axis=1)
    _check_nonfinite(finite, "simulate")
    times = config.t0 + (config.T - config.t0) / n * np.arange(n + 1)
    labels = ("S", "v") if sk.name == "heston_ft" else model.labels
    return EnsembleResult(times, states, finite, labels, sum(p[1] for p in parts))


def estimate_expectation(config: EnsembleConfig, f: Callable, t: Optional[float] = None) -> Estimate:
    """Monte Carlo ``E f(y_t)`` with its standard error; ``t`` overrides ``T``."""
    if config.P < 2:
        raise InvalidParameterError("need P >= 2")
    if t is not None:
        from dataclasses import replace
        config = replace(config, T=config.t0 + t)
    res = simulate_ensemble(config, keep_path=False)
    vals = np.asarray(f(res.final()), dtype=float)
    if vals.ndim > 1:
        vals = vals.reshape(vals.shape[0], -1)[:, 0]
    ok = res.finite & np.isfinite(vals)
    m, se = mean_and_stderr(vals[ok])
    return Estimate(m, se, int(ok.sum()), int((~ok).sum()))


# -- matched-path strong error --------------------------------------------------------

@dataclass
class ErrorReport:
    h: np.ndarray
    rms: np.ndarray
    stderr: np.ndarray
    cpu: np.ndarray
    fit: FitResult
    fit_mask: np.ndarray
    reference: str
    n_used: int
    n_excluded: int
    scheme: str = ""
    model: str = ""

    @property
    def slope(self) -> float:
        return self.fit.slope

    def rows(self):
        return [(r + 1, self.h[r], self.rms[r], self.stderr[r], self.cpu[r])
                for r in range(self.h.size)]


class _Run(NamedTuple):
    scheme: SchemeKind
    n_steps: int
    q: int  # cond sub-steps per step (1 otherwise)


def _plan(config):
    model, sk, sampler = config.model, config.scheme_kind, config.sampler
    nmin = 2 ** config.M
    runs = [_Run(sk, nmin >> r, 1) for r in range(config.R)]
    ref = config.reference
    if ref == "auto":
        ref = "exact" if model.exact_solution is not None and sk.name != "heston_ft" else "finest"
    if ref == "exact" and model.exact_solution is None:
        raise ConfigurationError(f"model {model.name!r} has no exact solution")
    ref_run = None
    if ref not in ("exact", "finest"):
        ref_run = _Run(SchemeKind(ref, config.ode_substeps), nmin << config.reference_extra, 1)
    all_runs = runs + ([ref_run] if ref_run else [])
    use_areas = any(needs_areas(model, r.scheme.name) for r in all_runs)
    if use_areas and sampler.method == "none":
        raise ConfigurationError("the scheme needs Levy areas; set an area sampler (kl, rw or cond)")
    if use_areas and sampler.method == "cond":
        h = (config.T - config.t0)
        all_runs = [r._replace(q=sampler.resolve_q(h / r.n_steps)) for r in all_runs]
    n_fine = int(np.lcm.reduce([r.n_steps * r.q for r in all_runs]))
    if n_fine > MAX_FINE_STEPS:
        raise ConfigurationError(f"nested grids need {n_fine} fine steps (limit {MAX_FINE_STEPS})")
    runs, ref_run = (all_runs[:-1], all_runs[-1]) if ref_run else (all_runs, None)
    return runs, ref_run, ref, n_fine, use_areas


def _view_and_areas(bundle, run, n_fine, sampler, use_areas):
    view = bundle.coarsen(n_fine // run.n_steps)
    if not use_areas or bundle.d < 2:
        return view, None
    if sampler.method == "cond":
        sub = bundle.coarsen(n_fine // (run.n_steps * run.q)).increments
        return view, aggregate(sub, None, run.q)[1]
    return view, view.areas


def strong_error_study(config: EnsembleConfig) -> ErrorReport:
    """RMS over paths of ``|y_ref - y_r|`` at ``T`` for each level, same paths throughout."""
    runs, ref_run, ref, n_fine, use_areas = _plan(config)
    model, sampler = config.model, config.sampler
    y0 = config.initial_state()
    R = len(runs)

    def run(ids):
        b = _bundle(config, ids, n_fine)
        if use_areas and sampler.method in ("kl", "rw"):
            b = attach_areas(b, sampler, config.seed, ids)
        finals = np.empty((R, ids.size, model.N if runs[0].scheme.name != "heston_ft" else 2))
        cpu = np.zeros(R)
        for r, rr in enumerate(runs):
            t = time.perf_counter()
            view, areas = _view_and_areas(b, rr, n_fine, sampler, use_areas)
            finals[r] = integrate_path(model, rr.scheme, view, y0, sampler, False, "ignore", areas)
            cpu[r] = time.perf_counter() - t
        if ref == "exact":
            yref = model.exact_solution(np.asarray(y0), config.T - config.t0, b.total_increment())
        elif ref == "finest":
            yref = finals[0]
        else:
            view, areas = _view_and_areas(b, ref_run, n_fine, sampler, use_areas)
            yref = integrate_path(model, ref_run.scheme, view, y0, sampler, False, "ignore", areas)
        return np.sum((finals - yref[None]) ** 2, axis=-1), cpu

    parts = _run_batches(run, config, n_fine)
    D2 = np.concatenate([p[0] for p in parts], axis=1)  # (R, P)
    cpu = np.sum([p[1] for p in parts], axis=0)
    ok = np.all(np.isfinite(D2), axis=0)
    bad = _check_nonfinite(ok, "strong_error_study")
    D2 = D2[:, ok]
    n = D2.shape[1]
    if n < 2:
        raise FittingError("fewer than two finite paths")
    rms = np.sqrt(np.mean(D2, axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        se = np.where(rms > 0, np.std(D2, axis=1, ddof=1) / math.sqrt(n) / (2.0 * rms), 0.0)
    h = config.levels_h
    mask = np.ones(R, dtype=bool)
    if ref == "finest":
        mask[0] = False
    if mask.sum() < 2:
        raise FittingError("fewer than two levels available for the order fit")
    fit = fit_order(h[mask], rms[mask])
    return ErrorReport(h, rms, se, cpu, fit, mask, ref, n, bad,
                       config.scheme_kind.name, model.name)


# -- weak versus strong ----------------------------------------------------------------

@dataclass
class WeakStrongReport:
    times: np.ndarray
    y_binomial: np.ndarray   # (N+1, P)
    y_gaussian: np.ndarray   # (N+1, P)
    analytic: np.ndarray

    @property
    def mean_binomial(self):
        return self.y_binomial.mean(axis=1)

    @property
    def mean_gaussian(self):
        return self.y_gaussian.mean(axis=1)

    @property
    def stderr_binomial(self):
        return self.y_binomial.std(axis=1, ddof=1) / math.sqrt(self.y_binomial.shape[1])

    @property
    def stderr_gaussian(self):
        return self.y_gaussian.std(axis=1, ddof=1) / math.sqrt(self.y_gaussian.shape[1])


def weak_vs_strong_study(config: EnsembleConfig) -> WeakStrongReport:
    """Euler-Maruyama on GBM driven once by binomial and once by Gaussian increments."""
    from dataclasses import replace
    if config.model.name != "gbm" or config.scheme_kind.name != "em":
        raise ConfigurationError("weak-vs-strong runs Euler-Maruyama on the gbm model")
    out = {}
    for kind in ("binomial", "gaussian"):
        res = simulate_ensemble(replace(config, kind=kind), keep_path=True)
        out[kind] = res.states[..., 0].T
    y0 = np.asarray(config.initial_state())
    analytic = np.array([float(config.model.exact_mean(y0, t - config.t0)[0]) for t in res.times])
    return WeakStrongReport(res.times, out["binomial"], out["gaussian"], analytic)
