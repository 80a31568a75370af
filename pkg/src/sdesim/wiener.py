"""Driving Wiener paths: generation, dyadic coarsening, replay.

Paths are stored as increments.  Arrays carry optional leading batch axes,
so one ``PathBundle`` may hold a single path ``(d, n)`` or an ensemble
``(P, d, n)``.

Coarsening by ``2**r * m`` (``m`` odd) sums neighbours pairwise ``r`` times
and then sums runs of ``m`` left to right.  For dyadic factors this makes
every coarse view the same floating-point tree regardless of the route
taken, so comparing levels of one path is exact in the regrouping.

Levy areas of pairs ``(i, j)`` with ``i < j`` ride along in
``(..., n_pairs, n)`` arrays and aggregate with Chen's relation

    A_ij[a+b] = A_ij[a] + A_ij[b] + (dW_i[a] dW_j[b] - dW_j[a] dW_i[b]) / 2.

A bundle with no sampled areas is treated as the piecewise-linear path
through its grid points, whose finest-step areas are zero; its coarse areas
are then the conditional expectations given the fine increments.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from .errors import InvalidParameterError
from .rng import LANE_BINOMIAL, LANE_GAUSSIAN, RngStream, path_normals, path_signs

KINDS = ("gaussian", "binomial")


def pair_indices(d: int) -> list[tuple[int, int]]:
    """0-based component pairs ``(i, j)``, ``i < j``, in storage order."""
    return [(i, j) for i in range(d) for j in range(i + 1, d)]


def _split_factor(factor):
    r = 0
    while factor % 2 == 0:
        factor //= 2
        r += 1
    return r, factor


def aggregate(increments, areas, factor):
    """Coarsen increments and Chen-aggregate areas by ``factor``.

    ``areas=None`` means zero areas at the input scale.  Returns
    ``(coarse_increments, coarse_areas)``; areas are ``None`` when ``d < 2``.
    """
    x = np.asarray(increments, dtype=float)
    d, n = x.shape[-2], x.shape[-1]
    if factor < 1 or n % factor:
        raise InvalidParameterError(f"factor {factor} does not divide {n} steps")
    pairs = pair_indices(d)
    if pairs:
        a = np.zeros(x.shape[:-2] + (len(pairs), n)) if areas is None else np.asarray(areas, float)
    else:
        a = None
    r, odd = _split_factor(factor)
    for _ in range(r):
        left, right = x[..., 0::2], x[..., 1::2]
        if a is not None:
            a = a[..., 0::2] + a[..., 1::2] + 0.5 * np.stack(
                [left[..., i, :] * right[..., j, :] - left[..., j, :] * right[..., i, :]
                 for i, j in pairs], axis=-2)
        x = left + right
    if odd > 1:
        m = x.shape[-1] // odd
        g = x.reshape(x.shape[:-1] + (m, odd))
        before = np.cumsum(g, axis=-1) - g
        acc = g[..., 0]
        for k in range(1, odd):
            acc = acc + g[..., k]
        if a is not None:
            ga = a.reshape(a.shape[:-1] + (m, odd))
            cross = np.stack([np.sum(before[..., i, :, :] * g[..., j, :, :]
                                     - before[..., j, :, :] * g[..., i, :, :], axis=-1)
                              for i, j in pairs], axis=-2)
            a = ga.sum(axis=-1) + 0.5 * cross
        x = acc
    return x, a


def coarsen_increments(increments, factor):
    x = np.asarray(increments, dtype=float)
    n = x.shape[-1]
    if factor < 1 or n % factor:
        raise InvalidParameterError(f"factor {factor} does not divide {n} steps")
    r, odd = _split_factor(factor)
    for _ in range(r):
        x = x[..., 0::2] + x[..., 1::2]
    if odd > 1:
        g = x.reshape(x.shape[:-1] + (x.shape[-1] // odd, odd))
        acc = g[..., 0]
        for k in range(1, odd):
            acc = acc + g[..., k]
        x = acc
    return x


@dataclass
class PathBundle:
    """Finest-grid increments of ``d`` driving Wiener components on ``[t0, T]``."""

    increments: np.ndarray
    t0: float = 0.0
    T: float = 1.0
    kind: str = "gaussian"
    areas: Optional[np.ndarray] = None

    def __post_init__(self):
        self.increments = np.asarray(self.increments, dtype=float)
        if self.increments.ndim < 2:
            raise InvalidParameterError("increments must have shape (..., d, n_fine)")
        if not self.T > self.t0:
            raise InvalidParameterError("need T > t0")
        if self.kind not in KINDS:
            raise InvalidParameterError(f"kind must be one of {KINDS}")

    @property
    def d(self) -> int:
        return self.increments.shape[-2]

    @property
    def n_fine(self) -> int:
        return self.increments.shape[-1]

    @property
    def dt_fine(self) -> float:
        return (self.T - self.t0) / self.n_fine

    def coarsen(self, factor: int) -> "CoarseView":
        return CoarseView(self, int(factor))

    def view(self) -> "CoarseView":
        return CoarseView(self, 1)

    def total_increment(self) -> np.ndarray:
        """``W_T - W_t0`` summed along the same tree as every dyadic view."""
        return coarsen_increments(self.increments, self.n_fine)[..., 0]


class CoarseView:
    """Read-only view of a bundle on steps of ``factor * dt_fine``."""

    def __init__(self, parent: PathBundle, factor: int):
        if factor < 1 or parent.n_fine % factor:
            raise InvalidParameterError(
                f"factor {factor} does not divide n_fine={parent.n_fine}")
        self.parent = parent
        self.factor = factor

    @cached_property
    def increments(self) -> np.ndarray:
        if self.factor == 1:
            return self.parent.increments
        return coarsen_increments(self.parent.increments, self.factor)

    @cached_property
    def areas(self) -> Optional[np.ndarray]:
        if self.parent.d < 2:
            return None
        return aggregate(self.parent.increments, self.parent.areas, self.factor)[1]

    @property
    def h(self) -> float:
        return self.factor * self.parent.dt_fine

    @property
    def n_steps(self) -> int:
        return self.parent.n_fine // self.factor

    @property
    def d(self) -> int:
        return self.parent.d

    @property
    def times(self) -> np.ndarray:
        return self.parent.t0 + self.h * np.arange(self.n_steps + 1)

    def coarsen(self, factor: int) -> "CoarseView":
        """Further coarsening, computed from this view's own increments."""
        view = CoarseView(self.parent, self.factor * int(factor))
        if factor != 1:
            view.__dict__["increments"] = coarsen_increments(self.increments, int(factor))
        return view


def partial_sums(view) -> np.ndarray:
    """Path values at the grid points, starting from 0: shape ``(..., d, n+1)``."""
    inc = view.increments if hasattr(view, "increments") else np.asarray(view, dtype=float)
    out = np.zeros(inc.shape[:-1] + (inc.shape[-1] + 1,))
    np.cumsum(inc, axis=-1, out=out[..., 1:])
    return out


def _check_grid(d, t0, T, n_fine):
    if d < 1:
        raise InvalidParameterError("need d >= 1")
    if n_fine < 1:
        raise InvalidParameterError("need n_fine >= 1")
    if not T > t0:
        raise InvalidParameterError("need T > t0")


def generate_bundle(stream: RngStream, d: int, t0: float, T: float, n_fine: int,
                    kind: str = "gaussian", method: str = "polar") -> PathBundle:
    """One path drawn from ``stream`` (component-major draw order)."""
    _check_grid(d, t0, T, n_fine)
    h = (T - t0) / n_fine
    if kind == "gaussian":
        inc = math.sqrt(h) * stream.normals(d * n_fine, method)
    elif kind == "binomial":
        inc = stream.binomial_increments(h, d * n_fine)
    else:
        raise InvalidParameterError(f"kind must be one of {KINDS}")
    return PathBundle(inc.reshape(d, n_fine), t0, T, kind)


def generate_bundles(seed: int, stream_ids, d: int, t0: float, T: float, n_fine: int,
                     kind: str = "gaussian", method: str = "polar") -> PathBundle:
    """Ensemble bundle ``(P, d, n_fine)``; row p comes from stream ``stream_ids[p]``.

    Row p equals ``generate_bundle(RngStream(seed, stream_ids[p], lane), ...)``
    with the lane reserved for ``kind``.
    """
    _check_grid(d, t0, T, n_fine)
    ids = np.asarray(stream_ids).reshape(-1)
    h = (T - t0) / n_fine
    if kind == "gaussian":
        z = path_normals(seed, ids, d * n_fine, LANE_GAUSSIAN, method)
    elif kind == "binomial":
        z = path_signs(seed, ids, d * n_fine, LANE_BINOMIAL)
    else:
        raise InvalidParameterError(f"kind must be one of {KINDS}")
    return PathBundle(math.sqrt(h) * z.reshape(ids.size, d, n_fine), t0, T, kind)


def write_path_csv(view, filename, index=None):
    """CSV with columns t, W1..Wd; ``index`` selects a path of a batched view."""
    if isinstance(view, PathBundle):
        view = view.view()
    W = partial_sums(view)
    if index is not None:
        W = W[index]
    if W.ndim != 2:
        raise InvalidParameterError("select a single path with index=")
    with open(filename, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"W{i + 1}" for i in range(W.shape[0])])
        for k, t in enumerate(view.times):
            w.writerow([f"{t:.17g}"] + [f"{x:.17g}" for x in W[:, k]])
