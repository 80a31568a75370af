import math
from dataclasses import replace

import numpy as np
import pytest

from oracles import gbm_scheme_rms
from sdesim import mc
from sdesim.errors import ConfigurationError, FittingError, InvalidParameterError, NonFiniteStateError
from sdesim.levy import AreaSampler
from sdesim.mc import EnsembleConfig
from sdesim.model import make_gbm, make_heston, make_langevin, make_linear2d
from sdesim.wiener import aggregate, generate_bundles


def test_mean_and_stderr_examples():
    assert mc.mean_and_stderr([3.5] * 7) == (3.5, 0.0)
    m, se = mc.mean_and_stderr([0.0, 2.0])
    assert (m, se) == pytest.approx((1.0, 1.0))
    with pytest.raises(InvalidParameterError):
        mc.mean_and_stderr([1.0])


def test_fit_order_examples():
    assert mc.fit_order([0.1, 0.05], [0.01, 0.005]).slope == pytest.approx(1.0, abs=1e-12)
    h = 2.0 ** -np.arange(2, 8)
    f = mc.fit_order(h, 3.0 * np.sqrt(h))
    assert f.slope == pytest.approx(0.5, abs=1e-12)
    assert f.intercept == pytest.approx(math.log10(3.0), abs=1e-12)
    assert f.residual < 1e-12
    with pytest.raises(FittingError):
        mc.fit_order([0.1], [0.01])
    with pytest.raises(FittingError):
        mc.fit_order([0.1, 0.05], [0.01, 0.0])


def test_config_validation():
    m = make_gbm(1.0, 0.5)
    for kw in ({"P": 0}, {"T": 0.0}, {"Mstart": 5, "M": 3}, {"threads": 0}, {"scheme": "rk"}):
        with pytest.raises(InvalidParameterError):
            EnsembleConfig(m, **kw)
    c = EnsembleConfig(m, M=6, Mstart=3)
    assert c.R == 4
    np.testing.assert_allclose(c.levels_h, 2.0 ** -np.array([6, 5, 4, 3]))


def test_expectation_gbm_em():
    a, b, h = 3.0, 1.4, 0.05
    cfg = EnsembleConfig(make_gbm(a, b), "em", P=10**4, seed=3, n_steps=20)
    est = mc.estimate_expectation(cfg, lambda y: y[:, 0])
    # EM on GBM has mean (1 + a h)^N exactly
    assert abs(est.mean - (1 + a * h) ** 20) < 4 * est.stderr
    band = 0.5 * a * a * h * math.exp(a)
    assert abs(est.mean - math.exp(a)) < 4 * est.stderr + band


def test_strong_error_matches_exact_moment_oracle():
    a, b = 1.0, 0.5
    cfg = EnsembleConfig(make_gbm(a, b), "em", P=20000, seed=5, M=6, Mstart=3)
    rep = mc.strong_error_study(cfg)
    exact = gbm_scheme_rms(a, b, 1.0, rep.h, "em")
    assert np.all(np.abs(rep.rms - exact) < 4 * rep.stderr)
    assert rep.reference == "exact"


def test_milstein_strong_error_matches_oracle():
    a, b = 1.0, 0.5
    cfg = EnsembleConfig(make_gbm(a, b), "milstein", P=20000, seed=6, M=6, Mstart=3)
    rep = mc.strong_error_study(cfg)
    exact = gbm_scheme_rms(a, b, 1.0, rep.h, "milstein")
    assert np.all(np.abs(rep.rms - exact) < 4 * rep.stderr)


def test_error_monotone_and_reference_consistency():
    cfg = EnsembleConfig(make_gbm(1.0, 0.5), "em", P=1000, seed=7, M=7, Mstart=3)
    rep = mc.strong_error_study(cfg)
    assert np.all(np.diff(rep.rms) > 0)
    pred = rep.fit.slope * math.log10(rep.h[0]) + rep.fit.intercept
    assert abs(math.log10(rep.rms[0]) - pred) < 0.1


def test_matched_paths_independent_of_batching_and_threads():
    cfg = EnsembleConfig(make_linear2d(), "milstein", P=60, seed=8, M=6, Mstart=3,
                         sampler=AreaSampler("kl"))
    base = mc.strong_error_study(cfg)
    for kw in ({"batch_size": 7}, {"threads": 3, "batch_size": 11}):
        other = mc.strong_error_study(replace(cfg, **kw))
        np.testing.assert_array_equal(base.rms, other.rms)
        np.testing.assert_array_equal(base.stderr, other.stderr)
        assert base.fit == other.fit


def test_finest_reference_excludes_level_one():
    cfg = EnsembleConfig(make_heston(), "heston_ft", P=20, seed=9, M=6, Mstart=3)
    rep = mc.strong_error_study(cfg)
    assert rep.reference == "finest"
    assert rep.rms[0] == 0.0
    assert list(rep.fit_mask) == [False, True, True, True]
    with pytest.raises(FittingError):
        mc.strong_error_study(replace(cfg, Mstart=5))


def test_plan_rejects_huge_nested_grid():
    cfg = EnsembleConfig(make_linear2d(), "milstein", P=2, M=12, Mstart=10,
                         sampler=AreaSampler("cond"))
    with pytest.raises(ConfigurationError, match="fine steps"):
        mc.strong_error_study(cfg)
    with pytest.raises(ConfigurationError):
        mc.strong_error_study(replace(cfg, sampler=AreaSampler("none"), M=4, Mstart=2))
    with pytest.raises(ConfigurationError):
        mc.strong_error_study(EnsembleConfig(make_langevin(1, 1), reference="exact", M=3, Mstart=1))


def test_cond_area_error_floor_shrinks_by_sqrt2_per_q_doubling():
    P, h, K = 4000, 2 ** -4, 64
    b = generate_bundles(10, np.arange(P), 2, 0.0, h, 16 * K)
    _, ref = aggregate(b.increments, None, 16 * K)

    def err(Q):
        sub = b.coarsen(16 * K // Q).increments
        return math.sqrt(np.mean((aggregate(sub, None, Q)[1] - ref) ** 2))

    assert err(8) / err(16) == pytest.approx(math.sqrt(2), rel=0.2)
    assert err(16) / err(32) == pytest.approx(math.sqrt(2), rel=0.2)


def test_check_nonfinite_limit():
    ok = np.ones(200, dtype=bool)
    ok[3] = False
    assert mc._check_nonfinite(ok, "t") == 1
    ok[4:7] = False
    with pytest.raises(NonFiniteStateError):
        mc._check_nonfinite(ok, "t")


def test_weak_strong_shapes():
    cfg = EnsembleConfig(make_gbm(3.0, 1.4), "em", P=10, seed=42, n_steps=20)
    rep = mc.weak_vs_strong_study(cfg)
    assert rep.y_binomial.shape == rep.y_gaussian.shape == (21, 10)
    assert rep.times[-1] == pytest.approx(1.0)
    assert rep.analytic[-1] == pytest.approx(math.exp(3))
    assert np.all(np.isin(np.round(np.diff(rep.y_binomial[:2], axis=0) - 0.15, 12),
                          np.round([1.4 * math.sqrt(0.05), -1.4 * math.sqrt(0.05)], 12)))
    with pytest.raises(ConfigurationError):
        mc.weak_vs_strong_study(replace(cfg, scheme="milstein"))


def test_simulate_ensemble_heston_labels_and_start():
    res = mc.simulate_ensemble(EnsembleConfig(make_heston(), "heston_ft", P=3, M=4, seed=1))
    assert res.labels == ("S", "v")
    np.testing.assert_array_equal(res.states[:, 0], [[1.0, 0.09]] * 3)
    assert res.states.shape == (3, 17, 2)
