import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sdesim.errors import InvalidParameterError
from sdesim.mc import EnsembleConfig, simulate_ensemble
from sdesim.model import (HestonParams, fd_jvp, heston_pde_coefficients, lie_bracket, make_gbm,
                          make_heston, make_langevin, make_linear2d, make_model)


def test_langevin_mean_and_zero_noise():
    m = make_langevin(3.0, 0.25)
    assert m.exact_mean(1.0, 1.0) == pytest.approx(0.049787, abs=1e-6)
    quiet = make_langevin(3.0, 0.0)
    res = simulate_ensemble(EnsembleConfig(quiet, P=5, M=4, seed=1), keep_path=False)
    assert np.all(res.final() == res.final()[0])
    np.testing.assert_array_equal(quiet.strat_drift(np.array([0.4])), quiet.drift_ito(np.array([0.4])))
    with pytest.raises(InvalidParameterError):
        make_langevin(1.0, -1.0)


def test_gbm_exact_solution():
    m = make_gbm(3.0, 1.4)
    assert m.exact_solution(1.0, 1.0, 0.0) == pytest.approx(math.exp(2.02))
    assert m.exact_solution(1.0, 1.0, 0.0) == pytest.approx(7.5383, abs=1e-4)
    assert m.exact_mean(1.0, 1.0) == pytest.approx(20.0855, abs=1e-4)
    ode = make_gbm(0.7, 0.0)
    assert ode.exact_solution(2.0, 0.5, 1.3) == pytest.approx(2.0 * math.exp(0.35))


def test_gbm_fields():
    m = make_gbm(3.0, 1.4)
    y = np.array([[2.0]])
    assert m.diffusion(y).shape == (1, 1, 1)
    assert m.diffusion_jvp(y, np.array([[0.5]]))[0, 0, 0] == pytest.approx(0.7)
    assert m.strat_drift(np.array([1.0]))[0] == pytest.approx(2.02)


def test_heston_fields():
    p = HestonParams()
    m = make_heston(p)
    assert m.drift_ito(np.array([0.0, p.theta]))[1] == 0.0
    V = make_heston(HestonParams(rho=0.0)).diffusion(np.array([0.0, 0.04]))
    assert V[1, 0] == 0.0
    assert V[0, 0] == pytest.approx(0.2)
    assert V[1, 1] == pytest.approx(0.1 * 0.2)
    Vneg = m.diffusion(np.array([0.0, -0.01]))
    assert np.all(Vneg == 0.0)
    assert m.default_y0 == (0.0, 0.09)


def test_heston_listing_parameters_via_aliases():
    m = make_model("heston", alpha=2.0, theta=0.09, beta=0.1, rho=0.5, mu=0.05)
    p = m.params["heston"]
    assert (p.kappa, p.theta, p.epsilon, p.rho, p.mu, p.S0, p.v0) == (2.0, 0.09, 0.1, 0.5, 0.05, 1.0, 0.09)
    assert p == HestonParams()


@pytest.mark.parametrize("kw", [{"kappa": -1}, {"rho": 1.5}, {"S0": 0.0}, {"epsilon": -0.1}])
def test_heston_invalid(kw):
    with pytest.raises(InvalidParameterError):
        HestonParams(**kw)


def test_heston_pde_coefficients():
    c = heston_pde_coefficients()
    assert c.u_xx(0.0, 0.09) == pytest.approx(0.045)
    assert c.u_xv(0.0, 0.09) == pytest.approx(0.0045)
    assert c.u_vv(0.0, 0.09) == pytest.approx(0.00045)
    assert c.u_v(0.0, 0.09) == pytest.approx(0.0)
    assert c.u_x(0.0, 0.09) == 0.05


def test_linear2d_bracket_nonzero_and_commuting_flag():
    m = make_linear2d()
    assert not m.commutative
    br = lie_bracket(m, np.array([1.0, 2.0]), 0, 1)
    A1, A2 = np.array(m.params["A1"]), np.array(m.params["A2"])
    # [V1, V2](y) = dV2[V1] - dV1[V2] = (A2 A1 - A1 A2) y
    np.testing.assert_allclose(br, (A2 @ A1 - A1 @ A2) @ [1.0, 2.0])
    assert make_linear2d(np.eye(2), 2 * np.eye(2)).commutative


@given(st.lists(st.floats(-3, 3), min_size=2, max_size=2), st.lists(st.floats(-3, 3), min_size=2, max_size=2))
def test_fd_jvp_exact_on_linear_fields(y, v):
    m = make_linear2d()
    y, v = np.array(y), np.array(v)
    np.testing.assert_allclose(fd_jvp(m.diffusion, y, v), m.jvp(y, v), atol=1e-8)


def test_fd_jvp_zero_direction():
    m = make_gbm(1.0, 0.5)
    assert np.all(fd_jvp(m.diffusion, np.array([1.0]), np.array([0.0])) == 0.0)


def test_make_model_unknown():
    with pytest.raises(InvalidParameterError):
        make_model("vasicek")
