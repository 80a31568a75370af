import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sdesim import scheme
from sdesim.errors import ConfigurationError, InvalidParameterError, NonFiniteStateError
from sdesim.levy import AreaSampler
from sdesim.model import HestonParams, SdeModel, make_gbm, make_heston, make_langevin, make_linear2d
from sdesim.scheme import StepInputs
from sdesim.wiener import PathBundle, aggregate, generate_bundles

GBM = make_gbm(3.0, 1.4)
Y1 = np.array([1.0])


def test_em_gbm_example():
    y = scheme.em_step(GBM, Y1, StepInputs(0.05, np.array([0.1])))
    assert y[0] == pytest.approx(1.29)


def test_zero_step_is_identity():
    for fn in (scheme.em_step, scheme.milstein_step):
        assert fn(GBM, Y1, StepInputs(0.0, np.array([0.0])))[0] == 1.0
    m = make_linear2d()
    y = np.array([0.3, -1.2])
    out = scheme.milstein_step(m, y, StepInputs(0.0, np.zeros(2), np.zeros(1)))
    np.testing.assert_array_equal(out, y)


@given(y=st.floats(-5, 5), dw=st.floats(-1, 1), s=st.floats(-3, 3))
def test_em_langevin_affine(y, dw, s):
    m = make_langevin(3.0, 0.25)
    f = lambda y, dw: scheme.em_step(m, np.array([y]), StepInputs(0.01, np.array([dw])))[0]
    assert f(y + s, dw) - f(y, dw) == pytest.approx(f(s, 0.0) - f(0.0, 0.0), abs=1e-12)
    assert f(y, dw + s) - f(y, dw) == pytest.approx(0.5 * s, abs=1e-12)


def test_milstein_gbm_example():
    y = scheme.milstein_step(GBM, Y1, StepInputs(0.05, np.array([0.1])))
    assert y[0] == pytest.approx(1.2508)


def diagonal_model():
    """Two decoupled GBMs: commuting diffusion fields."""
    b = np.array([0.4, 0.9])

    def diffusion(y):
        out = np.zeros(np.shape(y) + (2,))
        out[..., 0, 0] = b[0] * y[..., 0]
        out[..., 1, 1] = b[1] * y[..., 1]
        return out

    return SdeModel("diag", 2, 2, lambda y: 0.1 * np.asarray(y), diffusion, commutative=True)


def test_milstein_commuting_ignores_area():
    m = diagonal_model()
    y = np.array([1.0, 2.0])
    dW = np.array([0.1, -0.2])
    a = scheme.milstein_step(m, y, StepInputs(0.01, dW, np.array([0.0])))
    b = scheme.milstein_step(m, y, StepInputs(0.01, dW, np.array([0.37])))
    np.testing.assert_allclose(a, b, atol=1e-9)
    c = scheme.milstein_step(m, y, StepInputs(0.01, dW))
    np.testing.assert_allclose(a, c, atol=1e-9)


def test_milstein_noncommuting_needs_areas():
    with pytest.raises(ConfigurationError, match="sampler"):
        scheme.milstein_step(make_linear2d(), np.ones(2), StepInputs(0.01, np.zeros(2)))
    with pytest.raises(ConfigurationError):
        scheme.castell_gaines_step(make_linear2d(), np.ones(2), StepInputs(0.01, np.zeros(2)), "one")


def test_j_matrix_antisymmetric_part():
    dW = np.array([0.3, -0.2, 0.5])
    J = scheme._j_matrix(dW, np.array([0.1, 0.2, -0.4]), 3)
    np.testing.assert_allclose(J + J.T, np.outer(dW, dW), atol=1e-15)
    np.testing.assert_allclose(np.diag(J), 0.5 * dW ** 2)
    assert J[0, 1] - J[1, 0] == pytest.approx(0.2)


def test_castell_gaines_pure_drift():
    y = scheme.castell_gaines_step(GBM, Y1, StepInputs(0.05, np.array([0.0])), "half", 4)
    assert y[0] == pytest.approx(math.exp(2.02 * 0.05), rel=1e-9)


def test_castell_gaines_gbm_flow():
    y = scheme.castell_gaines_step(GBM, Y1, StepInputs(0.05, np.array([0.1])), "half", 2)
    assert abs(y[0] - math.exp(0.241)) < 1e-6
    assert y[0] == pytest.approx(1.27253, abs=1e-5)


def test_castell_gaines_orders_equal_without_areas():
    m = make_linear2d()
    y = np.array([[0.5, -1.0], [2.0, 0.1]])
    inp = StepInputs(0.02, np.array([[0.1, -0.2], [0.05, 0.3]]), np.zeros((2, 1)))
    np.testing.assert_array_equal(scheme.castell_gaines_step(m, y, inp, "half"),
                                  scheme.castell_gaines_step(m, y, inp, "one"))
    with pytest.raises(InvalidParameterError):
        scheme.castell_gaines_step(m, y, inp, "two")


def test_castell_gaines_one_uses_bracket():
    m = make_linear2d()
    y = np.array([1.0, 1.0])
    a = 0.01
    inp = StepInputs(0.0, np.zeros(2), np.array([a]))
    out = scheme.castell_gaines_step(m, y, inp, "one", 8)
    # frozen field a [V1, V2] is linear: u' = a C u with C = A2 A1 - A1 A2
    A1, A2 = np.array(m.params["A1"]), np.array(m.params["A2"])
    C = A2 @ A1 - A1 @ A2
    from scipy.linalg import expm
    np.testing.assert_allclose(out, expm(a * C) @ y, rtol=1e-12)


def test_heston_ft_examples():
    p = HestonParams(mu=0.05, kappa=2.0, theta=0.09)
    S, v = scheme.heston_ft_step(p, 1.0, -0.01, 0.05, 0.3, -0.7)
    assert v == pytest.approx(-0.001)
    assert S == pytest.approx(math.exp(0.05 * 0.05))
    S, v = scheme.heston_ft_step(p, 2.0, 0.09, 0.05, 0.0, 0.0)
    assert S == pytest.approx(2.0 * math.exp(0.00025))
    assert v == pytest.approx(0.09)


def test_integrate_zero_increments_is_euler():
    m = make_langevin(3.0, 0.25)
    b = PathBundle(np.zeros((1, 10)), 0.0, 1.0)
    traj = scheme.integrate_path(m, "em", b.view(), (1.0,))
    np.testing.assert_allclose(traj[:, 0], (1 - 0.3) ** np.arange(11))


def test_integrate_single_step_matches_step():
    b = PathBundle(np.array([[0.1]]), 0.0, 0.05)
    for name in ("em", "milstein", "cg_half", "cg_one"):
        out = scheme.integrate_path(GBM, name, b.view(), (1.0,), keep_path=False)
        one = scheme.step(GBM, scheme.SchemeKind(name), Y1, StepInputs(0.05, np.array([0.1])))
        np.testing.assert_allclose(out, one, rtol=1e-15)


def test_integrate_heston_kernel_matches_steps():
    m = make_heston()
    b = generate_bundles(3, np.arange(4), 2, 0.0, 1.0, 16)
    traj = scheme.integrate_path(m, "heston_ft", b.view())
    S, v = np.full(4, 1.0), np.full(4, 0.09)
    for k in range(16):
        inc = b.increments[:, :, k]
        S, v = scheme.heston_ft_step(m.params["heston"], S, v, 1 / 16, inc[:, 0], inc[:, 1])
    np.testing.assert_allclose(traj[:, -1], np.stack([S, v], axis=1), rtol=1e-13)


def test_integrate_nonfinite_reports_step():
    m = make_gbm(1.0, 1.0)
    b = PathBundle(np.array([[0.1, np.inf, 0.1]]), 0.0, 1.0)
    with pytest.raises(NonFiniteStateError) as info, np.errstate(invalid="ignore"):
        scheme.integrate_path(m, "em", b.view(), (1.0,))
    assert info.value.step == 2


def test_integrate_cond_areas_from_finer_grid():
    m = make_linear2d()
    b = generate_bundles(4, np.arange(3), 2, 0.0, 1.0, 32)
    view = b.coarsen(4)
    via_sampler = scheme.integrate_path(m, "milstein", view, sampler=AreaSampler("cond"))
    _, areas = aggregate(b.increments, None, 4)
    explicit = scheme.integrate_path(m, "milstein", view, areas=areas)
    np.testing.assert_array_equal(via_sampler, explicit)
    with pytest.raises(ConfigurationError):
        scheme.integrate_path(m, "milstein", view)


def test_scheme_names():
    assert scheme.canonical_scheme("euler_maruyama") == "em"
    with pytest.raises(InvalidParameterError):
        scheme.SchemeKind("rk45")
    with pytest.raises(ConfigurationError):
        scheme.integrate_path(GBM, "heston_ft", PathBundle(np.zeros((1, 2))).view())
