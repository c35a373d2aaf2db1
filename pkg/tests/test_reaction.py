import numpy as np
import pytest
from hypothesis import given, strategies as st

from cardiosph.errors import ModelDomainError
from cardiosph.reaction import (ActiveStressParams, AlievPanfilov, AlievPanfilovParams, ElectroState,
                                FitzHughNagumo, active_stress_step, make_model, qss_step, reaction_half_step,
                                rk4_reference, strang_reaction_step, to_physical)


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(1e-3, 10), st.floats(1e-4, 5))
def test_qss_is_exact_for_linear_ode(y0, q, p, dt):
    exact = q / p + (y0 - q / p) * np.exp(-p * dt)
    assert qss_step(y0, q, p, dt) == pytest.approx(exact, rel=1e-12, abs=1e-12)


def test_qss_small_rate_branch():
    assert qss_step(1.0, 2.0, 0.0, 0.5) == pytest.approx(2.0)
    assert qss_step(1.0, 2.0, 1e-12, 0.5) == pytest.approx(2.0, rel=1e-9)


@given(st.floats(0, 200), st.floats(1e-3, 1.0))
def test_qss_unconditionally_bounded(p, dt):
    # decaying linear ODE: the update never overshoots the equilibrium
    y = qss_step(1.0, 0.0, p, dt)
    assert 0.0 <= y <= 1.0


@pytest.mark.parametrize("model", [AlievPanfilov(), FitzHughNagumo()])
def test_rest_state_is_fixed_point(model):
    s = ElectroState(np.zeros(4), np.zeros(4))
    for _ in range(10):
        s = strang_reaction_step(s, 0.1, model)
    assert np.all(s.V == 0.0) and np.all(s.w == 0.0)


def test_qss_split_of_ap_reproduces_rates():
    m = AlievPanfilov()
    V, w = np.array([0.3, 0.9]), np.array([0.1, 0.5])
    dV, dw = m.rates(V, w)
    q, p = m.v_terms(V, w)
    assert np.allclose(q - p * V, dV)
    q, p = m.w_terms(V, w)
    assert np.allclose(q - p * w, dw)


def test_fhn_split_reproduces_rates():
    m = FitzHughNagumo()
    V, w = np.array([0.3, 0.9]), np.array([0.1, -0.2])
    dV, dw = m.rates(V, w)
    q, p = m.v_terms(V, w)
    assert np.allclose(q - p * V, dV)
    q, p = m.w_terms(V, w)
    assert np.allclose(q - p * w, dw)


def test_half_steps_compose_to_strang():
    m = AlievPanfilov()
    s = ElectroState(np.array([0.5]), np.array([0.2]))
    a = strang_reaction_step(s, 0.05, m)
    b = reaction_half_step(reaction_half_step(s, 0.05, m, "forward"), 0.05, m, "backward")
    assert a.V[0] == b.V[0] and a.w[0] == b.w[0]
    assert s.V[0] == 0.5  # input untouched
    with pytest.raises(ValueError):
        reaction_half_step(s, 0.1, m, "sideways")
    with pytest.raises(ValueError):
        reaction_half_step(s, -0.1, m)


def test_split_qss_converges_at_first_order():
    # frozen-coefficient sub-steps cap the splitting at first order
    m = AlievPanfilov()
    ref = rk4_reference(m, 0.9, 0.0, 1e-4, 2.0)[-1, 0]
    errs = []
    for dt in (0.02, 0.01, 0.005):
        s = ElectroState(np.array([0.9]), np.array([0.0]))
        for _ in range(int(round(2.0 / dt))):
            s = strang_reaction_step(s, dt, m)
        errs.append(abs(s.V[0] - ref))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all((rates > 0.9) & (rates < 1.3))


def test_ap_domain_error():
    with pytest.raises(ModelDomainError):
        AlievPanfilov().epsilon(np.array([-0.5]), np.array([0.0]))


def test_parameter_validation_and_factory():
    with pytest.raises(ValueError):
        AlievPanfilovParams(a=1.5)
    assert make_model("AP").params.a == 0.15
    assert make_model("fitzhugh-nagumo", a=0.2).params.a == 0.2
    assert AlievPanfilovParams.biventricle().a == 0.01
    with pytest.raises(ValueError):
        make_model("hodgkin_huxley")


def test_active_stress_relaxes_to_target():
    p = ActiveStressParams(k_a=2.0)
    Ta = np.zeros(1)
    for _ in range(2000):
        Ta = active_stress_step(Ta, np.array([0.5]), 0.05, p)
    assert Ta[0] == pytest.approx(1.0, rel=1e-6)


def test_physical_units():
    E, t = to_physical(np.array([0.0, 1.0]), 1.0)
    assert E.tolist() == [-80.0, 20.0] and t == pytest.approx(12.9)
