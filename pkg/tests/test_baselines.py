from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sgnmg.baselines import (BelController, BelInput, BelState, PiController, PiState,
                             bel_output, bel_update, pi_step)
from sgnmg.engine import run
from sgnmg.scenario import load_step_spec

stimulus = st.lists(st.floats(0.0, 5.0), min_size=2, max_size=2)


# --- BEL ---------------------------------------------------------------------
def test_zero_weights_give_zero_output():
    assert bel_output(BelState(), BelInput((0.7, 0.3), 1.0)) == 0.0


def test_output_is_excitation_minus_inhibition():
    st_ = BelState(v_w=(1.0, 0.0), v_th=0.0, w_o=(0.5, 0.0))
    assert bel_output(st_, BelInput((0.2, 0.0), 0.0)) == pytest.approx(0.1, abs=1e-15)


def test_thalamic_shortcut_uses_the_strongest_stimulus():
    st_ = BelState(v_th=2.0)
    assert bel_output(st_, BelInput((0.1, 0.4), 0.0)) == pytest.approx(0.8)


@given(s=stimulus, w=stimulus)
def test_mirrored_weights_cancel(s, w):
    st_ = BelState(v_w=tuple(w), w_o=tuple(w))
    assert bel_output(st_, BelInput(tuple(s), 1.0)) == 0.0


def test_amygdala_holds_when_it_over_predicts():
    st_ = BelState(v_w=(0.3, 0.2))
    new = bel_update(st_, BelInput((1.0, 1.0), 0.5), a_out=0.5, e_out=0.0)
    assert new.v_w == st_.v_w


def test_amygdala_learning_step():
    st_ = BelState(v_w=(0.0,), w_o=(0.0,), alpha=0.1)
    new = bel_update(st_, BelInput((1.0,), 1.0), a_out=0.0, e_out=0.0)
    assert new.v_w == pytest.approx((0.1,))


def test_orbitofrontal_holds_at_zero_error():
    st_ = BelState(w_o=(0.4, 0.1))
    new = bel_update(st_, BelInput((1.0, 2.0), 0.7), a_out=0.0, e_out=0.7)
    assert new.w_o == st_.w_o


def test_bel_validation():
    with pytest.raises(ValueError):
        BelState(alpha=0.0)
    with pytest.raises(ValueError):
        BelState(v_w=(0.0,), w_o=(0.0, 0.0))
    with pytest.raises(ValueError):
        BelInput((float("nan"),), 1.0)


@given(dfs=st.lists(st.floats(-0.02, 0.02), min_size=1, max_size=60),
       rew=st.floats(0.0, 1.0))
def test_amygdala_weights_never_decrease(dfs, rew):
    ctl = BelController(rew=rew)
    prev = np.asarray(ctl.state.v_w)
    for df in dfs:
        ctl.step(df, 0.1)
        cur = np.asarray(ctl.state.v_w)
        assert np.all(cur >= prev)
        prev = cur


def test_bel_output_pushes_frequency_back():
    ctl = BelController(state=BelState(v_w=(1.0, 1.0)), learn=False)
    assert ctl.step(-0.005, 0.1) > 0.0
    ctl = BelController(state=BelState(v_w=(1.0, 1.0)), learn=False)
    assert ctl.step(0.005, 0.1) < 0.0


# --- PI ----------------------------------------------------------------------
def test_pi_is_idle_at_zero_error():
    u, s = pi_step(PiState(), 0.0, 0.1)
    assert u == 0.0 and s.integ == 0.0


def test_pi_proportional_part():
    u, _ = pi_step(PiState(kp=1.0, ki=0.0, out_max=10.0), 0.5, 0.1)
    assert u == 0.5


def test_pi_integrator_freezes_at_the_limit():
    s = PiState(kp=0.0, ki=1.0, out_max=0.1, out_min=-0.1)
    outs = []
    for _ in range(15):
        u, s = pi_step(s, 1.0, 0.01)
        outs.append(u)
    # ramps 0.01 per step, reaches the limit on step 10, then holds
    assert outs[:9] == pytest.approx([0.01 * k for k in range(1, 10)])
    assert outs[9:] == pytest.approx([0.1] * 6)
    assert s.integ == pytest.approx(0.1)
    u, s2 = pi_step(s, 1.0, 0.01)
    assert u == 0.1 and s2.integ == s.integ


def test_pi_validation():
    with pytest.raises(ValueError):
        PiState(out_min=1.0, out_max=0.0)
    with pytest.raises(ValueError):
        pi_step(PiState(), 0.1, 0.0)


def test_pi_restores_nominal_frequency_where_droop_cannot():
    pi = run(load_step_spec(0.1, duration=20.0, controller="pi"))
    droop = run(load_step_spec(0.1, duration=20.0))
    assert abs(pi.steps["delta_f"][-1]) < 1e-4
    assert abs(droop.steps["delta_f"][-1]) > 1e-3


def test_pi_controller_acts_against_the_deviation():
    assert PiController().step(-0.01, 0.1) > 0.0
