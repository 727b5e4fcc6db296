import numpy as np
import pytest

from jumpsyn.errors import NonFinite, StepTooLarge
from jumpsyn.model import DelaySpec, InitialHistory, MjlsModel
from jumpsyn.performance import simulate_run
from jumpsyn.sim import (DisturbanceSignal, JumpPath, build_grid, integrate_closed_loop, make_delay_signal)

from oracles import K_REF, delayed_decay_exact


def scalar(A=0.0, B=1.0, E=0.0, C=1.0):
    return MjlsModel(A=[[[A]]], B=[[[B]]], C=[[[C]]], J=[[[C]]], E=[[[E]]], Psi=[[[0.0]]], Phi=[[[0.0]]],
                     Pi=[[0.0]])


def still(T):
    return JumpPath(0, np.array([]), np.array([]), T, 1)


def run_scalar(model, K, T, dt, delay_kind="constant", c=0.0, tau0=1.0, phi=1.0, w=None):
    return integrate_closed_loop(model, [[[K]]], still(T), still(T),
                                 make_delay_signal(DelaySpec(tau0, 0.5), delay_kind, c=c),
                                 w or DisturbanceSignal.zero(1), InitialHistory.constant([phi], tau0), dt)


def test_zero_dynamics_constant():
    m = MjlsModel(A=np.zeros((1, 2, 2)), B=np.zeros((1, 2, 1)), C=np.zeros((1, 1, 2)), J=np.zeros((1, 1, 2)),
                  E=np.zeros((1, 2, 1)), Psi=np.zeros((1, 1, 1)), Phi=np.zeros((1, 1, 1)), Pi=[[0.0]])
    tr = integrate_closed_loop(m, np.zeros((1, 1, 2)), still(3.0), still(3.0),
                               make_delay_signal(DelaySpec(1.0, 0.5), "ramp"), DisturbanceSignal.zero(1),
                               InitialHistory.constant([0.3, -2.0], 1.0), 0.01)
    assert np.all(tr.x == [0.3, -2.0])


def test_exponential_decay():
    tr = run_scalar(scalar(A=-1.0), 0.0, 1.0, 1e-3)
    assert abs(tr.x[-1, 0] - np.exp(-1)) <= 1e-6


def test_delayed_decay_values():
    tr = run_scalar(scalar(), -1.0, 2.0, 1e-3, c=1.0)
    assert abs(tr.state(1.0)[0] - 0.0) <= 1e-4
    assert abs(tr.x[-1, 0] + 0.5) <= 1e-4


def test_undelayed_feedback_matches_closed_form():
    # tau = 0: the delayed read is the current state, x' = (A + BK) x
    tr = run_scalar(scalar(A=-0.5), -0.5, 1.0, 1e-3, c=0.0)
    assert abs(tr.x[-1, 0] - np.exp(-1.0)) <= 1e-6


def _dense_error(dt):
    tr = run_scalar(scalar(), -1.0, 2.0, dt, c=1.0)
    s = np.linspace(0, 2, 40001)
    return np.abs(tr.state(s)[:, 0] - delayed_decay_exact(s)).max()


def test_order_on_delayed_benchmark():
    assert _dense_error(1e-3) / _dense_error(5e-4) >= 3.5


def test_step_too_large():
    with pytest.raises(StepTooLarge):
        run_scalar(scalar(), -1.0, 2.0, 0.5, c=0.2, tau0=0.2)
    run_scalar(scalar(), -1.0, 2.0, 0.5, c=0.0, tau0=0.2)  # no delay on the horizon: allowed


def test_nonfinite_detected():
    with pytest.raises(NonFinite, match="non-finite"):
        run_scalar(scalar(A=1e4), 0.0, 1.0, 0.01)


def test_grid_includes_jump_times():
    g = build_grid(1.0, 0.1, np.array([0.25, 0.3 + 1e-13]), np.array([0.55]))
    assert 0.25 in g and 0.55 in g
    assert np.sum(np.isclose(g, 0.3)) == 1
    assert np.all(np.diff(g) > 0) and g[0] == 0 and g[-1] == 1.0


def test_disturbance_enters():
    w = DisturbanceSignal.from_function(lambda s: 1.0, 1)
    tr = run_scalar(scalar(A=-1.0, E=1.0), 0.0, 2.0, 1e-3, phi=0.0, w=w)
    assert abs(tr.x[-1, 0] - (1 - np.exp(-2.0))) <= 1e-6


@pytest.fixture(scope="module")
def ref_traj(reference):
    return simulate_run(reference, np.array(K_REF), 3, horizon=5.0)


def test_modes_constant_within_steps(ref_traj):
    tr = ref_traj
    jumps = tr.t[1:][(np.diff(tr.r) != 0) | (np.diff(tr.robs) != 0)]
    assert np.all(np.isin(jumps, tr.t))
    # the step mode equals the mode at the start of the step
    np.testing.assert_array_equal(tr.step_r, tr.r[:-1])
    np.testing.assert_array_equal(tr.step_robs, tr.robs[:-1])


def test_outputs_consistent(reference, ref_traj):
    tr, m = ref_traj, reference.model
    a = 1234
    i = tr.r[a]
    np.testing.assert_allclose(tr.z[a], m.C[i] @ tr.x[a] + m.Psi[i] @ tr.w[a])
    np.testing.assert_allclose(tr.y[a], m.J[i] @ tr.x[a] + m.Phi[i] @ tr.w[a])
    np.testing.assert_allclose(tr.u[0], K_REF[tr.robs[0]] @ reference.perf.phi(-tr.tau[0]))


def test_deterministic(reference):
    a = simulate_run(reference, np.array(K_REF), 11, horizon=3.0)
    b = simulate_run(reference, np.array(K_REF), 11, horizon=3.0)
    assert a.to_csv() == b.to_csv()


def test_csv_header(ref_traj):
    text = ref_traj.to_csv(stride=100)
    assert text.splitlines()[0] == "t,x1,x2,u1,z1,z2,y1,y2,r,robs,tau,w1,w2"
    last = text.splitlines()[-1].split(",")
    assert float(last[0]) == pytest.approx(5.0)
    assert last[8] in ("1", "2")
