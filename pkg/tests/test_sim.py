"""Simulation tests: integrator accuracy, profiles, traces, determinism."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hfsense.estimators import rmsd
from hfsense.motor import SIM_MOTOR
from hfsense.signal_ops import InjectionConfig
from hfsense.sim import (
    DriveProfile,
    LoadProfile,
    ScenarioConfig,
    SimulationDiverged,
    Trace,
    averaging_residual,
    rk4_step,
    run,
    run_closed_loop,
    run_driven_speed,
)


def _cfg(**kw):
    base = dict(motor=SIM_MOTOR, injection=InjectionConfig(V_h=1.0, epsilon=1e-3),
                duration=0.2, decimation=5)
    base.update(kw)
    return ScenarioConfig(**base)


def test_rk4_order_on_exponential():
    # one step of y' = -y from 1: error vs exp(-Ts) scales like Ts^5 per step
    for Ts, tol in ((1e-2, 1e-11), (1e-3, 1e-15)):
        y = rk4_step(lambda t, y: -y, np.array([1.0]), 0.0, Ts)
        assert abs(y[0] - math.exp(-Ts)) < tol
    with pytest.raises(ValueError):
        rk4_step(lambda t, y: -y, np.array([1.0]), 0.0, 0.0)


def test_rk4_rejects_non_finite():
    with pytest.raises(SimulationDiverged):
        rk4_step(lambda t, y: y * math.inf, np.array([1.0]), 0.0, 1e-3)


def test_load_profiles():
    assert LoadProfile("constant", value=2.0).torque(5.0) == 2.0
    lp = LoadProfile("piecewise", times=(1.0, 2.0), values=(0.0, 1.0, 3.0))
    assert [lp.torque(t) for t in (0.5, 1.5, 2.5)] == [0.0, 1.0, 3.0]
    s = LoadProfile("sinusoidal", value=1.0, amplitude=0.5, frequency=2.0)
    assert s.torque(0.125) == pytest.approx(1.5)
    with pytest.raises(ValueError):
        LoadProfile("ramp")
    with pytest.raises(ValueError):
        LoadProfile("piecewise", times=(1.0,), values=(0.0,))


@given(t=st.floats(0.0, 12.0))
@settings(max_examples=50)
def test_drive_reversal_angle_is_exact_integral(t):
    d = DriveProfile("reversal", omega=2.0, omega_end=-2.0,
                     t_ramp_start=4.0, t_ramp_end=5.0)
    # independent quadrature of the speed profile
    # put the ramp breakpoints on the grid so the trapezoid rule is exact
    grid = np.unique(np.concatenate([np.linspace(0.0, t, 4001),
                                     [x for x in (4.0, 5.0) if x <= t]]))
    ref = np.trapezoid([d.omega_at(g) for g in grid], grid)
    assert d.angle_integral(t) == pytest.approx(ref, abs=1e-9)


def test_drive_validation():
    with pytest.raises(ValueError):
        DriveProfile("spline")
    with pytest.raises(ValueError):
        DriveProfile("reversal", t_ramp_start=2.0, t_ramp_end=1.0)


def test_scenario_validation():
    with pytest.raises(ValueError):
        _cfg(estimator="kalman")
    with pytest.raises(ValueError):
        _cfg(mode="hil")
    with pytest.raises(ValueError):
        _cfg(mode="driven")  # no drive profile
    with pytest.raises(ValueError):
        _cfg(steps_per_period=1)
    with pytest.raises(ValueError):
        _cfg(estimator="none")  # closed loop without sensor
    with pytest.raises(ValueError):
        _cfg(duration=1e-3)  # shorter than the operator warm-up


def test_scenario_derived_quantities():
    cfg = _cfg(steps_per_period=50)
    assert cfg.Ts == pytest.approx(2e-5)
    assert cfg.warmup == pytest.approx(2e-3)
    assert cfg.n_steps == 10000


def test_trace_csv_round_trip(tmp_path):
    cfg = _cfg(estimator="both", duration=0.05)
    tr = run(cfg)
    path = tmp_path / "trace.csv"
    tr.to_csv(path)
    back = Trace.from_csv(path)
    assert back.columns == tr.columns
    for c in tr.columns:
        # %.17g formatting round-trips doubles exactly
        assert np.array_equal(back.data[c], tr.data[c]), c


def test_trace_requires_all_columns():
    with pytest.raises(ValueError):
        Trace({"t": np.zeros(3)})


def test_closed_loop_runs_and_tracks(sim_motor):
    cfg = _cfg(estimator="both", duration=1.0,
               load=LoadProfile("constant", value=0.1))
    tr = run_closed_loop(cfg)
    assert np.all(np.isfinite(tr.i_alpha))
    # the loop pulls the speed toward the 0.5 rad/s reference
    assert tr.omega[-1] > 0.2
    # estimates stay on the true branch
    err = rmsd(tr.t, tr.theta, tr.prop_theta_hat, 0.5, 1.0)
    assert err < 0.2


def test_sensor_mode_isolates_estimator():
    cfg = _cfg(estimator="none", sensor_mode=True, duration=0.05)
    tr = run(cfg)
    assert np.all(tr.prop_valid == 0.0)
    assert rmsd(tr.t, tr.theta, tr.theta, 0.01, 0.05) == 0.0


def test_driven_speed_follows_profile():
    cfg = _cfg(mode="driven", estimator="proposed", duration=0.3,
               drive=DriveProfile("constant", omega=2.0), theta0=0.7)
    tr = run_driven_speed(cfg)
    expect = 0.7 + SIM_MOTOR.n_p * 2.0 * tr.t
    assert np.allclose(tr.theta, expect, atol=1e-12)
    assert np.all(tr.omega == 2.0)


def test_determinism_short():
    cfg = _cfg(estimator="both", duration=0.1, noise_std=1e-3, seed=42)
    a = run(cfg)
    b = run(cfg)
    for c in a.columns:
        assert np.array_equal(a.data[c], b.data[c]), c


def test_noise_is_seeded():
    a = run(_cfg(duration=0.05, noise_std=1e-3, seed=1))
    b = run(_cfg(duration=0.05, noise_std=1e-3, seed=2))
    assert not np.array_equal(a.i_alpha, b.i_alpha) or \
        not np.array_equal(a.prop_theta_hat, b.prop_theta_hat)


def test_divergence_detection():
    with pytest.raises(SimulationDiverged):
        run(_cfg(duration=0.1, divergence_limit=1e-6))


def test_averaging_residual_requires_sensor_mode():
    with pytest.raises(ValueError):
        averaging_residual(_cfg(duration=0.05), 0.01, 0.05)


def test_averaging_residual_is_small():
    cfg = _cfg(estimator="none", sensor_mode=True, duration=0.3)
    t, r, norm = averaging_residual(cfg, 0.1, 0.3)
    # the remainder is O(eps^2); the probe ripple itself is O(eps)
    ripple = cfg.injection.epsilon * SIM_MOTOR.L0 / SIM_MOTOR.det_L \
        * cfg.injection.V_h / (2.0 * math.pi)
    assert norm < 0.1 * ripple
    assert r.shape == (len(t), 2)
