"""Estimator tests: angle recovery, branch tracking, both pipelines on
synthetic ripple currents, PLL, compensation fitting."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hfsense.estimators import (
    ConventionalEstimator,
    DegenerateSignalError,
    BlockFormEstimator,
    LtiChainConfig,
    Pll,
    ProposedEstimator,
    fit_compensation,
    ltp_lowpass_check,
    rmsd,
    synthesize_injection_current,
    track_branch,
    virtual_output_to_angle,
    wrap_mod_pi,
)
from hfsense.motor import virtual_output

angles = st.floats(-30.0, 30.0, allow_nan=False)


@given(raw=st.floats(-math.pi / 2, math.pi / 2), prev=angles)
def test_track_branch_properties(raw, prev):
    out = track_branch(raw, prev)
    # same angle modulo pi, and on the branch nearest prev
    assert math.isclose((out - raw) / math.pi, round((out - raw) / math.pi),
                        abs_tol=1e-9)
    assert abs(out - prev) <= 0.5 * math.pi + 1e-9


@given(e=angles)
def test_wrap_mod_pi_range(e):
    w = float(wrap_mod_pi(e))
    assert -0.5 * math.pi < w <= 0.5 * math.pi + 1e-12
    k = (w - e) / math.pi  # the wrap only ever shifts by whole multiples of pi
    assert math.isclose(k, round(k), abs_tol=1e-9)


def test_angle_round_trip(sim_motor):
    """virtual_output followed by the angle recovery is the identity mod pi."""
    worst = 0.0
    for theta in np.linspace(-math.pi, math.pi, 1000):
        y1, y2 = virtual_output(sim_motor, theta)
        rec = virtual_output_to_angle(y1, y2, sim_motor, prev_theta=theta)
        err = abs(float(wrap_mod_pi(rec - theta)))
        worst = max(worst, err)
    assert worst <= 1e-12


def test_angle_recovery_degenerate_center(sim_motor):
    c = sim_motor.L0 / sim_motor.det_L
    with pytest.raises(DegenerateSignalError):
        virtual_output_to_angle(c, 0.0, sim_motor, 0.0, min_radius=1.0)


def test_rmsd_basics():
    t = np.linspace(0.0, 1.0, 101)
    th = 3.0 * t
    assert rmsd(t, th, th, 0.2, 0.8) == 0.0
    # a constant pi offset is invisible modulo pi
    assert rmsd(t, th, th + math.pi, 0.2, 0.8) == pytest.approx(0.0, abs=1e-12)
    assert rmsd(t, th, th + 0.05, 0.2, 0.8) == pytest.approx(0.05, rel=1e-9)
    with pytest.raises(ValueError):
        rmsd(t, th, th, 0.8, 0.2)
    with pytest.raises(ValueError):
        rmsd(t, th, th, 0.2, 2.0)


def _run_on_synthetic(est, sim_motor, inj, Ts, theta_fn, duration):
    n = int(round(duration / Ts))
    t = np.arange(n + 1) * Ts
    cur = synthesize_injection_current(sim_motor, inj, theta_fn, t)
    for k in range(n + 1):
        est.step(t[k], cur[k, 0], cur[k, 1])
    return t


def test_proposed_estimator_tracks_synthetic(sim_motor, inj, Ts):
    omega_e = 3.0
    est = ProposedEstimator(sim_motor, inj, Ts, theta0=0.4)
    t = _run_on_synthetic(est, sim_motor, inj, Ts,
                          lambda tk: 0.4 + omega_e * tk, 0.5)
    final_err = float(wrap_mod_pi(est.theta_hat - (0.4 + omega_e * t[-1])))
    # steady lag ~ omega_e/(gamma*<S^2>) ~ 0.024 rad at these gains
    assert abs(final_err) < 0.05
    assert not est.low_confidence


def test_conventional_estimator_tracks_synthetic(sim_motor, inj, Ts):
    omega_e = 3.0
    chain = LtiChainConfig.from_injection(inj, omega_star=0.5)
    est = ConventionalEstimator(sim_motor, inj, Ts, chain, theta0=0.4)
    t = _run_on_synthetic(est, sim_motor, inj, Ts,
                          lambda tk: 0.4 + omega_e * tk, 0.5)
    final_err = float(wrap_mod_pi(est.theta_hat - (0.4 + omega_e * t[-1])))
    # steady lag ~ atan(2*omega_e/lambda_ell)/2 ~ 0.053 rad
    assert abs(final_err) < 0.12


def test_estimator_seeding(sim_motor, inj, Ts):
    est = ProposedEstimator(sim_motor, inj, Ts, theta0=0.9)
    assert est.theta_hat == 0.9
    assert (est.yv1, est.yv2) == pytest.approx(virtual_output(sim_motor, 0.9))
    conv = ConventionalEstimator(
        sim_motor, inj, Ts, LtiChainConfig.from_injection(inj, 0.5), theta0=0.9)
    assert conv.yv == pytest.approx(virtual_output(sim_motor, 0.9))


def test_proposed_warmup_returns_none(sim_motor, inj, Ts):
    est = ProposedEstimator(sim_motor, inj, Ts)
    n_warm = round(2.0 * inj.epsilon / Ts)
    for k in range(n_warm):
        assert est.step(k * Ts, 0.0, 0.0) is None
    assert est.step(n_warm * Ts, 0.0, 0.0) is not None


def test_ell_validation(sim_motor, inj, Ts):
    with pytest.raises(ValueError):
        ProposedEstimator(sim_motor, inj, Ts, ell=(0.0, 0.0, 1.0))


def test_block_form_matches_operator_form(sim_motor, inj, Ts):
    """Short cross-check of the two implementations of the same pipeline
    (the acceptance suite runs the long version)."""
    omega_e = 3.0
    a = ProposedEstimator(sim_motor, inj, Ts, theta0=0.2)
    b = BlockFormEstimator(sim_motor, inj, Ts, theta0=0.2)
    n = int(round(0.2 / Ts))
    t = np.arange(n + 1) * Ts
    cur = synthesize_injection_current(sim_motor, inj,
                                       lambda tk: 0.2 + omega_e * tk, t,
                                       i_bar=(0.3, -0.1))
    scale = abs(sim_motor.L1) / sim_motor.det_L
    for k in range(n + 1):
        ra = a.step(t[k], cur[k, 0], cur[k, 1])
        rb = b.step(t[k], cur[k, 0], cur[k, 1])
        if ra is None:
            continue
        assert abs(a.yv1 - b.yv1) / scale < 1e-10
        assert abs(a.yv2 - b.yv2) / scale < 1e-10


def test_chain_config_defaults(inj):
    chain = LtiChainConfig.from_injection(inj, omega_star=0.5)
    assert chain.lambda_h == pytest.approx(inj.omega_h)
    assert chain.lambda_ell == pytest.approx(math.sqrt(inj.omega_h * 0.5))
    # the corner never drops below 1 rad/s
    assert LtiChainConfig.from_injection(inj, 0.0).lambda_ell == 1.0
    with pytest.raises(ValueError):
        LtiChainConfig(lambda_h=-1.0, lambda_ell=10.0)
    with pytest.raises(ValueError):
        LtiChainConfig(lambda_h=10.0, lambda_ell=0.5)


def test_pll_tracks_ramp():
    pll = Pll(5.0, 0.01, n_p=6)
    Ts = 1e-4
    omega_e = 3.0
    for k in range(1, 200001):
        pll.step(omega_e * k * Ts, Ts)
    # the proportional path alone locks the rate quickly
    assert pll.omega_hat == pytest.approx(omega_e / 6.0, rel=0.02)
    with pytest.raises(ValueError):
        Pll(0.0, 0.01, 6)


def _calibration_trace(sim_motor, inj, omega_e, duration, **kw):
    Ts = inj.epsilon / 50.0
    n = int(round(duration / Ts))
    t = np.arange(n + 1) * Ts
    cur = synthesize_injection_current(sim_motor, inj,
                                       lambda tk: omega_e * tk, t, **kw)
    est = ProposedEstimator(sim_motor, inj, Ts)
    y1 = np.empty(n + 1)
    y2 = np.empty(n + 1)
    th = np.empty(n + 1)
    for k in range(n + 1):
        est.step(t[k], cur[k, 0], cur[k, 1])
        y1[k], y2[k] = est.yv1, est.yv2
        th[k] = est.theta_hat
    return t, y1, y2, th


def test_fit_compensation_identity(sim_motor, inj):
    omega_e = 12.0
    t, y1, y2, _ = _calibration_trace(sim_motor, inj, omega_e, 1.5)
    ell = fit_compensation(t, y1, y2, sim_motor, omega_e, t_start=0.3)
    assert ell[0] == pytest.approx(1.0, abs=0.02)
    assert ell[1] == pytest.approx(0.0, abs=0.02 * sim_motor.L0 / sim_motor.det_L)
    assert ell[2] == pytest.approx(1.0, abs=0.02)


def test_fit_compensation_amplitude_loss(sim_motor, inj):
    omega_e = 12.0
    t, y1, y2, _ = _calibration_trace(sim_motor, inj, omega_e, 1.5,
                                      ripple_scale=0.8)
    ell = fit_compensation(t, y1, y2, sim_motor, omega_e, t_start=0.3)
    assert ell[0] == pytest.approx(1.25, rel=0.03)
    assert ell[2] == pytest.approx(1.25, rel=0.03)


def test_fit_compensation_needs_two_revolutions(sim_motor, inj):
    t = np.linspace(0.0, 0.1, 100)
    with pytest.raises(ValueError):
        fit_compensation(t, np.sin(t), np.cos(t), sim_motor, omega_e=12.0)


def test_ltp_lowpass_characterization():
    res = ltp_lowpass_check(2000.0, settle=10.0)
    assert res["dc_gain"] == pytest.approx(2.0, rel=0.01)
    assert res["ratio_db"] > 60.0           # strong carrier attenuation
    assert res["pbar_max_dev"] < 1e-3       # periodic scaling ~ identity
    with pytest.raises(ValueError):
        ltp_lowpass_check(10.0)
