"""Position estimators and their supporting pieces.

Two pipelines extract the rotor angle from the injection ripple in the
measured currents:

* `ProposedEstimator` - delay minus weighted hold (a high-pass by
  construction) followed by a gradient LTV demodulator per axis.
* `ConventionalEstimator` - LTI high-pass, demodulation by sin(omega_h t +
  phi), LTI low-pass, then rescaling.

`BlockFormEstimator` re-expresses the proposed pipeline in the conventional
HPF/demod/LPF block layout (demod phase 3*pi/2, LPF replaced by the scaled
LTV flow); it exists to verify numerically that the two forms coincide.

Both pipelines produce the angle modulo pi; `track_branch` resolves the
branch by continuity with the previous estimate.  Magnetic-polarity
disambiguation is out of scope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .motor import MotorParams, virtual_output
from .signal_ops import (
    TWO_PI,
    DelayLine,
    GradientFlow,
    HighPass2,
    InjectionConfig,
    LowPass1,
    MovingAverage,
    probe_signal,
)


class DegenerateSignalError(ValueError):
    """Raised when the virtual-output vector carries no saliency information."""


def track_branch(raw: float, prev: float) -> float:
    """Shift raw (known modulo pi) by the multiple of pi nearest prev."""
    return raw + math.pi * round((prev - raw) / math.pi)


def wrap_mod_pi(err):
    """Wrap an angle difference into (-pi/2, pi/2] (mod-pi identification)."""
    return -((-np.asarray(err) + 0.5 * math.pi) % math.pi - 0.5 * math.pi)


def virtual_output_to_angle(y1: float, y2: float, params: MotorParams,
                            prev_theta: float, min_radius: float = 0.0) -> float:
    """Recover the unwrapped angle from a virtual-output estimate.

    raw = 0.5*atan2(y2, y1 - L0/(Ld Lq)) identifies the angle modulo pi; the
    returned value is the branch nearest prev_theta.
    """
    c = params.L0 / params.det_L
    dx = y1 - c
    if math.hypot(dx, y2) <= min_radius:
        raise DegenerateSignalError("virtual output too close to the circle center")
    # y_v - center = -(L1/(Ld Lq)) (cos2theta, sin2theta) and L1 < 0 for Ld < Lq
    sign = -1.0 if params.L1 > 0.0 else 1.0
    raw = 0.5 * math.atan2(sign * y2, sign * dx)
    return track_branch(raw, prev_theta)


def rmsd(t, theta_true, theta_hat, t1: float, t2: float) -> float:
    """Root-mean-square deviation of the angle estimate over [t1, t2].

    The per-sample error is wrapped modulo pi before squaring; the mean is a
    trapezoidal quadrature over the window.
    """
    t = np.asarray(t)
    if t2 <= t1:
        raise ValueError("need t2 > t1")
    if t1 < t[0] - 1e-12 or t2 > t[-1] + 1e-12:
        raise ValueError("window outside the trace")
    m = (t >= t1) & (t <= t2)
    e = wrap_mod_pi(np.asarray(theta_hat)[m] - np.asarray(theta_true)[m])
    return float(math.sqrt(np.trapezoid(e * e, t[m]) / (t[m][-1] - t[m][0])))


class ProposedEstimator:
    """Delay/hold regressor plus per-axis gradient flows (the new pipeline).

    The delay is exactly one probe period (d = epsilon) and the hold window is
    2d.  Per-axis adaptation gains may differ.  Compensation gains
    (ell1, ell2, ell3) rescale the raw virtual-output estimate before the
    angle recovery; (1, 0, 1) is the identity.
    """

    def __init__(self, params: MotorParams, cfg: InjectionConfig, Ts: float,
                 gamma_alpha: float = 1e4, gamma_beta: float = 1e4,
                 ell: tuple[float, float, float] = (1.0, 0.0, 1.0),
                 theta0: float = 0.0):
        if ell[0] == 0.0 or ell[2] == 0.0:
            raise ValueError("ell1 and ell3 must be nonzero")
        self.params = params
        self.cfg = cfg
        self.Ts = Ts
        self.ell = ell
        d = cfg.epsilon
        self._delay_a = DelayLine(d, Ts)
        self._delay_b = DelayLine(d, Ts)
        self._hold_a = MovingAverage(2.0 * d, Ts)
        self._hold_b = MovingAverage(2.0 * d, Ts)
        # seed the demodulators at the assumed initial angle so the loop
        # does not open on a transient pointing nowhere
        y10, y20 = virtual_output(params, theta0)
        self._grad_a = GradientFlow(gamma_alpha, cfg, x0=d * y10)
        self._grad_b = GradientFlow(gamma_beta, cfg, x0=d * y20)
        self.theta_hat = theta0
        self.yv1 = y10
        self.yv2 = y20
        self.Yf = (0.0, 0.0)
        self.low_confidence = True
        self._min_radius = 0.1 * abs(params.L1) / params.det_L

    def step(self, t: float, i_alpha: float, i_beta: float):
        """Advance one sample; return (theta_hat, yv1, yv2) or None until warm."""
        da = self._delay_a.step(i_alpha)
        db = self._delay_b.step(i_beta)
        za = self._hold_a.step(i_alpha)
        zb = self._hold_b.step(i_beta)
        if da is None or za is None:
            return None
        yfa = da - za
        yfb = db - zb
        self.Yf = (yfa, yfb)
        y1 = self._grad_a.step(t, yfa, self.Ts)
        y2 = self._grad_b.step(t, yfb, self.Ts)
        ell1, ell2, ell3 = self.ell
        y1 = ell1 * y1 + ell2
        y2 = ell3 * y2
        self.yv1 = y1
        self.yv2 = y2
        try:
            self.theta_hat = virtual_output_to_angle(
                y1, y2, self.params, self.theta_hat, self._min_radius)
            self.low_confidence = False
        except DegenerateSignalError:
            self.low_confidence = True  # hold the previous angle
        return self.theta_hat, y1, y2


@dataclass(frozen=True)
class LtiChainConfig:
    """Filter corners of the conventional chain.

    Defaults follow lambda_h = omega_h and lambda_ell = max(sqrt(omega_h *
    omega_star), 1); omega_star is the nominal (electrical-excitation) speed
    scale of the application.
    """

    lambda_h: float
    lambda_ell: float

    @classmethod
    def from_injection(cls, cfg: InjectionConfig, omega_star: float,
                       lambda_h: float | None = None,
                       lambda_ell: float | None = None) -> "LtiChainConfig":
        lh = cfg.omega_h if lambda_h is None else lambda_h
        ll = max(math.sqrt(cfg.omega_h * omega_star), 1.0) if lambda_ell is None \
            else lambda_ell
        return cls(lh, ll)

    def __post_init__(self):
        if self.lambda_h <= 0.0:
            raise ValueError("lambda_h must be positive")
        if self.lambda_ell < 1.0:
            raise ValueError("lambda_ell must be >= 1")


class ConventionalEstimator:
    """LTI high-pass / demodulate / low-pass chain (the textbook pipeline)."""

    def __init__(self, params: MotorParams, cfg: InjectionConfig, Ts: float,
                 chain: LtiChainConfig, theta0: float = 0.0):
        self.params = params
        self.cfg = cfg
        self.chain = chain
        self._hpf_a = HighPass2(chain.lambda_h, Ts)
        self._hpf_b = HighPass2(chain.lambda_h, Ts)
        self._scale = 2.0 * cfg.omega_h * params.det_L / cfg.V_h
        # low passes start at the output matching the assumed initial angle
        y10, y20 = virtual_output(params, theta0)
        self._lpf_a = LowPass1(chain.lambda_ell, Ts,
                               y0=y10 * params.det_L / self._scale)
        self._lpf_b = LowPass1(chain.lambda_ell, Ts,
                               y0=y20 * params.det_L / self._scale)
        self.theta_hat = theta0
        self.Y_alpha = y10 * params.det_L
        self.Y_beta = y20 * params.det_L

    def step(self, t: float, i_alpha: float, i_beta: float) -> float:
        """Advance one sample; returns the branch-tracked angle estimate."""
        yha = self._hpf_a.step(i_alpha)
        yhb = self._hpf_b.step(i_beta)
        demod = math.sin(self.cfg.omega_h * t + self.cfg.phi)
        Ya = self._scale * self._lpf_a.step(yha * demod)
        Yb = self._scale * self._lpf_b.step(yhb * demod)
        self.Y_alpha = Ya
        self.Y_beta = Yb
        raw = 0.5 * math.atan2(Yb, Ya - self.params.L0)
        self.theta_hat = track_branch(raw, self.theta_hat)
        return self.theta_hat

    @property
    def yv(self) -> tuple[float, float]:
        d = self.params.det_L
        return self.Y_alpha / d, self.Y_beta / d


class BlockFormEstimator:
    """Proposed pipeline in conventional block layout (for the equivalence check).

    High pass = delay minus hold, demodulation phase 3*pi/2, low pass =
    0.5*(V_h/2pi)^2 times the LTV flow dz/dt = -gamma*S^2*z + gamma*u.
    State advanced by the same 4th-order rule as the gradient flow.
    """

    def __init__(self, params: MotorParams, cfg: InjectionConfig, Ts: float,
                 gamma_alpha: float = 1e4, gamma_beta: float = 1e4,
                 theta0: float = 0.0):
        self.params = params
        self.cfg = cfg
        self.Ts = Ts
        self.gamma = (gamma_alpha, gamma_beta)
        d = cfg.epsilon
        self._delay_a = DelayLine(d, Ts)
        self._delay_b = DelayLine(d, Ts)
        self._hold_a = MovingAverage(2.0 * d, Ts)
        self._hold_b = MovingAverage(2.0 * d, Ts)
        # same seeding convention as the operator form: z = (2*pi/V_h) * x
        y10, y20 = virtual_output(params, theta0)
        self.z = [TWO_PI * d * y10 / cfg.V_h, TWO_PI * d * y20 / cfg.V_h]
        self._yf_prev = [None, None]
        self._lpf_gain = 0.5 * (cfg.V_h / TWO_PI) ** 2
        self.theta_hat = theta0
        self.yv1 = y10
        self.yv2 = y20

    def _advance(self, axis: int, t: float, yf: float) -> float:
        # regressor input interpolated between samples, same as GradientFlow
        gamma = self.gamma[axis]
        cfg = self.cfg
        Ts = self.Ts
        phi = 1.5 * math.pi
        yf0 = yf if self._yf_prev[axis] is None else self._yf_prev[axis]
        self._yf_prev[axis] = yf
        yfm = 0.5 * (yf0 + yf)

        def rate(tau, z, y):
            S = probe_signal(cfg, tau)
            u = y * math.sin(cfg.omega_h * tau + phi)
            return gamma * u - gamma * S * S * z

        t0 = t - Ts
        z = self.z[axis]
        k1 = rate(t0, z, yf0)
        k2 = rate(t0 + 0.5 * Ts, z + 0.5 * Ts * k1, yfm)
        k3 = rate(t0 + 0.5 * Ts, z + 0.5 * Ts * k2, yfm)
        k4 = rate(t, z + Ts * k3, yf)
        z = z + Ts / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        self.z[axis] = z
        return self._lpf_gain * z

    def step(self, t: float, i_alpha: float, i_beta: float):
        da = self._delay_a.step(i_alpha)
        db = self._delay_b.step(i_beta)
        za = self._hold_a.step(i_alpha)
        zb = self._hold_b.step(i_beta)
        if da is None or za is None:
            return None
        ya = self._advance(0, t, da - za)
        yb = self._advance(1, t, db - zb)
        scale = 2.0 * self.cfg.omega_h * self.params.det_L / self.cfg.V_h
        Ya = scale * ya
        Yb = scale * yb
        d = self.params.det_L
        self.yv1 = Ya / d
        self.yv2 = Yb / d
        raw = 0.5 * math.atan2(Yb, Ya - self.params.L0)
        self.theta_hat = track_branch(raw, self.theta_hat)
        return self.theta_hat, self.yv1, self.yv2


class Pll:
    """Type-2 tracking loop turning the angle estimate into a speed estimate."""

    def __init__(self, K_p: float, K_i: float, n_p: int, theta0: float = 0.0):
        if K_p <= 0.0 or K_i <= 0.0:
            raise ValueError("PLL gains must be positive")
        self.K_p = K_p
        self.K_i = K_i
        self.n_p = n_p
        self.eta1 = theta0
        self.eta2 = 0.0
        self.omega_hat_p = 0.0
        self.omega_hat = 0.0

    def step(self, theta_hat: float, Ts: float) -> float:
        e = theta_hat - self.eta1
        self.omega_hat_p = self.K_p * e + self.K_i * self.eta2
        self.eta1 += Ts * self.omega_hat_p
        self.eta2 += Ts * e
        self.omega_hat = self.omega_hat_p / self.n_p
        return self.omega_hat


def fit_compensation(t, yv1, yv2, params: MotorParams, omega_e: float,
                     t_start: float = 0.0) -> tuple[float, float, float]:
    """Fit (ell1, ell2, ell3) from a constant-speed virtual-output trace.

    Matches the mean and amplitude of the measured components to the exact
    virtual output: ell1/ell3 correct the amplitudes, ell2 the mean of the
    first component (the second is zero-mean).  Needs at least two electrical
    revolutions past t_start so the extremes are observed.
    """
    t = np.asarray(t)
    m = t >= t_start
    span = (t[m][-1] - t[m][0]) * abs(omega_e)
    if span < 2.0 * TWO_PI:
        raise ValueError("trace shorter than two electrical revolutions")
    y1 = np.asarray(yv1)[m]
    y2 = np.asarray(yv2)[m]
    amp_target = abs(params.L1) / params.det_L
    mean_target = params.L0 / params.det_L
    a1 = 0.5 * (y1.max() - y1.min())
    a2 = 0.5 * (y2.max() - y2.min())
    if a1 <= 0.0 or a2 <= 0.0:
        raise ValueError("flat virtual-output trace")
    ell1 = amp_target / a1
    ell3 = amp_target / a2
    ell2 = mean_target - ell1 * 0.5 * (y1.max() + y1.min())
    return ell1, ell2, ell3


def ltp_lowpass_check(omega_h: float, Ts: float | None = None,
                      settle: float = 30.0) -> dict:
    """Characterize dy/dt = -cos^2(omega_h t) y + u as a low-pass filter.

    Returns the step-settled DC gain (nominal 2, the averaged pole sits at
    -1/2), the gain at the carrier frequency, their ratio in dB, and the
    maximum deviation of the periodic scaling P(t) = exp(-sin(2 omega_h t) /
    (4 omega_h)) from unity.
    """
    if omega_h < 100.0:
        raise ValueError("omega_h must be >= 100 rad/s")
    if Ts is None:
        Ts = TWO_PI / omega_h / 50.0

    def run(u_fn, T):
        n = int(round(T / Ts))
        y = 0.0
        out = np.empty(n)
        for k in range(n):
            t = k * Ts
            def f(tau, yy):
                c = math.cos(omega_h * tau)
                return -c * c * yy + u_fn(tau)
            k1 = f(t, y)
            k2 = f(t + 0.5 * Ts, y + 0.5 * Ts * k1)
            k3 = f(t + 0.5 * Ts, y + 0.5 * Ts * k2)
            k4 = f(t + Ts, y + Ts * k3)
            y += Ts / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            out[k] = y
        return out

    step_resp = run(lambda tau: 1.0, settle)
    dc_gain = float(np.mean(step_resp[-int(1.0 / Ts):]))
    carrier = run(lambda tau: math.sin(omega_h * tau), settle)
    tail = carrier[-int(round(TWO_PI / omega_h / Ts)) * 4:]
    carrier_gain = float(0.5 * (tail.max() - tail.min()))
    pbar_dev = math.exp(1.0 / (4.0 * omega_h)) - 1.0
    return {
        "dc_gain": dc_gain,
        "carrier_gain": carrier_gain,
        "ratio_db": 20.0 * math.log10(dc_gain / carrier_gain),
        "pbar_max_dev": pbar_dev,
    }


def synthesize_injection_current(params: MotorParams, cfg: InjectionConfig,
                                 theta_fn, t: np.ndarray,
                                 i_bar=(0.0, 0.0), phase_err: float = 0.0,
                                 ripple_scale: float = 1.0) -> np.ndarray:
    """Currents built directly from the averaged decomposition (no ODE).

    i(t) = i_bar + epsilon * y_v(theta(t)) * S_dist(t) where S_dist may carry
    an artificial phase shift or amplitude scale, mimicking the losses seen on
    hardware.  Returns an (n, 2) array.
    """
    amp = -ripple_scale * cfg.V_h / TWO_PI
    out = np.empty((len(t), 2))
    eps = cfg.epsilon
    for k, tk in enumerate(t):
        y1, y2 = virtual_output(params, theta_fn(tk))
        S = amp * math.cos(cfg.omega_h * tk + phase_err)
        out[k, 0] = i_bar[0] + eps * y1 * S
        out[k, 1] = i_bar[1] + eps * y2 * S
    return out
