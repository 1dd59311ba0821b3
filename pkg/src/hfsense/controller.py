"""Sensorless field-oriented controller: frame rotations, PI loops with
decoupling, current-measurement low passes, and probe superposition.

The controller works in the estimated rotor frame; with a perfect angle this
is classical FOC.  The decoupling inductance is the average L0 by default (in
a misaligned frame the exact Ld/Lq split is not well defined anyway).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .motor import MotorParams
from .signal_ops import InjectionConfig, LowPass1, injection_voltage


def frame_rotate(theta: float, x1: float, x2: float,
                 to_dq: bool = True) -> tuple[float, float]:
    """Planar rotation between stationary and (estimated) rotor frames.

    to_dq applies exp(-J*theta); the inverse direction applies exp(+J*theta).
    """
    c = math.cos(theta)
    s = math.sin(theta)
    if to_dq:
        return c * x1 + s * x2, -s * x1 + c * x2
    return c * x1 - s * x2, s * x1 + c * x2


class Pi:
    """Discrete PI with backward-Euler integral and clamping anti-windup."""

    def __init__(self, K_p: float, K_i: float, limit: float):
        self.K_p = K_p
        self.K_i = K_i
        self.limit = limit
        self.integ = 0.0

    def step(self, err: float, Ts: float) -> float:
        self.integ += self.K_i * err * Ts
        if self.integ > self.limit:
            self.integ = self.limit
        elif self.integ < -self.limit:
            self.integ = -self.limit
        out = self.K_p * err + self.integ
        if out > self.limit:
            return self.limit
        if out < -self.limit:
            return -self.limit
        return out


@dataclass(frozen=True)
class ControllerConfig:
    speed_kp: float = 1.0
    speed_ki: float = 5.0
    current_kp: float = 5.0
    current_ki: float = 5.0
    omega_ref: float = 0.5          # mechanical [rad/s]
    i_d_ref: float = 0.0
    i_q_limit: float = 20.0
    v_limit: float = 400.0          # below the 521 V bus
    meas_lpf_cutoff: float | None = None  # default 100 rad/s
    L_decouple: float | None = None       # default L0

    def __post_init__(self):
        for g in (self.speed_kp, self.speed_ki, self.current_kp, self.current_ki):
            if g < 0.0:
                raise ValueError("gains must be non-negative")


class SensorlessController:
    """One control step per sample: rotate, filter, regulate, rotate back, inject."""

    def __init__(self, params: MotorParams, cfg: ControllerConfig,
                 injection: InjectionConfig, Ts: float,
                 injection_enabled: bool = True):
        self.params = params
        self.cfg = cfg
        self.injection = injection
        self.injection_enabled = injection_enabled
        self.Ts = Ts
        # the corner must sit far below omega_h: probe ripple surviving the
        # feedback path re-enters the voltage as a parasitic injection that
        # distorts the demodulated saliency locus
        cutoff = cfg.meas_lpf_cutoff
        if cutoff is None:
            cutoff = 100.0
        self._lpf_d = LowPass1(cutoff, Ts)
        self._lpf_q = LowPass1(cutoff, Ts)
        self._speed_pi = Pi(cfg.speed_kp, cfg.speed_ki, cfg.i_q_limit)
        self._pi_d = Pi(cfg.current_kp, cfg.current_ki, cfg.v_limit)
        self._pi_q = Pi(cfg.current_kp, cfg.current_ki, cfg.v_limit)
        self._L = cfg.L_decouple if cfg.L_decouple is not None else params.L0
        self._held = (0.0, 0.0)  # last valid control voltage (alpha-beta)

    def control_voltage(self, i_alpha: float, i_beta: float,
                        theta_hat: float, omega_hat: float) -> tuple[float, float]:
        """Low-frequency control voltage in the stationary frame (no probe)."""
        cfg = self.cfg
        Ts = self.Ts
        i_d, i_q = frame_rotate(theta_hat, i_alpha, i_beta, to_dq=True)
        i_d_f = self._lpf_d.step(i_d)
        i_q_f = self._lpf_q.step(i_q)
        i_q_ref = self._speed_pi.step(cfg.omega_ref - omega_hat, Ts)
        np_w = self.params.n_p * omega_hat
        v_d = self._pi_d.step(cfg.i_d_ref - i_d_f, Ts) - self._L * np_w * i_q_f
        v_q = self._pi_q.step(i_q_ref - i_q_f, Ts) + self._L * np_w * i_d_f \
            + np_w * self.params.Phi
        lim = cfg.v_limit
        v_d = min(max(v_d, -lim), lim)
        v_q = min(max(v_q, -lim), lim)
        va, vb = frame_rotate(theta_hat, v_d, v_q, to_dq=False)
        self._held = (va, vb)
        return va, vb

    def low_frequency_voltage(self, i_alpha: float, i_beta: float,
                              theta_hat: float | None,
                              omega_hat: float | None) -> tuple[float, float]:
        """As `control_voltage`, but holds the last output while estimates are invalid."""
        if theta_hat is None or omega_hat is None:
            return self._held
        return self.control_voltage(i_alpha, i_beta, theta_hat, omega_hat)

    def step(self, t: float, i_alpha: float, i_beta: float,
             theta_hat: float | None, omega_hat: float | None) -> tuple[float, float]:
        """Full output incl. probe; holds the last voltage while estimates are invalid."""
        va, vb = self.low_frequency_voltage(i_alpha, i_beta, theta_hat, omega_hat)
        if self.injection_enabled:
            ja, jb = injection_voltage(self.injection, t)
            return va + ja, vb + jb
        return va, vb
