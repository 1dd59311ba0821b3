"""Discrete-time signal operators: probe, delay, weighted zero-order hold,
gradient LTV flow, and the LTI HPF/LPF pair, plus frequency-response utilities.

All operators run at a fixed sample period Ts.  Delay and hold windows must be
exact integer multiples of Ts (the constructor rejects misaligned values);
sample alignment keeps the delay exact, which the equivalence checks rely on.
Operators that have not yet absorbed a full window return None (not yet valid).
"""

from __future__ import annotations

import cmath
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class InjectionConfig:
    """Probe signal description: amplitude V_h, frequency omega_h = 2*pi/epsilon.

    `phi` is the demodulation phase of the conventional chain, `phi_p` the
    phase-loss compensation used inside the probe reference.
    """

    V_h: float = 1.0
    epsilon: float = 1e-3
    phi: float = 0.0
    phi_p: float = 0.0

    def __post_init__(self):
        if self.V_h <= 0.0:
            raise ValueError("V_h must be positive")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if not (0.0 <= self.phi < TWO_PI and 0.0 <= self.phi_p < TWO_PI):
            raise ValueError("phases must lie in [0, 2*pi)")

    @property
    def omega_h(self) -> float:
        return TWO_PI / self.epsilon


def probe_signal(cfg: InjectionConfig, t: float) -> float:
    """Demodulation reference S(t) = -(V_h/2pi) * cos(omega_h t + phi_p)."""
    return -(cfg.V_h / TWO_PI) * math.cos(cfg.omega_h * t + cfg.phi_p)


def injection_voltage(cfg: InjectionConfig, t: float) -> tuple[float, float]:
    """Probe voltage added on the alpha axis: (V_h sin(omega_h t), 0)."""
    return cfg.V_h * math.sin(cfg.omega_h * t), 0.0


def _steps_for(window: float, Ts: float, what: str) -> int:
    n = round(window / Ts)
    if n < 1 or abs(n * Ts - window) > 1e-9 * window:
        raise ValueError(f"{what}={window} is not an integer multiple of Ts={Ts}")
    return n


class DelayLine:
    """Pure transport delay by an integer number of samples."""

    def __init__(self, d: float, Ts: float):
        self.d = d
        self.Ts = Ts
        self.n = _steps_for(d, Ts, "delay")
        self._buf = deque(maxlen=self.n)

    @property
    def warm(self) -> bool:
        return len(self._buf) == self.n

    def step(self, u: float):
        """Absorb one sample; once warm, return the input from d seconds ago."""
        out = self._buf[0] if self.warm else None
        self._buf.append(u)
        return out


class MovingAverage:
    """Weighted zero-order hold: trailing mean over a window w.

    Output is (chi(t) - chi(t-w))/w with chi the trapezoidal integral of the
    input.  The running sum is kept over per-step increments (difference form)
    so the accumulator cannot grow on long runs; a periodic rebuild bounds
    floating-point drift.
    """

    _REBASE_EVERY = 1 << 16

    def __init__(self, w: float, Ts: float):
        self.w = w
        self.Ts = Ts
        self.n = _steps_for(w, Ts, "window")
        self._inc = deque(maxlen=self.n)
        self._sum = 0.0
        self._prev = None
        self._count = 0

    @property
    def warm(self) -> bool:
        return len(self._inc) == self.n

    def step(self, u: float):
        if self._prev is None:
            self._prev = u
            return None
        inc = 0.5 * (self._prev + u)  # trapezoid, Ts factored out
        self._prev = u
        if self.warm:
            self._sum -= self._inc[0]
        self._inc.append(inc)
        self._sum += inc
        self._count += 1
        if self._count % self._REBASE_EVERY == 0:
            self._sum = math.fsum(self._inc)
        if not self.warm:
            return None
        return self._sum / self.n


class GradientFlow:
    """Scalar LTV demodulator: dx/dt = -gamma*S^2(t)*x + gamma*S(t)*u, out x/eps.

    Advanced by one explicit 4th-order step per sample with u interpolated
    linearly between the previous and current sample (holding it would bias
    the demodulation by half a sample of carrier phase) and S evaluated at
    the substep times.  Under persistent excitation of S the state contracts
    exponentially toward the regressor coefficient.
    """

    def __init__(self, gamma: float, cfg: InjectionConfig, x0: float = 0.0):
        if gamma <= 0.0:
            raise ValueError("gamma must be positive")
        self.gamma = gamma
        self.cfg = cfg
        self.x = x0
        self._u_prev = None

    def _rate(self, tau: float, x: float, u: float) -> float:
        S = probe_signal(self.cfg, tau)
        return self.gamma * S * (u - S * x)

    def step(self, t: float, u: float, Ts: float) -> float:
        """Advance over [t - Ts, t] toward input u; return x/epsilon."""
        u0 = u if self._u_prev is None else self._u_prev
        self._u_prev = u
        um = 0.5 * (u0 + u)
        t0 = t - Ts
        x = self.x
        k1 = self._rate(t0, x, u0)
        k2 = self._rate(t0 + 0.5 * Ts, x + 0.5 * Ts * k1, um)
        k3 = self._rate(t0 + 0.5 * Ts, x + 0.5 * Ts * k2, um)
        k4 = self._rate(t, x + Ts * k3, u)
        self.x = x + Ts / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        return self.x / self.cfg.epsilon


class LowPass1:
    """First-order low pass lam/(lam + s), bilinear discretization."""

    def __init__(self, lam: float, Ts: float, y0: float = 0.0):
        if lam <= 0.0:
            raise ValueError("corner must be positive")
        self.lam = lam
        a = lam * Ts
        self._b = a / (2.0 + a)
        self._a1 = (2.0 - a) / (2.0 + a)
        self._y = y0
        self._u = y0

    def step(self, u: float) -> float:
        self._y = self._a1 * self._y + self._b * (u + self._u)
        self._u = u
        return self._y


class HighPass2:
    """Second-order high pass 2s^2/(lam + s)^2 as a biquad.

    Bilinear with the corner prewarped, so the discrete gain and phase at
    omega = lam match the continuous filter exactly (unit gain, +90 deg at the
    corner is what the demodulation step depends on).  The double zero at
    z = 1 gives exact DC rejection regardless of warping.
    """

    def __init__(self, lam: float, Ts: float):
        if lam <= 0.0:
            raise ValueError("corner must be positive")
        self.lam = lam
        K = lam / math.tan(0.5 * lam * Ts)
        a0 = (lam + K) ** 2
        self.b0 = 2.0 * K * K / a0
        self.b1 = -2.0 * self.b0
        self.b2 = self.b0
        self.a1 = 2.0 * (lam - K) * (lam + K) / a0
        self.a2 = (lam - K) ** 2 / a0
        self._z1 = 0.0
        self._z2 = 0.0

    def step(self, u: float) -> float:
        # direct form II transposed
        y = self.b0 * u + self._z1
        self._z1 = self.b1 * u - self.a1 * y + self._z2
        self._z2 = self.b2 * u - self.a2 * y
        return y


def gd_frequency_response(d: float, omega) -> complex | np.ndarray:
    """G_d(j*omega) for the delay-minus-hold high pass.

    G_d(s) = exp(-d s) + (exp(-2 d s) - 1)/(2 d s); the removable singularity
    at omega = 0 is filled with the analytic limit 0.
    """
    if d <= 0.0:
        raise ValueError("d must be positive")
    om = np.asarray(omega, dtype=float)
    scalar = om.ndim == 0
    om = np.atleast_1d(om)
    out = np.empty(om.shape, dtype=complex)
    nz = om != 0.0
    s = 1j * om[nz] * d
    out[nz] = np.exp(-s) + (np.exp(-2.0 * s) - 1.0) / (2.0 * s)
    out[~nz] = 0.0
    return out[0] if scalar else out


def hpf_frequency_response(lam: float, omega) -> complex | np.ndarray:
    s = 1j * np.asarray(omega, dtype=float)
    return 2.0 * s * s / (lam + s) ** 2


def lpf_frequency_response(lam: float, omega) -> complex | np.ndarray:
    s = 1j * np.asarray(omega, dtype=float)
    return lam / (lam + s)


def bode_table(response: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Columns (omega_rad_s, mag_db, phase_deg_unwrapped) for a response grid."""
    with np.errstate(divide="ignore"):
        mag = 20.0 * np.log10(np.abs(response))
    phase = np.degrees(np.unwrap(np.angle(response)))
    return np.column_stack([omega, mag, phase])


def unwrapped_phase_at(d: float, omega_target: float, n_grid: int = 4000) -> float:
    """Phase of G_d at omega_target, unwrapped from omega -> 0 [rad]."""
    omega = np.linspace(omega_target / n_grid, omega_target, n_grid)
    resp = gd_frequency_response(d, omega)
    return float(np.unwrap(np.angle(resp))[-1])
