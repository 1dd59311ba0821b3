"""Fixed-step simulation of the motor coupled to controller, probe injection
and estimators.

Two modes:

* closed loop - the sensorless FOC drives the machine from the estimates
  (or from the true state in sensor mode, which isolates estimator error);
* driven speed - the mechanical coordinates follow a prescribed profile and
  only the electrical equation is integrated, mirroring a dyno bench.

Controller and estimators advance once per integration step (single cadence,
no PWM).  The probe voltage is evaluated analytically at the RK4 substep
times; holding it constant over a step would alias a fixed fraction of the
ripple and mask the second-order averaging remainder.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field, replace

import numpy as np

from .controller import ControllerConfig, SensorlessController
from .estimators import (
    ConventionalEstimator,
    BlockFormEstimator,
    LtiChainConfig,
    Pll,
    ProposedEstimator,
)
from .motor import MotorParams, virtual_output
from .signal_ops import InjectionConfig, probe_signal

TRACE_COLUMNS = [
    "t", "theta", "theta_wrapped", "omega",
    "i_alpha", "i_beta", "v_alpha", "v_beta",
    "prop_theta_hat", "prop_omega_hat", "prop_yv1", "prop_yv2", "prop_valid",
    "conv_theta_hat", "conv_omega_hat", "conv_yv1", "conv_yv2", "conv_valid",
]

ESTIMATOR_KINDS = ("proposed", "conventional", "both", "block_form", "none")


class SimulationDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class LoadProfile:
    """Load torque as a function of time: constant, piecewise or sinusoidal."""

    kind: str = "constant"
    value: float = 0.0
    amplitude: float = 0.0
    frequency: float = 0.0           # [Hz], sinusoidal only
    times: tuple = ()                # piecewise breakpoints
    values: tuple = ()               # piecewise levels (len(times) + 1)

    def __post_init__(self):
        if self.kind not in ("constant", "piecewise", "sinusoidal"):
            raise ValueError(f"unknown load kind {self.kind!r}")
        if self.kind == "piecewise" and len(self.values) != len(self.times) + 1:
            raise ValueError("piecewise load needs len(values) == len(times) + 1")

    def torque(self, t: float) -> float:
        if self.kind == "constant":
            return self.value
        if self.kind == "sinusoidal":
            return self.value + self.amplitude * math.sin(
                2.0 * math.pi * self.frequency * t)
        return self.values[bisect_right(self.times, t)]


@dataclass(frozen=True)
class DriveProfile:
    """Prescribed mechanical speed for driven-speed runs.

    constant: omega(t) = omega; reversal: omega until t_ramp_start, linear
    ramp to omega_end by t_ramp_end, then omega_end.  Angle comes from the
    exact integral of the profile.
    """

    kind: str = "constant"
    omega: float = 0.0               # mechanical [rad/s]
    omega_end: float = 0.0
    t_ramp_start: float = 0.0
    t_ramp_end: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "reversal"):
            raise ValueError(f"unknown drive profile {self.kind!r}")
        if self.kind == "reversal" and self.t_ramp_end <= self.t_ramp_start:
            raise ValueError("reversal needs t_ramp_end > t_ramp_start")

    def omega_at(self, t: float) -> float:
        if self.kind == "constant":
            return self.omega
        if t <= self.t_ramp_start:
            return self.omega
        if t >= self.t_ramp_end:
            return self.omega_end
        frac = (t - self.t_ramp_start) / (self.t_ramp_end - self.t_ramp_start)
        return self.omega + frac * (self.omega_end - self.omega)

    def angle_integral(self, t: float) -> float:
        """Integral of omega from 0 to t (mechanical radians)."""
        if self.kind == "constant":
            return self.omega * t
        t0, t1 = self.t_ramp_start, self.t_ramp_end
        if t <= t0:
            return self.omega * t
        acc = self.omega * t0
        if t >= t1:
            acc += 0.5 * (self.omega + self.omega_end) * (t1 - t0)
            return acc + self.omega_end * (t - t1)
        w = self.omega_at(t)
        return acc + 0.5 * (self.omega + w) * (t - t0)


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete description of one run; a value object, safe to share."""

    motor: MotorParams
    injection: InjectionConfig = InjectionConfig()
    controller: ControllerConfig = ControllerConfig()
    load: LoadProfile = LoadProfile()
    drive: DriveProfile | None = None
    mode: str = "closed_loop"        # closed_loop | driven
    estimator: str = "both"
    gamma_alpha: float = 1e4
    gamma_beta: float = 1e4
    ell: tuple[float, float, float] = (1.0, 0.0, 1.0)
    lambda_h: float | None = None    # default omega_h
    lambda_ell: float | None = None  # default max(sqrt(omega_h*omega_star), 1)
    omega_star: float = 0.5
    pll_kp: float = 5.0
    pll_ki: float = 0.01
    theta0_est: float = 0.0
    steps_per_period: int = 50       # Ts = epsilon / steps_per_period
    duration: float = 10.0
    decimation: int = 10
    noise_std: float = 0.0
    seed: int = 0
    theta0: float = 0.0              # initial electrical angle
    omega0: float = 0.0
    i_alpha0: float = 0.0
    i_beta0: float = 0.0
    sensor_mode: bool = False
    injection_enabled: bool = True
    divergence_limit: float = 500.0

    def __post_init__(self):
        if self.estimator not in ESTIMATOR_KINDS:
            raise ValueError(f"unknown estimator kind {self.estimator!r}")
        if self.mode not in ("closed_loop", "driven"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "driven" and self.drive is None:
            raise ValueError("driven mode needs a drive profile")
        if self.steps_per_period < 2:
            raise ValueError("steps_per_period must be >= 2")
        if self.decimation < 1:
            raise ValueError("decimation must be >= 1")
        if self.noise_std < 0.0:
            raise ValueError("noise level must be >= 0")
        if self.estimator == "none" and not self.sensor_mode \
                and self.mode == "closed_loop":
            raise ValueError("closed loop without estimator requires sensor mode")
        if self.duration <= self.warmup:
            raise ValueError("duration must exceed the operator warm-up")

    @property
    def Ts(self) -> float:
        return self.injection.epsilon / self.steps_per_period

    @property
    def warmup(self) -> float:
        return 2.0 * self.injection.epsilon

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.Ts))


class Trace:
    """Column-oriented run record; always carries the full documented schema."""

    def __init__(self, data: dict[str, np.ndarray],
                 columns: list[str] | None = None):
        self.columns = list(columns) if columns is not None else list(TRACE_COLUMNS)
        for c in self.columns:
            if c not in data:
                raise ValueError(f"missing trace column {c!r}")
        self.data = data

    def __getattr__(self, name):
        # note: must not touch self.data via attribute lookup here, or
        # unpickling (empty __dict__) recurses
        data = self.__dict__.get("data")
        if data is not None and name in data:
            return data[name]
        raise AttributeError(name)

    def __len__(self):
        return len(self.data[self.columns[0]])

    def to_csv(self, path):
        arr = np.column_stack([self.data[c] for c in self.columns])
        np.savetxt(path, arr, delimiter=",", fmt="%.17g",
                   header=",".join(self.columns), comments="")

    @classmethod
    def from_csv(cls, path) -> "Trace":
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls({c: arr[:, k] for k, c in enumerate(header)}, header)


def rk4_step(f, y, t: float, Ts: float):
    """Classical explicit 4th-order step for dy/dt = f(t, y), y a numpy array."""
    if Ts <= 0.0:
        raise ValueError("Ts must be positive")
    y = np.asarray(y, dtype=float)
    k1 = np.asarray(f(t, y))
    k2 = np.asarray(f(t + 0.5 * Ts, y + 0.5 * Ts * k1))
    k3 = np.asarray(f(t + 0.5 * Ts, y + 0.5 * Ts * k2))
    k4 = np.asarray(f(t + Ts, y + Ts * k3))
    if not np.all(np.isfinite(k4)):
        raise SimulationDiverged(f"non-finite derivative at t={t}")
    return y + Ts / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _build_estimators(cfg: ScenarioConfig):
    prop = conv = None
    if cfg.estimator in ("proposed", "both"):
        prop = ProposedEstimator(cfg.motor, cfg.injection, cfg.Ts,
                                 cfg.gamma_alpha, cfg.gamma_beta,
                                 cfg.ell, cfg.theta0_est)
    elif cfg.estimator == "block_form":
        prop = BlockFormEstimator(cfg.motor, cfg.injection, cfg.Ts,
                             cfg.gamma_alpha, cfg.gamma_beta, cfg.theta0_est)
    if cfg.estimator in ("conventional", "both"):
        chain = LtiChainConfig.from_injection(cfg.injection, cfg.omega_star,
                                              cfg.lambda_h, cfg.lambda_ell)
        conv = ConventionalEstimator(cfg.motor, cfg.injection, cfg.Ts,
                                     chain, cfg.theta0_est)
    return prop, conv


def _noise(cfg: ScenarioConfig, n: int):
    if cfg.noise_std == 0.0:
        return None
    rng = np.random.default_rng(cfg.seed)
    return rng.normal(0.0, cfg.noise_std, size=(n + 1, 2))


def run_closed_loop(cfg: ScenarioConfig, columns=None) -> Trace:
    """Simulate the full sensorless loop; one record per `decimation` steps."""
    if cfg.mode != "closed_loop":
        raise ValueError("config is not a closed-loop scenario")
    mp = cfg.motor
    inj = cfg.injection
    Ts = cfg.Ts
    n_steps = cfg.n_steps
    prop, conv = _build_estimators(cfg)
    pll_p = Pll(cfg.pll_kp, cfg.pll_ki, mp.n_p, cfg.theta0_est) if prop else None
    pll_c = Pll(cfg.pll_kp, cfg.pll_ki, mp.n_p, cfg.theta0_est) if conv else None
    ctrl = SensorlessController(mp, cfg.controller, inj, Ts,
                                cfg.injection_enabled)
    noise = _noise(cfg, n_steps)
    torque = cfg.load.torque
    drives_with = "conventional" if cfg.estimator == "conventional" else "proposed"

    # hot-loop locals
    np_, Rs, L0, L1 = mp.n_p, mp.R_s, mp.L0, mp.L1
    detL, Phi, J, fr = mp.det_L, mp.Phi, mp.J, mp.f
    Vh = inj.V_h if cfg.injection_enabled else 0.0
    wh = inj.omega_h
    sin, cos = math.sin, math.cos
    lim = cfg.divergence_limit

    ia, ib = cfg.i_alpha0, cfg.i_beta0
    th, om = cfg.theta0, cfg.omega0

    cols = list(columns) if columns is not None else list(TRACE_COLUMNS)
    n_rec = n_steps // cfg.decimation + 1
    rec = {c: np.zeros(n_rec) for c in cols}
    ri = 0

    for k in range(n_steps + 1):
        t = k * Ts
        if noise is None:
            ia_m, ib_m = ia, ib
        else:
            ia_m = ia + noise[k, 0]
            ib_m = ib + noise[k, 1]

        p_valid = c_valid = False
        if prop is not None:
            p_valid = prop.step(t, ia_m, ib_m) is not None
            if p_valid:
                pll_p.step(prop.theta_hat, Ts)
        if conv is not None:
            conv.step(t, ia_m, ib_m)
            c_valid = True
            pll_c.step(conv.theta_hat, Ts)

        if cfg.sensor_mode:
            th_c, om_c = th, om
        elif drives_with == "conventional":
            th_c, om_c = conv.theta_hat, pll_c.omega_hat
        elif p_valid:
            th_c, om_c = prop.theta_hat, pll_p.omega_hat
        else:
            th_c = om_c = None
        vca, vcb = ctrl.low_frequency_voltage(ia_m, ib_m, th_c, om_c)

        if k % cfg.decimation == 0:
            row = {
                "t": t, "theta": th, "theta_wrapped": th % (2.0 * math.pi),
                "omega": om, "i_alpha": ia, "i_beta": ib,
                "v_alpha": vca + Vh * sin(wh * t), "v_beta": vcb,
            }
            if prop is not None:
                row.update(prop_theta_hat=prop.theta_hat,
                           prop_omega_hat=pll_p.omega_hat,
                           prop_yv1=prop.yv1, prop_yv2=prop.yv2,
                           prop_valid=float(p_valid))
            if conv is not None:
                yv = conv.yv
                row.update(conv_theta_hat=conv.theta_hat,
                           conv_omega_hat=pll_c.omega_hat,
                           conv_yv1=yv[0], conv_yv2=yv[1],
                           conv_valid=float(c_valid))
            for c in cols:
                rec[c][ri] = row.get(c, 0.0)
            ri += 1

        if k == n_steps:
            break

        # RK4 over [t, t+Ts]; control voltage held, probe continuous
        TL = torque(t)
        h = Ts
        d1 = _em_deriv(np_, Rs, L0, L1, detL, Phi, J, fr,
                       ia, ib, th, om, vca + Vh * sin(wh * t), vcb, TL)
        tm = t + 0.5 * h
        vam = vca + Vh * sin(wh * tm)
        d2 = _em_deriv(np_, Rs, L0, L1, detL, Phi, J, fr,
                       ia + 0.5 * h * d1[0], ib + 0.5 * h * d1[1],
                       th + 0.5 * h * d1[2], om + 0.5 * h * d1[3],
                       vam, vcb, TL)
        d3 = _em_deriv(np_, Rs, L0, L1, detL, Phi, J, fr,
                       ia + 0.5 * h * d2[0], ib + 0.5 * h * d2[1],
                       th + 0.5 * h * d2[2], om + 0.5 * h * d2[3],
                       vam, vcb, TL)
        te = t + h
        d4 = _em_deriv(np_, Rs, L0, L1, detL, Phi, J, fr,
                       ia + h * d3[0], ib + h * d3[1],
                       th + h * d3[2], om + h * d3[3],
                       vca + Vh * sin(wh * te), vcb, TL)
        ia += h / 6.0 * (d1[0] + 2.0 * d2[0] + 2.0 * d3[0] + d4[0])
        ib += h / 6.0 * (d1[1] + 2.0 * d2[1] + 2.0 * d3[1] + d4[1])
        th += h / 6.0 * (d1[2] + 2.0 * d2[2] + 2.0 * d3[2] + d4[2])
        om += h / 6.0 * (d1[3] + 2.0 * d2[3] + 2.0 * d3[3] + d4[3])
        if not (-lim < ia < lim and -lim < ib < lim) or not math.isfinite(th):
            raise SimulationDiverged(
                f"state out of bounds at t={te:.6f}: i=({ia:.3g},{ib:.3g})")

    return Trace(rec, cols)


def _em_deriv(np_, Rs, L0, L1, detL, Phi, J, fr, ia, ib, th, om, va, vb, TL):
    # inlined copy of motor.derivative_scalars (kept flat for the hot loop)
    c = math.cos(th)
    s = math.sin(th)
    c2 = c * c - s * s
    s2 = 2.0 * s * c
    w2 = 2.0 * np_ * om * L1
    F1 = w2 * (s2 * ia - c2 * ib) - Rs * ia + np_ * om * Phi * s
    F2 = w2 * (-c2 * ia - s2 * ib) - Rs * ib - np_ * om * Phi * c
    u1 = F1 + va
    u2 = F2 + vb
    return ((L0 - L1 * c2) * u1 - L1 * s2 * u2) / detL, \
        (-L1 * s2 * u1 + (L0 + L1 * c2) * u2) / detL, \
        np_ * om, \
        (np_ * Phi * (ib * c - ia * s) - fr * om - TL) / J


def _el_deriv(np_, Rs, L0, L1, detL, Phi, ia, ib, th, om, va, vb):
    c = math.cos(th)
    s = math.sin(th)
    c2 = c * c - s * s
    s2 = 2.0 * s * c
    w2 = 2.0 * np_ * om * L1
    F1 = w2 * (s2 * ia - c2 * ib) - Rs * ia + np_ * om * Phi * s
    F2 = w2 * (-c2 * ia - s2 * ib) - Rs * ib - np_ * om * Phi * c
    u1 = F1 + va
    u2 = F2 + vb
    return ((L0 - L1 * c2) * u1 - L1 * s2 * u2) / detL, \
        (-L1 * s2 * u1 + (L0 + L1 * c2) * u2) / detL


def run_driven_speed(cfg: ScenarioConfig, columns=None) -> Trace:
    """Open-loop estimation run: mechanics follow the drive profile exactly.

    The control voltage regulates the dq currents to the configured
    references in the *true* frame (as on a dyno bench); estimators only see
    the measured currents.
    """
    if cfg.mode != "driven":
        raise ValueError("config is not a driven-speed scenario")
    mp = cfg.motor
    inj = cfg.injection
    Ts = cfg.Ts
    n_steps = cfg.n_steps
    drive = cfg.drive
    prop, conv = _build_estimators(cfg)
    pll_p = Pll(cfg.pll_kp, cfg.pll_ki, mp.n_p, cfg.theta0_est) if prop else None
    pll_c = Pll(cfg.pll_kp, cfg.pll_ki, mp.n_p, cfg.theta0_est) if conv else None
    ctrl = SensorlessController(mp, cfg.controller, inj, Ts,
                                cfg.injection_enabled)
    noise = _noise(cfg, n_steps)

    np_, Rs, L0, L1 = mp.n_p, mp.R_s, mp.L0, mp.L1
    detL, Phi = mp.det_L, mp.Phi
    Vh = inj.V_h if cfg.injection_enabled else 0.0
    wh = inj.omega_h
    sin = math.sin
    lim = cfg.divergence_limit
    th0 = cfg.theta0

    def theta_at(tau):
        return th0 + np_ * drive.angle_integral(tau)

    ia, ib = cfg.i_alpha0, cfg.i_beta0

    cols = list(columns) if columns is not None else list(TRACE_COLUMNS)
    n_rec = n_steps // cfg.decimation + 1
    rec = {c: np.zeros(n_rec) for c in cols}
    ri = 0

    for k in range(n_steps + 1):
        t = k * Ts
        th = theta_at(t)
        om = drive.omega_at(t)
        if noise is None:
            ia_m, ib_m = ia, ib
        else:
            ia_m = ia + noise[k, 0]
            ib_m = ib + noise[k, 1]

        p_valid = c_valid = False
        if prop is not None:
            p_valid = prop.step(t, ia_m, ib_m) is not None
            if p_valid:
                pll_p.step(prop.theta_hat, Ts)
        if conv is not None:
            conv.step(t, ia_m, ib_m)
            c_valid = True
            pll_c.step(conv.theta_hat, Ts)

        # current regulation in the true frame, as on the bench
        vca, vcb = ctrl.low_frequency_voltage(ia_m, ib_m, th, om)

        if k % cfg.decimation == 0:
            row = {
                "t": t, "theta": th, "theta_wrapped": th % (2.0 * math.pi),
                "omega": om, "i_alpha": ia, "i_beta": ib,
                "v_alpha": vca + Vh * sin(wh * t), "v_beta": vcb,
            }
            if prop is not None:
                row.update(prop_theta_hat=prop.theta_hat,
                           prop_omega_hat=pll_p.omega_hat,
                           prop_yv1=prop.yv1, prop_yv2=prop.yv2,
                           prop_valid=float(p_valid))
            if conv is not None:
                yv = conv.yv
                row.update(conv_theta_hat=conv.theta_hat,
                           conv_omega_hat=pll_c.omega_hat,
                           conv_yv1=yv[0], conv_yv2=yv[1],
                           conv_valid=float(c_valid))
            for c in cols:
                rec[c][ri] = row.get(c, 0.0)
            ri += 1

        if k == n_steps:
            break

        h = Ts
        d1 = _el_deriv(np_, Rs, L0, L1, detL, Phi, ia, ib, th, om,
                       vca + Vh * sin(wh * t), vcb)
        tm = t + 0.5 * h
        thm = theta_at(tm)
        omm = drive.omega_at(tm)
        vam = vca + Vh * sin(wh * tm)
        d2 = _el_deriv(np_, Rs, L0, L1, detL, Phi,
                       ia + 0.5 * h * d1[0], ib + 0.5 * h * d1[1],
                       thm, omm, vam, vcb)
        d3 = _el_deriv(np_, Rs, L0, L1, detL, Phi,
                       ia + 0.5 * h * d2[0], ib + 0.5 * h * d2[1],
                       thm, omm, vam, vcb)
        te = t + h
        d4 = _el_deriv(np_, Rs, L0, L1, detL, Phi,
                       ia + h * d3[0], ib + h * d3[1],
                       theta_at(te), drive.omega_at(te),
                       vca + Vh * sin(wh * te), vcb)
        ia += h / 6.0 * (d1[0] + 2.0 * d2[0] + 2.0 * d3[0] + d4[0])
        ib += h / 6.0 * (d1[1] + 2.0 * d2[1] + 2.0 * d3[1] + d4[1])
        if not (-lim < ia < lim and -lim < ib < lim):
            raise SimulationDiverged(f"current out of bounds at t={te:.6f}")

    return Trace(rec, cols)


def run(cfg: ScenarioConfig, columns=None) -> Trace:
    if cfg.mode == "driven":
        return run_driven_speed(cfg, columns)
    return run_closed_loop(cfg, columns)


def averaging_residual(cfg: ScenarioConfig, t1: float, t2: float):
    """Remainder of the averaged current decomposition over [t1, t2].

    Runs the scenario twice with identical inputs, probe on and off, and
    forms r(t) = i_on - i_off - epsilon*y_v(theta)*S(t).  Returns (t, r)
    restricted to the window plus the max norm; r is O(epsilon^2) when the
    averaging identity holds.
    """
    base = replace(cfg, estimator="none", decimation=1)
    if base.mode == "closed_loop" and not base.sensor_mode:
        raise ValueError("paired runs need sensor mode (identical control law)")
    cols = ["t", "theta", "i_alpha", "i_beta"]
    tr_on = run(replace(base, injection_enabled=True), cols)
    tr_off = run(replace(base, injection_enabled=False), cols)
    t = tr_on.t
    if not np.array_equal(t, tr_off.t):
        raise ValueError("paired runs disagree on cadence")
    m = (t >= t1) & (t <= t2)
    tw = t[m]
    eps = cfg.injection.epsilon
    y1, y2 = np.vectorize(lambda th: virtual_output(cfg.motor, th))(tr_on.theta[m])
    S = np.array([probe_signal(cfg.injection, tk) for tk in tw])
    r1 = tr_on.i_alpha[m] - tr_off.i_alpha[m] - eps * y1 * S
    r2 = tr_on.i_beta[m] - tr_off.i_beta[m] - eps * y2 * S
    r = np.column_stack([r1, r2])
    return tw, r, float(np.max(np.abs(r)))
