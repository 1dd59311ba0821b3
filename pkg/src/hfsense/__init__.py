"""Simulation laboratory for sensorless IPMSM rotor-position estimation
via high-frequency voltage injection.

Two estimation pipelines run on the same simulated machine: the classical
LTI filter chain (high-pass, synchronous demodulation, low-pass) and a
delay/hold regressor followed by a gradient demodulator.  The package
provides the motor model, the signal operators, both estimators, a
sensorless field-oriented controller, a fixed-step simulation engine,
scenario files and a CLI for the standard experiments.
"""

from .controller import ControllerConfig, Pi, SensorlessController, frame_rotate
from .estimators import (
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
from .motor import (
    BENCH_MOTOR,
    SIM_MOTOR,
    MotorInputs,
    MotorParams,
    MotorState,
    electromagnetic_torque,
    inductance_matrix,
    inverse_inductance,
    saliency_matrix,
    state_derivative,
    virtual_output,
)
from .signal_ops import (
    DelayLine,
    GradientFlow,
    HighPass2,
    InjectionConfig,
    LowPass1,
    MovingAverage,
    bode_table,
    gd_frequency_response,
    hpf_frequency_response,
    injection_voltage,
    lpf_frequency_response,
    probe_signal,
)
from .sim import (
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
from .config import ConfigError, load_scenario

__version__ = "0.1.0"

__all__ = [
    "BENCH_MOTOR", "SIM_MOTOR",
    "ConfigError", "ControllerConfig", "ConventionalEstimator",
    "DegenerateSignalError", "DelayLine", "DriveProfile", "BlockFormEstimator",
    "GradientFlow", "HighPass2", "InjectionConfig", "LoadProfile",
    "LowPass1", "LtiChainConfig", "MotorInputs", "MotorParams", "MotorState",
    "MovingAverage", "Pi", "Pll", "ProposedEstimator", "ScenarioConfig",
    "SensorlessController", "SimulationDiverged", "Trace",
    "averaging_residual", "bode_table", "electromagnetic_torque",
    "fit_compensation", "frame_rotate", "gd_frequency_response",
    "hpf_frequency_response", "inductance_matrix", "injection_voltage",
    "inverse_inductance", "load_scenario", "lpf_frequency_response",
    "ltp_lowpass_check", "probe_signal", "rk4_step", "rmsd", "run",
    "run_closed_loop", "run_driven_speed", "saliency_matrix",
    "state_derivative", "synthesize_injection_current", "track_branch",
    "virtual_output", "virtual_output_to_angle", "wrap_mod_pi",
]
