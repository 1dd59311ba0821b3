"""Shared fixtures: reference motor/injection parameter sets and scenario paths."""

import math
from pathlib import Path

import pytest

from hfsense.motor import SIM_MOTOR, BENCH_MOTOR
from hfsense.signal_ops import InjectionConfig

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture(scope="session")
def sim_motor():
    return SIM_MOTOR


@pytest.fixture(scope="session")
def bench_motor():
    return BENCH_MOTOR


@pytest.fixture(scope="session")
def inj():
    """Default probe: 1 V, 1 kHz (epsilon = 1e-3 s)."""
    return InjectionConfig(V_h=1.0, epsilon=1e-3)


@pytest.fixture(scope="session")
def scenario_dir():
    return SCENARIO_DIR


@pytest.fixture
def Ts(inj):
    return inj.epsilon / 50.0


def approx_mod_pi(a: float, b: float, tol: float) -> bool:
    """True when a == b modulo pi within tol."""
    d = (a - b + 0.5 * math.pi) % math.pi - 0.5 * math.pi
    return abs(d) <= tol
