"""Command-line front end.

Verbs: run, compare-rmsd, sweep-frequency, residual-order, bode, calibrate,
equivalence.  Every verb reads a scenario file (--config), writes CSV
artifacts plus a machine-readable summary.json into --out, and exits 0 on
pass, 1 on a failed acceptance band, 2 on configuration errors.  Environment
variables HFSENSE_CONFIG / HFSENSE_OUT / HFSENSE_WORKERS / HFSENSE_SEED
provide defaults for the matching flags.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiments
from .config import ConfigError, load_scenario
from .signal_ops import (
    bode_table,
    gd_frequency_response,
    hpf_frequency_response,
    lpf_frequency_response,
)
from .sim import SimulationDiverged, run

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2


def _band(spec: str) -> tuple[float, float]:
    lo, hi = (float(x) for x in spec.split(":"))
    if hi <= lo:
        raise argparse.ArgumentTypeError("band must be lo:hi with hi > lo")
    return lo, hi


def _floats_arg(spec: str) -> list[float]:
    return [float(x) for x in spec.split(",")]


def _env_default(name: str, fallback=None):
    return os.environ.get(f"HFSENSE_{name}", fallback)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="hfsense",
        description="Sensorless IPMSM position-estimation experiments")
    ap.add_argument("--config", default=_env_default("CONFIG"),
                    help="scenario file (or HFSENSE_CONFIG)")
    ap.add_argument("--out", default=_env_default("OUT", "out"),
                    help="output directory (or HFSENSE_OUT)")
    ap.add_argument("--workers", type=int,
                    default=int(_env_default("WORKERS", "1")),
                    help="parallel sweep workers (or HFSENSE_WORKERS)")
    ap.add_argument("--seed", type=int,
                    default=(int(_env_default("SEED")) if _env_default("SEED")
                             else None),
                    help="override the scenario RNG seed (or HFSENSE_SEED)")
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("run", help="simulate one scenario and dump the trace")

    p = sub.add_parser("compare-rmsd",
                       help="both estimators on one trace, RMSD table")
    p.add_argument("--t1", type=float, default=5.0)
    p.add_argument("--t2", type=float, default=10.0)
    p.add_argument("--band-proposed", type=_band, default=(0.06, 0.12))
    p.add_argument("--band-conventional", type=_band, default=(0.10, 0.19))

    p = sub.add_parser("sweep-frequency",
                       help="steady error vs probe frequency, order fit")
    p.add_argument("--frequencies", type=_floats_arg,
                   default=[500.0, 1000.0, 2000.0], help="Hz, comma separated")
    p.add_argument("--t1", type=float, required=True)
    p.add_argument("--t2", type=float, required=True)
    p.add_argument("--gamma-scale", type=float, default=None,
                   help="if set, gamma = gamma_scale/epsilon per point")
    p.add_argument("--slope-band", type=_band, default=(0.7, 1.3))
    p.add_argument("--metric", choices=("rms", "ripple"), default="rms",
                   help="rms: total steady error; ripple: oscillating part "
                        "only (use at standstill, where the error mean "
                        "converges faster than the carrier-leakage bound)")

    p = sub.add_parser("residual-order",
                       help="averaging-remainder norm at epsilon and epsilon/2")
    p.add_argument("--t1", type=float, required=True)
    p.add_argument("--t2", type=float, required=True)
    p.add_argument("--ratio-band", type=_band, default=(3.0, 5.0))

    p = sub.add_parser("bode", help="export frequency-response tables")
    p.add_argument("--omega-min", type=float, default=1.0)
    p.add_argument("--omega-max", type=float, default=1e5)
    p.add_argument("--points", type=int, default=400)

    p = sub.add_parser("calibrate",
                       help="fit compensation gains from a synthetic trace")
    p.add_argument("--phase-err", type=float, default=0.0)
    p.add_argument("--ripple-scale", type=float, default=1.0)

    p = sub.add_parser("equivalence",
                       help="operator form vs block form of the new pipeline")
    p.add_argument("--duration", type=float, default=10.0)
    p.add_argument("--tolerance", type=float, default=1e-9)

    return ap


def _write_summary(outdir: Path, payload: dict):
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "summary.json", "w") as fh:
        json.dump(payload, fh, indent=2)
    return payload


def _load(args):
    if not args.config:
        raise ConfigError("no scenario file given (--config or HFSENSE_CONFIG)")
    cfg = load_scenario(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _in_band(x, band) -> bool:
    return band[0] <= x <= band[1]


def cmd_run(args, outdir: Path) -> int:
    cfg = _load(args)
    trace = run(cfg)
    outdir.mkdir(parents=True, exist_ok=True)
    trace.to_csv(outdir / "trace.csv")
    final = {
        "t_end": float(trace.t[-1]),
        "omega_end": float(trace.omega[-1]),
        "theta_end": float(trace.theta[-1]),
    }
    print(f"trace written to {outdir / 'trace.csv'} ({len(trace)} records)")
    print(f"final speed {final['omega_end']:.4f} rad/s at t={final['t_end']:.3f} s")
    _write_summary(outdir, {"command": "run", "passed": True, **final})
    return EXIT_PASS


def cmd_compare_rmsd(args, outdir: Path) -> int:
    cfg = _load(args)
    res = experiments.compare_rmsd(cfg, args.t1, args.t2)
    if res["proposed"] is None or res.get("low_confidence"):
        print("low-confidence window (probe off or estimator not settled); "
              "no RMSD claimed")
        _write_summary(outdir, {"command": "compare-rmsd", "passed": False,
                                **{k: v for k, v in res.items()}})
        return EXIT_FAIL
    ok_p = _in_band(res["proposed"], args.band_proposed)
    ok_c = _in_band(res["conventional"], args.band_conventional)
    ok_order = res["proposed"] < res["conventional"]
    print(f"{'estimator':<14}{'rmsd [rad]':>12}{'band':>16}{'ok':>5}")
    print(f"{'proposed':<14}{res['proposed']:>12.4f}"
          f"{str(args.band_proposed):>16}{str(ok_p):>5}")
    print(f"{'conventional':<14}{res['conventional']:>12.4f}"
          f"{str(args.band_conventional):>16}{str(ok_c):>5}")
    print(f"ordering proposed < conventional: {ok_order}")
    passed = ok_p and ok_c and ok_order
    _write_summary(outdir, {"command": "compare-rmsd", "passed": passed, **res})
    return EXIT_PASS if passed else EXIT_FAIL


def cmd_sweep_frequency(args, outdir: Path) -> int:
    cfg = _load(args)
    res = experiments.frequency_sweep(cfg, args.frequencies, args.t1, args.t2,
                                      gamma_scale=args.gamma_scale,
                                      workers=args.workers, metric=args.metric)
    outdir.mkdir(parents=True, exist_ok=True)
    np.savetxt(outdir / "sweep.csv",
               np.column_stack([res["freqs_hz"], res["epsilons"], res["errors"]]),
               delimiter=",", header="freq_hz,epsilon,rms_error_rad",
               comments="", fmt="%.17g")
    for f, e in zip(res["freqs_hz"], res["errors"]):
        print(f"f={f:8.1f} Hz   steady error {e:.6f} rad")
    passed = _in_band(res["slope"], args.slope_band)
    print(f"fitted order {res['slope']:.3f}, band {args.slope_band}: "
          f"{'pass' if passed else 'FAIL'}")
    _write_summary(outdir, {"command": "sweep-frequency", "passed": passed,
                            "slope_band": list(args.slope_band), **res})
    return EXIT_PASS if passed else EXIT_FAIL


def cmd_residual_order(args, outdir: Path) -> int:
    cfg = _load(args)
    res = experiments.residual_order(cfg, args.t1, args.t2)
    print(f"|r|_inf at eps={res['epsilon']:.2e}:   {res['norm_eps']:.3e} A")
    print(f"|r|_inf at eps/2:          {res['norm_eps_half']:.3e} A")
    passed = _in_band(res["ratio"], args.ratio_band)
    print(f"ratio {res['ratio']:.2f}, band {args.ratio_band}: "
          f"{'pass' if passed else 'FAIL'}")
    _write_summary(outdir, {"command": "residual-order", "passed": passed,
                            "ratio_band": list(args.ratio_band), **res})
    return EXIT_PASS if passed else EXIT_FAIL


def cmd_bode(args, outdir: Path) -> int:
    cfg = _load(args)
    omega = np.logspace(math.log10(args.omega_min), math.log10(args.omega_max),
                        args.points)
    inj = cfg.injection
    lam_h = cfg.lambda_h if cfg.lambda_h is not None else inj.omega_h
    lam_l = cfg.lambda_ell if cfg.lambda_ell is not None else max(
        math.sqrt(inj.omega_h * cfg.omega_star), 1.0)
    outdir.mkdir(parents=True, exist_ok=True)
    header = "omega_rad_s,mag_db,phase_deg_unwrapped"
    for name, resp in [
        ("gd", gd_frequency_response(inj.epsilon, omega)),
        ("hpf", hpf_frequency_response(lam_h, omega)),
        ("lpf", lpf_frequency_response(lam_l, omega)),
    ]:
        np.savetxt(outdir / f"bode_{name}.csv", bode_table(resp, omega),
                   delimiter=",", header=header, comments="", fmt="%.17g")
        print(f"wrote {outdir / f'bode_{name}.csv'}")
    _write_summary(outdir, {"command": "bode", "passed": True,
                            "lambda_h": lam_h, "lambda_ell": lam_l})
    return EXIT_PASS


def cmd_calibrate(args, outdir: Path) -> int:
    cfg = _load(args)
    res = experiments.calibrate(cfg, phase_err=args.phase_err,
                                ripple_scale=args.ripple_scale)
    print(f"ell1={res['ell1']:.5f}  ell2={res['ell2']:.5f}  "
          f"ell3={res['ell3']:.5f}")
    print(f"angle RMS before {res['rmsd_raw']:.5f} rad, "
          f"after {res['rmsd_compensated']:.5f} rad")
    _write_summary(outdir, {"command": "calibrate", "passed": True, **res})
    return EXIT_PASS


def cmd_equivalence(args, outdir: Path) -> int:
    cfg = _load(args)
    res = experiments.equivalence_deviation(
        cfg.motor, cfg.injection, cfg.steps_per_period, args.duration,
        gamma=cfg.gamma_alpha)
    passed = bool(res["max_rel_yv_deviation"] <= args.tolerance)
    print(f"max relative deviation {res['max_rel_yv_deviation']:.3e} "
          f"(tolerance {args.tolerance:.1e}): {'pass' if passed else 'FAIL'}")
    _write_summary(outdir, {"command": "equivalence", "passed": passed,
                            "tolerance": args.tolerance, **res})
    return EXIT_PASS if passed else EXIT_FAIL


_COMMANDS = {
    "run": cmd_run,
    "compare-rmsd": cmd_compare_rmsd,
    "sweep-frequency": cmd_sweep_frequency,
    "residual-order": cmd_residual_order,
    "bode": cmd_bode,
    "calibrate": cmd_calibrate,
    "equivalence": cmd_equivalence,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    outdir = Path(args.out)
    try:
        return _COMMANDS[args.command](args, outdir)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationDiverged as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
