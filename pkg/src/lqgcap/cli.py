"""Command-line front end.

Subcommands: capacity (one budget), sweep (budget or parameter grid to
CSV), verify (both parameterizations plus the full certificate report),
simulate (closed-loop Monte Carlo against the computed policy) and
rerun (replay a saved manifest).  Every output file gets a manifest
written alongside it recording the command, parameters, tool version
and wall time, so results can be reproduced exactly; the manifest
itself is the only file excluded from bit-identical reproduction since
it records the wall time.

Exit codes: 0 success, 2 configuration or assumption error, 3 budget
below the achievable cost floor, 4 solver failure (or refusing to
simulate an uncertified policy without --uncertified-ok), 5 numerical
blowup during simulation.
"""

import argparse
import csv
import json
import math
import os
import sys as _sys
import time
from concurrent.futures import ProcessPoolExecutor

from . import __version__
from .capacity import (CapacityOptions, capacity_sweep, compute_capacity,
                       verify_equivalence)
from .errors import (AssumptionViolation, BudgetBelowFloor, ConfigError,
                     DimensionMismatch, LqgcapError, NoConvergence, NotPd,
                     NotPsd, NotStabilizable, NotStabilizing,
                     NumericalBlowup, ProblemStructureError,
                     SingularInnovation, SolverFailure, TooFewSamples)
from .model import load_system, system_from_dict
from .riccati import solve_kalman, solve_lqr
from .simulate import SimConfig, run_closed_loop

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_SOLVER = 4
EXIT_BLOWUP = 5

_CONFIG_ERRORS = (ConfigError, DimensionMismatch, NotPsd, NotPd,
                  AssumptionViolation, TooFewSamples, FileNotFoundError,
                  json.JSONDecodeError)
_SOLVER_ERRORS = (SolverFailure, NoConvergence, NotStabilizing,
                  NotStabilizable, SingularInnovation, ProblemStructureError)


def _fmt(x):
    return format(float(x), ".17e")


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _write_manifest(out_dir, stem, command, config_path, parameters, argv,
                    outputs, started):
    manifest = {
        "command": command,
        "config_path": config_path,
        "parameters": parameters,
        "argv": list(argv),
        "output_paths": [os.path.basename(p) for p in outputs],
        "tool_version": __version__,
        "wall_time_s": time.perf_counter() - started,
    }
    path = os.path.join(out_dir, f"{stem}.manifest.json")
    _write_json(path, manifest)
    return path


def _print_certificate(cert):
    print(f"  stationarity residual     {cert.riccati_residual:.3e}")
    print(f"  closed-loop detectable    {cert.detectable_closed_loop}")
    if cert.detectability_witness is not None:
        print(f"    witness: {cert.detectability_witness.describe()}")
    print(f"  covariance recursion      converged={cert.recursion_converged} "
          f"iters={cert.recursion_iters} defect={cert.recursion_defect:.3e}")
    print(f"  message covariance floor  {cert.m_star_min_eig:.3e}")
    if cert.perturbation_applied is not None:
        eps, eps2 = cert.perturbation_applied
        print(f"  perturbation applied      eps={eps:.1e} eps'={eps2:.3e} "
              f"rate loss {cert.rate_loss_nats:.3e} nats")
    print(f"  certified                 {cert.certified}")
    for note in cert.notes:
        print(f"  note: {note}")


def _capacity_options(args):
    opts = CapacityOptions()
    if getattr(args, "tol_gap", None) is not None:
        opts.tol_gap = args.tol_gap
    return opts


def cmd_capacity(args, argv):
    started = time.perf_counter()
    system = load_system(args.config)
    sol, cert = compute_capacity(system, args.p, _capacity_options(args))

    headline = (f"{sol.capacity_bits:.9f} bits/step" if args.bits
                else f"{sol.capacity_nats:.9f} nats/step")
    print(f"cost floor      {sol.cost_floor:.9f}")
    print(f"budget          {sol.budget:.9f}")
    print(f"capacity        {headline}")
    print(f"                ({sol.capacity_nats:.9f} nats, "
          f"{sol.capacity_bits:.9f} bits)")
    _print_certificate(cert)

    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "capacity_result.json")
    _write_json(out_path, sol.to_dict())
    _write_manifest(args.out, "capacity_result", "capacity", args.config,
                    {"p": args.p, "bits": args.bits, "tol_gap": args.tol_gap},
                    argv, [out_path], started)
    print(f"wrote {out_path}")
    return EXIT_OK


def _parse_sweep_spec(spec):
    try:
        name, rng = spec.split("=", 1)
        lo, hi, steps = rng.split(":")
        lo, hi, steps = float(lo), float(hi), int(steps)
    except ValueError as exc:
        raise ConfigError(f"bad sweep spec {spec!r}; expected "
                          "name=from:to:steps") from exc
    if steps < 1:
        raise ConfigError(f"sweep needs at least one step, got {steps}")
    if name not in ("p", "g", "J"):
        raise ConfigError(f"unknown sweep parameter {name!r}; "
                          "supported: p, g, J")
    if steps == 1:
        values = [lo]
    else:
        values = [lo + (hi - lo) * k / (steps - 1) for k in range(steps)]
    return name, values


def _parse_p_mode(text):
    if text == "fixed":
        return "fixed", 0.0
    if text.startswith("jstar-plus:"):
        try:
            return "jstar-plus", float(text.split(":", 1)[1])
        except ValueError as exc:
            raise ConfigError(f"bad --p-mode {text!r}") from exc
    raise ConfigError(f"bad --p-mode {text!r}; expected fixed or "
                      "jstar-plus:<delta>")


def _scaled_system_dict(base, name, value):
    data = dict(base)
    if name == "g":
        data["G"] = (value * _np_array(base["G"])).tolist()
    elif name == "J":
        data["J"] = (value * _np_array(base["J"])).tolist()
    return data


def _np_array(x):
    import numpy as np
    return np.asarray(x, dtype=float)


def _sweep_worker(payload):
    """One cold-start sweep point; returns a plain row dict (picklable)."""
    sysd, budget, tol_gap = payload
    try:
        system = system_from_dict(sysd)
        opts = CapacityOptions(warm_start=None)
        if tol_gap is not None:
            opts.tol_gap = tol_gap
        sol, _ = compute_capacity(system, budget, opts)
        return {"status": "ok", "Jstar": sol.cost_floor, "p_used": budget,
                "capacity_nats": sol.capacity_nats,
                "certified": sol.certified}
    except BudgetBelowFloor as exc:
        return {"status": "infeasible", "Jstar": exc.floor, "p_used": budget}
    except AssumptionViolation:
        return {"status": "assumption", "p_used": budget}
    except _SOLVER_ERRORS:
        return {"status": "solver_failure", "p_used": budget}
    except LqgcapError:
        return {"status": "error", "p_used": budget}


def cmd_sweep(args, argv):
    started = time.perf_counter()
    system = load_system(args.config)
    name, values = _parse_sweep_spec(args.sweep)
    mode, delta = _parse_p_mode(args.p_mode)
    opts = _capacity_options(args)

    if name == "p" and mode != "fixed":
        raise ConfigError("a budget sweep fixes p per grid point; "
                          "--p-mode applies to parameter sweeps only")
    if name != "p" and mode == "fixed" and args.p is None:
        raise ConfigError(f"sweeping {name} with --p-mode fixed "
                          "requires --p")

    base = system.to_dict()
    rows = []
    if name == "p":
        if args.jobs and args.jobs > 1:
            payloads = [(base, v, args.tol_gap) for v in values]
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                results = list(pool.map(_sweep_worker, payloads))
            for v, res in zip(values, results):
                rows.append({"sweep_value": v, **res})
        else:
            for v, point in zip(values,
                                capacity_sweep(system, values, opts)):
                if point.solution is not None:
                    sol = point.solution
                    rows.append({"sweep_value": v, "status": "ok",
                                 "Jstar": sol.cost_floor, "p_used": v,
                                 "capacity_nats": sol.capacity_nats,
                                 "certified": sol.certified})
                else:
                    status = ("infeasible"
                              if point.error_kind == "infeasible"
                              else "solver_failure")
                    row = {"sweep_value": v, "status": status, "p_used": v}
                    if point.error_kind == "infeasible":
                        try:
                            row["Jstar"] = solve_lqr(system).Jstar
                        except LqgcapError:
                            pass
                    rows.append(row)
    else:
        if _np_array(base[{"g": "G", "J": "J"}[name]]).max() == 0 \
                and _np_array(base[{"g": "G", "J": "J"}[name]]).min() == 0:
            raise ConfigError(f"cannot sweep {name}: the base matrix is "
                              "all zero, so scaling it has no effect")
        payloads = []
        for v in values:
            sysd = _scaled_system_dict(base, name, v)
            if mode == "jstar-plus":
                try:
                    floor = solve_lqr(system_from_dict(sysd)).Jstar
                except LqgcapError:
                    payloads.append(None)
                    continue
                payloads.append((sysd, floor + delta, args.tol_gap))
            else:
                payloads.append((sysd, args.p, args.tol_gap))
        live = [pl for pl in payloads if pl is not None]
        if args.jobs and args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                results = iter(list(pool.map(_sweep_worker, live)))
        else:
            results = iter([_sweep_worker(pl) for pl in live])
        for v, pl in zip(values, payloads):
            if pl is None:
                rows.append({"sweep_value": v, "status": "error"})
            else:
                rows.append({"sweep_value": v, **next(results)})

    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "sweep.csv")
    header = ["sweep_value", "Jstar", "p_used", "capacity_nats",
              "capacity_bits", "certified", "status"]
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            cap = row.get("capacity_nats")
            writer.writerow([
                _fmt(row["sweep_value"]),
                _fmt(row["Jstar"]) if "Jstar" in row else "",
                _fmt(row["p_used"]) if "p_used" in row else "",
                _fmt(cap) if cap is not None else "",
                _fmt(cap / math.log(2.0)) if cap is not None else "",
                str(bool(row.get("certified", False))).lower(),
                row["status"],
            ])
    _write_manifest(args.out, "sweep", "sweep", args.config,
                    {"sweep": args.sweep, "p_mode": args.p_mode,
                     "p": args.p, "jobs": args.jobs,
                     "tol_gap": args.tol_gap},
                    argv, [out_path], started)
    ok = sum(1 for row in rows if row["status"] == "ok")
    print(f"swept {name} over {len(values)} points ({ok} solved); "
          f"wrote {out_path}")
    return EXIT_OK


def cmd_verify(args, argv):
    started = time.perf_counter()
    system = load_system(args.config)
    opts = _capacity_options(args)
    sol, cert = compute_capacity(system, args.p, opts)
    eq = verify_equivalence(system, args.p, opts)

    print(f"cost floor      {sol.cost_floor:.9f}")
    print(f"capacity        {sol.capacity_nats:.9f} nats "
          f"({sol.capacity_bits:.9f} bits)")
    _print_certificate(cert)
    print(f"  parameterization delta    {eq.delta:.3e} nats "
          f"(blocks {eq.capacity_blocks:.9f}, "
          f"stacked {eq.capacity_upsilon:.9f})")

    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "verify_result.json")
    payload = sol.to_dict()
    payload["equivalence"] = eq.to_dict()
    _write_json(out_path, payload)
    _write_manifest(args.out, "verify_result", "verify", args.config,
                    {"p": args.p, "tol_gap": args.tol_gap}, argv,
                    [out_path], started)
    print(f"wrote {out_path}")
    return EXIT_OK


def cmd_simulate(args, argv):
    started = time.perf_counter()
    system = load_system(args.config)
    sol, cert = compute_capacity(system, args.p, _capacity_options(args))
    if not cert.certified and not args.uncertified_ok:
        print("refusing to simulate an uncertified policy "
              "(pass --uncertified-ok to force)", file=_sys.stderr)
        return EXIT_SOLVER

    cfg = SimConfig(horizon=args.horizon, trials=args.trials, seed=args.seed,
                    burn_in=args.burn_in, gain_schedule=args.gain_schedule,
                    dump_path=(os.path.join(args.out, args.dump)
                               if args.dump else None))
    if cfg.dump_path is not None:
        os.makedirs(args.out, exist_ok=True)
    report = run_closed_loop(sol.system, sol.kalman, sol.lqr, sol, cfg)

    print(f"budget                 {sol.budget:.9f}")
    print(f"cost floor             {sol.cost_floor:.9f}")
    print(f"empirical cost         {report.empirical_cost:.6f} "
          f"+/- {report.cost_stderr:.6f}")
    print(f"capacity (theory)      {sol.capacity_nats:.9f} nats")
    print(f"policy rate (theory)   {sol.policy_rate_nats:.9f} nats")
    print(f"empirical rate         {report.empirical_rate_nats:.6f} "
          f"+/- {report.rate_stderr:.6f} nats")
    print(f"innovation lag-1 coupling  {report.lag1_autocorr:.3e} "
          f"(guide {4.0 / math.sqrt(report.horizon - report.burn_in):.3e})")
    print(f"max state norm         {report.state_norm_max:.3e}")

    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "simulate_result.json")
    payload = {"capacity": sol.to_dict(), "simulation": report.to_dict()}
    _write_json(out_path, payload)
    outputs = [out_path] + ([cfg.dump_path] if cfg.dump_path else [])
    _write_manifest(args.out, "simulate_result", "simulate", args.config,
                    {"p": args.p, "seed": args.seed, "horizon": args.horizon,
                     "trials": args.trials, "burn_in": args.burn_in,
                     "gain_schedule": args.gain_schedule,
                     "uncertified_ok": args.uncertified_ok,
                     "dump": args.dump, "tol_gap": args.tol_gap},
                    argv, outputs, started)
    print(f"wrote {out_path}")
    return EXIT_OK


def cmd_rerun(args, argv):
    with open(args.manifest) as fh:
        manifest = json.load(fh)
    stored = manifest.get("argv")
    if not stored:
        raise ConfigError(f"manifest {args.manifest} holds no argv to replay")
    replay = list(stored)
    if args.out is not None:
        if "--out" in replay:
            k = replay.index("--out")
            replay[k + 1] = args.out
        else:
            replay += ["--out", args.out]
    print(f"replaying: lqgcap {' '.join(replay)}")
    return main(replay)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="lqgcap",
        description="Joint control-and-communication capacity of "
                    "linear-quadratic-Gaussian systems")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, p_required=True):
        sp.add_argument("config", help="system JSON file")
        sp.add_argument("--p", type=float, required=p_required,
                        help="control cost budget")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--tol-gap", type=float, default=None,
                        dest="tol_gap", help="solver duality-gap target")

    sp = sub.add_parser("capacity", help="capacity at one budget")
    common(sp)
    sp.add_argument("--bits", action="store_true",
                    help="headline the capacity in bits")
    sp.set_defaults(fn=cmd_capacity)

    sp = sub.add_parser("sweep", help="capacity over a grid, to CSV")
    common(sp, p_required=False)
    sp.add_argument("--sweep", required=True,
                    help="grid spec name=from:to:steps over p, g or J")
    sp.add_argument("--p-mode", default="fixed", dest="p_mode",
                    help="fixed (use --p) or jstar-plus:<delta> "
                         "for parameter sweeps")
    sp.add_argument("--jobs", type=int, default=1,
                    help="parallel cold-start workers")
    sp.set_defaults(fn=cmd_sweep)

    sp = sub.add_parser("verify", help="certificates plus both "
                                       "parameterizations")
    common(sp)
    sp.set_defaults(fn=cmd_verify)

    sp = sub.add_parser("simulate", help="closed-loop Monte Carlo")
    common(sp)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--horizon", type=int, default=200000)
    sp.add_argument("--trials", type=int, default=10)
    sp.add_argument("--burn-in", type=int, default=1000, dest="burn_in")
    sp.add_argument("--gain-schedule", default="steady",
                    dest="gain_schedule",
                    choices=("steady", "time_varying"))
    sp.add_argument("--uncertified-ok", action="store_true",
                    dest="uncertified_ok",
                    help="simulate even when certificates fail")
    sp.add_argument("--dump", default=None,
                    help="also dump trajectories to this CSV (in --out)")
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("rerun", help="replay a saved manifest")
    sp.add_argument("manifest", help="manifest JSON file")
    sp.add_argument("--out", default=None, help="override output directory")
    sp.set_defaults(fn=cmd_rerun)
    return parser


def main(argv=None):
    argv = list(_sys.argv[1:]) if argv is None else list(argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad usage, which matches the config-error code
        return int(exc.code or 0)
    try:
        return args.fn(args, argv)
    except BudgetBelowFloor as exc:
        print(f"infeasible: {exc}", file=_sys.stderr)
        return EXIT_INFEASIBLE
    except AssumptionViolation as exc:
        print(f"config error: {exc}", file=_sys.stderr)
        for line in exc.report.failures():
            print(f"  failed: {line}", file=_sys.stderr)
        for wit in (exc.report.detectability_witness,
                    exc.report.stabilizability_witness,
                    exc.report.controllability_witness):
            if wit is not None:
                print(f"  witness: {wit.describe()}", file=_sys.stderr)
        return EXIT_CONFIG
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=_sys.stderr)
        return EXIT_CONFIG
    except NumericalBlowup as exc:
        print(f"numerical blowup: {exc}", file=_sys.stderr)
        return EXIT_BLOWUP
    except _SOLVER_ERRORS as exc:
        print(f"solver failure: {exc}", file=_sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    raise SystemExit(main())
