"""Command-line interface.

Subcommands
-----------
run        two-stage design for one configuration, MetricsReport JSON out
sweep      parameter sweep from a sweep specification, one table per mode
validate   schema and invariant check; echoes the normalized configuration
fim-check  analytic vs finite-difference Fisher information self-check
solve-sdp  solve a dumped SDP (or the bundled regression problems)

Exit codes: 0 ok, 1 usage or configuration error, 2 infeasible,
3 self-check failure.
"""
import argparse
import json
import os
import sys

import numpy as np

from .config import ConfigError, apply_overrides, config_from_dict, config_to_dict, load_config
from .errors import (InfeasibleConstraintsError, NoFeasibleCandidateError, RisIpacError,
                     SingularInformationError)

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_SELFCHECK = 0, 1, 2, 3
SDP_OBJECTIVE_TOL = 1e-6
SDP_GAP_TOL = 1e-7


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is reserved for infeasibility here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _say(*args):
    print(*args, file=sys.stderr)


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([(f"line {exc.lineno} column {exc.colno}", exc.msg)]) from exc


def _system_config(args):
    """Configuration from ``--config`` or ``--scenario``, with overrides and seed."""
    from .scenarios import build_scenario

    if args.config:
        d = _read_json(args.config)
    else:
        d = config_to_dict(build_scenario(args.scenario, desk_scale=not args.full_scale))
    if args.set:
        d = apply_overrides(d, args.set)
    if args.seed is not None:
        d["seed"] = args.seed
    return config_from_dict(d)


def _write_json(obj, path):
    text = json.dumps(obj, indent=2, allow_nan=False) + "\n"
    if path == "-":
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _fmt(x, spec=".4g"):
    return "inf" if not np.isfinite(x) else format(x, spec)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_run(args):
    from .beamforming import run_two_stage

    cfg = _system_config(args)
    try:
        phase, beams, report = run_two_stage(cfg)
    except (InfeasibleConstraintsError, SingularInformationError, NoFeasibleCandidateError) as exc:
        binding = [[f, k] for f, k in getattr(exc, "binding", [])]
        print(f"status: infeasible\n{exc}")
        if args.out:
            _write_json({"status": "infeasible", "message": str(exc), "binding": binding,
                         "config": config_to_dict(cfg)}, args.out)
        return EXIT_INFEASIBLE

    print("status: optimal")
    print(f"phase mode: {cfg.phase_mode}" + (f" ({cfg.q_bits} bits)" if cfg.phase_mode == "discrete" else ""))
    print(f"total power: {report.power_dbm:.3f} dBm ({report.power_w:.6g} W); "
          f"relaxation bound {beams.sdr_power:.6g} W, gap {beams.sdr_gap:.2e}")
    print(f"{'UE':>3} {'rate':>10} {'required':>10} {'margin':>10} {'PEB [m]':>11} {'limit':>11} {'margin':>11}")
    for k in range(cfg.n_ue):
        r, req = report.rate[k], cfg.rate_req[k]
        p, lim = report.peb[k], cfg.peb_threshold[k]
        print(f"{k + 1:>3} {_fmt(r):>10} {_fmt(req):>10} {_fmt(r - req):>10} "
              f"{_fmt(p):>11} {_fmt(lim):>11} {_fmt(lim - p):>11}")
    out = report.to_dict()
    out.update(status="optimal", sdr_power_w=beams.sdr_power, sdr_gap=beams.sdr_gap,
               rate_margin=[float(x) for x in report.rate - cfg.rate_req],
               peb_margin=[float(x) if np.isfinite(x) else None for x in cfg.peb_threshold - report.peb],
               config=config_to_dict(cfg))
    _write_json(out, args.out or "report.json")
    return EXIT_OK


def cmd_sweep(args):
    from .scenarios import default_filename, emit, run_sweep, sweep_spec_from_dict

    d = _read_json(args.config)
    if args.set:
        d = dict(d)
        for item in args.set:
            if "=" not in item:
                raise ConfigError([(item, "override must look like key=value")])
            key, raw = item.split("=", 1)
            if key.startswith("base."):
                d.setdefault("base", {})
                d["base"] = dict(d["base"], **{key[5:]: _parse_value(raw)})
            else:
                d[key] = _parse_value(raw)
    if args.seed is not None:
        d["seeds"] = [args.seed]
    spec = sweep_spec_from_dict(d)
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    for mode in spec.phase_modes:
        spec_mode = type(spec)(**{**spec.__dict__, "phase_modes": [mode]})
        rows = run_sweep(spec_mode, jobs=args.jobs)
        path = os.path.join(out_dir, default_filename(spec, mode, args.format))
        emit(rows, args.format, path)
        bad = sum(r["solver_status"] != "optimal" for r in rows)
        print(f"{path}: {len(rows)} rows, {bad} not optimal")
    return EXIT_OK


def _parse_value(raw):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def cmd_validate(args):
    cfg = _system_config(args)
    _say(f"configuration valid: {cfg.n_ue} UEs, {cfg.bs.n_elements} BS antennas, "
         f"{cfg.ris.n_elements} RIS elements, {cfg.n_subcarriers} subcarriers")
    _write_json(config_to_dict(cfg), args.out or "-")
    return EXIT_OK


def cmd_fim_check(args):
    from .selfcheck import FIM_TOL, fim_check

    cfg = _system_config(args)
    res = fim_check(cfg, n_instances=args.instances, seed=cfg.seed, delta_f_error=args.corrupt_delta_f)
    verdict = "pass" if res.passed else "FAIL"
    print(f"fim-check: max relative error {res.max_error:.3e} over {args.instances} instances "
          f"(tolerance {FIM_TOL:g}) in {res.seconds:.2f} s: {verdict}")
    return EXIT_OK if res.passed else EXIT_SELFCHECK


def cmd_solve_sdp(args):
    from .sdp import SdpProblem, bundled_problems, get_backend

    solve = get_backend(args.backend)
    if args.bundled:
        worst_err, worst_gap, failed = 0.0, 0.0, []
        for name, prob, optimum in bundled_problems():
            sol = solve(prob, tol=args.tol)
            err = abs(sol.primal_objective - optimum) / max(1.0, abs(optimum))
            worst_err, worst_gap = max(worst_err, err), max(worst_gap, sol.gap)
            if sol.status != "optimal" or err >= SDP_OBJECTIVE_TOL or sol.gap >= SDP_GAP_TOL:
                failed.append(name)
            print(f"{name:<16} {sol.status:<10} objective {sol.primal_objective:.10g} "
                  f"(optimum {optimum:.10g}) error {err:.1e} gap {sol.gap:.1e}")
        print(f"worst objective error {worst_err:.1e}, worst gap {worst_gap:.1e}; {len(failed)} failed")
        return EXIT_SELFCHECK if failed else EXIT_OK
    if not args.config:
        raise ConfigError([("--config", "a problem file is required unless --bundled is given")])
    try:
        prob = SdpProblem.from_dict(_read_json(args.config))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError([("problem", str(exc))]) from exc
    sol = solve(prob, tol=args.tol)
    print(f"status: {sol.status}\nobjective: {sol.primal_objective:.12g} (dual {sol.dual_objective:.12g})\n"
          f"gap {sol.gap:.2e}, residuals {sol.primal_residual:.2e} / {sol.dual_residual:.2e}, "
          f"{sol.iterations} iterations")
    if args.out:
        d = sol.to_dict()
        d["diagnostics"] = {k: v for k, v in d["diagnostics"].items() if _jsonable(v)}
        _write_json(json.loads(json.dumps(d, default=float).replace("NaN", "null")), args.out)
    if sol.status in ("infeasible", "unbounded"):
        return EXIT_INFEASIBLE
    return EXIT_OK if sol.status == "optimal" else EXIT_USAGE


def _jsonable(v):
    try:
        json.dumps(v, allow_nan=False, default=float)
        return True
    except (TypeError, ValueError):
        return False


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_common(p, config_required=False):
    p.add_argument("--config", required=config_required, help="JSON configuration file")
    p.add_argument("--out", help="output path")
    p.add_argument("--seed", type=int, help="override the configuration seed")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a configuration entry (dotted keys, JSON values); repeatable")


def _add_source(p):
    p.add_argument("--scenario", type=int, choices=(1, 2, 3), default=1,
                   help="built-in scenario used when --config is absent (default 1)")
    p.add_argument("--full-scale", action="store_true",
                   help="with --scenario, use the full-size arrays and 1000 subcarriers")


def build_parser():
    parser = _Parser(prog="ris-ipac", description="RIS-enabled positioning and communication design.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="two-stage design for one configuration")
    _add_common(p)
    _add_source(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a parameter sweep")
    _add_common(p, config_required=True)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker processes")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="check a configuration and echo it normalized")
    _add_common(p)
    _add_source(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("fim-check", help="analytic vs finite-difference FIM self-check")
    _add_common(p)
    _add_source(p)
    p.add_argument("--instances", type=int, default=20)
    # fault injection for testing the check itself
    p.add_argument("--corrupt-delta-f", type=float, default=0.0, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_fim_check)

    p = sub.add_parser("solve-sdp", help="solve an SDP problem file")
    _add_common(p)
    p.add_argument("--bundled", action="store_true", help="solve the bundled regression problems")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--backend", default="ipm")
    p.set_defaults(func=cmd_solve_sdp)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _say("configuration error:")
        for key, msg in exc.issues:
            _say(f"  {key}: {msg}")
        return EXIT_USAGE
    except FileNotFoundError as exc:
        _say(f"error: file not found: {exc.filename}")
        return EXIT_USAGE
    except OSError as exc:
        _say(f"error: {exc}")
        return EXIT_USAGE
    except RisIpacError as exc:
        _say(f"error: {exc}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
