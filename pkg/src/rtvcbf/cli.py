"""Command-line entry point.

Subcommands: simulate, compare, feasibility, verify, sweep.  Exit codes are
stable across subcommands: 0 = ran to completion (a safety violation is a
reported result, not a failure), 1 = usage or configuration error,
2 = numerical/solver failure or a failed verification property.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .barrier import eval_barrier, relative_degree_ok
from .errors import ConfigurationError, ContractViolationError
from .filter import feasibility_margin
from .io import ScenarioConfig, emit_plot, load_scenario, write_trace
from .plant import baseline_control
from .sim import ARCHITECTURES, run_closed_loop
from .verify import SUITES, run_suite

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigurationError(message)


def _parse_overrides(pairs: list[str], seed: int | None) -> dict[str, str]:
    overrides: dict[str, str] = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigurationError(f"--set expects key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        overrides[key.strip()] = value.strip()
    if seed is not None:
        overrides["nonlinearity.seed"] = str(seed)
    return overrides


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _summary(arch: str, trace, verdict) -> str:
    energy = float(np.sum(np.sum(trace.u**2, axis=1)) * (trace.t[1] - trace.t[0])) if len(trace) > 1 else 0.0
    max_u = float(np.max(np.abs(trace.u))) if len(trace) else 0.0
    viol = "none" if verdict.violation_time is None else f"{verdict.violation_time:.3f}s"
    return (
        f"{arch}: min_h={verdict.min_h:.6g} violation={viol} "
        f"max|u|={np.rad2deg(max_u):.2f}deg energy={energy:.4g} "
        f"fallbacks={verdict.n_fallback} degenerate={verdict.n_degenerate} "
        f"initial_ok={verdict.initial_ok} sector_ok={verdict.sector_ok}"
    )


def _verdict_dict(verdict) -> dict:
    return {
        "min_h": verdict.min_h,
        "violation_time": verdict.violation_time,
        "initial_ok": list(verdict.initial_ok),
        "sector_ok": verdict.sector_ok,
        "exp_residual_min": verdict.exp_residual_min,
        "n_fallback": verdict.n_fallback,
        "n_degenerate": verdict.n_degenerate,
        "all_steps_feasible": verdict.all_steps_feasible,
        "tol": verdict.tol,
    }


def cmd_simulate(args) -> int:
    config = load_scenario(args.scenario, _parse_overrides(args.set, args.seed))
    out = _outdir(args)
    trace, verdict = run_closed_loop(config, args.arch)
    write_trace(trace, out / f"trace_{args.arch}.csv")
    (out / f"verdict_{args.arch}.json").write_text(
        json.dumps(_verdict_dict(verdict), indent=1) + "\n"
    )
    print(_summary(args.arch, trace, verdict))
    if trace.metadata.get("terminal_event"):
        print(f"terminal event: {trace.metadata['terminal_event']}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_compare(args) -> int:
    config = load_scenario(args.scenario, _parse_overrides(args.set, args.seed))
    out = _outdir(args)
    traces = []
    rows = []
    code = EXIT_OK
    for arch in ARCHITECTURES:
        trace, verdict = run_closed_loop(config, arch)
        traces.append(trace)
        write_trace(trace, out / f"trace_{arch}.csv")
        rows.append((arch, verdict, float(np.max(np.abs(trace.u))) if len(trace) else 0.0))
        if trace.metadata.get("terminal_event"):
            code = EXIT_NUMERIC
    for kind, fname in (
        ("trajectory", "plot_trajectory.json"),
        ("steering", "plot_steering.json"),
        ("boundary-distance", "plot_boundary_distance.json"),
    ):
        emit_plot(traces, kind, out / fname)
    header = f"{'architecture':14s} {'min_h':>12s} {'violation':>10s} {'max|u|deg':>10s} {'fallbacks':>9s}"
    lines = [header, "-" * len(header)]
    for arch, verdict, max_u in rows:
        viol = "none" if verdict.violation_time is None else f"{verdict.violation_time:.3f}"
        lines.append(
            f"{arch:14s} {verdict.min_h:12.6g} {viol:>10s} {np.rad2deg(max_u):10.2f} "
            f"{verdict.n_fallback:9d}"
        )
    table = "\n".join(lines)
    (out / "compare.txt").write_text(table + "\n")
    print(table)
    return code


def cmd_feasibility(args) -> int:
    config = load_scenario(args.scenario, _parse_overrides(args.set, args.seed))
    out = _outdir(args)
    theta = config.filter.theta
    u_max = config.u_max_rad
    if u_max is None:
        raise ConfigurationError("feasibility map needs filter.u_max_deg (ball-bounded input)")
    plant = config.build_plant()
    barrier = config.build_barrier()
    rows = []
    if args.grid in (None, "", "trajectory"):
        trace, _ = run_closed_loop(config, "rtvcbf")
        for k in range(len(trace)):
            rows.append((float(trace.t[k]), float(trace.feas_margin[k])))
        axis = "t"
    else:
        spec, _, at = args.grid.partition("@")
        t_eval = float(at.split("=")[1]) if at else 0.0
        label, _, rng_spec = spec.partition("=")
        try:
            lo, hi, count = rng_spec.split(":")
            lo, hi, count = float(lo), float(hi), int(count)
        except ValueError as exc:
            raise ConfigurationError(
                f"--grid expects 'trajectory' or 'label=lo:hi:count[@t=T]', got {args.grid!r}"
            ) from exc
        labels = [name for name, _ in getattr(plant, "labels", [])] or [
            f"x{i}" for i in range(plant.n)
        ]
        if label not in labels:
            raise ConfigurationError(f"grid label {label!r} not one of {labels}")
        idx = labels.index(label)
        x0 = np.asarray(config.sim.initial_state, dtype=float)
        for value in np.linspace(lo, hi, count):
            x = x0.copy()
            x[idx] = value
            ev = eval_barrier(barrier, plant, x, t_eval, config.barrier.alpha)
            ok, _ = relative_degree_ok(ev, config.rel_degree_eps(plant, x0))
            if not ok:
                rows.append((float(value), np.nan))
                continue
            margin, _ = feasibility_margin(ev.c1, ev.c2, theta, u_max)
            rows.append((float(value), float(margin)))
        axis = label
    lines = [f"{axis},margin,feasible"]
    finite = [m for _, m in rows if np.isfinite(m)]
    n_feas = 0
    for value, margin in rows:
        feas = bool(np.isfinite(margin) and margin >= 0.0)
        n_feas += feas
        lines.append(f"{value:.17g},{margin:.17g},{int(feas)}")
    (out / "feasibility.csv").write_text("\n".join(lines) + "\n")
    frac = n_feas / max(1, len(rows))
    print(
        f"feasible fraction {frac:.4f} over {len(rows)} points; "
        f"min margin {min(finite) if finite else np.nan:.6g}; "
        f"degenerate cells {sum(1 for _, m in rows if not np.isfinite(m))}"
    )
    return EXIT_OK


def cmd_verify(args) -> int:
    names = sorted(SUITES) if args.suite == "all" else [args.suite]
    all_results = []
    for name in names:
        results = run_suite(name, seed=args.seed if args.seed is not None else 0)
        all_results.extend(results)
        for r in results:
            print(r.line())
    if args.out:
        out = _outdir(args)
        payload = [
            {
                "name": r.name,
                "passed": r.passed,
                "observed": r.observed,
                "budget": r.budget,
                "detail": r.detail,
            }
            for r in all_results
        ]
        (out / "verify.json").write_text(json.dumps(payload, indent=1) + "\n")
    return EXIT_OK if all(r.passed for r in all_results) else EXIT_NUMERIC


def _sweep_one(packed):
    scenario, overrides, arch, value_key, value = packed
    overrides = dict(overrides)
    overrides[value_key] = repr(value)
    config = load_scenario(scenario, overrides)
    trace, verdict = run_closed_loop(config, arch)
    max_u = float(np.max(np.abs(trace.u))) if len(trace) else 0.0
    n_total = max(1, len(trace))
    feas_frac = 1.0 - verdict.n_fallback / n_total
    return {
        "value": value,
        "min_h": verdict.min_h,
        "violation_time": verdict.violation_time,
        "max_u_deg": float(np.rad2deg(max_u)),
        "feasible_fraction": feas_frac,
        "error": trace.metadata.get("terminal_event"),
    }


def cmd_sweep(args) -> int:
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"--values expects comma-separated numbers: {exc}") from exc
    if not values:
        raise ConfigurationError("--values is empty")
    overrides = _parse_overrides(args.set, args.seed)
    # probe that the key exists before spawning workers
    load_scenario(args.scenario, {**overrides, args.param: repr(values[0])})
    jobs = args.jobs or os.cpu_count() or 1
    packed = [(args.scenario, overrides, "rtvcbf", args.param, v) for v in values]
    if jobs == 1 or len(values) == 1:
        results = [_sweep_one(p) for p in packed]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_sweep_one, packed))
    out = _outdir(args)
    header = f"{args.param:>16s} {'min_h':>12s} {'violation':>10s} {'max|u|deg':>10s} {'feas_frac':>9s}"
    lines = [header, "-" * len(header)]
    for r in results:
        viol = "none" if r["violation_time"] is None else f"{r['violation_time']:.3f}"
        lines.append(
            f"{r['value']:16.6g} {r['min_h']:12.6g} {viol:>10s} "
            f"{r['max_u_deg']:10.2f} {r['feasible_fraction']:9.4f}"
        )
    table = "\n".join(lines)
    (out / "sweep.txt").write_text(table + "\n")
    print(table)
    if any(r["error"] for r in results):
        return EXIT_NUMERIC
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rtvcbf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario=True):
        if scenario:
            p.add_argument("--scenario", required=True, help="scenario file path")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (repeatable), e.g. filter.theta=0.25")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--seed", type=int, default=None, help="override nonlinearity.seed")

    p = sub.add_parser("simulate", help="run one architecture, write trace + verdict")
    common(p)
    p.add_argument("--arch", required=True, choices=ARCHITECTURES)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="run all three architectures under identical phi")
    common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("feasibility", help="map the ball-bound feasibility margin")
    common(p)
    p.add_argument("--grid", default="trajectory",
                   help="'trajectory' (along the closed loop) or 'label=lo:hi:count[@t=T]'")
    p.set_defaults(func=cmd_feasibility)

    p = sub.add_parser("verify", help="run a seeded property suite")
    p.add_argument("--suite", default="all", choices=["all", *sorted(SUITES)])
    p.add_argument("--out", default=None, help="also write verify.json here")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="sweep one numeric config key under rtvcbf")
    common(p)
    p.add_argument("--param", required=True, help="dotted config key, e.g. filter.theta")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--jobs", type=int, default=None, help="parallel workers (default: cores)")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (ConfigurationError, ContractViolationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # solver/integration/numerical failures
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
