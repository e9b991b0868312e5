"""Command-line entry point: ``sgnmg run | suite | train | eval | compare | generate``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import engine, report
from .reflex import ReflexLimits
from .scenario import (CONTROLLERS, ScenarioSpec, generate_ppf_suite, generate_ppi_suite,
                       generate_separable_suite, load_suite, resolve_seed, save_suite)
from .supervisor import PolicyState


def _print(obj) -> None:
    json.dump(obj, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _with_controller(specs, kind):
    return [s.with_controller(kind) for s in specs] if kind else list(specs)


def _suite(path) -> list[ScenarioSpec]:
    specs = load_suite(path)
    if not specs:
        raise FileNotFoundError(f"no scenario files in {path}")
    return specs


def _emit_runs(traces, out, fmt) -> None:
    if out is None:
        return
    out = Path(out)
    for tr in traces:
        report.emit_trace(tr, out / tr.meta["name"], (fmt,))


def cmd_run(args) -> int:
    spec = ScenarioSpec.load(args.spec)
    if args.controller:
        spec = spec.with_controller(args.controller)
    trace = engine.run(spec)
    kpis = report.compute_kpis(trace)
    if args.out:
        report.emit_trace(trace, args.out, (args.format,))
    _print(kpis.to_dict())
    return 0


def cmd_suite(args) -> int:
    specs = _with_controller(_suite(args.dir), args.controller)
    traces = engine.run_batch(specs, parallelism=args.parallel)
    reports = [report.compute_kpis(t) for t in traces]
    _emit_runs(traces, args.out, args.format)
    if args.out:
        report.emit_reports(reports, Path(args.out) / "kpis.csv")
    _print({
        "scenarios": len(reports),
        "false_trips": sum(r.false_trips for r in reports),
        "missed_faults": sum(r.missed_faults for r in reports),
        "mean_nadir": sum(r.nadir for r in reports) / len(reports),
        "mean_freq_dev_area": sum(r.freq_dev_area for r in reports) / len(reports),
    })
    return 0


def cmd_train(args) -> int:
    specs = _with_controller(_suite(args.dir), "sg-nmg")
    seed = resolve_seed(args.seed)
    policy = PolicyState(mode="Learned", epsilon=args.epsilon, rng_seed=seed)
    policy, log = engine.train(specs, policy, episodes=args.episodes, seed=seed)
    if args.policy_out:
        Path(args.policy_out).parent.mkdir(parents=True, exist_ok=True)
        policy.save(args.policy_out)
    _print({"episodes": args.episodes if args.episodes is not None else len(specs),
            "updates": len(log.rewards), "seed": seed,
            "mean_reward": sum(log.rewards) / max(1, len(log.rewards)),
            "bins": len(policy.q_table)})
    return 0


def cmd_eval(args) -> int:
    specs = _with_controller(_suite(args.dir), "sg-nmg")
    policy = PolicyState.load(args.policy)
    ev = engine.evaluate(specs, policy, parallelism=args.parallel)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "evaluation.json").write_text(json.dumps(ev.to_dict(), indent=2, sort_keys=True) + "\n")
    _print({"accuracy": ev.accuracy, "scenarios": len(specs),
            "false_trips": sum(r.false_trips for r in ev.reports),
            "missed_faults": sum(r.missed_faults for r in ev.reports)})
    return 0


def cmd_compare(args) -> int:
    specs = _suite(args.dir)
    names = [c.strip() for c in args.controllers.split(",") if c.strip()]
    unknown = [c for c in names if c not in CONTROLLERS]
    if unknown:
        raise ValueError(f"unknown controller(s): {unknown}")
    reports = {}
    for c in names:
        traces = engine.run_batch(_with_controller(specs, c), parallelism=args.parallel)
        reports[c] = [report.compute_kpis(t) for t in traces]
    table = report.compare(reports)
    if args.out:
        report.emit_comparison(table, args.out, ("csv", "json", args.format))
    _print({"means": table.means, "deltas": table.deltas, "baseline": table.baseline})
    return 0


def cmd_generate(args) -> int:
    seed = resolve_seed(args.seed)
    if args.kind == "ppi":
        reflex = ReflexLimits.sensitive() if args.sensitive else None
        specs = generate_ppi_suite(seed, args.n, reflex=reflex)
    elif args.kind == "ppf":
        specs = generate_ppf_suite(seed, args.n)
    else:
        specs = generate_separable_suite(seed, args.n)
    paths = save_suite(specs, args.dir)
    _print({"written": len(paths), "dir": str(args.dir), "seed": seed})
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=report.FORMATS, default="csv")
    common.add_argument("--parallel", type=int, default=1, metavar="N")
    common.add_argument("--controller", choices=CONTROLLERS)

    p = argparse.ArgumentParser(prog="sgnmg",
                                description="Sensory-gated microgrid protection simulator")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("run", parents=[common], help="simulate one scenario file")
    s.add_argument("spec")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("suite", parents=[common], help="simulate every scenario in a directory")
    s.add_argument("dir")
    s.set_defaults(func=cmd_suite)

    s = sub.add_parser("train", parents=[common], help="train a tabular gating policy")
    s.add_argument("dir")
    s.add_argument("--episodes", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--epsilon", type=float, default=0.3)
    s.add_argument("--policy-out", dest="policy_out")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", parents=[common], help="greedy evaluation of a trained policy")
    s.add_argument("dir")
    s.add_argument("--policy", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("compare", parents=[common], help="KPI comparison of controllers")
    s.add_argument("dir")
    s.add_argument("--controllers", default="sg-nmg,droop-only")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("generate", help="write a scenario suite")
    s.add_argument("kind", choices=("ppi", "ppf", "separable"))
    s.add_argument("dir")
    s.add_argument("--n", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--sensitive", action="store_true",
                   help="over-sensitive reflex pickups (ppi only)")
    s.set_defaults(func=cmd_generate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # surfaced as a machine-readable record
        record = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        sys.stderr.write(json.dumps(record) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
