"""Command line: ``beliefplan run|ablate|plan``."""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from beliefplan.agent import AgentConfig
from beliefplan.grounding import GroundingError, ground_problem
from beliefplan.harness import BACKENDS, ablate, run_suite
from beliefplan.household import FAMILIES
from beliefplan.pddl import PDDLError, parse_domain, parse_problem
from beliefplan.planner import (PLANNERS, BudgetExhausted, SearchBudget,
                                Unsolvable)
from beliefplan.sampling import STRATEGIES, SamplerConfig

EXIT_UNSOLVABLE = 1
EXIT_BUDGET = 2
EXIT_BAD_INPUT = 3


def _families(text: str) -> list[str]:
    names = [f.strip() for f in text.split(",") if f.strip()]
    bad = [f for f in names if f not in FAMILIES]
    if bad:
        raise argparse.ArgumentTypeError(
            f"unknown families {bad}; choose from {', '.join(FAMILIES)}")
    return names


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _suite_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--families", type=_families, default=list(FAMILIES),
                   help="comma-separated task families (default: all)")
    p.add_argument("--episodes", type=int, default=10,
                   help="episodes per family")
    p.add_argument("--sampler", choices=STRATEGIES, default="random")
    p.add_argument("--planner", choices=sorted(PLANNERS), default="bffs")
    p.add_argument("--backend", choices=BACKENDS, default="scripted")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--max-steps", type=int, default=50)
    p.add_argument("--strict-replan", action="store_true",
                   help="resample and replan before every action")
    p.add_argument("--out", type=Path, default=None,
                   help="directory for report files")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beliefplan",
        description="Plan under partial observability in a text household.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a seeded episode suite")
    _suite_args(run)
    run.add_argument("--n-samples", type=int, default=3)
    run.add_argument("--no-fallback", action="store_true")
    run.add_argument("--traces", type=Path, default=None,
                     help="directory for per-episode JSONL traces")

    abl = sub.add_parser("ablate", help="sample-count x fallback ablation")
    _suite_args(abl)
    abl.add_argument("--n-values", type=_ints, default=[3, 5])
    abl.set_defaults(sampler="llm")

    plan = sub.add_parser("plan", help="solve a PDDL problem file")
    plan.add_argument("domain", type=Path)
    plan.add_argument("problem", type=Path)
    plan.add_argument("--planner", choices=sorted(PLANNERS), default="bffs")
    plan.add_argument("--max-nodes", type=int, default=100_000)
    plan.add_argument("--max-time", type=float, default=5.0)
    return parser


def _agent_config(args, n_samples: int = 3, fallback: bool = True):
    return AgentConfig(
        sampler=SamplerConfig(args.sampler, n_samples, args.seed, fallback),
        planner=args.planner, max_steps=args.max_steps,
        replan_every_step=args.strict_replan)


def _cmd_run(args) -> int:
    cfg = _agent_config(args, args.n_samples, not args.no_fallback)
    label = f"agent sampler={args.sampler} n={args.n_samples}" + (
        " - fallback" if args.no_fallback else "")
    report = run_suite(args.families, args.episodes, cfg, args.backend,
                       args.workers, args.seed, label, args.out, args.traces)
    sys.stdout.write(report.to_text())
    return 130 if report.interrupted else 0


def _cmd_ablate(args) -> int:
    report = ablate(args.n_values, [True, False], args.families,
                    args.episodes, _agent_config(args), args.backend,
                    args.workers, args.seed, args.out)
    sys.stdout.write(report.to_text())
    return 130 if any(r.interrupted for r in report.rows) else 0


def _cmd_plan(args) -> int:
    try:
        domain = parse_domain(args.domain.read_text(encoding="utf-8"))
        problem = parse_problem(args.problem.read_text(encoding="utf-8"),
                                domain)
        ground = ground_problem(domain, problem)
    except (OSError, PDDLError, GroundingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    budget = SearchBudget(args.max_nodes, args.max_time)
    start = time.perf_counter()
    try:
        plan = PLANNERS[args.planner](ground.init, ground.actions, ground.goal,
                                      budget)
    except Unsolvable as exc:
        print(f"no plan: {exc}", file=sys.stderr)
        return EXIT_UNSOLVABLE
    except BudgetExhausted as exc:
        print(f"budget exhausted: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    for step in plan.steps:
        print(step)
    print(f"; length {plan.length}, expanded {plan.expanded}, "
          f"{time.perf_counter() - start:.3f}s", file=sys.stderr)
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "plan":
        return _cmd_plan(args)
    if args.command == "run":
        return _cmd_run(args)
    return _cmd_ablate(args)


if __name__ == "__main__":
    sys.exit(main())
