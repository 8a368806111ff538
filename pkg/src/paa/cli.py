"""Command-line entry point.

Exit codes: 0 success, 1 input error or failed verification, 2 infeasible
tolerances or exceeded node budget.
"""

from __future__ import annotations

import argparse
import json
import sys

from .harness import experiments as ex
from .harness.reports import Report
from .harness.scenario import ScenarioError, load_scenario, trap_scenario
from .harness.verify import SUITES
from .planner.params import InfeasibleToleranceError
from .planner.sampling import DEFAULT_NODE_BUDGET, NodeBudgetError
from .safeguard import POLICIES

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """Usage errors are input errors (exit 1); exit 2 is reserved for infeasibility."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, scenario: bool = True) -> None:
    if scenario:
        p.add_argument("--scenario", required=True, metavar="PATH", help="scenario JSON file")
    p.add_argument("--seed", type=int, default=None, help="master seed (default: scenario seed)")
    p.add_argument("--out", default=None, metavar="PATH", help="output file (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def _sampling(p: argparse.ArgumentParser) -> None:
    p.add_argument("--fixed-assessors", action="store_true",
                   help="rate every sampled state with one assessor set per root")
    p.add_argument("--node-budget", type=int, default=DEFAULT_NODE_BUDGET, metavar="N",
                   help="refuse trees with more estimate nodes than this (0 disables)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="paa", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("params", help="planner resources for a tolerance")
    _common(p)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--delta", type=float, help="omit for the deterministic (AA) guarantee")
    p.add_argument("--k", type=int, dest="k_override")

    p = sub.add_parser("plan", help="run the planner once in every state")
    _common(p)
    _sampling(p)

    p = sub.add_parser("evaluate", help="repeated planner runs scored against exact values")
    _common(p)
    _sampling(p)
    p.add_argument("--repetitions", "-M", type=int, default=20)
    p.add_argument("--epsilon", type=float)

    p = sub.add_parser("safeguard", help="shielded versus unshielded episodes")
    _common(p)
    _sampling(p)
    p.add_argument("--policy", default="random", help=f"one of {', '.join(POLICIES)}")
    p.add_argument("--episodes", "-E", type=int, default=100)
    p.add_argument("--length", "-T", type=int, default=20)
    p.add_argument("--literal-eq7", action="store_true",
                   help="divide kept mass by 1 - Pi(s) instead of Pi(s) (audit only; rows do not sum to 1)")

    p = sub.add_parser("verify-bounds", help="empirical soundness suites")
    p.add_argument("suite", choices=SUITES)
    _common(p, scenario=False)

    p = sub.add_parser("oracle", help="exact optimal values")
    _common(p)

    p = sub.add_parser("gen", help="write a scenario file")
    p.add_argument("kind", choices=("trap", "random"))
    p.add_argument("--out", default=None, metavar="PATH")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--states", type=int, default=8)
    p.add_argument("--actions", type=int, default=3)
    p.add_argument("--individuals", type=int, default=50)
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--q", default="1")
    return parser


def _budget(args) -> int | None:
    return None if args.node_budget == 0 else args.node_budget


def _emit(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def _run(args) -> int:
    if args.command == "gen":
        if args.kind == "trap":
            doc = trap_scenario(seed=args.seed)
        else:
            q = args.q if args.q in ("inf", "-inf") else float(args.q)
            doc = {"schema": 1, "seed": args.seed, "gamma": args.gamma,
                   "welfare": {"q": q, "u_min": 0.1, "u_max": 1.0},
                   "generator": {"kind": "random", "num_states": args.states, "num_actions": args.actions,
                                 "num_individuals": args.individuals}}
        _emit(json.dumps(doc, indent=2) + "\n", args.out)
        return EXIT_OK

    if args.command == "verify-bounds":
        rep, ok = ex.cmd_verify_bounds(args.suite, args.seed or 0)
        rep.write(args.out, args.format)
        print(f"{args.suite}: {rep.summary['cases'] - rep.summary['failed']}/{rep.summary['cases']} cases within bound",
              file=sys.stderr)
        return EXIT_OK if ok else EXIT_INPUT

    scenario = load_scenario(args.scenario)
    seed = scenario.seed if args.seed is None else args.seed
    rep: Report
    if args.command == "params":
        try:
            rep = ex.cmd_params(scenario, args.epsilon, args.delta, args.k_override)
        except InfeasibleToleranceError as exc:
            print(f"infeasible: {exc}", file=sys.stderr)
            return EXIT_INFEASIBLE
        d_limit = next(v for _, _, m, v in rep.rows if m == "d_limit")
        print(f"realized d = {scenario.pair.realized_d:.6g}, required d < {d_limit:.6g}", file=sys.stderr)
    elif args.command == "oracle":
        rep = ex.cmd_oracle(scenario)
    elif args.command == "plan":
        rep = ex.cmd_plan(scenario, seed, node_budget=_budget(args), fixed_assessors=args.fixed_assessors)
    elif args.command == "evaluate":
        rep = ex.cmd_evaluate(scenario, seed, args.repetitions, epsilon=args.epsilon,
                              node_budget=_budget(args), fixed_assessors=args.fixed_assessors)
    elif args.command == "safeguard":
        if args.policy not in POLICIES:
            print(f"error: unknown policy {args.policy!r}; expected one of {', '.join(POLICIES)}", file=sys.stderr)
            return EXIT_INPUT
        rep = ex.cmd_safeguard(scenario, seed, args.policy, args.episodes, args.length,
                               literal=args.literal_eq7, node_budget=_budget(args),
                               fixed_assessors=args.fixed_assessors)
    else:  # pragma: no cover - argparse rejects unknown commands
        raise AssertionError(args.command)
    rep.write(args.out, args.format)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except NodeBudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except InfeasibleToleranceError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ScenarioError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
