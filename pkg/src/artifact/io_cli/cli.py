"""Command-line entry point: ``artifact <command> ...``.

Exit codes: 0 success, 1 model violations or failed benchmark checks,
2 unreadable or malformed input, 3 capacity exceeded.
"""

from __future__ import annotations

import argparse
import sys
import time
from fractions import Fraction
from typing import Sequence

from ..errors import CapacityError, ParseError
from ..evaluation import value_fh
from ..model import PlayOrder, StickinessKind, validate_model
from ..policies import (
    AgentPolicy,
    NaturePolicy,
    agent_decision_points,
    nature_decision_points,
)
from ..posg import build_posg
from ..rational import format_decimal, format_rational
from ..solver import SolverConfig, solve_saddle
from .benchmarks import BENCHMARK_IDS, build_benchmark, references
from .formats import ModelValidationError, parse_model, parse_policy, parse_rational, serialize_model, serialize_policy

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT, EXIT_CAPACITY = 0, 1, 2, 3


class InputError(Exception):
    pass


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None


def _load_model(path: str, validate: bool = True):
    return parse_model(_read(path), validate=validate)


def _load_policy(path: str, cls):
    policy = parse_policy(_read(path))
    if not isinstance(policy, cls):
        raise InputError(f"{path}: expected a {cls.__name__[:-6].lower()} policy")
    return policy


def _rational_arg(text: str) -> Fraction:
    try:
        return parse_rational(text)
    except ParseError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _fallback_count(model, policy, points, has_choice=lambda key: True) -> int:
    """Reachable decision points with a real choice that the policy does not list."""
    missing = set()
    for component, _ in policy.pure_components():
        for key in points(model, component):
            if key not in component.table and has_choice(key):
                missing.add(key)
    return len(missing)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_validate(args) -> int:
    model = _load_model(args.model, validate=False)
    report = validate_model(model)
    if report.ok:
        print("ok")
        return EXIT_OK
    for violation in report:
        print(violation)
    return EXIT_VIOLATION


def cmd_transform(args) -> int:
    model = _load_model(args.model)
    posg = build_posg(model, args.horizon)
    fragment = posg.reachable(args.grid)
    agent_states = sum(1 for _, x, _ in fragment if posg.is_agent_state(x))
    print(f"states={len(fragment)}")
    print(f"agent_states={agent_states}")
    print(f"nature_states={len(fragment) - agent_states}")
    if args.dump:
        sys.stdout.write(posg.dump(args.grid))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model = _load_model(args.model)
    agent = _load_policy(args.agent, AgentPolicy)
    nature = _load_policy(args.nature, NaturePolicy)
    value = value_fh(model, agent, nature, args.horizon)
    horizon = args.horizon
    agent_fb = _fallback_count(
        model, agent, lambda m, p: agent_decision_points(m, p, horizon), lambda h: len(model.actions_for_observation(h.last)) > 1
    )
    nature_fb = _fallback_count(model, nature, lambda m, p: nature_decision_points(m, p, horizon))
    print(f"value={format_rational(value)}")
    print(f"decimal={format_decimal(value)}")
    print(f"agent_fallbacks={agent_fb}")
    print(f"nature_fallbacks={nature_fb}")
    if agent_fb or nature_fb:
        print("# unlisted histories use the fallback (first enabled action / first vertex)", file=sys.stderr)
    return EXIT_OK


def _print_result(result, seconds: float) -> None:
    print(f"# bracket [{format_decimal(result.lower_value)}, {format_decimal(result.upper_value)}] after {result.iterations} rounds ({seconds:.2f}s)")
    print(f"lower={format_rational(result.lower_value)}")
    print(f"upper={format_rational(result.upper_value)}")
    print(f"gap={format_rational(result.gap)}")
    print(f"value={format_rational(result.value)}")
    print(f"iterations={result.iterations}")
    print(f"grid_resolution={format_rational(result.grid_resolution)}")


def cmd_solve(args) -> int:
    model = _load_model(args.model)
    config = SolverConfig(tolerance=args.tolerance, grid_points=args.grid, policy_cap=args.cap)
    start = time.perf_counter()
    result = solve_saddle(model, args.horizon, config)
    _print_result(result, time.perf_counter() - start)
    if args.plot_data:
        # one row per double-oracle round: the bracket as it tightens
        with open(args.plot_data, "w", encoding="utf-8") as fh:
            fh.write("round,lower,upper\n")
            for i, (low, up) in enumerate(result.history, 1):
                fh.write(f"{i},{format_decimal(low)},{format_decimal(up)}\n")
    if args.policies:
        print("# agent policy")
        sys.stdout.write(serialize_policy(result.agent_policy))
        print("# nature policy")
        sys.stdout.write(serialize_policy(result.nature_policy))
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.id is not None and args.id not in BENCHMARK_IDS:
        raise InputError(f"unknown benchmark {args.id!r}; choose from {', '.join(BENCHMARK_IDS)}")
    refs = references(args.id)
    if not refs:
        print(f"# {args.id} has no published optimal value to reproduce")
        return EXIT_OK
    config = SolverConfig(tolerance=args.tolerance)
    failures = 0
    print(f"{'benchmark':<18} {'stickiness':<12} {'order':<13} {'published':>12} {'policies':>12} {'solver':>12} {'gap':>10} {'time':>7}  status")
    for ref in refs:
        model = ref.model()
        agent, nature = ref.policies(model)
        evaluated = value_fh(model, agent, nature, ref.horizon)
        start = time.perf_counter()
        result = solve_saddle(model, ref.horizon, config)
        seconds = time.perf_counter() - start
        inside = result.lower_value - config.tolerance <= ref.value <= result.upper_value + config.tolerance
        exact = result.gap == 0 and result.lower_value == ref.value
        ok = evaluated == ref.value and inside and result.gap <= config.tolerance and (exact or not ref.exact_solve)
        failures += not ok
        print(
            f"{ref.benchmark:<18} {ref.stickiness.value:<12} {ref.play_order.value:<13} "
            f"{format_rational(ref.value):>12} {format_rational(evaluated):>12} {format_rational(result.value):>12} "
            f"{format_decimal(result.gap, 4):>10} {seconds:>6.2f}s  {'PASS' if ok else 'FAIL'}"
        )
    return EXIT_OK if failures == 0 else EXIT_VIOLATION


def cmd_export(args) -> int:
    if args.id not in BENCHMARK_IDS:
        raise InputError(f"unknown benchmark {args.id!r}; choose from {', '.join(BENCHMARK_IDS)}")
    model = build_benchmark(args.id, args.stickiness, args.order)
    sys.stdout.write(serialize_model(model))
    if args.policies:
        for ref in references(args.id):
            if ref.stickiness.value == model.stickiness.kind.value and ref.play_order is model.play_order:
                agent, nature = ref.policies(model)
                for name, policy in (("agent", agent), ("nature", nature)):
                    with open(f"{args.policies}.{name}", "w", encoding="utf-8") as fh:
                        fh.write(serialize_policy(policy))
                break
        else:
            raise InputError("no reference policies for this variant")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="artifact", description="Robust POMDP evaluation and saddle-point solving.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a model document")
    p.add_argument("model")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("transform", help="build the reachable POSG fragment")
    p.add_argument("model")
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--dump", action="store_true", help="print the fragment")
    p.add_argument("--grid", type=int, default=0, help="also expand nature moves on a grid with this many points per variable")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("evaluate", help="exact finite-horizon value of a policy pair")
    p.add_argument("model")
    p.add_argument("--agent", required=True)
    p.add_argument("--nature", required=True)
    p.add_argument("--horizon", type=int, required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("solve", help="saddle-point search")
    p.add_argument("model")
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--tolerance", type=_rational_arg, default=SolverConfig.tolerance)
    p.add_argument("--grid", type=int, default=SolverConfig.grid_points)
    p.add_argument("--cap", type=int, default=SolverConfig.policy_cap, help="maximum number of deterministic agent policies")
    p.add_argument("--policies", action="store_true", help="also print the returned policies")
    p.add_argument("--plot-data", metavar="FILE", help="write the bracket per round as CSV")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="reproduce the published optimal values")
    p.add_argument("--id", choices=None)
    p.add_argument("--tolerance", type=_rational_arg, default=SolverConfig.tolerance)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("export", help="write a benchmark model document to stdout")
    p.add_argument("id")
    p.add_argument("--stickiness", choices=[k.value for k in StickinessKind if k is not StickinessKind.CUSTOM])
    p.add_argument("--order", choices=[o.value for o in PlayOrder])
    p.add_argument("--policies", metavar="PREFIX", help="also write the reference policies to PREFIX.agent / PREFIX.nature")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CapacityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except ModelValidationError as exc:
        print(f"error: invalid model: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    except (InputError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
