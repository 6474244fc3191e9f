"""Command-line front end.

Exit codes: 0 success, 1 validation or verification failure, 2 usage or
parse error, 3 refusal because a resource cap would be exceeded.
"""

from __future__ import annotations

import argparse
import sys
from fractions import Fraction

from . import __version__
from .embedding import embed
from .engine import (
    MODES,
    Caps,
    CompiledProtocol,
    compile_full,
    exact_protocol_distribution,
    resource_report,
    run_monte_carlo,
    success_probabilities,
    top_success_bound,
)
from .errors import NLBoxError, RationalizeError, ResourceCapError, ShapeError, SignalingError
from .fileformat import FormatError, dumps, read_json, system_from_dict, system_to_dict, write_json
from .model import chsh_value, tv_per_input, validate
from .reduction import plan_cascade
from .rng import SEED_MAX, to_fraction

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_CAP = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _frac(text: str) -> Fraction:
    try:
        return to_fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from exc
    if not 0 <= v <= SEED_MAX:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from exc
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _fmt(p: Fraction) -> str:
    return f"{p.numerator}/{p.denominator}"


def _table(headers, rows) -> str:
    cells = [list(map(str, headers))] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Loading


def _load_system(args):
    doc = read_json(args.file)
    if isinstance(doc, dict) and doc.get("kind") == "protocol":
        doc = doc.get("system")
    return system_from_dict(doc, rationalize_max=args.rationalize, tol=args.tol)


def _load_protocol(args) -> CompiledProtocol:
    """A protocol file, or a system file compiled with --delta / --mode."""
    doc = read_json(args.file)
    caps = Caps(max_order=args.max_order)
    if isinstance(doc, dict) and doc.get("kind") == "protocol":
        P = system_from_dict(doc.get("system"))
        try:
            delta = Fraction(doc["delta"])
            mode = doc["mode"]
            seed = int(doc.get("seed", 0))
            rounds = tuple(doc["rounds"]) if "rounds" in doc else None
        except (KeyError, ValueError, TypeError) as exc:
            raise FormatError(f"malformed protocol document: {exc}") from exc
        if getattr(args, "delta", None) is not None and args.delta != delta:
            raise UsageError("--delta conflicts with the protocol file")
        if getattr(args, "mode", None) is not None and args.mode != mode:
            raise UsageError("--mode conflicts with the protocol file")
        return compile_full(P, delta, mode, seed=seed, rounds=rounds, caps=caps)
    if getattr(args, "delta", None) is None:
        raise UsageError("a system file needs --delta (or pass a compiled protocol file)")
    P = system_from_dict(doc, rationalize_max=args.rationalize, tol=args.tol)
    return compile_full(P, args.delta, args.mode or "ideal-d2", seed=getattr(args, "seed", None) or 0, caps=caps)


def protocol_to_dict(protocol: CompiledProtocol) -> dict:
    return {
        "kind": "protocol",
        "system": system_to_dict(protocol.source),
        "delta": str(protocol.delta),
        "mode": protocol.mode,
        "seed": protocol.seed,
        "order": protocol.order,
        "rounds": list(protocol.rounds),
        "resources": resource_report(protocol),
    }


def _emit(args, doc: dict) -> None:
    if args.output:
        write_json(args.output, doc)


# ---------------------------------------------------------------------------
# Commands


def cmd_validate(args) -> int:
    P = _load_system(args)
    rep = validate(P)
    normalized = all(rep.normalized.values())
    print(f"shape: x={P.x_size} y={P.y_size} a={P.a_size} b={P.b_size}")
    print(f"normalized: {str(normalized).lower()}")
    print(f"nonnegative: {str(rep.nonnegative).lower()}")
    print(f"non-signaling: {str(rep.non_signaling).lower()}")
    print(f"worst marginal violation: {rep.worst_violation}")
    if rep.offending_indices:
        print(f"offending: {list(rep.offending_indices)[:10]}")
    _emit(args, {
        "kind": "validation",
        "normalized": normalized,
        "nonnegative": rep.nonnegative,
        "non_signaling": rep.non_signaling,
        "worst_violation": str(rep.worst_violation),
        "valid": rep.valid,
    })
    return EXIT_OK if rep.valid else EXIT_FAIL


def cmd_chsh(args) -> int:
    P = _load_system(args)
    v = chsh_value(P)
    print(_fmt(v))
    _emit(args, {"kind": "chsh", "value": _fmt(v), "value_float": float(v)})
    return EXIT_OK


def cmd_embed(args) -> int:
    P = _load_system(args)
    if not P.report.valid:
        print("error: system is not a valid non-signaling system", file=sys.stderr)
        return EXIT_FAIL
    emb = embed(P, max_order=args.max_order)
    d = emb.order
    print(f"order d = {d}")
    rows = []
    for x in range(P.x_size):
        for a, r in enumerate(emb.partitioning.alice[x]):
            rows.append(("alice", x, a, f"[{r.start}, {r.stop})"))
    for y in range(P.y_size):
        for b, r in enumerate(emb.partitioning.bob[y]):
            rows.append(("bob", y, b, f"[{r.start}, {r.stop})"))
    print(_table(("side", "input", "output", "block"), rows))
    t = emb.family.table()
    _emit(args, {
        "kind": "embedding",
        "order": d,
        "family": t.tolist(),
        "alice_blocks": [[[r.start, r.stop] for r in per] for per in emb.partitioning.alice],
        "bob_blocks": [[[r.start, r.stop] for r in per] for per in emb.partitioning.bob],
    })
    return EXIT_OK


def cmd_plan(args) -> int:
    plan = plan_cascade(args.d, args.delta)
    print(f"order {plan.order}, total error {float(plan.delta_total):g}")
    rows = [(lv.order, lv.rounds, f"{lv.eps:.6f}", f"{lv.delta:.6g}", f"{lv.child_delta:.6g}") for lv in plan.levels]
    if rows:
        print(_table(("level d", "rounds n", "eps", "delta", "child delta"), rows))
    print(f"order-2 instances per use: {plan.total_d2}")
    _emit(args, {
        "kind": "plan",
        "order": plan.order,
        "delta_total": str(plan.delta_total),
        "levels": [
            {"order": lv.order, "rounds": lv.rounds, "eps": lv.eps, "delta": lv.delta, "child_delta": lv.child_delta}
            for lv in plan.levels
        ],
        "total_d2": plan.total_d2,
    })
    return EXIT_OK


def _print_resources(res: dict) -> None:
    print(f"order d = {res['order']}, mode {res['mode']}, delta {res['delta']}")
    if res["levels"]:
        print(_table(
            ("level d", "rounds", "delta", "child delta"),
            [(lv["order"], lv["rounds"], f"{lv['delta']:.6g}", f"{lv['child_delta']:.6g}") for lv in res["levels"]],
        ))
    nlb = res["nlb_per_trial"]
    note = " (estimate: ideal order-2 boxes, one box each)" if res["nlb_count_is_estimate"] else ""
    print(f"order-2 instances per trial: {res['d2_per_trial']}")
    print(f"non-local boxes per trial: {nlb}{note}")
    print(f"shared biased bits per trial: {res['shared_biased_bits_per_trial']}")
    print(f"shared mask bits per trial: {res['shared_mask_bits_per_trial']}")


def cmd_compile(args) -> int:
    P = _load_system(args)
    if not P.report.valid:
        print("error: system is not a valid non-signaling system", file=sys.stderr)
        return EXIT_FAIL
    protocol = compile_full(P, args.delta, args.mode or "ideal-d2", seed=args.seed or 0, caps=Caps(max_order=args.max_order))
    _print_resources(resource_report(protocol))
    _emit(args, protocol_to_dict(protocol))
    return EXIT_OK


def cmd_report(args) -> int:
    protocol = _load_protocol(args)
    res = resource_report(protocol)
    _print_resources(res)
    _emit(args, {"kind": "resources", **res})
    return EXIT_OK


def cmd_simulate(args) -> int:
    protocol = _load_protocol(args)
    rep = run_monte_carlo(protocol, args.trials, args.seed, child_noise=args.child_noise, threads=args.threads)
    rows = [
        (x, y, f"{float(rep.tv[(x, y)]):.6f}", f"{rep.std_error[(x, y)]:.6f}", f"{rep.threshold((x, y)):.6f}")
        for x, y in sorted(rep.tv)
    ]
    print(f"trials per input {rep.trials}, seed {rep.seed}, mode {rep.mode}")
    print(_table(("x", "y", "tv", "std err", "threshold"), rows))
    print(f"worst tv {float(rep.worst_tv):.6f} at {rep.worst_input}; target delta {float(rep.delta):g}")
    if rep.success_bound is not None:
        print(f"guaranteed success at top level: {rep.success_bound:.6f}")
    print("PASS" if rep.passed else "FAIL")
    print(f"wall clock {rep.wall_clock:.2f} s")
    _emit(args, rep.to_dict())
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_exact(args) -> int:
    protocol = _load_protocol(args)
    Q = exact_protocol_distribution(protocol, args.child_noise)
    tv = tv_per_input(Q, protocol.source)
    succ = success_probabilities(protocol, args.child_noise)
    worst = max(tv.values())
    bound = top_success_bound(protocol)
    rows = [(x, y, f"{float(tv[(x, y)]):.6g}", f"{float(succ[(x, y)]):.6g}") for x, y in sorted(tv)]
    print(_table(("x", "y", "tv", "success"), rows))
    print(f"worst tv {float(worst):.6g}; target delta {float(protocol.delta):g}")
    if bound is not None:
        print(f"guaranteed success at top level: {bound:.6g}")
    ok = worst <= protocol.delta
    print("PASS" if ok else "FAIL")
    _emit(args, {
        "kind": "exact-report",
        "distribution": system_to_dict(Q),
        "tv": {f"{x},{y}": str(v) for (x, y), v in tv.items()},
        "success": {f"{x},{y}": str(v) for (x, y), v in succ.items()},
        "worst_tv": str(worst),
        "delta": str(protocol.delta),
        "success_bound": bound,
        "passed": ok,
    })
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-o", "--output", help="write a machine-readable JSON document here")
    common.add_argument("--threads", type=_positive, default=1, help="maximum worker threads")
    common.add_argument("--max-order", type=_positive, default=Caps().max_order, help="refuse embeddings above this order")

    sysfile = argparse.ArgumentParser(add_help=False)
    sysfile.add_argument("file", help="system (or protocol) JSON file")
    sysfile.add_argument("--rationalize", type=_positive, metavar="M", help="accept float entries, rationalizing with denominators <= M")
    sysfile.add_argument("--tol", type=float, default=1e-6, help="entrywise tolerance for --rationalize")

    proto = argparse.ArgumentParser(add_help=False)
    proto.add_argument("--delta", type=_frac, help="error budget when FILE is a system file")
    proto.add_argument("--mode", choices=MODES, help="order-2 realization when FILE is a system file")

    p = argparse.ArgumentParser(prog="nlbox", description="Compile non-signaling systems into shared randomness and non-local boxes.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", parents=[common, sysfile], help="check normalization and non-signaling")
    s.set_defaults(func=cmd_validate)
    s = sub.add_parser("chsh", parents=[common, sysfile], help="CHSH winning probability of a binary system")
    s.set_defaults(func=cmd_chsh)
    s = sub.add_parser("embed", parents=[common, sysfile], help="embedding order and output blocks")
    s.set_defaults(func=cmd_embed)
    s = sub.add_parser("plan", parents=[common], help="round counts and budgets for an order")
    s.add_argument("--d", type=_positive, required=True)
    s.add_argument("--delta", type=_frac, required=True)
    s.set_defaults(func=cmd_plan)
    s = sub.add_parser("compile", parents=[common, sysfile], help="compile a system into a protocol")
    s.add_argument("--delta", type=_frac, required=True)
    s.add_argument("--mode", choices=MODES, default="ideal-d2")
    s.add_argument("--seed", type=_seed, default=0, help="default seed stored in the protocol")
    s.set_defaults(func=cmd_compile)
    s = sub.add_parser("simulate", parents=[common, sysfile, proto], help="Monte Carlo check against the target")
    s.add_argument("--trials", type=_positive, required=True, help="trials per input pair")
    s.add_argument("--seed", type=_seed, default=None, help="root seed (defaults to the protocol's)")
    s.add_argument("--child-noise", type=_frac, default=Fraction(0), help="flip probability at every order-2 box")
    s.set_defaults(func=cmd_simulate)
    s = sub.add_parser("exact", parents=[common, sysfile, proto], help="exact output law and distance to the target")
    s.add_argument("--child-noise", type=_frac, default=Fraction(0), help="flip probability at every order-2 box")
    s.set_defaults(func=cmd_exact)
    s = sub.add_parser("report", parents=[common, sysfile, proto], help="resource counts of a protocol")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ResourceCapError as exc:
        order = f" (order d = {exc.order})" if exc.order is not None else ""
        print(f"refused: {exc}{order}", file=sys.stderr)
        return EXIT_CAP
    except (SignalingError, RationalizeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (UsageError, FormatError, ShapeError, FileNotFoundError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NLBoxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
