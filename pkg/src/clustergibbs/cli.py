"""Command-line entry point: ``clustergibbs <command> [options]``.

Exit codes: 0 ok, 1 verification failure, 2 usage or validation error,
3 convergence guarantee void under the ``error`` policy.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
import warnings
from typing import Sequence

from . import __version__
from .expansion import ClusterExpansion, GuaranteeVoidError, as_observable, choose_order
from .model import ModelError, derived_constants, load
from .pauli import PauliParseError, ProjectorProduct, basis_axis
from .sampler import ScheduleError, StaticSchedule, load_schedule, sample_many
from .suite import BUNDLED, bundled_path

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_VOID = 0, 1, 2, 3

SCHEMA_VERSION = 1
SCHEMAS = {
    "version": SCHEMA_VERSION,
    "sample": {"index": "int", "seed": "int", "bits": "str (outcomes in measurement order)",
               "qubits": "[int] (measurement order)", "axes": "[[float, float, float]]",
               "p_prime": "[float] (probability of outcome 0 at each step)", "tail": "[float]", "order": "int"},
    "sample_summary": {"summary": {"count": "int", "order": "int", "beta": "float", "beta_star": "float",
                                   "dd": "int", "below_threshold": "bool", "max_tail": "float"}},
    "gamma": {"j": "int", "m": "int", "gamma": "float", "bound": "float (m beta_star^-m)"},
    "clusters": {"j": "int", "m": "int", "clusters": "[[[term_index, multiplicity], ...], ...]"},
    "marginal": {"j": "int", "axis": "[float, float, float]", "p_prime": "float", "raw": "float",
                 "tail": "float", "order": "int", "clamped": "bool", "gammas": "[float]"},
    "expect": {"observable": "str", "value": "float", "tail": "float", "order": "int"},
    "correlate": {"i": "int", "j": "int", "op_i": "[float]", "op_j": "[float]", "value": "float",
                  "tail": "float", "order": "int"},
    "verify": {"criterion": "int", "name": "str", "passed": "bool", "measured": "float", "bound": "float",
               "seconds": "float", "detail": "object"},
    "bench": "CSV with header N,mean_seconds,fitted_exponent",
}


class UsageError(Exception):
    pass


def _model_path(text: str) -> str:
    return str(bundled_path(text)) if text in BUNDLED else text


def _plain(o):
    # numpy scalars and arrays
    if hasattr(o, "tolist"):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _dump(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), default=_plain)


def _parse_axis(text: str):
    text = text.strip()
    if text.upper() in ("X", "Y", "Z"):
        return basis_axis(text)
    parts = text.split(",")
    if len(parts) != 3:
        raise UsageError(f"axis must be X, Y, Z or 'x,y,z', got {text!r}")
    return basis_axis([float(p) for p in parts])


def _parse_vector(text: str):
    parts = text.split(",")
    if len(parts) != 3:
        raise UsageError(f"operator must be 'x,y,z', got {text!r}")
    return [float(p) for p in parts]


def _parse_given(items: Sequence[str]) -> ProjectorProduct:
    """``qubit:basis:outcome`` triples, basis X/Y/Z or 'x,y,z'."""
    E = ProjectorProduct()
    for item in items or ():
        parts = item.split(":")
        if len(parts) != 3:
            raise UsageError(f"--given expects qubit:basis:outcome, got {item!r}")
        q, axis, outcome = int(parts[0]), _parse_axis(parts[1]), int(parts[2])
        E = E.with_outcome(q, axis, outcome)
    return E


def _parse_observable(text: str):
    if text.lstrip().startswith("{"):
        return as_observable(json.loads(text))
    return as_observable(text)


class _Setup:
    def __init__(self, args, policy_default: str):
        if args.beta is not None and not args.beta > 0:
            raise UsageError("--beta must be positive")
        if args.order is not None and args.alpha is not None:
            raise UsageError("give either --order or --alpha, not both")
        if args.order is not None and args.order < 1:
            raise UsageError("--order must be >= 1")
        self.strict = args.dd_mode == "strict"
        self.spec = load(_model_path(args.model), strict=self.strict)
        self.constants = derived_constants(self.spec, self.strict)
        self.policy = args.beta_policy or policy_default
        self.engine = ClusterExpansion(self.spec, strict=self.strict, beta_policy=self.policy,
                                       constants=self.constants)
        self.beta = args.beta if args.beta is not None else self.constants.beta_star / 2
        if self.beta >= self.constants.beta_star and self.policy == "error":
            raise GuaranteeVoidError(
                f"beta = {self.beta:g} >= beta_star = {self.constants.beta_star:g}; guarantee void")
        if args.order is not None:
            self.order = args.order
        else:
            alpha = args.alpha if args.alpha is not None else 2.0
            if self.beta >= self.constants.beta_star:
                raise GuaranteeVoidError("automatic order selection needs beta < beta_star; pass --order")
            self.order = choose_order(self.beta, self.constants.beta_star, self.spec.num_qubits, alpha)


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("CLUSTERGIBBS_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"CLUSTERGIBBS_SEED must be an integer, got {env!r}") from None


@contextlib.contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            yield fh


# -- commands ------------------------------------------------------------------------


def cmd_sample(args) -> int:
    s = _Setup(args, "warn")
    if args.count < 0:
        raise UsageError("--count must be non-negative")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    sched = load_schedule(args.schedule) if args.schedule else StaticSchedule.z_basis(s.spec.num_qubits)
    sched.validate(s.spec.num_qubits)
    seed = _seed(args)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore" if args.quiet else "default")
        records = sample_many(s.engine, s.beta, sched, s.order, seed, args.count, jobs=args.jobs)
    with _output(args.out) as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")
    summary = {
        "summary": {
            "count": args.count,
            "order": s.order,
            "beta": s.beta,
            "beta_star": s.constants.beta_star,
            "dd": s.constants.dd,
            "below_threshold": s.beta < s.constants.beta_star,
            "max_tail": max((r.max_tail for r in records), default=0.0),
        }
    }
    if not args.quiet:
        print(_dump(summary), file=sys.stderr)
    return EXIT_OK


def cmd_gamma(args) -> int:
    s = _Setup(args, "error")
    E = _parse_given(args.given)
    axis = _parse_axis(args.axis)
    bs = s.constants.beta_star
    with _output(args.out) as fh:
        gs = s.engine.gammas(args.qubit, E, s.order, axis)
        for m, g in enumerate(gs, start=1):
            fh.write(_dump({"j": args.qubit, "m": m, "gamma": float(g), "bound": m * bs ** (-m)}) + "\n")
        if args.dump_clusters:
            for m in range(1, s.order + 1):
                clusters = [W.to_json() for W in s.engine.enumerator.connected(args.qubit, m)]
                fh.write(_dump({"j": args.qubit, "m": m, "clusters": clusters}) + "\n")
    return EXIT_OK


def cmd_marginal(args) -> int:
    s = _Setup(args, "error")
    E = _parse_given(args.given)
    axis = _parse_axis(args.axis)
    est = s.engine.marginal(E, args.qubit, axis, s.beta, s.order)
    with _output(args.out) as fh:
        fh.write(_dump({
            "j": args.qubit, "axis": list(axis), "p_prime": float(est.p_prime), "raw": float(est.raw),
            "tail": est.tail, "order": est.order, "clamped": bool(est.clamped),
            "gammas": [float(g) for g in est.gammas],
        }) + "\n")
    return EXIT_OK


def cmd_expect(args) -> int:
    s = _Setup(args, "error")
    E = _parse_given(args.given)
    with _output(args.out) as fh:
        for text in args.observable:
            est = s.engine.observable_expectation(_parse_observable(text), s.beta, s.order, E,
                                                  max_support=args.max_support)
            fh.write(_dump({"observable": text, "value": float(est.value), "tail": est.tail,
                            "order": est.order}) + "\n")
    return EXIT_OK


def cmd_correlate(args) -> int:
    s = _Setup(args, "error")
    E = _parse_given(args.given)
    op_i, op_j = _parse_vector(args.op_i), _parse_vector(args.op_j)
    pairs = [(args.i, j) for j in args.j]
    with _output(args.out) as fh:
        for i, j in pairs:
            est = s.engine.correlation(E, i, j, op_i, op_j, s.beta, s.order)
            fh.write(_dump({"i": i, "j": j, "op_i": op_i, "op_j": op_j, "value": float(est.value),
                            "tail": est.tail, "order": est.order}) + "\n")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import CRITERIA, run

    numbers = args.criteria or sorted(CRITERIA)
    bad = [k for k in numbers if k not in CRITERIA]
    if bad:
        raise UsageError(f"unknown criteria {bad}; choose from {sorted(CRITERIA)}")
    failed = 0
    with _output(args.out) as fh:
        for res in run(numbers, quick=args.quick, seed=args.seed or 0):
            failed += not res.passed
            row = {"criterion": res.number, "name": res.name, "passed": res.passed,
                   "measured": res.measured, "bound": res.bound, "seconds": round(res.seconds, 3),
                   "detail": res.detail}
            fh.write(_dump(row) + "\n")
            fh.flush()
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_bench(args) -> int:
    from .verify import bench

    rows, slope = bench(args.sizes, args.order or 3, args.repeats, args.seed or 0)
    with _output(args.out) as fh:
        fh.write("N,mean_seconds,fitted_exponent\n")
        for n, secs in rows:
            fh.write(f"{n},{secs:.6g},{slope:.4f}\n")
    return EXIT_OK


# -- parser --------------------------------------------------------------------------


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="clustergibbs", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--schema", action="store_true", help="print the output schemas and exit")
    sub = p.add_subparsers(dest="command")

    def common(sp, model=True):
        if model:
            sp.add_argument("--model", required=True, help=f"model JSON file or one of {', '.join(BUNDLED)}")
        sp.add_argument("--beta", type=float, default=None, help="inverse temperature (default beta_star/2)")
        sp.add_argument("--order", type=int, default=None, help="truncation order M")
        sp.add_argument("--alpha", type=float, default=None, help="pick M so the tail is <= N^-alpha (default 2)")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--dd-mode", choices=("strict", "empirical"), default="strict")
        sp.add_argument("--beta-policy", choices=("error", "warn"), default=None)
        sp.add_argument("--out", default=None, help="output path (default stdout)")

    sp = sub.add_parser("sample", help="draw outcome strings")
    common(sp)
    sp.add_argument("--schedule", default=None, help="schedule JSON (default: Z basis, qubit order)")
    sp.add_argument("--count", type=int, default=1)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--quiet", action="store_true", help="suppress the summary line and warnings")
    sp.set_defaults(func=cmd_sample)

    for name, func in (("gamma", cmd_gamma), ("marginal", cmd_marginal)):
        sp = sub.add_parser(name, help=f"{name} at one qubit")
        common(sp)
        sp.add_argument("--qubit", type=int, required=True)
        sp.add_argument("--axis", default="Z")
        sp.add_argument("--given", action="append", default=[], metavar="Q:BASIS:OUTCOME")
        if name == "gamma":
            sp.add_argument("--dump-clusters", action="store_true")
        sp.set_defaults(func=func)

    sp = sub.add_parser("expect", help="local expectation values")
    common(sp)
    sp.add_argument("--observable", action="append", required=True,
                    help="Pauli string like 'Z0 Z1' or JSON object {pauli: coeff}")
    sp.add_argument("--given", action="append", default=[], metavar="Q:BASIS:OUTCOME")
    sp.add_argument("--max-support", type=int, default=6)
    sp.set_defaults(func=cmd_expect)

    sp = sub.add_parser("correlate", help="connected two-point correlations")
    common(sp)
    sp.add_argument("--i", type=int, required=True)
    sp.add_argument("--j", type=_int_list, required=True, help="comma-separated partner qubits")
    sp.add_argument("--op-i", default="0,0,1")
    sp.add_argument("--op-j", default="0,0,1")
    sp.add_argument("--given", action="append", default=[], metavar="Q:BASIS:OUTCOME")
    sp.set_defaults(func=cmd_correlate)

    sp = sub.add_parser("verify", help="run the acceptance checks")
    sp.add_argument("--criteria", type=_int_list, default=None, help="comma-separated criterion numbers")
    sp.add_argument("--quick", action="store_true", help="reduced sizes")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("bench", help="runtime per sample versus N")
    sp.add_argument("--sizes", type=_int_list, default=[25, 50, 100, 200])
    sp.add_argument("--order", type=int, default=3)
    sp.add_argument("--repeats", type=int, default=5)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if args.schema:
        print(json.dumps(SCHEMAS, indent=2))
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except GuaranteeVoidError as exc:
        print(f"clustergibbs: {exc}", file=sys.stderr)
        return EXIT_VOID
    except (UsageError, ModelError, ScheduleError, PauliParseError, ValueError, OSError, KeyError) as exc:
        print(f"clustergibbs: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
