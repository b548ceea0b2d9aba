"""Command-line front end: ``tvdist {exact,estimate,count,gen}``.

Every command prints one JSON report on stdout.  Exit codes: 0 ok,
2 bad input, 3 enumeration cap exceeded, 4 half-case preconditions
violated, 5 method inapplicable.
"""

from __future__ import annotations

import argparse
import json
import os
import secrets
import sys
import time
from fractions import Fraction
from pathlib import Path
from typing import Any, Sequence

from . import __version__, fpras, oracle, reductions, twoterm
from .instances import (
    EstimatorParams,
    ParseError,
    ProductDistribution,
    TvInstance,
    dump_instance,
    flip_coordinates,
    format_rational,
    load_instance,
    normalize,
    parse_rational,
    validate_halfcase,
)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_CAP = 3
EXIT_PRECONDITION = 4
EXIT_INAPPLICABLE = 5

METHODS = ("auto", "half", "uniform", "distinct-q")


class CliError(Exception):
    def __init__(self, code: int, message: str, detail: Any = None):
        super().__init__(message)
        self.code = code
        self.detail = detail


def _threads(arg: int | None) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("TVDIST_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise CliError(EXIT_PARSE, f"TVDIST_THREADS={env!r} is not an integer") from None
    return os.cpu_count() or 1


def _seed(arg: int | None) -> int:
    return secrets.randbits(64) if arg is None else arg


def _rational(text: str) -> Fraction:
    try:
        return parse_rational(text)
    except ParseError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _grid(text: str) -> float | str:
    if text == "auto":
        return text
    try:
        g = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("grid must be 'auto' or a number >= 1") from None
    if g < 1:
        raise argparse.ArgumentTypeError("grid must be >= 1")
    return g


def _load(path: str) -> TvInstance:
    try:
        return load_instance(path)
    except ParseError as exc:
        raise CliError(EXIT_PARSE, str(exc)) from None
    except OSError as exc:
        raise CliError(EXIT_PARSE, f"cannot read {path}: {exc.strerror}") from None


def _params(args) -> EstimatorParams:
    try:
        return EstimatorParams(args.epsilon, args.delta, args.seed)
    except ValueError as exc:
        raise CliError(EXIT_PARSE, str(exc)) from None


# -- commands ------------------------------------------------------------


def cmd_exact(args) -> dict[str, Any]:
    inst = _load(args.file)
    try:
        tv = oracle.exact_tv(inst, cap=args.cap)
    except oracle.CapExceeded as exc:
        raise CliError(EXIT_CAP, str(exc)) from None
    return {
        "params": {"file": args.file, "cap": args.cap, "n": inst.n},
        "result": format_rational(tv),
        "decimal": float(tv),
    }


def _is_uniform_q(inst: TvInstance) -> bool:
    return all(v == Fraction(1, 2) for v in inst.q)


def resolve_method(inst: TvInstance, method: str, k_cap: int) -> tuple[str, TvInstance]:
    """Pick the estimator for ``inst`` and return the (possibly flipped) instance.

    Raises CliError with exit code 4 or 5 when the requested method cannot run.
    """
    if method == "uniform":
        if not _is_uniform_q(inst):
            raise CliError(EXIT_INAPPLICABLE, "uniform method needs q_i = 1/2 for every coordinate")
        return method, inst
    if method == "distinct-q":
        k = len(set(normalize(inst)[0].q))
        if k > k_cap:
            raise CliError(EXIT_INAPPLICABLE, f"{k} distinct q values exceed the cap {k_cap}")
        return method, inst
    report = validate_halfcase(inst)
    if method == "half":
        if not report.ok:
            raise CliError(EXIT_PRECONDITION, "half-case preconditions violated", report.to_json())
        return method, inst
    if _is_uniform_q(inst):
        return "uniform", inst
    if report.ok:
        return "half", inst
    if report.repairable:
        return "half", flip_coordinates(inst, report.flip_mask)
    if len(set(normalize(inst)[0].q)) <= k_cap:
        return "distinct-q", inst
    raise CliError(
        EXIT_INAPPLICABLE,
        "no estimator applies: half-case bounds fail and q has too many distinct values",
        report.to_json(),
    )


def cmd_estimate(args) -> dict[str, Any]:
    inst = _load(args.file)
    params = _params(args)
    method, work = resolve_method(inst, args.method, args.k_cap)
    kw = dict(budget=args.budget, grid_factor=args.grid, threads=args.threads, backend=args.backend)
    try:
        if method == "uniform":
            est = fpras.estimate_tv_uniform(work.p, params, **kw)
        elif method == "half":
            est = fpras.estimate_tv_halfcase(work, params, **kw)
        else:
            est = fpras.estimate_tv_distinct_q(work, params, k_cap=args.k_cap, **kw)
    except fpras.PreconditionError as exc:
        raise CliError(EXIT_PRECONDITION, str(exc), exc.report.to_json()) from None
    except fpras.MethodInapplicable as exc:
        raise CliError(EXIT_INAPPLICABLE, str(exc)) from None
    body = est.to_json(include_layers=not args.no_layers)
    return {
        "params": {
            "file": args.file,
            "method": args.method,
            "resolved_method": method,
            "epsilon": format_rational(params.epsilon),
            "delta": format_rational(params.delta),
            "budget": args.budget,
            "grid": args.grid,
            "k_cap": args.k_cap,
            "n": inst.n,
        },
        "result": est.value,
        "estimate": body,
    }


def _marginals(args) -> list[Fraction]:
    if args.file:
        try:
            doc = json.loads(Path(args.file).read_text(encoding="utf-8"))
            return [parse_rational(v) for v in doc["p"]]
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise CliError(EXIT_PARSE, f"cannot read marginals from {args.file}: {exc}") from None
    if args.p is None:
        raise CliError(EXIT_PARSE, "pmf-equals needs --p or a file")
    return list(args.p)


def cmd_count(args) -> dict[str, Any]:
    params: dict[str, Any] = {"what": args.what, "cap": args.cap}
    try:
        if args.what == "pmf-equals":
            if args.value is None:
                raise CliError(EXIT_PARSE, "pmf-equals needs --value")
            marg = _marginals(args)
            d = ProductDistribution(marg)
            params.update(p=[format_rational(v) for v in marg], value=format_rational(args.value))
            return {"params": params, "result": oracle.count_pmf_equals(d, args.value, cap=args.cap), "exact": True}
        if args.what == "subset-sum":
            if args.weights is None or args.target is None:
                raise CliError(EXIT_PARSE, "subset-sum needs --weights and --target")
            if any(not float(w).is_integer() for w in args.weights):
                raise CliError(EXIT_PARSE, "subset-sum weights must be integers")
            inst = oracle.SubsetSumInstance([int(w) for w in args.weights], args.target)
            params.update(weights=list(inst.weights), target=inst.target)
            return {"params": params, "result": oracle.count_subset_sum(inst, cap=args.cap), "exact": True}
        if args.weights is None or args.capacity is None:
            raise CliError(EXIT_PARSE, "knapsack needs --weights and --capacity")
        w = [float(v) for v in args.weights]
        est_params = _params(args)
        est = twoterm.count_knapsack(
            w, float(args.capacity), float(est_params.epsilon), float(est_params.delta), est_params.seed,
            budget=args.budget, grid_factor=args.grid,
        )
        params.update(
            weights=w, capacity=float(args.capacity), epsilon=format_rational(est_params.epsilon),
            delta=format_rational(est_params.delta),
        )
        return {"params": params, "result": est.value, "exact": False, "estimate": est.to_json()}
    except oracle.CapExceeded as exc:
        raise CliError(EXIT_CAP, str(exc)) from None
    except ValueError as exc:
        raise CliError(EXIT_PARSE, str(exc)) from None


def cmd_gen(args) -> dict[str, Any]:
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(EXIT_PARSE, f"cannot create {out}: {exc.strerror}") from None
    params: dict[str, Any] = {"out_dir": str(out), "beta_method": args.beta_method}
    ss = None
    try:
        if args.from_subset_sum is not None:
            if args.target is None:
                raise CliError(EXIT_PARSE, "--from-subset-sum needs --target")
            ss = oracle.SubsetSumInstance(args.from_subset_sum, args.target)
            p, v = reductions.subset_sum_to_pmf_equals(ss)
            params.update(weights=list(ss.weights), target=ss.target)
        else:
            if args.value is None:
                raise CliError(EXIT_PARSE, "--pmf-equals-bundle needs --value")
            args.p = None
            args.file = args.pmf_equals_bundle
            p, v = ProductDistribution(_marginals(args)), args.value
        params.update(n=p.n)
        method = args.beta_method
        if method == "auto":
            method = "exact" if p.n <= args.cap else "precision"
        bundle = reductions.pmf_equals_to_tv_instances(p, v, method=method)
    except oracle.CapExceeded as exc:
        raise CliError(EXIT_CAP, str(exc)) from None
    except ValueError as exc:
        raise CliError(EXIT_PARSE, str(exc)) from None
    meta = bundle.metadata()
    files = {
        "pmf": str(out / "pmf_equals.json"),
        "hat": str(out / "hat.json"),
        "prime": str(out / "prime.json"),
    }
    Path(files["pmf"]).write_text(
        json.dumps({"p": [format_rational(a) for a in p], "v": format_rational(v)}, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    dump_instance(bundle.hat, files["hat"], metadata=meta)
    dump_instance(bundle.prime, files["prime"], metadata=meta)
    report: dict[str, Any] = {
        "params": params,
        "result": {
            "p": [format_rational(a) for a in p],
            "v": format_rational(v),
            **meta,
        },
        "files": files,
    }
    if bundle.prime.n <= args.cap:
        recovered = reductions.recover_from_oracle(bundle, cap=args.cap)
        check = {"recovered": recovered, "pmf_equals": oracle.count_pmf_equals(p, v, cap=args.cap)}
        if ss is not None:
            check["subset_sum"] = oracle.count_subset_sum(ss, cap=args.cap)
        check["ok"] = len(set(check.values())) == 1
        report["recovery_check"] = check
    return report


# -- parser --------------------------------------------------------------


def _add_estimation(sp: argparse.ArgumentParser, eps: str = "1/10") -> None:
    sp.add_argument("--epsilon", type=_rational, default=_rational(eps))
    sp.add_argument("--delta", type=_rational, default=_rational("1/20"))
    sp.add_argument("--seed", type=int, default=None, help="64-bit seed (default: OS entropy, echoed)")
    sp.add_argument("--budget", choices=("adaptive", "chernoff"), default="adaptive")
    sp.add_argument("--grid", type=_grid, default="auto", help="rounding grid factor or 'auto'")


def build_parser() -> argparse.ArgumentParser:
    def common(default: Any) -> argparse.ArgumentParser:
        # accepted before or after the subcommand
        g = argparse.ArgumentParser(add_help=False)
        g.add_argument("--threads", type=int, default=default(None), help="worker threads (default: TVDIST_THREADS or all cores)")
        g.add_argument("--backend", choices=("compiled", "python"), default=default(None))
        g.add_argument("--compact", action="store_true", default=default(False), help="single-line JSON")
        return g

    ap = argparse.ArgumentParser(
        prog="tvdist",
        description="Total variation distance between Bernoulli products.",
        parents=[common(lambda v: v)],
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    shared = common(lambda v: argparse.SUPPRESS)

    def add(name: str, **kw: Any) -> argparse.ArgumentParser:
        return sub.add_parser(name, parents=[shared], **kw)

    sp = add("exact", help="exact TV by enumeration")
    sp.add_argument("file")
    sp.add_argument("--cap", type=int, default=oracle.DEFAULT_CAP)
    sp.set_defaults(func=cmd_exact)

    sp = add("estimate", help="randomized (1 +- eps) TV estimate")
    sp.add_argument("file")
    sp.add_argument("--method", choices=METHODS, default="auto")
    sp.add_argument("--k-cap", type=int, default=fpras.DISTINCT_Q_CAP)
    sp.add_argument("--no-layers", action="store_true", help="omit per-layer diagnostics")
    _add_estimation(sp)
    sp.set_defaults(func=cmd_estimate)

    sp = add("count", help="solution counts for the underlying counting problems")
    sp.add_argument("file", nargs="?", help="JSON with a 'p' array (pmf-equals)")
    sp.add_argument("--what", choices=("pmf-equals", "subset-sum", "knapsack"), required=True)
    sp.add_argument("--p", type=_rational, nargs="+")
    sp.add_argument("--value", type=_rational)
    sp.add_argument("--weights", nargs="+", type=float)
    sp.add_argument("--target", type=int)
    sp.add_argument("--capacity", type=float)
    sp.add_argument("--cap", type=int, default=oracle.DEFAULT_CAP)
    _add_estimation(sp)
    sp.set_defaults(func=cmd_count)

    sp = add("gen", help="emit reduction instances")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--from-subset-sum", type=int, nargs="+", metavar="A")
    src.add_argument("--pmf-equals-bundle", metavar="FILE")
    sp.add_argument("--target", type=int)
    sp.add_argument("--value", type=_rational)
    sp.add_argument("--beta-method", choices=("auto", "exact", "precision"), default="auto")
    sp.add_argument("--out-dir", default=".")
    sp.add_argument("--cap", type=int, default=oracle.DEFAULT_CAP)
    sp.set_defaults(func=cmd_gen)
    return ap


def _finish(report: dict[str, Any], compact: bool) -> str:
    return json.dumps(report, sort_keys=True, separators=(",", ":") if compact else None, indent=None if compact else 2)


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code not in (0, None) else 0
    t0 = time.perf_counter()
    report: dict[str, Any] = {"command": argv, "version": __version__}
    if hasattr(args, "seed"):
        args.seed = _seed(args.seed)
        if args.command != "count" or args.what == "knapsack":
            report["seed"] = args.seed
    code = EXIT_OK
    try:
        args.threads = _threads(args.threads)
        if args.backend and args.backend == "compiled":
            from . import _backend

            if "compiled" not in _backend.available():
                raise CliError(EXIT_INAPPLICABLE, "compiled kernel is not available")
        report.update(args.func(args))
    except CliError as exc:
        code = exc.code
        report["error"] = {"code": exc.code, "message": str(exc)}
        if exc.detail is not None:
            report["error"]["detail"] = exc.detail
    report["elapsed_ms"] = round((time.perf_counter() - t0) * 1000.0, 3)
    print(_finish(report, args.compact))
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
