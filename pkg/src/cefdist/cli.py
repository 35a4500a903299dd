"""
Command-line front end.

    cefdist dist --metric D --alpha 3 a.json b.json
    cefdist norm --alpha 2 a.json
    cefdist diversity --alpha 2 a.json
    cefdist validate a.json b.json --metrics M,D,L,CS --alpha 2-4
    cefdist bench --k 1-5 --alpha 2-8 --family gaussian

Exit codes: 0 success, 1 validation failure, 2 bad specification or usage,
3 exponent (or oracle method) not supported, 4 term budget or numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from . import expfam, minkdist, oracle
from .combinatorics import DEFAULT_TERM_CAP, TermBudgetError, binomial
from .expfam import Family, Kind
from .minkdist import DistanceKind, Metric, MixtureModel, UnsupportedExponentError
from .oracle import Method, OracleConfig
from .signedlog import CancellationError
from .specfile import SpecError, load_mixture

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_SPEC = 2
EXIT_UNSUPPORTED = 3
EXIT_NUMERIC = 4

MC_SIGMAS = 3.0
ABS_FLOOR = 1e-10


@dataclass
class ResultRecord:
    kind: str
    alpha: float
    value: float
    method: str
    stderr: float | None = None
    term_count: int | None = None
    wall_time_ms: float = 0.0
    warnings: list[str] = field(default_factory=list)


# ----------------------------------------------------------------------------
# output


def fmt(x: float) -> str:
    return format(x, ".17g")


def to_json(obj: Any) -> str:
    """JSON with every float written at 17 significant digits."""
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return fmt(x) if math.isfinite(x) else json.dumps(None)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {to_json(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(to_json(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _emit_record(rec: ResultRecord, output: str) -> None:
    d = asdict(rec)
    if output == "structured":
        print(to_json(d))
        return
    for key, value in d.items():
        if value is None or (key == "warnings" and not value):
            continue
        if isinstance(value, float):
            value = fmt(value)
        elif isinstance(value, list):
            value = "; ".join(value)
        print(f"{key}: {value}")


def _emit_table(header: Sequence[str], rows: list[dict], output: str, extra: dict | None = None) -> None:
    if output == "structured":
        print(to_json({**(extra or {}), "rows": rows}))
        return
    cells = [[(fmt(r[h]) if isinstance(r[h], float) else ("" if r[h] is None else str(r[h]))) for h in header]
             for r in rows]
    widths = [max(len(h), *(len(c[i]) for c in cells)) if cells else len(h) for i, h in enumerate(header)]
    print("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    for c in cells:
        print("  ".join(v.ljust(w) for v, w in zip(c, widths)))
    for k, v in (extra or {}).items():
        print(f"{k}: {v}")


def _warn(messages: list[str]) -> None:
    for msg in messages:
        print(f"warning: {msg}", file=sys.stderr)


# ----------------------------------------------------------------------------
# argument helpers


def parse_range(text: str, kind=int) -> list:
    """'2-5' -> [2, 3, 4, 5]; '2,4,6' -> [2, 4, 6]; mixing both is allowed."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1) if not part.startswith("-") else (part, part)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(kind(part))
    if not out:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return out


def _range_arg(text: str) -> list[int]:
    try:
        return parse_range(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer range {text!r}") from None


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _oracle_config(args, family: Family, method: str | None) -> OracleConfig:
    m = Method.parse(method) if method else Method.default_for(family)
    rel = args.rel_tol
    if m is Method.QUAD:
        # integrate well below the comparison tolerance
        rel = max(min(rel * 1e-3, 1e-10), 1e-14)
    return OracleConfig(m, samples=args.samples, seed=args.seed, rel_tol=rel,
                        workers=args.workers)


def _kind(metric: str, alpha: float | None) -> DistanceKind:
    return DistanceKind.of(metric, alpha)


# ----------------------------------------------------------------------------
# commands


def cmd_dist(args) -> int:
    m, m2 = load_mixture(args.spec_a), load_mixture(args.spec_b)
    kind = _kind(args.metric, args.alpha)
    t0 = time.perf_counter()
    if args.oracle:
        cfg = _oracle_config(args, m.family, args.oracle)
        est = oracle.oracle_distance(kind, m, m2, cfg)
        rec = ResultRecord(kind.metric.value, kind.alpha, est.value, cfg.method.value,
                           stderr=est.stderr if cfg.method is Method.MC else None)
    else:
        rule = kind.closed_form_rule()
        if rule:
            raise UnsupportedExponentError(f"{rule}; pass --oracle to integrate numerically")
        ev = minkdist.evaluate_distance(kind, m, m2, term_cap=args.term_cap, workers=args.workers)
        rec = ResultRecord(kind.metric.value, kind.alpha, ev.value, "closed-form",
                           term_count=ev.term_count, warnings=ev.warnings)
    rec.wall_time_ms = 1e3 * (time.perf_counter() - t0)
    _warn(rec.warnings)
    _emit_record(rec, args.output)
    return EXIT_OK


def cmd_norm(args) -> int:
    m = load_mixture(args.spec)
    t0 = time.perf_counter()
    if args.oracle:
        cfg = _oracle_config(args, m.family, args.oracle)
        est = oracle.oracle_norm(m, args.alpha, cfg)
        rec = ResultRecord("norm", args.alpha, est.value, cfg.method.value, stderr=est.stderr if cfg.method is Method.MC else None)
    else:
        if not float(args.alpha).is_integer():
            raise UnsupportedExponentError(
                f"closed-form norm requires an integer alpha, got {args.alpha}; pass --oracle")
        res = minkdist.lp_norm_details(m, int(args.alpha), term_cap=args.term_cap, workers=args.workers)
        rec = ResultRecord("norm", int(args.alpha), res.value, "closed-form", term_count=res.term_count)
    rec.wall_time_ms = 1e3 * (time.perf_counter() - t0)
    _emit_record(rec, args.output)
    return EXIT_OK


def cmd_diversity(args) -> int:
    m = load_mixture(args.spec)
    if not float(args.alpha).is_integer():
        raise UnsupportedExponentError(f"diversity closed form requires an integer alpha, got {args.alpha}")
    t0 = time.perf_counter()
    densities = [MixtureModel.single(m.family, theta) for theta in m.params]
    ev = minkdist.evaluate_diversity(densities, m.weights, int(args.alpha),
                                     term_cap=args.term_cap, workers=args.workers)
    rec = ResultRecord("diversity", int(args.alpha), ev.value, "closed-form", term_count=ev.term_count,
                       wall_time_ms=1e3 * (time.perf_counter() - t0))
    _emit_record(rec, args.output)
    return EXIT_OK


def _validation_kinds(metrics: Sequence[str], alphas: Sequence[int]) -> list[DistanceKind]:
    kinds = []
    for name in metrics:
        metric = Metric.parse(name)
        if metric is Metric.CS:
            kinds.append(DistanceKind(Metric.CS, 2))
            continue
        if metric is Metric.TV:
            raise UnsupportedExponentError("TV has no closed form to validate; use `dist --oracle`")
        for a in alphas:
            k = DistanceKind(metric, a)
            if k.closed_form_rule() is None:
                kinds.append(k)
    return list(dict.fromkeys(kinds))


def compare(closed: float, est: oracle.OracleEstimate, rel_tol: float, sigmas: float = MC_SIGMAS) -> tuple[bool, float | None]:
    """PASS rule shared by the CLI and the test-suite; returns (passed, stderr multiple)."""
    diff = abs(closed - est.value)
    if diff <= ABS_FLOOR:
        return True, (diff / est.stderr if est.stderr > 0 else None)
    if est.method is Method.MC:
        if est.stderr == 0:
            return False, None
        return diff <= sigmas * est.stderr, diff / est.stderr
    return diff <= rel_tol * max(abs(closed), abs(est.value)), None


def cmd_validate(args) -> int:
    m, m2 = load_mixture(args.spec_a), load_mixture(args.spec_b)
    cfg = _oracle_config(args, m.family, args.oracle)
    kinds = _validation_kinds(args.metrics.split(","), args.alpha)
    norm_alphas = sorted({int(k.alpha) for k in kinds if k.metric in (Metric.D, Metric.L)})
    estimates, norm_est = oracle.oracle_distances(kinds, m, m2, cfg, norm_alphas=norm_alphas)
    rows = []
    failures = 0
    items = [(str(k), k, e) for k, e in zip(kinds, estimates)]
    items += [(f"norm_{a}", a, e) for a, e in zip(norm_alphas, norm_est)]
    for label, what, est in items:
        if isinstance(what, DistanceKind):
            closed = minkdist.closed_form_distance(what, m, m2, term_cap=args.term_cap, workers=args.workers)
            alpha = what.alpha
        else:
            closed = minkdist.mixture_lp_norm(m, what, term_cap=args.term_cap, workers=args.workers)
            alpha = what
        ok, nsig = compare(closed, est, args.rel_tol)
        failures += not ok
        rows.append({"quantity": label.split("_")[0], "alpha": alpha, "closed_form": closed,
                     "oracle": est.value, "abs_diff": abs(closed - est.value),
                     "stderr": est.stderr if cfg.method is Method.MC else None,
                     "n_stderr": nsig, "status": "PASS" if ok else "FAIL"})
    header = ["quantity", "alpha", "closed_form", "oracle", "abs_diff", "stderr", "n_stderr", "status"]
    extra = {"method": cfg.method.value, "rel_tol": args.rel_tol}
    if cfg.method is Method.MC:
        extra.update(samples=cfg.samples, seed=cfg.seed)
    extra["result"] = "FAIL" if failures else "PASS"
    _emit_table(header, rows, args.output, extra)
    return EXIT_FAIL if failures else EXIT_OK


def random_mixture(family: Family, k: int, rng: np.random.Generator) -> MixtureModel:
    """A random normalized mixture with k components (benchmarks and tests)."""
    d = family.dim
    weights = rng.dirichlet(np.full(k, 2.0))
    sources = []
    for _ in range(k):
        if family.kind is Kind.BERNOULLI:
            sources.append({"lambda": rng.uniform(0.05, 0.95)})
        elif family.kind is Kind.MULTINOULLI:
            sources.append({"lambda": rng.dirichlet(np.full(d, 2.0))})
        elif family.kind is Kind.LAPLACIAN:
            sources.append({"sigma": rng.uniform(0.5, 3.0)})
        elif family.kind is Kind.GAUSSIAN:
            A = rng.normal(size=(d, d))
            cov = A @ A.T / d + 0.5 * np.eye(d)
            sources.append({"mu": rng.uniform(-2, 2, d), "sigma": 0.5 * (cov + cov.T)})
        else:
            A = rng.normal(size=(d, d))
            S = A @ A.T / d + 0.5 * np.eye(d)
            sources.append({"n": rng.uniform(d + 2.0, d + 6.0), "S": 0.5 * (S + S.T) / d})
    return MixtureModel.from_source(family, weights, sources)


def cmd_bench(args) -> int:
    family = Family(Kind.parse(args.family), args.dim)
    rng = np.random.default_rng(args.seed)
    rows = []
    mismatches = 0
    for k in args.k:
        m = random_mixture(family, k, rng)
        for a in args.alpha:
            if a < 1:
                continue
            t0 = time.perf_counter()
            res = minkdist.lp_norm_details(m, a, term_cap=args.term_cap, workers=args.workers)
            ms = 1e3 * (time.perf_counter() - t0)
            expected = binomial(k + a - 1, a)
            ok = res.term_count == expected
            mismatches += not ok
            rows.append({"k": k, "alpha": a, "terms": res.term_count, "expected": expected,
                         "wall_time_ms": ms, "norm": res.value, "status": "OK" if ok else "MISMATCH"})
    _emit_table(["k", "alpha", "terms", "expected", "wall_time_ms", "norm", "status"], rows, args.output,
                {"family": str(family)})
    return EXIT_FAIL if mismatches else EXIT_OK


# ----------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser, oracle_flags: bool = True) -> None:
    p.add_argument("--term-cap", type=_positive_int, default=DEFAULT_TERM_CAP,
                   help="maximum number of expansion terms")
    p.add_argument("--workers", type=_positive_int, default=1, help="parallel workers")
    p.add_argument("--output", choices=("text", "structured"), default="text")
    if oracle_flags:
        p.add_argument("--samples", type=_positive_int, default=10**6, help="Monte Carlo samples")
        p.add_argument("--seed", type=int, default=0, help="Monte Carlo seed")
        p.add_argument("--rel-tol", type=float, default=1e-10, help="relative tolerance")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cefdist", description=__doc__.split("\n\n")[0].strip(),
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dist", help="distance between two mixtures")
    p.add_argument("--metric", required=True, choices=[m.value for m in Metric], type=str.upper)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--oracle", choices=[m.value for m in Method], default=None,
                   help="integrate numerically instead of using the closed form")
    p.add_argument("spec_a")
    p.add_argument("spec_b")
    _common(p)
    p.set_defaults(func=cmd_dist)

    p = sub.add_parser("norm", help="L_alpha norm of a mixture")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--oracle", choices=[m.value for m in Method], default=None)
    p.add_argument("spec")
    _common(p)
    p.set_defaults(func=cmd_norm)

    p = sub.add_parser("diversity", help="Minkowski diversity index of the weighted components")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("spec")
    _common(p, oracle_flags=False)
    p.set_defaults(func=cmd_diversity)

    p = sub.add_parser("validate", help="closed form versus numerical oracle")
    p.add_argument("spec_a")
    p.add_argument("spec_b")
    p.add_argument("--metrics", default="M,D,L,CS")
    p.add_argument("--alpha", type=_range_arg, default=[2, 3, 4], help="e.g. 2-5 or 2,4")
    p.add_argument("--oracle", choices=[m.value for m in Method], default=None,
                   help="default: exact for discrete, quad for 1-d, mc otherwise")
    _common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("bench", help="term counts and timings of the norm expansion")
    p.add_argument("--k", type=_range_arg, default=[1, 2, 3, 4, 5])
    p.add_argument("--alpha", type=_range_arg, default=[2, 3, 4, 5, 6, 7, 8])
    p.add_argument("--family", default="gaussian")
    p.add_argument("--dim", type=_positive_int, default=1)
    p.add_argument("--seed", type=int, default=0)
    _common(p, oracle_flags=False)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SpecError, expfam.ParameterDomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except (UnsupportedExponentError, oracle.IncompatibleMethodError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except (TermBudgetError, CancellationError, oracle.QuadratureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # remaining argument-combination problems (e.g. CS with alpha 3)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC


if __name__ == "__main__":
    sys.exit(main())
