"""Command-line front end: classify, verify, warped, export-slant, examples."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from importlib.resources import files
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .checks import IdentityCheck, compare, skipped
from .conn import check_gauss_weingarten
from .dist import (
    AxiomReport, VacuousIdentityError, check_bislant_axioms, check_corollary_3_3, check_lemma_3_2,
    integrability,
)
from .expr import ExprError, eval_value
from .immersion import (
    DomainMostlySingularError, ImmersionSpec, SingularPointError, SpecError, load_spec,
    sample_domain,
)
from .structops import (
    check_eq_2_8_2_9, check_structure_identities, distribution_basis, pointwise_ops,
    slant_cos2, slant_sample,
)
from .immersion import frame_at
from .warp import (
    MuUnavailable, WarpError, WarpedReport, analyze_warped, check_characterization,
    check_foliation_geometry, check_lemma_4_1, check_lemma_4_2, check_lemma_4_3,
    check_special_cases, check_theorem_4_4, recover_warping,
)

SCHEMA = 1
DEFAULT_SAMPLES = 32
DEFAULT_SEED = 42
CLAIM_TOL = 1e-9

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_CLAIM = 0, 1, 2, 3

EXAMPLES = {
    "ex6.1": "ex61.lps",
    "ex6.2": "ex62.lps",
    "toy_flat": "toy_flat.lps",
    "toy_cr": "toy_cr.lps",
    "toy_nonintegrable": "toy_nonintegrable.lps",
    "toy_perturbed": "toy_perturbed.lps",
    "toy_mixing": "toy_mixing.lps",
}

SUITES = ("axioms", "integrability", "eq2", "gauss-weingarten", "lemma3.2", "cor3.3",
          "lemma4.1", "lemma4.2", "lemma4.3", "thm4.4", "eq5.1", "cases", "foliation")


class InputError(Exception):
    pass


# -- loading ------------------------------------------------------------------------------------


def fixture_text(filename: str) -> str:
    return (files("bislant") / "fixtures" / filename).read_text(encoding="utf-8")


def read_spec_text(path: str) -> str:
    p = Path(path)
    if p.is_file():
        return p.read_text(encoding="utf-8")
    # bundled fixtures are reachable by file name or example name
    name = EXAMPLES.get(path, p.name)
    if not p.parent.parts and name in EXAMPLES.values():
        return fixture_text(name)
    raise InputError(f"cannot read spec file {path!r}")


class Context:
    """A loaded spec with its sample points, shared by the commands."""

    def __init__(self, text: str, samples: int, seed: int):
        if samples < 1:
            raise InputError("--samples must be at least 1")
        self.text = text
        self.digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
        self.spec: ImmersionSpec = load_spec(text)
        sample = sample_domain(self.spec, samples, seed)
        self.points = sample.points
        self.dropped = sample.dropped
        self.samples, self.seed = samples, seed
        self._axioms: AxiomReport | None = None
        self._warped: WarpedReport | None = None
        self._warped_done = False

    @property
    def axioms(self) -> AxiomReport:
        if self._axioms is None:
            self._axioms = check_bislant_axioms(self.spec, self.points)
        return self._axioms

    @property
    def warped(self) -> WarpedReport | None:
        if not self._warped_done:
            self._warped_done = True
            try:
                self._warped = analyze_warped(self.spec, self.points)
            except ValueError:
                self._warped = None
        return self._warped

    def header(self, command: str) -> dict:
        return {"schema": SCHEMA, "tool": "bislant", "version": __version__, "command": command,
                "spec_digest": self.digest, "seed": self.seed, "samples": self.samples,
                "dropped": self.dropped}


# -- claims ---------------------------------------------------------------------------------------


def slant_claims(ctx: Context) -> list[dict]:
    out = []
    for name, (expr, text) in sorted(ctx.spec.slant_claims.items()):
        worst, lo, hi = 0.0, math.inf, -math.inf
        for p in ctx.points:
            frame = frame_at(ctx.spec, p)
            cos2 = slant_cos2(pointwise_ops(ctx.spec.ambient, frame), frame,
                              distribution_basis(ctx.spec, name, p))
            claimed = math.cos(eval_value(expr, p)) ** 2
            worst = max(worst, abs(cos2 - claimed))
            lo, hi = min(lo, cos2), max(hi, cos2)
        cls = ctx.axioms.classes.get(name, "unknown")
        out.append({
            "kind": "slant",
            "target": name,
            "claim": f"theta = {text}",
            "computed": f"{cls}, cos^2 theta in [{lo:.12g}, {hi:.12g}]",
            "max_deviation_cos2": worst,
            "verdict": "match" if worst < CLAIM_TOL else "mismatch",
        })
    return out


def warped_claims(ctx: Context, rep: WarpedReport | None) -> list[dict]:
    spec = ctx.spec
    out = []
    if spec.warped_claim is not None:
        c = spec.warped_claim
        rec = {"kind": "warped", "target": f"base {c.base} fiber {c.fiber}",
               "claim": f"f = {c.text}"}
        if rep is None or rep.f_claim_residual is None:
            rec.update(computed=rep.verdict if rep else "no warped structure",
                       ratio_variance=None, verdict="mismatch")
        else:
            rec.update(computed=f"{rep.verdict}, f^2 ratio constant {rep.f_claim_constant:.12g}",
                       ratio_variance=rep.f_claim_residual,
                       verdict="match" if rep.f_claim_match else "mismatch")
        out.append(rec)
    if spec.basemetric_claim is not None:
        rec = {"kind": "basemetric", "target": spec.warped_claim.base,
               "claim": f"base metric = [{spec.basemetric_claim[1]}]"}
        if rep is None or rep.base_metric_claim_residual is None:
            rec.update(computed="no warped structure", max_deviation=None, verdict="mismatch")
        else:
            rec.update(computed="; ".join(rep.notes) or "measured base metric",
                       max_deviation=rep.base_metric_claim_residual,
                       verdict="match" if rep.base_metric_match else "mismatch")
        out.append(rec)
    return out


# -- suites -----------------------------------------------------------------------------------------


def _axiom_checks(ctx: Context) -> list[IdentityCheck]:
    ax = ctx.axioms
    anchor_a = "TM = D1 + D2, D1 orthogonal to D2"
    anchor_b = "F D1 orthogonal to D2, F D2 orthogonal to D1"
    anchor_c = "D_i pointwise slant with slant function theta_i"
    out = [
        compare("axioms", "(a) rank", anchor_a, (), float(not ax.rank_ok), 0.0, 0.5),
        compare("axioms", "(a) orthogonality", anchor_a, (), ax.a_residual, 0.0, 1e-8,
                ax.a_residual),
        compare("axioms", "(b) F-orthogonality" + (f": {ax.b_witness}" if ax.b_witness else ""),
                anchor_b, (), ax.b_residual, 0.0, 1e-8, ax.b_residual),
        compare("axioms", "T(D_i) in D_i", anchor_c, (), ax.invariance_residual, 0.0, 1e-8,
                ax.invariance_residual if math.isfinite(ax.invariance_residual) else 1e300),
    ]
    for name in ax.names:
        cls = ax.classes[name]
        out.append(compare("axioms", f"(c) {name} {cls}", anchor_c, (), 0.0, 0.0, 0.5,
                           0.0 if cls != "not-slant" else 1.0))
    return out


def _gate(ctx: Context, suite: str, anchor: str) -> list[IdentityCheck] | None:
    if not ctx.axioms.passed:
        return [skipped(suite, "applicability", anchor, (), 1e-5,
                        f"bi-slant axioms fail ({ctx.axioms.form()})")]
    return None


def _suite_eq2(ctx):
    out = check_structure_identities(ctx.spec, ctx.points)
    for name in ctx.spec.distributions:
        cls = ctx.axioms.classes.get(name) if len(ctx.spec.distributions) == 2 else None
        if cls == "not-slant":
            out.append(skipped("eq2", f"{name}: slant identities", "g(TX,TY) = cos^2(theta) g(X,Y)",
                               (), 1e-8, f"{name} is not pointwise slant"))
            continue
        out.extend(check_eq_2_8_2_9(ctx.spec, name, ctx.points))
    return out


def _suite_integrability(ctx):
    out = []
    for name in ctx.spec.distributions:
        rep = integrability(ctx.spec, name, ctx.points)
        label = f"{name}" + (" (rank 1)" if rep.trivial else "")
        for p, r in zip(ctx.points, rep.residuals):
            out.append(compare("integrability", label, "[X, Y] in D for X, Y in D", p, r, 0.0,
                               1e-8, r))
    return out


def _guarded(suite: str, anchor: str, fn: Callable[[], list[IdentityCheck]], needs_axioms=True):
    def run(ctx):
        if needs_axioms:
            gate = _gate(ctx, suite, anchor)
            if gate is not None:
                return gate
        try:
            return fn(ctx)
        except (VacuousIdentityError, WarpError, MuUnavailable) as exc:
            return [skipped(suite, "applicability", anchor, (), 1e-5, str(exc))]
    return run


SUITE_FUNCS: dict[str, Callable[[Context], list[IdentityCheck]]] = {
    "axioms": _axiom_checks,
    "integrability": _suite_integrability,
    "eq2": _suite_eq2,
    "gauss-weingarten": lambda ctx: check_gauss_weingarten(ctx.spec, ctx.points),
    "lemma3.2": _guarded("lemma3.2", "projection lemma",
                         lambda ctx: check_lemma_3_2(ctx.spec, ctx.points)),
    "cor3.3": _guarded("cor3.3", "invariant D1 corollary",
                       lambda ctx: check_corollary_3_3(
                           ctx.spec, ctx.points, ctx.axioms.classes[ctx.axioms.names[0]])),
    "lemma4.1": _guarded("lemma4.1", "warped lemma", lambda ctx: check_lemma_4_1(
        ctx.spec, ctx.points, _detected(ctx))),
    "lemma4.2": _guarded("lemma4.2", "warped lemma", lambda ctx: check_lemma_4_2(
        ctx.spec, ctx.points, _detected(ctx))),
    "lemma4.3": _guarded("lemma4.3", "warped lemma", lambda ctx: check_lemma_4_3(
        ctx.spec, ctx.points, _detected(ctx))),
    "thm4.4": _guarded("thm4.4", "warped theorem", lambda ctx: check_theorem_4_4(
        ctx.spec, ctx.points, _detected(ctx))),
    "eq5.1": _guarded("eq5.1", "characterization", lambda ctx: check_characterization(
        ctx.spec, ctx.points, _detected_or_none(ctx))),
    "cases": _guarded("cases", "special cases", lambda ctx: check_special_cases(
        ctx.spec, ctx.points, _detected_or_none(ctx), ctx.axioms.classes)),
    "foliation": _guarded("foliation", "foliation geometry", lambda ctx: check_foliation_geometry(
        ctx.spec, ctx.points, _detected_or_none(ctx))),
}


def _detected_or_none(ctx: Context) -> WarpedReport | None:
    rep = ctx.warped
    return rep if rep is not None and rep.detected else None


def _detected(ctx: Context) -> WarpedReport:
    rep = ctx.warped
    if rep is None or not rep.detected:
        raise WarpError("requires a warped product split; detection says: "
                        + (rep.verdict if rep is not None else "no warped structure"))
    return rep


def suite_record(checks: Sequence[IdentityCheck]) -> dict:
    ran = [c for c in checks if not c.skipped]
    return {
        "checks": [c.as_dict() for c in checks],
        "count": len(checks),
        "failed": sum(1 for c in checks if not c.passed),
        "skipped": sum(1 for c in checks if c.skipped),
        "max_residual": max((c.residual for c in ran), default=None),
        "pass": all(c.passed for c in checks),
    }


def run_suites(ctx: Context, names: Sequence[str]) -> dict[str, dict]:
    return {name: suite_record(SUITE_FUNCS[name](ctx)) for name in names}


# -- output ---------------------------------------------------------------------------------------


def _finite(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else repr(obj)
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, np.generic):
        return _finite(obj.item())
    return obj


def dump_json(report: dict) -> str:
    return json.dumps(_finite(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def emit(report: dict, out: str | None, summary: str, stdout) -> None:
    if out == "-":
        stdout.write(dump_json(report))
        return
    if out:
        Path(out).write_text(dump_json(report), encoding="utf-8")
    stdout.write(summary)


def _fmt(x) -> str:
    return "-" if x is None else f"{x:.3g}"


def suites_summary(suites: dict[str, dict]) -> str:
    lines = []
    for name, rec in suites.items():
        status = "PASS" if rec["pass"] else "FAIL"
        lines.append(f"  {name:<17} {status}  checks {rec['count']:>5}  failed {rec['failed']:>4}"
                     f"  skipped {rec['skipped']:>4}  max residual {_fmt(rec['max_residual'])}")
        for c in rec["checks"]:
            if not c["pass"]:
                lines.append(f"      first failure: {c['name']} at {tuple(c['point'])}: "
                             f"residual {_fmt(c['residual'])} (threshold {c['threshold']:g})")
                break
    return "\n".join(lines) + "\n"


def claims_summary(claims: list[dict]) -> str:
    return "".join(f"  claim {c['kind']} {c['target']}: {c['claim']} -> {c['computed']}: "
                   f"{c['verdict'].upper()}\n" for c in claims)


# -- commands -------------------------------------------------------------------------------------


def classify_report(ctx: Context) -> tuple[dict, int, str]:
    ax = ctx.axioms
    dists = {}
    for name in ax.names:
        samples = ax.samples[name]
        th = [s.mean for s in samples]
        dists[name] = {"classification": ax.classes[name], "theta_min": min(th),
                       "theta_max": max(th), "theta": th}
    claims = slant_claims(ctx)
    report = ctx.header("classify") | {
        "distributions": dists,
        "axioms": {"a_orthogonality": ax.a_residual, "a_rank": ax.rank_ok,
                   "b_residual": ax.b_residual, "b_witness": ax.b_witness,
                   "invariance_residual": ax.invariance_residual, "pass": ax.passed},
        "form": ax.form(),
        "proper": ax.proper,
        "claims": claims,
    }
    code = EXIT_FAIL if not ax.passed else (
        EXIT_CLAIM if any(c["verdict"] != "match" for c in claims) else EXIT_OK)
    report["exit_code"] = code
    lines = [f"{name}: {d['classification']}, theta in [{d['theta_min']:.6g}, {d['theta_max']:.6g}]"
             for name, d in dists.items()]
    lines.append(f"form: {ax.form()}" + (" (proper)" if ax.proper else ""))
    if ax.b_witness:
        lines.append(f"axiom (b) fails: {ax.b_witness}")
    text = "\n".join(lines) + "\n" + claims_summary(claims)
    return report, code, text


def verify_report(ctx: Context, names: Sequence[str]) -> tuple[dict, int, str]:
    suites = run_suites(ctx, names)
    ok = all(s["pass"] for s in suites.values())
    code = EXIT_OK if ok else EXIT_FAIL
    report = ctx.header("verify") | {"suites": suites, "verdict": "pass" if ok else "fail",
                                     "exit_code": code}
    return report, code, suites_summary(suites) + f"verdict: {report['verdict']}\n"


def warped_report(ctx: Context) -> tuple[dict, int, str]:
    rep = ctx.warped
    if rep is None:
        rep = recover_warping(ctx.spec, ctx.points)
    claims = warped_claims(ctx, rep)
    code = EXIT_OK
    if not rep.passed:
        code = EXIT_FAIL
    elif any(c["verdict"] != "match" for c in claims):
        code = EXIT_CLAIM
    report = ctx.header("warped") | {"warped": rep.as_dict(), "claims": claims, "exit_code": code}
    lines = [f"base {rep.base}, fiber {rep.fiber}: {rep.verdict}"]
    if rep.witness:
        lines.append(f"  witness: {rep.witness}")
    if rep.f_samples:
        lines.append(f"  f range [{min(rep.f_samples):.6g}, {max(rep.f_samples):.6g}] "
                     f"(normalized at base reference {rep.reference})")
    lines.append(f"  cross {_fmt(rep.cross_residual)}, O'Neill {_fmt(rep.oneill_residual)}, "
                 f"geodesic {_fmt(rep.base_geodesic_residual)}, "
                 f"umbilic {_fmt(rep.fiber_umbilic_residual)}")
    lines.extend(f"  note: {n}" for n in rep.notes)
    return report, code, "\n".join(lines) + "\n" + claims_summary(claims)


def aggregate_code(codes: Sequence[int]) -> int:
    for c in (EXIT_INPUT, EXIT_FAIL, EXIT_CLAIM):
        if c in codes:
            return c
    return EXIT_OK


def cmd_classify(args, stdout) -> int:
    ctx = Context(read_spec_text(args.spec), args.samples, args.seed)
    report, code, text = classify_report(ctx)
    emit(report, args.output, text, stdout)
    return code


def cmd_verify(args, stdout) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    ctx = Context(read_spec_text(args.spec), args.samples, args.seed)
    if args.suite == "eq5.1" and ctx.spec.mu is None and ctx.spec.warped_claim is None:
        raise InputError("characterization requires mu or warped claim")
    report, code, text = verify_report(ctx, names)
    emit(report, args.output, text, stdout)
    return code


def cmd_warped(args, stdout) -> int:
    ctx = Context(read_spec_text(args.spec), args.samples, args.seed)
    report, code, text = warped_report(ctx)
    emit(report, args.output, text, stdout)
    return code


def _parse_assignments(items, what) -> dict[str, str]:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise InputError(f"{what} expects NAME=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def export_slant_rows(spec: ImmersionSpec, dist: str, grid: int,
                      fixed: dict[str, float], ranges: dict[str, tuple[float, float]]):
    if dist not in spec.distributions:
        raise InputError(f"unknown distribution {dist!r}; have {sorted(spec.distributions)}")
    if grid < 1:
        raise InputError("--grid must be at least 1")
    axes = []
    for name, (lo, hi) in zip(spec.chart, spec.domain):
        if name in fixed:
            axes.append(np.array([fixed[name]]))
        else:
            lo, hi = ranges.get(name, (lo, hi))
            axes.append(np.linspace(lo, hi, grid))
    for key in list(fixed) + list(ranges):
        if key not in spec.chart:
            raise InputError(f"unknown coordinate {key!r}")
    rows = []
    for idx, point in enumerate(np.array(np.meshgrid(*axes, indexing="ij")).reshape(spec.k, -1).T):
        p = tuple(float(x) for x in point)
        try:
            theta = slant_sample(spec, dist, p, idx).mean
        except (SingularPointError, ExprError, ArithmeticError):
            theta = math.nan
        rows.append(p + (theta,))
    return rows


def cmd_export_slant(args, stdout) -> int:
    spec = load_spec(read_spec_text(args.spec))
    fixed = {k: float(v) for k, v in _parse_assignments(args.fix, "--fix").items()}
    ranges = {}
    for k, v in _parse_assignments(args.range, "--range").items():
        lo, _, hi = v.partition(":")
        ranges[k] = (float(lo), float(hi))
    rows = export_slant_rows(spec, args.dist, args.grid, fixed, ranges)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(spec.chart) + ["theta"])
    for row in rows:
        writer.writerow([repr(x) for x in row])
    if args.output and args.output != "-":
        Path(args.output).write_text(buf.getvalue(), encoding="utf-8")
        stdout.write(f"wrote {len(rows)} rows to {args.output}\n")
    else:
        stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_examples(args, stdout) -> int:
    if args.action == "list":
        for name, fname in EXAMPLES.items():
            stdout.write(f"{name}\t{fname}\n")
        return EXIT_OK
    if args.name not in EXAMPLES:
        raise InputError(f"unknown example {args.name!r}; have {', '.join(EXAMPLES)}")
    ctx = Context(fixture_text(EXAMPLES[args.name]), args.samples, args.seed)
    parts = {}
    texts = []
    codes = []
    for label, (report, code, text) in (("classify", classify_report(ctx)),
                                         ("verify", verify_report(ctx, SUITES)),
                                         ("warped", warped_report(ctx))):
        for key in ("schema", "tool", "version", "spec_digest", "seed", "samples", "dropped",
                    "command"):
            report.pop(key, None)
        parts[label] = report
        codes.append(code)
        texts.append(f"== {label} (exit {code})\n{text}")
    code = aggregate_code(codes)
    report = ctx.header("examples run") | {"example": args.name, **parts, "exit_code": code}
    emit(report, args.output, "".join(texts) + f"aggregate exit {code}\n", stdout)
    return code


# -- argparse ---------------------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, output=True):
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES,
                   help=f"sample points (default {DEFAULT_SAMPLES})")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED,
                   help=f"sampling seed (default {DEFAULT_SEED})")
    if output:
        p.add_argument("-o", "--output", help="write the JSON report here ('-' for stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bislant", description=__doc__)
    parser.add_argument("--version", action="version", version=f"bislant {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="bi-slant axioms, slant functions, slant claims")
    p.add_argument("spec")
    _common(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("verify", help="run identity suites")
    p.add_argument("spec")
    p.add_argument("--suite", default="all",
                   help="one of: " + ", ".join(SUITES) + ", all (default all)")
    _common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("warped", help="warped-product detection and warping recovery")
    p.add_argument("spec")
    _common(p)
    p.set_defaults(func=cmd_warped)

    p = sub.add_parser("export-slant", help="slant function on a grid as CSV")
    p.add_argument("spec")
    p.add_argument("--dist", required=True)
    p.add_argument("--grid", type=int, default=5, help="points per free axis (default 5)")
    p.add_argument("--fix", action="append", metavar="NAME=VALUE", help="hold a coordinate fixed")
    p.add_argument("--range", action="append", metavar="NAME=LO:HI",
                   help="override the domain interval of a coordinate")
    p.add_argument("-o", "--output", help="CSV file (default stdout)")
    p.set_defaults(func=cmd_export_slant)

    p = sub.add_parser("examples", help="bundled example specs")
    esub = p.add_subparsers(dest="action", required=True)
    esub.add_parser("list")
    r = esub.add_parser("run")
    r.add_argument("name")
    _common(r)
    p.set_defaults(func=cmd_examples)
    return parser


def main(argv: Sequence[str] | None = None, stdout=None, stderr=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    if getattr(args, "suite", "all") not in (*SUITES, "all"):
        stderr.write(f"unknown suite {args.suite!r}; available: {', '.join(SUITES)}, all\n")
        return EXIT_INPUT
    try:
        return args.func(args, stdout)
    except (InputError, SpecError, ExprError, SingularPointError, DomainMostlySingularError,
            OSError) as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    raise SystemExit(main())
