"""Command-line front end.

Exit codes: 0 success, 1 reproduction or verification failure,
2 usage or domain error, 3 resource cap exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from datetime import datetime, timezone
from typing import Callable, Optional, Sequence

from . import __version__
from .errors import DomainError, ResourceCapError
from .formulas import (
    PowerGainRule,
    StepMoments,
    StepProfile,
    capasso_enf,
    capasso_enf_delta,
    capasso_enf_heterogeneous,
    capasso_enf_moments,
    cascade_total_gain_variant,
    compare,
    friis_total,
    stages_from_profile,
    stepwise_enf,
)
from .oracle import (
    EXACT_MAX_STEPS,
    SimConfig,
    enf_from_distribution,
    exact_gain_pmf,
    mc_simulate,
)

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_USAGE = 2
EXIT_CAP = 3

DEFAULT_PRECISION = 6


class UsageError(DomainError):
    pass


# ---------------------------------------------------------------- formulas

def _homogeneous(profile: StepProfile, formula: str) -> tuple[float, int]:
    if not profile.is_homogeneous:
        raise UsageError(f"formula '{formula}' needs equal steps; use --formula eq3 for --probs")
    return (profile.probs[0] if profile.n else 0.0), profile.n


def _eval_capasso(profile, rule, args=None):
    return capasso_enf(*_homogeneous(profile, "capasso"))


def _eval_delta(profile, rule, args=None):
    p, n = _homogeneous(profile, "delta")
    return capasso_enf_delta(1.0 - p, n)


def _eval_heterogeneous(profile, rule, args=None):
    return capasso_enf_heterogeneous(profile)


def _eval_moments(profile, rule, args=None):
    if args is not None and getattr(args, "mean", None) is not None:
        if args.var is None or args.n is None:
            raise UsageError("--mean requires --var and -n")
        return capasso_enf_moments(StepMoments(args.mean, args.var), args.n)
    p, n = _homogeneous(profile, "moments")
    return capasso_enf_moments(StepMoments.from_probability(p), n)


def _eval_stepwise(profile, rule, args=None):
    if not profile.n or not profile.is_homogeneous:
        raise UsageError("formula 'stepwise' needs a single probability (-p)")
    return stepwise_enf(profile.probs[0])


def _eval_friis(profile, rule, args=None):
    return friis_total(stages_from_profile(profile, rule))


def _eval_friis_gain(profile, rule, args=None):
    return cascade_total_gain_variant(stages_from_profile(profile, rule))


def _eval_exact(profile, rule, args=None):
    return enf_from_distribution(exact_gain_pmf(profile))


# selector -> (result key, evaluator)
FORMULAS: dict[str, tuple[str, Callable]] = {
    "capasso": ("capasso", _eval_capasso),
    "delta": ("capasso_delta", _eval_delta),
    "heterogeneous": ("capasso_heterogeneous", _eval_heterogeneous),
    "moments": ("capasso_moments", _eval_moments),
    "stepwise": ("stepwise", _eval_stepwise),
    "friis": ("friis_power_gain", _eval_friis),
    "friis-gain": ("friis_gain_variant", _eval_friis_gain),
    "exact": ("enf_exact", _eval_exact),
}
ALIASES = {
    "eq1": "delta",
    "eq2": "capasso",
    "eq3": "heterogeneous",
    "eq4": "moments",
    "eq5": "friis-gain",
    "eq6": "friis",
    "eq7": "stepwise",
    "eq8": "stepwise",
}


def _formula_name(name: str) -> str:
    key = ALIASES.get(name.strip().lower(), name.strip().lower())
    if key not in FORMULAS:
        choices = ", ".join(sorted([*FORMULAS, *ALIASES]))
        raise UsageError(f"unknown formula {name!r}; choose from {choices}")
    return key


# ---------------------------------------------------------------- records

def _metadata(**extra) -> dict:
    return {
        "tool": "staircase-enf",
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        **extra,
    }


def _record(inputs: dict, results: dict, **meta) -> dict:
    return {"inputs": inputs, "results": results, "metadata": _metadata(**meta)}


def _profile_inputs(profile: StepProfile, args) -> dict:
    if profile.is_homogeneous and profile.n and getattr(args, "probs", None) is None:
        return {"p": profile.probs[0], "n": profile.n, "probs": list(profile.probs)}
    return {"probs": list(profile.probs), "n": profile.n}


def format_value(value, precision: int) -> str:
    if isinstance(value, bool) or not isinstance(value, float):
        return str(value)
    if not math.isfinite(value):
        return str(value)
    text = f"{value:.{precision}f}"
    if "." in text:
        text = text.rstrip("0")
        if text.endswith("."):
            text += "0"
    return text


def _machine_value(value, precision: Optional[int]):
    if precision is None or isinstance(value, bool) or not isinstance(value, float):
        return value
    return round(value, precision)


def _round_record(record: dict, precision: Optional[int]) -> dict:
    if precision is None:
        return record
    return {
        section: (
            {k: _machine_value(v, precision) for k, v in body.items()}
            if section != "metadata"
            else body
        )
        for section, body in record.items()
    }


def _csv_cell(value) -> str:
    if isinstance(value, (list, tuple)):
        return ";".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


def render_json(records: list[dict], many: bool) -> str:
    payload = records if many else records[0]
    return json.dumps(payload, indent=2) + "\n"


def render_csv(records: list[dict], columns: Optional[Sequence[str]] = None) -> str:
    if columns is None:
        columns = []
        for rec in records:
            for key in [*rec["inputs"], *rec["results"]]:
                if key not in columns:
                    columns.append(key)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for rec in records:
        flat = {**rec["inputs"], **rec["results"]}
        writer.writerow([_csv_cell(flat.get(c)) for c in columns])
    return buf.getvalue()


def _key_value_text(rec: dict, precision: int) -> list[str]:
    lines = []
    width = max(len(k) for k in [*rec["inputs"], *rec["results"]])
    for key, value in rec["inputs"].items():
        if isinstance(value, list):
            value = ", ".join(format_value(float(v), precision) for v in value)
        lines.append(f"{key:<{width}}  {format_value(value, precision)}")
    lines.append("-" * (width + 12))
    for key, value in rec["results"].items():
        lines.append(f"{key:<{width}}  {format_value(value, precision)}")
    return lines


def _table_text(rows: list[list[str]]) -> list[str]:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return ["  ".join(cell.rjust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]


# ---------------------------------------------------------------- commands

def _parse_floats(text: str, flag: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{flag} expects comma-separated numbers, got {text!r}") from None


def profile_from_args(args) -> StepProfile:
    given = [f for f in ("p", "probs", "delta") if getattr(args, f, None) is not None]
    if len(given) > 1:
        raise UsageError("-p, --probs and --delta are mutually exclusive")
    n = getattr(args, "n", None)
    if not given:
        raise UsageError("a step profile is required: -p P -n N, --probs a,b,.. or --delta D -n N")
    if given[0] == "probs":
        if n is not None:
            raise UsageError("-n cannot be combined with --probs")
        return StepProfile(tuple(_parse_floats(args.probs, "--probs")))
    if given[0] == "delta":
        deltas = _parse_floats(args.delta, "--delta")
        if len(deltas) == 1 and n is not None:
            deltas = deltas * n
        elif n is not None:
            raise UsageError("-n cannot be combined with a list of --delta values")
        return StepProfile.from_deltas(deltas)
    if n is None:
        raise UsageError("-p needs a step count -n")
    if n < 0:
        raise UsageError(f"step count n must be >= 0, got {n}")
    return StepProfile.homogeneous(args.p, n)


def cmd_compute(args) -> tuple[list[dict], dict]:
    name = _formula_name(args.formula)
    key, evaluate = FORMULAS[name]
    rule = PowerGainRule.parse(args.power_gain_rule)
    if name == "moments" and args.mean is not None:
        profile = None
        inputs = {"mean_gain": args.mean, "var_gain": args.var, "n": args.n}
    elif name == "stepwise" and args.p is not None and args.n is None:
        profile = StepProfile.homogeneous(args.p, 1)
        inputs = {"p": args.p}
    else:
        profile = profile_from_args(args)
        inputs = _profile_inputs(profile, args)
    if name in ("friis", "friis-gain"):
        inputs["power_gain_rule"] = rule.value
    inputs["formula"] = name
    value = evaluate(profile, rule, args)
    return [_record(inputs, {key: value})], {"kind": "compute", "key": key}


def cmd_compare(args) -> tuple[list[dict], dict]:
    profile = profile_from_args(args)
    report = compare(profile, args.power_gain_rule)
    inputs = _profile_inputs(profile, args)
    inputs["power_gain_rule"] = report.power_gain_rule.value
    return [_record(inputs, report.as_dict())], {"kind": "compare", "n": profile.n}


def parse_range(text: str, integer: bool, flag: str) -> list:
    """``v`` or ``start:stop`` (integers only) or ``start:step:stop``, inclusive."""
    cast = int if integer else float
    try:
        parts = [cast(v) for v in text.split(":")]
    except ValueError:
        raise UsageError(f"{flag}: cannot parse range {text!r}") from None
    if len(parts) == 1:
        return parts
    if len(parts) == 2 and integer:
        start, step, stop = parts[0], 1, parts[1]
    elif len(parts) == 3:
        start, step, stop = parts
    else:
        raise UsageError(f"{flag}: expected start:step:stop, got {text!r}")
    if step <= 0:
        raise UsageError(f"{flag}: step must be > 0, got {step}")
    if stop < start:
        raise UsageError(f"{flag}: empty range {text!r} (stop < start)")
    if integer:
        return list(range(start, stop + 1, step))
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(count)]


def cmd_sweep(args) -> tuple[list[dict], dict]:
    ps = parse_range(args.p, integer=False, flag="--p")
    ns = parse_range(args.n, integer=True, flag="--n")
    names = [_formula_name(f) for f in args.formulas.split(",") if f.strip()]
    if not names:
        raise UsageError("--formulas must name at least one formula")
    if min(ns) < 0:
        raise UsageError("--n values must be >= 0")
    rule = PowerGainRule.parse(args.power_gain_rule)
    keys = [FORMULAS[name][0] for name in names]
    records = []
    for p in ps:
        for n in ns:
            profile = StepProfile.homogeneous(p, n)
            results = {}
            for name, key in zip(names, keys):
                if name == "stepwise":
                    results[key] = stepwise_enf(p)
                else:
                    results[key] = FORMULAS[name][1](profile, rule)
            records.append(_record({"p": p, "n": n}, results, power_gain_rule=rule.value))
    return records, {"kind": "sweep", "columns": ["p", "n", *keys]}


def cmd_simulate(args) -> tuple[list[dict], dict]:
    profile = profile_from_args(args)
    if args.exact and profile.n > EXACT_MAX_STEPS:
        raise ResourceCapError(
            f"--exact supports at most {EXACT_MAX_STEPS} steps, got n={profile.n}"
        )
    config = SimConfig(trials=args.trials, seed=args.seed, chunk_size=args.chunk_size)
    est = mc_simulate(profile, config, workers=args.workers)
    inputs = _profile_inputs(profile, args)
    inputs.update(trials=config.trials, seed=config.seed, chunk_size=config.chunk_size)
    results = {
        "enf_mc": est.enf,
        "std_error": est.std_error_enf,
        "mean_gain": est.mean_gain,
        "var_gain": est.var_gain,
    }
    if args.exact:
        exact = enf_from_distribution(exact_gain_pmf(profile))
        results["enf_exact"] = exact
        results["abs_deviation"] = abs(est.enf - exact)
        if est.var_gain == 0.0 and est.enf == exact:
            ok = True
        else:
            ok = est.agrees_with(exact, 3.0)
        results["verdict"] = "PASS" if ok else "FAIL"
    return [_record(inputs, results, workers=args.workers)], {"kind": "simulate"}


# (label, p, n, rule, {result key: published value as printed})
APPENDIX_ILLUSTRATIONS = [
    ("1", 0.3, 1, "M2", {"capasso": "1.12426", "friis_power_gain": "1.12426"}),
    ("2a", 0.3, 2, "M2", {"capasso": "1.219845", "friis_power_gain": "1.197787"}),
    ("2b", 0.3, 2, "M2", {"friis_gain_variant": "1.219845"}),
    ("3a", 0.3, 3, "M2", {"capasso": "1.293372", "friis_power_gain": "1.241294"}),
    ("3b", 0.3, 3, "M2", {"friis_gain_variant": "1.293372"}),
]


def _half_ulp(printed: str) -> float:
    decimals = len(printed.split(".")[1]) if "." in printed else 0
    return 0.5 * 10.0 ** (-decimals)


def reproduce_appendix() -> list[dict]:
    records = []
    for label, p, n, rule, expected in APPENDIX_ILLUSTRATIONS:
        report = compare(StepProfile.homogeneous(p, n), rule).as_dict()
        results: dict = {}
        match = True
        for key, printed in expected.items():
            results[key] = report[key]
            results[f"published_{key}"] = float(printed)
            match &= abs(report[key] - float(printed)) <= _half_ulp(printed)
        results["match"] = bool(match)
        records.append(
            _record({"illustration": label, "p": p, "n": n, "power_gain_rule": rule}, results)
        )
    return records


def cmd_reproduce_appendix(args) -> tuple[list[dict], dict]:
    return reproduce_appendix(), {"kind": "reproduce"}


# ---------------------------------------------------------------- rendering

def render_text(records: list[dict], info: dict, precision: int) -> str:
    kind = info["kind"]
    lines: list[str] = []
    if kind == "compute":
        lines.append(format_value(records[0]["results"][info["key"]], precision))
    elif kind == "compare":
        rec = records[0]
        lines.extend(_key_value_text(rec, precision))
        disc = rec["results"]["abs_discrepancy"]
        if info["n"] >= 2 and disc > 0.0:
            lines.append(
                f"MISMATCH: Friis with power gains differs from the Capasso form "
                f"by {format_value(disc, precision)}"
            )
    elif kind == "sweep":
        cols = info["columns"]
        rows = [cols]
        for rec in records:
            flat = {**rec["inputs"], **rec["results"]}
            rows.append([format_value(flat[c], precision) for c in cols])
        lines.extend(_table_text(rows))
    elif kind == "simulate":
        lines.extend(_key_value_text(records[0], precision))
    elif kind == "reproduce":
        rows = [["illustration", "p", "n", "quantities", "recomputed", "published", "status"]]
        for rec in records:
            res, inp = rec["results"], rec["inputs"]
            keys = [k for k in res if f"published_{k}" in res]
            rows.append(
                [
                    f"Ill.{inp['illustration']}",
                    format_value(inp["p"], precision),
                    str(inp["n"]),
                    " vs ".join(keys),
                    " vs ".join(format_value(res[k], precision) for k in keys),
                    " vs ".join(format_value(res[f"published_{k}"], precision) for k in keys),
                    "ok" if res["match"] else "MISMATCH",
                ]
            )
        lines.extend(_table_text(rows))
    return "\n".join(lines) + "\n"


def render(records: list[dict], info: dict, fmt: str, precision: Optional[int]) -> str:
    many = info["kind"] in ("sweep", "reproduce")
    if fmt == "text":
        return render_text(records, info, DEFAULT_PRECISION if precision is None else precision)
    records = [_round_record(r, precision) for r in records]
    if fmt == "json":
        return render_json(records, many)
    return render_csv(records, info.get("columns"))


# ---------------------------------------------------------------- parser

def _add_output_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument(
        "--format",
        choices=["text", "json", "csv"],
        default=argparse.SUPPRESS if suppress else "text",
    )
    parser.add_argument(
        "--precision",
        type=int,
        default=default,
        help="decimals to print (text default 6; machine formats default to full precision)",
    )
    parser.add_argument("--output", default=default, help="write output to this path")


def _add_profile_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("-p", type=float, help="ionization probability of every step")
    parser.add_argument("-n", type=int, help="step count")
    parser.add_argument("--probs", help="per-step probabilities, comma separated")
    parser.add_argument("--delta", help="non-ionizing fraction 1-p (single value with -n, or a list)")


def _add_rule_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--power-gain-rule",
        default="M2",
        help="power gain of a stage with electron gain M: 'M2' (G=M^2, default) or 'M' (G=M)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="staircase-enf",
        description="Excess noise factors of staircase avalanche multipliers.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _add_output_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compute", help="evaluate one formula")
    p.add_argument("--formula", required=True, help="capasso|delta|heterogeneous|moments|"
                   "stepwise|friis|friis-gain|exact or eq1..eq8")
    _add_profile_flags(p)
    p.add_argument("--mean", type=float, help="step gain mean (moments formula)")
    p.add_argument("--var", type=float, help="step gain variance (moments formula)")
    _add_rule_flag(p)
    _add_output_flags(p, suppress=True)
    p.set_defaults(handler=cmd_compute)

    p = sub.add_parser("compare", help="Capasso form against both cascade compositions")
    _add_profile_flags(p)
    _add_rule_flag(p)
    _add_output_flags(p, suppress=True)
    p.set_defaults(handler=cmd_compare)

    p = sub.add_parser("sweep", help="tabulate formulas over a (p, n) grid")
    p.add_argument("--p", dest="p", required=True, help="p value or start:step:stop")
    p.add_argument("--n", dest="n", required=True, help="n value, start:stop or start:step:stop")
    p.add_argument("--formulas", default="capasso,friis,friis-gain")
    _add_rule_flag(p)
    _add_output_flags(p, suppress=True)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("simulate", help="Monte Carlo estimate, optionally against the exact ENF")
    _add_profile_flags(p)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--chunk-size", type=int, default=1 << 16)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--exact", action="store_true", help="also compute the exact ENF")
    _add_output_flags(p, suppress=True)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("reproduce-appendix", help="recompute the five published illustrations")
    _add_output_flags(p, suppress=True)
    p.set_defaults(handler=cmd_reproduce_appendix)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.precision is not None and args.precision < 0:
            raise UsageError("--precision must be >= 0")
        records, info = args.handler(args)
    except ResourceCapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    text = render(records, info, args.format, args.precision)
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)

    if info["kind"] == "reproduce" and not all(r["results"]["match"] for r in records):
        print("error: recomputed values deviate from the published constants", file=sys.stderr)
        return EXIT_MISMATCH
    if info["kind"] == "simulate" and records[0]["results"].get("verdict") == "FAIL":
        return EXIT_MISMATCH
    return EXIT_OK


def run() -> None:
    sys.exit(main())
