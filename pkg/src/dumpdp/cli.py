"""Command-line front end: ``dumpdp {calibrate,run,compare,verify}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import oracle
from .core import PrivacyBudget
from .data import Dataset, load_csv, synth_uniform
from .errors import DomainTooSmall, DumpError, EmptyFile, MalformedRow, MissingColumn
from .harness import DEFAULT_EPSILON_GRID, ExperimentSpec, calibrate_protocol, compare_grid, run_experiment
from .protocols import RandomSource

SCHEMA = 1
EXIT_VERIFY = 1
EXIT_CALIBRATION = 2
EXIT_DATA = 3
COMPARE_FIELDS = ("protocol", "epsilon", "s", "mse_empirical", "mse_theory", "messages_per_user", "feasible")
DATA_ERRORS = (OSError, EmptyFile, MissingColumn, MalformedRow, DomainTooSmall, UnicodeDecodeError)


class DataError(Exception):
    pass


def _fmt(x):
    """Round floats to 12 significant digits; non-finite floats become ``None``."""
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return float(f"{x:.12g}") if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, dict):
        return {k: _fmt(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_fmt(v) for v in x]
    return x


def _emit_json(payload: dict) -> None:
    print(json.dumps(_fmt({"schema": SCHEMA, **payload}), sort_keys=False))


def _gamma(text: str):
    if text == "auto":
        return "auto"
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"gamma must be a number in (0, 1] or 'auto', got {text!r}")


def _float_list(text: str) -> list:
    return [float(v) for v in text.split(",") if v.strip()]


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    return int(os.environ.get("DUMP_SEED", "0"))


def _load_dataset(spec: str, column: Optional[str], seed: int) -> Dataset:
    if spec.startswith("uniform:"):
        try:
            n, k = (int(v) for v in spec[len("uniform:"):].split(","))
        except ValueError:
            raise DataError(f"expected uniform:n,k, got {spec!r}")
        try:
            return synth_uniform(n, k, RandomSource(seed).child(2**32))
        except DumpError as exc:
            raise DataError(f"{type(exc).__name__}: {exc}")
    col = 0 if column is None else (int(column) if column.isdigit() else column)
    try:
        return load_csv(spec, col)
    except DATA_ERRORS as exc:
        raise DataError(f"{type(exc).__name__}: {exc}")


def _fail(code: int, message: str) -> int:
    print(message, file=sys.stderr)
    return code


def cmd_calibrate(args) -> int:
    try:
        cal = calibrate_protocol(
            args.protocol, PrivacyBudget(args.epsilon, args.delta), args.n, args.k, args.gamma, args.epsilon_l
        )
    except DumpError as exc:
        return _fail(EXIT_CALIBRATION, f"{type(exc).__name__}: {exc}")
    _emit_json(
        {
            "protocol": cal.protocol,
            "s": cal.s,
            "gamma": cal.gamma,
            "total_dummies": cal.total_dummies,
            "epsilon_achieved": cal.epsilon_achieved,
            "delta_effective": cal.delta_effective,
            "messages_per_user": cal.messages_per_user,
            "epsilon_l": cal.epsilon_l,
        }
    )
    return 0


def cmd_run(args) -> int:
    seed = _seed(args)
    try:
        data = _load_dataset(args.dataset, args.column, seed)
    except DataError as exc:
        return _fail(EXIT_DATA, str(exc))
    try:
        cal = calibrate_protocol(
            args.protocol, PrivacyBudget(args.epsilon, args.delta), data.n, data.domain, args.gamma, args.epsilon_l
        )
    except DumpError as exc:
        return _fail(EXIT_CALIBRATION, f"{type(exc).__name__}: {exc}")
    spec = ExperimentSpec(cal.config(), data, args.repeats, seed, args.delta, args.threads)
    result = run_experiment(spec)
    row = result.to_dict(include_estimate=args.estimate)
    if args.estimate and args.clip:
        row["mean_estimate"] = np.clip(result.mean_estimate, 0, 1).tolist()
    row["epsilon_target"] = args.epsilon
    if args.no_timing:
        row.pop("wall_time")
    if args.format == "csv":
        row.pop("mean_estimate", None)
        _write_csv([_fmt(row)], list(row))
    else:
        _emit_json({"dataset": data.metadata(), "result": row})
    return 0


def _write_csv(rows: Sequence[dict], fields: Sequence[str]) -> None:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if row.get(k) is None else str(row[k]).lower() if isinstance(row[k], bool) else row[k]) for k in fields})
    sys.stdout.write(buf.getvalue())


def cmd_compare(args) -> int:
    seed = _seed(args)
    protocols = [v.strip() for v in args.protocols.split(",") if v.strip()]
    unknown = sorted(set(protocols) - {"pure", "mix", "grr"})
    if unknown or not protocols:
        return _fail(EXIT_CALIBRATION, f"InvalidConfig: unknown protocols {unknown or protocols}")
    try:
        data = _load_dataset(args.dataset, args.column, seed)
    except DataError as exc:
        return _fail(EXIT_DATA, str(exc))
    rows = compare_grid(
        data,
        protocols=protocols,
        epsilons=args.epsilon_grid,
        delta=args.delta,
        gamma=args.gamma,
        epsilon_l=args.epsilon_l,
        repeats=args.repeats,
        seed=seed,
        threads=args.threads,
    )
    _write_csv([_fmt(r) for r in rows], COMPARE_FIELDS)
    return 0


def cmd_verify(args) -> int:
    suites = oracle.SUITES if args.suite == "all" else (args.suite,)
    failed = []
    for suite in suites:
        for check in oracle.run_suite(suite, _seed(args)):
            status = "PASS" if check.passed else "FAIL"
            print(f"{status} [{suite}] {check.name} {check.detail}".rstrip())
            if not check.passed:
                failed.append(f"{suite}:{check.name}")
    if failed:
        return _fail(EXIT_VERIFY, "failed: " + ", ".join(failed))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dumpdp", description="Shuffle-model histogram estimation with dummy points.")
    sub = parser.add_subparsers(dest="command", required=True)

    def budget(p, with_epsilon=True):
        if with_epsilon:
            p.add_argument("--epsilon", type=float, required=True, help="central epsilon target (<= 1)")
        p.add_argument("--delta", type=float, default=1e-6)
        p.add_argument("--gamma", type=_gamma, default="auto", help="dummy sending probability or 'auto' (default)")
        p.add_argument("--epsilon-l", type=float, default=None, help="local GRR budget for mix (default 8)")

    def experiment(p):
        p.add_argument("--dataset", required=True, help="CSV path or uniform:n,k")
        p.add_argument("--column", default=None, help="CSV column name or index (default: first column)")
        p.add_argument("--repeats", type=int, default=50)
        p.add_argument("--seed", type=int, default=None, help="defaults to $DUMP_SEED, then 0")
        p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("calibrate", help="smallest dummy count meeting a privacy target")
    p.add_argument("--protocol", choices=("pure", "mix", "grr"), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    budget(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("run", help="calibrate and run repeated experiments")
    p.add_argument("--protocol", choices=("pure", "mix", "grr"), required=True)
    budget(p)
    experiment(p)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--estimate", action="store_true", help="include the mean estimate vector")
    p.add_argument("--clip", action="store_true", help="clip the printed estimate to [0, 1]")
    p.add_argument("--no-timing", action="store_true", help="omit wall_time")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="protocols over an epsilon grid, as CSV")
    p.add_argument("--protocols", default="pure,mix", help="comma list of pure, mix, grr")
    p.add_argument("--epsilon-grid", type=_float_list, default=list(DEFAULT_EPSILON_GRID))
    budget(p, with_epsilon=False)
    experiment(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("verify", help="run an oracle suite")
    p.add_argument("--suite", choices=(*oracle.SUITES, "all"), default="all")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
