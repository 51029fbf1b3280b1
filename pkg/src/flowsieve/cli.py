"""Command-line front end: ingest -> detect -> evaluate -> report.

Subcommands: ``detect`` (find the top flow block in a transaction
file), ``inject`` (emit a dataset with a planted flow plus its truth
file), ``sweep`` (injection density sweep producing an F-measure curve
and its area), ``surprise`` (extreme-value tail score of a detected
block), and ``bench`` (detector wall-time scaling table).

Every subcommand is a pure function of its input files, flags, and the
single ``--seed`` flag; reruns write identical bytes (bench timing
columns excepted). Internal generators derive child seeds as
``numpy.random.SeedSequence([seed, slot])`` with a fixed slot per
purpose: 0 injection, 1 flow sampling, 2 background generation, 3
benchmark tensors.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time

import numpy as np

from .errors import DataError, FlowSieveError, NumericError
from .evaluation import CurvePoint, fauc, f_measure, gp_fit, sample_flow_masses, surprisingness
from .ingest import IngestConfig, load_transactions, write_transactions
from .injection import (
    InjectionConfig,
    density_sweep,
    inject,
    random_background,
    synthetic_tensor_pair,
    write_truth,
)
from .metric import MetricParams
from .peeling import detect
from .tensors import FiberKey, FlowBlock, build_coupled, total_block_mass

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(ValueError):
    """Flag combination or value the CLI cannot act on."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args) or EXIT_OK
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, FlowSieveError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="flowsieve",
                     description="Dense two-step transfer flow detection")
    parser.add_argument("--verbose", action="store_true",
                        help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", parents=[_ingest_flags()],
                       help="detect the top flow block in a transaction file")
    p.add_argument("input", help="transaction file")
    p.add_argument("--alpha", type=float, default=0.8,
                   help="imbalance cost rate in [0, 1] (default 0.8)")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.add_argument("--output", help="result file (default stdout)")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("inject", parents=[_ingest_flags(), _background_flags(),
                                          _injection_flags()],
                       help="emit a dataset with one planted flow")
    p.add_argument("--output", required=True, help="dataset file to write")
    p.add_argument("--truth-output", required=True, help="truth file to write")
    p.add_argument("--roles-output", metavar="PREFIX",
                   help="also write PREFIX.x/.y/.z role files for re-ingest")
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("sweep", parents=[_ingest_flags(), _background_flags(),
                                         _injection_flags()],
                       help="injection density sweep with F-measure curve")
    p.add_argument("--alpha", type=float, default=0.8)
    p.add_argument("--sweep-money", help="comma-separated injected totals")
    p.add_argument("--sweep-accounts", help="comma-separated group-size scales")
    p.add_argument("--output", required=True, help="curve file to write")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("surprise", parents=[_ingest_flags()],
                       help="extreme-value surprisingness of a detected block")
    p.add_argument("input", help="transaction file")
    p.add_argument("--block", required=True, help="detect result file (text or json)")
    p.add_argument("--samples", type=int, default=5000,
                   help="random same-size flows to sample (default 5000)")
    p.add_argument("--epsilon", type=float, default=0.1,
                   help="tail fraction fitted (default 0.1)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.add_argument("--output", help="result file (default stdout)")
    p.set_defaults(func=cmd_surprise)

    p = sub.add_parser("bench", help="detector wall-time scaling table")
    p.add_argument("--sizes", default="10000,100000,1000000",
                   help="comma-separated coalesced entry counts")
    p.add_argument("--alpha", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", help="CSV file for (entries, seconds) rows")
    p.set_defaults(func=cmd_bench)
    return parser


def _ingest_flags() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    g = shared.add_argument_group("ingest")
    g.add_argument("--time-bin", type=float, default=1.0,
                   help="time bin width in seconds (default 1)")
    g.add_argument("--time-origin", type=float, default=None,
                   help="bin origin timestamp (default: earliest in file)")
    g.add_argument("--role-ratio", type=float, default=2.0,
                   help="in/out ratio splitting roles (default 2)")
    g.add_argument("--attr", action="append", metavar="COLUMN",
                   help="extra attribute column (repeatable)")
    g.add_argument("--delimiter", default=",")
    g.add_argument("--max-malformed", type=int, default=100)
    g.add_argument("--x-role-file")
    g.add_argument("--y-role-file")
    g.add_argument("--z-role-file")
    return shared


def _background_flags() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    g = shared.add_argument_group("background")
    g.add_argument("--base", help="background transaction file")
    g.add_argument("--random-background", action="store_true",
                   help="generate a uniform random background instead")
    g.add_argument("--bg-x", type=int, default=2000)
    g.add_argument("--bg-y", type=int, default=2300)
    g.add_argument("--bg-z", type=int, default=7000)
    g.add_argument("--bg-records", type=int, default=100_000)
    g.add_argument("--bins", type=int, default=730,
                   help="time-bin count of the random background")
    g.add_argument("--bg-attr", action="append", metavar="NAME:COUNT",
                   help="extra attribute mode of the random background")
    return shared


def _injection_flags() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    g = shared.add_argument_group("injection")
    g.add_argument("--nx", type=int, default=5)
    g.add_argument("--ny", type=int, default=10)
    g.add_argument("--nz", type=int, default=5)
    g.add_argument("--total", type=float, default=1e7,
                   help="injected dirty money (default 1e7)")
    g.add_argument("--edge-prob", type=float, default=1.0)
    g.add_argument("--dirichlet-scale", type=float, default=100.0)
    g.add_argument("--camouflage-max", type=float, default=100_000.0)
    g.add_argument("--camouflage-cap", type=float, default=0.01,
                   help="residue cap as a fraction of a middle account's intake")
    g.add_argument("--seed", type=int, default=0)
    return shared


# -- subcommands -------------------------------------------------------------


def cmd_detect(args) -> int:
    _require(0.0 <= args.alpha <= 1.0, "--alpha must be in [0, 1]")
    ing = load_transactions(args.input, _ingest_config(args))
    tensors = build_coupled(ing.records, ing.x_ids, ing.y_ids, ing.z_ids, ing.schema)
    result = detect(tensors, MetricParams(args.alpha))
    _emit(args, _format_result(_result_dict(result), args.json))
    return EXIT_OK


def cmd_inject(args) -> int:
    records, roles, schema = _resolve_base(args)
    cfg = _injection_config(args)
    dataset, truth = inject(records, roles, cfg, schema=schema)
    write_transactions(args.output, dataset, schema, delimiter=args.delimiter)
    write_truth(args.truth_output, truth)
    if args.roles_output:
        for role, ids in zip("xyz", roles):
            with open(f"{args.roles_output}.{role}", "w") as fh:
                fh.write("\n".join(str(a) for a in sorted(ids)) + "\n")
    print(f"wrote {len(dataset)} records to {args.output}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    _require(0.0 <= args.alpha <= 1.0, "--alpha must be in [0, 1]")
    _require(bool(args.sweep_money) != bool(args.sweep_accounts),
             "give exactly one of --sweep-money and --sweep-accounts")
    records, roles, schema = _resolve_base(args)
    cfg = _injection_config(args)
    values = _parse_floats(args.sweep_money or args.sweep_accounts)
    _require(len(values) >= 2, "a sweep needs at least two points")
    _require(all(b > a for a, b in zip(values, values[1:])),
             "sweep values must be strictly increasing")
    if args.sweep_money:
        datasets = density_sweep(records, roles, cfg, money_values=values,
                                 schema=schema)
    else:
        datasets = density_sweep(records, roles, cfg, account_scales=values,
                                 schema=schema)
    lo, hi = values[0], values[-1]
    params = MetricParams(args.alpha)
    curve = []
    for point in datasets:
        tensors = build_coupled(point.records, *roles, schema)
        result = detect(tensors, params)
        score = f_measure(result.block.account_sets(), point.truth)
        curve.append(CurvePoint((point.sweep_value - lo) / (hi - lo), score))
    lines = ["density,f_measure"]
    lines += [f"{p.density!r},{p.f_measure!r}" for p in curve]
    with open(args.output, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"fauc: {fauc(curve)!r}")
    return EXIT_OK


def cmd_surprise(args) -> int:
    _require(0.0 < args.epsilon < 1.0, "--epsilon must be in (0, 1)")
    _require(args.samples >= 1, "--samples must be positive")
    ing = load_transactions(args.input, _ingest_config(args))
    tensors = build_coupled(ing.records, ing.x_ids, ing.y_ids, ing.z_ids, ing.schema)
    block = _read_block(args.block)
    observed = total_block_mass(tensors, block)
    sizes = (len(block.x_set), len(block.middle_accounts()), len(block.z_set))
    masses = sample_flow_masses(tensors, sizes, args.samples,
                                seed=_child_seed(args.seed, 1))
    fit = gp_fit(masses, args.epsilon)
    score = surprisingness(fit, observed)
    payload = {
        "surprisingness": score,
        "observed_mass": observed,
        "threshold": fit.threshold,
        "shape": fit.shape,
        "scale": fit.scale,
        "n_samples": fit.n_samples,
        "epsilon": fit.epsilon,
    }
    _emit(args, _format_result(payload, args.json))
    return EXIT_OK


def cmd_bench(args) -> int:
    _require(0.0 <= args.alpha <= 1.0, "--alpha must be in [0, 1]")
    sizes = [int(v) for v in _parse_floats(args.sizes)]
    _require(all(s > 0 for s in sizes), "sizes must be positive")
    params = MetricParams(args.alpha)
    rows = []
    for i, size in enumerate(sizes):
        tensors = synthetic_tensor_pair(size, seed=_child_seed(args.seed, 3, i))
        start = time.perf_counter()
        detect(tensors, params)
        elapsed = time.perf_counter() - start
        rows.append((tensors.n_entries, elapsed))
        print(f"entries={tensors.n_entries} seconds={elapsed:.3f}")
    if len(rows) >= 2:
        logs = np.log([r[0] for r in rows]), np.log([r[1] for r in rows])
        slope = float(np.polyfit(logs[0], logs[1], 1)[0])
        print(f"exponent: {slope:.3f}")
    if args.output:
        with open(args.output, "w") as fh:
            fh.write("entries,seconds\n")
            fh.writelines(f"{n},{s!r}\n" for n, s in rows)
    return EXIT_OK


# -- helpers -----------------------------------------------------------------


def _require(cond: bool, message: str):
    if not cond:
        raise UsageError(message)


def _child_seed(seed: int, *slots: int) -> int:
    return int(np.random.SeedSequence([seed, *slots]).generate_state(1)[0])


def _parse_floats(spec: str) -> list:
    try:
        return [float(v) for v in spec.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad numeric list {spec!r}: {exc}") from None


def _ingest_config(args) -> IngestConfig:
    try:
        return IngestConfig(
            time_bin_width=args.time_bin,
            time_origin=args.time_origin,
            role_ratio=args.role_ratio,
            extra_attr_columns=tuple(args.attr or ()),
            delimiter=args.delimiter,
            max_malformed=args.max_malformed,
            x_role_file=args.x_role_file,
            y_role_file=args.y_role_file,
            z_role_file=args.z_role_file,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _injection_config(args) -> InjectionConfig:
    try:
        return InjectionConfig(
            n_x=args.nx, n_y=args.ny, n_z=args.nz,
            total_dirty_money=args.total,
            edge_prob=args.edge_prob,
            dirichlet_scale=args.dirichlet_scale,
            camouflage_max=args.camouflage_max,
            camouflage_cap_frac=args.camouflage_cap,
            rng_seed=_child_seed(args.seed, 0),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _resolve_base(args):
    if args.random_background and args.base:
        raise UsageError("--base and --random-background are mutually exclusive")
    if args.random_background:
        extra = []
        for spec in args.bg_attr or ():
            name, _, count = spec.partition(":")
            try:
                count = int(count)
            except ValueError:
                raise UsageError(f"bad --bg-attr {spec!r}, want NAME:COUNT") from None
            _require(count >= 1 and bool(name), f"bad --bg-attr {spec!r}")
            extra.append((name, tuple(f"{name}{i}" for i in range(count))))
        return random_background(
            args.bg_x, args.bg_y, args.bg_z, args.bg_records, args.bins,
            extra_attrs=tuple(extra), seed=_child_seed(args.seed, 2),
        )
    if args.base:
        ing = load_transactions(args.base, _ingest_config(args))
        return ing.records, (ing.x_ids, ing.y_ids, ing.z_ids), ing.schema
    raise UsageError("give --base FILE or --random-background")


def _result_dict(result) -> dict:
    block = result.block
    return {
        "score_algorithmic": result.score_algorithmic,
        "score_exact": result.score_exact,
        "iterations": result.iterations,
        "x_accounts": sorted(block.x_set),
        "y_accounts": sorted(block.middle_accounts()),
        "z_accounts": sorted(block.z_set),
        "fibers": [[k.y, *k.attrs] for k in sorted(block.fiber_set)],
    }


def _format_result(payload: dict, as_json: bool) -> str:
    if as_json:
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"
    lines = []
    for key, value in payload.items():
        if isinstance(value, float):
            lines.append(f"{key}: {value!r}")
        elif isinstance(value, list) and value and isinstance(value[0], list):
            lines.append(f"{key}: " + " ".join(
                "|".join(str(part) for part in item) for item in value))
        elif isinstance(value, list):
            lines.append(f"{key}: " + " ".join(str(v) for v in value))
        else:
            lines.append(f"{key}: {value}")
    return "\n".join(lines) + "\n"


def _emit(args, text: str):
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _read_block(path) -> FlowBlock:
    """Parse a detect result file (json or text) back into a block."""
    try:
        raw = open(path).read()
    except OSError as exc:
        raise DataError(f"cannot read block file {path}: {exc}") from exc
    if raw.lstrip().startswith("{"):
        payload = json.loads(raw)
        fibers = [FiberKey(item[0], tuple(item[1:])) for item in payload["fibers"]]
        return FlowBlock(payload["x_accounts"], payload["z_accounts"], fibers)
    fields = {}
    for line in raw.splitlines():
        key, sep, value = line.partition(":")
        if sep:
            fields[key.strip()] = value.strip()
    try:
        xs = fields["x_accounts"].split()
        zs = fields["z_accounts"].split()
        fibers = []
        for token in fields["fibers"].split():
            y, *attrs = token.split("|")
            fibers.append(FiberKey(y, tuple(_parse_attr(a) for a in attrs)))
    except KeyError as exc:
        raise DataError(f"block file {path} is missing field {exc}") from None
    return FlowBlock(xs, zs, fibers)


def _parse_attr(token: str):
    try:
        return int(token)
    except ValueError:
        return token


if __name__ == "__main__":
    sys.exit(main())
