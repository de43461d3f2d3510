"""Command-line experiments with machine-readable output.

Every subcommand writes CSV (default) or JSON. CSV output starts with
``# key=value`` metadata lines (tool version, seed, config hash) followed by a
header row; JSON carries the same rows plus a ``metadata`` object. Nothing
time-dependent is written, so a rerun with the same configuration is
byte-identical.

Exit codes: 0 success, 1 usage or input error, 2 capacity exceeded,
3 a checked property failed.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import os
import sys
from dataclasses import dataclass, field

from . import __version__
from .circuits import (
    apply_tuple,
    build_lattice_circuit,
    compile_circuit,
    depth,
    from_json,
    invert,
    predicted_depth,
    suggest_base_layers,
    to_json,
)
from .lattice import (
    CapacityError,
    LatticeError,
    LatticeShape,
    count_color_classes,
    format_tuple_line,
    parse_tuple_line,
    region_census,
    standard_start,
)
from .rng import RngSeed, resolve_seed

EXIT_OK, EXIT_USAGE, EXIT_CAPACITY, EXIT_PROPERTY = 0, 1, 2, 3

SCHEMA_VERSION = 1

# Options that do not influence results and are left out of the config hash.
_UNHASHED = {"out", "format", "threads", "config", "input", "handler"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class Output:
    command: str
    columns: list[str]
    rows: list[dict] = field(default_factory=list)
    ok: bool = True

    def add(self, **row) -> None:
        self.rows.append(row)


# -- configuration ---------------------------------------------------------------


def read_config(path: str) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` comments; keys use flag names with - or _."""
    cp = configparser.ConfigParser(interpolation=None)
    with open(path, encoding="utf-8") as fh:
        cp.read_string("[config]\n" + fh.read())
    return {k.replace("-", "_"): v for k, v in cp["config"].items()}


def config_hash(args: argparse.Namespace) -> str:
    items = {k: v for k, v in sorted(vars(args).items()) if k not in _UNHASHED}
    blob = json.dumps(items, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _metadata(args: argparse.Namespace) -> dict:
    return {
        "tool": "latticeperm",
        "version": __version__,
        "command": args.command,
        "seed": args.seed,
        "config_hash": config_hash(args),
    }


# -- output ----------------------------------------------------------------------


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return ""
    return repr(v) if isinstance(v, float) else str(v)


def render(out: Output, args: argparse.Namespace) -> str:
    meta = _metadata(args)
    if args.format == "json":
        doc = {
            "schema": f"latticeperm.{out.command}",
            "schema_version": SCHEMA_VERSION,
            "metadata": meta,
            "columns": out.columns,
            "rows": out.rows,
            "ok": out.ok,
        }
        return json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n"
    buf = io.StringIO()
    for k, v in meta.items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(out.columns)
    for row in out.rows:
        w.writerow([_cell(row.get(c)) for c in out.columns])
    return buf.getvalue()


def _write(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _shape(args) -> LatticeShape:
    return LatticeShape(args.dims, args.side, args.k)


# -- subcommands -------------------------------------------------------------------


def cmd_census(args) -> Output:
    shape = _shape(args)
    out = Output("census", [
        "dims", "side", "k", "safe", "coll", "ident", "distinct", "coll_ratio",
        "coll_bound", "color_classes", "color_class_bound", "method",
    ])
    census = region_census(shape, args.method, threads=args.threads)
    methods = census.method
    if args.method == "auto" and census.method == "enumerate":
        formula = region_census(shape, "formula")
        if formula.as_tuple() != census.as_tuple():
            out.ok = False
        methods = "enumerate+formula"
    classes = count_color_classes(shape)
    out.ok &= classes.holds and census.coll_ratio <= census.coll_bound
    out.add(
        dims=shape.dims, side=shape.side, k=shape.k, safe=census.safe, coll=census.coll,
        ident=census.ident, distinct=census.distinct, coll_ratio=census.coll_ratio,
        coll_bound=census.coll_bound, color_classes=classes.exact,
        color_class_bound=classes.bound, method=methods,
    )
    return out


def cmd_spectral(args) -> Output:
    from .walks import check_operator_identities, spectral_norm_diff

    shape = _shape(args)
    out = Output("spectral", ["dims", "side", "k", "statistic", "value", "tolerance", "pass", "witness"])
    base = dict(dims=shape.dims, side=shape.side, k=shape.k)
    res = spectral_norm_diff(shape, seed=args.seed)
    out.add(**base, statistic="norm", value=res.value)
    out.add(**base, statistic="iterations", value=res.iterations)
    if res.oracle is not None:
        ok = res.oracle_delta <= 1e-8
        out.add(**base, statistic="oracle", value=res.oracle)
        out.add(**base, statistic="oracle_delta", value=res.oracle_delta, tolerance=1e-8, **{"pass": ok})
        out.ok &= ok
    for rec in check_operator_identities(shape, seed=args.seed):
        out.add(**base, statistic=rec.identity, value=rec.residual, tolerance=rec.tolerance,
                witness=rec.witness, **{"pass": rec.passed})
        out.ok &= rec.passed
    return out


def cmd_mixing(args) -> Output:
    from .mixing import exact_tv_trajectory, mc_tv_estimate

    shape = _shape(args)
    X = parse_tuple_line(args.start, args.dims, args.side) if "|" in args.start else standard_start(shape, args.start)
    if X.shape != shape:
        raise UsageError(f"start tuple has shape {X.shape}, expected {shape}")
    out = Output("mixing", ["t", "statistic", "value"])
    if shape.enumerable():
        traj = exact_tv_trajectory(X, args.t_max)
        for t, v in traj.points():
            out.add(t=t, statistic="tv_exact", value=v)
        out.ok &= traj.is_nonincreasing()
    elif not args.samples:
        raise CapacityError(f"{shape} is too large for exact trajectories; pass --samples")
    if args.samples:
        pts = mc_tv_estimate(
            X, args.samples, args.t_max, sampler=args.sampler, base_layers=args.base_layers,
            seed=RngSeed(args.seed), threads=args.threads, slice_marginal=args.slice_marginal,
        )
        for p in pts:
            out.add(t=p.t, statistic="tv_mc", value=p.tv)
            out.add(t=p.t, statistic="bias", value=p.bias)
            out.add(t=p.t, statistic="sigma", value=p.sigma)
            out.add(t=p.t, statistic="low_sample_warning", value=p.warning)
            if p.slice_tv is not None:
                out.add(t=p.t, statistic="slice_tv_mc", value=p.slice_tv)
                out.add(t=p.t, statistic="slice_bias", value=p.slice_bias)
            out.ok &= p.distinct_ok
    return out


def cmd_depth(args) -> Output:
    out = Output("depth", ["dims", "side", "t", "base_depth", "constructed", "predicted", "match"])
    base = args.base_layers or suggest_base_layers(args.side, args.k)
    for d in args.dims_list:
        for t in args.t_list:
            c = build_lattice_circuit(d, args.side, t, base, RngSeed(args.seed), threads=args.threads)
            got, want = depth(c), predicted_depth(d, t, base)
            out.add(dims=d, side=args.side, t=t, base_depth=base, constructed=got, predicted=want, match=got == want)
            out.ok &= got == want
    return out


def cmd_simulate(args) -> str:
    if args.circuit:
        with open(args.circuit, encoding="utf-8") as fh:
            circuit = from_json(fh.read())
    else:
        base = args.base_layers or suggest_base_layers(args.side, args.k)
        circuit = build_lattice_circuit(args.dims, args.side, args.t, base, RngSeed(args.seed), threads=args.threads)
    if args.save_circuit:
        with open(args.save_circuit, "w", encoding="utf-8") as fh:
            fh.write(to_json(circuit, dims=args.dims, side=args.side, t=args.t, seed=args.seed))
    if args.invert:
        circuit = invert(circuit)
    compiled = compile_circuit(circuit)
    src = open(args.input, encoding="utf-8") if args.input else sys.stdin
    lines = [f"# {k}={v}" for k, v in _metadata(args).items()]
    try:
        for line in src:
            if not line.strip() or line.startswith("#"):
                continue
            X = parse_tuple_line(line, args.dims, args.side)
            lines.append(format_tuple_line(apply_tuple(compiled, X)))
    finally:
        if args.input:
            src.close()
    return "\n".join(lines) + "\n"


# -- parser --------------------------------------------------------------------------


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value file; flags override it")
    common.add_argument("--side", type=int, default=None,
                        help="lattice side s (default 2; 3 for depth and simulate)")
    common.add_argument("--k", type=int, default=2, help="tuple size k (default 2)")
    common.add_argument("--seed", type=int, default=None, help="seed (default $LATTICEPERM_SEED or 0)")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker threads; results do not depend on it")
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    shaped = argparse.ArgumentParser(add_help=False, parents=[common])
    shaped.add_argument("--dims", type=int, default=2, help="lattice dimension D (default 2)")

    p = _Parser(prog="latticeperm", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"latticeperm {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("census", parents=[shaped], formatter_class=argparse.RawDescriptionHelpFormatter,
                       help="region sizes and color-class counts",
                       epilog="CSV columns: dims,side,k,safe,coll,ident,distinct,coll_ratio,coll_bound,"
                              "color_classes,color_class_bound,method")
    s.add_argument("--method", choices=("auto", "enumerate", "formula"), default="auto",
                   help="auto enumerates when feasible and cross-checks the closed form")
    s.set_defaults(handler=cmd_census)

    s = sub.add_parser("spectral", parents=[shaped], formatter_class=argparse.RawDescriptionHelpFormatter,
                       help="distance of row-column-row walk to the global walk, plus identity checks",
                       epilog="CSV columns: dims,side,k,statistic,value,tolerance,pass,witness\n"
                              "statistics: norm, iterations, oracle, oracle_delta, one row per identity")
    s.set_defaults(handler=cmd_spectral)

    s = sub.add_parser("mixing", parents=[shaped], formatter_class=argparse.RawDescriptionHelpFormatter,
                       help="exact and Monte Carlo TV-to-uniform trajectories",
                       epilog="CSV columns: t,statistic,value\n"
                              "statistics: tv_exact, tv_mc, bias, sigma, low_sample_warning,"
                              " slice_tv_mc, slice_bias")
    s.add_argument("--t-max", type=int, default=8)
    s.add_argument("--samples", type=int, default=0, help="Monte Carlo trials (0 = exact only)")
    s.add_argument("--sampler", choices=("idealized", "circuit", "uniform"), default="idealized")
    s.add_argument("--base-layers", type=int, default=None, help="brickwork layers for --sampler circuit")
    s.add_argument("--start", default="safe",
                   help="'safe', 'coll', or an explicit tuple line such as '+-+-|--++'")
    s.add_argument("--slice-marginal", action="store_true",
                   help="also report TV of the first axis-0 slice marginal")
    s.set_defaults(handler=cmd_mixing)

    s = sub.add_parser("depth", parents=[common], formatter_class=argparse.RawDescriptionHelpFormatter,
                       help="constructed vs predicted circuit depth",
                       epilog="CSV columns: dims,side,t,base_depth,constructed,predicted,match\n"
                              "--dims and --t accept comma-separated lists")
    s.add_argument("--dims", dest="dims_list", type=_int_list, default=[2, 3, 4])
    s.add_argument("--t", dest="t_list", type=_int_list, default=[0, 1, 2])
    s.add_argument("--base-layers", type=int, default=None)
    s.set_defaults(handler=cmd_depth)

    s = sub.add_parser("simulate", parents=[shaped], formatter_class=argparse.RawDescriptionHelpFormatter,
                       help="apply a seeded lattice circuit to tuples read line by line",
                       epilog="Input/output lines: members joined by '|', each a row-major string of '+'/'-'.\n"
                              "Lines starting with '#' are skipped, so output can be fed back with --invert.")
    s.add_argument("--t", type=int, default=1)
    s.add_argument("--base-layers", type=int, default=None)
    s.add_argument("--invert", action="store_true", help="apply the inverse circuit")
    s.add_argument("--input", help="input file (default stdin)")
    s.add_argument("--circuit", help="load the circuit from a JSON document instead of sampling")
    s.add_argument("--save-circuit", help="write the circuit JSON document here")
    s.set_defaults(handler=cmd_simulate)
    return p


def parse_args(argv: list[str] | None) -> argparse.Namespace:
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        try:
            values = read_config(known.config)
        except (OSError, configparser.Error) as exc:
            parser.exit(EXIT_USAGE, f"latticeperm: cannot read config: {exc}\n")
        if "t" in values:
            values.setdefault("t_list", values["t"])
        if "dims" in values:
            values.setdefault("dims_list", values["dims"])
        for action in parser._subparsers._group_actions:
            for sp in action.choices.values():
                sp.set_defaults(**values)
    args = parser.parse_args(argv)
    args.seed = resolve_seed(args.seed)
    if args.side is None:
        args.side = 3 if args.command in ("depth", "simulate") else 2
    return args


def main(argv: list[str] | None = None) -> int:
    args = parse_args(argv)
    try:
        result = args.handler(args)
    except CapacityError as exc:
        print(f"latticeperm: capacity exceeded: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (LatticeError, UsageError, OSError) as exc:
        print(f"latticeperm: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if isinstance(result, str):
        _write(result, args.out)
        return EXIT_OK
    _write(render(result, args), args.out)
    if not result.ok:
        print("latticeperm: property check failed", file=sys.stderr)
        return EXIT_PROPERTY
    return EXIT_OK
