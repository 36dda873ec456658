"""Command-line interface: ``margint simulate | effect | benchmark | rank``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from .curve import deciles
from .errors import DataError, GraphError, InvalidAdjustmentSetError, MargintError, NumericalError
from .graph import (
    AdjustmentSet,
    Dag,
    is_valid_backdoor_set,
    order_superset,
    parent_set,
    random_dag,
    read_edgelist,
    write_edgelist,
)
from .harness import (
    METHODS,
    ExperimentSpec,
    interaction_study,
    known_dag_study,
    misspecification_study,
    perturbed_dag_study,
    stability_select,
    summarize,
    write_summary,
    write_table,
)
from .pathsim import PathSimConfig, entire_path_effect, fit_sem, partial_path_effect
from .sem import PRESETS, Dataset, make_gp_sem, make_sigmoid_sem, oracle_effect, preset_sem, simulate
from .smint import SmintConfig, Transform, smint_estimate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
EXPERIMENTS = ("known-dag", "perturbed", "nonadd", "interaction")

log = logging.getLogger("margint")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="margint", description="Total causal effects by marginal integration.")
    parser.add_argument("--verbose", "-v", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="simulate data from a preset or a random SEM")
    src = sim.add_mutually_exclusive_group()
    src.add_argument("--preset", choices=PRESETS, help="fixed four-node example model")
    src.add_argument("--p", type=int, help="number of variables of a random DAG")
    sim.add_argument("--pc", type=float, help="edge probability (default 2/(p-1))")
    sim.add_argument("--mech", choices=("sigmoid", "gp"), default="sigmoid", help="edge function family")
    sim.add_argument("--n", type=int, required=True, help="number of rows")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", default="data.csv", help="data CSV path")
    sim.add_argument("--dag-out", help="edge-list path (default: <out stem>.edges)")
    sim.add_argument("--oracle", help="pairs 'x:y,x:y' (names or indices) to write true effect curves for")
    sim.add_argument("--oracle-dir", help="directory for oracle curves (default: next to --out)")

    eff = sub.add_parser("effect", help="estimate E[Y | do(X = v)] on a grid")
    eff.add_argument("--data", required=True, help="data CSV")
    eff.add_argument("--x", required=True, help="intervention column (name or index)")
    eff.add_argument("--y", required=True, help="response column (name or index)")
    eff.add_argument("--method", choices=METHODS, default="smint")
    adj = eff.add_mutually_exclusive_group()
    adj.add_argument("--adjust", help="explicit adjustment columns, comma separated ('' for none)")
    adj.add_argument("--order", help="order file (one column name per line); adjust for preceding variables")
    eff.add_argument("--dag", help="DAG edge list; adjustment defaults to the parents of X")
    eff.add_argument("--p-max", type=int, help="with --order: adjust for at most this many predecessors")
    eff.add_argument("--validate", action="store_true", help="check the backdoor criterion against --dag")
    eff.add_argument("--grid", default="deciles", help="'deciles' or comma-separated values")
    eff.add_argument("--transform", default="identity", help="identity, square or indicator:<c>")
    eff.add_argument("--B", type=int, default=1000, help="Monte-Carlo size for path methods")
    eff.add_argument("--noise", choices=("gaussian", "bootstrap"), default="gaussian")
    eff.add_argument("--offpath", choices=("independent", "row"), default="independent")
    eff.add_argument("--b-max", type=int, default=20, help="maximal boosting iterations")
    eff.add_argument("--seed", type=int, default=0)
    eff.add_argument("--out", default="effect.csv", help="curve CSV (sidecar <stem>.meta.jsonl)")

    ben = sub.add_parser("benchmark", help="reproduce a simulation study")
    ben.add_argument("--experiment", required=True, help=f"one of {', '.join(EXPERIMENTS)}")
    ben.add_argument("--p", type=int, default=10)
    ben.add_argument("--n", type=int, default=500)
    ben.add_argument("--pc", type=float, help="edge probability (default 2/(p-1))")
    ben.add_argument("--mech", choices=("sigmoid", "gp"), default="sigmoid")
    ben.add_argument("--replications", type=int, default=10)
    ben.add_argument("--methods", default=",".join(METHODS), help="comma-separated method list")
    ben.add_argument("--hr", type=_int_list, default=[], help="perturbation distances, e.g. 20,40,60")
    ben.add_argument("--hr-relative", type=_float_list, default=[],
                     help="perturbation distances as multiples of the edge count")
    ben.add_argument("--pairs", type=int, help="pairs per replication (default: all; 20 when perturbed)")
    ben.add_argument("--seed", type=int, default=0)
    ben.add_argument("--jobs", type=int, default=1, help="worker processes for replications")
    ben.add_argument("--out-dir", default=".", help="directory for results.csv and summary.json")

    rank = sub.add_parser("rank", help="stability-selected ranking of total effects")
    rank.add_argument("--data", required=True)
    struct = rank.add_mutually_exclusive_group()
    struct.add_argument("--dag", help="DAG edge list (adjust for parents)")
    struct.add_argument("--order", help="order file (adjust for preceding variables)")
    rank.add_argument("--p-max", type=int, help="with --order: at most this many predecessors")
    rank.add_argument("--runs", type=int, default=100)
    rank.add_argument("--top", type=int, default=30, help="pairs kept per subsample")
    rank.add_argument("--tau", type=float, default=0.66, help="selection frequency threshold")
    rank.add_argument("--seed", type=int, default=0)
    rank.add_argument("--jobs", type=int, default=1, help="accepted for interface symmetry; runs are sequential")
    rank.add_argument("--out", default="ranking.csv")
    return parser


def _read_order(path, data: Dataset) -> list[int]:
    try:
        names = [line.strip() for line in Path(path).read_text().splitlines() if line.strip()]
    except OSError as exc:
        raise DataError(f"cannot read order file {path}: {exc}") from None
    order = [data.index(c) for c in names]
    if sorted(order) != list(range(data.p)):
        raise DataError("order file must list every column exactly once")
    return order


def _read_dag(path, data: Dataset) -> Dag:
    try:
        dag = read_edgelist(path)
    except OSError as exc:
        raise DataError(f"cannot read DAG file {path}: {exc}") from None
    if dag.p != data.p:
        raise DataError(f"DAG has {dag.p} nodes but data has {data.p} columns")
    return dag


def _grid(spec: str, column: np.ndarray) -> np.ndarray:
    if spec == "deciles":
        return deciles(column)
    try:
        values = np.array([float(v) for v in spec.split(",") if v.strip()])
    except ValueError:
        raise UsageError(f"bad grid {spec!r}") from None
    if values.size == 0:
        raise UsageError("empty grid")
    return np.sort(values)


def cmd_simulate(args) -> int:
    if args.preset:
        sem = preset_sem(args.preset)
        dag = sem.dag
    else:
        if args.p is None:
            raise UsageError("simulate needs --preset or --p")
        pc = args.pc if args.pc is not None else min(1.0, 2.0 / max(args.p - 1, 1))
        dag = random_dag(args.p, pc, np.random.SeedSequence(args.seed, spawn_key=(0,)))
        make = make_sigmoid_sem if args.mech == "sigmoid" else make_gp_sem
        sem = make(dag, np.random.SeedSequence(args.seed, spawn_key=(1,)))
    if args.n < 1:
        raise UsageError("--n must be positive")
    data = simulate(sem, args.n, args.seed)
    out = Path(args.out)
    data.to_csv(out)
    dag_out = Path(args.dag_out) if args.dag_out else out.with_suffix(".edges")
    write_edgelist(dag, dag_out, comment=" ".join(f"{i}={c}" for i, c in enumerate(data.columns)))
    if args.oracle:
        odir = Path(args.oracle_dir) if args.oracle_dir else out.parent
        odir.mkdir(parents=True, exist_ok=True)
        for i, pair in enumerate(args.oracle.split(",")):
            x, sep, y = pair.partition(":")
            if not sep:
                raise UsageError(f"oracle pair {pair!r} must look like x:y")
            xi, yi = data.index(x.strip()), data.index(y.strip())
            grid = deciles(data.values[:, xi])
            curve = oracle_effect(sem, xi, yi, grid, 5 * args.n, np.random.SeedSequence(args.seed, spawn_key=(2, i)))
            curve.to_csv(odir / f"oracle_{data.columns[xi]}_{data.columns[yi]}.csv")
    log.info("wrote %s and %s", out, dag_out)
    return EXIT_OK


def _adjustment(args, data: Dataset, x: int, dag: Dag | None) -> AdjustmentSet:
    if args.adjust is not None:
        cols = [c.strip() for c in args.adjust.split(",") if c.strip()]
        return AdjustmentSet(frozenset(data.index(c) for c in cols), "explicit")
    if args.order is not None:
        order = _read_order(args.order, data)
        return order_superset(order, x, args.p_max if args.p_max is not None else data.p)
    if dag is not None:
        return parent_set(dag, x)
    raise UsageError("S-mint needs --adjust, --order or --dag")


def cmd_effect(args) -> int:
    data = Dataset.read_csv(args.data)
    x, y = data.index(args.x), data.index(args.y)
    if x == y:
        raise UsageError("--x and --y must differ")
    dag = _read_dag(args.dag, data) if args.dag else None
    grid = _grid(args.grid, data.values[:, x])

    if args.method in ("smint", "additive"):
        s = _adjustment(args, data, x, dag)
        if y in s.members:
            raise InvalidAdjustmentSetError(f"adjustment set contains the response {data.columns[y]}")
        if args.validate:
            if dag is None:
                raise UsageError("--validate needs --dag")
            if not is_valid_backdoor_set(dag, x, y, s.members):
                raise InvalidAdjustmentSetError(
                    f"{{{', '.join(data.columns[i] for i in s)}}} is not a valid adjustment set for "
                    f"{data.columns[x]} -> {data.columns[y]}")
        config = SmintConfig(b_max=args.b_max, transform=Transform.parse(args.transform))
        curve = smint_estimate(data, x, y, s, grid, config, boost=args.method == "smint")
        curve.metadata["provenance"] = s.provenance
    else:
        if dag is None:
            raise UsageError(f"{args.method} needs --dag")
        if args.transform != "identity":
            raise UsageError("--transform applies to smint and additive only")
        fitted = fit_sem(data, dag, args.noise, args.offpath)
        cfg = PathSimConfig(B=args.B, noise=args.noise, offpath=args.offpath, seed=args.seed)
        fn = entire_path_effect if args.method == "path-full" else partial_path_effect
        curve = fn(fitted, x, y, grid, cfg)
    curve.metadata["columns"] = [data.columns[x], data.columns[y]]
    curve.to_csv(args.out)
    log.info("wrote %s", args.out)
    return EXIT_OK


def cmd_benchmark(args) -> int:
    if args.experiment not in EXPERIMENTS:
        raise UsageError(f"unknown experiment {args.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    by: tuple[str, ...] = ("method",)
    if args.experiment == "nonadd":
        rows = misspecification_study(args.n, args.replications, args.seed)
    elif args.experiment == "interaction":
        rows = interaction_study(args.n, range(args.seed, args.seed + args.replications))
        for row in rows:
            row.update(method="smint", error=row["ise_smint"] / row["ise_additive"])
    else:
        try:
            spec = ExperimentSpec(p=args.p, n=args.n, pc=args.pc, mechanism=args.mech,
                                  replications=args.replications, methods=methods,
                                  h_list=tuple(args.hr), h_relative=tuple(args.hr_relative),
                                  n_pairs=args.pairs, seed=args.seed)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        if args.experiment == "known-dag":
            rows = known_dag_study(spec, jobs=args.jobs)
        else:
            if not (spec.h_list or spec.h_relative):
                raise UsageError("perturbed experiment needs --hr or --hr-relative")
            rows = perturbed_dag_study(spec, args.pairs or 20, jobs=args.jobs)
            by = ("h", "method") if spec.h_list and not spec.h_relative else ("h_relative", "method") \
                if spec.h_relative and not spec.h_list else ("h", "h_relative", "method")
    # wall-clock times vary run to run; keep them apart so result tables are reproducible
    timing_keys = ("seconds",)
    write_table([{k: v for k, v in r.items() if k not in timing_keys} for r in rows], out_dir / "results.csv")
    write_table([{k: v for k, v in r.items() if k in timing_keys or k in ("replication", "seed", "method", "h")}
                 for r in rows], out_dir / "timings.csv")
    summary = summarize(rows, by)
    write_summary({k: {f: v for f, v in e.items() if f != "seconds_median"} for k, e in summary.items()},
                  out_dir / "summary.json")
    for key, entry in summary.items():
        print(f"{key}\tmedian_error={entry.get('error_median', float('nan')):.6g}"
              f"\tmedian_seconds={entry.get('seconds_median', float('nan')):.3g}\tfailed={entry['failed']}")
    return EXIT_OK


def cmd_rank(args) -> int:
    data = Dataset.read_csv(args.data)
    if args.dag:
        structure = _read_dag(args.dag, data)
    elif args.order:
        structure = _read_order(args.order, data)
    else:
        raise UsageError("rank needs --dag or --order")
    try:
        selected = stability_select(data, structure, args.runs, args.top, args.tau, args.seed, args.p_max)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["source", "target", "strength", "frequency"])
        for r in selected:
            w.writerow([data.columns[r.source], data.columns[r.target], repr(r.strength), repr(r.frequency)])
    print(f"{len(selected)} pairs selected")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "effect": cmd_effect, "benchmark": cmd_benchmark, "rank": cmd_rank}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # --help exits 0, parse errors exit with EXIT_USAGE
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    warnings.simplefilter("default")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"margint {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"margint {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, GraphError, InvalidAdjustmentSetError, MargintError, OSError) as exc:
        print(f"margint {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
