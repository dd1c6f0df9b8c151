"""
Command-line driver.

Usage:
  band-chase reduce matrix.bnd --engine parallel --out bidiag.csv
  band-chase accuracy --precision f64 f32 --n 256 --bw 8 --trials 10
  band-chase tune --n 1024 --bw 32 --tilewidths 4 8 16 --chunk-widths 16 32
  band-chase occupancy 528 32
  band-chase occupancy --table
  band-chase bench --n 1024 2048 --bw 16 32 --tw 4

CSV goes to ``--out`` (``-`` is stdout); ``[tag]`` progress lines and logs go
to stderr. Exit codes: 0 ok, 1 usage/parse/config, 2 numerical invariant.
"""

from itertools import product
from pathlib import Path
from typing import Dict, List, Optional, Sequence
import argparse
import logging
import statistics
import sys
import time

from dotenv import load_dotenv
import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, model_validator
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table
from tqdm import tqdm

from band_chase.band_store import (
    BandedMatrix,
    BidiagonalResult,
    from_dense,
    random_banded,
    read_bnd,
    read_dense,
    storage_dtype,
)
from band_chase.chase import ReductionConfig, run_reduction_serial
from band_chase.config import PRECISIONS, Settings, default_tilewidth, load_settings
from band_chase.errors import (
    BadConfig,
    BadShape,
    BadSpec,
    FootprintOverflow,
    FormatError,
    LengthMismatch,
    NoConvergence,
    NotBanded,
    NotBidiagonal,
    OverlapError,
)
from band_chase.oracle import SPECTRA, accuracy_trial
from band_chase.schedule import (
    HARDWARE_ALUS,
    OccupancyModel,
    min_full_occupancy_size,
    run_reduction_parallel,
)


logger = logging.getLogger("band_chase")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2

_USAGE_ERRORS = (FormatError, BadConfig, BadSpec, BadShape, NotBanded, LengthMismatch, OSError)
_NUMERIC_ERRORS = (NotBidiagonal, NoConvergence, FootprintOverflow, OverlapError)

ACCURACY_COLUMNS = ["precision", "spectrum", "n", "bw", "tw", "trial", "rel_error", "scaled_error"]
TUNE_COLUMNS = ["tw", "chunk_width", "max_tasks", "repeats", "median_seconds", "rank", "winner"]
BENCH_COLUMNS = ["n", "bw", "tw", "engine", "workers", "seconds", "tasks", "rounds"]

FLOAT_FORMAT = "%.17g"


class TuneGrid(BaseModel):
    model_config = ConfigDict(frozen=True)

    tilewidths: List[int]
    chunk_widths: List[int]
    max_tasks: List[int]
    repeats: int = 3

    @model_validator(mode="after")
    def _check(self) -> "TuneGrid":
        for name in ("tilewidths", "chunk_widths", "max_tasks"):
            values = getattr(self, name)
            if not values:
                raise BadConfig(f"tuning grid: {name} is empty")
            if min(values) < 1:
                raise BadConfig(f"tuning grid: {name} must be positive, got {values}")
        if self.repeats < 1:
            raise BadConfig(f"tuning grid: repeats must be >= 1, got {self.repeats}")
        return self

    def configs(self):
        return product(self.tilewidths, self.chunk_widths, self.max_tasks)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits 2 by default; usage errors are 1 here
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _status(msg: str) -> None:
    print(msg, file=sys.stderr)


def _configure_logging(level: str) -> None:
    # One handler on the package logger; repeated main() calls reuse it.
    logger.setLevel(logging.getLevelNamesMapping().get(level, logging.WARNING))
    if not any(isinstance(h, RichHandler) for h in logger.handlers):
        logger.addHandler(RichHandler(console=Console(stderr=True), show_path=False))


def _write_csv(df: pd.DataFrame, out: str) -> None:
    if out == "-":
        df.to_csv(sys.stdout, index=False, float_format=FLOAT_FORMAT)
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    _status(f"[csv] wrote {len(df)} rows to {path}")


def _guard_memory(n: int, bw: int, tw: int, precision: str, max_mem_mb: int, *, dense: bool = False) -> None:
    """Reject requests whose storage estimate exceeds ``max_mem_mb``."""
    itemsize = np.dtype(storage_dtype(precision)).itemsize
    estimate = (bw + 2 * tw + 1) * n * itemsize
    if dense:
        # generator keeps A, U, V and a working copy in double
        estimate += 4 * n * n * 8
    if estimate > max_mem_mb * 1024 * 1024:
        raise BadConfig(
            f"n={n}, bw={bw}, tw={tw} needs about {estimate / 2**20:.1f} MiB; limit is {max_mem_mb} MiB (--max-mem)"
        )


def _reduce(a: BandedMatrix, config: ReductionConfig, engine: str, *, debug: bool = False) -> BidiagonalResult:
    if engine == "parallel":
        return run_reduction_parallel(a, config, debug=debug)
    return run_reduction_serial(a, config)


def _tilewidth(tw: Optional[int], bw: int) -> int:
    return tw if tw is not None else default_tilewidth(bw)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_reduce(args: argparse.Namespace, settings: Settings) -> int:
    path = Path(args.input)
    if path.suffix == ".bnd":
        a = read_bnd(path)
    else:
        if args.bw is None:
            raise BadConfig("--bw is required for dense input")
        dense = read_dense(path, dtype=storage_dtype(args.precision))
        a = from_dense(dense, args.bw, _tilewidth(args.tw, args.bw), precision=args.precision)
    bw = args.bw if args.bw is not None else a.bw
    tw = min(_tilewidth(args.tw, bw), a.tw_scratch)
    _guard_memory(a.n, a.bw, a.tw_scratch, a.precision, args.max_mem)
    config = ReductionConfig(
        n=a.n,
        bw=bw,
        tw=tw,
        chunk_width=args.chunk,
        max_tasks=args.max_tasks,
        workers=args.workers,
        precision=a.precision,
    )
    _status(f"[reduce] n={a.n} bw={bw} tw={tw} precision={a.precision} engine={args.engine}")
    start = time.perf_counter()
    result = _reduce(a, config, args.engine, debug=args.debug or settings.debug)
    elapsed = time.perf_counter() - start
    e = np.full(result.n, np.nan)
    e[: result.n - 1] = result.e.astype(np.float64)
    df = pd.DataFrame({"d": result.d.astype(np.float64), "e": e})
    _write_csv(df, args.out)
    _status(f"[reduce] {result.meta['tasks']} tasks in {result.meta['rounds']} rounds, {elapsed:.3f}s")
    return EXIT_OK


def cmd_accuracy(args: argparse.Namespace, settings: Settings) -> int:
    for kind in args.spectra:
        if kind not in SPECTRA:
            raise BadSpec(f"unknown spectrum {kind!r}; expected one of {', '.join(SPECTRA)}")
    if args.trials < 0:
        raise BadConfig(f"--trials must be >= 0, got {args.trials}")
    jobs = []
    for precision, n, bw in product(args.precision, args.n, args.bw):
        if bw >= n:
            raise BadConfig(f"bandwidth {bw} must be smaller than n={n}")
        tw = _tilewidth(args.tw, bw)
        _guard_memory(n, bw, tw, precision, args.max_mem, dense=True)
        for kind in args.spectra:
            for trial in range(args.trials):
                jobs.append((precision, kind, n, bw, tw, trial))

    _status(f"[accuracy] {len(jobs)} trials")
    rows: List[Dict[str, object]] = []
    for precision, kind, n, bw, tw, trial in tqdm(jobs, desc="accuracy", disable=args.quiet or not jobs):
        rows.append(
            accuracy_trial(
                precision=precision,
                kind=kind,
                n=n,
                bw=bw,
                tw=tw,
                trial=trial,
                seed=args.seed,
                chunk_width=args.chunk,
            )
        )
    df = pd.DataFrame(rows, columns=ACCURACY_COLUMNS)
    _write_csv(df, args.out)
    if rows:
        worst = df.groupby("precision")[["rel_error", "scaled_error"]].max()
        for precision, row in worst.iterrows():
            _status(
                f"[accuracy] {precision}: max rel_error={row['rel_error']:.3e} "
                f"max scaled_error={row['scaled_error']:.3e}"
            )
    return EXIT_OK


def run_tune(
    grid: TuneGrid,
    *,
    n: int,
    bw: int,
    precision: str,
    engine: str,
    workers: int,
    seed: int,
    quiet: bool = True,
) -> pd.DataFrame:
    """Median wall time per grid point, ranked ascending; rank 1 is the winner."""
    if n < 8 * bw:
        raise BadConfig(f"tuning needs n >= 8 * bw, got n={n}, bw={bw}")
    base: Dict[int, BandedMatrix] = {}
    rows = []
    configs = list(grid.configs())
    for tw, chunk, max_tasks in tqdm(configs, desc="tune", disable=quiet):
        if tw not in base:
            base[tw] = random_banded(n, bw, tw, precision=precision, rng=np.random.default_rng(seed))
        config = ReductionConfig(
            n=n, bw=bw, tw=tw, chunk_width=chunk, max_tasks=max_tasks, workers=workers, precision=precision
        )
        times = []
        for _ in range(grid.repeats):
            a = base[tw].copy()
            start = time.perf_counter()
            _reduce(a, config, engine)
            times.append(time.perf_counter() - start)
        rows.append(
            {
                "tw": tw,
                "chunk_width": chunk,
                "max_tasks": max_tasks,
                "repeats": grid.repeats,
                "median_seconds": statistics.median(times),
            }
        )
    df = pd.DataFrame(rows, columns=TUNE_COLUMNS[:5])
    df = df.sort_values("median_seconds", kind="stable").reset_index(drop=True)
    df["rank"] = np.arange(1, len(df) + 1)
    df["winner"] = df["rank"] == 1
    return df


def cmd_tune(args: argparse.Namespace, settings: Settings) -> int:
    grid = TuneGrid(
        tilewidths=args.tilewidths,
        chunk_widths=args.chunk_widths,
        max_tasks=args.max_tasks_grid,
        repeats=args.repeats,
    )
    _guard_memory(args.n, args.bw, max(grid.tilewidths), args.precision, args.max_mem)
    _status(f"[tune] n={args.n} bw={args.bw} grid points={len(list(grid.configs()))} repeats={grid.repeats}")
    df = run_tune(
        grid,
        n=args.n,
        bw=args.bw,
        precision=args.precision,
        engine=args.engine,
        workers=args.workers,
        seed=args.seed,
        quiet=args.quiet,
    )
    _write_csv(df, args.out)
    best = df.iloc[0]
    _status(
        f"[tune] winner tw={best['tw']} chunk={best['chunk_width']} "
        f"max_tasks={best['max_tasks']} ({best['median_seconds']:.4f}s)"
    )
    return EXIT_OK


def cmd_occupancy(args: argparse.Namespace, settings: Settings) -> int:
    if args.table:
        table = Table(title=f"Minimum n for full occupancy (cbw={args.cbw_table})")
        table.add_column("device")
        table.add_column("ALUs", justify="right")
        table.add_column("min n", justify="right")
        for device, alus in HARDWARE_ALUS.items():
            m = OccupancyModel(alus=alus, cbw=args.cbw_table)
            table.add_row(device, str(alus), str(min_full_occupancy_size(m)))
        Console().print(table)
        return EXIT_OK
    if args.alus is None or args.cbw is None:
        raise BadConfig("occupancy needs ALUS and CBW, or --table")
    print(min_full_occupancy_size(OccupancyModel(alus=args.alus, cbw=args.cbw)))
    return EXIT_OK


def run_bench(
    ns: Sequence[int],
    bws: Sequence[int],
    *,
    tw: Optional[int],
    precision: str,
    engine: str,
    workers: int,
    max_tasks: int,
    chunk_width: int,
    seed: int,
    max_mem_mb: int,
    quiet: bool = True,
) -> pd.DataFrame:
    rows = []
    cases = list(product(ns, bws))
    for n, bw in tqdm(cases, desc="bench", disable=quiet or not cases):
        t = _tilewidth(tw, bw)
        _guard_memory(n, bw, t, precision, max_mem_mb)
        config = ReductionConfig(
            n=n,
            bw=bw,
            tw=t,
            chunk_width=chunk_width,
            max_tasks=max_tasks,
            workers=workers,
            precision=precision,
        )
        a = random_banded(n, bw, t, precision=precision, rng=np.random.default_rng(seed))
        start = time.perf_counter()
        result = _reduce(a, config, engine)
        seconds = time.perf_counter() - start
        rows.append(
            {
                "n": n,
                "bw": bw,
                "tw": t,
                "engine": engine,
                "workers": workers if engine == "parallel" else 1,
                "seconds": seconds,
                "tasks": result.meta["tasks"],
                "rounds": result.meta["rounds"],
            }
        )
    return pd.DataFrame(rows, columns=BENCH_COLUMNS)


def cmd_bench(args: argparse.Namespace, settings: Settings) -> int:
    _status(f"[bench] n={args.n} bw={args.bw} engine={args.engine}")
    df = run_bench(
        args.n,
        args.bw,
        tw=args.tw,
        precision=args.precision,
        engine=args.engine,
        workers=args.workers,
        max_tasks=args.max_tasks,
        chunk_width=args.chunk,
        seed=args.seed,
        max_mem_mb=args.max_mem,
        quiet=args.quiet,
    )
    _write_csv(df, args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser(settings: Settings) -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=settings.seed)
    common.add_argument("--workers", type=int, default=settings.workers)
    common.add_argument("--max-tasks", type=int, default=settings.max_tasks)
    common.add_argument("--chunk", type=int, default=settings.chunk_width, help="Rows per application chunk")
    common.add_argument("--engine", choices=("serial", "parallel"), default="serial")
    common.add_argument("--out", default="-", help="CSV output path ('-' for stdout)")
    common.add_argument(
        "--max-mem", type=int, default=settings.max_mem_mb, help="Refuse requests above this many MiB"
    )
    common.add_argument("--verbose", action="store_true", help="Debug logging")
    common.add_argument("--quiet", action="store_true", help="No progress bars")

    parser = _Parser(prog="band-chase", description="Band to bidiagonal reduction by bulge chasing")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reduce", parents=[common], help="Reduce a .bnd (or dense) matrix to bidiagonal")
    p.add_argument("input", help=".bnd file, or a dense 'n n' text file with --bw")
    p.add_argument("--precision", choices=PRECISIONS, default=settings.precision, help="Dense input only")
    p.add_argument("--bw", type=int, default=None)
    p.add_argument("--tw", type=int, default=None)
    p.add_argument("--debug", action="store_true", help="Check round write sets (parallel engine)")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("accuracy", parents=[common], help="Accuracy study against known spectra")
    p.add_argument("--precision", nargs="+", choices=PRECISIONS, default=list(PRECISIONS))
    p.add_argument("--n", type=int, nargs="+", default=[256])
    p.add_argument("--bw", type=int, nargs="+", default=[8])
    p.add_argument("--tw", type=int, default=None)
    p.add_argument("--spectra", nargs="+", default=list(SPECTRA))
    p.add_argument("--trials", type=int, default=10, help="Trials per spectrum")
    p.set_defaults(func=cmd_accuracy)

    p = sub.add_parser("tune", parents=[common], help="Grid search over tw, chunk width and max tasks")
    p.add_argument("--precision", choices=PRECISIONS, default=settings.precision)
    p.add_argument("--n", type=int, default=1024)
    p.add_argument("--bw", type=int, default=32)
    p.add_argument("--tilewidths", type=int, nargs="*", default=[4, 8, 16, 31])
    p.add_argument("--chunk-widths", type=int, nargs="*", default=[settings.chunk_width])
    p.add_argument("--max-tasks-grid", type=int, nargs="*", default=[settings.max_tasks])
    p.add_argument("--repeats", type=int, default=3)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("occupancy", help="Minimum n for full occupancy: 3 * cbw * alus")
    p.add_argument("alus", type=int, nargs="?")
    p.add_argument("cbw", type=int, nargs="?")
    p.add_argument("--table", action="store_true", help="Print the known devices")
    p.add_argument("--cbw-table", type=int, default=32, help="cbw used with --table")
    p.add_argument("--verbose", action="store_true")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_occupancy)

    p = sub.add_parser("bench", parents=[common], help="Wall time per (n, bw) on random banded input")
    p.add_argument("--precision", choices=PRECISIONS, default=settings.precision)
    p.add_argument("--n", type=int, nargs="*", default=[1024])
    p.add_argument("--bw", type=int, nargs="*", default=[16, 32])
    p.add_argument("--tw", type=int, default=None)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    # Load variables from .env if present (no-op if missing)
    load_dotenv()
    settings = load_settings()

    parser = build_parser(settings)
    args = parser.parse_args(argv)
    _configure_logging("DEBUG" if args.verbose else settings.log_level)

    try:
        return args.func(args, settings)
    except _NUMERIC_ERRORS as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return EXIT_NUMERIC
    except _USAGE_ERRORS as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
