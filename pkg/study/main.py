"""Orchestrate the desk-scale study.

Steps:
1. Accuracy across the three precisions and spectra (`band-chase accuracy`).
2. Tilewidth / chunk-width tuning grid (`band-chase tune`).
3. Occupancy table for the known devices (`band-chase occupancy --table`).
4. Bandwidth scaling benchmark (`band-chase bench`).

Usage:
  uv run python -m study.main [options]
"""

from __future__ import annotations

import argparse
import runpy
import sys
from pathlib import Path

from dotenv import load_dotenv

from band_chase.config import load_settings


def _run_cli(argv: list[str]) -> None:
    """Invoke ``band_chase.cli`` by temporarily swapping `sys.argv`."""

    old_argv = sys.argv
    sys.argv = ["band-chase", *argv]
    try:
        runpy.run_module("band_chase.cli", run_name="__main__")
    except SystemExit as exc:
        if exc.code not in (0, None):
            raise
    finally:
        sys.argv = old_argv


def main(argv: list[str] | None = None) -> None:
    parser = argparse.ArgumentParser(description="Run the accuracy, tuning and scaling study end-to-end")
    parser.add_argument("--n", type=int, default=256, help="Matrix order for the accuracy study")
    parser.add_argument("--bw", type=int, default=8, help="Bandwidth for the accuracy study")
    parser.add_argument("--trials", type=int, default=10, help="Trials per spectrum")
    parser.add_argument("--tune-n", type=int, default=512)
    parser.add_argument("--tune-bw", type=int, default=32)
    parser.add_argument(
        "--tilewidths", type=int, nargs="+", default=[2, 4, 8, 16, 31], help="Tuning grid for tw"
    )
    parser.add_argument("--bench-n", type=int, nargs="+", default=[2048])
    parser.add_argument("--bench-bw", type=int, nargs="+", default=[16, 32])
    parser.add_argument("--bench-tw", type=int, default=4)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out-dir", default=None, help="Defaults to BAND_CHASE_DATA_DIR")
    parser.add_argument("--skip-tune", action="store_true")
    parser.add_argument("--skip-bench", action="store_true")
    args = parser.parse_args(argv)

    load_dotenv()
    settings = load_settings()
    out_dir = Path(args.out_dir or settings.data_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    print(f"Running study with {settings.workers} workers; CSVs under {out_dir}")

    print("[1/4] Accuracy study...")
    _run_cli(
        [
            "accuracy",
            "--precision", "f64", "f32", "f16",
            "--n", str(args.n),
            "--bw", str(args.bw),
            "--trials", str(args.trials),
            "--seed", str(args.seed),
            "--out", str(out_dir / "accuracy.csv"),
        ]
    )

    if args.skip_tune:
        print("[2/4] Tuning skipped")
    else:
        print("[2/4] Tuning grid...")
        _run_cli(
            [
                "tune",
                "--precision", "f32",
                "--n", str(args.tune_n),
                "--bw", str(args.tune_bw),
                "--tilewidths", *[str(t) for t in args.tilewidths],
                "--seed", str(args.seed),
                "--out", str(out_dir / "tune.csv"),
            ]
        )

    print("[3/4] Occupancy table...")
    _run_cli(["occupancy", "--table"])

    if args.skip_bench:
        print("[4/4] Benchmark skipped")
    else:
        print("[4/4] Bandwidth scaling benchmark...")
        _run_cli(
            [
                "bench",
                "--n", *[str(n) for n in args.bench_n],
                "--bw", *[str(b) for b in args.bench_bw],
                "--tw", str(args.bench_tw),
                "--seed", str(args.seed),
                "--out", str(out_dir / "bench.csv"),
            ]
        )

    print("Study completed successfully.")


if __name__ == "__main__":
    main()
