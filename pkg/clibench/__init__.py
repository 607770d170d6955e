from clibench.bench import BenchRow, TimerResolutionError, read_bench_csv, run_benchmark_grid, write_bench_csv
from clibench.config import RunConfig
from clibench.train import (
    EmptySplitError,
    ManifestMismatch,
    TrainingDiverged,
    evaluate,
    train_map,
    train_predictor,
)
from clibench.viz import pca_grayscale, read_pgm, write_pgm

__all__ = [
    "BenchRow",
    "EmptySplitError",
    "ManifestMismatch",
    "RunConfig",
    "TimerResolutionError",
    "TrainingDiverged",
    "evaluate",
    "pca_grayscale",
    "read_bench_csv",
    "read_pgm",
    "run_benchmark_grid",
    "train_map",
    "train_predictor",
    "write_bench_csv",
    "write_pgm",
]
