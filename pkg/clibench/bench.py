from __future__ import annotations

import csv
import dataclasses
import logging
import pathlib
import time
from typing import Callable, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from clibench.config import RunConfig
from mapdec.decoder import decode_bev
from numgrad.params import ParamStore
from predict.model import AgentContext, forward_predict
from pv2bev.encoder import encode_bev
from synthscene.scene import Scene, generate_scene, resize_map

"""
Latency grid of the two prediction pipelines, from rendered camera views to trajectories:

    decoupled   encode_bev -> decode_map -> score threshold -> forward_predict(baseline)
    integrated  encode_bev -> forward_predict(s1)
"""

logger = logging.getLogger(__name__)

PIPELINES = ("decoupled", "integrated")
BENCH_FIELDS = ("n_agents", "n_map_elements", "pipeline", "median_ms", "p95_ms", "runs")
MIN_RUNS = 31
MIN_WARMUP = 5
# decoder instances pass to the predictor whatever their score
BENCH_THRESHOLD = 0.0


class TimerResolutionError(RuntimeError):
    def __init__(self, resolution_s: float, median_s: float) -> None:
        self.resolution_s = resolution_s
        self.median_s = median_s
        super().__init__(resolution_s, median_s)

    def __str__(self) -> str:
        return (
            f"TimerResolutionError: clock resolution {self.resolution_s * 1e3:.4g} ms is coarser than 1% of the "
            f"median {self.median_s * 1e3:.4g} ms, use a larger workload (more agents, elements or a bigger grid)"
        )


@dataclasses.dataclass(frozen=True)
class BenchRow:
    n_agents: int
    n_map_elements: int
    pipeline: str
    median_ms: float
    p95_ms: float
    runs: int

    def __post_init__(self) -> None:
        if self.pipeline not in PIPELINES:
            raise ValueError(f"unknown pipeline {self.pipeline!r}")
        if self.median_ms > self.p95_ms:
            raise ValueError(f"median {self.median_ms} ms above p95 {self.p95_ms} ms")
        if self.runs < MIN_RUNS:
            raise ValueError(f"{self.runs} timed runs, need at least {MIN_RUNS}")

    def as_row(self) -> dict[str, str]:
        return {
            "n_agents": str(self.n_agents),
            "n_map_elements": str(self.n_map_elements),
            "pipeline": self.pipeline,
            "median_ms": f"{self.median_ms:.4f}",
            "p95_ms": f"{self.p95_ms:.4f}",
            "runs": str(self.runs),
        }


def bench_scene(cfg: RunConfig, n_agents: int, n_elements: int) -> Scene:
    """a scene with exactly n_agents agents and n_elements ground-truth map elements"""
    scene_cfg = dataclasses.replace(cfg.scene_config(), agents=n_agents, rendered_frames=1)
    scene = generate_scene(cfg.seed, scene_cfg)
    return dataclasses.replace(scene, gt_map=resize_map(scene.gt_map, n_elements))


def pipeline_fn(pipeline: str, scene: Scene, cfg: RunConfig, n_elements: int) -> Callable[[], object]:
    """A closure running one pipeline end to end, with its weights already materialised"""
    enc = cfg.encoder_config()
    dec = dataclasses.replace(cfg.decoder_config(), n_inst=n_elements)
    pred_cfg = cfg.predictor_config()
    params = ParamStore(seed=cfg.seed)
    agents = scene.agents_in_range()
    ctx = AgentContext(
        tuple(a.agent_id for a in agents),
        np.stack([a.position for a in agents]),
        np.stack([a.history for a in agents]),
    )
    frame = scene.current_frame

    def decoupled():
        bev = encode_bev(cfg.variant, scene, frame, None, enc, params.scope("encoder"))
        decoded = decode_bev(bev.detach(), dec, params.scope("decoder"))
        lanes, _ = decoded.to_vector_map(BENCH_THRESHOLD, dec.classes)
        return forward_predict("baseline", ctx, params.scope("predictor"), pred_cfg, lanes=lanes)

    def integrated():
        bev = encode_bev(cfg.variant, scene, frame, None, enc, params.scope("encoder"))
        return forward_predict("s1", ctx, params.scope("predictor"), pred_cfg, bev=bev.detach())

    fn = decoupled if pipeline == "decoupled" else integrated
    fn()
    return fn


def time_runs(fn: Callable[[], object], runs: int, warmup: int) -> np.ndarray:
    """
    wall-clock seconds of `runs` calls after `warmup` untimed ones, monotonic clock.
    BLAS and OpenMP pools are held at one thread for the whole measurement.
    """
    out = np.empty(runs)
    with threadpool_limits(limits=1):
        for _ in range(warmup):
            fn()
        for i in range(runs):
            start = time.perf_counter_ns()
            fn()
            out[i] = (time.perf_counter_ns() - start) * 1e-9
    return out


def bench_cell(pipeline: str, n_agents: int, n_elements: int, cfg: RunConfig, runs: int, warmup: int) -> BenchRow:
    fn = pipeline_fn(pipeline, bench_scene(cfg, n_agents, n_elements), cfg, n_elements)
    times = time_runs(fn, runs, warmup)
    median = float(np.median(times))
    resolution = time.get_clock_info("perf_counter").resolution
    if resolution > 0.01 * median:
        raise TimerResolutionError(resolution, median)
    return BenchRow(n_agents, n_elements, pipeline, median * 1e3, float(np.percentile(times, 95)) * 1e3, runs)


def run_benchmark_grid(
    agents: Sequence[int],
    elements: Sequence[int],
    pipelines: Sequence[str] = PIPELINES,
    runs: int = MIN_RUNS,
    cfg: RunConfig = RunConfig(),
    warmup: int = MIN_WARMUP,
) -> list[BenchRow]:
    """One row per (agents, elements, pipeline) cell, in that nesting order"""
    if runs < MIN_RUNS or warmup < MIN_WARMUP:
        raise ValueError(f"need at least {MIN_RUNS} timed runs and {MIN_WARMUP} warmups, got {runs} / {warmup}")
    unknown = set(pipelines) - set(PIPELINES)
    if unknown:
        raise ValueError(f"unknown pipelines {sorted(unknown)}")
    rows = []
    for n_agents in agents:
        for n_elements in elements:
            for pipeline in pipelines:
                row = bench_cell(pipeline, n_agents, n_elements, cfg, runs, warmup)
                logger.info(
                    "%s agents=%d elements=%d: median %.2f ms, p95 %.2f ms",
                    pipeline, n_agents, n_elements, row.median_ms, row.p95_ms,
                )
                rows.append(row)
    return rows


def metadata_line(cfg: RunConfig) -> str:
    H, W, D = cfg.bev
    return (
        f"# decoupled timing includes decoder score thresholding (threshold {BENCH_THRESHOLD}); "
        f"encoder {cfg.variant}, bev {H}x{W}x{D}, patch {cfg.patch[0]}x{cfg.patch[1]}, seed {cfg.seed}, "
        f"clock perf_counter, cpu wall-clock"
    )


def write_bench_csv(rows: Sequence[BenchRow], path: str | pathlib.Path, cfg: RunConfig) -> pathlib.Path:
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        f.write(metadata_line(cfg) + "\n")
        writer = csv.DictWriter(f, fieldnames=BENCH_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(r.as_row() for r in rows)
    return path


def read_bench_csv(path: str | pathlib.Path) -> list[BenchRow]:
    with pathlib.Path(path).open(newline="") as f:
        lines = [line for line in f if not line.startswith("#")]
    return [
        BenchRow(
            int(r["n_agents"]),
            int(r["n_map_elements"]),
            r["pipeline"],
            float(r["median_ms"]),
            float(r["p95_ms"]),
            int(r["runs"]),
        )
        for r in csv.DictReader(lines)
    ]
