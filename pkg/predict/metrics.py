from __future__ import annotations

import csv
import dataclasses
import logging
import pathlib
from typing import Iterable, Sequence

import numpy as np

from predict.model import PredictionSet

"""
minADE / minFDE / miss rate over K predicted modes.
"""

logger = logging.getLogger(__name__)

MISS_THRESHOLD = 2.0
CSV_FIELDS = ("agent_id", "minADE", "minFDE", "miss")


class MetricsError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class AgentMetrics:
    agent_id: int | str
    min_ade: float
    min_fde: float
    miss: bool


@dataclasses.dataclass(frozen=True)
class MetricsReport:
    agents: tuple[AgentMetrics, ...]

    def __post_init__(self) -> None:
        if not self.agents:
            raise MetricsError("no agents to score")

    @property
    def min_ade(self) -> float:
        return float(np.mean([a.min_ade for a in self.agents]))

    @property
    def min_fde(self) -> float:
        return float(np.mean([a.min_fde for a in self.agents]))

    @property
    def miss_rate(self) -> float:
        return float(np.mean([a.miss for a in self.agents]))

    def summary(self) -> dict:
        return {"minADE": self.min_ade, "minFDE": self.min_fde, "MR": self.miss_rate, "agents": len(self.agents)}

    @classmethod
    def merge(cls, reports: Iterable[MetricsReport]) -> MetricsReport:
        return cls(tuple(a for r in reports for a in r.agents))


def displacement_errors(trajectories: np.ndarray, futures: np.ndarray) -> np.ndarray:
    """(M, K, T_f) Euclidean distance of every mode to the ground truth at every step"""
    return np.linalg.norm(trajectories - futures[:, None, :, :], axis=-1)


def compute_metrics(
    pred: PredictionSet,
    futures: np.ndarray,
    miss_threshold: float = MISS_THRESHOLD,
    agent_ids: Sequence[int | str] = (),
) -> MetricsReport:
    """
    minADE takes the mode with the smallest average error, minFDE the mode with
    the smallest endpoint error; each is chosen independently. An agent misses
    when its minFDE is strictly above the threshold.
    """
    trajs = np.asarray(pred.trajectories.data, dtype=np.float64)
    gt = np.asarray(futures, dtype=np.float64)
    M, K, T_f, _ = trajs.shape
    if M == 0:
        raise MetricsError("no agents to score")
    if gt.shape != (M, T_f, 2):
        raise MetricsError(f"prediction horizon {T_f} for {M} agents does not match ground truth {gt.shape}")
    dist = displacement_errors(trajs, gt)
    min_ade = dist.mean(axis=2).min(axis=1)
    min_fde = dist[:, :, -1].min(axis=1)
    ids = tuple(agent_ids) or pred.agent_ids
    return MetricsReport(
        tuple(
            AgentMetrics(ids[i], float(min_ade[i]), float(min_fde[i]), bool(min_fde[i] > miss_threshold))
            for i in range(M)
        )
    )


def metrics_rows(report: MetricsReport) -> list:
    return [
        {"agent_id": a.agent_id, "minADE": f"{a.min_ade:.6f}", "minFDE": f"{a.min_fde:.6f}", "miss": int(a.miss)}
        for a in report.agents
    ]


def write_metrics_csv(report: MetricsReport, path: str | pathlib.Path) -> pathlib.Path:
    """one row per agent, in report order"""
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(metrics_rows(report))
    logger.info("wrote %d metric rows to %s (minFDE %.3f)", len(report.agents), path, report.min_fde)
    return path


def read_metrics_csv(path: str | pathlib.Path) -> MetricsReport:
    with pathlib.Path(path).open(newline="") as f:
        rows = list(csv.DictReader(f))
    return MetricsReport(
        tuple(AgentMetrics(r["agent_id"], float(r["minADE"]), float(r["minFDE"]), r["miss"] == "1") for r in rows)
    )
