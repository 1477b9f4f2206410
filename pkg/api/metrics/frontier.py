"""Cost-performance frontiers: lower cost C and higher performance P are better."""

from dataclasses import dataclass
import logging
import math

import numpy as np
import pandas as pd

from api.errors import EmptyFrontierError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FrontierSet:
    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.points:
            raise EmptyFrontierError("A frontier needs at least one point")
        if not all(math.isfinite(c) and math.isfinite(p) for c, p in self.points):
            raise ValueError("Frontier points must be finite")

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(list(self.points), columns=["C", "P"])


def dominates(a: tuple[float, float], b: tuple[float, float]) -> bool:
    return a[0] <= b[0] and a[1] >= b[1] and (a[0] < b[0] or a[1] > b[1])


def pareto_frontier(points: list[tuple[float, float]]) -> FrontierSet:
    """Non-dominated subset of ``points``, duplicates collapsed, sorted by cost."""
    if not points:
        logger.error("Cannot extract a frontier from an empty run set")
        raise EmptyFrontierError("Cannot extract a frontier from an empty run set")
    unique = sorted(set((float(c), float(p)) for c, p in points))
    kept = [a for a in unique if not any(dominates(b, a) for b in unique)]
    return FrontierSet(tuple(kept))


def frontier_distance(frontier: FrontierSet, point: tuple[float, float]) -> float:
    """Euclidean distance from ``point`` to the nearest frontier point."""
    if not frontier.points:
        raise EmptyFrontierError("Frontier is empty")
    grid = np.asarray(frontier.points, dtype=float)
    deltas = grid - np.asarray(point, dtype=float)[None, :]
    return float(np.sqrt((deltas ** 2).sum(axis=1)).min())


def frontier_regret(frontier: FrontierSet, point: tuple[float, float]) -> float:
    """Performance shortfall against the best frontier point costing no more than ``point``."""
    affordable = [p for c, p in frontier.points if c <= point[0]]
    if not affordable:
        return 0.0
    return max(0.0, max(affordable) - point[1])


def minmax_normalize(points: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Scale each axis to [0, 1] over the run set; a constant axis maps to 0."""
    if not points:
        return []
    arr = np.asarray(points, dtype=float)
    low = arr.min(axis=0)
    span = arr.max(axis=0) - low
    span[span == 0] = 1.0
    scaled = (arr - low) / span
    return [(float(c), float(p)) for c, p in scaled]


def frontier_table(points: list[tuple[float, float]], labels: list[dict], normalization: str = "minmax") -> pd.DataFrame:
    """One row per run: raw and normalised coordinates, frontier membership, distance and regret."""
    coords = minmax_normalize(points) if normalization == "minmax" else [(float(c), float(p)) for c, p in points]
    frontier = pareto_frontier(coords)
    members = set(frontier.points)
    rows = []
    for label, raw, norm in zip(labels, points, coords):
        rows.append(
            {
                **label,
                "C": raw[0],
                "P": raw[1],
                "C_norm": norm[0],
                "P_norm": norm[1],
                "on_frontier": norm in members,
                "distance": frontier_distance(frontier, norm),
                "regret": frontier_regret(frontier, norm),
            }
        )
    return pd.DataFrame(rows)
