"""The k-sample statistic: pairwise squared CDF-field differences.

For every pair ``i < l`` the squared difference of the smoothed CDFs is
integrated against the pooled ECDF in ``y`` (exactly: a mean over the pooled
values) and against ``w(s) ds`` in space (grid quadrature over the included
nodes).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from .data_model import EvaluationGrid, KernelSpec, SpatialDataset
from .errors import DegenerateGeometry, InsufficientCoverage, InvalidArgument, ValidationError
from .estimator import CdfEngine


def build_grid(dataset: SpatialDataset, resolution: int = 16,
               weights: Optional[Sequence[float]] = None) -> EvaluationGrid:
    """Cell centres of a ``resolution x resolution`` tiling of the bounding box.

    Nodes are ordered row by row (x fastest). ``weights=None`` means a uniform
    weight of one.
    """
    if resolution < 2:
        raise InvalidArgument("grid resolution must be >= 2")
    x0, y0, x1, y1 = dataset.bounding_box
    width, height = x1 - x0, y1 - y0
    if not (width > 0 and height > 0):
        raise DegenerateGeometry(
            f"bounding box has zero area ({width} x {height}); cannot integrate over it"
        )
    xs = x0 + (np.arange(resolution) + 0.5) * (width / resolution)
    ys = y0 + (np.arange(resolution) + 0.5) * (height / resolution)
    gx, gy = np.meshgrid(xs, ys)
    nodes = np.column_stack([gx.ravel(), gy.ravel()])
    m = len(nodes)
    if weights is None:
        w = np.ones(m)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (m,):
            raise ValidationError(f"weight table has {w.size} entries, grid has {m} nodes")
    area = width * height / resolution**2
    return EvaluationGrid(nodes, w, np.full(m, area), np.ones(m, dtype=bool))


@dataclass(frozen=True, eq=False)
class StatisticBreakdown:
    total: float
    pairwise: dict = field(default_factory=dict)
    included_nodes: int = 0
    grid: Optional[EvaluationGrid] = None

    @property
    def coverage_fraction(self) -> float:
        return self.grid.coverage_fraction if self.grid is not None else 1.0


def probe_indices(n: int, y_subsample: int = 1) -> np.ndarray:
    """Positions (in the sorted pooled sample) used as ``y`` probes."""
    return np.arange(0, n, y_subsample)


class StatisticEngine:
    """Computes the statistic for many labelings of one set of observations."""

    def __init__(self, values, locations, grid: EvaluationGrid, kernel: KernelSpec,
                 bandwidth, k: int, min_denominator: float = 1e-12,
                 min_coverage: float = 0.0, y_subsample: int = 1):
        values = np.asarray(values, dtype=float)
        probes = np.sort(values, kind="stable")[probe_indices(len(values), y_subsample)]
        self.cdf = CdfEngine(values, locations, grid, kernel, bandwidth, probes,
                             min_denominator)
        self.grid = grid
        self.k = k
        self.pairs = list(combinations(range(k), 2))
        self.probe_mass = 1.0 / len(probes)
        self.measure = grid.weights * grid.cell_areas
        self.min_coverage = min_coverage

    def evaluate(self, labels):
        """Statistic for each row of ``labels``.

        Returns ``(totals, pairwise, included)`` with shapes ``(B,)``,
        ``(B, n_pairs)`` and ``(B, nodes)``.
        """
        F, _ = self.cdf.fields(labels, self.k)
        defined = ~np.isnan(F[..., 0]).any(axis=1)
        included = defined & self.grid.included[None, :]
        coverage = included.sum(axis=1) / self.grid.size
        if np.any(coverage < self.min_coverage):
            raise InsufficientCoverage(float(coverage.min()), self.min_coverage)
        node_measure = np.where(included, self.measure[None, :], 0.0)
        if not included.all():
            F = np.where(included[:, None, :, None], F, 0.0)
        pairwise = np.empty((F.shape[0], len(self.pairs)))
        for p, (i, l) in enumerate(self.pairs):
            d = F[:, i] - F[:, l]
            np.multiply(d, d, out=d)
            per_node = d.sum(axis=-1) * self.probe_mass
            pairwise[:, p] = (per_node * node_measure).sum(axis=-1)
        totals = np.zeros(F.shape[0])
        for p in range(len(self.pairs)):
            totals = totals + pairwise[:, p]
        return totals, pairwise, included


def compute_Tn(dataset: SpatialDataset, grid: EvaluationGrid, kernel: KernelSpec, bandwidth,
               min_denominator: float = 1e-12, min_coverage: float = 0.0,
               y_subsample: int = 1) -> StatisticBreakdown:
    """Observed statistic with its per-pair decomposition.

    Nodes where any population's smoothed CDF is undefined are dropped; the
    returned breakdown carries the grid with the updated inclusion mask.
    """
    engine = StatisticEngine(dataset.values, dataset.locations, grid, kernel, bandwidth,
                             dataset.k, min_denominator, min_coverage, y_subsample)
    totals, pairwise, included = engine.evaluate(dataset.labels)
    pairs = {(i + 1, l + 1): float(pairwise[0, p]) for p, (i, l) in enumerate(engine.pairs)}
    new_grid = grid.with_included(included[0])
    return StatisticBreakdown(float(totals[0]), pairs, int(included[0].sum()), new_grid)
