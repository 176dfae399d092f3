"""Spatially smoothed empirical CDFs.

At location ``s`` the CDF of population ``i`` is estimated by weighting each
of its observations with ``K_lam(s - s_ij)``::

    F_i(s, y) = sum_j K_lam(s - s_ij) 1{Y_ij <= y} / sum_j K_lam(s - s_ij)

The batched path sorts all observations by value once and takes cumulative
sums of the kernel weights along that order, so the numerator at every probe
value is a single lookup. The pointwise path accumulates in the same order,
which makes the two agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data_model import EvaluationGrid, KernelSpec, SpatialDataset
from .errors import InsufficientCoverage, InvalidArgument
from .kernels import scaled_kernel, squared_integral

UNDEFINED = float("nan")


def smoothed_cdf(dataset: SpatialDataset, population: int, s, y: float,
                 kernel: KernelSpec, bandwidth, min_denominator: float = 1e-12) -> float:
    """Smoothed CDF of ``population`` at location ``s`` and value ``y``.

    Returns ``nan`` when the kernel mass at ``s`` is below ``min_denominator``.
    """
    values, locs = dataset.population(population)
    order = np.argsort(values, kind="stable")
    w = scaled_kernel(kernel, bandwidth, np.asarray(s, dtype=float) - locs[order])
    cum = np.cumsum(w)
    den = cum[-1]
    if not den >= min_denominator:
        return UNDEFINED
    count = int(np.searchsorted(values[order], y, side="right"))
    num = cum[count - 1] if count else 0.0
    return float(num / den)


def pooled_ecdf(dataset: SpatialDataset, y) -> float:
    """Ordinary ECDF of all populations combined."""
    return float(np.count_nonzero(dataset.values <= y)) / dataset.total


@dataclass(frozen=True, eq=False)
class SmoothedCdfField:
    """CDF estimates of one population on grid nodes x probe values.

    Rows of ``node_values`` whose ``denominators`` fall below the threshold are
    ``nan``.
    """

    population: int
    node_values: np.ndarray
    denominators: np.ndarray


class CdfEngine:
    """Smoothed CDFs of a fixed set of (value, location) pairs on a grid.

    Only the population labels vary between calls to :meth:`fields`, which is
    what a permutation test needs: the kernel weights and the sort order are
    computed once.
    """

    def __init__(self, values, locations, grid: EvaluationGrid, kernel: KernelSpec,
                 bandwidth, probe_ys=None, min_denominator: float = 1e-12):
        values = np.asarray(values, dtype=float)
        locations = np.asarray(locations, dtype=float)
        self.order = np.argsort(values, kind="stable")
        self.sorted_values = values[self.order]
        if probe_ys is None:
            probe_ys = self.sorted_values
        self.probe_ys = np.asarray(probe_ys, dtype=float)
        if np.any(np.diff(self.probe_ys) < 0):
            raise InvalidArgument("probe values must be sorted ascending")
        self.probe_pos = np.searchsorted(self.sorted_values, self.probe_ys, side="right") - 1
        self.weights = scaled_kernel(
            kernel, bandwidth, grid.nodes[:, None, :] - locations[None, self.order, :]
        )
        self.min_denominator = min_denominator

    def fields(self, labels, k: int):
        """Return ``(F, D)`` for label vectors ``labels`` of shape ``(B, n)``.

        ``F`` has shape ``(B, k, nodes, probes)`` with ``nan`` where undefined
        and ``D`` has shape ``(B, k, nodes)``.
        """
        labels = np.atleast_2d(labels)[:, self.order]
        B = labels.shape[0]
        nodes, n = self.weights.shape
        m = len(self.probe_pos)
        F = np.empty((B, k, nodes, m))
        D = np.empty((B, k, nodes))
        every = m == n and np.array_equal(self.probe_pos, np.arange(n))
        below = self.probe_pos < 0
        pos = np.where(below, 0, self.probe_pos)
        buf = np.empty((B, nodes, n))
        for i in range(k):
            member = (labels == i + 1).astype(float)
            np.multiply(self.weights[None, :, :], member[:, None, :], out=buf)
            cum = np.cumsum(buf, axis=-1, out=buf)
            den = cum[:, :, -1].copy()
            num = cum if every else cum[:, :, pos]
            if below.any():
                num[:, :, below] = 0.0
            with np.errstate(invalid="ignore", divide="ignore"):
                np.divide(num, den[:, :, None], out=F[:, i])
            F[:, i][den < self.min_denominator] = np.nan
            D[:, i] = den
        return F, D


def build_cdf_fields(dataset: SpatialDataset, grid: EvaluationGrid, probe_ys: Sequence[float],
                     kernel: KernelSpec, bandwidth, min_denominator: float = 1e-12,
                     min_coverage: float = 0.0):
    """Evaluate every population's smoothed CDF on ``grid`` x ``probe_ys``.

    Returns the fields and a copy of ``grid`` whose inclusion mask drops any
    node where some population is undefined. Raises
    :class:`InsufficientCoverage` when too few nodes survive.
    """
    engine = CdfEngine(dataset.values, dataset.locations, grid, kernel, bandwidth,
                       probe_ys, min_denominator)
    F, D = engine.fields(dataset.labels, dataset.k)
    defined = np.all(D[0] >= min_denominator, axis=0)
    grid = grid.with_included(grid.included & defined)
    if grid.coverage_fraction < min_coverage:
        raise InsufficientCoverage(grid.coverage_fraction, min_coverage)
    fields = [SmoothedCdfField(i + 1, F[0, i], D[0, i]) for i in range(dataset.k)]
    return fields, grid


def asymptotic_variance(F_y, kernel: KernelSpec):
    """``F(1 - F)`` divided by the integral of ``K**2``.

    Diagnostic only; inference never uses it.
    """
    F_y = np.asarray(F_y, dtype=float)
    if np.any((F_y < 0) | (F_y > 1)):
        raise InvalidArgument("F_y must lie in [0, 1]")
    out = F_y * (1.0 - F_y) / squared_integral(kernel)
    return float(out) if out.ndim == 0 else out


def variance_diagnostic(dataset: SpatialDataset, grid: EvaluationGrid, kernel: KernelSpec,
                        bandwidth, min_denominator: float = 1e-12) -> Optional[dict]:
    """Per-node asymptotic variance at the pooled median, summarized.

    The CDF at each node is the smoothed CDF of all populations pooled.
    """
    median = float(np.median(dataset.values))
    engine = CdfEngine(dataset.values, dataset.locations, grid, kernel, bandwidth,
                       [median], min_denominator)
    pooled = np.ones((1, dataset.total), dtype=np.int64)
    F, _ = engine.fields(pooled, 1)
    f = F[0, 0, :, 0][grid.included]
    f = f[~np.isnan(f)]
    if f.size == 0:
        return None
    var = asymptotic_variance(f, kernel)
    return {
        "y_median": median,
        "nodes": int(f.size),
        "min": float(var.min()),
        "mean": float(var.mean()),
        "max": float(var.max()),
        "formula": "F(1-F) / integral(K^2); diagnostic only, not used for inference",
    }
