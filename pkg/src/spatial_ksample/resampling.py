"""Null distributions by label permutation and spatial block bootstrap.

Every replicate ``b`` draws from its own generator, seeded from
``(seed, b)`` through :class:`numpy.random.SeedSequence`, and replicates are
evaluated in fixed-size chunks. The null values therefore do not depend on
how many workers run the chunks or in which order they finish.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
from joblib import Parallel, delayed

from .data_model import (
    AUTO_CV,
    AUTO_ROT,
    Bandwidth,
    EvaluationGrid,
    Method,
    SpatialDataset,
    TestConfig,
    TestResult,
)
from .errors import BootstrapDegenerate, InvalidArgument, ReplicateError, SpatialTestError
from .kernels import rule_of_thumb_bandwidth, select_bandwidth_cv
from .statistic import StatisticEngine, build_grid, compute_Tn

CHUNK = 16
MAX_BOOTSTRAP_RETRIES = 100
_REPLICATE_STREAM = 0


def substream(seed: int, index: int, purpose: int = _REPLICATE_STREAM) -> np.random.Generator:
    """Independent generator for replicate ``index`` of a run seeded ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(purpose, int(index))))


def derive_seed(seed: int, index: int, purpose: int) -> int:
    """A 64-bit seed derived from ``(seed, purpose, index)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(purpose, int(index)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def resolve_workers(workers: int) -> int:
    if workers == 0:
        return os.cpu_count() or 1
    if workers < 0:
        raise InvalidArgument("workers must be >= 0")
    return workers


def permute_labels(dataset: SpatialDataset, rng: np.random.Generator) -> SpatialDataset:
    """Shuffle population labels; values stay attached to their locations."""
    return dataset.with_labels(rng.permutation(dataset.labels))


@dataclass(frozen=True, eq=False)
class BlockPartition:
    """Square half-open cells tiling the bounding box, row-major (x fastest)."""

    origin: tuple[float, float]
    block_side: float
    shape: tuple[int, int]  # (nx, ny)
    members: tuple[np.ndarray, ...]
    bounding_box: tuple[float, float, float, float]

    def __len__(self):
        return len(self.members)

    def cell_origin(self, index: int) -> tuple[float, float]:
        nx = self.shape[0]
        ix, iy = index % nx, index // nx
        return (self.origin[0] + ix * self.block_side, self.origin[1] + iy * self.block_side)

    def rectangle(self, index: int) -> tuple[float, float, float, float]:
        x, y = self.cell_origin(index)
        return (x, y, x + self.block_side, y + self.block_side)

    @property
    def blocks(self) -> list[tuple[tuple[float, float, float, float], np.ndarray]]:
        return [(self.rectangle(b), m) for b, m in enumerate(self.members)]


def partition_blocks(dataset: SpatialDataset, block_side: float) -> BlockPartition:
    """Assign observations to ``ceil(W/side) x ceil(H/side)`` cells.

    A point on an interior cell boundary belongs to the cell above/right of
    it; points on the far edge of the box belong to the last cell.
    """
    if not block_side > 0:
        raise InvalidArgument("block_side must be positive")
    x0, y0, x1, y1 = dataset.bounding_box
    nx = max(1, math.ceil((x1 - x0) / block_side))
    ny = max(1, math.ceil((y1 - y0) / block_side))
    ix = np.clip(np.floor((dataset.locations[:, 0] - x0) / block_side).astype(int), 0, nx - 1)
    iy = np.clip(np.floor((dataset.locations[:, 1] - y0) / block_side).astype(int), 0, ny - 1)
    cell = iy * nx + ix
    order = np.argsort(cell, kind="stable")
    bounds = np.searchsorted(cell[order], np.arange(nx * ny + 1))
    members = tuple(order[bounds[c]:bounds[c + 1]] for c in range(nx * ny))
    return BlockPartition((x0, y0), float(block_side), (nx, ny), members, dataset.bounding_box)


def _assemble(dataset, partition, rng):
    nblocks = len(partition)
    draws = rng.integers(nblocks, size=nblocks)
    x0, y0, x1, y1 = partition.bounding_box
    vals, locs, labs = [], [], []
    for target, source in enumerate(draws):
        idx = partition.members[source]
        if idx.size == 0:
            continue
        tx, ty = partition.cell_origin(target)
        sx, sy = partition.cell_origin(source)
        moved = dataset.locations[idx] + np.array([tx - sx, ty - sy])
        inside = ((moved[:, 0] >= x0) & (moved[:, 0] <= x1)
                  & (moved[:, 1] >= y0) & (moved[:, 1] <= y1))
        vals.append(dataset.values[idx][inside])
        locs.append(moved[inside])
        labs.append(dataset.labels[idx][inside])
    if not vals:
        return np.empty(0), np.empty((0, 2)), np.empty(0, dtype=np.int64)
    return np.concatenate(vals), np.concatenate(locs), np.concatenate(labs)


def _null_labels(original, m, rng):
    labels = rng.permutation(original)
    n = len(original)
    if m <= n:
        return labels[:m]
    return np.concatenate([labels, rng.choice(original, size=m - n, replace=True)])


def block_bootstrap_sample(dataset: SpatialDataset, partition: BlockPartition,
                           rng: np.random.Generator, null_enforced: bool = True) -> SpatialDataset:
    """Tiled block bootstrap resample.

    As many blocks as the partition has are drawn with replacement and the
    ``t``-th draw is translated onto tile ``t``; translated points that leave
    the bounding box are dropped. With ``null_enforced`` the assembled points
    then receive a random permutation of the original labels (cut or padded
    by draws from the original labels when the count differs from ``n``), so
    the resample reflects the null hypothesis. Without it, points keep their
    own labels.

    Draws are repeated until every population is present, at most
    ``MAX_BOOTSTRAP_RETRIES`` times.
    """
    k = dataset.k
    for _ in range(MAX_BOOTSTRAP_RETRIES):
        values, locs, labels = _assemble(dataset, partition, rng)
        if len(values) < k:
            continue
        if null_enforced:
            labels = _null_labels(dataset.labels, len(values), rng)
        if np.unique(labels).size == k:
            return SpatialDataset(values, locs, labels, dataset.label_names)
    raise BootstrapDegenerate(
        f"no resample contained all {k} populations after {MAX_BOOTSTRAP_RETRIES} attempts"
    )


def p_value(observed: float, null_values, add_one: bool = False) -> float:
    """Share of null values at least as large as ``observed``.

    ``add_one`` gives ``(1 + count) / (1 + B)``, which is exactly uniform
    under exchangeability.
    """
    null_values = np.asarray(null_values, dtype=float)
    if null_values.size == 0:
        raise InvalidArgument("null distribution is empty")
    count = int(np.count_nonzero(null_values >= observed))
    if add_one:
        return (1 + count) / (1 + null_values.size)
    return count / null_values.size


def resolve_bandwidth(dataset: SpatialDataset, config: TestConfig) -> Bandwidth:
    if config.bandwidth == AUTO_ROT:
        return rule_of_thumb_bandwidth(dataset)
    if config.bandwidth == AUTO_CV:
        return select_bandwidth_cv(dataset, config.kernel, None, config.min_denominator,
                                   config.cv_full)
    return Bandwidth(config.bandwidth)


def _permutation_chunk(engine, dataset, seed, indices):
    labels = np.stack([substream(seed, b).permutation(dataset.labels) for b in indices])
    try:
        return engine.evaluate(labels)[0]
    except SpatialTestError:
        for row, b in enumerate(indices):
            try:
                engine.evaluate(labels[row:row + 1])
            except SpatialTestError as exc:
                raise ReplicateError(b, exc) from exc
        raise


def _bootstrap_chunk(dataset, partition, grid, bandwidth, config, indices):
    out = np.empty(len(indices))
    for row, b in enumerate(indices):
        try:
            sample = block_bootstrap_sample(dataset, partition, substream(config.seed, b),
                                            config.null_enforced)
            engine = StatisticEngine(sample.values, sample.locations, grid, config.kernel,
                                     bandwidth, dataset.k, config.min_denominator,
                                     config.min_coverage, config.y_subsample)
            out[row] = engine.evaluate(sample.labels)[0][0]
        except SpatialTestError as exc:
            raise ReplicateError(b, exc) from exc
    return out


def block_side_for(config: TestConfig, bandwidth) -> float:
    return config.block_side if config.block_side is not None else 4.0 * float(bandwidth)


def null_distribution(dataset: SpatialDataset, config: TestConfig, grid: EvaluationGrid,
                      bandwidth=None, workers: int = 1) -> np.ndarray:
    """Statistic recomputed on ``config.replicates`` resampled datasets.

    ``grid`` should carry the observed inclusion mask: nodes excluded from the
    observed statistic stay excluded in every replicate.
    """
    if bandwidth is None:
        bandwidth = resolve_bandwidth(dataset, config)
    B = config.replicates
    chunks = [range(s, min(s + CHUNK, B)) for s in range(0, B, CHUNK)]
    if config.method is Method.PERMUTATION:
        engine = StatisticEngine(dataset.values, dataset.locations, grid, config.kernel,
                                 bandwidth, dataset.k, config.min_denominator,
                                 config.min_coverage, config.y_subsample)
        tasks = [delayed(_permutation_chunk)(engine, dataset, config.seed, c) for c in chunks]
    else:
        partition = partition_blocks(dataset, block_side_for(config, bandwidth))
        tasks = [delayed(_bootstrap_chunk)(dataset, partition, grid, bandwidth, config, c)
                 for c in chunks]
    n_jobs = min(resolve_workers(workers), len(chunks))
    if n_jobs == 1:
        parts = [fn(*args, **kw) for fn, args, kw in tasks]
    else:
        parts = Parallel(n_jobs=n_jobs, backend="threading")(tasks)
    return np.concatenate(parts)


def run_test(dataset: SpatialDataset, config: Optional[TestConfig] = None, workers: int = 1,
             timings: Optional[dict] = None) -> TestResult:
    """Full test: bandwidth, grid, observed statistic, null values, decision.

    ``timings``, when given, is filled with wall-clock seconds per phase.
    """
    config = config or TestConfig()
    timings = {} if timings is None else timings

    t = time.perf_counter()
    bandwidth = resolve_bandwidth(dataset, config)
    timings["bandwidth"] = time.perf_counter() - t

    t = time.perf_counter()
    grid = build_grid(dataset, config.grid_resolution, config.weights)
    observed = compute_Tn(dataset, grid, config.kernel, bandwidth, config.min_denominator,
                          config.min_coverage, config.y_subsample)
    timings["observed"] = time.perf_counter() - t

    t = time.perf_counter()
    null = null_distribution(dataset, config, observed.grid, bandwidth, workers)
    timings["resampling"] = time.perf_counter() - t

    p = p_value(observed.total, null, config.add_one)
    return TestResult(
        observed_Tn=observed.total,
        null_values=null,
        p_value=p,
        reject=p < config.alpha,
        excluded_nodes=observed.grid.excluded_nodes,
        config_echo=config,
        bandwidth_used=bandwidth.value,
        coverage_fraction=observed.grid.coverage_fraction,
        pairwise=observed.pairwise,
    )
