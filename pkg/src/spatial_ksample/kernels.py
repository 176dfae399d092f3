"""Planar smoothing kernels, their bandwidth scaling, and bandwidth choice."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data_model import Bandwidth, KernelFamily, KernelSpec, SpatialDataset
from .errors import BandwidthSelectionFailed, DegenerateGeometry, InvalidArgument

DEFAULT_LADDER = (0.25, 0.5, 1.0, 2.0, 4.0)
_CV_CHUNK = 1024


def radial_profile(kernel: KernelSpec, r2):
    """Kernel value as a function of the squared radius ``r2``."""
    r2 = np.asarray(r2, dtype=float)
    if kernel.family is KernelFamily.EPANECHNIKOV:
        return np.where(r2 < 1.0, (2.0 / math.pi) * (1.0 - r2), 0.0)
    R = kernel.truncation_radius
    mass = -math.expm1(-0.5 * R * R)
    return np.where(r2 <= R * R, np.exp(-0.5 * r2) / (2.0 * math.pi * mass), 0.0)


def kernel_eval(kernel: KernelSpec, u):
    """Evaluate ``K(u)`` for displacement(s) ``u`` with trailing axis of size 2."""
    u = np.asarray(u, dtype=float)
    r2 = u[..., 0] * u[..., 0] + u[..., 1] * u[..., 1]
    return radial_profile(kernel, r2)


def scaled_kernel(kernel: KernelSpec, bandwidth, u):
    """``K(u / lam) / lam**2``."""
    lam = float(bandwidth)
    u = np.asarray(u, dtype=float) / lam
    return kernel_eval(kernel, u) / (lam * lam)


def squared_integral(kernel: KernelSpec) -> float:
    """Closed form of the integral of ``K(u)**2`` over the plane."""
    if kernel.family is KernelFamily.EPANECHNIKOV:
        return 4.0 / (3.0 * math.pi)
    R = kernel.truncation_radius
    mass = -math.expm1(-0.5 * R * R)
    return -math.expm1(-R * R) / (4.0 * math.pi * mass * mass)


def rule_of_thumb_bandwidth(dataset: SpatialDataset) -> Bandwidth:
    """Largest box side times ``n**(-1/6)``.

    The exponent keeps ``lam -> 0`` while ``n * lam**2`` grows like
    ``n**(2/3)`` on a fixed domain.
    """
    x0, y0, x1, y1 = dataset.bounding_box
    extent = max(x1 - x0, y1 - y0)
    if not extent > 0:
        raise DegenerateGeometry("all observations share a single location")
    return Bandwidth(extent * dataset.total ** (-1.0 / 6.0))


@dataclass(frozen=True)
class CVScore:
    bandwidth: float
    score: float  # nan when disqualified
    used: int  # observations entering the average


def cv_scores(
    dataset: SpatialDataset,
    kernel: KernelSpec,
    candidates: Sequence[float],
    min_denominator: float = 1e-12,
    full: bool = False,
) -> list[CVScore]:
    """Leave-one-out CDF prediction error for each candidate bandwidth.

    For every observation the smoothed CDF of its own population, with the
    observation removed, is evaluated at the observation's location and
    compared with the observation's own indicator at a set of probe values:
    the pooled deciles, or every pooled value when ``full`` is set.
    """
    if len(candidates) == 0:
        raise InvalidArgument("no bandwidth candidates")
    if any(not c > 0 for c in candidates):
        raise InvalidArgument("bandwidth candidates must be positive")
    if full:
        probes = np.sort(dataset.values)
    else:
        probes = np.quantile(dataset.values, np.arange(1, 10) / 10.0)

    out = []
    for lam in sorted(float(c) for c in candidates):
        total, used = 0.0, 0
        for pop in range(1, dataset.k + 1):
            values, locs = dataset.population(pop)
            ind = (values[:, None] <= probes[None, :]).astype(float)
            for start in range(0, len(values), _CV_CHUNK):
                rows = slice(start, start + _CV_CHUNK)
                w = scaled_kernel(kernel, lam, locs[rows, None, :] - locs[None, :, :])
                idx = np.arange(w.shape[0])
                w[idx, idx + start] = 0.0
                den = w.sum(axis=1)
                ok = den >= min_denominator
                if not ok.any():
                    continue
                fhat = (w[ok] @ ind) / den[ok, None]
                err = np.mean((ind[rows][ok] - fhat) ** 2, axis=1)
                total += float(err.sum())
                used += int(ok.sum())
        out.append(CVScore(lam, total / used if used else math.nan, used))
    return out


def select_bandwidth_cv(
    dataset: SpatialDataset,
    kernel: KernelSpec,
    candidates: Optional[Sequence[float]] = None,
    min_denominator: float = 1e-12,
    full: bool = False,
) -> Bandwidth:
    """Candidate with the smallest leave-one-out score; ties go to the smaller.

    Without ``candidates`` the ladder ``rule_of_thumb * (1/4, 1/2, 1, 2, 4)``
    is searched.
    """
    if candidates is None:
        base = rule_of_thumb_bandwidth(dataset).value
        candidates = [base * f for f in DEFAULT_LADDER]
    scores = [s for s in cv_scores(dataset, kernel, candidates, min_denominator, full)
              if not math.isnan(s.score)]
    if not scores:
        raise BandwidthSelectionFailed(
            "every candidate bandwidth leaves all observations without neighbours"
        )
    best = min(scores, key=lambda s: (s.score, s.bandwidth))
    return Bandwidth(best.bandwidth)
