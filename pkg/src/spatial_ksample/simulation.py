"""Synthetic spatial data and Monte Carlo size/power experiments."""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy import special, stats
from scipy.spatial import cKDTree

from .data_model import SpatialDataset, TestConfig
from .errors import InvalidArgument, ReplicateError, SpatialTestError
from .estimator import smoothed_cdf
from .kernels import rule_of_thumb_bandwidth
from .resampling import derive_seed, resolve_bandwidth, resolve_workers, run_test
from .statistic import build_grid, compute_Tn

_DATA_STREAM = 1
_TEST_STREAM = 2


@dataclass(frozen=True)
class Margin:
    """Marginal law: ``Normal(mu, sigma)`` or ``Uniform(a, b)``."""

    kind: str
    a: float
    b: float

    def __post_init__(self):
        kind = self.kind.lower()
        object.__setattr__(self, "kind", kind)
        if kind == "normal":
            if not self.b > 0:
                raise InvalidArgument("Normal sigma must be positive")
        elif kind == "uniform":
            if not self.b > self.a:
                raise InvalidArgument("Uniform needs a < b")
        else:
            raise InvalidArgument(f"unknown margin {self.kind!r}")

    @classmethod
    def normal(cls, mu=0.0, sigma=1.0):
        return cls("normal", float(mu), float(sigma))

    @classmethod
    def uniform(cls, a=0.0, b=1.0):
        return cls("uniform", float(a), float(b))

    @classmethod
    def parse(cls, text: str) -> "Margin":
        m = re.fullmatch(r"\s*(\w+)\s*\(\s*([^,]+?)\s*,\s*([^)]+?)\s*\)\s*", text)
        if not m:
            raise InvalidArgument(f"cannot parse margin {text!r}; expected e.g. Normal(0, 1)")
        return cls(m.group(1), float(m.group(2)), float(m.group(3)))

    def __str__(self):
        name = "Normal" if self.kind == "normal" else "Uniform"
        return f"{name}({self.a:g}, {self.b:g})"

    @property
    def dist(self):
        if self.kind == "normal":
            return stats.norm(self.a, self.b)
        return stats.uniform(self.a, self.b - self.a)

    def cdf(self, y):
        return self.dist.cdf(y)

    def ppf(self, u):
        return self.dist.ppf(u)

    def from_standard_normal(self, z):
        """Map standard normal draws onto this margin."""
        if self.kind == "normal":
            return self.a + self.b * np.asarray(z)
        return self.a + (self.b - self.a) * special.ndtr(z)

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return (self.a, self.b) if self.kind == "uniform" else ()


class LocationModel(str, enum.Enum):
    UNIFORM_IID = "uniform_iid"
    CLUSTER_MIXTURE = "cluster_mixture"


class FieldModel(str, enum.Enum):
    IID_NOISE = "iid"
    MOVING_AVERAGE = "moving_average"


@dataclass(frozen=True)
class ScenarioSpec:
    """Configuration of one synthetic data generator.

    All populations share one latent field, so under equal margins the labels
    are exchangeable. ``field_range`` is the neighbourhood radius of the moving
    average field; clusters are shared by all populations.
    """

    k: int = 2
    n_i: tuple[int, ...] = (50, 50)
    margins: tuple[Margin, ...] = (Margin.normal(), Margin.normal())
    domain: tuple[float, float, float, float] = (0.0, 0.0, 1.0, 1.0)
    location_model: LocationModel = LocationModel.UNIFORM_IID
    field_model: FieldModel = FieldModel.IID_NOISE
    field_range: float = 0.0
    cluster_count: int = 5
    cluster_spread: float = 0.05
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "location_model", LocationModel(self.location_model))
        object.__setattr__(self, "field_model", FieldModel(self.field_model))
        object.__setattr__(self, "n_i", tuple(int(c) for c in self.n_i))
        margins = tuple(m if isinstance(m, Margin) else Margin.parse(m) for m in self.margins)
        object.__setattr__(self, "margins", margins)
        if self.k < 2:
            raise InvalidArgument("k must be >= 2")
        if len(self.n_i) != self.k or len(margins) != self.k:
            raise InvalidArgument("n_i and margins need one entry per population")
        if any(c < 1 for c in self.n_i):
            raise InvalidArgument("population sizes must be positive")
        if self.field_range < 0:
            raise InvalidArgument("field_range must be >= 0")
        x0, y0, x1, y1 = self.domain
        if not (x1 > x0 and y1 > y0):
            raise InvalidArgument("domain must have positive width and height")

    def replace(self, **changes) -> "ScenarioSpec":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "n_i": list(self.n_i),
            "margins": [str(m) for m in self.margins],
            "domain": list(self.domain),
            "location_model": self.location_model.value,
            "field_model": self.field_model.value,
            "field_range": self.field_range,
            "cluster_count": self.cluster_count,
            "cluster_spread": self.cluster_spread,
            "seed": self.seed,
        }


def _reflect(x, lo, hi):
    width = hi - lo
    t = np.mod(x - lo, 2 * width)
    return lo + np.where(t > width, 2 * width - t, t)


def draw_locations(scenario: ScenarioSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    x0, y0, x1, y1 = scenario.domain
    lo, hi = np.array([x0, y0]), np.array([x1, y1])
    if scenario.location_model is LocationModel.UNIFORM_IID:
        return lo + (hi - lo) * rng.random((n, 2))
    centres = lo + (hi - lo) * rng.random((scenario.cluster_count, 2))
    which = rng.integers(scenario.cluster_count, size=n)
    spread = scenario.cluster_spread * float(np.max(hi - lo))
    pts = centres[which] + spread * rng.standard_normal((n, 2))
    return np.column_stack([_reflect(pts[:, 0], x0, x1), _reflect(pts[:, 1], y0, y1)])


def latent_field(locations, field_range: float, rng: np.random.Generator) -> np.ndarray:
    """Standard normal field with correlation vanishing beyond ``2 * field_range``.

    Each point sums the i.i.d. seeds of all points within ``field_range`` (itself
    included) and divides by the square root of their count, so every value is
    exactly N(0, 1) given the locations.
    """
    locations = np.asarray(locations, dtype=float)
    z = rng.standard_normal(len(locations))
    if field_range == 0:
        return z
    tree = cKDTree(locations)
    neighbours = tree.query_ball_point(locations, field_range, return_sorted=True)
    out = np.empty(len(locations))
    for j, idx in enumerate(neighbours):
        out[j] = z[idx].sum() / math.sqrt(len(idx))
    return out


def generate_dataset(scenario: ScenarioSpec) -> SpatialDataset:
    rng = np.random.default_rng(np.random.SeedSequence(int(scenario.seed)))
    n = sum(scenario.n_i)
    locations = draw_locations(scenario, n, rng)
    labels = np.repeat(np.arange(1, scenario.k + 1), scenario.n_i)
    if scenario.field_model is FieldModel.IID_NOISE:
        z = rng.standard_normal(n)
    else:
        z = latent_field(locations, scenario.field_range, rng)
    values = np.empty(n)
    for i, margin in enumerate(scenario.margins):
        mask = labels == i + 1
        values[mask] = margin.from_standard_normal(z[mask])
    names = tuple(f"P{i}" for i in range(1, scenario.k + 1))
    return SpatialDataset(values, locations, labels, names)


def plugin_C(margins: Sequence[Margin], mixture_weights: Sequence[float],
             weight_total: float = 1.0, y_quadrature: int = 256) -> float:
    """Limit of the statistic under fixed, distinct margins.

    The integrating law is the mixture of the margins with
    ``mixture_weights``. Each mixture component is integrated in probability
    space with Gauss-Legendre rules split at the kinks of the integrand, so
    piecewise-polynomial cases are exact to rounding.
    """
    margins = [m if isinstance(m, Margin) else Margin.parse(m) for m in margins]
    w = np.asarray(mixture_weights, dtype=float)
    if len(w) != len(margins):
        raise InvalidArgument("one mixture weight per margin required")
    if not math.isclose(w.sum(), 1.0, rel_tol=0, abs_tol=1e-9):
        raise InvalidArgument("mixture weights must sum to 1")
    pairs = list(combinations(range(len(margins)), 2))
    if not pairs:
        return 0.0
    breaks_y = sorted({b for m in margins for b in m.breakpoints})
    gl_x, gl_w = np.polynomial.legendre.leggauss(y_quadrature)

    def integrand(y):
        F = [m.cdf(y) for m in margins]
        return sum((F[i] - F[l]) ** 2 for i, l in pairs)

    total = 0.0
    for weight, m in zip(w, margins):
        if weight == 0:
            continue
        cuts = np.unique(np.concatenate([[0.0, 1.0], np.clip(m.cdf(breaks_y), 0, 1)])) \
            if breaks_y else np.array([0.0, 1.0])
        part = 0.0
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            if hi <= lo:
                continue
            u = 0.5 * (hi - lo) * gl_x + 0.5 * (hi + lo)
            part += 0.5 * (hi - lo) * float(np.dot(gl_w, integrand(m.ppf(u))))
        total += weight * part
    return float(weight_total * total)


@dataclass(frozen=True, eq=False)
class MonteCarloResult:
    rate: float
    trials: int
    p_values: np.ndarray = field(repr=False)
    rejections: int = 0


def _trial(scenario, config, t):
    data = generate_dataset(scenario.replace(seed=derive_seed(scenario.seed, t, _DATA_STREAM)))
    cfg = config.replace(seed=derive_seed(config.seed, t, _TEST_STREAM))
    try:
        return run_test(data, cfg).p_value, None
    except SpatialTestError as exc:
        return None, exc


def monte_carlo_rejection_rate(scenario: ScenarioSpec, config: TestConfig, trials: int,
                               workers: int = 1) -> MonteCarloResult:
    """Fraction of ``trials`` independent datasets on which the test rejects.

    Trial ``t`` draws its data and its resampling seed from
    ``(scenario.seed, t)`` and ``(config.seed, t)``.
    """
    if trials < 1:
        raise InvalidArgument("trials must be >= 1")
    n_jobs = min(resolve_workers(workers), trials)
    tasks = (delayed(_trial)(scenario, config, t) for t in range(trials))
    if n_jobs == 1:
        out = [_trial(scenario, config, t) for t in range(trials)]
    else:
        out = Parallel(n_jobs=n_jobs, backend="threading")(tasks)
    for t, (_, exc) in enumerate(out):
        if exc is not None:
            raise ReplicateError(t, exc, kind="trial") from exc
    p = np.array([pv for pv, _ in out])
    rejections = int(np.count_nonzero(p < config.alpha))
    return MonteCarloResult(rejections / trials, trials, p, rejections)


@dataclass(frozen=True)
class CurvePoint:
    n: int
    mean_Tn: float
    C: float


def consistency_curve(scenario: ScenarioSpec, sizes: Sequence[int], replicates: int,
                      config: Optional[TestConfig] = None) -> list[CurvePoint]:
    """Average observed statistic against its plug-in limit, per size.

    ``sizes`` are per-population sample sizes. The limit uses the grid's
    total weighted area, averaged over the replicates alongside the statistic.
    """
    config = config or TestConfig()
    out = []
    for s, size in enumerate(sizes):
        sc = scenario.replace(n_i=(int(size),) * scenario.k)
        weights = np.full(scenario.k, 1.0 / scenario.k)
        tns, cs = [], []
        for r in range(replicates):
            data = generate_dataset(sc.replace(seed=derive_seed(scenario.seed, s * replicates + r,
                                                                _DATA_STREAM)))
            lam = resolve_bandwidth(data, config)
            grid = build_grid(data, config.grid_resolution, config.weights)
            stat = compute_Tn(data, grid, config.kernel, lam, config.min_denominator,
                              config.min_coverage, config.y_subsample)
            tns.append(stat.total)
            cs.append(plugin_C(sc.margins, weights, stat.grid.weight_total))
        out.append(CurvePoint(int(size), float(np.mean(tns)), float(np.mean(cs))))
    return out


def cdf_error_curve(margin: Margin, sizes: Sequence[int], replicates: int,
                    config: Optional[TestConfig] = None, seed: int = 0,
                    probes: Sequence[float] = (0.1, 0.25, 0.5, 0.75, 0.9)) -> list[tuple[int, float]]:
    """Mean absolute error of the smoothed CDF at the centre of the unit square.

    One population of ``n`` i.i.d. uniform locations with i.i.d. values from
    ``margin``; the error is averaged over the ``probes`` quantiles of the
    margin and over replicates. A numeric ``config.bandwidth`` is used as is;
any automatic setting means the rule of thumb of each replicate.
    """
    config = config or TestConfig()
    ys = margin.ppf(np.asarray(probes))
    truth = np.asarray(probes)
    out = []
    for s, n in enumerate(sizes):
        errs = []
        for r in range(replicates):
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(s, r)))
            locs = rng.random((n, 2))
            vals = margin.from_standard_normal(rng.standard_normal(n))
            # second population only to satisfy k >= 2; it is never evaluated
            data = SpatialDataset(np.append(vals, 0.0), np.vstack([locs, [0.5, 0.5]]),
                                  np.append(np.ones(n, dtype=int), 2), ("x", "aux"))
            lam = (rule_of_thumb_bandwidth(data) if isinstance(config.bandwidth, str)
                   else config.bandwidth)
            est = np.array([smoothed_cdf(data, 1, (0.5, 0.5), y, config.kernel, lam,
                                         config.min_denominator) for y in ys])
            errs.append(float(np.mean(np.abs(est - truth))))
        out.append((int(n), float(np.mean(errs))))
    return out
