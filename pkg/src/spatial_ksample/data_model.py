"""Immutable data types shared across the package."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Optional, Sequence, Union

import numpy as np

from .errors import InsufficientPopulations, InvalidArgument, ValidationError


def _frozen(arr, dtype=float):
    out = np.array(arr, dtype=dtype)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Observation:
    value: float
    location: tuple[float, float]
    population: int


@dataclass(frozen=True, eq=False)
class SpatialDataset:
    """Observations of ``k`` populations, each tagged with a planar location.

    Stored column-wise. ``labels`` holds dense integers ``1..k``; the original
    names (strings as read from file) live in ``label_names`` so that
    ``label_names[i - 1]`` is the name of population ``i``.
    """

    values: np.ndarray
    locations: np.ndarray
    labels: np.ndarray
    label_names: tuple[str, ...]

    def __post_init__(self):
        values = _frozen(self.values)
        locations = _frozen(self.locations).reshape(-1, 2)
        labels = _frozen(self.labels, dtype=np.int64)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "locations", locations)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "label_names", tuple(str(s) for s in self.label_names))

        if not (len(values) == len(locations) == len(labels)):
            raise ValidationError("values, locations and labels differ in length")
        bad = ~np.isfinite(values) | ~np.all(np.isfinite(locations), axis=1)
        if bad.any():
            raise ValidationError("non-finite value or coordinate", row=int(np.argmax(bad)))
        k = len(self.label_names)
        if k < 2:
            raise InsufficientPopulations(f"need at least 2 populations, got {k}")
        if len(labels) and (labels.min() < 1 or labels.max() > k):
            raise ValidationError(f"population labels must lie in 1..{k}")
        counts = np.bincount(labels, minlength=k + 1)[1:]
        if np.any(counts == 0):
            empty = [self.label_names[i] for i in np.flatnonzero(counts == 0)]
            raise InsufficientPopulations(f"populations without observations: {empty}")

    @classmethod
    def from_arrays(cls, values, locations, labels, label_names=None) -> "SpatialDataset":
        labels = np.asarray(labels, dtype=np.int64)
        if label_names is None:
            label_names = [str(i) for i in range(1, int(labels.max()) + 1)]
        return cls(values, locations, labels, tuple(label_names))

    @property
    def k(self) -> int:
        return len(self.label_names)

    @property
    def total(self) -> int:
        return len(self.values)

    @property
    def counts(self) -> list[int]:
        return np.bincount(self.labels, minlength=self.k + 1)[1:].tolist()

    @property
    def bounding_box(self) -> tuple[float, float, float, float]:
        lo = self.locations.min(axis=0)
        hi = self.locations.max(axis=0)
        return (float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))

    @property
    def observations(self) -> list[Observation]:
        return [
            Observation(float(v), (float(x), float(y)), int(p))
            for v, (x, y), p in zip(self.values, self.locations, self.labels)
        ]

    def population(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Values and locations of population ``i`` (1-based)."""
        if not 1 <= i <= self.k:
            raise IndexError(f"population {i} outside 1..{self.k}")
        mask = self.labels == i
        return self.values[mask], self.locations[mask]

    def with_labels(self, labels) -> "SpatialDataset":
        return SpatialDataset(self.values, self.locations, labels, self.label_names)

    def to_rows(self) -> list[tuple[float, float, float, str]]:
        """Rows ``(value, x, y, label_name)`` in the stored order."""
        return [
            (float(v), float(x), float(y), self.label_names[p - 1])
            for v, (x, y), p in zip(self.values, self.locations, self.labels)
        ]

    def __len__(self):
        return self.total


def validate_dataset(raw: Sequence[tuple]) -> SpatialDataset:
    """Build a dataset from ``(value, x, y, label)`` rows.

    Labels may be any hashable; they are mapped to ``1..k`` in order of first
    appearance.
    """
    if len(raw) == 0:
        raise ValidationError("no rows")
    names: dict[Any, int] = {}
    values, locs, labels = [], [], []
    for row_index, row in enumerate(raw):
        try:
            value, x, y, label = row
            value, x, y = float(value), float(x), float(y)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"malformed row {row!r}", row=row_index) from exc
        if not (math.isfinite(value) and math.isfinite(x) and math.isfinite(y)):
            raise ValidationError("non-finite value or coordinate", row=row_index)
        values.append(value)
        locs.append((x, y))
        labels.append(names.setdefault(label, len(names) + 1))
    if len(names) < 2:
        raise InsufficientPopulations(f"need at least 2 populations, got {len(names)}")
    return SpatialDataset(values, locs, labels, tuple(str(n) for n in names))


class KernelFamily(str, enum.Enum):
    EPANECHNIKOV = "epanechnikov"
    GAUSSIAN_TRUNCATED = "gaussian"


@dataclass(frozen=True)
class KernelSpec:
    """Radial kernel on the plane.

    ``truncation_radius`` is only used by the truncated Gaussian and is in
    units of the bandwidth.
    """

    family: KernelFamily = KernelFamily.EPANECHNIKOV
    truncation_radius: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily(self.family))
        if not (self.truncation_radius > 0 and math.isfinite(self.truncation_radius)):
            raise InvalidArgument("truncation_radius must be positive and finite")

    @property
    def support_radius(self) -> float:
        if self.family is KernelFamily.EPANECHNIKOV:
            return 1.0
        return float(self.truncation_radius)


@dataclass(frozen=True)
class Bandwidth:
    value: float

    def __post_init__(self):
        v = float(self.value)
        if not (v > 0 and math.isfinite(v)):
            raise InvalidArgument(f"bandwidth must be positive and finite, got {self.value}")
        object.__setattr__(self, "value", v)

    def __float__(self):
        return self.value


@dataclass(frozen=True, eq=False)
class EvaluationGrid:
    """Quadrature nodes for the spatial integral.

    ``weights`` are the values of the weight function at the nodes and
    ``cell_areas`` the quadrature measure; ``included`` flags nodes that take
    part in the statistic.
    """

    nodes: np.ndarray
    weights: np.ndarray
    cell_areas: np.ndarray
    included: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "nodes", _frozen(self.nodes).reshape(-1, 2))
        object.__setattr__(self, "weights", _frozen(self.weights))
        object.__setattr__(self, "cell_areas", _frozen(self.cell_areas))
        object.__setattr__(self, "included", _frozen(self.included, dtype=bool))
        m = len(self.nodes)
        if not (len(self.weights) == len(self.cell_areas) == len(self.included) == m):
            raise ValidationError("grid arrays differ in length")
        if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
            raise ValidationError("weights must be finite and nonnegative")

    @property
    def size(self) -> int:
        return len(self.nodes)

    @property
    def excluded_nodes(self) -> int:
        return int(self.size - self.included.sum())

    @property
    def coverage_fraction(self) -> float:
        return float(self.included.sum()) / self.size

    @property
    def weight_total(self) -> float:
        """Sum of ``w(s) * area`` over included nodes."""
        return float(np.sum(np.where(self.included, self.weights * self.cell_areas, 0.0)))

    def with_included(self, included) -> "EvaluationGrid":
        return EvaluationGrid(self.nodes, self.weights, self.cell_areas, included)


class Method(str, enum.Enum):
    PERMUTATION = "permutation"
    BLOCK_BOOTSTRAP = "block_bootstrap"


BandwidthSetting = Union[float, str]
AUTO_ROT = "auto-rot"
AUTO_CV = "auto-cv"


@dataclass(frozen=True)
class TestConfig:
    """Everything that determines a test run besides the data.

    ``bandwidth`` is either a positive number or one of ``"auto-rot"`` (rule
    of thumb) and ``"auto-cv"`` (leave-one-out cross-validation).
    ``block_side=None`` means four bandwidths. ``weights`` is an optional
    per-node weight table of length ``grid_resolution**2``; uniform otherwise.
    """

    __test__ = False  # not a pytest class

    kernel: KernelSpec = field(default_factory=KernelSpec)
    bandwidth: BandwidthSetting = AUTO_ROT
    grid_resolution: int = 16
    weights: Optional[tuple[float, ...]] = None
    method: Method = Method.PERMUTATION
    replicates: int = 1000
    block_side: Optional[float] = None
    alpha: float = 0.05
    seed: int = 0
    min_denominator: float = 1e-12
    min_coverage: float = 0.5
    y_subsample: int = 1
    add_one: bool = False
    null_enforced: bool = True
    cv_full: bool = False

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if isinstance(self.kernel, dict):
            object.__setattr__(self, "kernel", KernelSpec(**self.kernel))
        if self.weights is not None:
            object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if isinstance(self.bandwidth, str):
            if self.bandwidth not in (AUTO_ROT, AUTO_CV):
                raise InvalidArgument(f"unknown bandwidth setting {self.bandwidth!r}")
        else:
            Bandwidth(self.bandwidth)
            object.__setattr__(self, "bandwidth", float(self.bandwidth))
        if self.replicates < 1:
            raise InvalidArgument("replicates must be >= 1")
        if self.grid_resolution < 2:
            raise InvalidArgument("grid_resolution must be >= 2")
        if not 0 < self.alpha < 1:
            raise InvalidArgument("alpha must lie in (0, 1)")
        if self.block_side is not None and not self.block_side > 0:
            raise InvalidArgument("block_side must be positive")
        if not 0 <= self.seed < 2**64:
            raise InvalidArgument("seed must be an unsigned 64-bit integer")
        if not self.min_denominator > 0:
            raise InvalidArgument("min_denominator must be positive")
        if not 0 < self.min_coverage <= 1:
            raise InvalidArgument("min_coverage must lie in (0, 1]")
        if self.y_subsample < 1:
            raise InvalidArgument("y_subsample must be >= 1")

    def replace(self, **changes) -> "TestConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, KernelSpec):
                v = {"family": v.family.value, "truncation_radius": v.truncation_radius}
            elif isinstance(v, enum.Enum):
                v = v.value
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TestConfig":
        d = dict(d)
        if "kernel" in d and isinstance(d["kernel"], dict):
            d["kernel"] = KernelSpec(**d["kernel"])
        return cls(**d)


@dataclass(frozen=True, eq=False)
class TestResult:
    __test__ = False

    observed_Tn: float
    null_values: np.ndarray
    p_value: float
    reject: bool
    excluded_nodes: int
    config_echo: TestConfig
    bandwidth_used: float
    coverage_fraction: float = 1.0
    pairwise: dict = field(default_factory=dict)

    def to_dict(self, include_null=True) -> dict[str, Any]:
        d = asdict(self)
        d["config_echo"] = self.config_echo.to_dict()
        d["pairwise"] = {f"{i},{j}": v for (i, j), v in self.pairwise.items()}
        if include_null:
            d["null_values"] = [float(v) for v in self.null_values]
        else:
            del d["null_values"]
        return d
