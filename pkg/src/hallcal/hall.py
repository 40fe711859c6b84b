"""Data-hall domain types and distance-based knowledge priors.

A hall is described by its facility inventory (CRACs, servers, sensors
with 3-D positions). From the geometry we derive the adjacency priors
used by the knowledge surrogate: facility-to-sensor weights set to the
normalized reciprocal of spatial distance, thresholded so that far-field
influence is exactly zero, plus the one-hot hot-aisle sensor mask.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    AllWeightsCutError,
    DimensionMismatchError,
    DuplicateIdError,
    DuplicatePositionError,
    EmptyFacilityClassError,
    MissingAisleCoverageError,
    NonFinitePositionError,
    ZeroDistanceError,
)

COLD = "cold"
HOT = "hot"

DEFAULT_CUT_THRESHOLD = 0.01


@dataclass(frozen=True)
class Crac:
    id: str
    position: tuple[float, float, float]


@dataclass(frozen=True)
class Server:
    id: str
    position: tuple[float, float, float]
    type_tag: str
    rated_power: float  # W


@dataclass(frozen=True)
class Sensor:
    id: str
    position: tuple[float, float, float]
    aisle: str  # COLD or HOT


@dataclass(frozen=True)
class HallLayout:
    """Facility inventory of one data hall."""

    cracs: tuple[Crac, ...]
    servers: tuple[Server, ...]
    sensors: tuple[Sensor, ...]
    containment: bool = True

    @property
    def n_cracs(self) -> int:
        return len(self.cracs)

    @property
    def n_servers(self) -> int:
        return len(self.servers)

    @property
    def n_sensors(self) -> int:
        return len(self.sensors)

    def crac_positions(self) -> np.ndarray:
        return np.array([c.position for c in self.cracs], dtype=float)

    def server_positions(self) -> np.ndarray:
        return np.array([s.position for s in self.servers], dtype=float)

    def sensor_positions(self) -> np.ndarray:
        return np.array([s.position for s in self.sensors], dtype=float)

    def rated_powers(self) -> np.ndarray:
        return np.array([s.rated_power for s in self.servers], dtype=float)


@dataclass(frozen=True)
class SystemInput:
    """One solver/surrogate input: CRAC setpoints and fan speeds, server
    powers, and the per-server air flow rates being calibrated."""

    crac_setpoints: np.ndarray  # (l,) degC
    crac_fan_speeds: np.ndarray  # (l,) ratio in [0, 1]
    server_powers: np.ndarray  # (m,) W, >= 0
    flow_rates: np.ndarray  # (m,) cfm/W, > 0

    def __post_init__(self):
        for name in ("crac_setpoints", "crac_fan_speeds", "server_powers", "flow_rates"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.crac_setpoints.shape != self.crac_fan_speeds.shape:
            raise DimensionMismatchError("setpoints and fan speeds differ in length")
        if self.server_powers.shape != self.flow_rates.shape:
            raise DimensionMismatchError("powers and flow rates differ in length")

    def with_flow_rates(self, alpha: np.ndarray) -> "SystemInput":
        return SystemInput(
            self.crac_setpoints, self.crac_fan_speeds, self.server_powers, np.asarray(alpha, dtype=float)
        )

    def check_layout(self, layout: HallLayout) -> None:
        if self.crac_setpoints.size != layout.n_cracs:
            raise DimensionMismatchError(
                f"expected {layout.n_cracs} CRAC entries, got {self.crac_setpoints.size}"
            )
        if self.server_powers.size != layout.n_servers:
            raise DimensionMismatchError(
                f"expected {layout.n_servers} server entries, got {self.server_powers.size}"
            )


@dataclass(frozen=True)
class AdjacencyPriors:
    """Fixed knowledge priors: facility-to-sensor weights and hot-aisle mask.

    w_cs has shape (l, n) and w_ss shape (m, n); column k carries the
    weights of all facilities onto sensor k and sums to 1 over its nonzero
    entries. hot_mask[k] is 1.0 for hot-aisle sensors, else 0.0.
    """

    w_cs: np.ndarray
    w_ss: np.ndarray
    hot_mask: np.ndarray

    @property
    def n_sensors(self) -> int:
        return self.hot_mask.size


def _check_unique(ids: Sequence[str], cls: str) -> None:
    seen = set()
    for i in ids:
        if i in seen:
            raise DuplicateIdError(f"duplicate {cls} id {i!r}")
        seen.add(i)


def _check_positions(positions: np.ndarray, cls: str) -> None:
    if not np.all(np.isfinite(positions)):
        raise NonFinitePositionError(f"non-finite {cls} position")
    # same-class facilities may not coincide
    for i in range(len(positions)):
        for j in range(i + 1, len(positions)):
            if np.array_equal(positions[i], positions[j]):
                raise DuplicatePositionError(f"{cls} entries {i} and {j} share a position")


def validate_layout(layout: HallLayout) -> HallLayout:
    """Check all layout invariants; return the layout unchanged if valid."""
    if layout.n_cracs < 1:
        raise EmptyFacilityClassError("layout has no CRACs")
    if layout.n_servers < 1:
        raise EmptyFacilityClassError("layout has no servers")
    if layout.n_sensors < 2:
        raise EmptyFacilityClassError("layout needs at least two sensors")

    _check_unique([c.id for c in layout.cracs], "CRAC")
    _check_unique([s.id for s in layout.servers], "server")
    _check_unique([s.id for s in layout.sensors], "sensor")

    _check_positions(layout.crac_positions(), "CRAC")
    _check_positions(layout.server_positions(), "server")
    _check_positions(layout.sensor_positions(), "sensor")

    aisles = {s.aisle for s in layout.sensors}
    bad = aisles - {COLD, HOT}
    if bad:
        raise MissingAisleCoverageError(f"unknown aisle tags {sorted(bad)}")
    if COLD not in aisles or HOT not in aisles:
        raise MissingAisleCoverageError("need at least one cold and one hot sensor")
    return layout


def hot_aisle_mask(layout: HallLayout) -> np.ndarray:
    """One-hot vector over sensors: 1.0 where the sensor sits in a hot aisle."""
    return np.array([1.0 if s.aisle == HOT else 0.0 for s in layout.sensors])


DistanceMetric = Callable[[np.ndarray, np.ndarray], np.ndarray]


def euclidean_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise Euclidean distances between two position sets, (len a, len b)."""
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2))


def _reciprocal_distance_columns(
    facility_pos: np.ndarray, sensor_pos: np.ndarray, cut_threshold: float, cls: str,
    metric: DistanceMetric,
) -> np.ndarray:
    """Per-sensor-column normalized 1/distance weights with thresholding.

    Normalized weights below cut_threshold are zeroed, survivors are
    renormalized so every column sums to 1 again.
    """
    dist = metric(facility_pos, sensor_pos)
    if np.any(dist == 0.0):
        f, s = np.argwhere(dist == 0.0)[0]
        raise ZeroDistanceError(f"{cls} {f} coincides with sensor {s}")
    raw = 1.0 / dist
    w = raw / raw.sum(axis=0, keepdims=True)
    w[w < cut_threshold] = 0.0
    col_sums = w.sum(axis=0)
    if np.any(col_sums == 0.0):
        k = int(np.argmax(col_sums == 0.0))
        raise AllWeightsCutError(f"threshold {cut_threshold} removed all {cls} weights of sensor {k}")
    return w / col_sums


def build_adjacency(layout: HallLayout, cut_threshold: float = DEFAULT_CUT_THRESHOLD,
                    metric: Optional[DistanceMetric] = None) -> AdjacencyPriors:
    """Derive the adjacency priors from the hall geometry.

    Raw facility-to-sensor weight is the reciprocal spatial distance
    (Euclidean unless another metric is supplied); weights are normalized
    per sensor column, cut below `cut_threshold`, and renormalized over
    the surviving entries.
    """
    validate_layout(layout)
    if cut_threshold < 0:
        raise ValueError("cut_threshold must be >= 0")
    metric = metric or euclidean_distances
    sensor_pos = layout.sensor_positions()
    w_cs = _reciprocal_distance_columns(layout.crac_positions(), sensor_pos,
                                        cut_threshold, "CRAC", metric)
    w_ss = _reciprocal_distance_columns(layout.server_positions(), sensor_pos,
                                        cut_threshold, "server", metric)
    return AdjacencyPriors(w_cs=w_cs, w_ss=w_ss, hot_mask=hot_aisle_mask(layout))
