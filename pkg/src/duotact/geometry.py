"""Marker layout generation on concentric hemispheres.

Markers live on two concentric hemispherical shells. The outer shell
carries the cyan filters, the inner shell the magenta ones; each inner
marker sits on the radial ray of its outer partner so that, seen from a
camera at the sphere center, a resting pair is concentric in the image.

Outer positions are distributed uniformly by a deterministic
latitude-ring construction: rings are spaced evenly in polar angle from
the pole to the equator, and each ring receives a point budget
proportional to its circumference (largest-remainder apportionment), so
the per-point area is close to the ideal 2*pi*R^2/N everywhere. The
pole ring degenerates to the single pole point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError

__all__ = [
    "SensorGeometry",
    "MarkerLayout",
    "NeighborStats",
    "generate_uniform_points",
    "build_layout",
    "nearest_neighbor_stats",
    "write_layout_csv",
    "read_layout_csv",
]


@dataclass(frozen=True)
class SensorGeometry:
    """Physical configuration of the sensing dome.

    Parameters
    ----------
    outer_radius : float
        Radius of the outer marker shell, mm.
    layer_separation : float
        Radial rest distance between the two marker shells, mm.
    marker_count : int
        Number of marker pairs on the hemisphere.
    marker_radius : float
        Physical radius of an outer marker disk, mm.
    inner_marker_scale : float
        Undersize ratio of the inner filter relative to the exact
        radial-cone intersection. Values below 1 leave a visible outer
        rim around every resting pair, which is what makes the mixed
        fraction (and hence the mean hue) respond to compression.
    """

    outer_radius: float
    layer_separation: float
    marker_count: int
    marker_radius: float
    inner_marker_scale: float = 0.8

    def __post_init__(self):
        if not self.outer_radius > self.layer_separation > 0:
            raise InvalidArgumentError(
                f"need outer_radius > layer_separation > 0, got "
                f"{self.outer_radius} and {self.layer_separation}"
            )
        if self.marker_count < 1:
            raise InvalidArgumentError("marker_count must be >= 1")
        if self.marker_radius <= 0:
            raise InvalidArgumentError("marker_radius must be positive")
        if not 0 < self.inner_marker_scale <= 1:
            raise InvalidArgumentError("inner_marker_scale must be in (0, 1]")
        # packing bound: total marker footprint must fit the hemisphere
        if 2.0 * self.marker_radius**2 * self.marker_count > 2.0 * math.pi * self.outer_radius**2:
            raise InvalidArgumentError(
                "markers do not fit the hemisphere without forced overlap"
            )

    @property
    def inner_radius(self) -> float:
        return self.outer_radius - self.layer_separation

    @property
    def inner_marker_radius(self) -> float:
        """Physical radius of an inner marker disk, mm."""
        return (
            self.marker_radius
            * (self.inner_radius / self.outer_radius)
            * self.inner_marker_scale
        )


@dataclass(frozen=True)
class MarkerLayout:
    """Paired marker positions on the two shells.

    ``inner_positions[i]`` is the radial scaling of
    ``outer_positions[i]``; both arrays have shape (marker_count, 3).
    """

    outer_positions: np.ndarray
    inner_positions: np.ndarray
    geometry: SensorGeometry = field(repr=False)

    def __len__(self) -> int:
        return self.outer_positions.shape[0]


def generate_uniform_points(n: int, radius: float) -> np.ndarray:
    """Distribute ``n`` points uniformly on the upper hemisphere.

    Latitude rings are spaced evenly from pole (inclusive) to equator
    (inclusive); ring point budgets are apportioned to circumference by
    largest remainder so the total is exactly ``n``. Alternate rings are
    staggered by half an azimuthal step. Output is deterministic.

    Returns an (n, 3) array of points with norm ``radius`` and z >= 0.
    """
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    if radius <= 0:
        raise InvalidArgumentError("radius must be positive")

    # ideal spacing for 2n points on the full sphere: d^2 = 2*pi*R^2/n
    spacing = math.sqrt(2.0 * math.pi / n)  # unit sphere
    n_rings = int(round((math.pi / 2.0) / spacing)) + 1
    if n == 1 or n_rings < 2:
        return np.array([[0.0, 0.0, radius]])

    d_theta = (math.pi / 2.0) / (n_rings - 1)
    thetas = d_theta * np.arange(n_rings)

    # pole ring holds exactly one point; apportion the rest by sin(theta)
    weights = np.sin(thetas[1:])
    quota = (n - 1) * weights / weights.sum()
    counts = np.floor(quota).astype(int)
    remainder = n - 1 - counts.sum()
    if remainder > 0:
        order = np.argsort(-(quota - counts), kind="stable")
        counts[order[:remainder]] += 1

    points = [np.array([0.0, 0.0, 1.0])]
    for m in range(1, n_rings):
        k = counts[m - 1]
        if k == 0:
            continue
        theta = thetas[m]
        phi = 2.0 * math.pi * (np.arange(k) + 0.5 * (m % 2)) / k
        ring = np.stack(
            [
                math.sin(theta) * np.cos(phi),
                math.sin(theta) * np.sin(phi),
                np.full(k, math.cos(theta)),
            ],
            axis=1,
        )
        points.append(ring)
    out = np.concatenate([p.reshape(-1, 3) for p in points], axis=0)
    return radius * out


def build_layout(geometry: SensorGeometry) -> MarkerLayout:
    """Generate the paired two-shell layout for a sensor geometry."""
    outer = generate_uniform_points(geometry.marker_count, geometry.outer_radius)
    inner = outer * (geometry.inner_radius / geometry.outer_radius)
    return MarkerLayout(outer_positions=outer, inner_positions=inner, geometry=geometry)


@dataclass(frozen=True)
class NeighborStats:
    mean: float
    stddev: float
    cv: float


def nearest_neighbor_stats(points: np.ndarray) -> NeighborStats:
    """Chordal nearest-neighbor distance statistics of a point set.

    Uses 3D Euclidean (chordal) distance, which is monotone with the
    geodesic distance at these scales. Requires at least two points.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 3:
        raise InvalidArgumentError("need at least 2 three-dimensional points")
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
    np.fill_diagonal(d2, np.inf)
    nn = np.sqrt(d2.min(axis=1))
    mean = float(nn.mean())
    stddev = float(nn.std())
    return NeighborStats(mean=mean, stddev=stddev, cv=stddev / mean)


def write_layout_csv(layout: MarkerLayout, path) -> None:
    """Dump a layout as CSV rows (index, layer, x_mm, y_mm, z_mm)."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("index,layer,x_mm,y_mm,z_mm\n")
        for name, arr in (("outer", layout.outer_positions), ("inner", layout.inner_positions)):
            for i, (x, y, z) in enumerate(arr):
                fh.write(f"{i},{name},{x:.9g},{y:.9g},{z:.9g}\n")


def read_layout_csv(path) -> dict:
    """Read a layout CSV back into ``{"outer": array, "inner": array}``."""
    outer, inner = [], []
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != "index,layer,x_mm,y_mm,z_mm":
            raise InvalidArgumentError(f"unrecognized layout header: {header!r}")
        for line in fh:
            idx, layer, x, y, z = line.strip().split(",")
            target = outer if layer == "outer" else inner
            target.append((float(x), float(y), float(z)))
    return {"outer": np.array(outer), "inner": np.array(inner)}
