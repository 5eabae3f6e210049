"""Synthetic camera frames via an equal-area fisheye and subtractive mixing.

The camera sits at the sphere center looking along +z. A point at polar
angle theta lands at image radius ``r = 2 f sin(theta/2)``, which makes
equal solid angles occupy equal pixel areas, so a marker's image area is
independent of where it sits on the dome. Marker disks are therefore
drawn as circles whose pixel radius ``f * asin(rho/d)`` preserves the
projected area exactly.

Light starts white at the diffusive backing, passes the outer cyan
filter and then the inner magenta filter on its way to the camera; every
filter multiplies the pixel by its transmission. Closing the gap between
the shells raises the magenta exponent (opacity law), which shifts the
mixed color. A radial lighting gain and additive Gaussian pixel noise
complete the frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InvalidArgumentError
from .geometry import MarkerLayout
from .mechanics import MarkerDisplacements

__all__ = [
    "CameraModel",
    "RasterImage",
    "OpticalFilterModel",
    "RadialLighting",
    "project",
    "projected_disk_radius",
    "magenta_exponent",
    "compose_marker_color",
    "render_frame",
]


@dataclass(frozen=True)
class CameraModel:
    """Equal-area fisheye camera at the hemisphere center."""

    image_width: int
    image_height: int
    focal_scale: float
    principal_point: tuple = None

    def __post_init__(self):
        if self.focal_scale <= 0:
            raise InvalidArgumentError("focal_scale must be positive")
        if self.image_width < 1 or self.image_height < 1:
            raise InvalidArgumentError("image dimensions must be positive")
        if self.principal_point is None:
            object.__setattr__(
                self,
                "principal_point",
                ((self.image_width - 1) / 2.0, (self.image_height - 1) / 2.0),
            )
        px, py = self.principal_point
        if not (0 <= px < self.image_width and 0 <= py < self.image_height):
            raise InvalidArgumentError("principal point must lie inside the image")


@dataclass
class RasterImage:
    """8-bit RGB image, row-major (H, W, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise InvalidArgumentError("pixels must have shape (H, W, 3)")
        if self.pixels.dtype != np.uint8:
            raise InvalidArgumentError("pixels must be uint8")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def to_float(self) -> np.ndarray:
        """Pixels as float64 in [0, 1]."""
        return self.pixels.astype(np.float64) / 255.0

    def to_ppm_bytes(self) -> bytes:
        header = f"P6\n{self.width} {self.height}\n255\n".encode("ascii")
        return header + self.pixels.tobytes()

    @classmethod
    def from_ppm_bytes(cls, data: bytes) -> "RasterImage":
        fields = []
        pos = 0
        while len(fields) < 4:
            end = data.index(b"\n", pos)
            token = data[pos:end]
            if token.startswith(b"#"):
                pos = end + 1
                continue
            fields.extend(token.split())
            pos = end + 1
        if fields[0] != b"P6" or fields[3] != b"255":
            raise InvalidArgumentError("not an 8-bit P6 PPM stream")
        w, h = int(fields[1]), int(fields[2])
        pixels = np.frombuffer(data[pos:], dtype=np.uint8, count=w * h * 3)
        return cls(pixels=pixels.reshape(h, w, 3).copy())

    def save(self, path) -> None:
        """Write PNG or binary PPM depending on the file suffix."""
        path = str(path)
        if path.endswith(".ppm"):
            with open(path, "wb") as fh:
                fh.write(self.to_ppm_bytes())
        else:
            from PIL import Image

            Image.fromarray(self.pixels, mode="RGB").save(path, format="PNG")

    @classmethod
    def load(cls, path) -> "RasterImage":
        path = str(path)
        if path.endswith(".ppm"):
            with open(path, "rb") as fh:
                return cls.from_ppm_bytes(fh.read())
        from PIL import Image

        with Image.open(path) as im:
            return cls(pixels=np.asarray(im.convert("RGB"), dtype=np.uint8).copy())


@dataclass(frozen=True)
class OpticalFilterModel:
    """Transmission spectra of the two filter layers.

    ``opacity_gain`` scales the gap-dependent magenta exponent; the
    background is the diffusive backing color.
    """

    cyan_transmission: tuple = (0.08, 0.78, 0.90)
    magenta_transmission: tuple = (0.85, 0.12, 0.80)
    opacity_gain: float = 1.0
    background_color: tuple = (255.0, 255.0, 255.0)

    def __post_init__(self):
        for name in ("cyan_transmission", "magenta_transmission"):
            t = getattr(self, name)
            if len(t) != 3 or any(not 0.0 <= v <= 1.0 for v in t):
                raise InvalidArgumentError(f"{name} must be an RGB triple in [0,1]")
        if self.opacity_gain < 0:
            raise InvalidArgumentError("opacity_gain must be >= 0")

    @classmethod
    def ideal(cls) -> "OpticalFilterModel":
        """Perfect block/pass filters; overlap mixes to pure blue."""
        return cls(cyan_transmission=(0.0, 1.0, 1.0), magenta_transmission=(1.0, 0.0, 1.0))


@dataclass(frozen=True)
class RadialLighting:
    """Multiplicative radial gain ``1 - falloff * (rho/rho_norm)^2``."""

    falloff: float = 0.0

    def gain_map(self, camera: CameraModel) -> np.ndarray:
        px, py = camera.principal_point
        ys = np.arange(camera.image_height, dtype=float) - py
        xs = np.arange(camera.image_width, dtype=float) - px
        rho2 = ys[:, None] ** 2 + xs[None, :] ** 2
        rnorm = min(camera.image_width, camera.image_height) / 2.0
        return np.maximum(0.0, 1.0 - self.falloff * rho2 / (rnorm * rnorm))


def project(points, camera: CameraModel):
    """Project 3D points (mm) to pixel coordinates.

    Accepts a single (3,) point or an (N, 3) array; points on the
    optical axis map to the principal point. The origin is rejected.
    """
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    norms = np.linalg.norm(pts, axis=1)
    if np.any(norms < 1e-12):
        raise InvalidArgumentError("cannot project a point at the camera origin")
    theta = np.arccos(np.clip(pts[:, 2] / norms, -1.0, 1.0))
    r_px = 2.0 * camera.focal_scale * np.sin(theta / 2.0)
    lateral = np.hypot(pts[:, 0], pts[:, 1])
    with np.errstate(invalid="ignore", divide="ignore"):
        ux = np.where(lateral > 0, pts[:, 0] / np.maximum(lateral, 1e-300), 0.0)
        uy = np.where(lateral > 0, pts[:, 1] / np.maximum(lateral, 1e-300), 0.0)
    px, py = camera.principal_point
    out = np.stack([px + r_px * ux, py + r_px * uy], axis=1)
    return out[0] if single else out


def projected_disk_radius(points, physical_radius: float, camera: CameraModel):
    """Area-true pixel radius of a marker disk at the given position(s).

    Equal-area projection maps a disk of angular radius ``alpha`` to
    pixel area ``pi (f alpha)^2`` wherever it sits, so the equivalent
    circle radius is ``f * asin(rho / distance)``.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    d = np.linalg.norm(pts, axis=1)
    if np.any(d <= physical_radius):
        raise InvalidArgumentError("marker is closer to the camera than its own radius")
    r = camera.focal_scale * np.arcsin(physical_radius / d)
    return float(r[0]) if np.asarray(points).ndim == 1 else r


def magenta_exponent(layer_gap: float, rest_gap: float, opacity_gain: float = 1.0) -> float:
    """Gap-dependent exponent applied to the magenta transmission.

    ``g = opacity_gain * rest_gap / gap`` clamped to [1, 3]; the rest
    configuration gives g = 1 for unit gain.
    """
    if rest_gap <= 0:
        raise InvalidArgumentError("rest_gap must be positive")
    if layer_gap <= 0:
        return 3.0
    return float(np.clip(opacity_gain * rest_gap / layer_gap, 1.0, 3.0))


def compose_marker_color(
    overlap_fraction: float,
    layer_gap: float,
    filters: OpticalFilterModel = OpticalFilterModel(),
    rest_gap: float = 2.0,
) -> tuple:
    """Analytic color of a pixel inside the cyan disk.

    ``overlap_fraction`` is the fraction of the pixel also covered by
    the magenta disk: 1 gives the fully mixed color, 0 pure cyan over
    the background.
    """
    if not 0.0 <= overlap_fraction <= 1.0:
        raise InvalidArgumentError("overlap_fraction must be in [0, 1]")
    if layer_gap <= 0:
        raise InvalidArgumentError("layer_gap must be positive")
    g = magenta_exponent(layer_gap, rest_gap, filters.opacity_gain)
    bg = np.asarray(filters.background_color, dtype=float) / 255.0
    cyan = np.asarray(filters.cyan_transmission, dtype=float)
    magenta = np.asarray(filters.magenta_transmission, dtype=float) ** g
    color = bg * cyan * (overlap_fraction * magenta + (1.0 - overlap_fraction))
    return tuple(int(v) for v in np.clip(np.rint(color * 255.0), 0, 255))


def render_frame(
    layout: MarkerLayout,
    displacements: MarkerDisplacements = None,
    camera: CameraModel = None,
    filters: OpticalFilterModel = OpticalFilterModel(),
    lighting: RadialLighting = RadialLighting(0.0),
    noise_sigma: float = 0.0,
    seed: int = 0,
    supersample: int = 4,
) -> RasterImage:
    """Render one synthetic frame.

    Inner (magenta) disks are drawn first, outer (cyan) disks are
    composited over them; the mixing is multiplicative so overlap
    regions show the subtractive blend. Markers whose displaced center
    leaves the upper half-space are not drawn. Output is deterministic
    for fixed inputs and seed.
    """
    if camera is None:
        raise InvalidArgumentError("camera model is required")
    n = len(layout)
    if displacements is None:
        zero = np.zeros((n, 3))
        displacements = MarkerDisplacements(outer=zero, inner=zero)
    for arr in (displacements.outer, displacements.inner):
        if np.asarray(arr).shape != (n, 3):
            raise InvalidArgumentError(
                f"displacements must match the {n}-marker layout"
            )

    geom = layout.geometry
    outer_pos = layout.outer_positions + displacements.outer
    inner_pos = layout.inner_positions + displacements.inner
    gaps = np.linalg.norm(outer_pos - inner_pos, axis=1)

    h, w = camera.image_height, camera.image_width
    img = np.empty((h, w, 3), dtype=np.float64)
    img[:] = np.asarray(filters.background_color, dtype=float) / 255.0

    magenta = np.asarray(filters.magenta_transmission, dtype=float)
    cyan = np.asarray(filters.cyan_transmission, dtype=float)

    for positions, physical_radius, tint_of in (
        (
            inner_pos,
            geom.inner_marker_radius,
            lambda i: magenta ** magenta_exponent(gaps[i], geom.layer_separation, filters.opacity_gain),
        ),
        (outer_pos, geom.marker_radius, lambda i: cyan),
    ):
        dist = np.linalg.norm(positions, axis=1)
        visible = (positions[:, 2] > 0.0) & (dist > physical_radius)
        idx = np.nonzero(visible)[0]
        if idx.size == 0:
            continue
        centers = project(positions[idx], camera)
        radii = camera.focal_scale * np.arcsin(physical_radius / dist[idx])
        for k, i in enumerate(idx):
            tint = tint_of(i)
            _kernels.draw_disk(
                img,
                float(centers[k, 0]),
                float(centers[k, 1]),
                float(radii[k]),
                float(tint[0]),
                float(tint[1]),
                float(tint[2]),
                supersample,
            )

    if lighting.falloff != 0.0:
        img *= lighting.gain_map(camera)[:, :, None]

    arr = img * 255.0
    if noise_sigma > 0.0:
        rng = np.random.default_rng(seed)
        arr = arr + rng.normal(0.0, noise_sigma, size=arr.shape)
    pixels = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    return RasterImage(pixels=pixels)
