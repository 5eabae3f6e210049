"""Frame preprocessing, hue segmentation, and marker extraction.

The pipeline front end mirrors the acquisition chain: Gaussian blur,
flat-field illumination correction against the trial baseline, RGB to
HSV conversion, hue-band segmentation of the cyan/blue markers,
connected-component centroids, and fixed-size sub-image windows around
each detected marker.

Illumination correction note: the baseline is a white field with dark
markers, so literally subtracting it would null the signal. The
correction implemented here divides by a smooth illumination estimate
(maximum filter to erase the markers, then a wide blur), which removes
the lighting profile while leaving marker contrast intact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import AmbiguousMatchError, InvalidArgumentError
from .rendering import RasterImage

__all__ = [
    "HsvImage",
    "MarkerObservation",
    "MatchResult",
    "rgb_to_hsv",
    "hsv_to_rgb",
    "estimate_illumination",
    "preprocess",
    "segment_markers",
    "match_observations",
    "write_observations_csv",
]

_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


@dataclass
class HsvImage:
    """Per-pixel hue (degrees, [0, 360)), saturation and value in [0, 1]."""

    hue: np.ndarray
    saturation: np.ndarray
    value: np.ndarray

    @property
    def width(self) -> int:
        return self.hue.shape[1]

    @property
    def height(self) -> int:
        return self.hue.shape[0]


@dataclass
class MarkerObservation:
    """One segmented marker: sub-pixel centroid, blob size, mean hue, window."""

    centroid: tuple
    pixel_count: int
    mean_hue: float
    sub_image: np.ndarray = field(repr=False, default=None)


def rgb_to_hsv(image: RasterImage) -> HsvImage:
    """Standard hexcone RGB to HSV conversion, vectorized."""
    rgb = image.to_float()
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=-1)
    c = v - rgb.min(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(v > 0, c / np.maximum(v, 1e-300), 0.0)
        safe_c = np.maximum(c, 1e-300)
        h = np.select(
            [c == 0, v == r, v == g],
            [0.0, ((g - b) / safe_c) % 6.0, (b - r) / safe_c + 2.0],
            default=(r - g) / safe_c + 4.0,
        )
    return HsvImage(hue=60.0 * h, saturation=s, value=v)


def hsv_to_rgb(hsv: HsvImage) -> RasterImage:
    """Inverse hexcone conversion back to an 8-bit image."""
    h = (hsv.hue % 360.0) / 60.0
    s, v = hsv.saturation, hsv.value
    c = v * s
    x = c * (1.0 - np.abs(h % 2.0 - 1.0))
    zero = np.zeros_like(c)
    sector = np.floor(h).astype(int) % 6
    r = np.choose(sector, [c, x, zero, zero, x, c])
    g = np.choose(sector, [x, c, c, x, zero, zero])
    b = np.choose(sector, [zero, zero, x, c, c, x])
    m = v - c
    rgb = np.stack([r + m, g + m, b + m], axis=-1)
    return RasterImage(pixels=np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8))


def estimate_illumination(
    baseline: RasterImage,
    window: int = 41,
    sigma: float = 16.0,
    pre_sigma: float = 1.2,
) -> np.ndarray:
    """Smooth per-channel illumination field of a baseline frame.

    A maximum filter wider than any marker footprint erases the dark
    disks; the following blur smooths the remaining staircase. Returns
    a float array (H, W, 3) bounded away from zero.
    """
    base = baseline.pixels.astype(np.float64)
    if pre_sigma > 0:
        base = ndimage.gaussian_filter(base, sigma=(pre_sigma, pre_sigma, 0.0))
    peak = ndimage.maximum_filter(base, size=(window, window, 1))
    smooth = ndimage.gaussian_filter(peak, sigma=(sigma, sigma, 0.0))
    return np.maximum(smooth, 1.0)


def preprocess(
    frame: RasterImage,
    baseline: RasterImage,
    blur_sigma: float = 1.2,
    illum_window: int = 41,
    illum_sigma: float = 16.0,
    illumination: np.ndarray = None,
) -> RasterImage:
    """Blur a frame and divide out the baseline illumination profile.

    ``blur_sigma = 0`` applies no smoothing. A precomputed
    ``illumination`` array (from :func:`estimate_illumination`) can be
    supplied to avoid recomputing it for every frame of a trial.
    """
    if blur_sigma < 0:
        raise InvalidArgumentError("blur_sigma must be >= 0")
    if frame.pixels.shape != baseline.pixels.shape:
        raise InvalidArgumentError(
            f"frame {frame.pixels.shape} and baseline {baseline.pixels.shape} differ"
        )
    arr = frame.pixels.astype(np.float64)
    if blur_sigma > 0:
        arr = ndimage.gaussian_filter(arr, sigma=(blur_sigma, blur_sigma, 0.0))
    if illumination is None:
        illumination = estimate_illumination(
            baseline, window=illum_window, sigma=illum_sigma, pre_sigma=blur_sigma
        )
    corrected = arr / illumination * 255.0
    return RasterImage(pixels=np.clip(np.rint(corrected), 0, 255).astype(np.uint8))


def _cut_window(pixels: np.ndarray, cx: int, cy: int, window: int) -> np.ndarray:
    half = window // 2
    out = np.zeros((window, window, 3), dtype=np.uint8)
    h, w = pixels.shape[:2]
    y0, y1 = max(0, cy - half), min(h, cy + half + 1)
    x0, x1 = max(0, cx - half), min(w, cx + half + 1)
    if y1 > y0 and x1 > x0:
        out[y0 - (cy - half) : y1 - (cy - half), x0 - (cx - half) : x1 - (cx - half)] = (
            pixels[y0:y1, x0:x1]
        )
    return out


def segment_markers(
    hsv: HsvImage,
    frame: RasterImage,
    hue_low: float = 150.0,
    hue_high: float = 270.0,
    min_saturation: float = 0.25,
    min_blob_px: int = 16,
    window: int = 21,
) -> list:
    """Detect markers inside a hue band and extract their windows.

    The binary mask is the hue band intersected with a saturation gate;
    8-connected components below ``min_blob_px`` are dropped. Centroids
    are unweighted means of member pixel coordinates; sub-images are
    ``window`` x ``window`` cuts of ``frame`` centered on the rounded
    centroid, zero-padded at the borders. Observations come back in
    label (scan) order.
    """
    if hue_low >= hue_high:
        raise InvalidArgumentError("need hue_low < hue_high")
    if window % 2 != 1:
        raise InvalidArgumentError("window must be odd")
    mask = (
        (hsv.hue >= hue_low)
        & (hsv.hue < hue_high)
        & (hsv.saturation >= min_saturation)
    )
    labels, n_labels = ndimage.label(mask, structure=_EIGHT_CONNECTED)
    if n_labels == 0:
        return []
    counts = np.bincount(labels.ravel())
    ids = [i for i in range(1, n_labels + 1) if counts[i] >= min_blob_px]
    if not ids:
        return []
    centroids = ndimage.center_of_mass(mask, labels, ids)
    hues = ndimage.mean(hsv.hue, labels, ids)
    observations = []
    for (cy, cx), hue, lab in zip(centroids, hues, ids):
        sub = _cut_window(frame.pixels, int(round(cx)), int(round(cy)), window)
        observations.append(
            MarkerObservation(
                centroid=(float(cx), float(cy)),
                pixel_count=int(counts[lab]),
                mean_hue=float(hue),
                sub_image=sub,
            )
        )
    return observations


@dataclass
class MatchResult:
    """Injective pairing between two observation lists."""

    pairs: list  # (current_index, reference_index)
    unmatched_current: list
    unmatched_reference: list

    def as_dict(self) -> dict:
        return dict(self.pairs)

    @property
    def mean_offset(self) -> tuple:
        """Mean (dx, dy) of matched centroids, current minus reference."""
        if not self.pairs:
            return (0.0, 0.0)
        return (
            float(np.mean([p[0] for p in self._deltas])),
            float(np.mean([p[1] for p in self._deltas])),
        )

    _deltas: list = field(default_factory=list, repr=False)


def _centroid_array(items) -> np.ndarray:
    if len(items) == 0:
        return np.zeros((0, 2))
    if isinstance(items, np.ndarray):
        return np.asarray(items, dtype=float).reshape(-1, 2)
    first = items[0]
    if isinstance(first, MarkerObservation):
        return np.array([obs.centroid for obs in items], dtype=float)
    return np.asarray(items, dtype=float).reshape(-1, 2)


def match_observations(
    current,
    reference,
    max_distance: float = math.inf,
    tie_tolerance: float = 0.25,
) -> MatchResult:
    """Greedy nearest-centroid matching, smallest distances first.

    Both arguments may be observation lists or (N, 2) centroid arrays.
    Raises :class:`AmbiguousMatchError` when the winning pair has a
    rival candidate within ``tie_tolerance`` pixels. Assumes inter-frame
    motion below half the minimum marker spacing.
    """
    cur = _centroid_array(current)
    ref = _centroid_array(reference)
    nc, nr = len(cur), len(ref)
    if nc == 0 or nr == 0:
        return MatchResult([], list(range(nc)), list(range(nr)), [])

    dist = np.sqrt(((cur[:, None, :] - ref[None, :, :]) ** 2).sum(axis=-1))
    order = np.argsort(dist, axis=None, kind="stable")
    cur_taken = np.zeros(nc, dtype=bool)
    ref_taken = np.zeros(nr, dtype=bool)
    pairs, deltas = [], []
    for flat in order:
        i, j = divmod(int(flat), nr)
        d = dist[i, j]
        if d > max_distance:
            break
        if cur_taken[i] or ref_taken[j]:
            continue
        row = np.where(ref_taken, np.inf, dist[i, :])
        row[j] = np.inf
        rival = int(np.argmin(row))
        if row[rival] - d <= tie_tolerance:
            raise AmbiguousMatchError(
                f"marker {i} matches references {j} and {rival} within "
                f"{tie_tolerance} px",
                indices=(i, j, rival),
            )
        col = np.where(cur_taken, np.inf, dist[:, j])
        col[i] = np.inf
        contender = int(np.argmin(col))
        if col[contender] - d <= tie_tolerance:
            raise AmbiguousMatchError(
                f"markers {i} and {contender} both match reference {j} within "
                f"{tie_tolerance} px",
                indices=(i, contender, j),
            )
        cur_taken[i] = True
        ref_taken[j] = True
        pairs.append((i, j))
        deltas.append(tuple(cur[i] - ref[j]))

    pairs_sorted = sorted(range(len(pairs)), key=lambda k: pairs[k][0])
    return MatchResult(
        pairs=[pairs[k] for k in pairs_sorted],
        unmatched_current=[i for i in range(nc) if not cur_taken[i]],
        unmatched_reference=[j for j in range(nr) if not ref_taken[j]],
        _deltas=[deltas[k] for k in pairs_sorted],
    )


def write_observations_csv(path, rows) -> None:
    """Dump observations as (frame_id, marker_index, cx, cy, pixel_count, mean_hue).

    ``rows`` yields (frame_id, marker_index, observation) triples.
    """
    with open(path, "w", encoding="ascii") as fh:
        fh.write("frame_id,marker_index,cx,cy,pixel_count,mean_hue\n")
        for frame_id, marker_index, obs in rows:
            cx, cy = obs.centroid
            fh.write(
                f"{frame_id},{marker_index},{cx:.9g},{cy:.9g},"
                f"{obs.pixel_count},{obs.mean_hue:.9g}\n"
            )
