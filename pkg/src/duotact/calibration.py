"""Linear calibration from marker sub-images to normal displacement.

Every (marker, frame) sample becomes one column: the vectorized W x W x 3
sub-image scaled to [0, 1] with the two normalized global centroid
coordinates appended. The single-output linear map is the minimum-norm
least-squares solution

    A = Z M+

obtained through an SVD-based solve with a relative singular-value
cutoff. Ground-truth targets come from the Gaussian subsurface model
evaluated at each marker's rest distance from the contact axis.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .geometry import MarkerLayout
from .mechanics import solve_contact, subsurface_normal_field

__all__ = [
    "DesignMatrix",
    "CalibrationMatrix",
    "column_from_observation",
    "build_design_matrix",
    "ground_truth_targets",
    "solve_calibration",
    "apply_calibration",
    "save_calibration",
    "load_calibration",
]


@dataclass
class DesignMatrix:
    """Sample matrix M: one column per (marker, frame), 3W^2+2 rows."""

    matrix: np.ndarray
    window: int
    image_width: int
    image_height: int

    @property
    def n_samples(self) -> int:
        return self.matrix.shape[1]


@dataclass
class CalibrationMatrix:
    """Row vector A mapping one sample column to displacement (mm)."""

    coefficients: np.ndarray
    window: int
    image_width: int
    image_height: int
    cutoff: float
    manifest_hash: str = ""
    training_rms: float = float("nan")
    scenario_labels: tuple = field(default_factory=tuple)


def column_from_observation(obs, image_width: int, image_height: int) -> np.ndarray:
    """Vectorize one observation: sub-image channels then centroid."""
    sub = obs.sub_image.astype(np.float64).reshape(-1) / 255.0
    cx, cy = obs.centroid
    return np.concatenate([sub, [cx / image_width, cy / image_height]])


def build_design_matrix(frames, image_width: int, image_height: int) -> DesignMatrix:
    """Assemble M from per-frame observation lists, frame-major order."""
    windows = {obs.sub_image.shape[0] for frame in frames for obs in frame}
    if len(windows) == 0:
        raise InvalidArgumentError("no observations to assemble")
    if len(windows) > 1:
        raise InvalidArgumentError(f"mixed sub-image sizes: {sorted(windows)}")
    window = windows.pop()
    columns = [
        column_from_observation(obs, image_width, image_height)
        for frame in frames
        for obs in frame
    ]
    return DesignMatrix(
        matrix=np.stack(columns, axis=1),
        window=window,
        image_width=image_width,
        image_height=image_height,
    )


def ground_truth_targets(
    layout: MarkerLayout,
    scenarios,
    contact_axis=(0.0, 0.0, 1.0),
    marker_indices=None,
) -> np.ndarray:
    """Theoretical normal displacement per (frame, marker) sample.

    ``scenarios`` holds one contact scenario per frame;
    ``marker_indices`` optionally restricts each frame to a subset of
    layout indices (default: every marker, layout order). Distances are
    measured from the inner marker rest position to the contact axis.
    """
    axis = np.asarray(contact_axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    if marker_indices is None:
        marker_indices = [np.arange(len(layout))] * len(scenarios)
    if len(marker_indices) != len(scenarios):
        raise InvalidArgumentError("scenarios and marker_indices must align")
    chunks = []
    for scenario, idx in zip(scenarios, marker_indices):
        state = solve_contact(scenario)
        field_fn = subsurface_normal_field(state)
        pos = layout.inner_positions[np.asarray(idx, dtype=int)]
        axial = pos @ axis
        r = np.linalg.norm(pos - np.outer(axial, axis), axis=1)
        chunks.append(field_fn(r))
    return np.concatenate(chunks) if chunks else np.zeros(0)


def solve_calibration(
    m: DesignMatrix,
    z: np.ndarray,
    cutoff: float = 1e-10,
    manifest_hash: str = "",
    scenario_labels=(),
) -> CalibrationMatrix:
    """Minimum-norm least-squares solve of A M = Z.

    Uses an SVD-backed solver with relative singular-value cutoff; among
    all residual minimizers the returned A has minimum norm. An all-zero
    M yields the zero map with a warning.
    """
    z = np.asarray(z, dtype=float).reshape(-1)
    if m.matrix.ndim != 2 or m.matrix.shape[1] != z.shape[0] or z.shape[0] < 1:
        raise InvalidArgumentError(
            f"design matrix has {m.matrix.shape[1]} columns but {z.shape[0]} targets"
        )
    if not np.all(np.isfinite(m.matrix)) or not np.all(np.isfinite(z)):
        raise InvalidArgumentError("design matrix and targets must be finite")
    if not m.matrix.any():
        warnings.warn("all-zero design matrix; returning the zero calibration")
        coeff = np.zeros(m.matrix.shape[0])
        rms = float(np.sqrt(np.mean(z * z)))
    else:
        coeff, *_ = np.linalg.lstsq(m.matrix.T, z, rcond=cutoff)
        residual = coeff @ m.matrix - z
        rms = float(np.sqrt(np.mean(residual * residual)))
    return CalibrationMatrix(
        coefficients=coeff,
        window=m.window,
        image_width=m.image_width,
        image_height=m.image_height,
        cutoff=cutoff,
        manifest_hash=manifest_hash,
        training_rms=rms,
        scenario_labels=tuple(scenario_labels),
    )


def apply_calibration(calib: CalibrationMatrix, column: np.ndarray):
    """Predict displacement for one column (1D) or a column stack (2D)."""
    col = np.asarray(column, dtype=float)
    rows = calib.coefficients.shape[0]
    if col.shape[0] != rows:
        raise InvalidArgumentError(
            f"column has {col.shape[0]} rows, calibration expects {rows}"
        )
    out = calib.coefficients @ col
    return float(out) if col.ndim == 1 else out


def save_calibration(calib: CalibrationMatrix, path) -> None:
    """Persist as a JSON header line followed by one coefficient per line."""
    header = {
        "format": "duotact-calibration",
        "version": 1,
        "window": calib.window,
        "image_width": calib.image_width,
        "image_height": calib.image_height,
        "cutoff": calib.cutoff,
        "manifest_hash": calib.manifest_hash,
        "training_rms": calib.training_rms,
        "scenario_labels": list(calib.scenario_labels),
        "coefficient_count": int(calib.coefficients.shape[0]),
    }
    with open(path, "w", encoding="ascii") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for value in calib.coefficients:
            fh.write(repr(float(value)) + "\n")


def load_calibration(path) -> CalibrationMatrix:
    """Load a calibration file, rejecting mismatched headers."""
    with open(path, "r", encoding="ascii") as fh:
        header = json.loads(fh.readline())
        if header.get("format") != "duotact-calibration" or header.get("version") != 1:
            raise InvalidArgumentError(f"{path}: not a calibration file")
        coeff = np.array([float(line) for line in fh])
    if coeff.shape[0] != header["coefficient_count"]:
        raise InvalidArgumentError(
            f"{path}: expected {header['coefficient_count']} coefficients, "
            f"found {coeff.shape[0]}"
        )
    expected = 3 * header["window"] ** 2 + 2
    if coeff.shape[0] != expected:
        raise InvalidArgumentError(
            f"{path}: coefficient count {coeff.shape[0]} does not match "
            f"window {header['window']}"
        )
    return CalibrationMatrix(
        coefficients=coeff,
        window=header["window"],
        image_width=header["image_width"],
        image_height=header["image_height"],
        cutoff=header["cutoff"],
        manifest_hash=header["manifest_hash"],
        training_rms=header["training_rms"],
        scenario_labels=tuple(header["scenario_labels"]),
    )
