"""Field reconstruction, Gaussian contact fitting, and curvature recovery.

Calibrated per-marker predictions are laid out on the tangent plane of
the contact axis, optionally interpolated to a regular grid, and fitted
with the Gaussian contact model ``u(p) = delta_r exp(-|p - p0|^2/a^2)``
by Gauss-Newton iteration with Levenberg damping. The equivalent
curvature follows as ``R_eq = a^2 / delta_r`` and the object curvature
as ``1/R_eq - 1/R_s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .calibration import CalibrationMatrix, apply_calibration, column_from_observation
from .errors import (
    FitFailedError,
    InsufficientDataError,
    InvalidArgumentError,
    NoContactError,
)
from .geometry import MarkerLayout

__all__ = [
    "SampledField",
    "GriddedField",
    "GaussianFit",
    "CurvatureEstimate",
    "tangent_plane_positions",
    "reconstruct_field",
    "interpolate_grid",
    "fit_gaussian",
    "estimate_curvature",
    "write_results_csv",
    "RESULTS_CSV_HEADER",
]

FLAT_CURVATURE_THRESHOLD = 1e-6  # 1/mm; below this the object reads as flat


@dataclass
class SampledField:
    """Predicted normal displacement at marker rest positions (mm)."""

    positions: np.ndarray  # (N, 2) tangent-plane coordinates
    values: np.ndarray     # (N,)


@dataclass
class GriddedField:
    """Regular grid over the sample hull; NaN outside the convex hull."""

    x: np.ndarray
    y: np.ndarray
    values: np.ndarray  # (len(y), len(x))


@dataclass
class GaussianFit:
    amplitude: float
    width: float
    center: tuple
    rms_residual: float
    iterations: int


@dataclass
class CurvatureEstimate:
    equivalent_radius: float
    object_curvature: float
    object_radius: float  # inf when flat

    @property
    def is_flat(self) -> bool:
        return math.isinf(self.object_radius)


def tangent_plane_positions(points, contact_axis=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Project 3D points onto the plane normal to the contact axis."""
    axis = np.asarray(contact_axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    ref = np.array([1.0, 0.0, 0.0])
    if abs(axis @ ref) > 0.9:
        ref = np.array([0.0, 1.0, 0.0])
    e1 = ref - (ref @ axis) * axis
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return np.stack([pts @ e1, pts @ e2], axis=1)


def reconstruct_field(
    calib: CalibrationMatrix,
    observations,
    layout_indices,
    layout: MarkerLayout,
    contact_axis=(0.0, 0.0, 1.0),
) -> SampledField:
    """One predicted displacement sample per matched marker.

    ``layout_indices`` maps each observation to its layout marker; the
    sample position is the marker's inner rest position in tangent-plane
    coordinates.
    """
    idx = np.asarray(layout_indices, dtype=int)
    if len(observations) != idx.shape[0]:
        raise InvalidArgumentError("observations and layout_indices must align")
    if len(observations) < 6:
        raise InsufficientDataError(
            f"need at least 6 matched markers, got {len(observations)}"
        )
    columns = np.stack(
        [
            column_from_observation(obs, calib.image_width, calib.image_height)
            for obs in observations
        ],
        axis=1,
    )
    values = apply_calibration(calib, columns)
    positions = tangent_plane_positions(layout.inner_positions[idx], contact_axis)
    return SampledField(positions=positions, values=np.asarray(values, dtype=float))


def interpolate_grid(field: SampledField, spacing: float) -> GriddedField:
    """Linear Delaunay interpolation of the samples on a regular grid.

    Grid nodes that coincide with sample positions reproduce the sample
    values exactly; nodes outside the convex hull are NaN.
    """
    if spacing <= 0:
        raise InvalidArgumentError("spacing must be positive")
    pos, val = field.positions, field.values
    if pos.shape[0] < 3:
        raise InvalidArgumentError("need at least 3 samples to triangulate")
    from scipy.interpolate import LinearNDInterpolator
    from scipy.spatial import QhullError

    try:
        interp = LinearNDInterpolator(pos, val)
    except (QhullError, ValueError) as exc:
        raise InvalidArgumentError(f"degenerate sample positions: {exc}") from exc
    x = np.arange(pos[:, 0].min(), pos[:, 0].max() + spacing / 2.0, spacing)
    y = np.arange(pos[:, 1].min(), pos[:, 1].max() + spacing / 2.0, spacing)
    values = interp(*np.meshgrid(x, y))
    return GriddedField(x=x, y=y, values=values)


def _gaussian_model(params, x, y):
    amp, width, cx, cy = params
    q = ((x - cx) ** 2 + (y - cy) ** 2) / (width * width)
    return amp * np.exp(-q), q


def fit_gaussian(
    field: SampledField,
    noise_floor: float = 0.05,
    max_iterations: int = 100,
    step_tol: float = 1e-9,
) -> GaussianFit:
    """Fit the Gaussian contact model to a sampled field.

    Gauss-Newton with adaptive Levenberg damping; initialized from
    moments (amplitude = peak sample, center = value-weighted mean,
    width from the second moment). Converges when the accepted step norm
    drops below ``step_tol``; raises on non-convergence, and raises
    :class:`NoContactError` when the field peak is below the floor.
    """
    pos = np.asarray(field.positions, dtype=float)
    val = np.asarray(field.values, dtype=float)
    if pos.shape[0] != val.shape[0]:
        raise InvalidArgumentError("positions and values must align")
    if pos.shape[0] < 6:
        raise InsufficientDataError(f"need at least 6 samples, got {pos.shape[0]}")
    peak = float(val.max())
    if peak <= noise_floor:
        raise NoContactError(
            f"field peak {peak:.4g} mm is below the noise floor {noise_floor:g} mm"
        )

    x, y = pos[:, 0], pos[:, 1]
    w = np.maximum(val, 0.0)
    wsum = w.sum()
    cx0 = float((w * x).sum() / wsum)
    cy0 = float((w * y).sum() / wsum)
    r2 = (x - cx0) ** 2 + (y - cy0) ** 2
    a0 = math.sqrt(max((w * r2).sum() / wsum, 1e-6))
    params = np.array([peak, a0, cx0, cy0])

    residual, _ = _gaussian_model(params, x, y)
    residual -= val
    cost = float(residual @ residual)
    lam = 1e-3
    iterations = 0
    converged = False
    last_step = math.inf
    while iterations < max_iterations and not converged:
        iterations += 1
        amp, width, _, _ = params
        model, q = _gaussian_model(params, x, y)
        e = model - val
        expq = model / amp if amp != 0 else np.exp(-q)
        jac = np.empty((pos.shape[0], 4))
        jac[:, 0] = expq
        jac[:, 1] = amp * expq * 2.0 * q / width
        jac[:, 2] = amp * expq * 2.0 * (x - params[2]) / (width * width)
        jac[:, 3] = amp * expq * 2.0 * (y - params[3]) / (width * width)
        gradient = jac.T @ e
        hessian = jac.T @ jac
        while True:
            try:
                step = np.linalg.solve(hessian + lam * np.eye(4), -gradient)
            except np.linalg.LinAlgError:
                step = None
            if step is not None:
                trial = params + step
                trial_res, _ = _gaussian_model(trial, x, y)
                trial_cost = float(((trial_res - val) ** 2).sum())
                if trial[1] != 0.0 and np.isfinite(trial_cost) and trial_cost <= cost:
                    params, cost = trial, trial_cost
                    lam = max(lam * 0.1, 1e-12)
                    last_step = float(np.linalg.norm(step))
                    if last_step < step_tol:
                        converged = True
                    break
            lam *= 10.0
            if lam > 1e12:
                raise FitFailedError(
                    "Levenberg damping exhausted",
                    diagnostics={
                        "iterations": iterations,
                        "cost": cost,
                        "params": params.tolist(),
                    },
                )
    if not converged:
        raise FitFailedError(
            f"no convergence in {max_iterations} iterations",
            diagnostics={
                "iterations": iterations,
                "last_step": last_step,
                "cost": cost,
                "params": params.tolist(),
            },
        )

    amplitude = float(params[0])
    width = float(abs(params[1]))
    center = (float(params[2]), float(params[3]))
    if amplitude <= 0 or width <= 0:
        raise FitFailedError(
            "fit collapsed to a non-positive amplitude or width",
            diagnostics={"params": params.tolist()},
        )
    inside = ((x - center[0]) ** 2 + (y - center[1]) ** 2) <= (2.0 * width) ** 2
    if int(inside.sum()) < 6:
        raise InsufficientDataError(
            f"only {int(inside.sum())} samples inside twice the fitted width"
        )
    model, _ = _gaussian_model(params, x, y)
    rms = float(np.sqrt(np.mean((model - val) ** 2)))
    return GaussianFit(
        amplitude=amplitude,
        width=width,
        center=center,
        rms_residual=rms,
        iterations=iterations,
    )


def estimate_curvature(fit: GaussianFit, sensor_radius: float) -> CurvatureEstimate:
    """Equivalent and object curvature from a Gaussian fit."""
    if fit.amplitude <= 0 or fit.width <= 0:
        raise InvalidArgumentError("fit must have positive amplitude and width")
    if sensor_radius <= 0:
        raise InvalidArgumentError("sensor_radius must be positive")
    r_eq = fit.width**2 / fit.amplitude
    kappa = 1.0 / r_eq - 1.0 / sensor_radius
    radius = math.inf if abs(kappa) <= FLAT_CURVATURE_THRESHOLD else 1.0 / kappa
    return CurvatureEstimate(
        equivalent_radius=r_eq, object_curvature=kappa, object_radius=radius
    )


RESULTS_CSV_HEADER = (
    "trial,object_radius_mm,indentation_mm,a_mm,delta_r_mm,R_eq_mm,"
    "kappa_o_inv_mm,residual_mm"
)


def write_results_csv(path, rows) -> None:
    """Write per-frame estimate rows in the documented column order.

    ``rows`` yields tuples matching :data:`RESULTS_CSV_HEADER`.
    """
    with open(path, "w", encoding="ascii") as fh:
        fh.write(RESULTS_CSV_HEADER + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(value) -> str:
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return f"{value:.9g}"
    return str(value)
