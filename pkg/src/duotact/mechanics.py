"""Quasi-static forward contact model.

A rigid sphere (or plane, or bowl) indents the soft dome along a contact
axis. The mutual approach equals the commanded indentation; the contact
radius follows ``a = sqrt(R_eq * delta_r)`` with the combined curvature
``R_eq = (1/R_s + kappa_o)^-1``. The normal displacement transferred to
the inner marker shell is the Gaussian

    u_z(r) = delta_r * exp(-r^2 / a^2)

while the outer shell follows the parabolic surface profile
``delta_r - r^2 / (2 R_eq)`` clipped at zero. A configurable tangential
bulge, decaying with depth, completes the render-facing field. All
functions are pure and hold lengths in mm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryInfeasibleError, InvalidArgumentError
from .geometry import MarkerLayout

__all__ = [
    "ContactScenario",
    "ContactState",
    "DisplacementField",
    "ForwardModel",
    "MarkerDisplacements",
    "solve_contact",
    "subsurface_normal_field",
    "surface_normal_profile",
    "marker_displacements",
    "sensitivity",
]


@dataclass(frozen=True)
class ContactScenario:
    """One (object, indentation) combination.

    The object shape is stored as a curvature ``object_curvature``
    (1/mm, positive convex, negative concave, zero flat) so the flat
    case is exact.
    """

    object_curvature: float
    indentation: float
    sensor_radius: float

    def __post_init__(self):
        if self.indentation < 0:
            raise InvalidArgumentError("indentation must be >= 0")
        if self.sensor_radius <= 0:
            raise InvalidArgumentError("sensor_radius must be positive")

    @classmethod
    def from_object_radius(cls, object_radius, indentation: float, sensor_radius: float):
        """Build a scenario from a signed object radius.

        ``None``, ``"flat"`` or an infinite value all denote the flat
        object (zero curvature).
        """
        if object_radius is None or object_radius == "flat":
            curvature = 0.0
        else:
            radius = float(object_radius)
            curvature = 0.0 if math.isinf(radius) else 1.0 / radius
        return cls(
            object_curvature=curvature,
            indentation=float(indentation),
            sensor_radius=float(sensor_radius),
        )

    @property
    def object_radius(self) -> float:
        if self.object_curvature == 0.0:
            return math.inf
        return 1.0 / self.object_curvature


@dataclass(frozen=True)
class ContactState:
    """Contact radius ``a`` and relative displacement ``delta_r``, mm."""

    contact_radius: float
    relative_displacement: float


def solve_contact(scenario: ContactScenario) -> ContactState:
    """Solve the forward contact problem for a scenario.

    The object is rigid, so the relative displacement equals the
    commanded indentation, and ``a = sqrt(R_eq * delta_r)``.

    Raises
    ------
    GeometryInfeasibleError
        For concave objects that do not wrap the sensor
        (``|R_o| <= R_s``), equivalently non-positive ``R_eq``.
    """
    kappa = scenario.object_curvature
    if kappa < 0 and -1.0 / kappa <= scenario.sensor_radius:
        raise GeometryInfeasibleError(
            f"concave object radius {1.0 / kappa:.6g} mm does not wrap the "
            f"sensor of radius {scenario.sensor_radius:.6g} mm"
        )
    inv_req = 1.0 / scenario.sensor_radius + kappa
    if inv_req <= 0:
        raise GeometryInfeasibleError("combined curvature is not positive")
    r_eq = 1.0 / inv_req
    delta_r = scenario.indentation
    return ContactState(
        contact_radius=math.sqrt(r_eq * delta_r),
        relative_displacement=delta_r,
    )


@dataclass(frozen=True)
class DisplacementField:
    """Gaussian normal-displacement profile at the inner-shell depth."""

    amplitude: float  # delta_r, mm
    width: float      # contact radius a, mm

    def __call__(self, r):
        """Normal displacement u_z at radial distance ``r`` from the axis."""
        r = np.asarray(r, dtype=float)
        if self.width == 0.0 or self.amplitude == 0.0:
            return np.zeros_like(r)
        return self.amplitude * np.exp(-(r * r) / (self.width * self.width))


def subsurface_normal_field(state: ContactState) -> DisplacementField:
    """Displacement field at the inner marker depth for a contact state."""
    return DisplacementField(
        amplitude=state.relative_displacement, width=state.contact_radius
    )


def surface_normal_profile(state: ContactState, r):
    """Parabolic surface displacement, clipped at zero.

    ``u(r) = delta_r - r^2 / (2 R_eq)`` for ``r`` inside the patch.
    """
    r = np.asarray(r, dtype=float)
    if state.relative_displacement == 0.0 or state.contact_radius == 0.0:
        return np.zeros_like(r)
    r_eq = state.contact_radius**2 / state.relative_displacement
    return np.maximum(0.0, state.relative_displacement - (r * r) / (2.0 * r_eq))


@dataclass(frozen=True)
class ForwardModel:
    """Render-facing forward-model knobs.

    ``tangential_gain`` scales the declared tangential bulge
    ``c * delta_r * (r/a) * exp(-r^2/a^2)``, which decays linearly over
    ``membrane_thickness``. Displacements are tapered to exactly zero
    between ``taper_start * a`` and ``cutoff * a``.
    """

    tangential_gain: float = 0.2
    membrane_thickness: float = 4.0
    taper_start: float = 2.5
    cutoff: float = 3.0


@dataclass(frozen=True)
class MarkerDisplacements:
    """Per-marker 3D displacement vectors, one row per pair."""

    outer: np.ndarray
    inner: np.ndarray


def _taper(r: np.ndarray, a: float, model: ForwardModel) -> np.ndarray:
    """Cosine window: 1 inside taper_start*a, 0 beyond cutoff*a."""
    w = np.ones_like(r)
    r0, r1 = model.taper_start * a, model.cutoff * a
    ramp = (r > r0) & (r < r1)
    w[ramp] = 0.5 * (1.0 + np.cos(math.pi * (r[ramp] - r0) / (r1 - r0)))
    w[r >= r1] = 0.0
    return w


def marker_displacements(
    layout: MarkerLayout,
    scenario: ContactScenario,
    contact_axis=(0.0, 0.0, 1.0),
    model: ForwardModel = ForwardModel(),
) -> MarkerDisplacements:
    """Evaluate the displacement field at every marker of a layout.

    The contact axis must be a nonzero vector pointing into the sensing
    (upper) half-space. The normal displacement is applied along the
    local surface normal (radially, toward the camera) with amplitude
    set by the shell depth: surface profile for the outer shell,
    Gaussian subsurface profile for the inner shell, both evaluated at
    the marker's rest distance from the contact axis. The tangential
    component pushes away from the axis along the surface.
    """
    axis = np.asarray(contact_axis, dtype=float)
    norm = np.linalg.norm(axis)
    if norm < 1e-12 or axis[2] <= 0:
        raise InvalidArgumentError(
            "contact_axis must be a nonzero vector into the upper half-space"
        )
    axis = axis / norm

    state = solve_contact(scenario)
    a, delta_r = state.contact_radius, state.relative_displacement
    n = len(layout)
    if delta_r == 0.0 or a == 0.0:
        zero = np.zeros((n, 3))
        return MarkerDisplacements(outer=zero, inner=zero.copy())

    sep = layout.geometry.layer_separation
    depth_factor = max(0.0, 1.0 - sep / model.membrane_thickness)

    out = []
    for positions, normal_profile, tan_scale in (
        (layout.outer_positions, lambda r: surface_normal_profile(state, r), 1.0),
        (layout.inner_positions, subsurface_normal_field(state), depth_factor),
    ):
        axial = positions @ axis
        radial_vec = positions - np.outer(axial, axis)
        r = np.linalg.norm(radial_vec, axis=1)
        window = _taper(r, a, model)

        dist = np.linalg.norm(positions, axis=1)
        normal_dir = positions / dist[:, None]
        u_n = normal_profile(r) * window

        with np.errstate(invalid="ignore", divide="ignore"):
            radial_dir = np.where(
                r[:, None] > 0, radial_vec / np.maximum(r, 1e-300)[:, None], 0.0
            )
        # surface-tangent part of the away-from-axis direction
        tangent = radial_dir - (radial_dir * normal_dir).sum(axis=1)[:, None] * normal_dir
        tnorm = np.linalg.norm(tangent, axis=1)
        tangent = np.where(
            tnorm[:, None] > 1e-12, tangent / np.maximum(tnorm, 1e-300)[:, None], 0.0
        )
        u_t = (
            model.tangential_gain
            * delta_r
            * (r / a)
            * np.exp(-(r * r) / (a * a))
            * window
            * tan_scale
        )
        out.append(-normal_dir * u_n[:, None] + tangent * u_t[:, None])
    return MarkerDisplacements(outer=out[0], inner=out[1])


def sensitivity(force: float, thickness: float, contact_area: float, youngs_modulus: float) -> float:
    """Elastic displacement estimate ``F * t / (A * E)``.

    Units: N, mm, mm^2, MPa; the result is in mm.
    """
    for name, value in (
        ("force", force),
        ("thickness", thickness),
        ("contact_area", contact_area),
        ("youngs_modulus", youngs_modulus),
    ):
        if value <= 0:
            raise InvalidArgumentError(f"{name} must be positive, got {value}")
    return force * thickness / (contact_area * youngs_modulus)
