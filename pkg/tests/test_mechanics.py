import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from duotact import (
    ContactScenario,
    ContactState,
    GeometryInfeasibleError,
    InvalidArgumentError,
    MarkerLayout,
    SensorGeometry,
    build_layout,
    marker_displacements,
    sensitivity,
    solve_contact,
    subsurface_normal_field,
    surface_normal_profile,
)
from duotact.mechanics import ForwardModel


def scenario(radius, depth, sensor=21.0):
    return ContactScenario.from_object_radius(radius, depth, sensor)


class TestSolveContact:
    def test_flat_object_8mm(self):
        state = solve_contact(scenario("flat", 8.0))
        assert state.relative_displacement == 8.0
        assert state.contact_radius == pytest.approx(math.sqrt(21.0 * 8.0), rel=1e-12)
        assert state.contact_radius == pytest.approx(12.961, abs=5e-4)

    def test_convex_40mm_8mm(self):
        state = solve_contact(scenario(40.0, 8.0))
        r_eq = 840.0 / 61.0
        assert r_eq == pytest.approx(13.770, abs=5e-4)
        assert state.contact_radius == pytest.approx(math.sqrt(r_eq * 8.0), rel=1e-12)
        assert state.contact_radius == pytest.approx(10.496, abs=5e-4)

    def test_zero_indentation(self):
        state = solve_contact(scenario(40.0, 0.0))
        assert state.contact_radius == 0.0
        assert state.relative_displacement == 0.0

    def test_concave_must_wrap_sensor(self):
        with pytest.raises(GeometryInfeasibleError):
            solve_contact(scenario(-21.0, 1.0))
        with pytest.raises(GeometryInfeasibleError):
            solve_contact(scenario(-15.0, 1.0))
        solve_contact(scenario(-21.5, 1.0))  # barely wraps: fine

    def test_flat_limit_continuous(self):
        eps = solve_contact(ContactScenario(1e-12, 5.0, 21.0))
        flat = solve_contact(ContactScenario(0.0, 5.0, 21.0))
        assert eps.contact_radius == pytest.approx(flat.contact_radius, rel=1e-6)

    @settings(max_examples=200, deadline=None)
    @given(
        sensor=st.floats(5.0, 50.0),
        curvature=st.floats(-0.015, 0.2),
        depth=st.floats(1e-6, 10.0),
    )
    def test_equivalent_radius_round_trip(self, sensor, curvature, depth):
        if curvature < 0 and -1.0 / curvature <= sensor:
            return
        state = solve_contact(ContactScenario(curvature, depth, sensor))
        r_eq = 1.0 / (1.0 / sensor + curvature)
        assert state.contact_radius**2 / state.relative_displacement == pytest.approx(
            r_eq, rel=1e-9
        )

    def test_rejects_negative_indentation(self):
        with pytest.raises(InvalidArgumentError):
            ContactScenario(0.0, -1.0, 21.0)


class TestDisplacementField:
    def test_peak_equals_relative_displacement(self):
        field = subsurface_normal_field(ContactState(10.496, 8.0))
        assert field(0.0) == 8.0

    def test_value_at_width(self):
        field = subsurface_normal_field(ContactState(10.496, 8.0))
        assert field(10.496) == pytest.approx(8.0 / math.e, rel=1e-12)

    def test_value_at_twice_width(self):
        field = subsurface_normal_field(ContactState(10.496, 8.0))
        assert field(2 * 10.496) == pytest.approx(8.0 * math.exp(-4.0), rel=1e-12)
        assert field(2 * 10.496) == pytest.approx(0.1465, abs=5e-5)

    def test_zero_state_gives_zero_field(self):
        field = subsurface_normal_field(ContactState(0.0, 0.0))
        assert np.all(field(np.linspace(0, 30, 7)) == 0.0)

    def test_bounded_and_strictly_decreasing(self):
        field = subsurface_normal_field(ContactState(5.0, 2.0))
        r = np.linspace(0.0, 40.0, 400)
        u = field(r)
        assert np.all(u <= 2.0) and np.all(u >= 0.0)
        assert np.all(np.diff(u) < 0.0)

    def test_surface_profile_parabolic_and_clipped(self):
        state = solve_contact(scenario("flat", 8.0))
        r_eq = 21.0
        assert surface_normal_profile(state, 0.0) == 8.0
        assert surface_normal_profile(state, 5.0) == pytest.approx(8.0 - 25.0 / (2 * r_eq))
        edge = math.sqrt(2 * r_eq * 8.0)
        assert surface_normal_profile(state, edge + 0.1) == 0.0


def tiny_layout(outer_points, separation=2.0, marker_radius=0.4):
    outer = np.atleast_2d(np.asarray(outer_points, dtype=float))
    radius = float(np.linalg.norm(outer[0]))
    geometry = SensorGeometry(radius, separation, len(outer), marker_radius)
    inner = outer * ((radius - separation) / radius)
    return MarkerLayout(outer_positions=outer, inner_positions=inner, geometry=geometry)


class TestMarkerDisplacements:
    def test_center_marker_moves_by_full_indentation(self):
        layout = tiny_layout([[0.0, 0.0, 21.0]])
        disp = marker_displacements(layout, scenario("flat", 8.0))
        np.testing.assert_allclose(disp.inner[0], [0.0, 0.0, -8.0], atol=1e-12)
        np.testing.assert_allclose(disp.outer[0], [0.0, 0.0, -8.0], atol=1e-12)

    def test_inner_marker_at_contact_radius(self):
        state = solve_contact(scenario(40.0, 8.0))
        a = state.contact_radius
        inner = np.array([a, 0.0, math.sqrt(19.0**2 - a**2)])
        outer = inner * (21.0 / 19.0)
        layout = MarkerLayout(
            outer_positions=outer[None, :],
            inner_positions=inner[None, :],
            geometry=SensorGeometry(21.0, 2.0, 1, 0.4),
        )
        disp = marker_displacements(layout, scenario(40.0, 8.0))
        normal = inner / np.linalg.norm(inner)
        u_normal = -float(disp.inner[0] @ normal)
        assert u_normal == pytest.approx(8.0 / math.e, rel=1e-9)

    def test_zero_indentation_zero_displacement(self):
        layout = build_layout(SensorGeometry(21.0, 2.0, 50, 0.4))
        disp = marker_displacements(layout, scenario(40.0, 0.0))
        assert np.all(disp.outer == 0.0) and np.all(disp.inner == 0.0)

    def test_decays_to_zero_outside_three_widths(self):
        state = solve_contact(scenario(40.0, 2.0))
        a = state.contact_radius
        r = 3.01 * a
        inner = np.array([r, 0.0, math.sqrt(max(19.0**2 - r**2, 0.01))])
        inner *= 19.0 / np.linalg.norm(inner)
        layout = MarkerLayout(
            outer_positions=inner[None, :] * (21.0 / 19.0),
            inner_positions=inner[None, :],
            geometry=SensorGeometry(21.0, 2.0, 1, 0.4),
        )
        disp = marker_displacements(layout, scenario(40.0, 2.0))
        assert np.linalg.norm(disp.inner[0]) < 1e-6
        assert np.linalg.norm(disp.outer[0]) < 1e-6

    def test_rejects_invalid_axis(self):
        layout = build_layout(SensorGeometry(21.0, 2.0, 10, 0.4))
        with pytest.raises(InvalidArgumentError):
            marker_displacements(layout, scenario("flat", 1.0), contact_axis=(0, 0, -1))
        with pytest.raises(InvalidArgumentError):
            marker_displacements(layout, scenario("flat", 1.0), contact_axis=(0, 0, 0))

    def test_commutes_with_rotation(self):
        from scipy.spatial.transform import Rotation

        layout = build_layout(SensorGeometry(21.0, 2.0, 60, 0.4))
        scn = scenario(40.0, 5.0)
        base = marker_displacements(layout, scn)
        rng = np.random.default_rng(3)
        for _ in range(5):
            rot = Rotation.random(random_state=rng).as_matrix()
            axis = rot @ np.array([0.0, 0.0, 1.0])
            if axis[2] <= 0.05:
                continue
            rotated = MarkerLayout(
                outer_positions=layout.outer_positions @ rot.T,
                inner_positions=layout.inner_positions @ rot.T,
                geometry=layout.geometry,
            )
            turned = marker_displacements(rotated, scn, contact_axis=axis)
            np.testing.assert_allclose(turned.outer, base.outer @ rot.T, atol=1e-9)
            np.testing.assert_allclose(turned.inner, base.inner @ rot.T, atol=1e-9)

    def test_tangential_scale_depends_on_depth(self):
        r = 5.0
        inner = np.array([r, 0.0, math.sqrt(19.0**2 - r**2)])
        layout = MarkerLayout(
            outer_positions=inner[None, :] * (21.0 / 19.0),
            inner_positions=inner[None, :],
            geometry=SensorGeometry(21.0, 2.0, 1, 0.4),
        )
        model = ForwardModel(tangential_gain=0.2, membrane_thickness=4.0)
        scn = scenario("flat", 4.0)
        disp = marker_displacements(layout, scn, model=model)
        state = solve_contact(scn)
        a, dr = state.contact_radius, state.relative_displacement
        normal = inner / 19.0
        outer_n = layout.outer_positions[0] / 21.0
        tang_inner = disp.inner[0] - (disp.inner[0] @ normal) * normal
        tang_outer = disp.outer[0] - (disp.outer[0] @ outer_n) * outer_n

        def bulge(rr):
            return 0.2 * dr * (rr / a) * math.exp(-(rr * rr) / (a * a))

        r_outer = r * (21.0 / 19.0)
        # inner tangential motion is scaled by 1 - separation/thickness = 1/2
        assert np.linalg.norm(tang_inner) == pytest.approx(0.5 * bulge(r), rel=1e-9)
        assert np.linalg.norm(tang_outer) == pytest.approx(bulge(r_outer), rel=1e-9)


class TestSensitivity:
    def test_reference_value(self):
        # F t / (A E) with F=1 N, t=3 mm, A=10 mm^2, E=1 MPa
        assert sensitivity(1.0, 3.0, 10.0, 1.0) == pytest.approx(0.3, rel=1e-12)

    def test_rejects_non_positive(self):
        for bad in [(0, 3, 10, 1), (1, 0, 10, 1), (1, 3, 0, 1), (1, 3, 10, 0)]:
            with pytest.raises(InvalidArgumentError):
                sensitivity(*bad)

    def test_doubling_modulus_halves_displacement(self):
        assert sensitivity(1.0, 3.0, 10.0, 2.0) == pytest.approx(
            sensitivity(1.0, 3.0, 10.0, 1.0) / 2.0
        )
