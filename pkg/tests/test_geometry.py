import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from duotact import (
    InvalidArgumentError,
    SensorGeometry,
    build_layout,
    generate_uniform_points,
    nearest_neighbor_stats,
)
from duotact.geometry import read_layout_csv, write_layout_csv

# nearest-neighbor spread of the deterministic 400-marker layout,
# measured once from this implementation and frozen as a regression value
NN_CV_400_R21 = 0.03971425447012056


class TestGenerateUniformPoints:
    def test_400_points_on_21mm_hemisphere(self):
        pts = generate_uniform_points(400, 21.0)
        assert pts.shape == (400, 3)
        np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 21.0, rtol=1e-9)
        assert (pts[:, 2] >= 0.0).all()

    def test_single_point_degenerates_to_pole(self):
        np.testing.assert_allclose(generate_uniform_points(1, 5.0), [[0.0, 0.0, 5.0]])

    def test_mean_area_per_point_matches_budget(self):
        # direct evaluation of 2*pi*R^2/N for the 400-marker build
        area = 2.0 * math.pi * 21.0**2 / 400
        assert area == pytest.approx(6.927211801, rel=1e-9)

    def test_rejects_invalid_arguments(self):
        with pytest.raises(InvalidArgumentError):
            generate_uniform_points(0, 21.0)
        with pytest.raises(InvalidArgumentError):
            generate_uniform_points(10, 0.0)
        with pytest.raises(InvalidArgumentError):
            generate_uniform_points(10, -2.0)

    def test_deterministic(self):
        a = generate_uniform_points(400, 21.0)
        b = generate_uniform_points(400, 21.0)
        assert np.array_equal(a, b)

    @settings(max_examples=40, deadline=None)
    @given(n=st.integers(1, 600), radius=st.floats(0.5, 100.0))
    def test_count_norm_hemisphere_properties(self, n, radius):
        pts = generate_uniform_points(n, radius)
        assert pts.shape == (n, 3)
        np.testing.assert_allclose(np.linalg.norm(pts, axis=1), radius, rtol=1e-9)
        assert (pts[:, 2] >= -1e-12).all()

    def test_mean_spacing_scales_inverse_sqrt_n(self):
        means = {
            n: nearest_neighbor_stats(generate_uniform_points(n, 21.0)).mean
            for n in (100, 400, 1600)
        }
        assert means[100] / means[400] == pytest.approx(2.0, rel=0.15)
        assert means[400] / means[1600] == pytest.approx(2.0, rel=0.15)


class TestSensorGeometry:
    def test_valid_construction(self):
        g = SensorGeometry(21.0, 2.0, 400, 0.4)
        assert g.inner_radius == 19.0
        assert g.inner_marker_radius == pytest.approx(0.4 * (19 / 21) * g.inner_marker_scale)

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(outer_radius=2.0, layer_separation=2.0, marker_count=10, marker_radius=0.1),
            dict(outer_radius=21.0, layer_separation=0.0, marker_count=10, marker_radius=0.1),
            dict(outer_radius=21.0, layer_separation=2.0, marker_count=0, marker_radius=0.1),
            dict(outer_radius=21.0, layer_separation=2.0, marker_count=10, marker_radius=0.0),
            # packing bound: 2 r^2 N > 2 pi R^2
            dict(outer_radius=21.0, layer_separation=2.0, marker_count=400, marker_radius=2.7),
        ],
    )
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(InvalidArgumentError):
            SensorGeometry(**kwargs)


class TestBuildLayout:
    def test_pole_pair(self):
        layout = build_layout(SensorGeometry(21.0, 2.0, 400, 0.4))
        np.testing.assert_allclose(layout.outer_positions[0], [0.0, 0.0, 21.0])
        np.testing.assert_allclose(layout.inner_positions[0], [0.0, 0.0, 19.0])

    def test_equator_pairs_scale_radially(self):
        layout = build_layout(SensorGeometry(21.0, 2.0, 400, 0.4))
        rim = np.abs(layout.outer_positions[:, 2]) < 1e-9
        assert rim.any()
        np.testing.assert_allclose(
            layout.inner_positions[rim], layout.outer_positions[rim] * (19.0 / 21.0)
        )

    def test_pairing_rays_through_origin(self):
        layout = build_layout(SensorGeometry(21.0, 2.0, 400, 0.4))
        cross = np.cross(layout.inner_positions, layout.outer_positions)
        np.testing.assert_allclose(cross, 0.0, atol=1e-9)
        np.testing.assert_allclose(
            np.linalg.norm(layout.inner_positions, axis=1), 19.0, rtol=1e-9
        )

    def test_deterministic(self):
        g = SensorGeometry(21.0, 2.0, 400, 0.4)
        a, b = build_layout(g), build_layout(g)
        assert np.array_equal(a.outer_positions, b.outer_positions)
        assert np.array_equal(a.inner_positions, b.inner_positions)


class TestNearestNeighborStats:
    def test_two_points(self):
        stats = nearest_neighbor_stats(np.array([[21.0, 0, 0], [-21.0, 0, 0]]))
        assert stats.mean == pytest.approx(42.0)
        assert stats.cv == pytest.approx(0.0, abs=1e-12)

    def test_square_on_equator(self):
        r = 21.0
        pts = np.array([[r, 0, 0], [0, r, 0], [-r, 0, 0], [0, -r, 0]])
        stats = nearest_neighbor_stats(pts)
        assert stats.mean == pytest.approx(r * math.sqrt(2.0))
        assert stats.cv == pytest.approx(0.0, abs=1e-12)

    def test_regression_value_400_markers(self):
        stats = nearest_neighbor_stats(generate_uniform_points(400, 21.0))
        assert stats.cv == pytest.approx(NN_CV_400_R21, rel=1e-9)

    def test_rejects_below_two_points(self):
        with pytest.raises(InvalidArgumentError):
            nearest_neighbor_stats(np.array([[1.0, 0, 0]]))


class TestLayoutCsv:
    def test_roundtrip(self, tmp_path):
        layout = build_layout(SensorGeometry(21.0, 2.0, 50, 0.4))
        path = tmp_path / "layout.csv"
        write_layout_csv(layout, path)
        back = read_layout_csv(path)
        assert back["outer"].shape == (50, 3)
        np.testing.assert_allclose(back["outer"], layout.outer_positions, rtol=1e-8, atol=1e-8)
        np.testing.assert_allclose(back["inner"], layout.inner_positions, rtol=1e-8, atol=1e-8)

    def test_nine_significant_digits(self, tmp_path):
        layout = build_layout(SensorGeometry(21.0, 2.0, 4, 0.4))
        path = tmp_path / "layout.csv"
        write_layout_csv(layout, path)
        line = path.read_text().splitlines()[1]
        assert line.startswith("0,outer,")
        assert line.split(",")[4] == "21"
