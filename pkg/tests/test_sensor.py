import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avsearch.scene import RobotState, line_of_sight
from avsearch.sensor import (
    SensorParams,
    angle_factor,
    detection_prob,
    distance_factor,
    nondetection_grid,
    nondetection_prob,
    relative_bearing,
)

from conftest import make_scene

P = SensorParams()


def _ahead(d, phi=0.0):
    return (d * math.cos(phi), d * math.sin(phi))


class TestDistanceFactor:
    def test_zero(self):
        assert distance_factor(RobotState(0, 0), (0, 0), P) == 1.0

    def test_at_dmax(self):
        assert distance_factor(RobotState(0, 0), (3, 0), P) == pytest.approx(math.exp(-0.4), abs=1e-12)
        assert distance_factor(RobotState(0, 0), (3, 0), P) == pytest.approx(0.6703, abs=1e-4)

    def test_at_twice_dmax(self):
        assert distance_factor(RobotState(0, 0), (0, 6), P) == pytest.approx(0.2019, abs=1e-4)


class TestAngleFactor:
    def test_on_axis_normalized(self):
        assert angle_factor(0.0, P) == 1.0

    def test_raw_peak_matches_gamma_oracle(self):
        raw = SensorParams(normalize_angle=False)
        oracle = float(100 / (2 * mpmath.gamma(mpmath.mpf("0.01"))))
        assert angle_factor(0.0, raw) == pytest.approx(oracle, rel=1e-12)
        assert abs(angle_factor(0.0, raw) - 0.5029) < 1e-3

    @pytest.mark.parametrize("x", [0.005, 0.01, 0.1, 0.37, 0.5, 0.99, 1.0])
    def test_gamma_accuracy(self, x):
        assert math.gamma(x) == pytest.approx(float(mpmath.gamma(x)), rel=1e-10)

    def test_plateau(self):
        assert angle_factor(0.9, P) == math.exp(-(0.9**100))
        assert angle_factor(0.9, P) == pytest.approx(1 - 2.66e-5, abs=1e-7)
        for phi in np.linspace(-0.89, 0.89, 41):
            assert abs(angle_factor(phi, SensorParams(fov=120.0)) - 1.0) < 1e-4

    def test_outside_fov(self):
        assert angle_factor(math.radians(56), P) == 0.0
        assert angle_factor(math.radians(54), P) > 0.0


class TestBearing:
    def test_cardinal(self):
        s = RobotState(1.0, 1.0, 0.0)
        assert relative_bearing(s, (3.0, 1.0)) == 0.0
        assert relative_bearing(s, (-1.0, 1.0)) == pytest.approx(math.pi)
        assert relative_bearing(s, (1.0, 2.0)) == pytest.approx(math.pi / 2)

    def test_wrapped(self):
        s = RobotState(0.0, 0.0, math.radians(170))
        assert relative_bearing(s, _ahead(1, math.radians(-170))) == pytest.approx(math.radians(20))

    def test_own_position_is_on_axis(self):
        assert relative_bearing(RobotState(0.5, 0.5, 2.0), (0.5, 0.5)) == 0.0


class TestNondetection:
    def test_on_axis_distance_zero(self):
        assert nondetection_prob(RobotState(0.5, 0.5), (0.5, 0.5), P) == pytest.approx(0.1, abs=1e-15)

    def test_occluded(self):
        assert nondetection_prob(RobotState(0, 0), (1, 0), P, visible=False) == 1.0

    def test_on_axis_distance_three(self):
        assert nondetection_prob(RobotState(0, 0), (3, 0), P) == pytest.approx(1 - 0.9 * math.exp(-0.4), abs=1e-12)
        assert nondetection_prob(RobotState(0, 0), (3, 0), P) == pytest.approx(0.3967, abs=1e-4)

    def test_detection_is_complement(self):
        s = RobotState(0, 0, 0.3)
        assert detection_prob(s, (2, 1), P) == pytest.approx(1 - nondetection_prob(s, (2, 1), P))

    @settings(max_examples=300, deadline=None)
    @given(st.floats(0, 8), st.floats(0, 8), st.floats(0, math.pi), st.floats(0, 1), st.booleans())
    def test_monotone_and_symmetric(self, d1, d2, b, frac, raw):
        # target on the +x axis, camera yawed by -bearing: the bearing is exact
        p = SensorParams(normalize_angle=not raw)

        def q(d, bearing):
            return nondetection_prob(RobotState(0.0, 0.0, -bearing), (d, 0.0), p)

        lo, hi = sorted((d1, d2))
        assert 0.0 <= q(lo, b) <= q(hi, b) <= 1.0
        assert q(d1, b * frac) <= q(d1, b)
        assert q(d1, b) == q(d1, -b)

class TestParams:
    @pytest.mark.parametrize("kw", [
        {"p_dmax": 0.0}, {"p_dmax": 1.1}, {"d_min": 3.0}, {"d_min": 0.0},
        {"alpha": 0.0}, {"beta": 0.5}, {"sigma": 0.0}, {"fov": 0.0},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SensorParams(**kw)


class TestGrid:
    def test_matches_scalar(self, office):
        s = RobotState(4.3, 5.7, 0.4)
        grid = nondetection_grid(office, s, P)
        for cy in range(20):
            for cx in range(20):
                tau = office.cell_center((cx, cy))
                vis = line_of_sight(office, s, (cx, cy))
                assert grid[cy, cx] == pytest.approx(nondetection_prob(s, tau, P, vis), abs=1e-14)

    def test_occlusion(self):
        scene = make_scene(6, 3, target=(5, 2), obstacles=[(2, 1)])
        grid = nondetection_grid(scene, RobotState(0.5, 1.5, 0.0), P)
        assert grid[1, 1] < 1.0
        assert grid[1, 3] == 1.0
