import numpy as np
import pytest

from helpers import erosion_case
from mitlnav.geometry import (Ball, Box, EmptySetError, ball_in_box, balls_disjoint,
                              erode_ball_by_ball, erode_box_by_ball, feedback_image_radius,
                              translate_set)


def test_erosion_matches_grid_oracle():
    rng = np.random.default_rng(7)
    assert all(erosion_case(rng, case) for case in range(100))


def test_erode_box_exact():
    b = erode_box_by_ball(Box([-5, -5], [5, 5]), 0.1)
    assert np.allclose(b.lower, [-4.9, -4.9]) and np.allclose(b.upper, [4.9, 4.9])


def test_erode_box_empty_reports_radius():
    with pytest.raises(EmptySetError) as info:
        erode_box_by_ball(Box([-1, -1], [1, 1]), 1.5, name="U-bar")
    assert info.value.radius == 1.5
    assert "U-bar" in str(info.value)


def test_erode_to_a_point_is_allowed():
    b = erode_box_by_ball(Box([-1, -2], [1, 2]), 1.0)
    assert np.allclose(b.lower[0], b.upper[0])


def test_negative_radius_rejected():
    with pytest.raises(ValueError):
        erode_box_by_ball(Box([-1, -1], [1, 1]), -0.1)
    with pytest.raises(ValueError):
        erode_ball_by_ball(Ball([0, 0], 1.0), -0.1)


def test_translate_and_dimension_checks():
    assert translate_set(Ball([1, 1], 0.5), [1, -1]) == Ball([2, 0], 0.5)
    assert translate_set(Box([0, 0], [1, 1]), [1, 1]) == Box([1, 1], [2, 2])
    with pytest.raises(ValueError):
        translate_set(Ball([0, 0], 1), [1, 2, 3])


def test_feedback_image_radius():
    assert feedback_image_radius(2.0, 0.1, 0.2) == pytest.approx(0.6)
    with pytest.raises(ValueError):
        feedback_image_radius(0.0, 0.1, 0.2)


def test_containment_predicates():
    box = Box([-5, -5], [5, 5])
    assert ball_in_box(Ball([4.2, 4.2], 0.7), box)
    assert not ball_in_box(Ball([4.5, 0], 0.7), box)
    assert balls_disjoint(Ball([0, 0], 1), Ball([2.01, 0], 1))
    assert not balls_disjoint(Ball([0, 0], 1), Ball([2, 0], 1))
