from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from mitlnav.dynamics import DisturbanceSignal
from mitlnav.navigator import (InfeasibleStart, check_assumption4, csv_columns, navigate,
                               read_trajectory_csv, replay, steady_state_reached,
                               write_trajectory_csv)
from mitlnav.scenario import load_scenario, parse_scenario

TINY = Path(__file__).parent / "data" / "tiny.yaml"


@pytest.fixture(scope="module")
def tiny():
    sc = load_scenario(TINY)
    return sc, sc.design(), sc.fhocp_config()


@pytest.fixture(scope="module")
def leg_ab(tiny):
    sc, g, cfg = tiny
    return navigate(sc, sc.model, g, cfg, "A", "B")


def test_same_region_takes_one_period(tiny):
    sc, g, cfg = tiny
    res = navigate(sc, sc.model, g, cfg, "A", "A", tail=0.0)
    assert res.feasible and res.duration == cfg.h


@pytest.mark.parametrize("state,expected", [
    ([1.0, 2.0, 0.0, 0.0], True),
    ([1.0999, 2.0, 0.0, 0.0], True),
    ([1.0, 2.0, 0.0999, 0.0], True),
    ([1.1001, 2.0, 0.0, 0.0], False),
    ([1.0, 2.0, 0.0, -0.1001], False),
])
def test_steady_state_reached(state, expected):
    # lambda_min(P) = 4, epsilon = 0.2 -> bound 0.1
    P = np.diag([4.0, 5.0, 6.0, 7.0])
    assert steady_state_reached(state, [1.0, 2.0], P, 0.2) is expected


def _doc(centres, radius=0.5):
    return {
        "workspace": {"lower": [-5, -5], "upper": [5, 5]}, "robot_radius": 0.1, "d_bound": 0.1,
        "lipschitz": 1, "j_lower": 1, "initial": {"position": list(centres[0])},
        "rois": [{"id": f"R{i}", "center": list(c), "radius": radius} for i, c in enumerate(centres)],
        "formula": "F[0,5] a", "fhocp": {"h": 0.1, "T": 1, "Q": [1] * 4, "R": [1, 1]},
        "gains": {"rho_margin": 2, "k_margin": 1.5}, "model": {"name": "double_integrator"},
    }


def test_assumption4_examples():
    sc = parse_scenario(_doc([(0, 0), (3, 0)]))
    g = sc.design()
    rep = check_assumption4(sc, g)
    assert rep.ok and rep.required_gap == pytest.approx(0.2 + 2 * g.r_e)
    close = parse_scenario(_doc([(0, 0), (1.2, 0), (4, 0)]))
    rep = check_assumption4(close, close.design())
    assert not rep
    assert [(a, b) for a, b, _ in rep.failing] == [("R0", "R1")]


def test_assumption4_on_bundled(scenario, gains):
    assert check_assumption4(scenario, gains).ok


def test_leg_is_feasible_and_in_tube(leg_ab, tiny):
    sc, g, cfg = tiny
    assert leg_ab.feasible, leg_ab.violations
    assert leg_ab.duration == leg_ab.steps * cfg.h
    assert isinstance(leg_ab.duration, Fraction)
    assert leg_ab.tube["max_e"] == 0.0  # no disturbance
    assert leg_ab.bounds["arrival_clearance"] > 0
    assert leg_ab.times.shape[0] == leg_ab.real.shape[0] == leg_ab.u.shape[0]


def test_disturbed_leg_stays_in_tube(tiny):
    sc, g, cfg = tiny
    d = DisturbanceSignal("uniform-random", sc.d_bound, seed=5)
    res = navigate(sc, sc.model, g, cfg, "A", "C", disturbance=d)
    assert res.feasible, res.violations
    assert 0 < res.tube["max_e"] <= g.r_e
    assert res.tube["max_v"] <= g.r_v


def test_replay_equals_navigate(tiny, leg_ab):
    sc, g, cfg = tiny
    d1 = DisturbanceSignal("uniform-random", sc.d_bound, seed=9)
    d2 = DisturbanceSignal("uniform-random", sc.d_bound, seed=9)
    direct = navigate(sc, sc.model, g, cfg, "A", "B", disturbance=d1)
    again = replay(leg_ab, sc, sc.model, g, d2)
    assert direct.duration == again.duration
    assert np.allclose(direct.nominal, again.nominal, atol=1e-12)
    assert np.allclose(direct.real, again.real, atol=1e-12)
    assert direct.feasible == again.feasible


def test_start_outside_source_rejected(tiny):
    sc, g, cfg = tiny
    with pytest.raises(InfeasibleStart):
        navigate(sc, sc.model, g, cfg, "A", "B", start_state=[-1.45, 0, 0, 0])


def test_timeout_reported(tiny):
    sc, g, cfg = tiny
    res = navigate(sc, sc.model, g, cfg, "A", "B", timeout=0.5)
    assert not res.feasible and res.duration is None
    assert res.violations[0] == "timeout"


def test_unholdable_destination(scenario, gains, config):
    res = navigate(scenario, scenario.model, gains, config, "R1", "R13")
    assert not res.feasible
    assert "leg design failed" in res.violations[0]


def test_csv_round_trip(tmp_path, leg_ab):
    path = tmp_path / "leg.csv"
    write_trajectory_csv(leg_ab, path)
    cols = read_trajectory_csv(path)
    assert list(cols) == csv_columns(2)
    assert np.array_equal(cols["chi_1"], leg_ab.real[:, 0])
    assert np.array_equal(cols["vbar_2"], leg_ab.nominal[:, 3])
    assert np.array_equal(cols["t"], leg_ab.times)
