import random
from fractions import Fraction
from pathlib import Path

import pytest

from helpers import check_instance
from mitlnav.abstraction import Wts, build_wts
from mitlnav.dynamics import DisturbanceSignal
from mitlnav.mitl import compile_formula
from mitlnav.scenario import load_scenario
from mitlnav.synthesis import (PlanConsistencyError, TimedPlan, execute_plan, formula_digest,
                               product_search, verify_plan)

TINY = Path(__file__).parent / "data" / "tiny.yaml"


def test_minimality_against_enumeration():
    rng = random.Random(2024)
    assert all(check_instance(rng) for _ in range(100))


def _line():
    # S0 -> S1 -> S2 with a shortcut S0 -> S2 through an obstacle label
    return Wts(["S0", "S1", "S2", "S3"], "S0",
               {"S0": frozenset(), "S1": frozenset(), "S2": frozenset({"g"}),
                "S3": frozenset({"obs", "g"})},
               frozenset({"g", "obs"}),
               {("S0", "S1"): Fraction(2), ("S1", "S2"): Fraction(3), ("S0", "S3"): Fraction(1),
                ("S3", "S2"): Fraction(1), ("S2", "S0"): Fraction(1)})


def test_safety_avoids_shortcut():
    _, tba = compile_formula("G[0,inf) !obs & F[0,10] g")
    plan = product_search(_line(), tba)
    assert plan.regions == ["S0", "S1", "S2"] and plan.makespan == 5
    _, tba = compile_formula("F[0,10] g")
    assert product_search(_line(), tba).regions == ["S0", "S3"]


def test_unreachable_deadline_gives_none():
    _, tba = compile_formula("G[0,inf) !obs & F[0,1] g")
    assert product_search(_line(), tba) is None


def test_safety_only_is_empty_plan():
    _, tba = compile_formula("G[0,inf) !obs")
    plan = product_search(_line(), tba)
    assert plan.regions == ["S0"] and plan.makespan == 0


def test_unbounded_eventuality_past_horizon():
    # reaching g needs two legs whose sum exceeds every constant plus the longest leg
    w = Wts(["S0", "S1", "S2"], "S0", {"S0": frozenset(), "S1": frozenset(), "S2": frozenset({"g"})},
            frozenset({"g"}), {("S0", "S1"): Fraction(5), ("S1", "S2"): Fraction(5)})
    _, tba = compile_formula("F[1,inf) g")
    assert product_search(w, tba).makespan == 10


def test_lower_horizon_rejected():
    _, tba = compile_formula("F[0,10] g")
    with pytest.raises(ValueError):
        product_search(_line(), tba, horizon_bound=5)


def test_verify_plan_cases():
    w = _line()
    _, tba = compile_formula("G[0,inf) !obs & F[0,10] g")
    plan = product_search(w, tba)
    assert verify_plan(plan, w, tba)
    assert not verify_plan(TimedPlan([("S0", Fraction(0)), ("S3", Fraction(1))], []), w, tba)
    bad = TimedPlan([("S0", Fraction(0)), ("S1", Fraction(2)), ("S2", Fraction(6))], [])
    with pytest.raises(PlanConsistencyError):
        verify_plan(bad, w, tba)
    _, late = compile_formula("G[0,inf) !obs & F[0,4] g")
    assert not verify_plan(plan, w, late)
    assert not verify_plan(TimedPlan([("S1", Fraction(0))], []), w, tba)


def test_plan_json_round_trip(tmp_path):
    _, tba = compile_formula("G[0,inf) !obs & F[0,10] g")
    plan = product_search(_line(), tba)
    plan.formula = "G[0,inf) !obs & F[0,10] g"
    plan.formula_digest = formula_digest(plan.formula)
    plan.save(tmp_path / "p.json")
    back = TimedPlan.load(tmp_path / "p.json")
    assert back.run == plan.run and back.dumps() == plan.dumps()


@pytest.fixture(scope="module")
def tiny_plan():
    sc = load_scenario(TINY)
    wts = build_wts(sc, keep_results=False)
    _, tba = compile_formula(sc.formula, sc.alphabet)
    return sc, wts, tba, product_search(wts, tba)


def test_tiny_plan(tiny_plan):
    sc, wts, tba, plan = tiny_plan
    assert plan.regions == ["A", "C"]


def test_execute_without_disturbance_matches_plan(tiny_plan):
    sc, wts, tba, plan = tiny_plan
    rep = execute_plan(plan, sc, tba=tba)
    assert rep.satisfied and rep.realized_run == plan.run


def test_execute_with_disturbance(tiny_plan):
    sc, wts, tba, plan = tiny_plan
    rep = execute_plan(plan, sc, tba=tba,
                       disturbance=DisturbanceSignal("uniform-random", sc.d_bound, seed=1))
    assert rep.satisfied and rep.accepted and not rep.contacts and rep.in_workspace
    doc = rep.to_json()
    assert doc["legs"][0]["tube"]["max_e"] <= doc["legs"][0]["tube"]["r_e"]
