"""Acceptance criteria 1-9 on the bundled scenario.

Each test prints one ``criterion N: PASS|FAIL`` line (visible with ``-v``
or ``-s``) before asserting.  Criteria 1 and 9 build the full all-pairs
abstraction twice and take a few minutes together.
"""
import math
import random
import time

import numpy as np
import pytest

from helpers import check_instance, erosion_case, random_formula, random_word
from mitlnav.abstraction import build_wts
from mitlnav.dynamics import DisturbanceSignal
from mitlnav.mitl import (accepts, brute_force_satisfies, build_tba, compile_formula, parse,
                          validate_fragment)
from mitlnav.navigator import leg_setup, navigate, replay
from mitlnav.synthesis import execute_plan, formula_digest, product_search, verify_plan
from mitlnav.tube import design_gains

pytestmark = pytest.mark.acceptance

# reference leg durations (s) and the allowed relative deviation
REFERENCE_LEGS = {("R1", "R3"): 5.2, ("R3", "R5"): 6.1, ("R5", "R9"): 4.5,
                  ("R9", "R12"): 7.1, ("R12", "R11"): 4.8}
LEG_TOL = 0.30
INTEGRATION_TOL = 1e-6
MC_RUNS = 100
MC_LEG = ("R1", "R3")


def report(request, number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    with request.config.pluginmanager.getplugin("capturemanager").global_and_fixture_disabled():
        print("\n" + line)
    assert ok, line


def _pipeline(scenario):
    t = time.perf_counter()
    wts = build_wts(scenario, pairs="all", keep_results=False)
    nf, tba = compile_formula(scenario.formula, scenario.alphabet)
    plan = product_search(wts, tba)
    if plan is not None:
        plan.formula = scenario.formula
        plan.formula_digest = formula_digest(scenario.formula)
    return wts, tba, plan, time.perf_counter() - t


@pytest.fixture(scope="module")
def end_to_end(scenario):
    wts, tba, plan, t_build = _pipeline(scenario)
    t = time.perf_counter()
    rep = None
    if plan is not None:
        rep = execute_plan(plan, scenario, tba=tba,
                           disturbance=scenario.make_disturbance("sinusoidal"))
    return wts, tba, plan, rep, t_build + time.perf_counter() - t


def _stamp_in(run, labels, atom, lo, hi):
    """First stamp at which ``atom`` holds inside ``[lo, hi]``, else None."""
    return next((t for r, t in run if atom in labels.get(r, ()) and lo <= t <= hi), None)


def test_criterion_1_end_to_end(request, scenario, end_to_end):
    wts, tba, plan, rep, runtime = end_to_end
    problems = []
    legs = {}
    for pair, ref in REFERENCE_LEGS.items():
        d = wts.transitions.get(pair)
        legs[pair] = d
        if d is None or abs(float(d) - ref) > LEG_TOL * ref:
            problems.append(f"leg {pair[0]}->{pair[1]} = {d} vs {ref}")
    if plan is None:
        problems.append("no plan")
    else:
        if not verify_plan(plan, wts, tba):
            problems.append("plan does not verify")
        if _stamp_in(rep.realized_run, scenario.labels, "goal1", 6, 12) is None:
            problems.append("goal1 not reached within [6, 12]")
        if _stamp_in(rep.realized_run, scenario.labels, "goal2", 20, 30) is None:
            problems.append("goal2 not reached within [20, 30]")
        if rep.contacts:
            problems.append(f"contacts {rep.contacts}")
        if not rep.in_workspace:
            problems.append("left the workspace")
        if not rep.satisfied:
            problems.append(f"not satisfied ({rep.aborted})")
    if runtime > 300:
        problems.append(f"runtime {runtime:.0f} s")
    run = ", ".join(f"{r}@{float(t):g}" for r, t in (rep.realized_run if rep else []))
    durations = " ".join(f"{a}->{b}={float(d):g}" if d else f"{a}->{b}=none"
                         for (a, b), d in legs.items())
    report(request, 1, not problems,
           f"run [{run}]; legs {durations}; {runtime:.0f} s; P from the Lyapunov equation"
           + (f"; problems: {problems}" if problems else ""))


@pytest.fixture(scope="module")
def monte_carlo(scenario, gains, config):
    t = time.perf_counter()
    base = navigate(scenario, scenario.model, gains, config, *MC_LEG, tail=2.0)
    runs = []
    for seed in range(MC_RUNS):
        d = DisturbanceSignal("uniform-random", scenario.d_bound, seed=seed)
        runs.append(replay(base, scenario, scenario.model, gains, d))
    _, term = leg_setup(scenario, scenario.model, gains, config, *MC_LEG)
    return base, runs, term, time.perf_counter() - t


def test_criterion_2_tube_invariant(request, gains, monte_carlo):
    base, runs, _, runtime = monte_carlo
    violations = 0
    worst_e = worst_v = 0.0
    for r in runs:
        e = np.linalg.norm(r.real[:, :2] - r.nominal[:, :2], axis=1)
        v = np.linalg.norm(r.real[:, 2:] - r.nominal[:, 2:], axis=1)
        violations += int(np.sum(e > gains.r_e + INTEGRATION_TOL))
        violations += int(np.sum(v > gains.r_v + INTEGRATION_TOL))
        worst_e, worst_v = max(worst_e, e.max()), max(worst_v, v.max())
    ok = base.duration is not None and violations == 0 and runtime <= 120
    report(request, 2, ok,
           f"{len(runs)} runs, {violations} violations; max |e~| {worst_e:.4f} <= r_e {gains.r_e:.4f}, "
           f"max |v~| {worst_v:.4f} <= r_v {gains.r_v:.4f}; {runtime:.0f} s")


def test_criterion_3_gain_formulas(request, scenario):
    L, J, d = 2.5, 1.0, 0.25
    worst = 0.0
    for rm, km in [(scenario.gains["rho_margin"], scenario.gains["k_margin"]), (1.2, 1.1), (3.0, 2.0)]:
        g = design_gains(L, J, d, rm, km)
        a1 = 1 - L / (2 * g.rho)
        a2 = g.k * J - (1 + 2 * g.rho) * L - 5 / 4
        worst = max(worst, abs(g.alpha1 - a1), abs(g.alpha2 - a2),
                    abs(g.r_e - d / math.sqrt(min(a1, a2))))
    report(request, 3, worst <= 1e-12, f"max deviation {worst:.2e}")


def test_criterion_4_steady_state_bounds(request, scenario, gains, monte_carlo):
    base, runs, term, _ = monte_carlo
    pos_bound = term.radius + scenario.d_bound / math.sqrt(gains.alpha_min)
    vel_bound = term.radius + 2 * scenario.d_bound / math.sqrt(gains.alpha_min)
    violations = 0
    worst_p = worst_v = 0.0
    tail = 0.0
    for r in runs:
        a = r.arrival_index
        p = np.linalg.norm(r.real[a:, :2] - term.chi_d, axis=1)
        v = np.linalg.norm(r.real[a:, 2:], axis=1)
        tail = r.times[-1] - r.times[a]
        violations += int(np.sum(p > pos_bound + INTEGRATION_TOL) + np.sum(v > vel_bound + INTEGRATION_TOL))
        worst_p, worst_v = max(worst_p, p.max()), max(worst_v, v.max())
    ok = violations == 0 and tail >= 2.0 - 1e-9
    report(request, 4, ok,
           f"{len(runs)} runs, {tail:.1f} s tails, {violations} violations; "
           f"max |chi-chi_d| {worst_p:.4f} <= {pos_bound:.4f}, max |v| {worst_v:.4f} <= {vel_bound:.4f}")


def test_criterion_5_geometry_oracle(request):
    rng = np.random.default_rng(5)
    agree = sum(erosion_case(rng, case) for case in range(500))
    report(request, 5, agree == 500, f"{agree}/500 cases agree with the 200x200 grid oracle")


def test_criterion_6_mitl_oracle(request):
    rng = random.Random(6)
    t = time.perf_counter()
    disagree = 0
    for _ in range(10_000):
        nf = validate_fragment(parse(random_formula(rng)))
        tba = build_tba(nf)
        word = random_word(rng, max_len=8)
        disagree += accepts(tba, word) != brute_force_satisfies(nf, word)
    runtime = time.perf_counter() - t
    report(request, 6, disagree == 0 and runtime <= 60,
           f"10000 formula/word pairs, {disagree} disagreements, {runtime:.1f} s")


def test_criterion_7_synthesis_optimality(request):
    rng = random.Random(7)
    mismatches = sum(not check_instance(rng) for _ in range(200))
    report(request, 7, mismatches == 0, f"200 instances, {mismatches} mismatches")


def test_criterion_8_nominal_convergence(request, scenario, gains, config):
    res = navigate(scenario, scenario.model, gains, config, *MC_LEG, tail=2.0)
    _, term = leg_setup(scenario, scenario.model, gains, config, *MC_LEG)
    xd = np.concatenate([term.chi_d, np.zeros(2)])
    xi = res.nominal - xd
    level = np.sqrt(np.einsum("ij,jk,ik->i", xi, term.P, xi))
    inside = level <= term.epsilon * (1 + 1e-9)
    entered = bool(inside.any())
    first = int(np.argmax(inside)) if entered else None
    stays = entered and bool(inside[first:].all())
    costs = np.asarray(res.solver["cost_trace"])
    rises = np.diff(costs) > 1e-6 * np.abs(costs[:-1])
    ok = res.feasible and stays and not rises.any()
    t_in = res.times[first] if entered else float("nan")
    report(request, 8, ok,
           f"epsilon {term.epsilon:.4g}; enters F at t={t_in:.2f} s and stays; {len(costs)} solves, "
           f"{int(rises.sum())} cost increases")


def test_criterion_9_determinism(request, scenario, end_to_end):
    wts, _, plan, _, _ = end_to_end
    wts2, _, plan2, _ = _pipeline(scenario)
    same_wts = wts.dumps() == wts2.dumps()
    same_plan = plan is not None and plan2 is not None and plan.dumps() == plan2.dumps()
    report(request, 9, same_wts and same_plan,
           f"WTS JSON identical: {same_wts}; plan JSON identical: {same_plan}")
