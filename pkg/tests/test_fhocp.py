import numpy as np
import pytest

from mitlnav.dynamics import double_integrator, linear_model, paper_model
from mitlnav.fhocp import (FhocpConfig, InfeasibleFhocp, RecedingHorizonController,
                           TerminalDesignError, check_solution, solve, terminal_ingredients)
from mitlnav.geometry import Box
from mitlnav.navigator import leg_setup
from mitlnav.tube import tighten


@pytest.fixture(scope="module")
def leg(scenario, gains, config):
    ts, term = leg_setup(scenario, scenario.model, gains, config, "R1", "R3")
    return ts, term


def _decrease_margin(model, term, pts):
    n = model.n
    u = term.u_ss + pts @ term.K.T
    e, v = pts[:, :n], pts[:, n:]
    g = np.concatenate([v, model.f(e + term.chi_d, v, u)], axis=1)
    lhs = 2 * np.einsum("ij,jk,ik->i", pts, term.P, g)
    rhs = -np.einsum("ij,jk,ik->i", pts, term.Q_tilde, pts)
    return rhs - lhs


def test_terminal_decrease_on_fresh_samples(scenario, leg):
    # independent draw (different seed) filling the whole terminal set
    ts, term = leg
    rng = np.random.default_rng(123)
    z = rng.standard_normal((1000, 4))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    z *= rng.random(1000)[:, None] ** 0.25
    L = np.linalg.cholesky(term.P)
    pts = term.epsilon * np.linalg.solve(L.T, z.T).T
    assert np.all(np.sqrt(np.einsum("ij,jk,ik->i", pts, term.P, pts)) <= term.epsilon + 1e-12)
    assert np.all(_decrease_margin(scenario.model, term, pts) >= -1e-12)
    u = term.u_ss + pts @ term.K.T
    assert np.all((u >= ts.u_box.lower) & (u <= ts.u_box.upper))


def test_terminal_set_fits_destination(scenario, gains, leg):
    _, term = leg
    assert term.epsilon > 0
    assert term.radius + gains.r_e + scenario.robot_radius < scenario.rois["R3"].radius


def test_lyapunov_weight_solves_equation(leg):
    _, term = leg
    from mitlnav.dynamics import linearize
    A, B = linearize(paper_model(), term.chi_d, term.u_ss)
    Acl = A + B @ term.K
    assert np.allclose(Acl.T @ term.P + term.P @ Acl, -1.05 * term.Q_tilde, atol=1e-9)


def test_identity_weight_has_no_terminal_set(scenario, gains, config):
    ts = tighten(scenario, gains, "R1", "R3")
    with pytest.raises(TerminalDesignError) as info:
        terminal_ingredients(scenario.model, scenario.rois["R3"].center, config.Q, config.R,
                             ts.u_box, ts, P=np.eye(4))
    assert info.value.condition == "decrease"


def test_double_integrator_terminal():
    m = double_integrator(input_bound=2.0)
    term = terminal_ingredients(m, [0, 0], np.eye(4), 0.5 * np.eye(2))
    assert term.epsilon > 0
    assert np.all(np.linalg.eigvals(np.block([[np.zeros((2, 2)), np.eye(2)],
                                              [np.zeros((2, 2)), np.zeros((2, 2))]])
                                     + np.vstack([np.zeros((2, 2)), np.eye(2)]) @ term.K).real < 0)


def test_unstabilizable_model_rejected():
    m = linear_model(np.zeros((2, 2)), np.zeros((2, 2)), [[1, 0], [0, 0]],
                     Box([-1, -1], [1, 1]), Box([-1, -1], [1, 1]))
    with pytest.raises(TerminalDesignError):
        terminal_ingredients(m, [0, 0], np.eye(4), np.eye(2))


def test_unholdable_target_rejected(scenario, config):
    m = paper_model()
    with pytest.raises(TerminalDesignError) as info:
        terminal_ingredients(m, [-4.2, 4.2], config.Q, config.R, Box([-1.725] * 2, [1.725] * 2))
    assert info.value.condition == "input"


def test_config_validation():
    with pytest.raises(ValueError):
        FhocpConfig(h="0.1", T="0.15", Q=np.eye(4), R=np.eye(2))
    with pytest.raises(ValueError):
        FhocpConfig(h="0.1", T="1.2", Q=-np.eye(4), R=np.eye(2))
    cfg = FhocpConfig(h="0.1", T="1.2", Q=np.eye(4), R=np.eye(2))
    assert cfg.N == 12 and cfg.dt == pytest.approx(0.01)


def test_solve_at_target_returns_equilibrium(scenario, config, leg):
    ts, term = leg
    sol = solve(scenario.model, config, ts, np.zeros(4), term)
    assert sol.feasible and sol.terminal_ok
    assert sol.cost == pytest.approx(0.0, abs=1e-8)
    assert np.allclose(sol.controls, term.u_ss, atol=1e-6)


def test_solve_from_source_is_feasible(scenario, config, leg):
    ts, term = leg
    xi0 = np.concatenate([scenario.rois["R1"].center - term.chi_d, np.zeros(2)])
    sol = solve(scenario.model, config, ts, xi0, term, hard_terminal=False)
    assert sol.feasible
    assert np.all(np.abs(sol.controls) <= ts.u_box.upper + 1e-9)
    sv, tv, nodes = check_solution(scenario.model, config, ts, term, xi0 + np.r_[term.chi_d, 0, 0],
                                   sol.controls, False)
    assert sv <= 1e-6
    assert np.allclose(nodes - np.r_[term.chi_d, 0, 0], sol.predicted_states)
    assert sol.predicted_states.shape == (config.N + 1, 4)


def test_hard_terminal_far_away_is_infeasible(scenario, config, leg):
    ts, term = leg
    xi0 = np.concatenate([scenario.rois["R1"].center - term.chi_d, np.zeros(2)])
    sol = solve(scenario.model, config, ts, xi0, term, hard_terminal=True)
    assert not sol.feasible and not sol.terminal_ok


def test_receding_horizon_controller_switches_to_hard(scenario, config, leg):
    ts, term = leg
    ctl = RecedingHorizonController(scenario.model, config, ts, term)
    xi = np.array([-0.05, 0.0, 0.0, 0.0])
    sol = ctl.step(xi)
    assert ctl.hard_terminal and ctl.first_terminal_index == 0
    xi2 = sol.nodes[config.n_sub]
    sol2 = ctl.step(xi2)
    assert sol2.cost <= sol.cost * (1 + 1e-6)


def test_controller_raises_when_infeasible(scenario, config, leg):
    ts, term = leg
    ctl = RecedingHorizonController(scenario.model, config, ts, term, hard_terminal=True)
    with pytest.raises(InfeasibleFhocp):
        ctl.step(np.array([-4.8, 0.0, 0.0, 0.0]))
