"""Nominal finite-horizon optimal control problem and its receding-horizon loop.

The problem is solved by direct single shooting: piecewise-constant
controls on the sampling grid, RK4 integration with ``n_sub`` steps per
sampling period, and SLSQP on exact forward sensitivities supplied by the
rollout kernel.  State constraints are imposed at every integration node.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.optimize import minimize

from . import kernels
from .dynamics import RobotModel, is_stabilizable, linearize, rk4_step, steady_input
from .tube import TightenedSets

log = logging.getLogger(__name__)

FEAS_TOL = 1e-6


class TerminalDesignError(RuntimeError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


@dataclass
class FhocpConfig:
    h: Fraction
    T: Fraction
    Q: np.ndarray
    R: np.ndarray
    P: Optional[np.ndarray] = None
    n_sub: int = 10
    beta: float = 1.05
    max_iter: int = 200
    tol: float = 1e-6
    init: str = "nominal"

    def __post_init__(self):
        self.h = Fraction(self.h)
        self.T = Fraction(self.T)
        self.Q = np.asarray(self.Q, float)
        self.R = np.asarray(self.R, float)
        if self.P is not None:
            self.P = np.asarray(self.P, float)
        if not (0 < self.h < self.T):
            raise ValueError("need 0 < h < T")
        if (self.T / self.h).denominator != 1:
            raise ValueError("prediction horizon must be a whole number of sampling periods")
        for name in ("Q", "R") + (("P",) if self.P is not None else ()):
            M = getattr(self, name)
            if M.shape[0] != M.shape[1] or np.min(np.linalg.eigvalsh(0.5 * (M + M.T))) <= 0:
                raise ValueError(f"{name} must be square positive definite")
        if self.init not in ("nominal", "measured"):
            raise ValueError("init must be 'nominal' or 'measured'")

    @property
    def N(self) -> int:
        return int(self.T / self.h)

    @property
    def dt(self) -> float:
        return float(self.h) / self.n_sub


@dataclass
class TerminalIngredients:
    P: np.ndarray
    K: np.ndarray
    epsilon: float
    u_ss: np.ndarray
    Q_tilde: np.ndarray
    chi_d: np.ndarray

    @property
    def lambda_min(self) -> float:
        return float(np.min(np.linalg.eigvalsh(self.P)))

    @property
    def radius(self) -> float:
        """Euclidean radius implied by ``||xi||_P <= epsilon``."""
        return self.epsilon / math.sqrt(self.lambda_min)

    def local_input(self, xi) -> np.ndarray:
        return self.u_ss + self.K @ np.asarray(xi, float)


def _error_dynamics(model, chi_d, xi, u):
    n = model.n
    e, v = xi[..., :n], xi[..., n:]
    return np.concatenate([v, model.f(e + chi_d, v, u)], axis=-1)


def _state_ok(xi, n, tightened: Optional[TightenedSets]):
    if tightened is None:
        return np.ones(xi.shape[0], bool)
    e, v = xi[:, :n], xi[:, n:]
    ok = np.all((e >= tightened.e_box_part.lower) & (e <= tightened.e_box_part.upper), axis=1)
    ok &= np.all((v >= tightened.v_box.lower) & (v <= tightened.v_box.upper), axis=1)
    for ball in tightened.e_forbidden:
        ok &= np.linalg.norm(e - ball.center, axis=1) > ball.radius
    return ok


def terminal_ingredients(model: RobotModel, chi_d, Q, R, u_box=None, tightened=None,
                         beta=1.05, samples=1000, seed=0, P=None, radius_cap=None,
                         eps_min=1e-6) -> TerminalIngredients:
    """LQR local gain, Lyapunov terminal weight and the largest admissible level.

    ``epsilon`` is found by bisection so that on sampled points of the
    boundary ``||xi||_P = epsilon`` the local input stays inside ``u_box``,
    the state stays inside the tightened sets and the nonlinear decrease
    ``d/dt ||xi||_P^2 <= -||xi||_{Q + K'RK}^2`` holds.  ``radius_cap``
    optionally bounds ``epsilon / sqrt(lambda_min(P))``.
    """
    n = model.n
    chi_d = np.asarray(chi_d, float)
    Q = np.asarray(Q, float)
    R = np.asarray(R, float)
    u_box = u_box or model.input_box
    try:
        u_ss = steady_input(model, chi_d)
    except ValueError as exc:
        raise TerminalDesignError(str(exc), condition="equilibrium") from exc
    if not u_box.contains(u_ss):
        raise TerminalDesignError(
            f"holding the robot at {chi_d.tolist()} needs input {u_ss.tolist()}, outside U-bar",
            condition="input")
    A, B = linearize(model, chi_d, u_ss)
    if not is_stabilizable(A, B):
        raise TerminalDesignError("linearization at the target is not stabilizable",
                                  condition="stabilizability")
    X = scipy.linalg.solve_continuous_are(A, B, Q, R)
    K = -np.linalg.solve(R, B.T @ X)
    Q_tilde = Q + K.T @ R @ K
    if P is None:
        Acl = A + B @ K
        P = scipy.linalg.solve_continuous_lyapunov(Acl.T, -beta * Q_tilde)
        P = 0.5 * (P + P.T)
    P = np.asarray(P, float)

    rng = np.random.default_rng(seed)
    z = rng.standard_normal((samples, 2 * n))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    Lc = np.linalg.cholesky(P)
    # xi = eps * Lc^{-T} z has ||xi||_P = eps
    dirs = scipy.linalg.solve_triangular(Lc.T, z.T, lower=False).T
    lam_min = float(np.min(np.linalg.eigvalsh(P)))

    def failing(eps):
        xi = eps * dirs
        u = u_ss + xi @ K.T
        if not np.all((u >= u_box.lower - 1e-12) & (u <= u_box.upper + 1e-12)):
            return "input"
        if not np.all(_state_ok(xi, n, tightened)):
            return "state"
        g = _error_dynamics(model, chi_d, xi, u)
        lhs = 2.0 * np.einsum("ij,jk,ik->i", xi, P, g)
        rhs = -np.einsum("ij,jk,ik->i", xi, Q_tilde, xi)
        if np.any(lhs > rhs):
            return "decrease"
        if radius_cap is not None and eps / math.sqrt(lam_min) > radius_cap:
            return "radius"
        return None

    if failing(eps_min) is not None:
        raise TerminalDesignError(
            f"no terminal level above {eps_min:g} ({failing(eps_min)} condition fails)",
            condition=failing(eps_min))
    lo, hi = eps_min, 1.0
    while failing(hi) is None and hi < 1e3:
        lo, hi = hi, 2.0 * hi
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if failing(mid) is None:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-9 * hi:
            break
    return TerminalIngredients(P=P, K=K, epsilon=lo, u_ss=u_ss, Q_tilde=Q_tilde, chi_d=chi_d)


@dataclass
class OcpSolution:
    controls: np.ndarray
    predicted_states: np.ndarray
    nodes: np.ndarray
    cost: float
    feasible: bool
    terminal_ok: bool
    max_violation: float
    iterations: int = 0
    status: str = ""
    used_candidate: bool = False

    @property
    def terminal_state(self) -> np.ndarray:
        return self.predicted_states[-1]


class _Problem:
    """Objective and constraint evaluation for one FHOCP instance."""

    def __init__(self, model, config, tightened, terminal, x0, hard_terminal):
        self.model, self.cfg, self.ts, self.term = model, config, tightened, terminal
        self.n = model.n
        self.x0 = np.asarray(x0, float)
        self.chi_d = np.asarray(tightened.chi_d, float)
        self.xd = np.concatenate([self.chi_d, np.zeros(self.n)])
        self.hard = hard_terminal
        self._key = None
        self._val = None

    def roll(self, z):
        key = z.tobytes()
        if key != self._key:
            U = z.reshape(self.cfg.N, self.n)
            self._val = kernels.rollout(self.model, self.x0, self.chi_d, U, self.term.u_ss,
                                        self.cfg.dt, self.cfg.n_sub, self.cfg.Q, self.cfg.R, True)
            self._key = key
        return self._val

    def objective(self, z):
        traj, c, S, dc = self.roll(z)
        xi = traj[-1] - self.xd
        P = self.term.P
        J = c + xi @ P @ xi
        g = dc + 2.0 * (xi @ P) @ S[-1]
        return J, g

    def constraints(self, z, with_jac=True):
        """Stacked ``c(z) >= 0`` values (and Jacobian) over nodes 1..M."""
        traj, _, S, _ = self.roll(z)
        n = self.n
        X = traj[1:]
        Sn = S[1:]
        e = X[:, :n] - self.chi_d
        v = X[:, n:]
        eb, vb = self.ts.e_box_part, self.ts.v_box
        vals = [(e - eb.lower).ravel(), (eb.upper - e).ravel(),
                (v - vb.lower).ravel(), (vb.upper - v).ravel()]
        if with_jac:
            Se, Sv = Sn[:, :n, :], Sn[:, n:, :]
            nz = Sn.shape[2]
            jacs = [Se.reshape(-1, nz), -Se.reshape(-1, nz), Sv.reshape(-1, nz), -Sv.reshape(-1, nz)]
        for ball in self.ts.e_forbidden:
            diff = e - ball.center
            vals.append(np.einsum("ij,ij->i", diff, diff) - ball.radius**2)
            if with_jac:
                jacs.append(2.0 * np.einsum("ij,ijk->ik", diff, Se))
        if self.hard:
            xi = traj[-1] - self.xd
            vals.append(np.array([self.term.epsilon**2 - xi @ self.term.P @ xi]))
            if with_jac:
                jacs.append((-2.0 * (xi @ self.term.P) @ S[-1])[None, :])
        v_all = np.concatenate(vals)
        if not with_jac:
            return v_all
        return v_all, np.vstack(jacs)


def check_solution(model, config, tightened, terminal, x0, U, hard_terminal, tol=FEAS_TOL):
    """Re-integrate ``U`` with :func:`rk4_step` and test every constraint.

    Independent of the rollout kernel used inside the optimizer.  Returns
    ``(state_violation, terminal_violation, node_states)``.
    """
    n = model.n
    chi_d = np.asarray(tightened.chi_d, float)
    chi, v = np.asarray(x0[:n], float), np.asarray(x0[n:], float)
    zero = np.zeros(n)
    worst = 0.0
    nodes = [np.concatenate([chi, v])]
    ub = tightened.u_box
    for u in U:
        worst = max(worst, float(np.max(ub.lower - u)), float(np.max(u - ub.upper)))
        for _ in range(config.n_sub):
            chi, v = rk4_step(model, chi, v, u, zero, config.dt)
            e = chi - chi_d
            worst = max(worst,
                        float(np.max(tightened.e_box_part.lower - e)),
                        float(np.max(e - tightened.e_box_part.upper)),
                        float(np.max(tightened.v_box.lower - v)),
                        float(np.max(v - tightened.v_box.upper)))
            for ball in tightened.e_forbidden:
                worst = max(worst, ball.radius - float(np.linalg.norm(e - ball.center)))
        nodes.append(np.concatenate([chi, v]))
    xi = nodes[-1] - np.concatenate([chi_d, zero])
    term_violation = max(0.0, math.sqrt(max(xi @ terminal.P @ xi, 0.0)) - terminal.epsilon)
    return max(worst, 0.0), term_violation, np.array(nodes)


def solve(model: RobotModel, config: FhocpConfig, tightened: TightenedSets,
          xi_init, terminal: TerminalIngredients, warm_start=None, hard_terminal=True,
          keep_warm_start="if_infeasible") -> OcpSolution:
    """Solve one FHOCP from the error state ``xi_init``.

    ``hard_terminal=False`` drops the terminal-set constraint (the terminal
    cost stays); the returned ``terminal_ok`` then reports whether the
    optimum happens to end inside the terminal set anyway.

    ``keep_warm_start`` decides when a feasible warm start beats the
    optimizer's answer: ``"if_infeasible"`` (the optimizer ended infeasible)
    or ``"if_better"`` (also when its cost is higher).  If neither the warm
    start nor the warm-started run is feasible, one cold restart from the
    equilibrium input is tried.
    """
    n, N = model.n, config.N
    chi_d = np.asarray(tightened.chi_d, float)
    x0 = np.asarray(xi_init, float) + np.concatenate([chi_d, np.zeros(n)])
    if not np.all(np.isfinite(x0)):
        raise ValueError("initial state is not finite")
    ub = tightened.u_box
    lo, hi = np.tile(ub.lower, N), np.tile(ub.upper, N)
    cold = np.tile(ub.clip(terminal.u_ss), N)
    z0 = cold if warm_start is None else np.clip(np.asarray(warm_start, float).ravel(), lo, hi)
    prob = _Problem(model, config, tightened, terminal, x0, hard_terminal)
    bounds = list(zip(lo, hi))

    def cfun(z):
        return prob.constraints(z, with_jac=False)

    def cjac(z):
        return prob.constraints(z)[1]

    def run(start):
        res = minimize(prob.objective, start, jac=True, method="SLSQP", bounds=bounds,
                       constraints=[{"type": "ineq", "fun": cfun, "jac": cjac}],
                       options={"maxiter": config.max_iter, "ftol": config.tol * 1e-3})
        z = np.clip(res.x, lo, hi)
        return z, prob.objective(z)[0], max(0.0, -float(np.min(cfun(z)))), res

    z, J, viol, res = run(z0)
    iterations = int(res.nit)
    status = str(res.message)
    used_candidate = False
    J0 = prob.objective(z0)[0]
    viol0 = max(0.0, -float(np.min(cfun(z0))))
    if viol0 <= FEAS_TOL and (viol > FEAS_TOL or (keep_warm_start == "if_better" and J > J0)):
        z, J, viol, used_candidate = z0, J0, viol0, True
    elif viol > FEAS_TOL and warm_start is not None:
        z2, J2, viol2, res2 = run(cold)
        iterations += int(res2.nit)
        if viol2 < viol:
            z, J, viol, status = z2, J2, viol2, str(res2.message)
    U = z.reshape(N, n)
    state_viol, term_viol, nodes = check_solution(model, config, tightened, terminal, x0, U,
                                                  hard_terminal)
    xd = np.concatenate([chi_d, np.zeros(n)])
    traj = prob.roll(z)[0]
    return OcpSolution(
        controls=U,
        predicted_states=nodes - xd,
        nodes=traj - xd,
        cost=float(J),
        feasible=state_viol <= FEAS_TOL and (term_viol <= FEAS_TOL or not hard_terminal),
        terminal_ok=term_viol <= FEAS_TOL,
        max_violation=max(state_viol, term_viol if hard_terminal else 0.0),
        iterations=iterations,
        status=status,
        used_candidate=used_candidate,
    )


class InfeasibleFhocp(RuntimeError):
    pass


@dataclass
class RecedingHorizonController:
    """Stateful receding-horizon wrapper around :func:`solve`.

    Until the first solution that ends inside the terminal set, the terminal
    constraint is left out (approach phase); from then on it is enforced and
    each solve is warm-started from the shifted previous solution with the
    local controller appended, which is also kept as a fallback whenever the
    optimizer returns something worse.
    """

    model: RobotModel
    config: FhocpConfig
    tightened: TightenedSets
    terminal: TerminalIngredients
    hard_terminal: bool = False
    cost_trace: list = field(default_factory=list)
    terminal_trace: list = field(default_factory=list)
    first_terminal_index: Optional[int] = None
    _prev: Optional[OcpSolution] = None

    def _shifted(self):
        prev = self._prev
        xi_end = prev.nodes[-1]
        tail = self.tightened.u_box.clip(self.terminal.local_input(xi_end))
        return np.vstack([prev.controls[1:], tail])

    def step(self, xi_nominal) -> OcpSolution:
        warm = self._shifted() if self._prev is not None else None
        sol = solve(self.model, self.config, self.tightened, xi_nominal, self.terminal,
                    warm_start=warm, hard_terminal=self.hard_terminal,
                    keep_warm_start="if_better" if self.hard_terminal else "if_infeasible")
        if sol.max_violation > FEAS_TOL:
            raise InfeasibleFhocp(
                f"FHOCP infeasible (max constraint violation {sol.max_violation:.3g}, {sol.status})")
        if not self.hard_terminal and sol.terminal_ok:
            self.hard_terminal = True
            self.first_terminal_index = len(self.cost_trace)
        self.cost_trace.append(sol.cost)
        self.terminal_trace.append(sol.terminal_ok)
        self._prev = sol
        return sol

    def reset_warm_start(self):
        self._prev = None
