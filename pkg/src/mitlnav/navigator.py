"""Point-to-point navigation legs and transition-duration measurement.

A leg drives the robot from rest in a source region to the centre of a
destination region with the tube controller: the receding-horizon solver
plans for the nominal system and the ancillary feedback keeps the real,
disturbed system near it.  The leg ends at the first sampling instant at
which the nominal state is within ``epsilon / sqrt(lambda_min(P))`` of the
target in both position and velocity; that instant, an exact multiple of
``h``, is the transition duration.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from . import kernels
from .dynamics import DisturbanceSignal, RobotModel, StateTrajectory
from .fhocp import (FhocpConfig, InfeasibleFhocp, RecedingHorizonController,
                    TerminalDesignError, TerminalIngredients, terminal_ingredients)
from .geometry import EmptySetError
from .tube import TubeGains, tighten

log = logging.getLogger(__name__)

CHECK_TOL = 1e-6


class InfeasibleStart(ValueError):
    """The start state does not put the robot inside the source region."""


class LegStalled(RuntimeError):
    pass


@dataclass
class Assumption4Report:
    ok: bool
    required_gap: float
    failing: list = field(default_factory=list)

    def __bool__(self):
        return self.ok


def check_assumption4(scenario, gains: TubeGains) -> Assumption4Report:
    """Every pair of regions must leave room for the robot plus its tube between them."""
    gap = 2.0 * scenario.robot_radius + 2.0 * gains.r_e
    failing = []
    ids = list(scenario.rois)
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            ra, rb = scenario.rois[a], scenario.rois[b]
            clearance = float(np.linalg.norm(ra.center - rb.center)) - ra.radius - rb.radius
            if not clearance > gap:
                failing.append((a, b, clearance))
    return Assumption4Report(not failing, gap, failing)


def steady_state_reached(nominal_state, chi_d, P, epsilon) -> bool:
    n = len(chi_d)
    x = np.asarray(nominal_state, float)
    bound = epsilon / math.sqrt(float(np.min(np.linalg.eigvalsh(P))))
    return bool(np.linalg.norm(x[:n] - np.asarray(chi_d, float)) <= bound
                and np.linalg.norm(x[n:]) <= bound)


@dataclass
class TransitionResult:
    """One navigation leg.

    Node arrays are sampled at every integration step; ``u``, ``ubar`` and
    ``d`` in row ``i`` are the values held over ``[t_i, t_{i+1})`` (the last
    row repeats the one before it).
    """

    source: str
    dest: str
    duration: Optional[Fraction]
    feasible: bool
    violations: list
    steps: int
    t0: float
    times: np.ndarray
    real: np.ndarray
    nominal: np.ndarray
    u: np.ndarray
    ubar: np.ndarray
    d: np.ndarray
    nominal_controls: np.ndarray
    n_sub: int
    h: Fraction
    chi_d: np.ndarray
    bounds: dict = field(default_factory=dict)
    tube: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    terminal: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def real_traj(self) -> StateTrajectory:
        return StateTrajectory(self.times, self.real)

    @property
    def nominal_traj(self) -> StateTrajectory:
        return StateTrajectory(self.times, self.nominal)

    @property
    def arrival_index(self) -> int:
        return self.steps * self.n_sub

    @property
    def end_state(self) -> np.ndarray:
        """Real state at the reported duration."""
        return self.real[min(self.arrival_index, len(self.real) - 1)].copy()

    def summary(self) -> dict:
        return {
            "source": self.source, "dest": self.dest,
            "duration": None if self.duration is None else str(self.duration),
            "feasible": self.feasible, "violations": list(self.violations),
            "warnings": list(self.warnings), "bounds": self.bounds, "tube": self.tube,
            "solver": self.solver, "terminal": self.terminal,
        }


def _disturbance_rows(disturbance, t_start, dt, n_sub, n):
    if disturbance is None:
        return np.zeros((n_sub, n))
    return np.array([disturbance(t_start + s * dt) for s in range(n_sub)])


def _simulate(model, gains, x0, xbar0, t0, h, n_sub, planner: Callable, disturbance,
              stop: Callable, max_steps: int, tail_steps: int):
    """Shared sampling loop.  ``planner(k, xbar, x)`` returns ``ubar`` for step k.

    Runs until ``stop(k, xbar)`` fires (then ``tail_steps`` more) or
    ``max_steps`` is exhausted.  Returns the node arrays and the firing step.
    """
    n = model.n
    dt = float(h) / n_sub
    lo, hi = model.input_box.lower, model.input_box.upper
    x, xbar = np.asarray(x0, float), np.asarray(xbar0, float)
    chunks_X, chunks_U, chunks_Ub, chunks_D, ubars = [np.concatenate([x, xbar])[None]], [], [], [], []
    fired = None
    k = 0
    reason = None
    while True:
        if fired is None and k >= max_steps:
            reason = "timeout"
            break
        if fired is not None and k >= fired + tail_steps:
            break
        try:
            ubar = planner(k, xbar, x)
        except InfeasibleFhocp as exc:
            reason = f"infeasible FHOCP at t={t0 + k * float(h):.2f}: {exc}"
            break
        except LegStalled as exc:
            reason = str(exc)
            break
        t_k = t0 + float(k * h)
        D = _disturbance_rows(disturbance, t_k, dt, n_sub, n)
        X, Uapp = kernels.track(model, x, xbar, ubar, gains.k, lo, hi, D, dt)
        if not np.all(np.isfinite(X)):
            reason = f"non-finite state at t={t_k:.2f}"
            break
        chunks_X.append(X[1:])
        chunks_U.append(Uapp)
        chunks_Ub.append(np.tile(ubar, (n_sub, 1)))
        chunks_D.append(D)
        ubars.append(np.asarray(ubar, float))
        x, xbar = X[-1, :2 * n].copy(), X[-1, 2 * n:].copy()
        k += 1
        if fired is None and stop(k, xbar):
            fired = k
    Z = np.vstack(chunks_X)
    m = Z.shape[0]
    times = t0 + np.arange(m) * dt
    if chunks_U:
        U = np.vstack(chunks_U + [chunks_U[-1][-1:]])
        Ub = np.vstack(chunks_Ub + [chunks_Ub[-1][-1:]])
        Dd = np.vstack(chunks_D + [chunks_D[-1][-1:]])
    else:
        U = Ub = Dd = np.zeros((1, n))
    return times, Z[:, :2 * n], Z[:, 2 * n:], U, Ub, Dd, np.array(ubars).reshape(-1, n), fired, reason


def _assess(scenario, gains, terminal: TerminalIngredients, source, dest, times, real, nominal,
            fired, n_sub, check_tube=True):
    """Safety, arrival, tube and tail-bound checks on a simulated leg."""
    n = scenario.model.n
    rr = scenario.robot_radius
    violations, warnings = [], []
    chi = real[:, :n]
    ws = scenario.workspace
    inside = np.all((chi >= ws.lower + rr - CHECK_TOL) & (chi <= ws.upper - rr + CHECK_TOL), axis=1)
    if not np.all(inside):
        i = int(np.argmin(inside))
        violations.append(f"robot leaves the workspace at t={times[i]:.3f}")
    contacts = []
    for rid, roi in scenario.rois.items():
        if rid in (source, dest):
            continue
        dist = np.linalg.norm(chi - roi.center, axis=1)
        i = int(np.argmin(dist))
        if dist[i] <= roi.radius + rr - 1e-9:
            contacts.append(rid)
            violations.append(f"robot touches region {rid} at t={times[i]:.3f}")
    e_err = np.linalg.norm(real[:, :n] - nominal[:, :n], axis=1)
    v_err = np.linalg.norm(real[:, n:] - nominal[:, n:], axis=1)
    tube = {"max_e": float(e_err.max()), "max_v": float(v_err.max()),
            "r_e": gains.r_e, "r_v": gains.r_v,
            "ok": bool(e_err.max() <= gains.r_e + CHECK_TOL and v_err.max() <= gains.r_v + CHECK_TOL)}
    if check_tube and not tube["ok"]:
        violations.append(f"real state leaves the tube (max |e~|={tube['max_e']:.4g}, "
                          f"max |v~|={tube['max_v']:.4g})")
    dest_roi = scenario.rois[dest]
    pos_bound = terminal.radius + gains.r_e
    vel_bound = terminal.radius + gains.r_v
    bounds = {"position": pos_bound, "velocity": vel_bound, "contacts": contacts}
    if dest_roi.radius <= rr + pos_bound:
        warnings.append(f"region {dest} (radius {dest_roi.radius}) is too small for the robot "
                        f"plus the steady-state bound {pos_bound:.4g}")
    if fired is not None:
        a = fired * n_sub
        gap = dest_roi.radius - rr - float(np.linalg.norm(chi[a] - dest_roi.center))
        bounds["arrival_clearance"] = gap
        if not gap > 0:
            violations.append(f"robot is not strictly inside {dest} at the reported time")
        tail_pos = np.linalg.norm(chi[a:] - terminal.chi_d, axis=1)
        tail_vel = np.linalg.norm(real[a:, n:], axis=1)
        bounds["max_tail_position"] = float(tail_pos.max())
        bounds["max_tail_velocity"] = float(tail_vel.max())
        bounds["tail_seconds"] = float(times[-1] - times[a])
        if tail_pos.max() > pos_bound + CHECK_TOL or tail_vel.max() > vel_bound + CHECK_TOL:
            violations.append("steady-state bounds violated after arrival")
    return violations, warnings, tube, bounds


def leg_setup(scenario, model, gains, config: FhocpConfig, source, dest):
    """Tightened sets and terminal ingredients for one leg."""
    ts = tighten(scenario, gains, source, dest)
    dest_roi = scenario.rois[dest]
    cap = dest_roi.radius - scenario.robot_radius - gains.r_e
    if cap <= 0:
        raise TerminalDesignError(f"region {dest} cannot hold the robot plus its tube",
                                  condition="radius")
    term = terminal_ingredients(model, dest_roi.center, config.Q, config.R, ts.u_box, ts,
                                beta=config.beta, P=config.P, radius_cap=0.999 * cap)
    return ts, term


def navigate(scenario, model: RobotModel, gains: TubeGains, config: FhocpConfig, source: str,
             dest: str, start_state=None, disturbance: Optional[DisturbanceSignal] = None, *,
             t0: float = 0.0, tail: Optional[float] = None, timeout: Optional[float] = None,
             nominal_start=None, check_tube: Optional[bool] = None) -> TransitionResult:
    """Drive the robot from ``source`` to ``dest``.

    ``start_state`` is the real ``(chi, v)`` (default: source centre at
    rest).  The nominal system starts at ``nominal_start`` (default: the
    real start, so the tube error starts at zero).  ``tail`` seconds of
    control continue after arrival to check the steady-state bounds.
    """
    n = model.n
    src, dst = scenario.rois[source], scenario.rois[dest]
    centre = np.concatenate([src.center, np.zeros(n)])
    x0 = centre.copy() if start_state is None else np.asarray(start_state, float)
    if np.linalg.norm(x0[:n] - src.center) + scenario.robot_radius >= src.radius:
        raise InfeasibleStart(f"start position {x0[:n].tolist()} does not put the robot inside {source}")
    xbar0 = x0.copy() if nominal_start is None else np.asarray(nominal_start, float)
    if check_tube is None:
        check_tube = bool(np.allclose(x0, xbar0))
    nav = scenario.navigation
    tail = nav["tail"] if tail is None else tail
    timeout = nav["timeout"] if timeout is None else timeout
    h = config.h
    chi_d = dst.center
    xd = np.concatenate([chi_d, np.zeros(n)])

    def failed(msg, terminal=None):
        log.info("leg %s->%s failed: %s", source, dest, msg)
        return TransitionResult(source, dest, None, False, [msg], 0, t0,
                                np.array([t0]), x0[None], xbar0[None], np.zeros((1, n)),
                                np.zeros((1, n)), np.zeros((1, n)), np.zeros((0, n)),
                                config.n_sub, h, chi_d, terminal=terminal or {})

    try:
        ts, term = leg_setup(scenario, model, gains, config, source, dest)
    except (TerminalDesignError, EmptySetError) as exc:
        return failed(f"leg design failed: {exc}")
    term_info = {"epsilon": term.epsilon, "radius": term.radius, "lambda_min": term.lambda_min,
                 "u_ss": term.u_ss.tolist()}
    ctl = RecedingHorizonController(model, config, ts, term)
    stall_steps = max(1, int(round(nav["stall_window"] / float(h))))
    iterations = []

    def planner(k, xbar, x):
        if config.init == "measured":
            xbar[:] = x
        sol = ctl.step(xbar - xd)
        iterations.append(sol.iterations)
        costs = ctl.cost_trace
        if (not ctl.hard_terminal and len(costs) > stall_steps
                and costs[-1] > (1.0 - 1e-3) * costs[-1 - stall_steps]):
            raise LegStalled(f"no progress towards {dest} for {nav['stall_window']:g} s")
        return sol.controls[0]

    def stop(k, xbar):
        return steady_state_reached(xbar, chi_d, term.P, term.epsilon)

    max_steps = int(math.floor(timeout / float(h)))
    tail_steps = int(round(tail / float(h)))
    times, real, nominal, U, Ub, D, ubars, fired, reason = _simulate(
        model, gains, x0, xbar0, t0, h, config.n_sub, planner, disturbance, stop,
        max_steps, tail_steps)
    violations, warnings, tube, bounds = _assess(scenario, gains, term, source, dest, times, real,
                                                nominal, fired, config.n_sub, check_tube)
    if fired is None:
        violations.insert(0, reason or "timeout")
    elif reason is not None:
        violations.append(f"tail aborted: {reason}")
    costs = ctl.cost_trace
    solver = {"iterations": iterations, "cost_trace": costs,
              "first_terminal_step": ctl.first_terminal_index,
              "backend": kernels.backend_for(model)}
    return TransitionResult(
        source, dest, None if fired is None else fired * h, not violations, violations,
        fired or 0, t0, times, real, nominal, U, Ub, D, ubars, config.n_sub, h, chi_d,
        bounds=bounds, tube=tube, solver=solver, terminal=term_info, warnings=warnings)


def replay(result: TransitionResult, scenario, model, gains, disturbance, start_state=None,
           t0=None) -> TransitionResult:
    """Re-run a leg's real system under another disturbance.

    With nominal initialisation the nominal trajectory and its controls do
    not depend on the disturbance, so replaying the recorded controls is
    the same closed loop as calling :func:`navigate` again.
    """
    t0 = result.t0 if t0 is None else t0
    xbar0 = result.nominal[0].copy()
    x0 = xbar0.copy() if start_state is None else np.asarray(start_state, float)
    ctrls = result.nominal_controls
    fired = result.steps if result.duration is not None else None
    tail_steps = len(ctrls) - (fired or 0)

    def planner(k, xbar, x):
        return ctrls[k]

    times, real, nominal, U, Ub, D, ubars, fired2, reason = _simulate(
        model, gains, x0, xbar0, t0, result.h, result.n_sub, planner, disturbance,
        lambda k, xb: fired is not None and k == fired, len(ctrls), tail_steps)
    _, term = leg_setup(scenario, model, gains, scenario.fhocp_config(), result.source, result.dest)
    violations, warnings, tube, bounds = _assess(scenario, gains, term, result.source, result.dest,
                                                times, real, nominal, fired, result.n_sub,
                                                check_tube=bool(np.allclose(x0, xbar0)))
    if fired is None:
        violations.insert(0, "leg did not arrive")
    return TransitionResult(result.source, result.dest, result.duration, not violations, violations,
                            result.steps, t0, times, real, nominal, U, Ub, D, ubars, result.n_sub,
                            result.h, result.chi_d, bounds=bounds, tube=tube,
                            solver=result.solver, terminal=result.terminal, warnings=warnings)


def csv_columns(n: int) -> list:
    cols = ["t"]
    for prefix in ("chi", "v", "chibar", "vbar", "u", "ubar", "d"):
        cols += [f"{prefix}_{i + 1}" for i in range(n)]
    return cols


def write_trajectory_csv(result: TransitionResult, path):
    """One row per integration node; floats are written round-trip exact."""
    n = result.chi_d.shape[0]
    data = np.column_stack([result.times, result.real, result.nominal, result.u, result.ubar,
                            result.d])
    np.savetxt(path, data, delimiter=",", header=",".join(csv_columns(n)), comments="",
               fmt="%.17g")


def read_trajectory_csv(path) -> dict:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {name: data[:, i] for i, name in enumerate(header)}
