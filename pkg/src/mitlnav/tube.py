"""Off-line tube design: ancillary gain, tube radii and constraint tightening."""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .geometry import Ball, Box, EmptySetError, erode_box_by_ball, feedback_image_radius, translate_set


@dataclass(frozen=True)
class TubeGains:
    k: float
    rho: float
    alpha1: float
    alpha2: float
    r_e: float
    r_v: float

    @property
    def alpha_min(self) -> float:
        return min(self.alpha1, self.alpha2)

    @property
    def input_radius(self) -> float:
        return feedback_image_radius(self.k, self.r_e, self.r_v)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["alpha_min"] = self.alpha_min
        d["input_radius"] = self.input_radius
        return d


def design_gains(L: float, j_lower: float, d_bound: float,
                 rho_margin: float = 1.2, k_margin: float = 1.1) -> TubeGains:
    """Pick ``rho`` and ``k`` a multiplicative margin above their strict lower bounds.

    ``rho > L/2`` and ``k > ((1 + 2 rho) L + 5/4) / J``; the tube radii are
    ``d / sqrt(min(alpha1, alpha2))`` for positions and twice that for
    velocities.
    """
    if L <= 0 or j_lower <= 0:
        raise ValueError("L and the J lower bound must be positive")
    if d_bound < 0:
        raise ValueError("disturbance bound must be nonnegative")
    if rho_margin <= 1 or k_margin <= 1:
        raise ValueError("gain margins must exceed 1 (the bounds are strict)")
    rho = rho_margin * L / 2.0
    k = k_margin * ((1.0 + 2.0 * rho) * L + 1.25) / j_lower
    alpha1 = 1.0 - L / (2.0 * rho)
    alpha2 = k * j_lower - (1.0 + 2.0 * rho) * L - 1.25
    amin = min(alpha1, alpha2)
    r_e = d_bound / math.sqrt(amin)
    return TubeGains(k=k, rho=rho, alpha1=alpha1, alpha2=alpha2, r_e=r_e, r_v=2.0 * r_e)


def ancillary_feedback(gains: TubeGains, e, v, e_bar, v_bar) -> np.ndarray:
    e, v, e_bar, v_bar = (np.asarray(a, float) for a in (e, v, e_bar, v_bar))
    return -gains.k * (e - e_bar) - gains.k * (v - v_bar)


def tube_contains(gains: TubeGains, e_tilde, v_tilde) -> bool:
    return bool(np.linalg.norm(e_tilde) <= gains.r_e and np.linalg.norm(v_tilde) <= gains.r_v)


@dataclass(frozen=True)
class TightenedSets:
    """Constraint sets for the nominal problem, in error coordinates.

    ``e_box_part`` and ``e_forbidden`` together describe the tightened
    position set; ``forbidden_ids`` names the region behind each ball.
    """

    e_box_part: Box
    e_forbidden: tuple
    v_box: Box
    u_box: Box
    chi_d: np.ndarray
    forbidden_ids: tuple = ()
    mode: str = "guaranteed"

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "e_box_part": {"lower": self.e_box_part.lower.tolist(), "upper": self.e_box_part.upper.tolist()},
            "e_forbidden": [{"id": i, "center": b.center.tolist(), "radius": b.radius}
                            for i, b in zip(self.forbidden_ids, self.e_forbidden)],
            "v_box": {"lower": self.v_box.lower.tolist(), "upper": self.v_box.upper.tolist()},
            "u_box": {"lower": self.u_box.lower.tolist(), "upper": self.u_box.upper.tolist()},
            "chi_d": np.asarray(self.chi_d).tolist(),
        }


def tighten_sets(workspace: Box, robot_radius: float, regions, velocity_box: Box, input_box: Box,
            gains: TubeGains, source: str, dest: str, chi_d, mode: str = "guaranteed",
            input_reserve: float = 0.0) -> TightenedSets:
    """Shrink the state and input sets by the tube.

    ``regions`` maps region id to :class:`Ball`.  In ``guaranteed`` mode the
    input box is eroded by the full feedback image radius ``k (r_e + r_v)``.
    In ``monitor`` mode it is eroded by ``input_reserve`` only; the ancillary
    feedback then saturates at the input bounds and tube containment has to
    be checked on the simulated trajectory instead of being implied.
    """
    chi_d = np.asarray(chi_d, float)
    shift = -chi_d
    inner = erode_box_by_ball(workspace, robot_radius, name="workspace")
    e_box = translate_set(erode_box_by_ball(inner, gains.r_e, name="workspace (E-bar)"), shift)
    ids, balls = [], []
    for rid, ball in regions.items():
        if rid in (source, dest):
            continue
        ids.append(rid)
        balls.append(translate_set(Ball(ball.center, ball.radius + robot_radius + gains.r_e), shift))
    v_box = erode_box_by_ball(velocity_box, gains.r_v, name="V-bar")
    if mode == "guaranteed":
        u_radius = gains.input_radius
    elif mode == "monitor":
        u_radius = float(input_reserve)
    else:
        raise ValueError(f"unknown tube mode {mode!r}")
    try:
        u_box = erode_box_by_ball(input_box, u_radius, name="U-bar")
    except EmptySetError as exc:
        raise EmptySetError(
            f"U-bar is empty: the feedback needs input radius {u_radius:.6g} but the input box "
            f"half-width is only {float(np.min(input_box.half_widths)):.6g}; use smaller gains "
            f"or the monitor tube mode", radius=u_radius, name="U-bar") from exc
    return TightenedSets(e_box, tuple(balls), v_box, u_box, chi_d, tuple(ids), mode)


def tighten(scenario, gains: TubeGains, source: str, dest: str, chi_d=None) -> TightenedSets:
    """:func:`tighten_sets` with everything read off a scenario.

    ``chi_d`` defaults to the destination centre.
    """
    if chi_d is None:
        chi_d = scenario.rois[dest].center
    return tighten_sets(scenario.workspace, scenario.robot_radius, scenario.regions,
                        scenario.model.velocity_box, scenario.model.input_box, gains,
                        source, dest, chi_d, mode=scenario.tube["mode"],
                        input_reserve=scenario.tube["input_reserve"])
