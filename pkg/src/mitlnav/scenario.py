"""Scenario files: workspace, labeled regions, model, task and solver settings.

Scenarios are YAML documents.  Numbers that feed exact clock arithmetic
(``h``, ``T``) may be written as decimals or ``p/q`` strings and are turned
into :class:`fractions.Fraction` through their decimal text, so ``0.1`` is
exactly one tenth.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .dynamics import DisturbanceSignal, RobotModel, make_model
from .geometry import Ball, Box


class ScenarioError(ValueError):
    def __init__(self, path, message):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


def to_fraction(value, path="") -> Fraction:
    """Exact rational from an int, a decimal literal or a ``p/q`` string."""
    if isinstance(value, bool):
        raise ScenarioError(path, "expected a number")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, float, str)):
        try:
            return Fraction(str(value).strip())
        except (ValueError, ZeroDivisionError):
            pass
    raise ScenarioError(path, f"cannot read {value!r} as an exact rational")


def _vector(value, path, n=None):
    try:
        arr = np.asarray([float(to_fraction(x, path)) for x in value], float)
    except TypeError:
        raise ScenarioError(path, "expected a list of numbers") from None
    if n is not None and arr.shape != (n,):
        raise ScenarioError(path, f"expected {n} entries, got {arr.size}")
    return arr


def _positive(value, path):
    x = float(to_fraction(value, path))
    if not x > 0:
        raise ScenarioError(path, "must be positive")
    return x


@dataclass(frozen=True)
class Roi:
    id: str
    ball: Ball
    labels: frozenset

    @property
    def center(self):
        return self.ball.center

    @property
    def radius(self):
        return self.ball.radius


@dataclass
class Scenario:
    name: str
    workspace: Box
    robot_radius: float
    rois: dict
    model: RobotModel
    model_spec: dict
    disturbance_spec: dict
    d_bound: float
    initial_position: np.ndarray
    initial_velocity: np.ndarray
    formula: str
    fhocp: dict
    gains: dict
    tube: dict
    navigation: dict
    abstraction: dict
    lipschitz: Optional[float] = None
    j_lower: Optional[float] = None
    seed: int = 0
    raw: dict = field(default_factory=dict, repr=False)

    # -- derived views -------------------------------------------------------
    @property
    def regions(self) -> dict:
        return {rid: r.ball for rid, r in self.rois.items()}

    @property
    def labels(self) -> dict:
        return {rid: r.labels for rid, r in self.rois.items()}

    @property
    def alphabet(self) -> frozenset:
        out = set()
        for r in self.rois.values():
            out |= r.labels
        return frozenset(out)

    @property
    def h(self) -> Fraction:
        return self.fhocp["h"]

    def initial_region(self) -> str:
        """The region whose interior strictly contains the robot's initial ball."""
        for rid, r in self.rois.items():
            if np.linalg.norm(self.initial_position - r.center) + self.robot_radius < r.radius:
                return rid
        raise ScenarioError("initial.position",
                            "the robot's initial ball is not strictly inside any region")

    def unsafe_regions(self) -> list:
        bad = set(self.abstraction.get("exclude_labels", ()))
        return [rid for rid, r in self.rois.items() if r.labels & bad]

    def fhocp_config(self):
        from .fhocp import FhocpConfig
        c = self.fhocp
        return FhocpConfig(h=c["h"], T=c["T"], Q=np.diag(c["Q"]), R=np.diag(c["R"]),
                           P=None if c["P"] is None else np.asarray(c["P"], float),
                           n_sub=c["n_sub"], beta=c["beta"], max_iter=c["max_iter"],
                           init=c["init"])

    def design(self):
        from .tube import design_gains
        L = self.lipschitz if self.lipschitz is not None else self.model.lipschitz_L
        J = self.j_lower if self.j_lower is not None else self.model.j_lower
        if L is None or J is None:
            from .dynamics import estimate_j_lower, estimate_lipschitz
            if L is None:
                L = estimate_lipschitz(self.model, workspace=self.workspace, seed=self.seed)[2]
            if J is None:
                J = estimate_j_lower(self.model, workspace=self.workspace, seed=self.seed).value
        return design_gains(L, J, self.d_bound, self.gains["rho_margin"], self.gains["k_margin"])

    def make_disturbance(self, kind=None, seed=None) -> DisturbanceSignal:
        spec = dict(self.disturbance_spec)
        if kind is not None:
            spec["kind"] = kind
        return DisturbanceSignal(kind=spec.get("kind", "zero"), bound=self.d_bound, n=self.model.n,
                                 seed=self.seed if seed is None else seed,
                                 hold=spec.get("hold", 0.01), direction=spec.get("direction"))

    def digest(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_DEFAULTS = {
    "fhocp": {"P": "lyapunov", "beta": 1.05, "n_sub": 10, "max_iter": 200, "init": "nominal"},
    "gains": {"rho_margin": 1.2, "k_margin": 1.1},
    "tube": {"mode": "guaranteed", "input_reserve": 0.0},
    "navigation": {"timeout": 60, "tail": 2, "stall_window": 3},
    "disturbance": {"kind": "zero"},
    "seed": 0,
}


def _require(doc, key, path=""):
    if key not in doc:
        raise ScenarioError(f"{path}{key}", "missing required field")
    return doc[key]


def parse_scenario(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("", "scenario must be a mapping")
    raw = copy.deepcopy(doc)
    name = str(doc.get("name", "scenario"))

    ws = _require(doc, "workspace")
    lower = _vector(_require(ws, "lower", "workspace."), "workspace.lower")
    upper = _vector(_require(ws, "upper", "workspace."), "workspace.upper", lower.size)
    try:
        workspace = Box(lower, upper)
    except ValueError as exc:
        raise ScenarioError("workspace", str(exc)) from None
    n = workspace.dim
    robot_radius = _positive(_require(doc, "robot_radius"), "robot_radius")

    mspec = doc.get("model", {"name": "paper"})
    if isinstance(mspec, str):
        mspec = {"name": mspec}
    try:
        model = make_model(mspec["name"], **(mspec.get("params") or {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError("model", str(exc)) from None
    if model.n != n:
        raise ScenarioError("model", f"model dimension {model.n} does not match workspace {n}")

    d_bound = float(to_fraction(_require(doc, "d_bound"), "d_bound"))
    if d_bound < 0:
        raise ScenarioError("d_bound", "must be nonnegative")
    dist = {**_DEFAULTS["disturbance"], **(doc.get("disturbance") or {})}
    if dist["kind"] not in DisturbanceSignal.KINDS + ("random", "paper"):
        raise ScenarioError("disturbance.kind", f"unknown kind {dist['kind']!r}")

    rois = {}
    for i, item in enumerate(_require(doc, "rois")):
        p = f"rois[{i}]."
        rid = str(_require(item, "id", p))
        if rid in rois:
            raise ScenarioError(p + "id", f"duplicate region id {rid!r}")
        center = _vector(_require(item, "center", p), p + "center", n)
        radius = _positive(_require(item, "radius", p), p + "radius")
        if radius <= robot_radius:
            raise ScenarioError(p + "radius",
                                f"region radius {radius} must exceed the robot radius {robot_radius}")
        labels = frozenset(str(s) for s in (item.get("labels") or ()))
        rois[rid] = Roi(rid, Ball(center, radius), labels)
    if not rois:
        raise ScenarioError("rois", "at least one region is required")

    init = _require(doc, "initial")
    pos = _vector(_require(init, "position", "initial."), "initial.position", n)
    vel = _vector(init.get("velocity", [0] * n), "initial.velocity", n)
    if not workspace.contains(pos):
        raise ScenarioError("initial.position", "outside the workspace")

    formula = _require(doc, "formula")
    if not isinstance(formula, str) or not formula.strip():
        raise ScenarioError("formula", "expected a non-empty string")

    fh = {**_DEFAULTS["fhocp"], **_require(doc, "fhocp")}
    h = to_fraction(_require(fh, "h", "fhocp."), "fhocp.h")
    T = to_fraction(_require(fh, "T", "fhocp."), "fhocp.T")
    if not (0 < h < T) or (T / h).denominator != 1:
        raise ScenarioError("fhocp", "need 0 < h < T with T a multiple of h")
    Q = _vector(_require(fh, "Q", "fhocp."), "fhocp.Q", 2 * n)
    R = _vector(_require(fh, "R", "fhocp."), "fhocp.R", n)
    if np.any(Q <= 0) or np.any(R <= 0):
        raise ScenarioError("fhocp", "Q and R diagonals must be positive")
    P = fh["P"]
    if isinstance(P, str):
        if P != "lyapunov":
            raise ScenarioError("fhocp.P", "expected 'lyapunov' or a diagonal")
        P = None
    else:
        P = np.diag(_vector(P, "fhocp.P", 2 * n))
    if fh["init"] not in ("nominal", "measured"):
        raise ScenarioError("fhocp.init", "expected 'nominal' or 'measured'")
    fhocp = {"h": h, "T": T, "Q": Q, "R": R, "P": P, "beta": float(fh["beta"]),
             "n_sub": int(fh["n_sub"]), "max_iter": int(fh["max_iter"]), "init": fh["init"]}

    gains = {**_DEFAULTS["gains"], **(doc.get("gains") or {})}
    for key in ("rho_margin", "k_margin"):
        gains[key] = float(gains[key])
        if gains[key] <= 1:
            raise ScenarioError(f"gains.{key}", "must exceed 1")
    tube = {**_DEFAULTS["tube"], **(doc.get("tube") or {})}
    if tube["mode"] not in ("guaranteed", "monitor"):
        raise ScenarioError("tube.mode", "expected 'guaranteed' or 'monitor'")
    tube["input_reserve"] = float(tube["input_reserve"])
    nav = {**_DEFAULTS["navigation"], **(doc.get("navigation") or {})}
    for key in ("timeout", "tail", "stall_window"):
        nav[key] = float(to_fraction(nav[key], f"navigation.{key}"))
    abstraction = dict(doc.get("abstraction") or {})
    abstraction.setdefault("exclude_labels", ["obs"])

    def _opt(key):
        return None if doc.get(key) is None else _positive(doc[key], key)

    return Scenario(
        name=name, workspace=workspace, robot_radius=robot_radius, rois=rois, model=model,
        model_spec=dict(mspec), disturbance_spec=dist, d_bound=d_bound,
        initial_position=pos, initial_velocity=vel, formula=formula, fhocp=fhocp,
        gains=gains, tube=tube, navigation=nav, abstraction=abstraction,
        lipschitz=_opt("lipschitz"), j_lower=_opt("j_lower"),
        seed=int(doc.get("seed", 0)), raw=raw)


BUNDLED = ("paper_s5",)


def load_scenario(path) -> Scenario:
    """Load a scenario file, or a bundled scenario by name (e.g. ``paper_s5``)."""
    p = Path(path)
    if not p.exists() and str(path) in BUNDLED:
        text = resources.files("mitlnav.data").joinpath(f"{path}.yaml").read_text()
    else:
        try:
            text = p.read_text()
        except OSError as exc:
            raise ScenarioError("", f"cannot read scenario {path}: {exc}") from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError("", f"not valid YAML: {exc}") from None
    return parse_scenario(doc)
