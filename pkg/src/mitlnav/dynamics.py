"""Second-order robot models, integration and disturbance signals.

A model describes ``chi' = v`` and ``v' = f(chi, v, u) + d``; only the
nominal part ``f`` lives on :class:`RobotModel`, the disturbance ``d`` is a
separate :class:`DisturbanceSignal`.  Model functions are written with numpy
broadcasting so they accept single points ``(n,)`` or batches ``(..., n)``.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .geometry import Box

FD_STEP = 1e-6


class ModelBlowUp(FloatingPointError):
    """Integration produced a non-finite state."""


@dataclass(frozen=True, eq=False)
class RobotModel:
    """Nominal dynamics plus the constraint boxes and declared constants.

    ``jac`` (optional) returns ``(df/dchi, df/dv, df/du)`` with shape
    ``(..., n, n)``.  ``kernel_id``/``kernel_params`` identify a compiled
    implementation of the same dynamics; models without one are rolled out
    by the pure-Python kernel.
    """

    name: str
    n: int
    f: Callable
    velocity_box: Box
    input_box: Box
    lipschitz_L: Optional[float] = None
    j_lower: Optional[float] = None
    jac: Optional[Callable] = None
    kernel_id: int = -1
    kernel_params: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        for box, label in ((self.velocity_box, "velocity"), (self.input_box, "input")):
            if box.dim != self.n:
                raise ValueError(f"{label} box has dimension {box.dim}, model has n={self.n}")
            if not box.contains(np.zeros(self.n)):
                raise ValueError(f"{label} box must contain the origin")
        z = np.zeros(self.n)
        if np.linalg.norm(self.f(z, z, z)) > 1e-9:
            raise ValueError(f"model {self.name!r}: f(0, 0, 0) must vanish")

    def accel(self, chi, v, u):
        return self.f(np.asarray(chi, float), np.asarray(v, float), np.asarray(u, float))


# -- built-in models ---------------------------------------------------------

def _paper_f(chi, v, u):
    x, y = chi[..., 0], chi[..., 1]
    u1, u2 = u[..., 0], u[..., 1]
    # (0.1 - 0.1 e^{-x}) / (1 + e^{-x}) == 0.1 tanh(x / 2)
    a1 = 0.25 * x**2 + u1
    a2 = 0.1 * np.tanh(0.5 * x) + 0.25 * y**2 + u2 + 0.1 * u2**3
    return np.stack([a1, a2], axis=-1)


def _paper_jac(chi, v, u):
    x, y = chi[..., 0], chi[..., 1]
    u2 = u[..., 1]
    shape = np.broadcast(x, y, u2).shape
    fx = np.zeros(shape + (2, 2))
    fx[..., 0, 0] = 0.5 * x
    fx[..., 1, 0] = 0.05 / np.cosh(0.5 * x) ** 2
    fx[..., 1, 1] = 0.5 * y
    fv = np.zeros(shape + (2, 2))
    fu = np.zeros(shape + (2, 2))
    fu[..., 0, 0] = 1.0
    fu[..., 1, 1] = 1.0 + 0.3 * u2**2
    return fx, fv, fu


def paper_model(velocity_bound=5.0, input_bound=2.125) -> RobotModel:
    """The planar example: quadratic drift, cubic input nonlinearity on u2."""
    vb = float(velocity_bound)
    ub = float(input_bound)
    return RobotModel(
        name="paper", n=2, f=_paper_f, jac=_paper_jac,
        velocity_box=Box([-vb, -vb], [vb, vb]),
        input_box=Box([-ub, -ub], [ub, ub]),
        lipschitz_L=2.5, j_lower=1.0,
        kernel_id=0, kernel_params=np.zeros(0))


def linear_model(A_chi, A_v, B, velocity_box: Box, input_box: Box, name="linear",
                 lipschitz_L=None, j_lower=None) -> RobotModel:
    """``f = A_chi chi + A_v v + B u``."""
    A_chi, A_v, B = (np.atleast_2d(np.asarray(m, float)) for m in (A_chi, A_v, B))
    n = B.shape[0]

    def f(chi, v, u):
        return chi @ A_chi.T + v @ A_v.T + u @ B.T

    def jac(chi, v, u):
        shape = np.broadcast(chi[..., 0], v[..., 0], u[..., 0]).shape
        return (np.broadcast_to(A_chi, shape + (n, n)).copy(),
                np.broadcast_to(A_v, shape + (n, n)).copy(),
                np.broadcast_to(B, shape + (n, n)).copy())

    params = np.concatenate([A_chi.ravel(), A_v.ravel(), B.ravel()])
    return RobotModel(name=name, n=n, f=f, jac=jac, velocity_box=velocity_box,
                      input_box=input_box, lipschitz_L=lipschitz_L, j_lower=j_lower,
                      kernel_id=1, kernel_params=params)


def double_integrator(n=2, velocity_bound=5.0, input_bound=2.0, gain=1.0) -> RobotModel:
    vb, ub = float(velocity_bound), float(input_bound)
    return linear_model(np.zeros((n, n)), np.zeros((n, n)), gain * np.eye(n),
                        Box(-vb * np.ones(n), vb * np.ones(n)),
                        Box(-ub * np.ones(n), ub * np.ones(n)),
                        name="double_integrator", lipschitz_L=0.0, j_lower=gain)


MODELS = {
    "paper": paper_model,
    "double_integrator": double_integrator,
}


def make_model(name: str, **params) -> RobotModel:
    try:
        factory = MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; known: {sorted(MODELS)}") from None
    return factory(**params)


# -- disturbances ------------------------------------------------------------

class DisturbanceSignal:
    """Bounded additive disturbance ``d(t)`` with ``||d(t)||_2 <= bound``.

    kinds: ``zero``, ``sinusoidal`` (``bound * (cos t, sin t)``, planar),
    ``uniform-random`` (piecewise constant on a ``hold`` grid, uniform in the
    ball, reproducible from ``seed``) and ``constant`` (``bound`` along
    ``direction``).
    """

    KINDS = ("zero", "sinusoidal", "uniform-random", "constant")
    _BLOCK = 4096

    def __init__(self, kind="zero", bound=0.0, n=2, seed=0, hold=0.01, direction=None):
        if kind == "random":
            kind = "uniform-random"
        if kind == "paper":
            kind = "sinusoidal"
        if kind not in self.KINDS:
            raise ValueError(f"unknown disturbance kind {kind!r}")
        if bound < 0:
            raise ValueError("disturbance bound must be nonnegative")
        self.kind, self.bound, self.n, self.seed, self.hold = kind, float(bound), n, seed, hold
        if kind == "sinusoidal" and n != 2:
            raise ValueError("sinusoidal disturbance is defined for n = 2")
        if kind == "constant":
            dvec = np.ones(n) if direction is None else np.asarray(direction, float)
            self._const = self.bound * dvec / np.linalg.norm(dvec)
        self._table = np.zeros((0, n))
        self._rng = np.random.default_rng(seed) if kind == "uniform-random" else None

    def _extend(self, upto: int):
        while self._table.shape[0] <= upto:
            g = self._rng.standard_normal((self._BLOCK, self.n))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            r = self.bound * self._rng.random(self._BLOCK) ** (1.0 / self.n)
            self._table = np.vstack([self._table, g * r[:, None]])

    def __call__(self, t: float) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros(self.n)
        if self.kind == "sinusoidal":
            return np.array([self.bound * math.cos(t), self.bound * math.sin(t)])
        if self.kind == "constant":
            return self._const.copy()
        idx = int(math.floor(t / self.hold + 1e-9))
        idx = max(idx, 0)
        self._extend(idx)
        return self._table[idx].copy()

    def describe(self) -> dict:
        return {"kind": self.kind, "bound": self.bound, "seed": self.seed, "hold": self.hold}


@dataclass
class StateTrajectory:
    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, float)
        self.states = np.asarray(self.states, float)
        if self.times.ndim != 1 or self.states.shape[0] != self.times.shape[0]:
            raise ValueError("times and states disagree in length")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    def __len__(self):
        return self.times.shape[0]


# -- integration -------------------------------------------------------------

def rk4_step(model: RobotModel, chi, v, u, d, dt):
    """One classical RK4 step of ``chi' = v, v' = f + d`` with ``u``, ``d`` held."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    chi, v, u, d = (np.asarray(a, float) for a in (chi, v, u, d))
    f = model.f

    k1x, k1v = v, f(chi, v, u) + d
    k2x, k2v = v + 0.5 * dt * k1v, f(chi + 0.5 * dt * k1x, v + 0.5 * dt * k1v, u) + d
    k3x, k3v = v + 0.5 * dt * k2v, f(chi + 0.5 * dt * k2x, v + 0.5 * dt * k2v, u) + d
    k4x, k4v = v + dt * k3v, f(chi + dt * k3x, v + dt * k3v, u) + d
    chi1 = chi + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
    v1 = v + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    if not (np.all(np.isfinite(chi1)) and np.all(np.isfinite(v1))):
        raise ModelBlowUp(f"non-finite state after RK4 step of model {model.name!r}")
    return chi1, v1


def simulate(model: RobotModel, chi0, v0, controls, dt, d=None, t0=0.0) -> StateTrajectory:
    """Open-loop simulation with one control (and one RK4 step) per ``dt``."""
    chi, v = np.asarray(chi0, float), np.asarray(v0, float)
    times, states = [t0], [np.concatenate([chi, v])]
    t = t0
    for u in controls:
        dv = np.zeros(model.n) if d is None else d(t)
        chi, v = rk4_step(model, chi, v, u, dv, dt)
        t += dt
        times.append(t)
        states.append(np.concatenate([chi, v]))
    return StateTrajectory(np.array(times), np.array(states))


# -- derivative information --------------------------------------------------

def _fd_jacobians(model, chi, v, u, step=FD_STEP):
    out = []
    for which in range(3):
        args = [np.asarray(chi, float), np.asarray(v, float), np.asarray(u, float)]
        base = args[which]
        cols = []
        for j in range(model.n):
            e = np.zeros(model.n)
            e[j] = step
            plus = list(args)
            minus = list(args)
            plus[which] = base + e
            minus[which] = base - e
            cols.append((model.f(*plus) - model.f(*minus)) / (2 * step))
        out.append(np.stack(cols, axis=-1))
    return tuple(out)


def jacobians(model: RobotModel, chi, v, u, finite_difference=False):
    """``(df/dchi, df/dv, df/du)``; analytic when the model supplies them."""
    if model.jac is not None and not finite_difference:
        chi, v, u = (np.asarray(a, float) for a in (chi, v, u))
        return model.jac(chi, v, u)
    return _fd_jacobians(model, chi, v, u)


def _sample_points(model, workspace: Box, samples: int, seed: int):
    n = model.n
    boxes = [workspace, model.velocity_box, model.input_box]
    lo = np.concatenate([b.lower for b in boxes])
    up = np.concatenate([b.upper for b in boxes])
    rng = np.random.default_rng(seed)
    pts = lo + (up - lo) * rng.random((samples, 3 * n))
    if 3 * n <= 12:
        corners = np.array(list(itertools.product(*zip(lo, up))))
        pts = np.vstack([pts, corners])
    return pts[:, :n], pts[:, n:2 * n], pts[:, 2 * n:]


@dataclass
class ConstantEstimate:
    value: float
    declared: Optional[float]
    violation: bool
    message: str = ""


def estimate_j_lower(model: RobotModel, samples: int = 100_000, workspace: Box = None,
                     seed: int = 0) -> ConstantEstimate:
    """Smallest eigenvalue of the symmetrised ``df/du`` over sampled points."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    workspace = workspace or Box(-5 * np.ones(model.n), 5 * np.ones(model.n))
    chi, v, u = _sample_points(model, workspace, samples, seed)
    _, _, fu = jacobians(model, chi, v, u)
    sym = 0.5 * (fu + np.swapaxes(fu, -1, -2))
    est = float(np.min(np.linalg.eigvalsh(sym)[..., 0]))
    if est <= 0:
        return ConstantEstimate(est, model.j_lower, True,
                                f"input Jacobian not uniformly positive definite (min eig {est:.4g})")
    msg = ""
    if model.j_lower is not None and est < model.j_lower - 1e-9:
        msg = f"sampled J lower bound {est:.6g} is below the declared {model.j_lower:.6g}"
        warnings.warn(msg)
    return ConstantEstimate(est, model.j_lower, False, msg)


def estimate_lipschitz(model: RobotModel, samples: int = 100_000, workspace: Box = None,
                       seed: int = 0):
    """Return ``(L1, L2, L)``: max spectral norms of df/dchi and df/dv."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    workspace = workspace or Box(-5 * np.ones(model.n), 5 * np.ones(model.n))
    chi, v, u = _sample_points(model, workspace, samples, seed)
    fx, fv, _ = jacobians(model, chi, v, u)
    L1 = float(np.max(np.linalg.norm(fx, ord=2, axis=(-2, -1))))
    L2 = float(np.max(np.linalg.norm(fv, ord=2, axis=(-2, -1))))
    L = max(L1, L2)
    if model.lipschitz_L is not None and L > model.lipschitz_L * (1 + 1e-2):
        warnings.warn(f"sampled Lipschitz constant {L:.6g} exceeds declared {model.lipschitz_L:.6g}")
    return L1, L2, L


def linearize(model: RobotModel, chi, u=None):
    """``(A, B)`` of the state ``(chi, v)`` at ``(chi, 0, u)``."""
    n = model.n
    chi = np.asarray(chi, float)
    u = np.zeros(n) if u is None else np.asarray(u, float)
    fx, fv, fu = jacobians(model, chi, np.zeros(n), u)
    A = np.block([[np.zeros((n, n)), np.eye(n)], [fx, fv]])
    B = np.vstack([np.zeros((n, n)), fu])
    return A, B


def is_stabilizable(A, B, tol=1e-9) -> bool:
    m = A.shape[0]
    blocks = [B]
    for _ in range(m - 1):
        blocks.append(A @ blocks[-1])
    if np.linalg.matrix_rank(np.hstack(blocks), tol=tol) == m:
        return True
    # PBH on the modes that are not asymptotically stable
    for lam in np.linalg.eigvals(A):
        if lam.real >= -tol:
            M = np.hstack([A - lam * np.eye(m), B.astype(complex)])
            if np.linalg.matrix_rank(M, tol=tol) < m:
                return False
    return True


def check_stabilizability(model: RobotModel) -> bool:
    A, B = linearize(model, np.zeros(model.n))
    return is_stabilizable(A, B)


def steady_input(model: RobotModel, chi, guess=None, tol=1e-12, max_iter=50):
    """Input holding the robot at rest at ``chi`` (solves ``f(chi, 0, u) = 0``)."""
    n = model.n
    chi = np.asarray(chi, float)
    u = np.zeros(n) if guess is None else np.asarray(guess, float).copy()
    z = np.zeros(n)
    for _ in range(max_iter):
        r = model.f(chi, z, u)
        if np.linalg.norm(r) < tol:
            break
        _, _, fu = jacobians(model, chi, z, u)
        u = u - np.linalg.solve(fu, r)
    if np.linalg.norm(model.f(chi, z, u)) > 1e-8:
        raise ValueError(f"no equilibrium input found at {chi.tolist()}")
    return u
