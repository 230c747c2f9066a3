"""Set operations on axis-aligned boxes and Euclidean balls.

Only the two shape classes that appear in the navigation problem are
supported.  The non-convex state constraint set (workspace minus the
forbidden regions) is never built as one object; callers combine a
:class:`Box` with a list of forbidden :class:`Ball` values and test points
against them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class EmptySetError(ValueError):
    """Raised when an erosion leaves nothing behind."""

    def __init__(self, message, radius=None, name=None):
        super().__init__(message)
        self.radius = radius
        self.name = name


def _vec(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center))
        object.__setattr__(self, "radius", float(self.radius))
        if self.radius < 0:
            raise ValueError("ball radius must be nonnegative")

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def contains(self, p) -> bool:
        return bool(np.linalg.norm(_vec(p) - self.center) <= self.radius)

    def __eq__(self, other):
        return (isinstance(other, Ball) and np.array_equal(self.center, other.center)
                and self.radius == other.radius)

    def __repr__(self):
        return f"Ball(center={self.center.tolist()}, radius={self.radius})"


@dataclass(frozen=True, eq=False)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo, up = _vec(self.lower), _vec(self.upper)
        if lo.shape != up.shape:
            raise ValueError("box bounds have different dimensions")
        if np.any(lo > up):
            raise ValueError(f"box lower bound exceeds upper bound: {lo} > {up}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def half_widths(self) -> np.ndarray:
        return 0.5 * (self.upper - self.lower)

    def contains(self, p, tol: float = 0.0) -> bool:
        p = _vec(p)
        return bool(np.all(p >= self.lower - tol) and np.all(p <= self.upper + tol))

    def contains_box(self, other: "Box") -> bool:
        return bool(np.all(other.lower >= self.lower) and np.all(other.upper <= self.upper))

    def clip(self, p) -> np.ndarray:
        return np.clip(p, self.lower, self.upper)

    def __eq__(self, other):
        return (isinstance(other, Box) and np.array_equal(self.lower, other.lower)
                and np.array_equal(self.upper, other.upper))

    def __repr__(self):
        return f"Box(lower={self.lower.tolist()}, upper={self.upper.tolist()})"


def translate_set(s, t):
    """Minkowski sum of ``s`` with the singleton ``{t}``."""
    t = _vec(t)
    if t.shape[0] != s.dim:
        raise ValueError(f"dimension mismatch: set is {s.dim}-D, offset is {t.shape[0]}-D")
    if isinstance(s, Ball):
        return Ball(s.center + t, s.radius)
    if isinstance(s, Box):
        return Box(s.lower + t, s.upper + t)
    raise TypeError(f"unsupported set type {type(s).__name__}")


def erode_box_by_ball(b: Box, r: float, name: str = "box") -> Box:
    """Pontryagin difference ``b ⊖ B(0, r)``.

    For an axis-aligned box this is the box shrunk by ``r`` on every side.
    Raises :class:`EmptySetError` instead of returning an inverted box.
    """
    if r < 0:
        raise ValueError("erosion radius must be nonnegative")
    lo, up = b.lower + r, b.upper - r
    if np.any(lo > up):
        raise EmptySetError(
            f"eroding {name} {b!r} by radius {r:.6g} leaves an empty set "
            f"(largest admissible radius is {float(np.min(b.half_widths)):.6g})",
            radius=r, name=name)
    return Box(lo, up)


def erode_ball_by_ball(b: Ball, r: float) -> Ball:
    if r < 0:
        raise ValueError("erosion radius must be nonnegative")
    if r > b.radius:
        raise EmptySetError(f"cannot erode ball of radius {b.radius} by {r}", radius=r)
    return Ball(b.center, b.radius - r)


def feedback_image_radius(k: float, r_e: float, r_v: float) -> float:
    """Radius of the smallest origin ball holding ``{-k e - k v}`` over the tube.

    Uses the n x 2n block ``[-k I, -k I]`` as the feedback map.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    if r_e < 0 or r_v < 0:
        raise ValueError("tube radii must be nonnegative")
    return k * (r_e + r_v)


def ball_in_box(b: Ball, box: Box) -> bool:
    if b.dim != box.dim:
        raise ValueError("dimension mismatch")
    return bool(np.all(box.lower + b.radius <= b.center) and np.all(b.center <= box.upper - b.radius))


def balls_disjoint(a: Ball, b: Ball) -> bool:
    if a.dim != b.dim:
        raise ValueError("dimension mismatch")
    return bool(np.linalg.norm(a.center - b.center) > a.radius + b.radius)
