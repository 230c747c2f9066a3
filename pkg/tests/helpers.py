"""Random instance generators shared by the oracle tests."""
import itertools
import random
from fractions import Fraction

import numpy as np
from scipy import ndimage

from mitlnav.abstraction import Wts, timed_run_of, timed_word_of
from mitlnav.geometry import Ball, Box, EmptySetError, erode_ball_by_ball, erode_box_by_ball
from mitlnav.mitl import brute_force_satisfies, compile_formula
from mitlnav.synthesis import product_search, verify_plan

ATOMS = ("a", "b", "c")


def random_interval(rng: random.Random, kind="F") -> str:
    lo = Fraction(rng.randint(0, 8), rng.choice((1, 2)))
    r = rng.random()
    if r < 0.25:
        return f"[{lo},inf)"
    hi = lo + Fraction(rng.randint(1, 8), rng.choice((1, 2)))
    close = "]" if rng.random() < 0.6 else ")"
    return f"[{lo},{hi}{close}"


def random_literal(rng, atoms=ATOMS) -> str:
    a = rng.choice(atoms)
    return a if rng.random() < 0.7 else "!" + a


def random_formula(rng: random.Random, max_conjuncts=3, atoms=ATOMS, max_eventualities=None) -> str:
    parts = []
    ev = 0
    for _ in range(rng.randint(1, max_conjuncts)):
        kind = rng.choice("GFFUX")
        if kind != "G":
            if max_eventualities is not None and ev >= max_eventualities:
                kind = "G"
            else:
                ev += 1
        if kind == "G":
            parts.append(f"G[0,inf) {random_literal(rng, atoms)}")
        elif kind == "U":
            parts.append(f"({random_literal(rng, atoms)} U{random_interval(rng)} "
                         f"{random_literal(rng, atoms)})")
        else:
            parts.append(f"{kind}{random_interval(rng)} {random_literal(rng, atoms)}")
    return " & ".join(parts)


def random_word(rng: random.Random, max_len=8, atoms=ATOMS):
    n = rng.randint(1, max_len)
    t = Fraction(0)
    word = []
    for i in range(n):
        if i:
            t += Fraction(rng.randint(0, 6), rng.choice((1, 2, 3)))
        letter = frozenset(a for a in atoms if rng.random() < 0.4)
        word.append((letter, t))
    return word


def random_wts(rng: random.Random, n_regions=5, atoms=("a", "b")) -> Wts:
    states = [f"S{i}" for i in range(n_regions)]
    labels = {s: frozenset(a for a in atoms if rng.random() < 0.4) for s in states}
    trans = {}
    for s, d in itertools.permutations(states, 2):
        if rng.random() < 0.7:
            trans[(s, d)] = Fraction(rng.randint(1, 8), rng.choice((1, 2, 4)))
    return Wts(states, states[0], labels, frozenset(atoms), trans)


# -- geometry oracle -----------------------------------------------------------

GRID = 200


def _grid(lo, hi):
    xs = np.linspace(lo, hi, GRID)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    return xs, np.stack([X, Y], axis=-1), xs[1] - xs[0]


def _disk(r, cell):
    m = int(np.floor(r / cell))
    ij = np.arange(-m, m + 1)
    I, J = np.meshgrid(ij, ij, indexing="ij")
    return (I * cell) ** 2 + (J * cell) ** 2 <= r ** 2


def _pontryagin(mask, r, cell):
    """Grid points whose whole r-disk stays in the mask (brute force)."""
    return ndimage.binary_erosion(mask, structure=_disk(r, cell), border_value=0)


def _agrees(oracle, analytic, dist_to_boundary, cell):
    bad = oracle != analytic
    return bool(np.all(np.abs(dist_to_boundary[bad]) <= 1.5 * cell))


def erosion_case(rng, case):
    """One random erosion compared with the grid oracle; True when they agree.

    Points the two classify differently must lie within one grid cell
    (diagonal) of the analytic boundary.
    """
    _, P, cell = _grid(-5.0, 5.0)
    r = rng.uniform(0.0, 1.5)
    if case % 2 == 0:
        lo = rng.uniform(-4.5, 0.0, 2)
        hi = lo + rng.uniform(0.3, 4.5, 2)
        box = Box(lo, hi)
        oracle = _pontryagin(np.all((P >= lo) & (P <= hi), axis=-1), r, cell)
        try:
            er = erode_box_by_ball(box, r)
            analytic = np.all((P >= er.lower) & (P <= er.upper), axis=-1)
            d = np.min(np.concatenate([P - er.lower, er.upper - P], axis=-1), axis=-1)
        except EmptySetError:
            analytic = np.zeros_like(oracle)
            d = np.full(oracle.shape, r - float(np.min(box.half_widths)))
    else:
        c = rng.uniform(-2.5, 2.5, 2)
        R = rng.uniform(0.2, 2.4)
        oracle = _pontryagin(np.linalg.norm(P - c, axis=-1) <= R, r, cell)
        try:
            er = erode_ball_by_ball(Ball(c, R), r)
            analytic = np.linalg.norm(P - c, axis=-1) <= er.radius
            d = er.radius - np.linalg.norm(P - c, axis=-1)
        except EmptySetError:
            analytic = np.zeros_like(oracle)
            d = np.full(oracle.shape, r - R)
    return _agrees(oracle, analytic, d, cell)


# -- synthesis oracle ----------------------------------------------------------

def enumerate_best(wts, nf, max_legs=4):
    """Brute force: every path of at most ``max_legs`` legs, minimum makespan."""
    best = None

    def rec(path):
        nonlocal best
        run = timed_run_of(wts, path)
        if brute_force_satisfies(nf, timed_word_of(wts, run)):
            key = (run[-1][1], len(path))
            if best is None or key < best:
                best = key
        if len(path) - 1 < max_legs:
            for (s, d) in wts.transitions:
                if s == path[-1]:
                    rec(path + [d])

    rec([wts.initial])
    return best


def check_instance(rng):
    wts = random_wts(rng, rng.randint(2, 5))
    nf, tba = compile_formula(random_formula(rng, 3, atoms=("a", "b"), max_eventualities=2))
    plan = product_search(wts, tba)
    best = enumerate_best(wts, nf)
    if plan is None:
        return best is None
    if not verify_plan(plan, wts, tba):
        return False
    if len(plan.run) - 1 <= 4:
        return best is not None and best[0] == plan.makespan
    return best is None or plan.makespan <= best[0]
