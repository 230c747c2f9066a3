"""Product of the WTS with the formula monitor, timed search and plan execution."""
from __future__ import annotations

import hashlib
import heapq
import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .abstraction import InvalidPlanError, Wts, _region_key, timed_run_of, timed_word_of
from .mitl import Tba, accepts, compile_formula
from .navigator import navigate

log = logging.getLogger(__name__)


class PlanConsistencyError(RuntimeError):
    pass


@dataclass(frozen=True)
class ProductState:
    region: str
    tba_location: object
    clock_values: tuple
    stamp: Fraction


@dataclass
class TimedPlan:
    run: list    # [(region, Fraction stamp)]
    goals: list  # leg descriptors
    formula: str = ""
    formula_digest: str = ""
    stats: dict = field(default_factory=dict)

    @property
    def regions(self) -> list:
        return [r for r, _ in self.run]

    @property
    def makespan(self) -> Fraction:
        return self.run[-1][1]

    def to_json(self) -> dict:
        return {
            "run": [{"region": r, "stamp": [t.numerator, t.denominator]} for r, t in self.run],
            "goals": self.goals,
            "formula": self.formula,
            "formula_digest": self.formula_digest,
            "makespan": [self.makespan.numerator, self.makespan.denominator],
            "stats": self.stats,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def from_json(cls, doc) -> "TimedPlan":
        run = [(e["region"], Fraction(int(e["stamp"][0]), int(e["stamp"][1]))) for e in doc["run"]]
        return cls(run, list(doc.get("goals", [])), doc.get("formula", ""),
                   doc.get("formula_digest", ""), dict(doc.get("stats", {})))

    @classmethod
    def load(cls, path) -> "TimedPlan":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def formula_digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def product_search(wts: Wts, tba: Tba, horizon_bound=None) -> Optional[TimedPlan]:
    """Minimum-makespan accepting run of the product, or ``None``.

    Ties are broken by fewer legs, then by the region sequence.  Clock
    values above ``horizon_bound`` (default: the largest constant in the
    formula) satisfy exactly the same guards, so they are capped there.
    That keeps the product finite without cutting off runs that still have
    an unbounded eventuality to discharge.
    """
    if horizon_bound is None:
        horizon_bound = tba.formula.max_bound if tba.formula is not None else Fraction(0)
    horizon_bound = Fraction(horizon_bound)
    if tba.formula is not None and horizon_bound < tba.formula.max_bound:
        raise ValueError("horizon_bound must cover every constant in the formula")
    cap = horizon_bound + 1

    def capped(values):
        return tuple(min(v, cap) for v in values)
    r0 = wts.initial
    clocks0 = tba.initial_clocks()
    loc0, clocks0 = tba.step(tba.initial, wts.labels.get(r0, frozenset()), clocks0)
    order = list(tba.clocks)

    def key(path):
        return tuple(_region_key(r) for r in path)

    start = ProductState(r0, loc0, capped(clocks0[c] for c in order), Fraction(0))
    heap = [(Fraction(0), 0, key((r0,)), (r0,), start)]
    done = set()
    expanded = 0
    while heap:
        stamp, nlegs, _, path, st = heapq.heappop(heap)
        ident = (st.region, st.tba_location, st.clock_values)
        if ident in done:
            continue
        done.add(ident)
        if st.tba_location == tba.sink:
            continue
        if st.tba_location in tba.accepting:
            run = timed_run_of(wts, path)
            goals = [wts.actions.get((a, b), {"source": a, "dest": b})
                     for a, b in zip(path, path[1:])]
            return TimedPlan(run, goals, stats={"expanded": expanded, "horizon": str(horizon_bound)})
        expanded += 1
        for dest, w in wts.successors(st.region):
            t = stamp + w
            clocks = {c: v + w for c, v in zip(order, st.clock_values)}
            loc, clocks = tba.step(st.tba_location, wts.labels.get(dest, frozenset()), clocks)
            if loc == tba.sink:
                continue
            nxt = ProductState(dest, loc, capped(clocks[c] for c in order), t)
            if (nxt.region, nxt.tba_location, nxt.clock_values) in done:
                continue
            p = path + (dest,)
            heapq.heappush(heap, (t, nlegs + 1, key(p), p, nxt))
    return None


def verify_plan(plan: TimedPlan, wts: Wts, tba: Tba) -> bool:
    """Recompute the stamps from the WTS and run the monitor on the word."""
    try:
        run = timed_run_of(wts, plan.regions)
    except InvalidPlanError:
        return False
    if [t for _, t in run] != [t for _, t in plan.run]:
        raise PlanConsistencyError("plan stamps disagree with the WTS durations")
    return accepts(tba, timed_word_of(wts, run))


@dataclass
class ExecutionReport:
    planned_run: list
    realized_run: list
    realized_word: list
    accepted: bool
    legs: list
    contacts: list
    in_workspace: bool
    satisfied: bool
    aborted: Optional[str] = None

    def to_json(self) -> dict:
        return {
            "planned_run": [[r, str(t)] for r, t in self.planned_run],
            "realized_run": [[r, str(t)] for r, t in self.realized_run],
            "realized_word": [[sorted(s), str(t)] for s, t in self.realized_word],
            "accepted": self.accepted, "satisfied": self.satisfied,
            "contacts": self.contacts, "in_workspace": self.in_workspace,
            "aborted": self.aborted,
            "legs": [leg.summary() for leg in self.legs],
        }


def execute_plan(plan: TimedPlan, scenario, model=None, gains=None, config=None,
                 disturbance=None, tba: Optional[Tba] = None, tail=None) -> ExecutionReport:
    """Run the plan's legs back to back on the real (disturbed) system.

    Every leg restarts its nominal system at the source centre at rest, as
    during abstraction, while the real state carries over from the previous
    leg; the ancillary feedback pulls it back onto the nominal.
    """
    model = model or scenario.model
    gains = gains or scenario.design()
    config = config or scenario.fhocp_config()
    if tba is None:
        tba = compile_formula(scenario.formula, scenario.alphabet)[1]
    tail = scenario.navigation["tail"] if tail is None else tail
    n = model.n
    regions = plan.regions
    labels = scenario.labels
    x = np.concatenate([scenario.initial_position, scenario.initial_velocity])
    realized = [(regions[0], Fraction(0))]
    legs, contacts, aborted = [], [], None
    in_ws = True
    for i, (a, b) in enumerate(zip(regions, regions[1:])):
        last = i == len(regions) - 2
        centre = np.concatenate([scenario.rois[a].center, np.zeros(n)])
        t0 = realized[-1][1]
        res = navigate(scenario, model, gains, config, a, b, start_state=x, disturbance=disturbance,
                       t0=float(t0), tail=tail if last else 0.0, nominal_start=centre)
        legs.append(res)
        contacts += res.bounds.get("contacts", [])
        if any("workspace" in v for v in res.violations):
            in_ws = False
        if res.duration is None:
            aborted = f"leg {a} -> {b} failed: {res.violations}"
            break
        realized.append((b, t0 + res.duration))
        if not res.feasible:
            aborted = f"leg {a} -> {b}: {res.violations}"
            break
        x = res.end_state
    word = [(frozenset(labels.get(r, ())), t) for r, t in realized]
    ok = aborted is None and len(realized) == len(regions)
    acc = bool(ok and accepts(tba, word))
    return ExecutionReport(list(plan.run), realized, word, acc, legs, sorted(set(contacts)),
                           in_ws, bool(acc and ok and not contacts and in_ws), aborted)
