"""Weighted transition system over the labeled regions.

States are regions; a transition ``(s, d)`` exists when a navigation leg
from the centre of ``s`` (at rest, no disturbance) reaches ``d`` without
touching any other region, and its weight is the measured duration.
"""
from __future__ import annotations

import hashlib
import json
import logging
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

from .navigator import check_assumption4, navigate

log = logging.getLogger(__name__)


class EmptyWtsError(RuntimeError):
    pass


class InvalidPlanError(ValueError):
    pass


@dataclass
class Wts:
    states: list
    initial: str
    labels: dict
    alphabet: frozenset
    transitions: dict = field(default_factory=dict)  # (s, d) -> Fraction
    actions: dict = field(default_factory=dict)      # (s, d) -> descriptor
    excluded: dict = field(default_factory=dict)     # (s, d) -> reason
    results: dict = field(default_factory=dict, repr=False)
    expander: Optional[Callable] = field(default=None, repr=False)
    expanded: set = field(default_factory=set)

    def expand(self, state):
        if self.expander is not None and state not in self.expanded:
            self.expander(self, state)
        self.expanded.add(state)

    def successors(self, state):
        """``[(dest, duration), ...]`` sorted by dest id; expands lazily."""
        self.expand(state)
        return sorted(((d, w) for (s, d), w in self.transitions.items() if s == state),
                      key=lambda x: _region_key(x[0]))

    def duration(self, source, dest) -> Fraction:
        try:
            return self.transitions[(source, dest)]
        except KeyError:
            raise InvalidPlanError(f"no transition {source} -> {dest}") from None

    @property
    def complete(self) -> bool:
        return self.expander is None or set(self.states) <= self.expanded

    def to_json(self) -> dict:
        return {
            "states": list(self.states),
            "initial": self.initial,
            "alphabet": sorted(self.alphabet),
            "labels": {s: sorted(self.labels.get(s, ())) for s in self.states},
            "transitions": [
                {"source": s, "dest": d, "duration": [w.numerator, w.denominator],
                 "action": self.actions.get((s, d))}
                for (s, d), w in sorted(self.transitions.items(),
                                        key=lambda kv: (_region_key(kv[0][0]), _region_key(kv[0][1])))
            ],
            "excluded": [
                {"source": s, "dest": d, "reason": r}
                for (s, d), r in sorted(self.excluded.items(),
                                        key=lambda kv: (_region_key(kv[0][0]), _region_key(kv[0][1])))
            ],
            "complete": self.complete,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def from_json(cls, doc) -> "Wts":
        trans, acts = {}, {}
        for t in doc["transitions"]:
            num, den = t["duration"]
            w = Fraction(int(num), int(den))
            if w <= 0:
                raise ValueError(f"transition {t['source']} -> {t['dest']} has non-positive duration")
            trans[(t["source"], t["dest"])] = w
            if t.get("action") is not None:
                acts[(t["source"], t["dest"])] = t["action"]
        excluded = {(e["source"], e["dest"]): e["reason"] for e in doc.get("excluded", ())}
        return cls(list(doc["states"]), doc["initial"],
                   {s: frozenset(v) for s, v in doc["labels"].items()},
                   frozenset(doc["alphabet"]), trans, acts, excluded)

    @classmethod
    def load(cls, path) -> "Wts":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def _region_key(rid):
    """Natural order so that R2 sorts before R10."""
    head = rid.rstrip("0123456789")
    tail = rid[len(head):]
    return (head, int(tail) if tail else -1, rid)


def action_digest(scenario, gains, config, source, dest) -> str:
    blob = json.dumps({
        "scenario": scenario.digest(), "gains": gains.as_dict(),
        "h": str(config.h), "T": str(config.T), "Q": config.Q.tolist(), "R": config.R.tolist(),
        "P": None if config.P is None else config.P.tolist(), "beta": config.beta,
        "source": source, "dest": dest,
    }, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def build_wts(scenario, model=None, gains=None, config=None, pairs="all",
              include_unsafe=False, keep_results=True, tail=0.0, progress=None) -> Wts:
    """Abstract the closed loop into a WTS.

    ``pairs="all"`` runs every ordered pair up front; ``"lazy"`` runs the
    legs out of a region the first time a search asks for its successors.
    Regions carrying an excluded label (``abstraction.exclude_labels``) are
    never navigated to or from unless ``include_unsafe`` is set.
    """
    if pairs not in ("all", "lazy"):
        raise ValueError("pairs must be 'all' or 'lazy'")
    model = model or scenario.model
    gains = gains or scenario.design()
    config = config or scenario.fhocp_config()
    states = list(scenario.rois)
    initial = scenario.initial_region()
    report = check_assumption4(scenario, gains)
    too_close = set()
    for a, b, clearance in report.failing:
        warnings.warn(f"regions {a} and {b} are too close for the tube "
                      f"(clearance {clearance:.4g} <= {report.required_gap:.4g}); pair excluded")
        too_close |= {(a, b), (b, a)}
    skip = set() if include_unsafe else set(scenario.unsafe_regions())

    def expander(wts, source):
        if source in skip:
            return
        for dest in states:
            if dest == source or dest in skip:
                continue
            if (source, dest) in too_close:
                wts.excluded[(source, dest)] = "regions violate the spacing assumption"
                continue
            res = navigate(scenario, model, gains, config, source, dest, tail=tail)
            if progress is not None:
                progress(res)
            if keep_results:
                wts.results[(source, dest)] = res
            if res.feasible:
                wts.transitions[(source, dest)] = res.duration
                wts.actions[(source, dest)] = {
                    "source": source, "dest": dest,
                    "digest": action_digest(scenario, gains, config, source, dest)}
            else:
                wts.excluded[(source, dest)] = res.violations[0] if res.violations else "infeasible"
            log.info("leg %s -> %s: %s", source, dest,
                     res.duration if res.feasible else res.violations)

    wts = Wts(states, initial, dict(scenario.labels), scenario.alphabet,
              expander=expander if pairs == "lazy" else None)
    if pairs == "all":
        for s in states:
            expander(wts, s)
            wts.expanded.add(s)
    else:
        wts.expand(initial)
    if len(states) > 1 and not any(s == initial for s, _ in wts.transitions):
        raise EmptyWtsError(f"no feasible transition leaves the initial region {initial}")
    return wts


def timed_run_of(wts: Wts, plan) -> list:
    """``[(region, stamp), ...]`` with exact rational stamps starting at 0."""
    plan = list(plan)
    if not plan:
        raise InvalidPlanError("empty plan")
    if plan[0] != wts.initial:
        raise InvalidPlanError(f"plan starts at {plan[0]}, the initial region is {wts.initial}")
    run = [(plan[0], Fraction(0))]
    for a, b in zip(plan, plan[1:]):
        run.append((b, run[-1][1] + wts.duration(a, b)))
    return run


def timed_word_of(wts: Wts, run) -> list:
    return [(frozenset(wts.labels.get(r, ())), t) for r, t in run]
