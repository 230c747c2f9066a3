"""MITL formulas over timed words: parser, fragment check and timed monitors.

Concrete syntax::

    phi := atom | ! phi | phi & phi | phi | phi | ( phi )
         | F I phi | G I phi | X I phi | phi U I phi
    I   := [a, b] | [a, b) | [a, inf) | [a, inf]

``a`` and ``b`` are decimals or ``p/q`` rationals; an omitted interval
means ``[0, inf)``.  Binding, tightest first: unary operators, ``U``
(right associative), ``&``, ``|``.

Formulas are read with point semantics over finite timed words whose last
letter repeats forever.  Only conjunctions of unnested timed literals are
turned into automata; see :func:`validate_fragment`.
"""
from __future__ import annotations

import itertools
import re
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional


class MitlSyntaxError(ValueError):
    def __init__(self, message, position=None):
        where = "" if position is None else f" at position {position}"
        super().__init__(message + where)
        self.position = position


class UnknownAtomError(ValueError):
    pass


class IntervalError(ValueError):
    pass


class UnsupportedFragment(ValueError):
    def __init__(self, message, subtree=None):
        super().__init__(message if subtree is None else f"{message}: {subtree}")
        self.subtree = subtree


# -- AST ----------------------------------------------------------------------

def _fmt(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


@dataclass(frozen=True)
class Interval:
    lower: Fraction = Fraction(0)
    upper: Optional[Fraction] = None  # None is +infinity
    upper_closed: bool = True  # forced False when unbounded

    def __post_init__(self):
        object.__setattr__(self, "lower", Fraction(self.lower))
        if self.upper is None:
            object.__setattr__(self, "upper_closed", False)
        else:
            object.__setattr__(self, "upper", Fraction(self.upper))
        if self.lower < 0:
            raise IntervalError(f"interval lower bound {self.lower} is negative")
        if self.upper is not None and not self.lower < self.upper:
            raise IntervalError(f"interval [{_fmt(self.lower)}, {_fmt(self.upper)}] needs a < b")

    @property
    def bounded(self) -> bool:
        return self.upper is not None

    def contains(self, t) -> bool:
        if t < self.lower:
            return False
        if self.upper is None:
            return True
        return t <= self.upper if self.upper_closed else t < self.upper

    def past(self, t) -> bool:
        """True once ``t`` (and every later time) lies beyond the interval."""
        if self.upper is None:
            return False
        return t > self.upper if self.upper_closed else t >= self.upper

    def __str__(self):
        hi = "inf)" if self.upper is None else _fmt(self.upper) + ("]" if self.upper_closed else ")")
        return f"[{_fmt(self.lower)},{hi}"


ALWAYS = Interval()


@dataclass(frozen=True)
class Atom:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Not:
    arg: object

    def __str__(self):
        return f"!{_wrap(self.arg)}"


@dataclass(frozen=True)
class And:
    left: object
    right: object

    def __str__(self):
        return f"{_wrap(self.left)} & {_wrap(self.right)}"


@dataclass(frozen=True)
class Or:
    left: object
    right: object

    def __str__(self):
        return f"{_wrap(self.left)} | {_wrap(self.right)}"


@dataclass(frozen=True)
class Next:
    interval: Interval
    arg: object

    def __str__(self):
        return f"X{self.interval} {_wrap(self.arg)}"


@dataclass(frozen=True)
class Eventually:
    interval: Interval
    arg: object

    def __str__(self):
        return f"F{self.interval} {_wrap(self.arg)}"


@dataclass(frozen=True)
class Always:
    interval: Interval
    arg: object

    def __str__(self):
        return f"G{self.interval} {_wrap(self.arg)}"


@dataclass(frozen=True)
class Until:
    interval: Interval
    left: object
    right: object

    def __str__(self):
        return f"{_wrap(self.left)} U{self.interval} {_wrap(self.right)}"


def _wrap(node):
    if isinstance(node, Atom) or (isinstance(node, Not) and isinstance(node.arg, Atom)):
        return str(node)
    return f"({node})"


def atoms_of(node) -> set:
    if isinstance(node, Atom):
        return {node.name}
    out = set()
    for attr in ("arg", "left", "right"):
        if hasattr(node, attr):
            out |= atoms_of(getattr(node, attr))
    return out


# -- parser -------------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>\d+(?:\.\d+)?(?:/\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<sym>[!&|()\[\],])
""", re.VERBOSE)

KEYWORDS = {"F", "G", "X", "U"}


def _tokenize(text):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise MitlSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            val = m.group(kind)
            if kind == "ident" and val in KEYWORDS:
                kind = "kw"
            out.append((kind, val, pos))
        pos = m.end()
    out.append(("eof", "", len(text)))
    return out


class _Parser:
    def __init__(self, text, alphabet):
        self.toks = _tokenize(text)
        self.i = 0
        self.alphabet = None if alphabet is None else set(alphabet)

    def peek(self):
        return self.toks[self.i]

    def take(self, kind=None, val=None):
        tok = self.toks[self.i]
        if (kind and tok[0] != kind) or (val is not None and tok[1] != val):
            want = val if val is not None else kind
            got = tok[1] or "end of input"
            raise MitlSyntaxError(f"expected {want!r}, found {got!r}", tok[2])
        self.i += 1
        return tok

    def parse(self):
        node = self.disj()
        if self.peek()[0] != "eof":
            tok = self.peek()
            raise MitlSyntaxError(f"unexpected {tok[1]!r}", tok[2])
        return node

    def disj(self):
        node = self.conj()
        while self.peek()[1] == "|":
            self.take()
            node = Or(node, self.conj())
        return node

    def conj(self):
        node = self.until()
        while self.peek()[1] == "&":
            self.take()
            node = And(node, self.until())
        return node

    def until(self):
        left = self.unary()
        if self.peek()[0] == "kw" and self.peek()[1] == "U":
            self.take()
            iv = self.interval()
            return Until(iv, left, self.until())
        return left

    def unary(self):
        kind, val, pos = self.peek()
        if val == "!":
            self.take()
            return Not(self.unary())
        if kind == "kw" and val in ("F", "G", "X"):
            self.take()
            iv = self.interval()
            arg = self.unary()
            return {"F": Eventually, "G": Always, "X": Next}[val](iv, arg)
        if val == "(":
            self.take()
            node = self.disj()
            self.take("sym", ")")
            return node
        if kind == "ident":
            self.take()
            if self.alphabet is not None and val not in self.alphabet:
                raise UnknownAtomError(f"unknown atomic proposition {val!r} at position {pos}")
            return Atom(val)
        raise MitlSyntaxError(f"unexpected {val or 'end of input'!r}", pos)

    def number(self):
        kind, val, pos = self.peek()
        if kind != "num":
            raise MitlSyntaxError(f"expected a number, found {val or 'end of input'!r}", pos)
        self.take()
        return Fraction(val)

    def interval(self):
        if self.peek()[1] != "[":
            return ALWAYS
        start = self.take()[2]
        lo = self.number()
        self.take("sym", ",")
        if self.peek()[1] == "inf":
            self.take()
            hi = None
        else:
            hi = self.number()
        kind, val, pos = self.peek()
        if val in ("]", ")"):
            self.take()
        else:
            raise MitlSyntaxError(f"expected ']' or ')', found {val or 'end of input'!r}", pos)
        try:
            return Interval(lo, hi, upper_closed=(val == "]"))
        except IntervalError as exc:
            raise IntervalError(f"{exc} (interval at position {start})") from None


def parse(text: str, alphabet=None):
    """Parse ``text``; atoms must belong to ``alphabet`` when it is given."""
    # "inf" lexes as an identifier; the interval rule consumes it.
    return _Parser(text, alphabet).parse()


# -- fragment -----------------------------------------------------------------

@dataclass(frozen=True)
class Literal:
    atom: str
    positive: bool = True

    def holds(self, letter) -> bool:
        return (self.atom in letter) == self.positive

    def __str__(self):
        return self.atom if self.positive else f"!{self.atom}"


@dataclass(frozen=True)
class Conjunct:
    """One timed literal: ``kind`` is G, F, U or X."""

    kind: str
    interval: Interval
    literals: tuple

    def __str__(self):
        if self.kind == "U":
            return f"{self.literals[0]} U{self.interval} {self.literals[1]}"
        return f"{self.kind}{self.interval} {self.literals[0]}"


@dataclass(frozen=True)
class NormalizedFormula:
    conjuncts: tuple

    @property
    def atoms(self) -> set:
        return {lit.atom for c in self.conjuncts for lit in c.literals}

    @property
    def max_bound(self) -> Fraction:
        """Largest finite interval end (0 when there is none)."""
        bounds = [c.interval.upper for c in self.conjuncts if c.interval.upper is not None]
        bounds += [c.interval.lower for c in self.conjuncts]
        return max(bounds, default=Fraction(0))

    @property
    def eventualities(self) -> int:
        return sum(1 for c in self.conjuncts if c.kind != "G")

    def safety_literals(self) -> list:
        return [c.literals[0] for c in self.conjuncts if c.kind == "G"]

    def __str__(self):
        return " & ".join(str(c) for c in self.conjuncts)


def _literal(node, where):
    neg = False
    while isinstance(node, Not):
        neg = not neg
        node = node.arg
    if isinstance(node, Atom):
        return Literal(node.name, not neg)
    if isinstance(node, (Next, Eventually, Always, Until)):
        raise UnsupportedFragment(f"nested temporal operators are not supported (inside {where})",
                                  node)
    raise UnsupportedFragment(f"{where} must be applied to an atom or a negated atom", node)


def validate_fragment(formula) -> NormalizedFormula:
    """Check that ``formula`` is a conjunction of unnested timed literals.

    Allowed conjuncts: ``G[0,inf) l``, ``F I l``, ``l1 U I l2`` and
    ``X I l`` where each ``l`` is an atom or a negated atom.
    """
    out = []

    def visit(node):
        if isinstance(node, And):
            visit(node.left)
            visit(node.right)
        elif isinstance(node, Always):
            if node.interval != ALWAYS:
                raise UnsupportedFragment("only G[0,inf) is supported for G", node)
            out.append(Conjunct("G", node.interval, (_literal(node.arg, "G"),)))
        elif isinstance(node, Eventually):
            out.append(Conjunct("F", node.interval, (_literal(node.arg, "F"),)))
        elif isinstance(node, Next):
            out.append(Conjunct("X", node.interval, (_literal(node.arg, "X"),)))
        elif isinstance(node, Until):
            out.append(Conjunct("U", node.interval,
                                (_literal(node.left, "U"), _literal(node.right, "U"))))
        elif isinstance(node, Or):
            raise UnsupportedFragment("disjunction is not supported", node)
        elif isinstance(node, Not):
            raise UnsupportedFragment("negation is only allowed directly on atoms inside a "
                                      "temporal operator", node)
        else:
            raise UnsupportedFragment("every conjunct needs a temporal operator", node)

    visit(formula)
    return NormalizedFormula(tuple(out))


# -- direct semantics ---------------------------------------------------------

def _check_word(word):
    prev = None
    for i, (_, t) in enumerate(word):
        if t < 0 or (prev is not None and t < prev):
            raise ValueError(f"time stamps must be nondecreasing from 0 (letter {i})")
        prev = t
    if word and word[0][1] != 0:
        raise ValueError("the first letter must be stamped 0")


def _as_word(word):
    return [(frozenset(s), Fraction(t)) for s, t in word]


def brute_force_satisfies(formula: NormalizedFormula, timed_word) -> bool:
    """Evaluate every conjunct straight from the point semantics at position 0."""
    w = _as_word(timed_word)
    _check_word(w)
    if not w:
        raise ValueError("empty timed word")
    n = len(w)
    for c in formula.conjuncts:
        iv = c.interval
        if c.kind == "G":
            ok = all(c.literals[0].holds(s) for s, _ in w)
        elif c.kind == "F":
            ok = any(iv.contains(t) and c.literals[0].holds(s) for s, t in w)
        elif c.kind == "X":
            ok = n > 1 and iv.contains(w[1][1]) and c.literals[0].holds(w[1][0])
        else:
            l1, l2 = c.literals
            ok = any(iv.contains(w[j][1]) and l2.holds(w[j][0])
                     and all(l1.holds(w[k][0]) for k in range(j)) for j in range(n))
        if not ok:
            return False
    return True


# -- timed automata -----------------------------------------------------------

@dataclass(frozen=True)
class ClockConstraint:
    clock: str
    op: str  # one of < <= > >=
    const: Fraction

    def holds(self, value) -> bool:
        return {"<": value < self.const, "<=": value <= self.const,
                ">": value > self.const, ">=": value >= self.const}[self.op]

    def __str__(self):
        return f"{self.clock}{self.op}{_fmt(self.const)}"


@dataclass(frozen=True)
class Edge:
    src: object
    dst: object
    symbol: tuple  # sorted (atom, required truth value) pairs
    guard: tuple   # ClockConstraint conjunction
    resets: tuple = ()

    def enabled(self, letter, clocks) -> bool:
        return (all((a in letter) == v for a, v in self.symbol)
                and all(g.holds(clocks[g.clock]) for g in self.guard))


SINK = "sink"


@dataclass
class Tba:
    locations: list
    initial: object
    clocks: list
    edges: list
    accepting: set
    sink: object = SINK
    component_names: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)
    formula: Optional[NormalizedFormula] = None

    def __post_init__(self):
        self._out = {}
        for e in self.edges:
            self._out.setdefault(e.src, []).append(e)

    def successors(self, loc):
        return self._out.get(loc, [])

    def step(self, loc, letter, clocks):
        """Deterministic move on one letter; returns ``(location, clocks)``."""
        if loc == self.sink:
            return loc, clocks
        hits = [e for e in self.successors(loc) if e.enabled(letter, clocks)]
        if len(hits) != 1:
            raise RuntimeError(f"monitor is not deterministic at {loc} ({len(hits)} enabled edges)")
        e = hits[0]
        if e.resets:
            clocks = dict(clocks)
            for c in e.resets:
                clocks[c] = Fraction(0)
        return e.dst, clocks

    def advance(self, clocks, delta):
        return {c: v + delta for c, v in clocks.items()}

    def initial_clocks(self):
        return {c: Fraction(0) for c in self.clocks}

    def to_dot(self) -> str:
        names = {loc: f"q{i}" for i, loc in enumerate(self.locations)}
        lines = ["digraph tba {", "  rankdir=LR;", '  init [shape=point];']
        for loc in self.locations:
            shape = "doublecircle" if loc in self.accepting else "circle"
            lines.append(f'  {names[loc]} [shape={shape}, label="{_loc_label(loc)}"];')
        lines.append(f"  init -> {names[self.initial]};")
        for e in self.edges:
            sym = " ".join(a if v else f"!{a}" for a, v in e.symbol) or "true"
            grd = " && ".join(str(g) for g in e.guard)
            label = sym + (f" / {grd}" if grd else "")
            lines.append(f'  {names[e.src]} -> {names[e.dst]} [label="{label}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def _loc_label(loc):
    return loc if isinstance(loc, str) else ",".join(loc)


@dataclass
class _Component:
    name: str
    locations: list
    initial: str
    accepting: str
    clock: Optional[str]
    edges: list  # (src, dst, symbol dict, guard tuple)


def _zones(iv: Interval, clock: str):
    """Clock zones that partition [0, inf) around ``iv``: (name, guard)."""
    zones = []
    a, b = iv.lower, iv.upper
    if a > 0:
        zones.append(("before", (ClockConstraint(clock, "<", a),)))
    inside = [] if a == 0 else [ClockConstraint(clock, ">=", a)]
    if b is not None:
        inside.append(ClockConstraint(clock, "<=" if iv.upper_closed else "<", b))
    zones.append(("inside", tuple(inside)))
    if b is not None:
        zones.append(("after", (ClockConstraint(clock, ">" if iv.upper_closed else ">=", b),)))
    return zones


def _valuations(literals):
    atoms = sorted({lit.atom for lit in literals})
    for bits in itertools.product((True, False), repeat=len(atoms)):
        yield dict(zip(atoms, bits))


def _holds(lit, val):
    return val[lit.atom] == lit.positive


def _component(idx, c: Conjunct) -> _Component:
    name = f"c{idx}:{c}"
    if c.kind == "G":
        lit = c.literals[0]
        edges = [("ok", "ok", {lit.atom: lit.positive}, ()),
                 ("ok", SINK, {lit.atom: not lit.positive}, ())]
        return _Component(name, ["ok", SINK], "ok", "ok", None, edges)
    clock = f"x{idx}"
    zones = _zones(c.interval, clock)
    edges = []
    if c.kind == "X":
        edges.append(("start", "wait", {}, ()))
        for val in _valuations(c.literals):
            for zname, guard in zones:
                dst = "sat" if (zname == "inside" and _holds(c.literals[0], val)) else SINK
                edges.append(("wait", dst, val, guard))
        edges.append(("sat", "sat", {}, ()))
        return _Component(name, ["start", "wait", "sat", SINK], "start", "sat", clock, edges)
    for val in _valuations(c.literals):
        for zname, guard in zones:
            if c.kind == "F":
                if zname == "inside" and _holds(c.literals[0], val):
                    dst = "sat"
                elif zname == "after":
                    dst = SINK
                else:
                    dst = "wait"
            else:
                l1, l2 = c.literals
                if zname == "inside" and _holds(l2, val):
                    dst = "sat"
                elif _holds(l1, val) and zname != "after":
                    dst = "wait"
                else:
                    dst = SINK
            edges.append(("wait", dst, val, guard))
    edges.append(("sat", "sat", {}, ()))
    return _Component(name, ["wait", "sat", SINK], "wait", "sat", clock, edges)


def _merge_symbol(parts):
    out = {}
    for p in parts:
        for a, v in p.items():
            if out.get(a, v) != v:
                return None
            out[a] = v
    return out


def _guard_consistent(guard):
    lo, lo_strict, hi, hi_strict = {}, {}, {}, {}
    for g in guard:
        c = g.clock
        if g.op in (">", ">="):
            if c not in lo or g.const > lo[c] or (g.const == lo[c] and g.op == ">"):
                lo[c], lo_strict[c] = g.const, g.op == ">"
        else:
            if c not in hi or g.const < hi[c] or (g.const == hi[c] and g.op == "<"):
                hi[c], hi_strict[c] = g.const, g.op == "<"
    for c in set(lo) & set(hi):
        if lo[c] > hi[c] or (lo[c] == hi[c] and (lo_strict[c] or hi_strict[c])):
            return False
    for c in hi:
        if hi[c] == 0 and hi_strict[c]:
            return False
    return True


def build_tba(formula: NormalizedFormula) -> Tba:
    """Synchronous product of one monitor per conjunct.

    Every product location with some component in its sink collapses into
    a single rejecting sink.  ``stats["cartesian"]`` is the unpruned size.
    """
    comps = [_component(i, c) for i, c in enumerate(formula.conjuncts)]
    cartesian = 1
    for comp in comps:
        cartesian *= len(comp.locations)
    by_src = []
    for comp in comps:
        d = {}
        for e in comp.edges:
            d.setdefault(e[0], []).append(e)
        by_src.append(d)
    init = tuple(comp.initial for comp in comps)
    accepting_loc = tuple(comp.accepting for comp in comps)
    locations, edges = [init], []
    seen = {init}
    queue = deque([init])
    while queue:
        loc = queue.popleft()
        if loc == SINK:
            continue
        choices = [by_src[i][part] for i, part in enumerate(loc)]
        for combo in itertools.product(*choices):
            sym = _merge_symbol([e[2] for e in combo])
            if sym is None:
                continue
            guard = tuple(g for e in combo for g in e[3])
            if not _guard_consistent(guard):
                continue
            dst = tuple(e[1] for e in combo)
            if SINK in dst:
                dst = SINK
            edges.append(Edge(loc, dst, tuple(sorted(sym.items())), guard))
            if dst not in seen:
                seen.add(dst)
                locations.append(dst)
                queue.append(dst)
    if SINK not in seen:
        locations.append(SINK)
    accepting = {accepting_loc} if accepting_loc in seen else set()
    if not comps:
        accepting = {init}
    clocks = [comp.clock for comp in comps if comp.clock is not None]
    return Tba(locations, init, clocks, edges, accepting, SINK, [c.name for c in comps],
               {"cartesian": cartesian, "reachable": len(locations), "edges": len(edges)},
               formula)


def accepts(tba: Tba, timed_word) -> bool:
    """Run the monitor on a finite timed word with exact rational clocks."""
    w = _as_word(timed_word)
    _check_word(w)
    if not w:
        raise ValueError("empty timed word")
    loc, clocks = tba.initial, tba.initial_clocks()
    prev = Fraction(0)
    for letter, t in w:
        clocks = tba.advance(clocks, t - prev)
        prev = t
        loc, clocks = tba.step(loc, letter, clocks)
        if loc == tba.sink:
            return False
    return loc in tba.accepting


def compile_formula(text: str, alphabet=None):
    """Parse, check the fragment and build the monitor in one go."""
    nf = validate_fragment(parse(text, alphabet))
    return nf, build_tba(nf)
