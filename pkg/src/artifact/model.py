"""The robust POMDP data model.

A model consists of finite states and actions, three deterministic
observation maps (agent-private, nature-private and public), rewards,
an affine transition *template* whose entries are affine expressions in
the uncertainty variables, a polytopic uncertainty set, a stickiness
function and an order of play.

Everything is exact: probabilities, bounds and rewards are ``Fraction``.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import DomainError, InfeasibleError
from .rational import RationalLike, as_rational, format_rational, rref, solve_square

#: Placeholder label for "no action yet" / "no private observation".
BOTTOM = "⊥"

State = str
Action = str
Observation = str


# ---------------------------------------------------------------------------
# Assignments
# ---------------------------------------------------------------------------


class Assignment(Mapping[str, Fraction]):
    """An immutable, hashable mapping from variable names to rationals.

    The same class represents total assignments (``u``) and partial ones
    (``u^↪``): a variable that is absent from the mapping is *undefined*.
    ``Assignment()`` is the totally undefined assignment ``u^⊥``.
    """

    __slots__ = ("_items", "_map", "_hash")

    def __init__(self, values: Mapping[str, RationalLike | None] | Iterable[tuple[str, RationalLike]] | None = None):
        if values is None:
            pairs: Iterable[tuple[str, RationalLike | None]] = ()
        elif isinstance(values, Mapping):
            pairs = values.items()
        else:
            pairs = values
        items = tuple(sorted((str(k), as_rational(v)) for k, v in pairs if v is not None))
        self._items = items
        self._map = dict(items)
        self._hash = hash(items)

    def __getitem__(self, key: str) -> Fraction:
        return self._map[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._map)

    def __len__(self) -> int:
        return len(self._items)

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Assignment):
            return self._items == other._items
        if isinstance(other, Mapping):
            return self._map == dict(other)
        return NotImplemented

    def __lt__(self, other: "Assignment") -> bool:
        return self._items < other._items

    def __repr__(self) -> str:
        return "{" + ", ".join(f"{k}={format_rational(v)}" for k, v in self._items) + "}"

    def items_tuple(self) -> tuple[tuple[str, Fraction], ...]:
        return self._items

    def merged(self, updates: Mapping[str, Fraction]) -> "Assignment":
        """Return a copy with ``updates`` applied on top."""
        if not updates:
            return self
        new = dict(self._map)
        new.update(updates)
        return Assignment(new)

    def restricted(self, names: Iterable[str]) -> "Assignment":
        names = set(names)
        return Assignment({k: v for k, v in self._items if k in names})


PartialAssignment = Assignment
UNDEFINED = Assignment()


def agrees(u: Mapping[str, Fraction], partial: Mapping[str, Fraction]) -> bool:
    """True iff ``u`` coincides with ``partial`` wherever ``partial`` is defined."""
    for name, value in partial.items():
        if name not in u or u[name] != value:
            return False
    return True


# ---------------------------------------------------------------------------
# Affine expressions and constraints
# ---------------------------------------------------------------------------


def _normalise_coefficients(coefficients: Mapping[str, RationalLike] | Iterable[tuple[str, RationalLike]]) -> tuple[tuple[str, Fraction], ...]:
    pairs = coefficients.items() if isinstance(coefficients, Mapping) else coefficients
    acc: dict[str, Fraction] = {}
    for name, coef in pairs:
        acc[name] = acc.get(name, Fraction(0)) + as_rational(coef)
    return tuple(sorted((k, v) for k, v in acc.items() if v != 0))


@dataclass(frozen=True)
class AffineExpr:
    """``constant + Σ coefficient·variable`` with rational coefficients."""

    constant: Fraction = Fraction(0)
    coefficients: tuple[tuple[str, Fraction], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "constant", as_rational(self.constant))
        object.__setattr__(self, "coefficients", _normalise_coefficients(self.coefficients))

    @classmethod
    def const(cls, value: RationalLike) -> "AffineExpr":
        return cls(as_rational(value))

    @classmethod
    def var(cls, name: str, coefficient: RationalLike = 1) -> "AffineExpr":
        return cls(Fraction(0), ((name, as_rational(coefficient)),))

    @property
    def variables(self) -> frozenset[str]:
        return frozenset(name for name, _ in self.coefficients)

    @property
    def is_constant(self) -> bool:
        return not self.coefficients

    def coefficient(self, name: str) -> Fraction:
        for k, v in self.coefficients:
            if k == name:
                return v
        return Fraction(0)

    def evaluate(self, u: Mapping[str, Fraction]):
        """Evaluate at an assignment; values may also be symbolic objects."""
        total = self.constant
        for name, coef in self.coefficients:
            total = total + coef * u[name]
        return total

    def __add__(self, other: "AffineExpr | RationalLike") -> "AffineExpr":
        if not isinstance(other, AffineExpr):
            other = AffineExpr.const(other)
        return AffineExpr(self.constant + other.constant, self.coefficients + other.coefficients)

    __radd__ = __add__

    def __neg__(self) -> "AffineExpr":
        return AffineExpr(-self.constant, tuple((k, -v) for k, v in self.coefficients))

    def __sub__(self, other: "AffineExpr | RationalLike") -> "AffineExpr":
        if not isinstance(other, AffineExpr):
            other = AffineExpr.const(other)
        return self + (-other)

    def __rsub__(self, other: RationalLike) -> "AffineExpr":
        return AffineExpr.const(other) - self

    def __mul__(self, scalar: RationalLike) -> "AffineExpr":
        s = as_rational(scalar)
        return AffineExpr(self.constant * s, tuple((k, v * s) for k, v in self.coefficients))

    __rmul__ = __mul__

    def __str__(self) -> str:
        parts: list[str] = []
        for name, coef in self.coefficients:
            sign = "-" if coef < 0 else "+"
            mag = abs(coef)
            term = name if mag == 1 else f"{format_rational(mag)}*{name}"
            parts.append(f"{sign} {term}")
        if self.constant != 0 or not parts:
            sign = "-" if self.constant < 0 else "+"
            parts.insert(0, f"{sign} {format_rational(abs(self.constant))}")
        text = " ".join(parts)
        return text[2:] if text.startswith("+ ") else "-" + text[2:]


RELATIONS = ("=", "<=", ">=")


@dataclass(frozen=True)
class LinearConstraint:
    """``Σ coefficient·variable  relation  rhs`` with relation one of ``= <= >=``."""

    coefficients: tuple[tuple[str, Fraction], ...]
    relation: str
    rhs: Fraction

    def __post_init__(self) -> None:
        if self.relation not in RELATIONS:
            raise ValueError(f"unknown relation {self.relation!r}")
        object.__setattr__(self, "coefficients", _normalise_coefficients(self.coefficients))
        object.__setattr__(self, "rhs", as_rational(self.rhs))

    @classmethod
    def from_expr(cls, lhs: AffineExpr, relation: str, rhs: AffineExpr | RationalLike = 0) -> "LinearConstraint":
        if not isinstance(rhs, AffineExpr):
            rhs = AffineExpr.const(rhs)
        diff = lhs - rhs
        return cls(diff.coefficients, relation, -diff.constant)

    @property
    def variables(self) -> frozenset[str]:
        return frozenset(k for k, _ in self.coefficients)

    def lhs_value(self, u: Mapping[str, Fraction]) -> Fraction:
        return sum((c * u[k] for k, c in self.coefficients), Fraction(0))

    def holds(self, u: Mapping[str, Fraction]) -> bool:
        value = self.lhs_value(u)
        if self.relation == "=":
            return value == self.rhs
        if self.relation == "<=":
            return value <= self.rhs
        return value >= self.rhs

    def __str__(self) -> str:
        return f"{AffineExpr(Fraction(0), self.coefficients)} {self.relation} {format_rational(self.rhs)}"


# ---------------------------------------------------------------------------
# Uncertainty sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UncertaintySet:
    """Box bounds plus linear couplings over a finite set of variables."""

    variables: tuple[str, ...]
    boxes: tuple[tuple[Fraction, Fraction], ...]
    couplings: tuple[LinearConstraint, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "boxes", tuple((as_rational(lo), as_rational(hi)) for lo, hi in self.boxes))
        object.__setattr__(self, "couplings", tuple(self.couplings))
        if len(set(self.variables)) != len(self.variables):
            raise ValueError("duplicate variable names")
        if len(self.boxes) != len(self.variables):
            raise ValueError("one box per variable is required")
        for name, (lo, hi) in zip(self.variables, self.boxes):
            if lo > hi:
                raise InfeasibleError(f"empty box for variable {name}: [{lo}, {hi}]")
        known = set(self.variables)
        for c in self.couplings:
            unknown = c.variables - known
            if unknown:
                raise DomainError(f"coupling {c} mentions unknown variables {sorted(unknown)}")

    @classmethod
    def from_boxes(cls, boxes: Mapping[str, tuple[RationalLike, RationalLike]], couplings: Sequence[LinearConstraint] = ()) -> "UncertaintySet":
        names = tuple(boxes)
        return cls(names, tuple((as_rational(lo), as_rational(hi)) for lo, hi in boxes.values()), tuple(couplings))

    def box(self, name: str) -> tuple[Fraction, Fraction]:
        try:
            return self.boxes[self.variables.index(name)]
        except ValueError:
            raise DomainError(f"unknown variable {name!r}") from None

    def contains(self, u: Mapping[str, Fraction]) -> bool:
        """Exact membership test; ``u`` must define every variable."""
        for name, (lo, hi) in zip(self.variables, self.boxes):
            if name not in u:
                return False
            if not lo <= u[name] <= hi:
                return False
        if set(u) - set(self.variables):
            return False
        return all(c.holds(u) for c in self.couplings)

    __contains__ = contains  # type: ignore[assignment]

    def vertices(self) -> tuple[Assignment, ...]:
        return _vertices(self)

    def is_empty(self) -> bool:
        return not self.vertices()

    # -- parametrisation used for grids -----------------------------------

    @cached_property
    def _parametrisation(self) -> tuple[tuple[str, ...], dict[str, AffineExpr]]:
        """Express pivot variables of the equality system through free ones."""
        eq_rows: list[list[Fraction]] = []
        index = {v: i for i, v in enumerate(self.variables)}
        n = len(self.variables)
        for name, (lo, hi) in zip(self.variables, self.boxes):
            if lo == hi:
                row = [Fraction(0)] * (n + 1)
                row[index[name]] = Fraction(1)
                row[n] = lo
                eq_rows.append(row)
        for c in self.couplings:
            if c.relation == "=":
                row = [Fraction(0)] * (n + 1)
                for k, v in c.coefficients:
                    row[index[k]] += v
                row[n] = c.rhs
                eq_rows.append(row)
        reduced, pivots = rref(eq_rows)
        free = tuple(v for i, v in enumerate(self.variables) if i not in pivots)
        dependent: dict[str, AffineExpr] = {}
        for r, pc in enumerate(pivots):
            row = reduced[r]
            coeffs = tuple((self.variables[j], -row[j]) for j in range(n) if j != pc and row[j] != 0)
            dependent[self.variables[pc]] = AffineExpr(row[n], coeffs)
        return free, dependent

    @property
    def free_variables(self) -> tuple[str, ...]:
        """Variables that can be chosen independently (after equalities)."""
        return self._parametrisation[0]

    def complete(self, free_values: Mapping[str, Fraction]) -> Assignment | None:
        """Extend values of the free variables to a member, or ``None``."""
        _, dependent = self._parametrisation
        values = dict(free_values)
        for name, expr in dependent.items():
            values[name] = expr.evaluate(free_values)
        u = Assignment(values)
        return u if self.contains(u) else None

    def grid(self, points: int) -> list[Assignment]:
        """Vertices followed by members on a regular grid over the free variables."""
        result: list[Assignment] = list(self.vertices())
        seen = set(result)
        free = self.free_variables
        if points < 2 or not free:
            return result
        axes = []
        for name in free:
            lo, hi = self.box(name)
            axes.append([lo + (hi - lo) * Fraction(i, points - 1) for i in range(points)])
        for combo in itertools.product(*axes):
            u = self.complete(dict(zip(free, combo)))
            if u is not None and u not in seen:
                seen.add(u)
                result.append(u)
        return result

    def local_grid(self, center: Mapping[str, Fraction], spacing: Fraction, radius: int = 1) -> list[Assignment]:
        """Members on a small grid of half-width ``radius·spacing`` around ``center``."""
        free = self.free_variables
        if not free:
            return []
        axes = []
        for name in free:
            lo, hi = self.box(name)
            c = center[name]
            ticks = sorted({min(hi, max(lo, c + k * spacing)) for k in range(-radius, radius + 1)})
            axes.append(ticks)
        out: list[Assignment] = []
        for combo in itertools.product(*axes):
            u = self.complete(dict(zip(free, combo)))
            if u is not None:
                out.append(u)
        return out


@lru_cache(maxsize=4096)
def _vertices(uset: UncertaintySet) -> tuple[Assignment, ...]:
    names = uset.variables
    n = len(names)
    if n == 0:
        return (Assignment(),) if all(c.rhs == 0 or c.holds({}) for c in uset.couplings) else ()
    index = {v: i for i, v in enumerate(names)}
    equalities: list[tuple[list[Fraction], Fraction]] = []
    inequalities: list[tuple[list[Fraction], Fraction]] = []  # a·x <= b
    for i, (lo, hi) in enumerate(uset.boxes):
        unit = [Fraction(0)] * n
        unit[i] = Fraction(1)
        if lo == hi:
            equalities.append((unit, lo))
        else:
            inequalities.append((unit, hi))
            inequalities.append(([-x for x in unit], -lo))
    for c in uset.couplings:
        row = [Fraction(0)] * n
        for k, v in c.coefficients:
            row[index[k]] += v
        if c.relation == "=":
            equalities.append((row, c.rhs))
        elif c.relation == "<=":
            inequalities.append((row, c.rhs))
        else:
            inequalities.append(([-x for x in row], -c.rhs))

    reduced, pivots = rref([r + [b] for r, b in equalities])
    for row in reduced[len(pivots):]:
        if row[n] != 0:
            return ()
    base_rows = [(row[:n], row[n]) for row in reduced[: len(pivots)]]
    needed = n - len(pivots)
    found: list[Assignment] = []
    seen: set[Assignment] = set()
    for combo in itertools.combinations(inequalities, needed):
        system = base_rows + list(combo)
        solution = solve_square([r for r, _ in system], [b for _, b in system])
        if solution is None:
            continue
        u = Assignment(dict(zip(names, solution)))
        if u in seen or not uset.contains(u):
            continue
        seen.add(u)
        found.append(u)
    found.sort(key=lambda a: tuple(a[v] for v in names))
    return tuple(found)


def uncertainty_vertices(uset: UncertaintySet) -> list[Assignment]:
    """Exhaustive, duplicate-free vertex list of the polytope (sorted)."""
    verts = uset.vertices()
    if not verts:
        raise InfeasibleError("uncertainty set is empty")
    return list(verts)


def constrain(uset: UncertaintySet, partial: Mapping[str, Fraction]) -> UncertaintySet:
    """Restrict ``uset`` to the members agreeing with ``partial``."""
    if not partial:
        return uset
    boxes = []
    for name, (lo, hi) in zip(uset.variables, uset.boxes):
        if name in partial:
            value = partial[name]
            if not lo <= value <= hi:
                raise InfeasibleError(f"{name}={format_rational(value)} lies outside [{lo}, {hi}]")
            boxes.append((value, value))
        else:
            boxes.append((lo, hi))
    unknown = set(partial) - set(uset.variables)
    if unknown:
        raise DomainError(f"partial assignment mentions unknown variables {sorted(unknown)}")
    result = UncertaintySet(uset.variables, tuple(boxes), uset.couplings)
    if result.is_empty():
        raise InfeasibleError(f"no member of the uncertainty set agrees with {partial!r}")
    return result


# ---------------------------------------------------------------------------
# Stickiness and order of play
# ---------------------------------------------------------------------------


class StickinessKind(enum.Enum):
    ZERO = "zero"
    FULL = "full"
    OBSERVATION = "observation"
    CUSTOM = "custom"


@dataclass(frozen=True)
class Stickiness:
    """Which variables stick after nature chooses an assignment.

    ``influence`` (observation-based only) maps each variable to the
    state-action pairs whose transition it can influence.  ``table``
    (custom only) lists the tuples ``(v, z_n, z_pub, a)`` for which the
    variable sticks; everything else does not stick.
    """

    kind: StickinessKind
    influence: tuple[tuple[str, frozenset[tuple[State, Action]]], ...] = ()
    table: frozenset[tuple[str, Observation, Observation, Action]] = frozenset()

    @classmethod
    def zero(cls) -> "Stickiness":
        return cls(StickinessKind.ZERO)

    @classmethod
    def full(cls) -> "Stickiness":
        return cls(StickinessKind.FULL)

    @classmethod
    def observation_based(cls, influence: Mapping[str, Iterable[tuple[State, Action]]]) -> "Stickiness":
        return cls(StickinessKind.OBSERVATION, tuple(sorted((v, frozenset(pairs)) for v, pairs in influence.items())))

    @classmethod
    def custom(cls, table: Iterable[tuple[str, Observation, Observation, Action]]) -> "Stickiness":
        return cls(StickinessKind.CUSTOM, (), frozenset(tuple(t) for t in table))

    def influence_of(self, variable: str) -> frozenset[tuple[State, Action]]:
        for v, pairs in self.influence:
            if v == variable:
                return pairs
        return frozenset()


class PlayOrder(enum.Enum):
    AGENT_FIRST = "agent_first"
    NATURE_FIRST = "nature_first"


# ---------------------------------------------------------------------------
# The model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Rpomdp:
    """A robust POMDP with stickiness and order of play.

    ``transitions[(s, a)]`` maps successor states to affine expressions; an
    action is *enabled* in ``s`` iff ``(s, a)`` has a row.  Missing rewards
    are zero.
    """

    states: tuple[State, ...]
    actions: tuple[Action, ...]
    initial_state: State
    obs_agent: Mapping[State, Observation]
    obs_nature: Mapping[State, Observation]
    obs_public: Mapping[State, Observation]
    rewards: Mapping[tuple[State, Action], Fraction]
    transitions: Mapping[tuple[State, Action], Mapping[State, AffineExpr]]
    uncertainty: UncertaintySet
    stickiness: Stickiness = field(default_factory=Stickiness.full)
    play_order: PlayOrder = PlayOrder.AGENT_FIRST
    name: str = ""

    # -- structure -------------------------------------------------------

    @property
    def variables(self) -> tuple[str, ...]:
        return self.uncertainty.variables

    @property
    def agent_first(self) -> bool:
        return self.play_order is PlayOrder.AGENT_FIRST

    @cached_property
    def _enabled(self) -> dict[State, tuple[Action, ...]]:
        table: dict[State, list[Action]] = {s: [] for s in self.states}
        order = {a: i for i, a in enumerate(self.actions)}
        for (s, a) in self.transitions:
            table.setdefault(s, []).append(a)
        return {s: tuple(sorted(acts, key=lambda a: order.get(a, len(order)))) for s, acts in table.items()}

    def enabled_actions(self, state: State) -> tuple[Action, ...]:
        try:
            return self._enabled[state]
        except KeyError:
            raise DomainError(f"unknown state {state!r}") from None

    @cached_property
    def _agent_obs_actions(self) -> dict[tuple[Observation, Observation], tuple[Action, ...]]:
        table: dict[tuple[Observation, Observation], tuple[Action, ...]] = {}
        for s in self.states:
            table.setdefault(self.agent_observation(s), self.enabled_actions(s))
        return table

    def actions_for_observation(self, obs: tuple[Observation, Observation]) -> tuple[Action, ...]:
        """Enabled actions for the agent observation ``(z^a, z_pub)``."""
        try:
            return self._agent_obs_actions[obs]
        except KeyError:
            raise DomainError(f"unknown agent observation {obs!r}") from None

    def reward(self, state: State, action: Action) -> Fraction:
        return self.rewards.get((state, action), Fraction(0))

    def observation(self, state: State) -> tuple[Observation, Observation, Observation]:
        return self.obs_agent[state], self.obs_nature[state], self.obs_public[state]

    def agent_observation(self, state: State) -> tuple[Observation, Observation]:
        return self.obs_agent[state], self.obs_public[state]

    def nature_observation(self, state: State) -> tuple[Observation, Observation]:
        return self.obs_nature[state], self.obs_public[state]

    @cached_property
    def observation_alphabets(self) -> tuple[frozenset[Observation], frozenset[Observation], frozenset[Observation]]:
        return (frozenset(self.obs_agent.values()), frozenset(self.obs_nature.values()), frozenset(self.obs_public.values()))

    @cached_property
    def _row_cache(self) -> dict:
        return {}

    def row(self, state: State, action: Action, u: Mapping[str, Fraction]) -> tuple[tuple[State, Fraction], ...]:
        """Successors with positive probability under assignment ``u``."""
        key = (state, action, u)
        cache = self._row_cache
        hit = cache.get(key)
        if hit is not None:
            return hit
        try:
            template = self.transitions[(state, action)]
        except KeyError:
            raise DomainError(f"action {action!r} is not enabled in state {state!r}") from None
        out = []
        for succ, expr in template.items():
            p = expr.evaluate(u)
            if p > 0:
                out.append((succ, p))
        result = tuple(out)
        if isinstance(u, Assignment):
            cache[key] = result
        return result

    def probability(self, state: State, action: Action, u: Mapping[str, Fraction], succ: State) -> Fraction:
        template = self.transitions.get((state, action))
        if template is None or succ not in template:
            return Fraction(0)
        return template[succ].evaluate(u)

    @cached_property
    def reward_bound(self) -> Fraction:
        return max((abs(r) for r in self.rewards.values()), default=Fraction(0))

    # -- stickiness ------------------------------------------------------

    @cached_property
    def _sticky_tuples(self) -> frozenset[tuple[str, Observation, Observation, Action]]:
        kind = self.stickiness.kind
        if kind is StickinessKind.CUSTOM:
            return self.stickiness.table
        if kind is StickinessKind.OBSERVATION:
            out = set()
            for v, pairs in self.stickiness.influence:
                for s, a in pairs:
                    if s in self.obs_nature:
                        out.add((v, self.obs_nature[s], self.obs_public[s], a))
            return frozenset(out)
        return frozenset()

    @cached_property
    def _sticky_cache(self) -> dict:
        return {}

    def sticking(self, z_n: Observation, z_pub: Observation, action: Action) -> frozenset[str]:
        """Variables that stick after nature observes ``(z_n, z_pub)`` and ``action``."""
        key = (z_n, z_pub, action)
        hit = self._sticky_cache.get(key)
        if hit is not None:
            return hit
        kind = self.stickiness.kind
        if kind is StickinessKind.FULL:
            result = frozenset(self.variables)
        elif kind is StickinessKind.ZERO:
            result = frozenset()
        else:
            table = self._sticky_tuples
            result = frozenset(v for v in self.variables if (v, z_n, z_pub, action) in table)
        self._sticky_cache[key] = result
        return result

    # -- variants ----------------------------------------------------------

    def with_stickiness(self, stickiness: Stickiness) -> "Rpomdp":
        return replace(self, stickiness=stickiness)

    def with_play_order(self, order: PlayOrder) -> "Rpomdp":
        return replace(self, play_order=order)

    def template_influence(self) -> dict[str, frozenset[tuple[State, Action]]]:
        """For every variable, the state-action pairs whose row mentions it."""
        table: dict[str, set[tuple[State, Action]]] = {v: set() for v in self.variables}
        for (s, a), row in self.transitions.items():
            for expr in row.values():
                for v in expr.variables:
                    table.setdefault(v, set()).add((s, a))
        return {v: frozenset(p) for v, p in table.items()}


# ---------------------------------------------------------------------------
# Stickiness queries
# ---------------------------------------------------------------------------


def stick(model: Rpomdp, variable: str, z_n: Observation, z_pub: Observation, action: Action) -> bool:
    """The stickiness function ``stick(v, z_n, z_pub, a)``."""
    if variable not in model.variables:
        raise DomainError(f"unknown variable {variable!r}")
    _, nature_alpha, public_alpha = model.observation_alphabets
    if z_n not in nature_alpha:
        raise DomainError(f"unknown nature observation {z_n!r}")
    if z_pub not in public_alpha:
        raise DomainError(f"unknown public observation {z_pub!r}")
    if action not in model.actions:
        raise DomainError(f"unknown action {action!r}")
    return variable in model.sticking(z_n, z_pub, action)


def sticking_variables(model: Rpomdp, state: State, action: Action) -> frozenset[str]:
    """``U^stick(s, a)``: variables sticking after ``a`` is played in ``s``."""
    if state not in model.obs_nature:
        raise DomainError(f"unknown state {state!r}")
    if action not in model.actions:
        raise DomainError(f"unknown action {action!r}")
    return model.sticking(model.obs_nature[state], model.obs_public[state], action)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    code: str
    message: str

    def __str__(self) -> str:
        return f"[{self.code}] {self.message}"


@dataclass
class ValidationReport:
    """Violations (empty iff the model is well-formed) plus informational notes."""

    violations: list[Violation] = field(default_factory=list)
    #: (s, a, s') -> True when the entry is zero for some member and positive for another.
    graph_changes: dict[tuple[State, Action, State], bool] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def graph_preserving(self) -> bool:
        return not any(self.graph_changes.values())

    def __len__(self) -> int:
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)

    def codes(self) -> set[str]:
        return {v.code for v in self.violations}


def validate_model(model: Rpomdp) -> ValidationReport:
    """Check every structural invariant; violations are returned as data."""
    report = ValidationReport()
    bad = report.violations.append
    states = set(model.states)
    actions = set(model.actions)

    if len(states) != len(model.states):
        bad(Violation("duplicate-state", "state names are not unique"))
    if len(actions) != len(model.actions):
        bad(Violation("duplicate-action", "action names are not unique"))
    if BOTTOM in actions:
        bad(Violation("reserved-label", f"{BOTTOM!r} is reserved and cannot be an action"))
    if model.initial_state not in states:
        bad(Violation("initial-state", f"initial state {model.initial_state!r} is not a state"))

    for label, mapping in (("agent", model.obs_agent), ("nature", model.obs_nature), ("public", model.obs_public)):
        for s in model.states:
            if s not in mapping:
                bad(Violation("observation-missing", f"state {s!r} has no {label} observation"))
        for s in mapping:
            if s not in states:
                bad(Violation("observation-unknown-state", f"{label} observation given for unknown state {s!r}"))

    for (s, a) in model.rewards:
        if (s, a) not in model.transitions:
            bad(Violation("reward-unknown-pair", f"reward given for ({s}, {a}) which is not an enabled pair"))

    variables = set(model.variables)
    for (s, a), row in model.transitions.items():
        if s not in states:
            bad(Violation("transition-unknown-state", f"transition row for unknown state {s!r}"))
        if a not in actions:
            bad(Violation("transition-unknown-action", f"transition row for unknown action {a!r}"))
        total = AffineExpr()
        for succ, expr in row.items():
            if succ not in states:
                bad(Violation("transition-unknown-state", f"({s}, {a}) leads to unknown state {succ!r}"))
            unknown = expr.variables - variables
            if unknown:
                bad(Violation("unknown-variable", f"({s}, {a}, {succ}) uses unknown variables {sorted(unknown)}"))
            total = total + expr
        if not (total.is_constant and total.constant == 1):
            bad(Violation("row-sum", f"row ({s}, {a}) sums to {total}, not 1"))

    for s in model.states:
        if not model._enabled.get(s):
            bad(Violation("no-action", f"state {s!r} has no enabled action"))

    if all(s in model.obs_agent and s in model.obs_public for s in model.states):
        groups: dict[tuple[str, str], tuple[Action, ...]] = {}
        for s in model.states:
            key = model.agent_observation(s)
            acts = model._enabled.get(s, ())
            if key in groups and groups[key] != acts:
                bad(Violation("observation-actions", f"states sharing agent observation {key} enable different actions"))
            groups.setdefault(key, acts)

    vertices = model.uncertainty.vertices()
    if not vertices:
        bad(Violation("empty-uncertainty", "the uncertainty set has no member"))
    elif not any(v.code == "unknown-variable" for v in report.violations):
        for (s, a), row in model.transitions.items():
            for succ, expr in row.items():
                values = [expr.evaluate(u) for u in vertices]
                lo, hi = min(values), max(values)
                if lo < 0 or hi > 1:
                    bad(Violation("probability-range", f"entry ({s}, {a}, {succ}) = {expr} leaves [0, 1] on the uncertainty set"))
                report.graph_changes[(s, a, succ)] = lo == 0 and hi > 0

    st = model.stickiness
    if st.kind is StickinessKind.OBSERVATION:
        for v, pairs in st.influence:
            if v not in variables:
                bad(Violation("stickiness", f"influence given for unknown variable {v!r}"))
            for s, a in pairs:
                if s not in states or a not in actions:
                    bad(Violation("stickiness", f"influence of {v!r} mentions unknown pair ({s}, {a})"))
    elif st.kind is StickinessKind.CUSTOM:
        for v, zn, zp, a in st.table:
            if v not in variables or a not in actions:
                bad(Violation("stickiness", f"custom stickiness entry {(v, zn, zp, a)} is not over the model"))
    return report


# ---------------------------------------------------------------------------
# Determinisation of stochastic / uncertain observations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RawRpomdp:
    """A model whose transition template also emits the observations.

    ``template[(s, a)][(s', z_a, z_n, z_pub)]`` is an affine expression; the
    initial state emits ``initial_observation`` deterministically.
    """

    states: tuple[State, ...]
    actions: tuple[Action, ...]
    initial_state: State
    initial_observation: tuple[Observation, Observation, Observation]
    rewards: Mapping[tuple[State, Action], Fraction]
    template: Mapping[tuple[State, Action], Mapping[tuple[State, Observation, Observation, Observation], AffineExpr]]
    uncertainty: UncertaintySet
    stickiness: Stickiness = field(default_factory=Stickiness.full)
    play_order: PlayOrder = PlayOrder.AGENT_FIRST


def product_state_name(state: State, z_a: Observation, z_n: Observation, z_pub: Observation) -> State:
    return f"{state}<{z_a},{z_n},{z_pub}>"


def determinize_observations(raw: RawRpomdp) -> Rpomdp:
    """Fold emitted observations into the state so observation maps become deterministic."""
    problems = []
    for (s, a), row in raw.template.items():
        total = AffineExpr()
        for expr in row.values():
            total = total + expr
        if not (total.is_constant and total.constant == 1):
            problems.append(f"row ({s}, {a}) sums to {total}")
    if problems:
        raise DomainError("malformed transition-observation template: " + "; ".join(problems))

    start = (raw.initial_state, *raw.initial_observation)
    order: list[tuple[str, str, str, str]] = [start]
    seen = {start}
    transitions: dict[tuple[State, Action], dict[State, AffineExpr]] = {}
    rewards: dict[tuple[State, Action], Fraction] = {}
    i = 0
    while i < len(order):
        node = order[i]
        i += 1
        s = node[0]
        name = product_state_name(*node)
        for a in raw.actions:
            row = raw.template.get((s, a))
            if row is None:
                continue
            out: dict[State, AffineExpr] = {}
            for succ, expr in row.items():
                if expr.is_constant and expr.constant == 0:
                    continue
                if succ not in seen:
                    seen.add(succ)
                    order.append(succ)
                out[product_state_name(*succ)] = expr
            transitions[(name, a)] = out
            if (s, a) in raw.rewards:
                rewards[(name, a)] = raw.rewards[(s, a)]

    names = tuple(product_state_name(*n) for n in order)
    stickiness = raw.stickiness
    if stickiness.kind is StickinessKind.OBSERVATION:
        lifted = {}
        for v, pairs in stickiness.influence:
            lifted[v] = {(product_state_name(*n), a) for n in order for (s, a) in pairs if n[0] == s}
        stickiness = Stickiness.observation_based(lifted)
    return Rpomdp(
        states=names,
        actions=raw.actions,
        initial_state=names[0],
        obs_agent={product_state_name(*n): n[1] for n in order},
        obs_nature={product_state_name(*n): n[2] for n in order},
        obs_public={product_state_name(*n): n[3] for n in order},
        rewards=rewards,
        transitions=transitions,
        uncertainty=raw.uncertainty,
        stickiness=stickiness,
        play_order=raw.play_order,
    )
