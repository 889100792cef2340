"""Agent and nature policies, path distributions, and the g/f conversions.

Policies are explicit finite tables.  A history missing from a table falls
back to a declared default: the first enabled action for the agent, and
the first vertex of the uncertainty set restricted to the fixed variables
for nature.  Mixed policies are finite distributions over deterministic
policies of the same player.
"""

from __future__ import annotations

import enum
import itertools
import logging
from fractions import Fraction
from typing import Hashable, Iterable, Iterator, Mapping

from .errors import CapacityError, ContractError
from .model import Action, Assignment, PlayOrder, Rpomdp, State, UNDEFINED, agrees, constrain
from .rational import RationalLike, as_rational
from .trajectories import (
    AgentHistory,
    NatureHistory,
    Path,
    fix_nature_history,
    observe_agent,
    observe_nature,
    possible_successors,
    upd,
)

log = logging.getLogger(__name__)

DEFAULT_POLICY_CAP = 10_000


class PolicyKind(enum.Enum):
    STOCHASTIC = "stochastic"
    DETERMINISTIC = "deterministic"
    MIXED = "mixed"


Distribution = tuple  # tuple[tuple[item, Fraction], ...]


def make_distribution(weights: Mapping | Iterable[tuple[Hashable, RationalLike]]) -> Distribution:
    """Normalise a finite distribution: drop zero entries, require an exact total of 1."""
    pairs = weights.items() if isinstance(weights, Mapping) else weights
    acc: dict = {}
    for item, p in pairs:
        p = as_rational(p)
        if p < 0:
            raise ContractError(f"negative probability {p} for {item!r}")
        acc[item] = acc.get(item, Fraction(0)) + p
    out = tuple((item, p) for item, p in acc.items() if p != 0)
    total = sum((p for _, p in out), Fraction(0))
    if total != 1:
        raise ContractError(f"distribution sums to {total}, not 1")
    return out


class _Policy:
    """Shared table machinery; subclasses define key types and fallbacks."""

    __slots__ = ("kind", "table", "components", "_hash")

    def __init__(self, kind: PolicyKind, table: Mapping | None = None, components: Iterable | None = None):
        self.kind = kind
        self.table: dict = dict(table or {})
        self.components: tuple = tuple(components or ())
        self._hash: int | None = None

    def __eq__(self, other: object) -> bool:
        if type(other) is not type(self):
            return NotImplemented
        return (self.kind, self.table, self.components) == (other.kind, other.table, other.components)  # type: ignore[attr-defined]

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.kind, frozenset(self.table.items()), self.components))
        return self._hash

    def __len__(self) -> int:
        return len(self.table)

    @property
    def is_mixed(self) -> bool:
        return self.kind is PolicyKind.MIXED

    def pure_components(self) -> tuple:
        """``((policy, weight), ...)``; a non-mixed policy is its own Dirac mixture."""
        return self.components if self.is_mixed else ((self, Fraction(1)),)

    def _check_mixed(self) -> None:
        if self.is_mixed:
            raise ContractError("a mixed policy has no per-history distribution; convert it first")


class AgentPolicy(_Policy):
    """``π``: agent histories to distributions over actions."""

    __slots__ = ()

    @classmethod
    def deterministic(cls, table: Mapping[AgentHistory, Action]) -> "AgentPolicy":
        return cls(PolicyKind.DETERMINISTIC, {h: ((a, Fraction(1)),) for h, a in table.items()})

    @classmethod
    def stochastic(cls, table: Mapping[AgentHistory, Mapping[Action, RationalLike]]) -> "AgentPolicy":
        return cls(PolicyKind.STOCHASTIC, {h: make_distribution(d) for h, d in table.items()})

    @classmethod
    def mixed(cls, components: Iterable[tuple["AgentPolicy", RationalLike]]) -> "AgentPolicy":
        comps = make_distribution(components)
        for policy, _ in comps:
            if policy.kind is not PolicyKind.DETERMINISTIC:
                raise ContractError("mixed policies are distributions over deterministic policies")
        return cls(PolicyKind.MIXED, components=comps)

    def distribution(self, model: Rpomdp, history: AgentHistory) -> Distribution:
        self._check_mixed()
        dist = self.table.get(history)
        if dist is None:
            return ((model.actions_for_observation(history.last)[0], Fraction(1)),)
        return dist

    def choice(self, model: Rpomdp, history: AgentHistory) -> Action:
        dist = self.distribution(model, history)
        if len(dist) != 1:
            raise ContractError("policy randomises at this history")
        return dist[0][0]

    def __repr__(self) -> str:
        if self.is_mixed:
            return f"AgentPolicy.mixed({len(self.components)} components)"
        return f"AgentPolicy.{self.kind.value}({len(self.table)} entries)"


NatureKey = tuple  # (NatureHistory, Action | None)


class NaturePolicy(_Policy):
    """``θ``: nature histories (and, agent-first, the last action) to distributions over assignments.

    Keys are ``(nature_history, action)`` for agent-first models and
    ``(nature_history, None)`` for nature-first models.
    """

    __slots__ = ()

    @classmethod
    def deterministic(cls, table: Mapping[NatureKey, Mapping[str, RationalLike]]) -> "NaturePolicy":
        return cls(PolicyKind.DETERMINISTIC, {k: ((_as_assignment(u), Fraction(1)),) for k, u in table.items()})

    @classmethod
    def stochastic(cls, table: Mapping[NatureKey, Mapping | Iterable]) -> "NaturePolicy":
        out = {}
        for key, dist in table.items():
            pairs = dist.items() if isinstance(dist, Mapping) else dist
            out[key] = make_distribution((_as_assignment(u), p) for u, p in pairs)
        return cls(PolicyKind.STOCHASTIC, out)

    @classmethod
    def mixed(cls, components: Iterable[tuple["NaturePolicy", RationalLike]]) -> "NaturePolicy":
        comps = make_distribution(components)
        for policy, _ in comps:
            if policy.kind is not PolicyKind.DETERMINISTIC:
                raise ContractError("mixed policies are distributions over deterministic policies")
        return cls(PolicyKind.MIXED, components=comps)

    def distribution(self, model: Rpomdp, history: NatureHistory, action: Action | None, fixed: Assignment | None = None) -> Distribution:
        self._check_mixed()
        dist = self.table.get((history, action))
        if dist is None:
            if fixed is None:
                fixed = fix_nature_history(model, history)
            return ((first_vertex(model, fixed), Fraction(1)),)
        return dist

    def support(self, model: Rpomdp, history: NatureHistory, action: Action | None, fixed: Assignment | None = None) -> list[Assignment]:
        return [u for u, _ in self.distribution(model, history, action, fixed)]

    def choice(self, model: Rpomdp, history: NatureHistory, action: Action | None, fixed: Assignment | None = None) -> Assignment:
        dist = self.distribution(model, history, action, fixed)
        if len(dist) != 1:
            raise ContractError("policy randomises at this history")
        return dist[0][0]

    def __repr__(self) -> str:
        if self.is_mixed:
            return f"NaturePolicy.mixed({len(self.components)} components)"
        return f"NaturePolicy.{self.kind.value}({len(self.table)} entries)"



def _as_assignment(u) -> Assignment:
    return u if isinstance(u, Assignment) else Assignment(u)


def first_vertex(model: Rpomdp, fixed: Assignment) -> Assignment:
    """The fallback nature choice: the first vertex agreeing with ``fixed``."""
    cache = model._row_cache
    key = ("first-vertex", fixed)
    hit = cache.get(key)
    if hit is None:
        hit = constrain(model.uncertainty, fixed).vertices()[0]
        cache[key] = hit
    return hit


def nature_key_action(model: Rpomdp, action: Action) -> Action | None:
    return action if model.agent_first else None


# ---------------------------------------------------------------------------
# Validity
# ---------------------------------------------------------------------------


def policy_valid(model: Rpomdp, nature: NaturePolicy) -> bool:
    """Every supported assignment is a member agreeing with the fix of its history."""
    for component, _ in nature.pure_components():
        for (history, action), dist in component.table.items():
            if model.agent_first != (action is not None):
                return False
            fixed = fix_nature_history(model, history)
            for u, _ in dist:
                if not model.uncertainty.contains(u) or not agrees(u, fixed):
                    return False
    return True


def agent_policy_valid(model: Rpomdp, agent: AgentPolicy) -> bool:
    """Every supported action is enabled under the history's last observation."""
    for component, _ in agent.pure_components():
        for history, dist in component.table.items():
            try:
                enabled = model.actions_for_observation(history.last)
            except Exception:
                return False
            if any(a not in enabled for a, _ in dist):
                return False
    return True


# ---------------------------------------------------------------------------
# Path probabilities and distributions
# ---------------------------------------------------------------------------


class PathDistribution(Mapping[Path, Fraction]):
    """A finite distribution over paths of one horizon."""

    def __init__(self, horizon: int, masses: Mapping[Path, Fraction]):
        self.horizon = horizon
        self._masses = {p: m for p, m in masses.items() if m != 0}

    def __getitem__(self, path: Path) -> Fraction:
        return self._masses[path]

    def __iter__(self) -> Iterator[Path]:
        return iter(self._masses)

    def __len__(self) -> int:
        return len(self._masses)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, PathDistribution):
            return self.horizon == other.horizon and self._masses == other._masses
        return NotImplemented

    def total(self) -> Fraction:
        return sum(self._masses.values(), Fraction(0))

    def __repr__(self) -> str:
        return f"PathDistribution(horizon={self.horizon}, support={len(self._masses)})"


def path_probability(model: Rpomdp, agent: AgentPolicy, nature: NaturePolicy, path: Path) -> Fraction:
    """``η^{π,θ}(τ)``; mixed policies contribute their weighted components."""
    if agent.is_mixed or nature.is_mixed:
        return sum(
            (wa * wn * path_probability(model, pa, pn, path) for pa, wa in agent.pure_components() for pn, wn in nature.pure_components()),
            Fraction(0),
        )
    prob = Fraction(1)
    state = path.initial
    if state != model.initial_state:
        return Fraction(0)
    ha = AgentHistory(model.agent_observation(state))
    hn = NatureHistory(model.nature_observation(state))
    fixed = UNDEFINED
    for action, u, succ in path.steps:
        if (state, action) not in model.transitions:
            return Fraction(0)
        pa = dict(agent.distribution(model, ha)).get(action, Fraction(0))
        pu = dict(nature.distribution(model, hn, nature_key_action(model, action), fixed)).get(u, Fraction(0))
        if pa == 0 or pu == 0 or not agrees(u, fixed):
            return Fraction(0)
        pt = model.probability(state, action, u, succ)
        if pt <= 0:
            return Fraction(0)
        prob *= pa * pu * pt
        fixed = upd(model, fixed, u, *model.nature_observation(state), action)
        ha = ha.extend(action, model.agent_observation(succ))
        hn = hn.extend(action, u, model.nature_observation(succ))
        state = succ
    return prob


def iter_weighted_paths(model: Rpomdp, agent: AgentPolicy, nature: NaturePolicy, horizon: int) -> Iterator[tuple[Path, Fraction, AgentHistory, NatureHistory, Assignment]]:
    """Depth-first enumeration of positive-probability length-``horizon`` paths (non-mixed policies)."""
    agent_first = model.agent_first

    def expand(path: Path, prob: Fraction, ha: AgentHistory, hn: NatureHistory, fixed: Assignment):
        if path.length == horizon:
            yield path, prob, ha, hn, fixed
            return
        state = path.last
        zn, zp = model.nature_observation(state)
        if agent_first:
            for action, pa in agent.distribution(model, ha):
                for u, pu in nature.distribution(model, hn, action, fixed):
                    yield from _transition(path, prob * pa * pu, ha, hn, fixed, state, zn, zp, action, u)
        else:
            for u, pu in nature.distribution(model, hn, None, fixed):
                for action, pa in agent.distribution(model, ha):
                    yield from _transition(path, prob * pa * pu, ha, hn, fixed, state, zn, zp, action, u)

    def _transition(path, prob, ha, hn, fixed, state, zn, zp, action, u):
        if not agrees(u, fixed):
            return
        nfixed = upd(model, fixed, u, zn, zp, action)
        for succ, pt in model.row(state, action, u):
            yield from expand(
                path.extend(action, u, succ),
                prob * pt,
                ha.extend(action, model.agent_observation(succ)),
                hn.extend(action, u, model.nature_observation(succ)),
                nfixed,
            )

    start = Path(model.initial_state)
    yield from expand(start, Fraction(1), observe_agent(model, start), observe_nature(model, start), UNDEFINED)


def path_distribution(model: Rpomdp, agent: AgentPolicy, nature: NaturePolicy, horizon: int) -> PathDistribution:
    """``μ^{π,θ}`` over length-``horizon`` paths, for all policy-kind combinations."""
    if horizon < 0:
        raise ContractError("horizon must be non-negative")
    masses: dict[Path, Fraction] = {}
    for pa, wa in agent.pure_components():
        for pn, wn in nature.pure_components():
            w = wa * wn
            for path, prob, *_ in iter_weighted_paths(model, pa, pn, horizon):
                masses[path] = masses.get(path, Fraction(0)) + w * prob
    return PathDistribution(horizon, masses)


# ---------------------------------------------------------------------------
# Relevant decision points
# ---------------------------------------------------------------------------


def nature_decision_points(model: Rpomdp, nature: NaturePolicy, horizon: int) -> dict[NatureKey, Distribution]:
    """Nature keys reachable under ``nature``'s supports (any agent behaviour), with their distributions."""
    agent_first = model.agent_first
    points: dict[NatureKey, Distribution] = {}
    start = model.initial_state
    frontier = {(start, NatureHistory(model.nature_observation(start)), UNDEFINED)}
    for _ in range(horizon):
        nxt = set()
        for state, hn, fixed in sorted(frontier, key=lambda x: (repr(x[1]), x[0])):
            zn, zp = model.nature_observation(state)
            for action in model.enabled_actions(state):
                key = (hn, action if agent_first else None)
                dist = nature.distribution(model, hn, key[1], fixed)
                points.setdefault(key, dist)
                for u, _ in dist:
                    nfixed = upd(model, fixed, u, zn, zp, action)
                    for succ, _ in model.row(state, action, u):
                        nxt.add((succ, hn.extend(action, u, model.nature_observation(succ)), nfixed))
        frontier = nxt
    return points


def agent_decision_points(model: Rpomdp, agent: AgentPolicy, horizon: int) -> dict[AgentHistory, Distribution]:
    """Agent histories reachable under ``agent``'s supports and any nature behaviour."""
    start = model.initial_state
    points: dict[AgentHistory, Distribution] = {}
    layer: dict[AgentHistory, set[State]] = {AgentHistory(model.agent_observation(start)): {start}}
    for _ in range(horizon):
        nxt: dict[AgentHistory, set[State]] = {}
        for ha, states in layer.items():
            dist = agent.distribution(model, ha)
            points[ha] = dist
            for action, _ in dist:
                for s in sorted(states, key=model.states.index):
                    for succ in possible_successors(model, s, action):
                        nxt.setdefault(ha.extend(action, model.agent_observation(succ)), set()).add(succ)
        layer = nxt
    return points


def _product_mixture(points: Mapping, factory, cap: int):
    randomising = [k for k, d in points.items() if len(d) > 1]
    count = 1
    for k in randomising:
        count *= len(points[k])
    if count > cap:
        raise CapacityError(f"{count} deterministic components exceed the cap of {cap}", count)
    fixed_part = {k: d[0][0] for k, d in points.items() if len(d) == 1}
    components = []
    for combo in itertools.product(*(points[k] for k in randomising)):
        table = dict(fixed_part)
        weight = Fraction(1)
        for key, (item, p) in zip(randomising, combo):
            table[key] = item
            weight *= p
        components.append((factory(table), weight))
    return components


# ---------------------------------------------------------------------------
# g: stochastic -> mixed, f: mixed -> stochastic
# ---------------------------------------------------------------------------


def mixed_from_stochastic(model: Rpomdp, nature: NaturePolicy, horizon: int, cap: int = DEFAULT_POLICY_CAP) -> NaturePolicy:
    """One deterministic policy per combination of choices on the relevant decision points."""
    if nature.is_mixed:
        raise ContractError("expected a stochastic or deterministic nature policy")
    points = nature_decision_points(model, nature, horizon)
    return NaturePolicy.mixed(_product_mixture(points, NaturePolicy.deterministic, cap))


def mixed_agent_from_stochastic(model: Rpomdp, agent: AgentPolicy, horizon: int, cap: int = DEFAULT_POLICY_CAP) -> AgentPolicy:
    """Agent-side analogue of :func:`mixed_from_stochastic`."""
    if agent.is_mixed:
        raise ContractError("expected a stochastic or deterministic agent policy")
    points = agent_decision_points(model, agent, horizon)
    return AgentPolicy.mixed(_product_mixture(points, AgentPolicy.deterministic, cap))


def _nature_consistent(model: Rpomdp, policy: NaturePolicy, history: NatureHistory) -> bool:
    """Whether a deterministic policy's choices reproduce every assignment recorded in ``history``."""
    fixed = UNDEFINED
    zn, zp = history.initial
    for k, (action, u, nzn, nzp) in enumerate(history.steps):
        if policy.choice(model, history.prefix(k), nature_key_action(model, action), fixed) != u:
            return False
        fixed = upd(model, fixed, u, zn, zp, action)
        zn, zp = nzn, nzp
    return True


def stochastic_from_mixed(model: Rpomdp, nature: NaturePolicy, horizon: int) -> NaturePolicy:
    """Behavioural policy whose choices are the mixture conditioned on reaching each history."""
    components = nature.pure_components()
    points: dict[NatureKey, None] = {}
    for component, _ in components:
        for key in nature_decision_points(model, component, horizon):
            points.setdefault(key, None)
    table: dict[NatureKey, Distribution] = {}
    for key in points:
        history, action = key
        acc: dict[Assignment, Fraction] = {}
        mass = Fraction(0)
        fixed = fix_nature_history(model, history)
        for component, w in components:
            if _nature_consistent(model, component, history):
                u = component.choice(model, history, action, fixed)
                acc[u] = acc.get(u, Fraction(0)) + w
                mass += w
        if mass == 0:
            log.warning("no mixture component reaches %r; using the unconditional mixture", history)
            for component, w in components:
                u = component.choice(model, history, action, fixed)
                acc[u] = acc.get(u, Fraction(0)) + w
            mass = Fraction(1)
        table[key] = tuple((u, p / mass) for u, p in acc.items())
    return NaturePolicy.stochastic(table)


def stochastic_agent_from_mixed(model: Rpomdp, agent: AgentPolicy, horizon: int) -> AgentPolicy:
    """Agent-side analogue of :func:`stochastic_from_mixed`."""
    components = agent.pure_components()
    points: dict[AgentHistory, None] = {}
    for component, _ in components:
        for h in agent_decision_points(model, component, horizon):
            points.setdefault(h, None)
    table: dict[AgentHistory, Distribution] = {}
    for history in points:
        acc: dict[Action, Fraction] = {}
        mass = Fraction(0)
        for component, w in components:
            if all(component.choice(model, history.prefix(k)) == history.steps[k][0] for k in range(history.length)):
                a = component.choice(model, history)
                acc[a] = acc.get(a, Fraction(0)) + w
                mass += w
        if mass == 0:
            log.warning("no mixture component reaches %r; using the unconditional mixture", history)
            for component, w in components:
                a = component.choice(model, history)
                acc[a] = acc.get(a, Fraction(0)) + w
            mass = Fraction(1)
        table[history] = tuple((a, p / mass) for a, p in acc.items())
    return AgentPolicy.stochastic(table)


# ---------------------------------------------------------------------------
# Deterministic agent policy enumeration
# ---------------------------------------------------------------------------


def _agent_children(model: Rpomdp, history: AgentHistory, states: frozenset[State], action: Action) -> list[tuple[AgentHistory, frozenset[State]]]:
    grouped: dict[tuple[str, str], set[State]] = {}
    for s in sorted(states, key=model.states.index):
        for succ in possible_successors(model, s, action):
            grouped.setdefault(model.agent_observation(succ), set()).add(succ)
    return [(history.extend(action, obs), frozenset(sts)) for obs, sts in grouped.items()]


def count_deterministic_agent_policies(model: Rpomdp, horizon: int) -> int:
    """Number of distinct deterministic agent policies (distinct on self-reachable histories)."""
    def count(history: AgentHistory, states: frozenset[State], depth: int) -> int:
        if depth == horizon:
            return 1
        total = 0
        for action in model.actions_for_observation(history.last):
            prod = 1
            for child, cstates in _agent_children(model, history, states, action):
                prod *= count(child, cstates, depth + 1)
            total += prod
        return total

    root = AgentHistory(model.agent_observation(model.initial_state))
    return count(root, frozenset([model.initial_state]), 0)


def enumerate_deterministic_agent_policies(model: Rpomdp, horizon: int, cap: int = DEFAULT_POLICY_CAP) -> list[AgentPolicy]:
    """All deterministic agent policies up to horizon, each defined on its own reachable histories."""
    total = count_deterministic_agent_policies(model, horizon)
    if total > cap:
        raise CapacityError(f"{total} deterministic agent policies exceed the cap of {cap}", total)

    def tables(history: AgentHistory, states: frozenset[State], depth: int) -> list[dict]:
        if depth == horizon:
            return [{}]
        out = []
        for action in model.actions_for_observation(history.last):
            child_lists = [tables(c, cs, depth + 1) for c, cs in _agent_children(model, history, states, action)]
            for combo in itertools.product(*child_lists):
                table = {history: action}
                for part in combo:
                    table.update(part)
                out.append(table)
        return out

    root = AgentHistory(model.agent_observation(model.initial_state))
    return [AgentPolicy.deterministic(t) for t in tables(root, frozenset([model.initial_state]), 0)]
