"""Paths, stickiness bookkeeping (fix/upd) and observation projections.

A path of length ``n`` has ``n`` steps ``(a, u, s')`` and ``n + 1`` states.
Histories use the same indexing.  All containers are tuples so that paths
and histories can key dictionaries.
"""

from __future__ import annotations

from fractions import Fraction
from typing import TYPE_CHECKING, Iterable, Iterator, NamedTuple, Sequence

from .errors import ContractError, DomainError, InvalidChoiceError
from .model import Action, Assignment, Observation, Rpomdp, State, UNDEFINED, agrees, constrain

if TYPE_CHECKING:  # pragma: no cover
    from .policies import NaturePolicy


class Path(NamedTuple):
    initial: State
    steps: tuple[tuple[Action, Assignment, State], ...] = ()

    @property
    def length(self) -> int:
        return len(self.steps)

    @property
    def last(self) -> State:
        return self.steps[-1][2] if self.steps else self.initial

    @property
    def states(self) -> tuple[State, ...]:
        return (self.initial,) + tuple(step[2] for step in self.steps)

    def extend(self, action: Action, u: Assignment, succ: State) -> "Path":
        return Path(self.initial, self.steps + ((action, u, succ),))

    def prefix(self, k: int) -> "Path":
        return Path(self.initial, self.steps[:k])

    def __repr__(self) -> str:
        parts = [self.initial]
        for a, u, s in self.steps:
            parts.append(f"{a} {u!r} {s}")
        return "⟨" + ", ".join(parts) + "⟩"


class JointHistory(NamedTuple):
    initial: tuple[Observation, Observation, Observation]
    steps: tuple[tuple[Action, Assignment, Observation, Observation, Observation], ...] = ()

    @property
    def length(self) -> int:
        return len(self.steps)

    @property
    def last(self) -> tuple[Observation, Observation, Observation]:
        return self.steps[-1][2:] if self.steps else self.initial

    def extend(self, action: Action, u: Assignment, obs: tuple[Observation, Observation, Observation]) -> "JointHistory":
        return JointHistory(self.initial, self.steps + ((action, u) + tuple(obs),))

    def prefix(self, k: int) -> "JointHistory":
        return JointHistory(self.initial, self.steps[:k])


class AgentHistory(NamedTuple):
    initial: tuple[Observation, Observation]
    steps: tuple[tuple[Action, Observation, Observation], ...] = ()

    @property
    def length(self) -> int:
        return len(self.steps)

    @property
    def last(self) -> tuple[Observation, Observation]:
        return self.steps[-1][1:] if self.steps else self.initial

    @property
    def actions(self) -> tuple[Action, ...]:
        return tuple(step[0] for step in self.steps)

    def extend(self, action: Action, obs: tuple[Observation, Observation]) -> "AgentHistory":
        return AgentHistory(self.initial, self.steps + ((action,) + tuple(obs),))

    def prefix(self, k: int) -> "AgentHistory":
        return AgentHistory(self.initial, self.steps[:k])

    def __repr__(self) -> str:
        parts = [f"({self.initial[0]},{self.initial[1]})"]
        for a, za, zp in self.steps:
            parts.append(f"{a} ({za},{zp})")
        return " ".join(parts)


class NatureHistory(NamedTuple):
    initial: tuple[Observation, Observation]
    steps: tuple[tuple[Action, Assignment, Observation, Observation], ...] = ()

    @property
    def length(self) -> int:
        return len(self.steps)

    @property
    def last(self) -> tuple[Observation, Observation]:
        return self.steps[-1][2:] if self.steps else self.initial

    def extend(self, action: Action, u: Assignment, obs: tuple[Observation, Observation]) -> "NatureHistory":
        return NatureHistory(self.initial, self.steps + ((action, u) + tuple(obs),))

    def prefix(self, k: int) -> "NatureHistory":
        return NatureHistory(self.initial, self.steps[:k])

    def __repr__(self) -> str:
        parts = [f"({self.initial[0]},{self.initial[1]})"]
        for a, u, zn, zp in self.steps:
            parts.append(f"{a} {u!r} ({zn},{zp})")
        return " ".join(parts)


# ---------------------------------------------------------------------------
# fix / upd
# ---------------------------------------------------------------------------


def upd(model: Rpomdp, partial: Assignment, u: Assignment, z_n: Observation, z_pub: Observation, action: Action) -> Assignment:
    """Fix the variables that newly stick after ``action`` under observation ``(z_n, z_pub)``."""
    if not agrees(u, partial):
        raise InvalidChoiceError(f"assignment {u!r} disagrees with the fixed variables {partial!r}")
    sticking = model.sticking(z_n, z_pub, action)
    new = {v: u[v] for v in sticking if v not in partial and v in u}
    return partial.merged(new)


def fix(model: Rpomdp, path: Path) -> Assignment:
    """The partial assignment that stays fixed after ``path``."""
    fixed = UNDEFINED
    state = path.initial
    sticking = model.sticking
    for action, u, succ in path.steps:
        stuck = sticking(model.obs_nature[state], model.obs_public[state], action)
        new = {v: u[v] for v in stuck if v not in fixed and v in u}
        if new:
            fixed = fixed.merged(new)
        state = succ
    return fixed


def fix_nature_history(model: Rpomdp, history: NatureHistory) -> Assignment:
    """``fix`` computed from nature's history alone (it observes everything it needs)."""
    fixed = UNDEFINED
    z_n, z_pub = history.initial
    for action, u, nz_n, nz_pub in history.steps:
        stuck = model.sticking(z_n, z_pub, action)
        new = {v: u[v] for v in stuck if v not in fixed and v in u}
        if new:
            fixed = fixed.merged(new)
        z_n, z_pub = nz_n, nz_pub
    return fixed


def path_valid(model: Rpomdp, path: Path) -> bool:
    """Positive-probability steps whose assignments are members agreeing with the fix."""
    if path.initial != model.initial_state:
        return False
    fixed = UNDEFINED
    state = path.initial
    for action, u, succ in path.steps:
        if (state, action) not in model.transitions:
            return False
        if not model.uncertainty.contains(u) or not agrees(u, fixed):
            return False
        if model.probability(state, action, u, succ) <= 0:
            return False
        fixed = upd(model, fixed, u, model.obs_nature[state], model.obs_public[state], action)
        state = succ
    return True


# ---------------------------------------------------------------------------
# Observation projections
# ---------------------------------------------------------------------------


def observe_joint(model: Rpomdp, path: Path) -> JointHistory:
    steps = tuple((a, u) + model.observation(s) for a, u, s in path.steps)
    return JointHistory(model.observation(path.initial), steps)


def observe_agent(model: Rpomdp, path: Path) -> AgentHistory:
    steps = tuple((a,) + model.agent_observation(s) for a, _, s in path.steps)
    return AgentHistory(model.agent_observation(path.initial), steps)


def observe_nature(model: Rpomdp, path: Path) -> NatureHistory:
    steps = tuple((a, u) + model.nature_observation(s) for a, u, s in path.steps)
    return NatureHistory(model.nature_observation(path.initial), steps)


def joint_to_agent(history: JointHistory) -> AgentHistory:
    za, _, zp = history.initial
    return AgentHistory((za, zp), tuple((a, za_, zp_) for a, _, za_, _, zp_ in history.steps))


def joint_to_nature(history: JointHistory) -> NatureHistory:
    _, zn, zp = history.initial
    return NatureHistory((zn, zp), tuple((a, u, zn_, zp_) for a, u, _, zn_, zp_ in history.steps))


# ---------------------------------------------------------------------------
# Enumeration
# ---------------------------------------------------------------------------


def assignment_palette(model: Rpomdp, fixed: Assignment, points: int = 0) -> list[Assignment]:
    """A finite list of members agreeing with ``fixed``: vertices, plus a grid if ``points >= 2``."""
    restricted = constrain(model.uncertainty, fixed)
    return restricted.grid(points) if points >= 2 else list(restricted.vertices())


def valid_paths(model: Rpomdp, length: int, points: int = 0) -> Iterator[Path]:
    """All valid paths of exactly ``length`` steps whose assignments come from the palette.

    The uncertainty set is infinite, so "all" is relative to the finite
    palette of :func:`assignment_palette` at each step.
    """

    def expand(path: Path, fixed: Assignment) -> Iterator[Path]:
        if path.length == length:
            yield path
            return
        state = path.last
        z_n, z_pub = model.nature_observation(state)
        palette = assignment_palette(model, fixed, points)
        for action in model.enabled_actions(state):
            for u in palette:
                nfixed = upd(model, fixed, u, z_n, z_pub, action)
                for succ, _ in model.row(state, action, u):
                    yield from expand(path.extend(action, u, succ), nfixed)

    yield from expand(Path(model.initial_state), UNDEFINED)


def relevant_histories(model: Rpomdp, nature: "NaturePolicy", t: int) -> frozenset[JointHistory]:
    """Joint histories of length ``t`` that ``nature``'s choices can reach (any agent behaviour)."""
    from .policies import PolicyKind

    if t < 0:
        raise ContractError("horizon index must be non-negative")
    if nature.kind is PolicyKind.MIXED:
        out: set[JointHistory] = set()
        for component, _ in nature.components:
            out |= relevant_histories(model, component, t)
        return frozenset(out)

    agent_first = model.agent_first
    start = Path(model.initial_state)
    frontier = {(start.initial, observe_joint(model, start), observe_nature(model, start), UNDEFINED)}
    for _ in range(t):
        nxt = set()
        for state, joint, nat, fixed in frontier:
            z_n, z_pub = model.nature_observation(state)
            for action in model.enabled_actions(state):
                support = nature.support(model, nat, action if agent_first else None, fixed)
                for u in support:
                    if not agrees(u, fixed):
                        continue
                    nfixed = upd(model, fixed, u, z_n, z_pub, action)
                    for succ, _ in model.row(state, action, u):
                        obs = model.observation(succ)
                        nxt.add((succ, joint.extend(action, u, obs), nat.extend(action, u, obs[1:]), nfixed))
        frontier = nxt
    return frozenset(item[1] for item in frontier)


def possible_successors(model: Rpomdp, state: State, action: Action) -> tuple[State, ...]:
    """Successors with positive probability under *some* member of the uncertainty set."""
    cache = model._row_cache
    key = ("possible", state, action)
    hit = cache.get(key)
    if hit is None:
        seen: dict[State, None] = {}
        for u in model.uncertainty.vertices():
            for succ, _ in model.row(state, action, u):
                seen.setdefault(succ, None)
        hit = tuple(s for s in model.states if s in seen)
        cache[key] = hit
    return hit


def reachable_agent_histories(model: Rpomdp, horizon: int) -> list[tuple[AgentHistory, frozenset[State]]]:
    """Agent histories of length ``< horizon`` that some behaviour of both players can produce.

    Returned with the set of states the history is consistent with; ordered
    breadth-first and, within a depth, by action and state order.
    """
    root = AgentHistory(model.agent_observation(model.initial_state))
    layer = [(root, frozenset([model.initial_state]))]
    out: list[tuple[AgentHistory, frozenset[State]]] = []
    for _ in range(horizon):
        out.extend(layer)
        nxt: dict[AgentHistory, set[State]] = {}
        for history, states in layer:
            for action in model.actions_for_observation(history.last):
                for s in sorted(states, key=model.states.index):
                    for succ in possible_successors(model, s, action):
                        nxt.setdefault(history.extend(action, model.agent_observation(succ)), set()).add(succ)
        layer = [(h, frozenset(s)) for h, s in nxt.items()]
    return out

