"""The turn-based POSG of a robust POMDP, the path/history/policy bijections, and its value.

Agent-first games alternate agent states ``(s, fixed)`` and nature states
``(s, fixed, a)``; nature-first games alternate nature states
``(s, fixed, previous action)`` and agent states ``(s, fixed, u)``.  The
game is expanded lazily: nature's action set is the (infinite) restricted
uncertainty set, so states exist only once something reaches them.

POSG paths are flat tuples ``(x0, act0, x1, act1, ..., xn)``.  Player
histories are the player's observation of every state interleaved with its
own actions, exactly as the game defines them; the agent never sees
nature's assignments and nature never sees the agent's action except
through the nature-state observation.
"""

from __future__ import annotations

import threading
from fractions import Fraction
from typing import Iterator, NamedTuple, Union

from .errors import ContractError, DomainError
from .model import BOTTOM, Action, Assignment, Rpomdp, State, UNDEFINED, UncertaintySet, agrees, constrain
from .policies import AgentPolicy, Distribution, NaturePolicy, PolicyKind, first_vertex
from .trajectories import AgentHistory, NatureHistory, Path, path_valid, upd


class PosgAgentState(NamedTuple):
    base: State
    fixed: Assignment
    pending: Assignment | None = None  # nature-first: the assignment nature just chose

    def __repr__(self) -> str:
        tail = f", {self.pending!r}" if self.pending is not None else ""
        return f"⟨{self.base}, {self.fixed!r}{tail}⟩"


class PosgNatureState(NamedTuple):
    base: State
    fixed: Assignment
    action: Action  # agent-first: the action just taken; nature-first: the previous action or ⊥

    def __repr__(self) -> str:
        return f"⟨{self.base}, {self.fixed!r}, {self.action}⟩"


PosgState = Union[PosgAgentState, PosgNatureState]
PosgPath = tuple  # (x0, act0, x1, act1, ..., xn)
PosgHistory = tuple


class Posg:
    """Lazily expanded POSG of ``origin`` (agent-first or nature-first per the model)."""

    def __init__(self, origin: Rpomdp, horizon: int):
        if horizon < 0:
            raise ContractError("horizon must be non-negative")
        self.origin = origin
        self.horizon = horizon
        self.mode = origin.play_order
        self._lock = threading.Lock()
        self._succ: dict = {}

    @property
    def agent_first(self) -> bool:
        return self.origin.agent_first

    @property
    def initial(self) -> PosgState:
        s = self.origin.initial_state
        return PosgAgentState(s, UNDEFINED) if self.agent_first else PosgNatureState(s, UNDEFINED, BOTTOM)

    @staticmethod
    def is_agent_state(x: PosgState) -> bool:
        return isinstance(x, PosgAgentState)

    # -- actions -----------------------------------------------------------

    def agent_actions(self, x: PosgAgentState) -> tuple[Action, ...]:
        return self.origin.enabled_actions(x.base)

    def nature_actions(self, x: PosgNatureState) -> UncertaintySet:
        """Nature's legal assignments: the members agreeing with the state's fixed variables."""
        return constrain(self.origin.uncertainty, x.fixed)

    def nature_action_legal(self, x: PosgNatureState, u: Assignment) -> bool:
        return self.origin.uncertainty.contains(u) and agrees(u, x.fixed)

    # -- dynamics ----------------------------------------------------------

    def transition(self, x: PosgState, act) -> tuple[tuple[PosgState, Fraction], ...]:
        """Successor distribution; empty for an illegal move."""
        key = (x, act)
        hit = self._succ.get(key)
        if hit is not None:
            return hit
        out = self._transition(x, act)
        with self._lock:
            self._succ.setdefault(key, out)
        return out

    def _transition(self, x: PosgState, act) -> tuple[tuple[PosgState, Fraction], ...]:
        m = self.origin
        if self.agent_first:
            if isinstance(x, PosgAgentState):
                if act not in m.enabled_actions(x.base):
                    return ()
                return ((PosgNatureState(x.base, x.fixed, act), Fraction(1)),)
            if not self.nature_action_legal(x, act):
                return ()
            nfixed = upd(m, x.fixed, act, *m.nature_observation(x.base), x.action)
            return tuple((PosgAgentState(s, nfixed), p) for s, p in m.row(x.base, x.action, act))
        if isinstance(x, PosgNatureState):
            if not self.nature_action_legal(x, act):
                return ()
            return ((PosgAgentState(x.base, x.fixed, act), Fraction(1)),)
        if act not in m.enabled_actions(x.base):
            return ()
        nfixed = upd(m, x.fixed, x.pending, *m.nature_observation(x.base), act)
        return tuple((PosgNatureState(s, nfixed, act), p) for s, p in m.row(x.base, act, x.pending))

    def reward(self, x: PosgState, act) -> Fraction:
        """Rewards accrue on agent moves only; nature states carry zero reward."""
        return self.origin.reward(x.base, act) if isinstance(x, PosgAgentState) else Fraction(0)

    def obs_agent(self, x: PosgState) -> tuple[str, str]:
        return self.origin.agent_observation(x.base)

    def obs_nature(self, x: PosgState) -> tuple[str, str, str]:
        zn, zp = self.origin.nature_observation(x.base)
        if isinstance(x, PosgNatureState):
            return (zn, zp, x.action)
        return (zn, zp, BOTTOM)

    # -- inspection --------------------------------------------------------

    def reachable(self, points: int = 0) -> list[tuple[int, PosgState, list[tuple[object, PosgState, Fraction]]]]:
        """Breadth-first fragment up to the horizon, nature moves drawn from vertices (plus a grid)."""
        out = []
        seen = {self.initial}
        layer = [self.initial]
        moves = 2 * self.horizon
        for depth in range(moves):
            nxt = []
            for x in layer:
                if isinstance(x, PosgAgentState):
                    acts = list(self.agent_actions(x))
                else:
                    uset = self.nature_actions(x)
                    acts = uset.grid(points) if points >= 2 else list(uset.vertices())
                edges = []
                for act in acts:
                    for y, p in self.transition(x, act):
                        edges.append((act, y, p))
                        if y not in seen:
                            seen.add(y)
                            nxt.append(y)
                out.append((depth, x, edges))
            layer = nxt
        out.extend((moves, x, []) for x in layer)
        return out

    def dump(self, points: int = 0) -> str:
        lines = [f"# POSG ({self.mode.value}) of {self.origin.name or 'model'}, horizon {self.horizon}"]
        for depth, x, edges in self.reachable(points):
            kind = "agent " if isinstance(x, PosgAgentState) else "nature"
            lines.append(f"[{depth}] {kind} {x!r}  obs_a={self.obs_agent(x)} obs_n={self.obs_nature(x)}")
            for act, y, p in edges:
                r = self.reward(x, act)
                extra = f" R={r}" if r else ""
                lines.append(f"    {act!r} -> {y!r} : {p}{extra}")
        return "\n".join(lines) + "\n"


def build_posg(model: Rpomdp, horizon: int) -> Posg:
    return Posg(model, horizon)


# ---------------------------------------------------------------------------
# Path bijection
# ---------------------------------------------------------------------------


def map_path(model: Rpomdp, posg: Posg, path: Path) -> PosgPath:
    """The POSG path corresponding to a valid RPOMDP path."""
    if not path_valid(model, path):
        raise DomainError(f"not a valid path: {path!r}")
    fixed = UNDEFINED
    state = path.initial
    if posg.agent_first:
        out: list = [PosgAgentState(state, fixed)]
        for a, u, succ in path.steps:
            out += [a, PosgNatureState(state, fixed, a), u]
            fixed = upd(model, fixed, u, *model.nature_observation(state), a)
            out.append(PosgAgentState(succ, fixed))
            state = succ
    else:
        out = [PosgNatureState(state, fixed, BOTTOM)]
        for a, u, succ in path.steps:
            out += [u, PosgAgentState(state, fixed, u), a]
            fixed = upd(model, fixed, u, *model.nature_observation(state), a)
            out.append(PosgNatureState(succ, fixed, a))
            state = succ
    return tuple(out)


def unmap_path(posg: Posg, posg_path: PosgPath) -> Path:
    """Inverse of :func:`map_path`; rejects sequences that are not POSG paths."""
    if len(posg_path) % 4 != 1 or posg_path[0] != posg.initial:
        raise DomainError("not a POSG path from the initial state")
    steps = []
    for i in range(0, len(posg_path) - 1, 4):
        x0, act0, x1, act1, x2 = posg_path[i : i + 5]
        if dict(posg.transition(x0, act0)).get(x1, 0) <= 0 or dict(posg.transition(x1, act1)).get(x2, 0) <= 0:
            raise DomainError(f"impossible POSG step at position {i}")
        a, u = (act0, act1) if posg.agent_first else (act1, act0)
        steps.append((a, u, x2.base))
    return Path(posg_path[0].base, tuple(steps))


def posg_path_probability_support(posg: Posg, posg_path: PosgPath) -> bool:
    """Whether every move of ``posg_path`` has positive probability in the game."""
    try:
        unmap_path(posg, posg_path)
    except DomainError:
        return False
    return True


# ---------------------------------------------------------------------------
# History bijections
# ---------------------------------------------------------------------------


def map_agent_history(model: Rpomdp, history: AgentHistory) -> PosgHistory:
    """The agent's POSG history: each state's observation plus its own actions.

    Every RPOMDP step passes two POSG states with the same agent
    observation, so each observation appears twice around the action
    (agent-first: ``z a z z'``; nature-first: ``z z a z'``).  Nature-first
    histories end at a nature state; the agent-state observation that
    follows repeats the last entry and is supplied separately when the
    agent decides (see :func:`agent_decision_key`).
    """
    out: list = [tuple(history.initial)]
    for a, za, zp in history.steps:
        prev = out[-1]
        out += [a, prev, (za, zp)] if model.agent_first else [prev, a, (za, zp)]
    return tuple(out)


def unmap_agent_history(model: Rpomdp, history: PosgHistory) -> AgentHistory:
    h = tuple(history)
    try:
        if len(h) % 3 != 1:
            raise ValueError
        steps = []
        for i in range(0, len(h) - 1, 3):
            prev, x, y, nxt = h[i : i + 4]
            a, dup = (x, y) if model.agent_first else (y, x)
            if dup != prev or not isinstance(a, str):
                raise ValueError
            steps.append((a,) + tuple(nxt))
        return AgentHistory(tuple(h[0]), tuple(steps))
    except (ValueError, TypeError):
        raise DomainError(f"malformed POSG agent history {history!r}") from None


def agent_decision_key(posg: "Posg", observed: PosgHistory) -> PosgHistory:
    """Table key for the agent's observation sequence at one of its states.

    Nature-first, the final agent-state observation duplicates the
    preceding nature-state observation and carries no information, so the
    key drops it.
    """
    return observed if posg.agent_first else observed[:-1]


def map_nature_history(model: Rpomdp, history: NatureHistory, action: Action | None = None) -> PosgHistory:
    """Nature's POSG history; agent-first keys append the nature-state observation of ``action``."""
    zn, zp = history.initial
    if model.agent_first:
        out: list = [(zn, zp, BOTTOM)]
        for a, u, nzn, nzp in history.steps:
            out += [(zn, zp, a), u, (nzn, nzp, BOTTOM)]
            zn, zp = nzn, nzp
        if action is not None:
            out.append((zn, zp, action))
        return tuple(out)
    if action is not None:
        raise ContractError("nature-first nature histories carry no pending action")
    out = [(zn, zp, BOTTOM)]
    for a, u, nzn, nzp in history.steps:
        out += [u, (zn, zp, BOTTOM), (nzn, nzp, a)]
        zn, zp = nzn, nzp
    return tuple(out)


def unmap_nature_history(model: Rpomdp, history: PosgHistory) -> tuple[NatureHistory, Action | None]:
    """Inverse of :func:`map_nature_history`: ``(nature_history, action or None)``."""
    h = tuple(history)
    try:
        if model.agent_first:
            action = None
            if len(h) % 3 == 2:
                *h, last = h
                action = last[2]
                if last[:2] != h[-1][:2] or h[-1][2] != BOTTOM:
                    raise ValueError
            if len(h) % 3 != 1 or h[0][2] != BOTTOM:
                raise ValueError
            steps = []
            for i in range(0, len(h) - 1, 3):
                prev, seen, u, nxt = h[i : i + 4]
                if seen[:2] != prev[:2] or nxt[2] != BOTTOM or not isinstance(u, Assignment):
                    raise ValueError
                steps.append((seen[2], u) + tuple(nxt[:2]))
            return NatureHistory(tuple(h[0][:2]), tuple(steps)), action
        if len(h) % 3 != 1 or h[0][2] != BOTTOM:
            raise ValueError
        steps = []
        for i in range(0, len(h) - 1, 3):
            prev, u, mid, nxt = h[i : i + 4]
            if mid != (prev[0], prev[1], BOTTOM) or not isinstance(u, Assignment):
                raise ValueError
            steps.append((nxt[2], u) + tuple(nxt[:2]))
        return NatureHistory(tuple(h[0][:2]), tuple(steps)), None
    except (ValueError, TypeError, IndexError):
        raise DomainError(f"malformed POSG nature history {history!r}") from None


def posg_agent_history(posg: Posg, posg_path: PosgPath) -> PosgHistory:
    """The agent's observation sequence of a POSG path (own actions included)."""
    out = []
    for i, item in enumerate(posg_path):
        if i % 2 == 0:
            out.append(posg.obs_agent(item))
        elif isinstance(posg_path[i - 1], PosgAgentState):
            out.append(item)
    return tuple(out)


def posg_nature_history(posg: Posg, posg_path: PosgPath) -> PosgHistory:
    out = []
    for i, item in enumerate(posg_path):
        if i % 2 == 0:
            out.append(posg.obs_nature(item))
        elif isinstance(posg_path[i - 1], PosgNatureState):
            out.append(item)
    return tuple(out)


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------


class PosgPolicy:
    """A POSG policy: a table over POSG histories, or a mixture of such tables.

    Histories missing from the table use the same declared fallback as the
    source formalism (first enabled action / first vertex of the restricted
    set), evaluated through the inverse history bijection.
    """

    def __init__(self, player: str, model: Rpomdp, kind: PolicyKind, table=None, components=()):
        self.player = player
        self.model = model
        self.kind = kind
        self.table: dict = dict(table or {})
        self.components = tuple(components)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PosgPolicy):
            return NotImplemented
        return (self.player, self.kind, self.table, self.components) == (other.player, other.kind, other.table, other.components)

    def __hash__(self) -> int:
        return hash((self.player, self.kind, frozenset(self.table.items()), self.components))

    def pure_components(self):
        return self.components if self.kind is PolicyKind.MIXED else ((self, Fraction(1)),)

    def distribution(self, history: PosgHistory) -> Distribution:
        dist = self.table.get(history)
        if dist is not None:
            return dist
        if self.player == "agent":
            h = unmap_agent_history(self.model, history)
            return ((self.model.actions_for_observation(h.last)[0], Fraction(1)),)
        from .trajectories import fix_nature_history

        h, _ = unmap_nature_history(self.model, history)
        return ((first_vertex(self.model, fix_nature_history(self.model, h)), Fraction(1)),)


def map_agent_policy(model: Rpomdp, policy: AgentPolicy) -> PosgPolicy:
    if policy.is_mixed:
        return PosgPolicy("agent", model, PolicyKind.MIXED, components=tuple((map_agent_policy(model, c), w) for c, w in policy.components))
    return PosgPolicy("agent", model, policy.kind, {map_agent_history(model, h): d for h, d in policy.table.items()})


def unmap_agent_policy(model: Rpomdp, policy: PosgPolicy) -> AgentPolicy:
    if policy.kind is PolicyKind.MIXED:
        return AgentPolicy(PolicyKind.MIXED, components=tuple((unmap_agent_policy(model, c), w) for c, w in policy.components))
    return AgentPolicy(policy.kind, {unmap_agent_history(model, h): d for h, d in policy.table.items()})


def map_nature_policy(model: Rpomdp, policy: NaturePolicy) -> PosgPolicy:
    if policy.is_mixed:
        return PosgPolicy("nature", model, PolicyKind.MIXED, components=tuple((map_nature_policy(model, c), w) for c, w in policy.components))
    return PosgPolicy("nature", model, policy.kind, {map_nature_history(model, h, a): d for (h, a), d in policy.table.items()})


def unmap_nature_policy(model: Rpomdp, policy: PosgPolicy) -> NaturePolicy:
    if policy.kind is PolicyKind.MIXED:
        return NaturePolicy(PolicyKind.MIXED, components=tuple((unmap_nature_policy(model, c), w) for c, w in policy.components))
    return NaturePolicy(policy.kind, {unmap_nature_history(model, h): d for h, d in policy.table.items()})


# ---------------------------------------------------------------------------
# Value
# ---------------------------------------------------------------------------


def iter_posg_paths(posg: Posg, agent: PosgPolicy, nature: PosgPolicy, horizon: int) -> Iterator[tuple[PosgPath, Fraction]]:
    """Positive-probability POSG paths with ``horizon`` agent moves (non-mixed policies)."""
    moves = 2 * horizon

    def walk(path: tuple, prob: Fraction, ha: tuple, hn: tuple):
        if len(path) == 2 * moves + 1:
            yield path, prob
            return
        x = path[-1]
        if isinstance(x, PosgAgentState):
            dist, own_a = agent.distribution(agent_decision_key(posg, ha)), True
        else:
            dist, own_a = nature.distribution(hn), False
        for act, p in dist:
            for y, pt in posg.transition(x, act):
                nha = ha + ((act,) if own_a else ()) + (posg.obs_agent(y),)
                nhn = hn + (() if own_a else (act,)) + (posg.obs_nature(y),)
                yield from walk(path + (act, y), prob * p * pt, nha, nhn)

    x0 = posg.initial
    yield from walk((x0,), Fraction(1), (posg.obs_agent(x0),), (posg.obs_nature(x0),))


def posg_value(posg: Posg, agent: PosgPolicy, nature: PosgPolicy, horizon: int) -> Fraction:
    """Expected reward over ``horizon`` agent moves, by exact enumeration of POSG paths."""
    total = Fraction(0)
    for pa, wa in agent.pure_components():
        for pn, wn in nature.pure_components():
            for path, prob in iter_posg_paths(posg, pa, pn, horizon):
                reward = sum((posg.reward(path[i], path[i + 1]) for i in range(0, len(path) - 1, 2)), Fraction(0))
                total += wa * wn * prob * reward
    return total
