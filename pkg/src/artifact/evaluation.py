"""Exact finite-horizon evaluation: beliefs, values and occupancy states."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from .errors import ContractError, ImpossibleObservationError
from .model import Action, Assignment, Observation, Rpomdp, State, UNDEFINED, agrees
from .policies import AgentPolicy, NaturePolicy, nature_key_action
from .trajectories import AgentHistory, JointHistory, NatureHistory, Path, joint_to_agent, joint_to_nature, observe_joint, upd

Belief = dict  # state -> Fraction


def belief_update(
    model: Rpomdp,
    belief: Mapping[State, Fraction],
    action: Action,
    u: Assignment,
    z_a: Observation,
    z_n: Observation,
    z_pub: Observation,
) -> Belief:
    """Successor belief after ``action`` under ``u`` and the three observations."""
    target = (z_a, z_n, z_pub)
    unnormalised: dict[State, Fraction] = {}
    for s, mass in belief.items():
        if mass == 0 or (s, action) not in model.transitions:
            continue
        for succ, p in model.row(s, action, u):
            if model.observation(succ) == target:
                unnormalised[succ] = unnormalised.get(succ, Fraction(0)) + mass * p
    total = sum(unnormalised.values(), Fraction(0))
    if total == 0:
        raise ImpossibleObservationError(f"observation {target} cannot follow action {action!r} under {u!r}")
    return {s: m / total for s, m in unnormalised.items()}


def initial_belief(model: Rpomdp) -> Belief:
    return {model.initial_state: Fraction(1)}


def belief_of_history(model: Rpomdp, history: JointHistory) -> Belief:
    """Fold :func:`belief_update` along a joint history."""
    b = initial_belief(model)
    if model.observation(model.initial_state) != tuple(history.initial):
        raise ImpossibleObservationError("history does not start with the initial observation")
    for action, u, za, zn, zp in history.steps:
        b = belief_update(model, b, action, u, za, zn, zp)
    return b


# ---------------------------------------------------------------------------
# Values
# ---------------------------------------------------------------------------


def _value_pure(model: Rpomdp, agent: AgentPolicy, nature: NaturePolicy, horizon: int, weights: tuple[Fraction, ...] | None = None) -> Fraction:
    agent_first = model.agent_first

    def walk(state: State, ha: AgentHistory, hn: NatureHistory, fixed: Assignment, depth: int) -> Fraction:
        if depth == horizon:
            return Fraction(0)
        total = Fraction(0)
        zn, zp = model.nature_observation(state)
        scale = weights[depth] if weights is not None else 1
        adist = agent.distribution(model, ha)
        for action, pa in adist:
            r = model.reward(state, action)
            if r:
                total += pa * r * scale
        if agent_first:
            choices = [(a, pa, u, pu) for a, pa in adist for u, pu in nature.distribution(model, hn, a, fixed)]
        else:
            choices = [(a, pa, u, pu) for u, pu in nature.distribution(model, hn, None, fixed) for a, pa in adist]
        for action, pa, u, pu in choices:
            if not agrees(u, fixed):
                continue
            nfixed = upd(model, fixed, u, zn, zp, action)
            for succ, pt in model.row(state, action, u):
                total += pa * pu * pt * walk(
                    succ,
                    ha.extend(action, model.agent_observation(succ)),
                    hn.extend(action, u, model.nature_observation(succ)),
                    nfixed,
                    depth + 1,
                )
        return total

    s0 = model.initial_state
    return walk(s0, AgentHistory(model.agent_observation(s0)), NatureHistory(model.nature_observation(s0)), UNDEFINED, 0)


def value_fh(model: Rpomdp, agent: AgentPolicy, nature: NaturePolicy, horizon: int) -> Fraction:
    """Expected total reward of the first ``horizon`` steps, exactly.

    Mixed policies contribute the weighted values of their components.
    """
    if horizon < 0:
        raise ContractError("horizon must be non-negative")
    total = Fraction(0)
    for pa, wa in agent.pure_components():
        for pn, wn in nature.pure_components():
            total += wa * wn * _value_pure(model, pa, pn, horizon)
    return total


def value_by_paths(model: Rpomdp, agent: AgentPolicy, nature: NaturePolicy, horizon: int) -> Fraction:
    """The same value computed from the explicit path distribution (used as a cross-check)."""
    from .policies import path_distribution

    dist = path_distribution(model, agent, nature, horizon)
    return sum((mass * path_reward(model, path) for path, mass in dist.items()), Fraction(0))


def path_reward(model: Rpomdp, path: Path) -> Fraction:
    total = Fraction(0)
    state = path.initial
    for action, _, succ in path.steps:
        total += model.reward(state, action)
        state = succ
    return total


def discounted_value(model: Rpomdp, agent: AgentPolicy, nature: NaturePolicy, discount: Fraction, horizon: int) -> tuple[Fraction, Fraction]:
    """Truncated discounted value and an a-priori bound on the omitted tail.

    Returns ``(Σ_{t<K} γ^t r_t, γ^K · R_max / (1 − γ))``.  This is only a
    truncation: the infinite-horizon problem is not solved here.
    """
    discount = Fraction(discount)
    if not 0 <= discount < 1:
        raise ContractError("discount must lie in [0, 1)")
    weights = tuple(discount**t for t in range(horizon))
    total = Fraction(0)
    for pa, wa in agent.pure_components():
        for pn, wn in nature.pure_components():
            total += wa * wn * _value_pure(model, pa, pn, horizon, weights)
    tail = discount**horizon * model.reward_bound / (1 - discount)
    return total, tail


# ---------------------------------------------------------------------------
# Occupancy states
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OccupancyState:
    """Distribution over equal-length joint histories plus the nature policies that produced it."""

    dist: Mapping[JointHistory, Fraction]
    nature_prefix: tuple[NaturePolicy, ...] = ()
    beliefs: Mapping[JointHistory, Belief] = field(default_factory=dict, compare=False, repr=False)

    @property
    def t(self) -> int:
        return len(self.nature_prefix)

    def total(self) -> Fraction:
        return sum(self.dist.values(), Fraction(0))

    def belief(self, model: Rpomdp, history: JointHistory) -> Belief:
        b = self.beliefs.get(history)
        return b if b is not None else belief_of_history(model, history)


def occupancy_init(model: Rpomdp) -> OccupancyState:
    h0 = observe_joint(model, Path(model.initial_state))
    return OccupancyState({h0: Fraction(1)}, (), {h0: initial_belief(model)})


def _require_behavioural(*policies) -> None:
    for p in policies:
        if p.is_mixed:
            raise ContractError("the occupancy recursion needs behavioural policies; convert mixed policies first")


def occupancy_next(model: Rpomdp, occ: OccupancyState, agent: AgentPolicy, nature: NaturePolicy) -> OccupancyState:
    """Advance the occupancy state by one step under the step-``t`` decision rules."""
    _require_behavioural(agent, nature)
    out: dict[JointHistory, Fraction] = {}
    beliefs: dict[JointHistory, Belief] = {}
    for history, mass in occ.dist.items():
        if mass == 0:
            continue
        b = occ.belief(model, history)
        ha = joint_to_agent(history)
        hn = joint_to_nature(history)
        fixed = _fixed_of_joint(model, history)
        children: set[JointHistory] = set()
        for action, pa in agent.distribution(model, ha):
            for u, pu in nature.distribution(model, hn, nature_key_action(model, action), fixed):
                if not agrees(u, fixed) or not model.uncertainty.contains(u):
                    raise ContractError(f"nature choice {u!r} is invalid after {hn!r}")
                for s, bs in b.items():
                    if (s, action) not in model.transitions:
                        continue
                    for succ, pt in model.row(s, action, u):
                        nh = history.extend(action, u, model.observation(succ))
                        out[nh] = out.get(nh, Fraction(0)) + mass * bs * pa * pu * pt
                        children.add(nh)
        for nh in children:
            a, u, za, zn, zp = nh.steps[-1]
            beliefs[nh] = belief_update(model, b, a, u, za, zn, zp)
    total = sum(out.values(), Fraction(0))
    if total != 1:
        raise ContractError(f"occupancy mass is {total}, not 1")
    return OccupancyState(out, occ.nature_prefix + (nature,), beliefs)


def _fixed_of_joint(model: Rpomdp, history: JointHistory) -> Assignment:
    from .trajectories import fix_nature_history

    return fix_nature_history(model, joint_to_nature(history))


def expected_reward(model: Rpomdp, occ: OccupancyState, agent: AgentPolicy) -> Fraction:
    """Expected immediate reward at the occupancy's time step."""
    _require_behavioural(agent)
    total = Fraction(0)
    for history, mass in occ.dist.items():
        if mass == 0:
            continue
        b = occ.belief(model, history)
        for action, pa in agent.distribution(model, joint_to_agent(history)):
            for s, bs in b.items():
                r = model.reward(s, action)
                if r:
                    total += r * pa * bs * mass
    return total


def occupancy_value(model: Rpomdp, agent: AgentPolicy, nature: NaturePolicy, horizon: int) -> Fraction:
    """``Σ_{t<K}`` expected reward along the occupancy recursion."""
    occ = occupancy_init(model)
    total = Fraction(0)
    for t in range(horizon):
        total += expected_reward(model, occ, agent)
        if t + 1 < horizon:
            occ = occupancy_next(model, occ, agent, nature)
    return total
