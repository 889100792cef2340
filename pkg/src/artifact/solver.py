"""Best responses and a double-oracle saddle-point search.

Both best responses work directly on the RPOMDP:

* the agent's best response is exact backward induction over the agent's
  information sets (histories), with nature's policy folded into the
  weights of the states consistent with each history;
* nature's best response is a search over nature's decision blocks (one
  per reachable nature key).  When the value is linear in every block the
  candidates are the vertices of the still-free uncertainty set, which is
  exact; otherwise a grid over the free variables is refined locally.

``solve_saddle`` alternates the two over growing finite supports and
solves the induced matrix games exactly with a rational simplex.
"""

from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction

import sympy
from sympy.solvers.simplex import linprog

from .errors import CapacityError
from .evaluation import value_fh
from .model import Assignment, Rpomdp, State, UNDEFINED, constrain
from .policies import (
    DEFAULT_POLICY_CAP,
    AgentPolicy,
    NaturePolicy,
    count_deterministic_agent_policies,
    enumerate_deterministic_agent_policies,
)
from .trajectories import AgentHistory, NatureHistory, agrees, upd

__all__ = [
    "SaddleResult",
    "SolverConfig",
    "agent_best_response",
    "certify_saddle",
    "detect_nature_linearity",
    "nature_best_response",
    "solve_matrix_game",
    "solve_saddle",
]


@dataclass(frozen=True)
class SolverConfig:
    tolerance: Fraction = Fraction(1, 1000)
    grid_points: int = 5
    refine_rounds: int = 6
    policy_cap: int = DEFAULT_POLICY_CAP
    max_rounds: int = 50
    #: ``None`` decides by :func:`detect_nature_linearity`; ``True``/``False`` force vertex/grid search.
    vertex_only: bool | None = None


@dataclass
class SaddleResult:
    lower_value: Fraction
    upper_value: Fraction
    agent_policy: AgentPolicy
    nature_policy: NaturePolicy
    gap: Fraction
    iterations: int
    grid_resolution: Fraction
    history: list[tuple[Fraction, Fraction]] = field(default_factory=list)

    @property
    def value(self) -> Fraction:
        """The midpoint of the bracket (the saddle value when the gap is 0)."""
        return (self.lower_value + self.upper_value) / 2


def _components(policy) -> list[tuple[object, Fraction]]:
    return list(policy.pure_components())


# ---------------------------------------------------------------------------
# Linearity detection
# ---------------------------------------------------------------------------


def _symbolic_value(model: Rpomdp, agent: AgentPolicy, horizon: int):
    """Value of ``agent`` with every nature choice left as an indeterminate.

    Returns the expanded polynomial and the symbols of each decision block.
    A stuck variable keeps the symbol of the block where it stuck.
    """
    blocks: dict[tuple, dict[str, sympy.Symbol]] = {}
    agent_first = model.agent_first

    def block(key: tuple, free: list[str]) -> dict[str, sympy.Symbol]:
        syms = blocks.get(key)
        if syms is None:
            index = len(blocks)
            syms = {v: sympy.Symbol(f"{v}_{index}") for v in free}
            blocks[key] = syms
        return syms

    def prob(expr, env) -> sympy.Expr:
        out = sympy.Rational(expr.constant.numerator, expr.constant.denominator)
        for name, c in expr.coefficients:
            out += sympy.Rational(c.numerator, c.denominator) * env[name]
        return out

    def walk(state: State, ha: AgentHistory, trace: tuple, stuck: dict, depth: int):
        if depth == horizon:
            return sympy.Integer(0)
        zn, zp = model.nature_observation(state)
        total = sympy.Integer(0)
        for action, pa in agent.distribution(model, ha):
            weight = sympy.Rational(pa.numerator, pa.denominator)
            r = model.reward(state, action)
            if r:
                total += weight * sympy.Rational(r.numerator, r.denominator)
            key = trace + ((action,) if agent_first else ())
            free = [v for v in model.variables if v not in stuck]
            env = dict(stuck)
            env.update(block(key, free))
            nstuck = dict(stuck)
            for v in model.sticking(zn, zp, action):
                nstuck.setdefault(v, env[v])
            for succ, expr in model.transitions[(state, action)].items():
                p = prob(expr, env)
                if p == 0:
                    continue
                child = walk(
                    succ,
                    ha.extend(action, model.agent_observation(succ)),
                    trace + (action, model.nature_observation(succ)),
                    nstuck,
                    depth + 1,
                )
                total += weight * p * child
        return total

    s0 = model.initial_state
    value = walk(s0, AgentHistory(model.agent_observation(s0)), (model.nature_observation(s0),), {}, 0)
    return sympy.expand(value), [list(b.values()) for b in blocks.values()]


def detect_nature_linearity(model: Rpomdp, horizon: int, cap: int = DEFAULT_POLICY_CAP) -> bool:
    """Whether the value has degree at most one in every nature decision block.

    Checked symbolically for every deterministic agent policy; raises
    ``CapacityError`` when there are more than ``cap`` of them.
    """
    cache = model._row_cache
    key = ("nature-linear", horizon)
    if key in cache:
        return cache[key]
    result = True
    for agent in enumerate_deterministic_agent_policies(model, horizon, cap):
        value, blocks = _symbolic_value(model, agent, horizon)
        for syms in blocks:
            if syms and value.free_symbols & set(syms):
                if sympy.Poly(value, *syms).total_degree() > 1:
                    result = False
                    break
        if not result:
            break
    cache[key] = result
    return result


# ---------------------------------------------------------------------------
# Agent best response
# ---------------------------------------------------------------------------


def agent_best_response(model: Rpomdp, nature: NaturePolicy, horizon: int, config: SolverConfig = SolverConfig()) -> tuple[AgentPolicy, Fraction]:
    """Exact best deterministic response of the agent to ``nature``.

    Ties go to the first action in enumeration order, so the result is the
    first maximiser among the enumerated deterministic policies.
    """
    total = count_deterministic_agent_policies(model, horizon)
    if total > config.policy_cap:
        raise CapacityError(f"{total} deterministic agent policies exceed the cap of {config.policy_cap}", total)
    comps = _components(nature)
    agent_first = model.agent_first
    table: dict[AgentHistory, str] = {}

    def solve(ha: AgentHistory, nodes: list, depth: int) -> Fraction:
        # nodes: (state, nature history, fixed, component, weight)
        if depth == horizon:
            return Fraction(0)
        best_action, best_value = None, None
        for action in model.actions_for_observation(ha.last):
            value = Fraction(0)
            children: dict[tuple, list] = defaultdict(list)
            for state, hn, fixed, c, w in nodes:
                r = model.reward(state, action)
                if r:
                    value += w * r
                if depth + 1 == horizon:
                    continue
                zn, zp = hn.last
                policy = comps[c][0]
                for u, pu in policy.distribution(model, hn, action if agent_first else None, fixed):
                    if not agrees(u, fixed):
                        continue
                    nfixed = upd(model, fixed, u, zn, zp, action)
                    for succ, pt in model.row(state, action, u):
                        children[model.agent_observation(succ)].append(
                            (succ, hn.extend(action, u, model.nature_observation(succ)), nfixed, c, w * pu * pt)
                        )
            for obs, cnodes in children.items():
                value += solve(ha.extend(action, obs), cnodes, depth + 1)
            if best_value is None or value > best_value:
                best_action, best_value = action, value
        table[ha] = best_action
        return best_value

    s0 = model.initial_state
    root = [(s0, NatureHistory(model.nature_observation(s0)), UNDEFINED, i, w) for i, (_, w) in enumerate(comps)]
    value = solve(AgentHistory(model.agent_observation(s0)), root, 0)
    return AgentPolicy.deterministic(table), value


# ---------------------------------------------------------------------------
# Nature best response
# ---------------------------------------------------------------------------


class _NatureSearch:
    """Minimisation over nature's decision blocks for a fixed agent policy."""

    def __init__(self, model: Rpomdp, agent: AgentPolicy, horizon: int, config: SolverConfig, vertex_only: bool):
        self.model = model
        self.horizon = horizon
        self.config = config
        self.vertex_only = vertex_only
        self.comps = _components(agent)
        self.finest = Fraction(0)

    # Arrivals are (state, agent history, component, weight); they share the nature history.
    def arrive(self, hn: NatureHistory, fixed: Assignment, arrivals: list, depth: int) -> tuple[Fraction, dict]:
        model = self.model
        if depth == self.horizon:
            return Fraction(0), {}
        value = Fraction(0)
        keys: dict = defaultdict(list)
        for state, ha, c, w in arrivals:
            policy = self.comps[c][0]
            if model.agent_first:
                for action, pa in policy.distribution(model, ha):
                    r = model.reward(state, action)
                    if r:
                        value += w * pa * r
                    keys[action].append((state, ha, c, w * pa))
            else:
                keys[None].append((state, ha, c, w))
        table: dict = {}
        for action, nodes in keys.items():
            v, t = self.block(hn, fixed, action, nodes, depth)
            value += v
            table.update(t)
        return value, table

    def _outcome(self, hn, fixed, action, nodes, depth, u) -> tuple[Fraction, dict]:
        model = self.model
        zn, zp = hn.last
        value = Fraction(0)
        # successor arrivals grouped by (action, nature observation)
        groups: dict = defaultdict(list)
        for state, ha, c, w in nodes:
            if action is None:
                dist = self.comps[c][0].distribution(model, ha)
            else:
                dist = ((action, Fraction(1)),)
            for a, pa in dist:
                if action is None:
                    r = model.reward(state, a)
                    if r:
                        value += w * pa * r
                if depth + 1 == self.horizon:
                    continue
                for succ, pt in model.row(state, a, u):
                    groups[(a, model.nature_observation(succ))].append(
                        (succ, ha.extend(a, model.agent_observation(succ)), c, w * pa * pt)
                    )
        table = {(hn, action): u}
        for (a, obs), arrivals in groups.items():
            v, t = self.arrive(hn.extend(a, u, obs), upd(model, fixed, u, zn, zp, a), arrivals, depth + 1)
            value += v
            table.update(t)
        return value, table

    def _signature(self, fixed, zn, zp, pairs, actions, u):
        model = self.model
        return (
            tuple(model.row(s, a, u) for s, a in pairs),
            tuple(upd(model, fixed, u, zn, zp, a) for a in actions),
        )

    def block(self, hn, fixed, action, nodes, depth) -> tuple[Fraction, dict]:
        model = self.model
        zn, zp = hn.last
        pairs: list = []
        actions: list = []
        for state, ha, c, _ in nodes:
            acts = [action] if action is not None else [a for a, _ in self.comps[c][0].distribution(model, ha)]
            for a in acts:
                if (state, a) not in pairs:
                    pairs.append((state, a))
                if a not in actions:
                    actions.append(a)
        uset = constrain(model.uncertainty, fixed)
        seen: dict = {}
        best: list = [None, None, None]  # value, table, u

        def consider(candidates):
            improved = False
            for u in candidates:
                sig = self._signature(fixed, zn, zp, pairs, actions, u)
                if sig in seen:
                    continue
                outcome = self._outcome(hn, fixed, action, nodes, depth, u)
                seen[sig] = outcome
                if best[0] is None or outcome[0] < best[0]:
                    best[:] = [outcome[0], outcome[1], u]
                    improved = True
            return improved

        if self.vertex_only:
            consider(uset.vertices())
        else:
            consider(uset.grid(self.config.grid_points))
            free = uset.free_variables
            if free and len(seen) > 1:
                width = max(hi - lo for lo, hi in (uset.box(v) for v in free))
                spacing = width / max(1, self.config.grid_points - 1)
                for _ in range(self.config.refine_rounds):
                    spacing /= 2
                    consider(uset.local_grid(best[2], spacing))
                self.finest = max(self.finest, spacing)
        return best[0], best[1]


def nature_best_response(model: Rpomdp, agent: AgentPolicy, horizon: int, config: SolverConfig = SolverConfig()) -> tuple[NaturePolicy, Fraction]:
    """Deterministic nature policy minimising the value against ``agent``.

    Exact when the value is linear per decision block (vertex search);
    otherwise the best point found by grid search with local refinement,
    whose returned value is exact for the returned policy.
    """
    policy, value, _ = _nature_best_response(model, agent, horizon, config)
    return policy, value


def _nature_best_response(model, agent, horizon, config):
    vertex_only = config.vertex_only
    if vertex_only is None:
        vertex_only = detect_nature_linearity(model, horizon, config.policy_cap)
    search = _NatureSearch(model, agent, horizon, config, vertex_only)
    s0 = model.initial_state
    arrivals = [(s0, AgentHistory(model.agent_observation(s0)), i, w) for i, (_, w) in enumerate(search.comps)]
    value, table = search.arrive(NatureHistory(model.nature_observation(s0)), UNDEFINED, arrivals, 0)
    return NaturePolicy.deterministic(table), value, search.finest


# ---------------------------------------------------------------------------
# Matrix games and the double oracle
# ---------------------------------------------------------------------------


def _rat(x) -> Fraction:
    x = sympy.Rational(x)
    return Fraction(int(x.p), int(x.q))


def solve_matrix_game(matrix: list[list[Fraction]]) -> tuple[Fraction, list[Fraction], list[Fraction]]:
    """Exact value and optimal mixtures of a zero-sum matrix game (rows maximise)."""
    rows, cols = len(matrix), len(matrix[0])
    shift = 1 - min(min(r) for r in matrix)
    shifted = sympy.Matrix(rows, cols, lambda i, j: sympy.Rational(str(matrix[i][j] + shift)))
    # maximiser: min 1·z  s.t.  Mᵀ z ≥ 1, z ≥ 0
    total, z = linprog(sympy.ones(rows, 1), -shifted.T, -sympy.ones(cols, 1))
    x = [_rat(zi / total) for zi in z]
    # minimiser: max 1·w  s.t.  M w ≤ 1, w ≥ 0
    neg, w = linprog(-sympy.ones(cols, 1), shifted, sympy.ones(rows, 1))
    y = [_rat(wi / -neg) for wi in w]
    return _rat(1 / total) - shift, x, y


def _mixture(cls, policies, weights):
    return cls.mixed([(p, w) for p, w in zip(policies, weights) if w])


def solve_saddle(model: Rpomdp, horizon: int, config: SolverConfig = SolverConfig()) -> SaddleResult:
    """Double-oracle search for the finite-horizon saddle point.

    ``lower_value`` is the best value nature's best response leaves to one
    of the agent's mixtures; ``upper_value`` the best value the agent's best
    response can reach against one of nature's mixtures.
    """
    vertex_only = config.vertex_only
    if vertex_only is None:
        vertex_only = detect_nature_linearity(model, horizon, config.policy_cap)
    cfg = SolverConfig(config.tolerance, config.grid_points, config.refine_rounds, config.policy_cap, config.max_rounds, vertex_only)

    start_nature = NaturePolicy.deterministic({})
    agents = [agent_best_response(model, start_nature, horizon, cfg)[0]]
    natures = [nature_best_response(model, agents[0], horizon, cfg)[0]]
    payoff: dict[tuple[int, int], Fraction] = {}

    lower = upper = None
    best_nature = None
    agent_rounds: list[tuple[list[Fraction], Fraction]] = []
    finest = Fraction(0)
    trace: list[tuple[Fraction, Fraction]] = []
    rounds = 0
    while rounds < cfg.max_rounds:
        rounds += 1
        for i, j in itertools.product(range(len(agents)), range(len(natures))):
            if (i, j) not in payoff:
                payoff[(i, j)] = value_fh(model, agents[i], natures[j], horizon)
        matrix = [[payoff[(i, j)] for j in range(len(natures))] for i in range(len(agents))]
        _, x, y = solve_matrix_game(matrix)
        mixed_agent = _mixture(AgentPolicy, agents, x)
        mixed_nature = _mixture(NaturePolicy, natures, y)

        br_agent, up = agent_best_response(model, mixed_nature, horizon, cfg)
        br_nature, low, spacing = _nature_best_response(model, mixed_agent, horizon, cfg)
        finest = max(finest, spacing)
        if upper is None or up < upper:
            upper, best_nature = up, mixed_nature
        agent_rounds.append((x, low))
        if lower is None or low > lower:
            lower = low
        trace.append((lower, upper))
        if upper - lower <= cfg.tolerance:
            break
        added = False
        if br_agent not in agents:
            agents.append(br_agent)
            added = True
        if br_nature not in natures:
            natures.append(br_nature)
            added = True
        if not added:
            break
    # A grid response may miss nature's optimum; never claim more for an
    # agent mixture than the exact payoffs against nature's final candidates.
    for i, j in itertools.product(range(len(agents)), range(len(natures))):
        if (i, j) not in payoff:
            payoff[(i, j)] = value_fh(model, agents[i], natures[j], horizon)
    lower, best_agent = None, None
    for x, low in agent_rounds:
        worst = min(sum((xi * payoff[(i, j)] for i, xi in enumerate(x)), Fraction(0)) for j in range(len(natures)))
        low = min(low, worst)
        if lower is None or low > lower:
            lower, best_agent = low, _mixture(AgentPolicy, agents, x)
    return SaddleResult(lower, upper, best_agent, best_nature, upper - lower, rounds, finest, trace)


def certify_saddle(model: Rpomdp, horizon: int, result: SaddleResult, config: SolverConfig = SolverConfig()) -> bool:
    """No-improvement check: best responses to the returned mixtures reproduce the bounds."""
    _, up = agent_best_response(model, result.nature_policy, horizon, config)
    _, low = nature_best_response(model, result.agent_policy, horizon, config)
    return up == result.upper_value and low == result.lower_value
