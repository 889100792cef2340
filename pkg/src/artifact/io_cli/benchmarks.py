"""Builders for the benchmark models and their reference optimal policies.

Figures draw reward boxes and unlabeled intermediate nodes; the builders
flatten these into ``(state, action)``-labeled rows.  Reward boxes that are
reached with an uncertain probability become states with a single ``go``
action carrying the reward, followed by the absorbing ``end`` state.
Private observations are the placeholder ``⊥`` throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping, Sequence

from ..model import (
    BOTTOM,
    Action,
    Assignment,
    LinearConstraint,
    PlayOrder,
    Rpomdp,
    Stickiness,
    StickinessKind,
    UncertaintySet,
    UNDEFINED,
    constrain,
)
from ..policies import AgentPolicy, NaturePolicy
from ..rational import as_rational
from ..trajectories import AgentHistory, NatureHistory, possible_successors, upd
from .formats import parse_affine

BENCHMARK_IDS = (
    "fig1_rmdp_u1",
    "fig1_rmdp_u2",
    "fig2_sticky",
    "fig3_order_small",
    "fig5_obs_sticky_left",
    "fig5_obs_sticky_right",
    "appC_obs_sticky",
    "appD4_arect",
)

F = Fraction


def _stickiness(model: Rpomdp, kind) -> Stickiness:
    if isinstance(kind, Stickiness):
        return kind
    kind = StickinessKind(kind) if not isinstance(kind, StickinessKind) else kind
    if kind is StickinessKind.OBSERVATION:
        return Stickiness.observation_based(model.template_influence())
    if kind is StickinessKind.CUSTOM:
        raise ValueError("custom stickiness needs an explicit table")
    return Stickiness(kind)


def _build(
    name: str,
    public: Mapping[str, str],
    rows: Mapping[tuple[str, str], Mapping[str, str]],
    rewards: Mapping[tuple[str, str], int],
    boxes: Mapping[str, tuple[str, str]],
    couplings: Sequence[str] = (),
    stickiness=StickinessKind.FULL,
    play_order: PlayOrder = PlayOrder.AGENT_FIRST,
) -> Rpomdp:
    states = tuple(public)
    actions: list[str] = []
    for _, a in rows:
        if a not in actions:
            actions.append(a)
    parsed_couplings = []
    for text in couplings:
        lhs, rhs = text.split("=")
        parsed_couplings.append(LinearConstraint.from_expr(parse_affine(lhs), "=", parse_affine(rhs)))
    model = Rpomdp(
        states=states,
        actions=tuple(actions),
        initial_state=states[0],
        obs_agent={s: BOTTOM for s in states},
        obs_nature={s: BOTTOM for s in states},
        obs_public=dict(public),
        rewards={k: F(v) for k, v in rewards.items()},
        transitions={k: {s: parse_affine(e) for s, e in row.items()} for k, row in rows.items()},
        uncertainty=UncertaintySet(
            tuple(boxes), tuple((as_rational(lo), as_rational(hi)) for lo, hi in boxes.values()), tuple(parsed_couplings)
        ),
        play_order=play_order,
        name=name,
    )
    return model.with_stickiness(_stickiness(model, stickiness))


def _fig1(name: str, boxes, couplings=()) -> Rpomdp:
    return _build(
        name,
        {"s1": "s1", "s2": "s2"},
        {("s1", "a"): {"s2": "p", "s1": "1 - p"}, ("s2", "a"): {"s1": "q", "s2": "1 - q"}},
        {},
        boxes,
        couplings,
        stickiness=StickinessKind.ZERO,
    )


def _fig2_states(extra: Mapping[str, str] = {}) -> dict[str, str]:
    public = {
        "s1": "white",
        "s2": "light",
        "s3": "dark",
        "s4": "dashed",
        "s5": "dashed",
        "s6": "dotted",
        "s7": "dotted",
        "s8": "dotted",
        "s9": "dotted",
    }
    public.update(extra)
    public["end"] = "end"
    return public


_FIG2_PREFIX = {
    ("s1", "go"): {"s2": "0.5", "s3": "0.5"},
    ("s2", "go"): {"s4": "0.9", "s5": "0.1"},
    ("s3", "go"): {"s5": "1"},
    ("s4", "go"): {"s6": "p", "s7": "1 - p"},
    ("s5", "go"): {"s8": "q", "s9": "1 - q"},
}
_PQ_WIDE = {"p": ("0.1", "0.9"), "q": ("0.1", "0.9")}


def _fig2(stickiness, play_order) -> Rpomdp:
    rows = dict(_FIG2_PREFIX)
    for s in ("s6", "s7", "s8", "s9"):
        for a in ("a", "b"):
            rows[(s, a)] = {"end": "1"}
    rows[("end", "go")] = {"end": "1"}
    rewards = {("s6", "a"): 200, ("s6", "b"): 0, ("s7", "a"): 0, ("s7", "b"): 100, ("s8", "a"): 0, ("s8", "b"): 200, ("s9", "a"): 100, ("s9", "b"): 0}
    rewards = {k: v for k, v in rewards.items() if v}
    return _build("fig2_sticky", _fig2_states(), rows, rewards, _PQ_WIDE, stickiness=stickiness, play_order=play_order)


def _appc(stickiness, play_order) -> Rpomdp:
    boxes = {"r200": "box", "r100": "box", "r0": "box"}
    rows = dict(_FIG2_PREFIX)
    rows.update(
        {
            ("s6", "a"): {"r200": "1"},
            ("s6", "b"): {"r0": "1"},
            ("s7", "a"): {"r0": "1"},
            ("s7", "b"): {"r100": "1"},
            ("s8", "a"): {"r0": "1"},
            ("s8", "b"): {"r200": "1"},
            ("s9", "a"): {"r200": "p", "r100": "1 - p"},
            ("s9", "b"): {"r200": "q", "r0": "1 - q"},
        }
    )
    for r in boxes:
        rows[(r, "go")] = {"end": "1"}
    rows[("end", "go")] = {"end": "1"}
    rewards = {("r200", "go"): 200, ("r100", "go"): 100}
    return _build("appC_obs_sticky", _fig2_states(boxes), rows, rewards, _PQ_WIDE, stickiness=stickiness, play_order=play_order)


def _fig3(stickiness, play_order) -> Rpomdp:
    rows = {
        ("s1", "a"): {"r300": "p", "r0": "1 - p"},
        ("s1", "b"): {"r0": "p", "r300": "1 - p"},
        ("r300", "go"): {"end": "1"},
        ("r0", "go"): {"end": "1"},
        ("end", "go"): {"end": "1"},
    }
    public = {"s1": "white", "r300": "box", "r0": "box", "end": "end"}
    return _build("fig3_order_small", public, rows, {("r300", "go"): 300}, {"p": ("0.1", "0.9")}, stickiness=stickiness, play_order=play_order)


def _appd4(stickiness, play_order) -> Rpomdp:
    rows = {
        ("s1", "a"): {"r300": "p", "r0": "1 - p"},
        ("s1", "b"): {"r0": "q", "r100": "0.5 - q", "s2": "0.5"},
        ("s2", "a"): {"r0": "p", "r100": "1 - p"},
        ("s2", "b"): {"r100": "q", "r0": "1 - q"},
        ("r300", "go"): {"end": "1"},
        ("r100", "go"): {"end": "1"},
        ("r0", "go"): {"end": "1"},
        ("end", "go"): {"end": "1"},
    }
    public = {"s1": "white", "s2": "white", "r300": "box", "r100": "box", "r0": "box", "end": "end"}
    rewards = {("r300", "go"): 300, ("r100", "go"): 100}
    return _build("appD4_arect", public, rows, rewards, {"p": ("0.1", "0.4"), "q": ("0.1", "0.4")}, stickiness=stickiness, play_order=play_order)


def _fig5(name: str, public: Mapping[str, str]) -> Rpomdp:
    rows = {("s1", "a"): {"s2": "p", "s1": "1 - p"}, ("s2", "a"): {"s1": "q", "s2": "1 - q"}}
    return _build(name, public, rows, {}, _PQ_WIDE, stickiness=StickinessKind.OBSERVATION)


_DEFAULTS = {
    "fig2_sticky": (StickinessKind.FULL, PlayOrder.AGENT_FIRST),
    "appC_obs_sticky": (StickinessKind.FULL, PlayOrder.NATURE_FIRST),
    "fig3_order_small": (StickinessKind.FULL, PlayOrder.AGENT_FIRST),
    "appD4_arect": (StickinessKind.FULL, PlayOrder.AGENT_FIRST),
}

#: Horizon at which every reward of the benchmark has been collected.
HORIZONS = {
    "fig1_rmdp_u1": 3,
    "fig1_rmdp_u2": 3,
    "fig2_sticky": 4,
    "fig3_order_small": 2,
    "fig5_obs_sticky_left": 3,
    "fig5_obs_sticky_right": 3,
    "appC_obs_sticky": 5,
    "appD4_arect": 3,
}


def build_benchmark(benchmark_id: str, stickiness=None, play_order: PlayOrder | str | None = None) -> Rpomdp:
    """Build a benchmark model; ``stickiness`` and ``play_order`` override its defaults.

    ``stickiness`` is a :class:`Stickiness`, a :class:`StickinessKind` or its
    value (``"full"``, ``"zero"``, ``"observation"``).  Observation-based
    stickiness derives the influence sets from the transition template.
    """
    if benchmark_id not in BENCHMARK_IDS:
        raise KeyError(f"unknown benchmark {benchmark_id!r}; choose from {', '.join(BENCHMARK_IDS)}")
    if isinstance(play_order, str):
        play_order = PlayOrder(play_order)
    if benchmark_id == "fig1_rmdp_u1":
        model = _fig1(benchmark_id, _PQ_WIDE)
    elif benchmark_id == "fig1_rmdp_u2":
        model = _fig1(benchmark_id, {"p": ("0.1", "0.4"), "q": ("0", "1")}, ["q - 2*p = 0"])
    elif benchmark_id == "fig5_obs_sticky_left":
        model = _fig5(benchmark_id, {"s1": "light", "s2": "dark"})
    elif benchmark_id == "fig5_obs_sticky_right":
        model = _fig5(benchmark_id, {"s1": "light", "s2": "light"})
    else:
        default_kind, default_order = _DEFAULTS[benchmark_id]
        builder = {"fig2_sticky": _fig2, "appC_obs_sticky": _appc, "fig3_order_small": _fig3, "appD4_arect": _appd4}[benchmark_id]
        return builder(stickiness if stickiness is not None else default_kind, play_order or default_order)
    if stickiness is not None:
        model = model.with_stickiness(_stickiness(model, stickiness))
    if play_order is not None:
        model = model.with_play_order(play_order)
    return model


# ---------------------------------------------------------------------------
# Policies written as rules over public observation sequences
# ---------------------------------------------------------------------------

AgentRule = Callable[[tuple[str, ...]], Mapping[Action, object] | None]
NatureRule = Callable[[tuple[str, ...], Action | None], Mapping | Sequence | None]


def agent_policy_from_rule(model: Rpomdp, horizon: int, rule: AgentRule) -> AgentPolicy:
    """Tabulate ``rule`` (public observations so far → action weights) on all reachable histories."""
    table = {}
    layer = {AgentHistory(model.agent_observation(model.initial_state)): {model.initial_state}}
    for _ in range(horizon):
        nxt: dict[AgentHistory, set] = {}
        for h, states in layer.items():
            publics = (h.initial[1],) + tuple(step[2] for step in h.steps)
            dist = rule(publics)
            if dist is not None:
                table[h] = dist
            for a in model.actions_for_observation(h.last):
                for s in states:
                    for succ in possible_successors(model, s, a):
                        nxt.setdefault(h.extend(a, model.agent_observation(succ)), set()).add(succ)
        layer = nxt
    return AgentPolicy.stochastic(table)


def _as_pairs(dist) -> list[tuple[Assignment, Fraction]]:
    if isinstance(dist, Mapping) and all(isinstance(k, str) for k in dist):
        return [(Assignment(dist), F(1))]
    pairs = dist.items() if isinstance(dist, Mapping) else dist
    return [(u if isinstance(u, Assignment) else Assignment(dict(u)), as_rational(w)) for u, w in pairs]


def nature_policy_from_rule(model: Rpomdp, horizon: int, rule: NatureRule) -> NaturePolicy:
    """Tabulate ``rule`` on every reachable nature key.

    The rule receives the public observations so far and, agent-first, the
    current action.  It returns an assignment mapping (Dirac), a sequence of
    ``(assignment, weight)`` pairs, or ``None`` for the fallback.  Variables
    the rule leaves out are completed from the first vertex agreeing with
    the fixed variables; fixed variables always keep their value.
    """
    agent_first = model.agent_first
    table = {}
    frontier = {(model.initial_state, NatureHistory(model.nature_observation(model.initial_state)), UNDEFINED)}
    for _ in range(horizon):
        nxt = set()
        for state, hn, fixed in frontier:
            zn, zp = model.nature_observation(state)
            publics = (hn.initial[1],) + tuple(step[3] for step in hn.steps)
            for action in model.enabled_actions(state):
                key = (hn, action if agent_first else None)
                if key not in table:
                    raw = rule(publics, key[1])
                    base = constrain(model.uncertainty, fixed)
                    if raw is None:
                        pairs = [(base.vertices()[0], F(1))]
                    else:
                        pairs = []
                        for u, w in _as_pairs(raw):
                            free = {k: v for k, v in u.items() if k not in fixed}
                            pairs.append((constrain(base, free).vertices()[0], w))
                    table[key] = pairs
                for u, _ in table[key]:
                    nfixed = upd(model, fixed, u, zn, zp, action)
                    for succ, _ in model.row(state, action, u):
                        nxt.add((succ, hn.extend(action, u, model.nature_observation(succ)), nfixed))
        frontier = nxt
    return NaturePolicy.stochastic(table)


# ---------------------------------------------------------------------------
# Reference results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Reference:
    """A published optimal value with the policy pair that attains it."""

    benchmark: str
    stickiness: StickinessKind
    play_order: PlayOrder
    horizon: int
    value: Fraction
    agent_rule: AgentRule
    nature_rule: NatureRule
    exact_solve: bool  # the solver is expected to reach gap 0 exactly

    @property
    def label(self) -> str:
        return f"{self.benchmark} {self.stickiness.value} {self.play_order.value}"

    def model(self) -> Rpomdp:
        return build_benchmark(self.benchmark, self.stickiness, self.play_order)

    def policies(self, model: Rpomdp | None = None) -> tuple[AgentPolicy, NaturePolicy]:
        model = model or self.model()
        return (
            agent_policy_from_rule(model, self.horizon, self.agent_rule),
            nature_policy_from_rule(model, self.horizon, self.nature_rule),
        )


def _dotted(light: Mapping, dark: Mapping) -> AgentRule:
    def rule(obs):
        if len(obs) == 4 and obs[3] == "dotted":
            return light if obs[1] == "light" else dark
        return None

    return rule


def _at(table: Mapping[tuple[str, ...], object]) -> NatureRule:
    def rule(obs, action):
        return table.get(obs)

    return rule


def _pq(p, q) -> dict:
    return {"p": as_rational(p), "q": as_rational(q)}


SK, PO = StickinessKind, PlayOrder
WLD = ("white", "light", "dashed")
WDD = ("white", "dark", "dashed")

REFERENCES: tuple[Reference, ...] = (
    Reference(
        "fig2_sticky", SK.FULL, PO.AGENT_FIRST, 4, F(200, 3),
        _dotted({"a": F(1, 3), "b": F(2, 3)}, {"a": F(7, 10), "b": F(3, 10)}),
        _at({("white",): _pq(F(1, 3), F(1, 3))}),
        True,
    ),
    Reference(
        "fig2_sticky", SK.ZERO, PO.AGENT_FIRST, 4, F(131, 2),
        _dotted({"a": F(1, 3), "b": F(2, 3)}, {"a": F(2, 3), "b": F(1, 3)}),
        _at({WLD: _pq(F(83, 270), F(1, 10)), WDD: _pq(F(1, 10), F(1, 3))}),
        True,
    ),
    Reference(
        "fig3_order_small", SK.FULL, PO.AGENT_FIRST, 2, F(30),
        lambda obs: {"a": 1} if len(obs) == 1 else None,
        lambda obs, action: {"p": F(1, 10)} if action == "a" else ({"p": F(9, 10)} if action == "b" else None),
        True,
    ),
    Reference(
        "fig3_order_small", SK.FULL, PO.NATURE_FIRST, 2, F(150),
        lambda obs: {"a": F(1, 2), "b": F(1, 2)} if len(obs) == 1 else None,
        lambda obs, action: {"p": F(1, 2)} if len(obs) == 1 else None,
        True,
    ),
    Reference(
        "appD4_arect", SK.FULL, PO.AGENT_FIRST, 3, F(40),
        lambda obs: {"b": 1} if obs == ("white",) else ({"a": 1} if obs == ("white", "white") else None),
        lambda obs, action: ({"p": F(1, 10)} if action == "a" else _pq("0.4", "0.4")) if obs == ("white",) else None,
        True,
    ),
    Reference(
        "appD4_arect", SK.FULL, PO.NATURE_FIRST, 3, F(360, 7),
        lambda obs: {"a": F(1, 7), "b": F(6, 7)} if obs == ("white",) else ({"a": 1} if obs == ("white", "white") else None),
        lambda obs, action: _pq(F(6, 35), "0.4") if obs == ("white",) else None,
        False,
    ),
    Reference(
        "appC_obs_sticky", SK.FULL, PO.NATURE_FIRST, 5, 74 + F(11, 390),
        _dotted({"a": F(17, 117), "b": F(100, 117)}, {"a": F(643, 1170), "b": F(527, 1170)}),
        _at({("white",): [(_pq("0.1", "0.1"), F(17, 24)), (_pq("0.9", "0.1"), F(3, 104)), (_pq("0.9", "0.9"), F(41, 156))]}),
        False,
    ),
    Reference(
        "appC_obs_sticky", SK.OBSERVATION, PO.NATURE_FIRST, 5, 71 + F(9, 10),
        _dotted({"a": F(10, 31), "b": F(21, 31)}, {"a": F(20, 31), "b": F(11, 31)}),
        _at({
            WLD: [(_pq("0.1", "0.1"), F(1663, 2232)), (_pq("0.9", "0.1"), F(569, 2232))],
            WDD: [(_pq("0.1", "0.1"), F(187, 248)), (_pq("0.1", "0.9"), F(61, 248))],
        }),
        False,
    ),
    Reference(
        "appC_obs_sticky", SK.ZERO, PO.NATURE_FIRST, 5, 70 + F(295, 348),
        _dotted({"a": F(1, 3), "b": F(2, 3)}, {"a": F(18, 29), "b": F(11, 29)}),
        lambda obs, action: {
            WLD: [(_pq("0.1", "0.1"), F(1591, 2160)), (_pq("0.9", "0.1"), F(569, 2160))],
            WDD: [(_pq("0.1", "0.1"), F(171, 232)), (_pq("0.1", "0.9"), F(61, 232))],
        }.get(obs, _pq("0.1", "0.1") if len(obs) == 4 else None),
        False,
    ),
)


def references(benchmark_id: str | None = None) -> list[Reference]:
    return [r for r in REFERENCES if benchmark_id is None or r.benchmark == benchmark_id]
