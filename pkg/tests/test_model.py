from fractions import Fraction as F

import pytest

from artifact.errors import DomainError, InfeasibleError
from artifact.io_cli.benchmarks import build_benchmark
from artifact.model import (
    UNDEFINED,
    AffineExpr,
    Assignment,
    LinearConstraint,
    RawRpomdp,
    Rpomdp,
    Stickiness,
    StickinessKind,
    UncertaintySet,
    agrees,
    constrain,
    determinize_observations,
    stick,
    sticking_variables,
    uncertainty_vertices,
    validate_model,
)

# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

U1 = UncertaintySet.from_boxes({"p": (F(1, 10), F(9, 10)), "q": (F(1, 10), F(9, 10))})
U2 = UncertaintySet.from_boxes(
    {"p": (F(1, 10), F(4, 10)), "q": (0, 1)},
    [LinearConstraint.from_expr(AffineExpr.var("q") - AffineExpr.var("p", 2), "=", 0)],
)


def tiny(rows, uncertainty=U1, stickiness=None, rewards=None):
    states = sorted({s for s, _ in rows} | {t for row in rows.values() for t in row})
    actions = sorted({a for _, a in rows})
    return Rpomdp(
        states=tuple(states),
        actions=tuple(actions),
        initial_state=states[0],
        obs_agent={s: "⊥" for s in states},
        obs_nature={s: "⊥" for s in states},
        obs_public={s: s for s in states},
        rewards=rewards or {},
        transitions=rows,
        uncertainty=uncertainty,
        stickiness=stickiness or Stickiness.full(),
    )


def v(name):
    return AffineExpr.var(name)


ONE = AffineExpr.const(1)


# ---------------------------------------------------------------------------
# Assignments and expressions
# ---------------------------------------------------------------------------


def test_assignment_is_hashable_and_ordered_by_content():
    a = Assignment({"p": F(1, 3), "q": "0.5"})
    b = Assignment({"q": F(1, 2), "p": F(1, 3)})
    assert a == b and hash(a) == hash(b)
    assert a["q"] == F(1, 2)
    assert len({a, b}) == 1


def test_undefined_assignment_is_empty():
    assert len(UNDEFINED) == 0


@pytest.mark.parametrize(
    "partial, expected",
    [
        (UNDEFINED, True),
        ({"p": F(3, 10)}, True),
        ({"p": F(4, 10)}, False),
    ],
)
def test_agrees(partial, expected):
    u = Assignment({"p": F(3, 10), "q": F(1, 2)})
    assert agrees(u, Assignment(partial)) is expected


def test_affine_expression_evaluates_exactly():
    e = ONE - v("q") * F(1, 2) + F(1, 10)
    assert e.evaluate({"q": F(1, 5)}) == F(1) - F(1, 10) + F(1, 10)
    assert e.variables == frozenset({"q"})
    assert not e.is_constant
    assert (v("p") - v("p")).is_constant


# ---------------------------------------------------------------------------
# Uncertainty sets
# ---------------------------------------------------------------------------


def test_box_vertices_are_the_four_corners():
    verts = uncertainty_vertices(U1)
    assert len(verts) == 4
    assert {(u["p"], u["q"]) for u in verts} == {(F(1, 10), F(1, 10)), (F(1, 10), F(9, 10)), (F(9, 10), F(1, 10)), (F(9, 10), F(9, 10))}


def test_coupled_set_has_two_vertices():
    verts = uncertainty_vertices(U2)
    assert verts == [Assignment({"p": F(1, 10), "q": F(1, 5)}), Assignment({"p": F(2, 5), "q": F(4, 5)})]


def test_degenerate_box_has_one_vertex():
    s = UncertaintySet.from_boxes({"p": (F(1, 2), F(1, 2))})
    assert uncertainty_vertices(s) == [Assignment({"p": F(1, 2)})]


def test_infeasible_set_raises():
    s = UncertaintySet.from_boxes({"p": (0, 1)}, [LinearConstraint.from_expr(v("p"), "=", 2)])
    with pytest.raises(InfeasibleError):
        uncertainty_vertices(s)


def test_vertices_are_members():
    for s in (U1, U2):
        assert all(s.contains(u) for u in s.vertices())


def test_constrain_undefined_is_identity():
    assert constrain(U1, UNDEFINED) == U1


def test_constrain_tightens_box():
    c = constrain(U1, Assignment({"p": F(3, 10)}))
    assert c.box("p") == (F(3, 10), F(3, 10))
    assert c.box("q") == U1.box("q")


def test_constrain_propagates_coupling():
    c = constrain(U2, Assignment({"p": F(1, 5)}))
    assert uncertainty_vertices(c) == [Assignment({"p": F(1, 5), "q": F(2, 5)})]


def test_constrain_is_idempotent():
    partial = Assignment({"q": F(1, 2)})
    once = constrain(U1, partial)
    assert constrain(once, partial) == once


def test_constrain_outside_box_is_infeasible():
    with pytest.raises(InfeasibleError):
        constrain(U1, Assignment({"p": F(1)}))


def test_grid_starts_with_vertices_and_stays_inside():
    g = U1.grid(3)
    assert g[:4] == list(U1.vertices())
    assert len(g) == 9
    assert all(U1.contains(u) for u in g)


def test_grid_respects_equalities():
    g = U2.grid(4)
    assert all(u["q"] == 2 * u["p"] for u in g)
    assert U2.free_variables in (("p",), ("q",))


def test_local_grid_is_clipped_to_the_box():
    pts = U1.local_grid({"p": F(1, 10), "q": F(1, 2)}, F(1, 10))
    assert all(U1.contains(u) for u in pts)
    assert Assignment({"p": F(1, 10), "q": F(1, 2)}) in pts


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def test_fig1_models_validate():
    assert validate_model(build_benchmark("fig1_rmdp_u1")).ok
    assert validate_model(build_benchmark("fig1_rmdp_u2")).ok


def test_row_sum_violation_reported():
    m = tiny({("s1", "a"): {"s1": ONE, "s2": v("p")}, ("s2", "a"): {"s2": ONE}})
    report = validate_model(m)
    assert "row-sum" in report.codes()
    assert any("(s1, a)" in str(x) for x in report)


def test_probability_range_checked_at_vertices():
    m = tiny({("s1", "a"): {"s1": v("p") * 2, "s2": ONE - v("p") * 2}, ("s2", "a"): {"s2": ONE}})
    assert "probability-range" in validate_model(m).codes()


def test_graph_preservation_is_informational():
    m = tiny(
        {("s1", "a"): {"s1": v("p"), "s2": ONE - v("p")}, ("s2", "a"): {"s2": ONE}},
        uncertainty=UncertaintySet.from_boxes({"p": (0, 1)}),
    )
    report = validate_model(m)
    assert report.ok
    assert not report.graph_preserving
    assert report.graph_changes[("s1", "a", "s1")]
    assert validate_model(build_benchmark("fig2_sticky")).graph_preserving


def test_unknown_variable_reported():
    m = tiny({("s1", "a"): {"s1": v("r"), "s2": ONE - v("r")}, ("s2", "a"): {"s2": ONE}})
    assert "unknown-variable" in validate_model(m).codes()


def test_missing_action_reported():
    m = tiny({("s1", "a"): {"s2": ONE}})
    assert "no-action" in validate_model(m).codes()


# ---------------------------------------------------------------------------
# Stickiness
# ---------------------------------------------------------------------------


def test_full_and_zero_stickiness():
    full = build_benchmark("fig2_sticky", StickinessKind.FULL)
    zero = build_benchmark("fig2_sticky", StickinessKind.ZERO)
    assert stick(full, "p", "⊥", "white", "go")
    assert not stick(zero, "q", "⊥", "dotted", "a")
    assert sticking_variables(full, "s4", "go") == {"p", "q"}
    assert sticking_variables(zero, "s4", "go") == frozenset()


def test_observation_based_right_model_sticks_both():
    m = build_benchmark("fig5_obs_sticky_right")
    assert stick(m, "p", "⊥", "light", "a")
    assert stick(m, "q", "⊥", "light", "a")


def test_observation_based_left_model_sticks_only_p_in_s1():
    m = build_benchmark("fig5_obs_sticky_left")
    assert sticking_variables(m, "s1", "a") == {"p"}
    assert sticking_variables(m, "s2", "a") == {"q"}


def test_custom_stickiness():
    m = build_benchmark("fig3_order_small", Stickiness.custom([("p", "⊥", "white", "a")]))
    assert stick(m, "p", "⊥", "white", "a")
    assert not stick(m, "p", "⊥", "white", "b")


@pytest.mark.parametrize("args", [("r", "⊥", "white", "a"), ("p", "zz", "white", "a"), ("p", "⊥", "zz", "a"), ("p", "⊥", "white", "zz")])
def test_stick_rejects_unknown_inputs(args):
    with pytest.raises(DomainError):
        stick(build_benchmark("fig3_order_small"), *args)


def test_sticking_variables_rejects_unknown_state():
    with pytest.raises(DomainError):
        sticking_variables(build_benchmark("fig3_order_small"), "nowhere", "a")


# ---------------------------------------------------------------------------
# Observation determinisation
# ---------------------------------------------------------------------------


def _raw(template, stickiness=None):
    return RawRpomdp(
        states=("s", "t"),
        actions=("a",),
        initial_state="s",
        initial_observation=("x", "⊥", "w"),
        rewards={("t", "a"): F(5)},
        template=template,
        uncertainty=UncertaintySet.from_boxes({"p": (F(1, 10), F(9, 10))}),
        stickiness=stickiness or Stickiness.full(),
    )


def test_determinize_dirac_observations_keeps_state_count():
    raw = _raw({("s", "a"): {("t", "x", "⊥", "w"): ONE}, ("t", "a"): {("t", "x", "⊥", "w"): ONE}})
    m = determinize_observations(raw)
    assert len(m.states) == 2
    assert validate_model(m).ok


def test_determinize_splits_uncertain_observation():
    half = AffineExpr.const(F(1, 2))
    raw = _raw(
        {
            ("s", "a"): {("t", "x", "⊥", "w"): v("p"), ("t", "y", "⊥", "w"): ONE - v("p")},
            ("t", "a"): {("t", "x", "⊥", "w"): half, ("t", "y", "⊥", "w"): half},
        }
    )
    m = determinize_observations(raw)
    assert len(m.states) == 3
    assert validate_model(m).ok
    row = m.row(m.initial_state, "a", Assignment({"p": F(1, 10)}))
    assert sorted(p for _, p in row) == [F(1, 10), F(9, 10)]
    assert {m.obs_agent[s] for s, _ in row} == {"x", "y"}
    assert all(m.reward(s, "a") == 5 for s, _ in row)


def test_determinize_rejects_bad_rows():
    with pytest.raises(DomainError):
        determinize_observations(_raw({("s", "a"): {("t", "x", "⊥", "w"): v("p")}}))


def test_determinized_value_matches_direct_enumeration():
    """Oracle: evaluate the raw model by enumerating emitted observations directly."""
    from artifact.evaluation import value_fh
    from artifact.policies import AgentPolicy, NaturePolicy
    from artifact.trajectories import reachable_agent_histories

    third = AffineExpr.const(F(1, 3))
    template = {
        ("s", "a"): {("t", "x", "⊥", "w"): v("p"), ("t", "y", "⊥", "w"): ONE - v("p")},
        ("s", "b"): {("s", "x", "⊥", "w"): third, ("t", "y", "⊥", "w"): ONE - third},
        ("t", "a"): {("s", "y", "⊥", "w"): ONE},
        ("t", "b"): {("t", "x", "⊥", "w"): v("p"), ("s", "x", "⊥", "w"): ONE - v("p")},
    }
    raw = RawRpomdp(
        states=("s", "t"),
        actions=("a", "b"),
        initial_state="s",
        initial_observation=("x", "⊥", "w"),
        rewards={("t", "a"): F(5), ("s", "b"): F(1), ("t", "b"): F(2)},
        template=template,
        uncertainty=UncertaintySet.from_boxes({"p": (F(1, 10), F(9, 10))}),
    )
    # an empty deterministic nature policy falls back to the first vertex, p = 1/10
    u = Assignment({"p": F(1, 10)})

    def rule(obs_seq):
        return {"a": F(1)} if obs_seq[-1] == "y" else {"a": F(1, 4), "b": F(3, 4)}

    def direct(s, obs_seq, depth, horizon):
        if depth == horizon:
            return F(0)
        total = F(0)
        for a, pa in rule(obs_seq).items():
            total += pa * raw.rewards.get((s, a), F(0))
            for (succ, za, _, _), expr in template[(s, a)].items():
                total += pa * expr.evaluate(u) * direct(succ, obs_seq + (za,), depth + 1, horizon)
        return total

    m = determinize_observations(raw)
    for horizon in (1, 2, 3):
        table = {
            h: rule((h.initial[0],) + tuple(za for _, za, _ in h.steps))
            for h, _ in reachable_agent_histories(m, horizon)
        }
        agent = AgentPolicy.stochastic(table)
        assert value_fh(m, agent, NaturePolicy.deterministic({}), horizon) == direct("s", ("x",), 0, horizon)
