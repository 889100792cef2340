"""Paths, fix/upd bookkeeping, validity and observation projections."""

from fractions import Fraction as F
import itertools

import pytest

from artifact.errors import InvalidChoiceError
from artifact.io_cli.benchmarks import build_benchmark
from artifact.model import UNDEFINED, Assignment, PlayOrder, StickinessKind
from artifact.policies import NaturePolicy
from artifact.trajectories import (
    Path,
    fix,
    fix_nature_history,
    joint_to_agent,
    joint_to_nature,
    observe_agent,
    observe_joint,
    observe_nature,
    path_valid,
    relevant_histories,
    upd,
    valid_paths,
)
from policy_gen import BENCH_VARIANTS, build_variant, variant_id


def pq(p, q):
    return Assignment({"p": F(p), "q": F(q)})


FULL = build_benchmark("fig2_sticky", StickinessKind.FULL)
ZERO = build_benchmark("fig2_sticky", StickinessKind.ZERO)


# ── fix / upd ──────────────────────────────────────────────────────────────


def test_fix_of_empty_path_is_undefined():
    assert fix(FULL, Path("s1")) == UNDEFINED


def test_full_stickiness_fixes_everything_at_the_first_step():
    u = pq(F(1, 3), F(1, 3))
    assert fix(FULL, Path("s1").extend("go", u, "s2")) == u


def test_zero_stickiness_never_fixes():
    path = Path("s1").extend("go", pq("0.1", "0.1"), "s2").extend("go", pq("0.9", "0.5"), "s4")
    assert fix(ZERO, path) == UNDEFINED


def test_upd_examples():
    u = pq("0.3", "0.5")
    assert upd(ZERO, UNDEFINED, u, "⊥", "white", "go") == UNDEFINED
    assert upd(FULL, UNDEFINED, u, "⊥", "white", "go") == u


def test_upd_observation_based_left_model_fixes_only_p():
    m = build_benchmark("fig5_obs_sticky_left")
    assert upd(m, UNDEFINED, pq("0.3", "0.5"), "⊥", "light", "a") == Assignment({"p": F(3, 10)})


def test_upd_rejects_disagreeing_choice():
    with pytest.raises(InvalidChoiceError):
        upd(FULL, pq("0.1", "0.1"), pq("0.9", "0.1"), "⊥", "white", "go")


@pytest.mark.parametrize("variant", BENCH_VARIANTS, ids=variant_id)
def test_fix_upd_coherence_and_monotonicity(variant):
    m = build_variant(variant)
    for path in itertools.chain.from_iterable(valid_paths(m, k) for k in range(4)):
        folded = UNDEFINED
        state = path.initial
        for k, (a, u, succ) in enumerate(path.steps):
            before = fix(m, path.prefix(k))
            assert folded == before
            folded = upd(m, folded, u, *m.nature_observation(state), a)
            # monotone: everything fixed earlier keeps its value
            assert all(folded[v] == before[v] for v in before)
            state = succ
        assert folded == fix(m, path)
        assert fix_nature_history(m, observe_nature(m, path)) == folded


# ── validity ───────────────────────────────────────────────────────────────


def test_empty_path_is_valid():
    assert path_valid(FULL, Path("s1"))


def test_full_stickiness_rejects_changed_assignment():
    path = Path("s1").extend("go", pq("0.1", "0.1"), "s2").extend("go", pq("0.9", "0.1"), "s4")
    assert not path_valid(FULL, path)
    assert path_valid(ZERO, path)


def test_zero_probability_step_is_invalid():
    m = build_benchmark("fig3_order_small")
    assert not path_valid(m, Path("s1").extend("a", Assignment({"p": F(1, 2)}), "s1"))
    assert path_valid(m, Path("s1").extend("a", Assignment({"p": F(1, 2)}), "r300"))


def test_assignment_outside_the_set_is_invalid():
    m = build_benchmark("fig3_order_small")
    assert not path_valid(m, Path("s1").extend("a", Assignment({"p": F(1)}), "r300"))


@pytest.mark.parametrize("variant", BENCH_VARIANTS[:8], ids=variant_id)
def test_validity_is_prefix_closed(variant):
    m = build_variant(variant)
    for path in valid_paths(m, 3):
        assert path_valid(m, path)
        assert all(path_valid(m, path.prefix(k)) for k in range(path.length))


# ── observation projections ────────────────────────────────────────────────


def test_initial_observation():
    h = observe_joint(FULL, Path("s1"))
    assert h.initial == ("⊥", "⊥", "white")
    assert h.length == 0


def test_projections_are_restrictions_of_the_joint_history():
    for path in valid_paths(FULL, 3):
        joint = observe_joint(FULL, path)
        agent = observe_agent(FULL, path)
        nature = observe_nature(FULL, path)
        assert joint_to_agent(joint) == agent
        assert joint_to_nature(joint) == nature
        # the agent never sees an assignment; nature sees all of them in order
        assert all(not isinstance(x, Assignment) for step in agent.steps for x in step)
        assert [step[1] for step in nature.steps] == [u for _, u, _ in path.steps]


# ── relevant histories ─────────────────────────────────────────────────────


def test_relevant_histories_at_zero():
    theta = NaturePolicy.deterministic({})
    assert relevant_histories(FULL, theta, 0) == {observe_joint(FULL, Path("s1"))}


def test_relevant_histories_for_a_deterministic_policy():
    from artifact.trajectories import NatureHistory

    u = pq(F(1, 3), F(1, 3))
    theta = NaturePolicy.deterministic({(NatureHistory(("⊥", "white")), "go"): u})
    rel = relevant_histories(FULL, theta, 1)
    # one action, one assignment, two successors
    assert {h.steps[0][2:] for h in rel} == {("⊥", "⊥", "light"), ("⊥", "⊥", "dark")}
    assert all(h.steps[0][1] == u for h in rel)


def test_relevant_histories_of_a_stochastic_policy_are_the_union():
    from artifact.trajectories import NatureHistory

    root = (NatureHistory(("⊥", "white")), "go")
    a, b = pq("0.1", "0.1"), pq("0.9", "0.9")
    mixed = NaturePolicy.stochastic({root: {a: F(1, 2), b: F(1, 2)}})
    only_a = NaturePolicy.deterministic({root: a})
    only_b = NaturePolicy.deterministic({root: b})
    for t in (1, 2):
        assert relevant_histories(FULL, mixed, t) == relevant_histories(FULL, only_a, t) | relevant_histories(FULL, only_b, t)


def test_nature_first_paths_are_enumerated():
    m = build_benchmark("fig3_order_small", StickinessKind.FULL, PlayOrder.NATURE_FIRST)
    paths = list(valid_paths(m, 1))
    # two vertices, two actions, two successors each
    assert len(paths) == 8
