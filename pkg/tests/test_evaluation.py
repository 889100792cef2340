"""Exact values, beliefs and the occupancy recursion."""

from fractions import Fraction as F
import random

import pytest

from artifact.errors import ContractError, ImpossibleObservationError
from artifact.evaluation import (
    belief_of_history,
    belief_update,
    discounted_value,
    expected_reward,
    occupancy_init,
    occupancy_next,
    occupancy_value,
    value_by_paths,
    value_fh,
)
from artifact.io_cli.benchmarks import REFERENCES, build_benchmark
from artifact.model import Assignment, PlayOrder, StickinessKind
from artifact.policies import AgentPolicy, NaturePolicy, path_distribution
from artifact.trajectories import NatureHistory, Path, observe_agent, observe_joint
from policy_gen import random_agent_policy, random_nature_policy

FULL = build_benchmark("fig2_sticky", StickinessKind.FULL)


def pq(p, q):
    return Assignment({"p": F(p), "q": F(q)})


# ── beliefs ────────────────────────────────────────────────────────────────


def test_deterministic_step_gives_dirac_belief():
    b = belief_update(FULL, {"s3": F(1)}, "go", pq("0.5", "0.5"), "⊥", "⊥", "dashed")
    assert b == {"s5": F(1)}


def test_first_step_of_fig2():
    b = belief_update(FULL, {"s1": F(1)}, "go", pq("0.5", "0.5"), "⊥", "⊥", "light")
    assert b == {"s2": F(1)}


def test_shared_observation_splits_belief():
    # from light, both dashed successors share the observation
    b = belief_update(FULL, {"s2": F(1)}, "go", pq("0.5", "0.5"), "⊥", "⊥", "dashed")
    assert b == {"s4": F(9, 10), "s5": F(1, 10)}
    b = belief_update(FULL, b, "go", pq("0.5", "0.5"), "⊥", "⊥", "dotted")
    assert sum(b.values()) == 1
    assert b == {"s6": F(9, 20), "s7": F(9, 20), "s8": F(1, 20), "s9": F(1, 20)}


def test_impossible_observation_raises():
    with pytest.raises(ImpossibleObservationError):
        belief_update(FULL, {"s1": F(1)}, "go", pq("0.5", "0.5"), "⊥", "⊥", "dotted")


def test_belief_of_history_folds_updates():
    u = pq("0.3", "0.7")
    path = Path("s1").extend("go", u, "s3").extend("go", u, "s5")
    assert belief_of_history(FULL, observe_joint(FULL, path)) == {"s5": F(1)}


# ── values ─────────────────────────────────────────────────────────────────


@pytest.mark.parametrize("ref", REFERENCES, ids=lambda r: r.label)
def test_published_policy_pairs_reproduce_published_values(ref):
    model = ref.model()
    agent, nature = ref.policies(model)
    assert value_fh(model, agent, nature, ref.horizon) == ref.value


def test_fig3_agent_first_value_is_independent_of_the_agent():
    m = build_benchmark("fig3_order_small", StickinessKind.FULL, PlayOrder.AGENT_FIRST)
    root = NatureHistory(("⊥", "white"))
    theta = NaturePolicy.deterministic({(root, "a"): {"p": F(1, 10)}, (root, "b"): {"p": F(9, 10)}})
    rng = random.Random(0)
    for _ in range(5):
        assert value_fh(m, random_agent_policy(m, 2, rng), theta, 2) == 30


def test_horizon_zero_is_zero():
    assert value_fh(FULL, AgentPolicy.deterministic({}), NaturePolicy.deterministic({}), 0) == 0


def test_negative_horizon_is_rejected():
    with pytest.raises(ContractError):
        value_fh(FULL, AgentPolicy.deterministic({}), NaturePolicy.deterministic({}), -1)


@pytest.mark.parametrize("seed", range(6))
def test_recursive_value_equals_path_enumeration(seed):
    rng = random.Random(seed)
    m = build_benchmark("appC_obs_sticky", StickinessKind.OBSERVATION)
    kind = ("deterministic", "stochastic", "mixed")[seed % 3]
    agent = random_agent_policy(m, 5, rng, kind)
    nature = random_nature_policy(m, 5, rng, kind)
    assert value_fh(m, agent, nature, 5) == value_by_paths(m, agent, nature, 5)


def test_mixed_value_is_the_weighted_value():
    rng = random.Random(9)
    agent = random_agent_policy(FULL, 4, rng)
    t1 = random_nature_policy(FULL, 4, rng, "deterministic")
    t2 = random_nature_policy(FULL, 4, rng, "deterministic")
    mixed = NaturePolicy.mixed([(t1, F(1, 4)), (t2, F(3, 4))])
    assert value_fh(FULL, agent, mixed, 4) == F(1, 4) * value_fh(FULL, agent, t1, 4) + F(3, 4) * value_fh(FULL, agent, t2, 4)


def test_discounted_truncation_reports_tail_bound():
    ref = REFERENCES[0]
    model = ref.model()
    agent, nature = ref.policies(model)
    value, tail = discounted_value(model, agent, nature, F(1, 2), 4)
    # all reward arrives at t = 3
    assert value == F(1, 8) * ref.value
    assert tail == F(1, 16) * 200 / F(1, 2)
    with pytest.raises(ContractError):
        discounted_value(model, agent, nature, F(1), 4)


# ── occupancy states ───────────────────────────────────────────────────────


def test_occupancy_init_is_dirac():
    occ = occupancy_init(FULL)
    assert dict(occ.dist) == {observe_joint(FULL, Path("s1")): F(1)}
    assert occ.t == 0


def test_deterministic_successor_occupancy_is_dirac():
    m = build_benchmark("fig3_order_small")
    agent = AgentPolicy.deterministic({})
    occ = occupancy_init(m)
    occ = occupancy_next(m, occ, agent, NaturePolicy.deterministic({}))
    assert occ.total() == 1
    occ = occupancy_next(m, occ, agent, NaturePolicy.deterministic({}))
    # both boxes lead to the single end state
    assert {h.last for h in occ.dist} == {("⊥", "⊥", "end")}


def test_expected_reward_of_zero_reward_model():
    m = build_benchmark("fig1_rmdp_u1")
    assert expected_reward(m, occupancy_init(m), AgentPolicy.deterministic({})) == 0


def test_expected_reward_of_dirac_occupancy():
    m = build_benchmark("fig3_order_small")
    occ = occupancy_init(m)
    agent = AgentPolicy.deterministic({})
    occ = occupancy_next(m, occ, agent, NaturePolicy.deterministic({}))
    (history,) = [h for h in occ.dist if h.last[2] == "box"][:1]
    single = type(occ)({history: F(1)}, occ.nature_prefix)
    state = next(iter(single.belief(m, history)))
    assert expected_reward(m, single, agent) == m.reward(state, "go") * single.belief(m, history)[state]


def test_occupancy_rejects_mixed_policies():
    t = NaturePolicy.deterministic({})
    with pytest.raises(ContractError):
        occupancy_next(FULL, occupancy_init(FULL), AgentPolicy.deterministic({}), NaturePolicy.mixed([(t, 1)]))


@pytest.mark.parametrize("seed", range(5))
def test_occupancy_value_at_full_horizon(seed):
    rng = random.Random(seed)
    for bench, horizon in (("fig2_sticky", 4), ("appC_obs_sticky", 5)):
        m = build_benchmark(bench)
        agent = random_agent_policy(m, horizon, rng)
        nature = random_nature_policy(m, horizon, rng)
        assert occupancy_value(m, agent, nature, horizon) == value_by_paths(m, agent, nature, horizon)


def test_occupancy_marginals_match_path_distribution():
    rng = random.Random(21)
    agent = random_agent_policy(FULL, 3, rng)
    nature = random_nature_policy(FULL, 3, rng)
    occ = occupancy_init(FULL)
    for _ in range(3):
        occ = occupancy_next(FULL, occ, agent, nature)
        assert occ.total() == 1
    from artifact.trajectories import joint_to_agent

    by_agent: dict = {}
    for h, m in occ.dist.items():
        by_agent[joint_to_agent(h)] = by_agent.get(joint_to_agent(h), 0) + m
    expected: dict = {}
    for path, m in path_distribution(FULL, agent, nature, 3).items():
        ha = observe_agent(FULL, path)
        expected[ha] = expected.get(ha, 0) + m
    assert by_agent == expected


def test_concurrent_evaluation_on_a_shared_model():
    from concurrent.futures import ThreadPoolExecutor

    ref = next(r for r in REFERENCES if r.benchmark == "appC_obs_sticky")
    model = ref.model()  # fresh, so the threads race to fill its caches
    agent, nature = ref.policies(model)
    with ThreadPoolExecutor(max_workers=8) as pool:
        values = list(pool.map(lambda _: value_fh(model, agent, nature, ref.horizon), range(16)))
    assert set(values) == {ref.value}
