from fractions import Fraction as F
import random

import pytest

from artifact.errors import ParseError
from artifact.io_cli.benchmarks import BENCHMARK_IDS, REFERENCES, build_benchmark
from artifact.io_cli.formats import (
    ModelValidationError,
    format_assignment,
    parse_affine,
    parse_assignment,
    parse_model,
    parse_policy,
    parse_rational,
    serialize_model,
    serialize_policy,
)
from artifact.model import Assignment, StickinessKind
from artifact.policies import AgentPolicy, NaturePolicy
from policy_gen import BENCH_VARIANTS, build_variant, random_agent_policy, random_nature_policy, variant_id

TINY = """\
# a two-state chain
[model]
name = tiny
initial = s1
play_order = agent_first
stickiness = full

[states]
s1 agent=⊥ nature=⊥ public=white
s2 agent=⊥ nature=⊥ public=black

[actions]
a

[rewards]
s1 a = 10

[variables]
p = [0.1, 0.9]

[transitions]
s1 a -> s2 = p
s1 a -> s1 = 1 - p
s2 a -> s2 = 1
"""


def parse_error(text, parser=parse_model):
    with pytest.raises(ParseError) as info:
        parser(text)
    return info.value


# ---------------------------------------------------------------------------
# literals
# ---------------------------------------------------------------------------


def test_decimals_are_read_exactly():
    assert parse_rational("0.1") == F(1, 10)
    assert parse_rational("-2/6") == F(-1, 3)
    assert parse_rational(".25") == F(1, 4)


@pytest.mark.parametrize("text", ["", "1e3", "abc", "1/0", "0x10"])
def test_bad_rationals(text):
    with pytest.raises(ParseError):
        parse_rational(text)


def test_affine_expressions():
    e = parse_affine("1/2 - 2*q + p")
    assert e.evaluate(Assignment({"p": F(1, 10), "q": F(1, 5)})) == F(1, 5)
    assert parse_affine("(1 - p) * 3").evaluate(Assignment({"p": F(1, 3)})) == 2
    with pytest.raises(ParseError):
        parse_affine("p * q")


def test_assignment_round_trip():
    u = Assignment({"p": F(1, 3), "q": F(9, 10)})
    assert parse_assignment(format_assignment(u)) == u


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------


def test_tiny_model():
    m = parse_model(TINY)
    assert m.states == ("s1", "s2")
    assert m.reward("s1", "a") == 10
    assert m.uncertainty.boxes == ((F(1, 10), F(9, 10)),)


@pytest.mark.parametrize("variant", BENCH_VARIANTS, ids=variant_id)
def test_model_round_trip(variant):
    m = build_variant(variant)
    text = serialize_model(m)
    assert parse_model(text) == m
    assert serialize_model(parse_model(text)) == text


def test_unknown_section_reports_position():
    err = parse_error(TINY.replace("[actions]", "[acts]"))
    assert err.line == 12 and err.column >= 1
    assert "acts" in err.reason


def test_unterminated_header():
    assert parse_error(TINY.replace("[rewards]", "[rewards")).line == 15


def test_content_before_first_section():
    assert parse_error("s1 a = 3\n" + TINY).line == 1


def test_bad_transition_line():
    err = parse_error(TINY.replace("s2 a -> s2 = 1", "s2 a s2 1"))
    assert err.line == 24


def test_duplicate_state():
    assert "duplicate" in parse_error(TINY.replace("s2 agent", "s1 agent")).reason


def test_bad_expression_reports_column():
    err = parse_error(TINY.replace("= 1 - p", "= 1 - * p"))
    assert err.line == 23 and err.column > 14


def test_semantic_violations_are_not_parse_errors():
    text = TINY.replace("s1 a -> s1 = 1 - p", "s1 a -> s1 = 1/2")
    with pytest.raises(ModelValidationError) as info:
        parse_model(text)
    assert any(v.code == "row-sum" for v in info.value.report.violations)
    # without validation the raw model is returned
    assert parse_model(text, validate=False).states == ("s1", "s2")


# ---------------------------------------------------------------------------
# policies
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("ref", REFERENCES, ids=lambda r: r.label)
def test_reference_policies_round_trip(ref):
    agent, nature = ref.policies()
    assert parse_policy(serialize_policy(agent)) == agent
    assert parse_policy(serialize_policy(nature)) == nature


@pytest.mark.parametrize("kind", ["deterministic", "stochastic", "mixed"])
def test_random_policies_round_trip(kind):
    rng = random.Random(13)
    for bench in BENCHMARK_IDS:
        m = build_benchmark(bench)
        agent = random_agent_policy(m, 3, rng, kind)
        nature = random_nature_policy(m, 3, rng, kind)
        assert parse_policy(serialize_policy(agent)) == agent
        assert parse_policy(serialize_policy(nature)) == nature


def test_policy_examples():
    agent = parse_policy("policy agent stochastic\n(⊥,white) -> go: 1\n(⊥,white) go (⊥,light) -> a: 1/3, b: 2/3\n")
    assert isinstance(agent, AgentPolicy)
    assert len(agent.table) == 2
    nature = parse_policy("policy nature deterministic\n(⊥,white) @ go -> {p=0.5, q=1/3}\n")
    assert isinstance(nature, NaturePolicy)
    ((_, action), choice), = [(k, d[0][0]) for k, d in nature.table.items()]
    assert action == "go" and choice == Assignment({"p": F(1, 2), "q": F(1, 3)})


def test_mixed_policy_document():
    text = "policy nature mixed\ncomponent 1/4\n  (⊥,white) @ go -> {p=1/10}\ncomponent 3/4\n  (⊥,white) @ go -> {p=9/10}\n"
    policy = parse_policy(text)
    assert [w for _, w in policy.components] == [F(1, 4), F(3, 4)]


@pytest.mark.parametrize(
    "text, line",
    [
        ("", 0),
        ("policy robot deterministic\n", 1),
        ("policy agent sometimes\n", 1),
        ("policy agent deterministic\n(⊥,white) go\n", 2),
        ("policy agent stochastic\n(⊥,white) -> a: 1/2\n", 1),
        ("policy agent deterministic\n(⊥,white) -> a\n(⊥,white) -> b\n", 3),
        ("policy nature mixed\n(⊥,white) @ go -> {p=1}\n", 2),
        ("policy nature deterministic\n(⊥,white) @ go -> {p=1}\n(⊥,white) -> {p=1}\n", 1),
        ("policy nature deterministic\n(⊥,white) @ go -> p=1\n", 2),
    ],
)
def test_policy_parse_errors(text, line):
    assert parse_error(text, parse_policy).line == line
