"""Line-oriented text formats for models and policies.

Model documents are split into ``[section]`` blocks; ``#`` starts a comment.
Numbers are rational literals (``3``, ``1/3``, ``0.25``); decimals are read
exactly.  A complete example::

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

Observation-based stickiness lists influence sets in ``[influence]`` as
``p : s1 a, s2 a``; custom stickiness lists ``p <z_n> <z_pub> <a>`` lines
in ``[stick]``.

Policy documents start with ``policy <agent|nature> <kind>``.  Each entry
line is ``<history> -> <distribution>``.  Agent histories alternate
observation pairs and actions: ``(⊥,white) go (⊥,light)``.  Nature histories
alternate observation pairs and ``action {assignment}`` steps:
``(⊥,white) go {p=1/2, q=1/2} (⊥,light)``; agent-first keys append
``@ <action>``.  Distributions are ``a`` or ``a: 1/3, b: 2/3`` (agent) and
``{p=1/10}`` or ``{p=1/10}: 1/2, {p=9/10}: 1/2`` (nature).  Mixed policies
consist of ``component <weight>`` blocks of deterministic entries.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

from ..errors import ArtifactError, ParseError
from ..model import (
    AffineExpr,
    Assignment,
    LinearConstraint,
    PlayOrder,
    Rpomdp,
    Stickiness,
    StickinessKind,
    UncertaintySet,
    ValidationReport,
    validate_model,
)
from ..policies import AgentPolicy, NaturePolicy, PolicyKind
from ..rational import format_rational
from ..trajectories import AgentHistory, NatureHistory

SECTIONS = ("model", "states", "actions", "rewards", "variables", "couplings", "transitions", "influence", "stick")


class ModelValidationError(ArtifactError, ValueError):
    """A syntactically fine document describes an ill-formed model."""

    def __init__(self, report: ValidationReport):
        self.report = report
        super().__init__("; ".join(str(v) for v in report.violations))


# ---------------------------------------------------------------------------
# Tokenising helpers
# ---------------------------------------------------------------------------

_NUMBER = re.compile(r"\d+(?:\.\d+)?(?:/\d+)?|\.\d+")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_.']*")


def parse_rational(text: str, line: int = 0, column: int = 0) -> Fraction:
    text = text.strip()
    sign = 1
    if text.startswith("-"):
        sign, text = -1, text[1:].strip()
    if not _NUMBER.fullmatch(text):
        raise ParseError(f"expected a rational literal, found {text!r}", line, column)
    try:
        return sign * Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise ParseError(f"bad rational literal {text!r}: {exc}", line, column) from None


class _ExprParser:
    """Recursive descent over ``+ - * /`` and parentheses, staying affine."""

    def __init__(self, text: str, line: int, column: int):
        self.text = text
        self.pos = 0
        self.line = line
        self.column = column

    def error(self, reason: str) -> ParseError:
        return ParseError(reason, self.line, self.column + self.pos)

    def skip(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def parse(self) -> AffineExpr:
        expr = self.sum()
        if self.peek():
            raise self.error(f"unexpected {self.text[self.pos:]!r}")
        return expr

    def sum(self) -> AffineExpr:
        expr = self.product()
        while self.peek() in ("+", "-"):
            op = self.text[self.pos]
            self.pos += 1
            rhs = self.product()
            expr = expr + rhs if op == "+" else expr - rhs
        return expr

    def product(self) -> AffineExpr:
        expr = self.unary()
        while self.peek() in ("*", "/"):
            op = self.text[self.pos]
            self.pos += 1
            rhs = self.unary()
            if op == "*":
                if expr.is_constant:
                    expr = rhs * expr.constant
                elif rhs.is_constant:
                    expr = expr * rhs.constant
                else:
                    raise self.error("product of two variables is not affine")
            else:
                if not rhs.is_constant:
                    raise self.error("division by a variable is not affine")
                if rhs.constant == 0:
                    raise self.error("division by zero")
                expr = expr * (1 / rhs.constant)
        return expr

    def unary(self) -> AffineExpr:
        if self.peek() == "-":
            self.pos += 1
            return -self.unary()
        if self.peek() == "+":
            self.pos += 1
            return self.unary()
        return self.atom()

    def atom(self) -> AffineExpr:
        c = self.peek()
        if c == "(":
            self.pos += 1
            expr = self.sum()
            if self.peek() != ")":
                raise self.error("missing ')'")
            self.pos += 1
            return expr
        m = re.compile(r"\d+(?:\.\d+)?|\.\d+").match(self.text, self.pos)
        if m:
            self.pos = m.end()
            return AffineExpr.const(Fraction(m.group()))
        m = _IDENT.match(self.text, self.pos)
        if m:
            self.pos = m.end()
            return AffineExpr.var(m.group())
        raise self.error(f"expected a number or variable at {self.text[self.pos:]!r}" if c else "unexpected end of expression")


def parse_affine(text: str, line: int = 0, column: int = 0) -> AffineExpr:
    """Parse an affine expression such as ``0.5 - q`` or ``2*p + 1/10``."""
    if not text.strip():
        raise ParseError("empty expression", line, column)
    return _ExprParser(text, line, column).parse()


def _fmt(x: Fraction) -> str:
    return format_rational(x)


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------


@dataclass
class _Line:
    number: int
    text: str
    indent: int


def _logical_lines(text: str) -> Iterable[_Line]:
    for i, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].rstrip()
        if body.strip():
            yield _Line(i, body.strip(), len(body) - len(body.lstrip()) + 1)


def parse_model(text: str, validate: bool = True) -> Rpomdp:
    """Parse a model document; with ``validate`` a malformed model raises :class:`ModelValidationError`."""
    header: dict[str, str] = {}
    states: list[str] = []
    obs = {"agent": {}, "nature": {}, "public": {}}
    actions: list[str] = []
    rewards: dict = {}
    variables: list[str] = []
    boxes: list[tuple[Fraction, Fraction]] = []
    couplings: list[LinearConstraint] = []
    transitions: dict = {}
    influence: dict[str, set] = {}
    stick_table: list[tuple[str, str, str, str]] = []
    section = None

    for ln in _logical_lines(text):
        t, n, col = ln.text, ln.number, ln.indent
        if t.startswith("["):
            if not t.endswith("]"):
                raise ParseError("unterminated section header", n, col)
            section = t[1:-1].strip()
            if section not in SECTIONS:
                raise ParseError(f"unknown section {section!r}", n, col)
            continue
        if section is None:
            raise ParseError("content before the first section", n, col)

        if section == "model":
            key, sep, value = t.partition("=")
            if not sep:
                raise ParseError("expected 'key = value'", n, col)
            key = key.strip()
            if key not in ("name", "initial", "play_order", "stickiness"):
                raise ParseError(f"unknown model key {key!r}", n, col)
            header[key] = value.strip()
        elif section == "states":
            parts = t.split()
            name = parts[0]
            if name in states:
                raise ParseError(f"duplicate state {name!r}", n, col)
            states.append(name)
            for item in parts[1:]:
                k, sep, v = item.partition("=")
                if not sep or k not in obs or not v:
                    raise ParseError(f"expected agent=/nature=/public= observation, found {item!r}", n, col)
                obs[k][name] = v
        elif section == "actions":
            for a in t.split():
                if a in actions:
                    raise ParseError(f"duplicate action {a!r}", n, col)
                actions.append(a)
        elif section == "rewards":
            lhs, sep, rhs = t.partition("=")
            parts = lhs.split()
            if not sep or len(parts) != 2:
                raise ParseError("expected '<state> <action> = <reward>'", n, col)
            rewards[(parts[0], parts[1])] = parse_rational(rhs, n, col + len(lhs) + 1)
        elif section == "variables":
            m = re.fullmatch(r"(\S+)\s*=\s*\[\s*([^,\]]+)\s*,\s*([^\]]+)\s*\]", t)
            if not m:
                raise ParseError("expected '<variable> = [<low>, <high>]'", n, col)
            if m.group(1) in variables:
                raise ParseError(f"duplicate variable {m.group(1)!r}", n, col)
            lo, hi = parse_rational(m.group(2), n, col), parse_rational(m.group(3), n, col)
            if lo > hi:
                raise ParseError(f"empty box for {m.group(1)!r}", n, col)
            variables.append(m.group(1))
            boxes.append((lo, hi))
        elif section == "couplings":
            m = re.fullmatch(r"(.+?)(<=|>=|=)(.+)", t)
            if not m:
                raise ParseError("expected '<expr> (=|<=|>=) <expr>'", n, col)
            lhs = parse_affine(m.group(1), n, col)
            rhs = parse_affine(m.group(3), n, col + m.start(3))
            couplings.append(LinearConstraint.from_expr(lhs, m.group(2), rhs))
        elif section == "transitions":
            m = re.fullmatch(r"(\S+)\s+(\S+)\s*->\s*(\S+)\s*=\s*(.+)", t)
            if not m:
                raise ParseError("expected '<state> <action> -> <successor> = <expression>'", n, col)
            row = transitions.setdefault((m.group(1), m.group(2)), {})
            if m.group(3) in row:
                raise ParseError(f"duplicate transition entry to {m.group(3)!r}", n, col)
            row[m.group(3)] = parse_affine(m.group(4), n, col + m.start(4))
        elif section == "influence":
            var, sep, rest = t.partition(":")
            if not sep:
                raise ParseError("expected '<variable> : <state> <action>, ...'", n, col)
            pairs = influence.setdefault(var.strip(), set())
            for chunk in filter(None, (c.strip() for c in rest.split(","))):
                parts = chunk.split()
                if len(parts) != 2:
                    raise ParseError(f"expected '<state> <action>', found {chunk!r}", n, col)
                pairs.add((parts[0], parts[1]))
        elif section == "stick":
            parts = t.split()
            if len(parts) != 4:
                raise ParseError("expected '<variable> <z_n> <z_pub> <action>'", n, col)
            stick_table.append(tuple(parts))

    if not states:
        raise ParseError("no states declared", 0, 0)
    initial = header.get("initial", states[0])
    try:
        order = PlayOrder(header.get("play_order", "agent_first"))
    except ValueError:
        raise ParseError(f"unknown play order {header['play_order']!r}", 0, 0) from None
    try:
        kind = StickinessKind(header.get("stickiness", "full"))
    except ValueError:
        raise ParseError(f"unknown stickiness {header['stickiness']!r}", 0, 0) from None
    if kind is StickinessKind.OBSERVATION:
        stickiness = Stickiness.observation_based(influence)
    elif kind is StickinessKind.CUSTOM:
        stickiness = Stickiness.custom(stick_table)
    else:
        stickiness = Stickiness(kind)

    model = Rpomdp(
        states=tuple(states),
        actions=tuple(actions),
        initial_state=initial,
        obs_agent=obs["agent"],
        obs_nature=obs["nature"],
        obs_public=obs["public"],
        rewards=rewards,
        transitions=transitions,
        uncertainty=UncertaintySet(tuple(variables), tuple(boxes), tuple(couplings)),
        stickiness=stickiness,
        play_order=order,
        name=header.get("name", ""),
    )
    if validate:
        report = validate_model(model)
        if not report.ok:
            raise ModelValidationError(report)
    return model


def serialize_model(model: Rpomdp) -> str:
    out = ["[model]"]
    if model.name:
        out.append(f"name = {model.name}")
    out.append(f"initial = {model.initial_state}")
    out.append(f"play_order = {model.play_order.value}")
    out.append(f"stickiness = {model.stickiness.kind.value}")
    out.append("")
    out.append("[states]")
    for s in model.states:
        items = [s]
        for label, mapping in (("agent", model.obs_agent), ("nature", model.obs_nature), ("public", model.obs_public)):
            if s in mapping:
                items.append(f"{label}={mapping[s]}")
        out.append(" ".join(items))
    out += ["", "[actions]", " ".join(model.actions)]
    if model.rewards:
        out += ["", "[rewards]"]
        for (s, a), r in model.rewards.items():
            out.append(f"{s} {a} = {_fmt(r)}")
    uset = model.uncertainty
    if uset.variables:
        out += ["", "[variables]"]
        for v, (lo, hi) in zip(uset.variables, uset.boxes):
            out.append(f"{v} = [{_fmt(lo)}, {_fmt(hi)}]")
    if uset.couplings:
        out += ["", "[couplings]"]
        out += [str(c) for c in uset.couplings]
    out += ["", "[transitions]"]
    for (s, a), row in model.transitions.items():
        for succ, expr in row.items():
            out.append(f"{s} {a} -> {succ} = {expr}")
    st = model.stickiness
    if st.kind is StickinessKind.OBSERVATION:
        out += ["", "[influence]"]
        for v, pairs in st.influence:
            out.append(f"{v} : " + ", ".join(f"{s} {a}" for s, a in sorted(pairs)))
    elif st.kind is StickinessKind.CUSTOM:
        out += ["", "[stick]"]
        out += [" ".join(t) for t in sorted(st.table)]
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------

_TOKEN = re.compile(r"\s*(\([^()]*\)|\{[^{}]*\}|->|@|[^\s(){}@]+)")


def _tokens(text: str, line: int) -> list[tuple[str, int]]:
    out = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"cannot tokenise {text[pos:]!r}", line, pos + 1)
        out.append((m.group(1), m.start(1) + 1))
        pos = m.end()
    return out


def _pair(token: str, line: int, col: int) -> tuple[str, str]:
    if not (token.startswith("(") and token.endswith(")")):
        raise ParseError(f"expected an observation pair, found {token!r}", line, col)
    parts = [p.strip() for p in token[1:-1].split(",")]
    if len(parts) != 2 or not all(parts):
        raise ParseError(f"an observation pair has two labels, found {token!r}", line, col)
    return parts[0], parts[1]


def parse_assignment(token: str, line: int = 0, col: int = 0) -> Assignment:
    if not (token.startswith("{") and token.endswith("}")):
        raise ParseError(f"expected an assignment '{{v=value, ...}}', found {token!r}", line, col)
    values = {}
    for chunk in filter(None, (c.strip() for c in token[1:-1].split(","))):
        name, sep, value = chunk.partition("=")
        if not sep:
            raise ParseError(f"expected 'variable=value', found {chunk!r}", line, col)
        values[name.strip()] = parse_rational(value, line, col)
    return Assignment(values)


def format_assignment(u: Assignment) -> str:
    return "{" + ", ".join(f"{k}={_fmt(v)}" for k, v in u.items()) + "}"


def _parse_agent_history(tokens, line) -> AgentHistory:
    if not tokens:
        raise ParseError("empty history", line, 1)
    initial = _pair(tokens[0][0], line, tokens[0][1])
    steps = []
    rest = tokens[1:]
    if len(rest) % 2:
        raise ParseError("an agent history alternates actions and observation pairs", line, rest[-1][1])
    for i in range(0, len(rest), 2):
        (a, _), (obs, ocol) = rest[i], rest[i + 1]
        steps.append((a,) + _pair(obs, line, ocol))
    return AgentHistory(initial, tuple(steps))


def _parse_nature_history(tokens, line) -> NatureHistory:
    if not tokens:
        raise ParseError("empty history", line, 1)
    initial = _pair(tokens[0][0], line, tokens[0][1])
    rest = tokens[1:]
    if len(rest) % 3:
        raise ParseError("a nature history repeats 'action {assignment} (z_n,z_pub)'", line, rest[-1][1])
    steps = []
    for i in range(0, len(rest), 3):
        (a, _), (u, ucol), (obs, ocol) = rest[i : i + 3]
        steps.append((a, parse_assignment(u, line, ucol)) + _pair(obs, line, ocol))
    return NatureHistory(initial, tuple(steps))


def _split_weighted(text: str, line: int, column: int) -> list[tuple[str, int, Fraction]]:
    """Split ``item[: weight], ...`` (commas inside braces do not split)."""
    out = []
    depth = 0
    start = 0
    chunks = []
    for i, ch in enumerate(text + ","):
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
        elif ch == "," and depth == 0:
            chunks.append((text[start:i], start))
            start = i + 1
    for chunk, offset in chunks:
        col = column + offset
        close = chunk.rfind("}") + 1
        tail, sep, weight = chunk[close:].partition(":")
        item = (chunk[:close] + tail).strip()
        if not item:
            raise ParseError("empty distribution entry", line, col)
        out.append((item, col, parse_rational(weight, line, col) if sep else Fraction(1)))
    return out


def _parse_entry(kind: str, text: str, line: int, agent_first_hint: list):
    head, arrow, body = text.partition("->")
    if not arrow:
        raise ParseError("expected '<history> -> <distribution>'", line, 1)
    if not body.strip():
        raise ParseError("missing distribution after '->'", line, len(head) + 3)
    hist_tokens = _tokens(head, line)
    dist_col = len(head) + 3
    if kind == "agent":
        key = _parse_agent_history(hist_tokens, line)
        dist = []
        for a, col, w in _split_weighted(body, line, dist_col):
            if not re.fullmatch(r"[^\s(){}@:,]+", a):
                raise ParseError(f"bad action label {a!r}", line, col)
            dist.append((a, w))
        return key, dist
    action = None
    if len(hist_tokens) >= 2 and hist_tokens[-2][0] == "@":
        action = hist_tokens[-1][0]
        hist_tokens = hist_tokens[:-2]
        agent_first_hint.append(True)
    else:
        agent_first_hint.append(False)
    key = (_parse_nature_history(hist_tokens, line), action)
    dist = [(parse_assignment(u, line, col), w) for u, col, w in _split_weighted(body, line, dist_col)]
    return key, dist


def parse_policy(text: str) -> AgentPolicy | NaturePolicy:
    """Parse a policy document (see the module docstring)."""
    lines = list(_logical_lines(text))
    if not lines:
        raise ParseError("empty policy document", 0, 0)
    head = lines[0].text.split()
    if len(head) != 3 or head[0] != "policy" or head[1] not in ("agent", "nature"):
        raise ParseError("expected 'policy <agent|nature> <deterministic|stochastic|mixed>'", lines[0].number, 1)
    player = head[1]
    try:
        kind = PolicyKind(head[2])
    except ValueError:
        raise ParseError(f"unknown policy kind {head[2]!r}", lines[0].number, len(head[0]) + len(head[1]) + 3) from None
    cls = AgentPolicy if player == "agent" else NaturePolicy
    hints: list = []

    def build(entries, as_kind, where):
        table = {}
        for key, dist, ln in entries:
            if key in table:
                raise ParseError("duplicate history", ln, 1)
            if as_kind is PolicyKind.DETERMINISTIC:
                if len(dist) != 1 or dist[0][1] != 1:
                    raise ParseError("a deterministic entry names exactly one choice", ln, 1)
                table[key] = dist[0][0]
            else:
                table[key] = dist
        try:
            return cls.deterministic(table) if as_kind is PolicyKind.DETERMINISTIC else cls.stochastic(table)
        except ArtifactError as exc:
            raise ParseError(str(exc), where, 1) from None

    if kind is PolicyKind.MIXED:
        components = []
        current = None
        for ln in lines[1:]:
            if ln.text.startswith("component"):
                current = (parse_rational(ln.text[len("component") :], ln.number, 10), [], ln.number)
                components.append(current)
                continue
            if current is None:
                raise ParseError("mixed policies consist of 'component <weight>' blocks", ln.number, 1)
            key, dist = _parse_entry(player, ln.text, ln.number, hints)
            current[1].append((key, dist, ln.number))
        if not components:
            raise ParseError("a mixed policy needs at least one component", lines[0].number, 1)
        built = [(build(entries, PolicyKind.DETERMINISTIC, where), w) for w, entries, where in components]
        try:
            policy = cls.mixed(built)
        except ArtifactError as exc:
            raise ParseError(str(exc), lines[0].number, 1) from None
    else:
        entries = []
        for ln in lines[1:]:
            key, dist = _parse_entry(player, ln.text, ln.number, hints)
            entries.append((key, dist, ln.number))
        policy = build(entries, kind, lines[0].number)
    if hints and len(set(hints)) > 1:
        raise ParseError("nature keys mix agent-first ('@ action') and nature-first forms", lines[0].number, 1)
    return policy


def format_agent_history(h: AgentHistory) -> str:
    parts = [f"({h.initial[0]},{h.initial[1]})"]
    for a, za, zp in h.steps:
        parts.append(f"{a} ({za},{zp})")
    return " ".join(parts)


def format_nature_history(h: NatureHistory) -> str:
    parts = [f"({h.initial[0]},{h.initial[1]})"]
    for a, u, zn, zp in h.steps:
        parts.append(f"{a} {format_assignment(u)} ({zn},{zp})")
    return " ".join(parts)


def _format_entries(policy, player: str, deterministic: bool) -> list[str]:
    out = []
    for key, dist in policy.table.items():
        if player == "agent":
            head = format_agent_history(key)
            fmt_item = str
        else:
            history, action = key
            head = format_nature_history(history) + (f" @ {action}" if action is not None else "")
            fmt_item = format_assignment
        if deterministic:
            body = fmt_item(dist[0][0])
        else:
            body = ", ".join(f"{fmt_item(item)}: {_fmt(p)}" for item, p in dist)
        out.append(f"{head} -> {body}")
    return out


def serialize_policy(policy: AgentPolicy | NaturePolicy) -> str:
    player = "agent" if isinstance(policy, AgentPolicy) else "nature"
    out = [f"policy {player} {policy.kind.value}"]
    if policy.is_mixed:
        for component, w in policy.components:
            out.append(f"component {_fmt(w)}")
            out += ["  " + line for line in _format_entries(component, player, True)]
    else:
        out += _format_entries(policy, player, policy.kind is PolicyKind.DETERMINISTIC)
    return "\n".join(out) + "\n"
