import random
import sqlite3

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from olac.errors import BadArgumentError
from olac.metadata import ElementQuad
from query_oracle import brute_force, like_dp, op_kinds, random_expr, random_quads
from olac.query import (
    And,
    CompiledQuery,
    Comparison,
    Not,
    Or,
    QuerySyntaxError,
    parse_query,
    to_sql,
)

# -- parser ------------------------------------------------------------------------------

def test_swahili_query_parses():
    assert parse_query("e1.code='x-sil-SWA'", 1) == Comparison(1, "code", "=", "x-sil-SWA")


def test_compound_example_round_trips():
    text = "e1.tag='subject' AND (e2.code LIKE 'x-sil-%' OR NOT e2.content='')"
    expr = parse_query(text, 2)
    assert expr == And((
        Comparison(1, "tag", "=", "subject"),
        Or((Comparison(2, "code", "LIKE", "x-sil-%"), Not(Comparison(2, "content", "=", "")))),
    ))
    assert parse_query(to_sql(expr), 2) == expr


def test_operator_spellings():
    assert parse_query("E1.Code <> 'x'", 1) == Comparison(1, "code", "!=", "x")
    assert parse_query("e1.code != 'x'", 1) == Comparison(1, "code", "!=", "x")
    assert parse_query("e1.content not like '%a%'", 1) == Not(Comparison(1, "content", "LIKE", "%a%"))
    assert parse_query("e1.content = 'it''s'", 1) == Comparison(1, "content", "=", "it's")
    assert parse_query("(e1.tag='a') or e1.tag='b'", 1) == \
        Or((Comparison(1, "tag", "=", "a"), Comparison(1, "tag", "=", "b")))


@pytest.mark.parametrize("text, elements, position", [
    ("e2.code='x'", 1, 1),
    ("e0.code='x'", 1, 1),
    ("e1.colour='x'", 1, 4),
    ("e1.code='x", 1, 9),
    ("e1.code 'x'", 1, 9),
    ("e1.code='x' e1.tag='y'", 1, 13),
    ("", 1, 1),
    ("(e1.code='x'", 1, 13),
    ("e1.code='x' AND", 1, 16),
    ("e1.code=\"x\"", 1, 9),
    ("code='x'", 1, 1),
])
def test_syntax_errors_report_position(text, elements, position):
    with pytest.raises(BadArgumentError) as info:
        parse_query(text, elements)
    assert isinstance(info.value, QuerySyntaxError)
    assert info.value.position + 1 == position
    assert "position %d" % position in str(info.value)


@pytest.mark.parametrize("elements", ["0", "-1", "two", None])
def test_bad_elements_argument(elements):
    with pytest.raises(BadArgumentError):
        parse_query("e1.code='x'", elements)


def test_printer_round_trip_random():
    rng = random.Random(99)
    for _ in range(500):
        n = rng.randint(1, 3)
        expr = random_expr(rng, n)
        assert parse_query(to_sql(expr), n) == expr


# -- evaluation --------------------------------------------------------------------------

SWA = ElementQuad("subject", "", "olac:language", "x-sil-SWA")


def test_swahili_record_matches():
    q = CompiledQuery(parse_query("e1.code='x-sil-SWA'", 1))
    assert q.matches_quads([ElementQuad("title", "T", "", ""), SWA])
    assert not q.matches_quads([ElementQuad("title", "T", "", "")])
    assert not CompiledQuery(parse_query("e1.tag='nosuchtag'", 1)).matches_quads([SWA])


def test_aliases_are_existential():
    quads = [ElementQuad("title", "A", "", ""), SWA]
    two = CompiledQuery(parse_query("e1.tag='title' AND e2.code='x-sil-SWA'", 2))
    one = CompiledQuery(parse_query("e1.tag='title' AND e1.code='x-sil-SWA'", 1))
    assert two.matches_quads(quads)
    assert not one.matches_quads(quads)
    # negation applies per assignment: some element is not a title
    assert CompiledQuery(parse_query("NOT e1.tag='title'", 1)).matches_quads(quads)


def test_like_semantics():
    cases = [
        ("x-sil-%", "x-sil-SWA", True), ("X-SIL-%", "x-sil-swa", True),
        ("_", "", False), ("%", "", True), ("a\\%", "a%", True), ("a\\%", "ab", False),
        ("A\\_B", "a_b", True), ("A\\_B", "aXb", False), ("%a%a%", "banana", True),
        ("s_hili", "Swahili", False), ("sw_hili", "Swahili", True),
    ]
    for pattern, value, expected in cases:
        assert like_dp(pattern, value) is expected, (pattern, value)
        q = CompiledQuery(Comparison(1, "content", "LIKE", pattern))
        assert q.matches_quads([ElementQuad("title", value, "", "")]) is expected


def test_oracle_equivalence_random():
    rng = random.Random(2024)
    records = [random_quads(rng) for _ in range(300)]
    seen_ops = set()
    for _ in range(60):
        n = rng.randint(1, 3)
        expr = random_expr(rng, n)
        seen_ops |= op_kinds(expr)
        q = CompiledQuery(expr)
        for quads in records:
            assert q.matches_quads(quads) == brute_force(expr, quads, n), (to_sql(expr), quads)
    assert seen_ops >= {"=", "!=", "LIKE", "NOT", "And", "Or"}


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_oracle_equivalence_property(seed):
    rng = random.Random(seed)
    n = rng.randint(1, 3)
    expr = random_expr(rng, n)
    quads = random_quads(rng, max_rows=5)
    assert CompiledQuery(expr).matches_quads(quads) == brute_force(expr, quads, n)


# -- relational cross-check ------------------------------------------------------------

def _sql_literal(value):
    return "'%s'" % value.replace("'", "''")


def _to_sqlite(expr):
    if isinstance(expr, Comparison):
        col = "e%d.%s" % (expr.alias, expr.field)
        if expr.op == "LIKE":
            return "%s LIKE %s ESCAPE '\\'" % (col, _sql_literal(expr.value))
        return "%s %s %s" % (col, expr.op, _sql_literal(expr.value))
    if isinstance(expr, Not):
        return "NOT (%s)" % _to_sqlite(expr.item)
    joiner = " AND " if isinstance(expr, And) else " OR "
    return joiner.join("(%s)" % _to_sqlite(i) for i in expr.items)


def _escape_safe(expr):
    """SQLite rejects a LIKE pattern ending in a lone escape character."""
    if isinstance(expr, Comparison):
        if expr.op != "LIKE":
            return True
        trailing = len(expr.value) - len(expr.value.rstrip("\\"))
        return trailing % 2 == 0
    if isinstance(expr, Not):
        return _escape_safe(expr.item)
    return all(_escape_safe(i) for i in expr.items)


def test_agrees_with_relational_self_join():
    """The query language read as SQL over an element table (ASCII data only)."""
    rng = random.Random(7)
    records = [random_quads(rng) for _ in range(200)]
    db = sqlite3.connect(":memory:")
    db.execute("CREATE TABLE el (rec INTEGER, tag TEXT, content TEXT, type TEXT, code TEXT)")
    for i, quads in enumerate(records):
        db.executemany("INSERT INTO el VALUES (?,?,?,?,?)",
                       [(i, q.tag, q.content, q.type_, q.code) for q in quads])
    checked = 0
    while checked < 40:
        n = rng.randint(1, 3)
        expr = random_expr(rng, n)
        if not _escape_safe(expr):
            continue
        tables = ", ".join("el e%d" % k for k in range(1, n + 1))
        joins = " AND ".join("e1.rec = e%d.rec" % k for k in range(2, n + 1)) or "1"
        sql = "SELECT DISTINCT e1.rec FROM %s WHERE %s AND (%s)" % (tables, joins, _to_sqlite(expr))
        expected = {row[0] for row in db.execute(sql)}
        q = CompiledQuery(expr)
        got = {i for i, quads in enumerate(records) if q.matches_quads(quads)}
        assert got == expected, to_sql(expr)
        checked += 1
