"""Independent oracle for the query language, plus random expressions and records."""

import numpy as np

from olac.metadata import ElementQuad
from olac.query import And, Comparison, Not, Or

FIELDS = ("tag", "content", "type", "code")

# -- oracle ----------------------------------------------------------------------------

def like_dp(pattern, value):
    """LIKE by dynamic programming: % any run, _ one char, backslash escapes, no case."""
    pattern, value = pattern.lower(), value.lower()
    tokens = []
    i = 0
    while i < len(pattern):
        ch = pattern[i]
        if ch == "\\":
            tokens.append(("lit", pattern[i + 1] if i + 1 < len(pattern) else "\\"))
            i += 2
            continue
        tokens.append(("any",) if ch == "%" else ("one",) if ch == "_" else ("lit", ch))
        i += 1
    n = len(value)
    reach = [True] + [False] * n  # reach[j]: tokens so far can consume value[:j]
    for tok in tokens:
        nxt = [False] * (n + 1)
        if tok[0] == "any":
            seen = False
            for j in range(n + 1):
                seen = seen or reach[j]
                nxt[j] = seen
        else:
            for j in range(n):
                if reach[j] and (tok[0] == "one" or value[j] == tok[1]):
                    nxt[j + 1] = True
        reach = nxt
    return reach[n]


def _field(quad, name):
    return {"tag": quad.tag, "content": quad.content, "type": quad.type_, "code": quad.code}[name]


def _atom_vector(c, quads):
    values = [_field(q, c.field) for q in quads]
    if c.op == "=":
        return np.array([v == c.value for v in values], dtype=bool)
    if c.op == "!=":
        return np.array([v != c.value for v in values], dtype=bool)
    return np.array([like_dp(c.value, v) for v in values], dtype=bool)


def brute_force(expr, quads, n_aliases):
    """Evaluate ``expr`` over every alias assignment at once (numpy broadcasting)."""
    if not quads:
        return False
    rows = len(quads)

    def ev(node):
        if isinstance(node, Comparison):
            shape = [1] * n_aliases
            shape[node.alias - 1] = rows
            return _atom_vector(node, quads).reshape(shape)
        if isinstance(node, Not):
            return ~ev(node.item)
        parts = [ev(i) for i in node.items]
        out = parts[0]
        for p in parts[1:]:
            out = (out & p) if isinstance(node, And) else (out | p)
        return out

    grid = np.broadcast_to(ev(expr), (rows,) * n_aliases)
    return bool(grid.any())


# -- random data ------------------------------------------------------------------------

POOL = {
    "tag": ["subject", "title", "language", "type", "creator"],
    "content": ["", "Swahili", "swahili grammar", "A_B", "50%", "it's", "Dschang", "x-sil-SWA"],
    "type": ["", "olac:language", "olac:role", "dcterms:alternative"],
    "code": ["", "x-sil-SWA", "x-sil-BAN", "en", "editor", "X-SIL-swa"],
}
LIKE_PATTERNS = ["%", "x-sil-%", "%swa%", "_n", "%\\%", "A\\_B", "%'%", "SW_HILI", "%a%a%", ""]


def random_quads(rng, max_rows=6):
    return [ElementQuad(*(rng.choice(POOL[f]) for f in FIELDS))
            for _ in range(rng.randint(0, max_rows))]


def random_comparison(rng, n):
    field = rng.choice(FIELDS)
    op = rng.choice(["=", "!=", "LIKE", "NOT LIKE"])
    if "LIKE" in op:
        value = rng.choice(LIKE_PATTERNS + POOL[field])
    else:
        value = rng.choice(POOL[field] + ["nosuch"])
    c = Comparison(rng.randint(1, n), field, "LIKE" if "LIKE" in op else op, value)
    return Not(c) if op == "NOT LIKE" else c


def random_expr(rng, n, depth=3):
    roll = rng.random()
    if depth == 0 or roll < 0.35:
        return random_comparison(rng, n)
    if roll < 0.5:
        return Not(random_expr(rng, n, depth - 1))
    items = tuple(random_expr(rng, n, depth - 1) for _ in range(rng.randint(2, 3)))
    return (And if roll < 0.75 else Or)(items)


def op_kinds(expr, out=None):
    out = set() if out is None else out
    if isinstance(expr, Comparison):
        out.add(expr.op)
    elif isinstance(expr, Not):
        out.add("NOT")
        op_kinds(expr.item, out)
    else:
        out.add(type(expr).__name__)
        for i in expr.items:
            op_kinds(i, out)
    return out
