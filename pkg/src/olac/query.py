"""Selection expressions for the Query verb.

The language is a closed subset of an SQL WHERE clause::

    expr       := or
    or         := and ("OR" and)*
    and        := not ("AND" not)*
    not        := "NOT" not | "(" expr ")" | comparison
    comparison := alias "." field ["NOT"] op literal
    op         := "=" | "!=" | "<>" | "LIKE"

``alias`` is ``e1`` .. ``eN``; each alias ranges over the elements of a
record (one row per element, as in a relational join), and a record
matches when some assignment of elements to aliases makes the expression
true.  Aliases may bind the same element.
"""

import re
from dataclasses import dataclass

from .errors import BadArgumentError

FIELDS = ("tag", "content", "type", "code")
_QUAD_ATTR = {"tag": "tag", "content": "content", "type": "type_", "code": "code"}
KEYWORDS = {"AND", "OR", "NOT", "LIKE"}


class QuerySyntaxError(BadArgumentError):
    def __init__(self, message, position):
        super().__init__("%s at position %d" % (message, position + 1))
        self.position = position


@dataclass(frozen=True)
class Comparison:
    alias: int
    field: str
    op: str  # "=", "!=" or "LIKE"
    value: str


@dataclass(frozen=True)
class And:
    items: tuple


@dataclass(frozen=True)
class Or:
    items: tuple


@dataclass(frozen=True)
class Not:
    item: object


_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<str>'(?:[^']|'')*')
  | (?P<op>!=|<>|=)
  | (?P<punct>[().])
  | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
""", re.VERBOSE)


def tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            if text[pos] == "'":
                raise QuerySyntaxError("unterminated string literal", pos)
            raise QuerySyntaxError("unexpected character %r" % text[pos], pos)
        kind = m.lastgroup
        if kind != "ws":
            value = m.group()
            if kind == "str":
                value = value[1:-1].replace("''", "'")
            elif kind == "word" and value.upper() in KEYWORDS:
                kind, value = "kw", value.upper()
            tokens.append((kind, value, pos))
        pos = m.end()
    tokens.append(("end", None, len(text)))
    return tokens


class _Parser:
    def __init__(self, text, elements):
        self.tokens = tokenize(text)
        self.i = 0
        self.elements = elements

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind, value=None, what=None):
        tok = self.take()
        if tok[0] != kind or (value is not None and tok[1] != value):
            found = "end of input" if tok[0] == "end" else repr(tok[1])
            raise QuerySyntaxError("expected %s, found %s" % (what or value or kind, found), tok[2])
        return tok

    def parse(self):
        if self.peek()[0] == "end":
            raise QuerySyntaxError("empty expression", 0)
        expr = self.parse_or()
        tok = self.peek()
        if tok[0] != "end":
            raise QuerySyntaxError("unexpected %r" % tok[1], tok[2])
        return expr

    def parse_or(self):
        items = [self.parse_and()]
        while self.peek()[:2] == ("kw", "OR"):
            self.take()
            items.append(self.parse_and())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def parse_and(self):
        items = [self.parse_not()]
        while self.peek()[:2] == ("kw", "AND"):
            self.take()
            items.append(self.parse_not())
        return items[0] if len(items) == 1 else And(tuple(items))

    def parse_not(self):
        tok = self.peek()
        if tok[:2] == ("kw", "NOT"):
            self.take()
            return Not(self.parse_not())
        if tok[:2] == ("punct", "("):
            self.take()
            expr = self.parse_or()
            self.expect("punct", ")", "')'")
            return expr
        return self.parse_comparison()

    def parse_comparison(self):
        kind, word, pos = self.expect("word", what="element alias such as e1")
        m = re.fullmatch(r"[eE]([0-9]+)", word)
        if m is None:
            raise QuerySyntaxError("expected element alias such as e1, found %r" % word, pos)
        alias = int(m.group(1))
        if not 1 <= alias <= self.elements:
            raise QuerySyntaxError(
                "alias %s out of range (elements=%d)" % (word, self.elements), pos)
        self.expect("punct", ".", "'.'")
        kind, name, pos = self.expect("word", what="field name")
        name = name.lower()
        if name not in FIELDS:
            raise QuerySyntaxError(
                "unknown field %r (expected one of %s)" % (name, ", ".join(FIELDS)), pos)
        negate = False
        if self.peek()[:2] == ("kw", "NOT"):
            self.take()
            negate = True
            op_tok = self.expect("kw", "LIKE")
        else:
            op_tok = self.take()
        if op_tok[0] == "op":
            op = "!=" if op_tok[1] in ("!=", "<>") else "="
        elif op_tok[:2] == ("kw", "LIKE"):
            op = "LIKE"
        else:
            raise QuerySyntaxError("expected comparison operator", op_tok[2])
        literal = self.expect("str", what="quoted string literal")
        node = Comparison(alias, name, op, literal[1])
        return Not(node) if negate else node


def parse_query(sql, elements):
    """Parse ``sql`` for a query declaring ``elements`` aliases."""
    try:
        elements = int(elements)
    except (TypeError, ValueError):
        raise BadArgumentError("elements must be a positive integer") from None
    if elements < 1:
        raise BadArgumentError("elements must be a positive integer")
    return _Parser(sql, elements).parse()


def _quote(value):
    return "'%s'" % value.replace("'", "''")


def to_sql(expr):
    """Print an expression so that parsing the text gives back the same tree."""
    if isinstance(expr, Comparison):
        return "e%d.%s %s %s" % (expr.alias, expr.field, expr.op, _quote(expr.value))
    if isinstance(expr, Not):
        inner = to_sql(expr.item)
        return "NOT " + (inner if isinstance(expr.item, (Comparison, Not)) else "(%s)" % inner)
    joiner = " AND " if isinstance(expr, And) else " OR "
    parts = []
    for item in expr.items:
        text = to_sql(item)
        parts.append("(%s)" % text if isinstance(item, (And, Or)) else text)
    return joiner.join(parts)


def max_alias(expr):
    if isinstance(expr, Comparison):
        return expr.alias
    if isinstance(expr, Not):
        return max_alias(expr.item)
    return max(max_alias(i) for i in expr.items)


def comparisons(expr):
    if isinstance(expr, Comparison):
        yield expr
    elif isinstance(expr, Not):
        yield from comparisons(expr.item)
    else:
        for item in expr.items:
            yield from comparisons(item)


def like_regex(pattern):
    """Compile a LIKE pattern (``%``, ``_``, backslash escapes), case-insensitively."""
    out = []
    chars = iter(pattern.lower())
    for ch in chars:
        if ch == "\\":
            out.append(re.escape(next(chars, "\\")))
        elif ch == "%":
            out.append(".*")
        elif ch == "_":
            out.append(".")
        else:
            out.append(re.escape(ch))
    return re.compile("".join(out), re.DOTALL)


def _test(comparison, quad, regex_cache):
    value = getattr(quad, _QUAD_ATTR[comparison.field])
    if comparison.op == "=":
        return value == comparison.value
    if comparison.op == "!=":
        return value != comparison.value
    regex = regex_cache.get(comparison.value)
    if regex is None:
        regex = regex_cache[comparison.value] = like_regex(comparison.value)
    return regex.fullmatch(value.lower()) is not None


def _kleene(expr, truth, binding):
    """Three-valued evaluation under a partial alias binding (None = unknown)."""
    if isinstance(expr, Comparison):
        row = binding.get(expr.alias)
        return None if row is None else truth[expr][row]
    if isinstance(expr, Not):
        v = _kleene(expr.item, truth, binding)
        return None if v is None else not v
    decisive = isinstance(expr, Or)
    unknown = False
    for item in expr.items:
        v = _kleene(item, truth, binding)
        if v is decisive:
            return decisive
        if v is None:
            unknown = True
    return None if unknown else not decisive


class CompiledQuery:
    """A parsed expression ready to be run against many records."""

    def __init__(self, expr):
        self.expr = expr
        self.atoms = list(dict.fromkeys(comparisons(expr)))
        self.aliases = sorted({c.alias for c in self.atoms})
        self._regex = {}

    def matches_quads(self, quads):
        if not quads:
            return False
        truth = {a: [_test(a, q, self._regex) for q in quads] for a in self.atoms}
        rows = range(len(quads))
        binding = {}

        def search(k):
            v = _kleene(self.expr, truth, binding)
            if v is not None:
                return v
            alias = self.aliases[k]
            for row in rows:
                binding[alias] = row
                if search(k + 1):
                    del binding[alias]
                    return True
            del binding[alias]
            return False

        return search(0)

    def matches(self, rec):
        if getattr(rec, "deleted", False):
            return False
        return self.matches_quads(rec.quads)


def eval_query(expr, rec):
    """True iff some binding of ``rec``'s elements to the aliases satisfies ``expr``."""
    return CompiledQuery(expr).matches(rec)
