"""Parser and executor for the SPARQL subset used by the QA agent.

Supported grammar (informal EBNF)::

    query   := prefix* "SELECT" ("DISTINCT")? (var+ | "COUNT(" var ")")
               "WHERE" "{" pattern ("." pattern)* filter* "}" order? limit?
    pattern := term term term
    filter  := "FILTER" "(" var op value ")"
    order   := "ORDER BY" ("ASC"|"DESC") "(" var ")"
    limit   := "LIMIT" int
    prefix  := "PREFIX" name ":" "<" iri ">"

Prefixed names resolve into the fixture id space (the IRI is dropped);
``ns:`` is always available. In subject position a prefixed name is an
entity id, in predicate position a predicate id, and in object position it
is an entity id when it matches ``m.*``/``g.*`` and otherwise a literal with
the same kind inference the graph loader applies. Quoted strings get that
inference too, so query constants stay comparable with loaded objects.

No OPTIONAL / UNION / GROUP BY / property paths: those raise
UnsupportedFeatureError by name.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import SparqlSyntaxError, UnsupportedFeatureError
from .kg import ENTITY_ID_RE, KnowledgeGraph, Literal, infer_literal, term_string

UNSUPPORTED_KEYWORDS = {
    "OPTIONAL", "UNION", "MINUS", "SERVICE", "GROUP", "HAVING", "BIND",
    "VALUES", "ASK", "CONSTRUCT", "DESCRIBE", "INSERT", "DELETE", "EXISTS",
    "OFFSET", "UNGROUPED",
}
KEYWORDS = {"PREFIX", "SELECT", "DISTINCT", "COUNT", "WHERE", "FILTER",
            "ORDER", "BY", "ASC", "DESC", "LIMIT"} | UNSUPPORTED_KEYWORDS

COMPARISON_OPS = ("<=", ">=", "!=", "=", "<", ">")


@dataclass(frozen=True)
class Variable:
    name: str


@dataclass(frozen=True)
class TriplePattern:
    subject: "Variable | str"
    predicate: "Variable | str"
    object: "Variable | str | Literal"


@dataclass(frozen=True)
class Comparison:
    var: str
    op: str
    operand: "Literal | Variable"


@dataclass(frozen=True)
class QueryAst:
    form: str  # "select" | "count"
    distinct: bool
    projection: tuple[str, ...]
    patterns: tuple[TriplePattern, ...]
    filters: tuple[Comparison, ...]
    order: tuple[str, str] | None  # (variable, "asc"|"desc")
    limit: int | None

    def variables(self) -> set[str]:
        found: set[str] = set()
        for pat in self.patterns:
            for term in (pat.subject, pat.predicate, pat.object):
                if isinstance(term, Variable):
                    found.add(term.name)
        return found


@dataclass(frozen=True)
class ResultTable:
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]

    def answer_set(self) -> set[str]:
        """Rows as canonical strings (multi-column rows joined with '|')."""
        return {"|".join(term_string(v) for v in row) for row in self.rows}

    def render(self, max_rows: int = 50) -> str:
        """Human-readable serialization, truncated to max_rows."""
        lines = []
        for row in self.rows[:max_rows]:
            lines.append(", ".join(f"{col}: {term_string(val)}"
                                   for col, val in zip(self.columns, row)))
        if len(self.rows) > max_rows:
            lines.append(f"... (showing {max_rows} of {len(self.rows)})")
        lines.append(f"({len(self.rows)} rows total)")
        return "\n".join(lines)


# --- tokenizer ---

_TOKEN_RE = re.compile(r"""
      (?P<WS>\s+)
    | (?P<IRI><[^<>\s]*>)
    | (?P<VAR>\?[A-Za-z_]\w*)
    | (?P<STRING>"(?:[^"\\]|\\.)*")
    | (?P<NUMBER>-?\d+\.\d+|-?\d+)
    | (?P<PNAME>[A-Za-z_][\w-]*:[\w](?:[\w.-]*[\w])?)
    | (?P<WORD>[A-Za-z_][\w]*)
    | (?P<OP><=|>=|!=|=|<|>)
    | (?P<PUNCT>[{}().:])
""", re.VERBOSE)


@dataclass(frozen=True)
class _Token:
    type: str
    value: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise SparqlSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        value = m.group()
        if kind != "WS":
            if kind == "WORD" and value.upper() in KEYWORDS:
                kind, value = "KEYWORD", value.upper()
            tokens.append(_Token(kind, value, pos))
        pos = m.end()
    tokens.append(_Token("EOF", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.i = 0
        self.prefixes: set[str] = {"ns"}

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, message: str, expected: set[str] | None = None):
        raise SparqlSyntaxError(message, self.peek().pos, expected)

    def expect_keyword(self, word: str) -> _Token:
        tok = self.peek()
        if tok.type != "KEYWORD" or tok.value != word:
            self.fail(f"got {tok.value or 'end of input'!r}", {word})
        return self.advance()

    def expect_punct(self, char: str) -> _Token:
        tok = self.peek()
        if tok.type != "PUNCT" or tok.value != char:
            self.fail(f"got {tok.value or 'end of input'!r}", {char})
        return self.advance()

    def check_unsupported(self):
        tok = self.peek()
        if tok.type == "KEYWORD" and tok.value in UNSUPPORTED_KEYWORDS:
            raise UnsupportedFeatureError(tok.value, tok.pos)

    def parse_query(self) -> QueryAst:
        self.check_unsupported()
        while self.peek().type == "KEYWORD" and self.peek().value == "PREFIX":
            self.advance()
            tok = self.peek()
            if tok.type == "PNAME" and tok.value.endswith(":") is False and ":" in tok.value:
                # "name:" split across PNAME is impossible; prefix decls arrive as WORD ':'
                pass
            if tok.type == "WORD":
                name = self.advance().value
                self.expect_punct(":")
            elif tok.type == "PNAME" and tok.value.count(":") == 1 and tok.value.endswith(":"):
                name = self.advance().value[:-1]
            else:
                self.fail("expected prefix name", {"name:"})
            iri_tok = self.peek()
            if iri_tok.type != "IRI":
                self.fail("expected IRI", {"<iri>"})
            self.advance()
            self.prefixes.add(name)

        self.check_unsupported()
        self.expect_keyword("SELECT")
        distinct = False
        if self.peek().type == "KEYWORD" and self.peek().value == "DISTINCT":
            self.advance()
            distinct = True

        form = "select"
        projection: list[str] = []
        if self.peek().type == "KEYWORD" and self.peek().value == "COUNT":
            self.advance()
            self.expect_punct("(")
            projection.append(self.parse_var())
            self.expect_punct(")")
            form = "count"
        else:
            while self.peek().type == "VAR":
                projection.append(self.parse_var())
            if not projection:
                self.fail("expected projection variables or COUNT", {"?var", "COUNT"})

        self.check_unsupported()
        self.expect_keyword("WHERE")
        self.expect_punct("{")
        patterns = [self.parse_pattern()]
        while self.peek().type == "PUNCT" and self.peek().value == ".":
            self.advance()
            patterns.append(self.parse_pattern())
        filters = []
        while self.peek().type == "KEYWORD" and self.peek().value == "FILTER":
            filters.append(self.parse_filter())
        self.check_unsupported()
        self.expect_punct("}")

        order = None
        if self.peek().type == "KEYWORD" and self.peek().value == "ORDER":
            self.advance()
            self.expect_keyword("BY")
            dir_tok = self.peek()
            if dir_tok.type != "KEYWORD" or dir_tok.value not in ("ASC", "DESC"):
                self.fail("expected sort direction", {"ASC", "DESC"})
            self.advance()
            self.expect_punct("(")
            order = (self.parse_var(), dir_tok.value.lower())
            self.expect_punct(")")

        limit = None
        if self.peek().type == "KEYWORD" and self.peek().value == "LIMIT":
            self.advance()
            tok = self.peek()
            if tok.type != "NUMBER" or "." in tok.value or int(tok.value) <= 0:
                self.fail("expected positive integer", {"positive int"})
            limit = int(self.advance().value)

        self.check_unsupported()
        if self.peek().type != "EOF":
            self.fail(f"trailing content {self.peek().value!r}", {"end of query"})

        ast = QueryAst(form, distinct, tuple(projection), tuple(patterns),
                       tuple(filters), order, limit)
        self.validate(ast)
        return ast

    def parse_var(self) -> str:
        tok = self.peek()
        if tok.type != "VAR":
            self.fail(f"got {tok.value or 'end of input'!r}", {"?var"})
        return self.advance().value[1:]

    def resolve_pname(self, tok: _Token) -> str:
        prefix, local = tok.value.split(":", 1)
        if prefix not in self.prefixes:
            raise SparqlSyntaxError(f"undeclared prefix {prefix!r}", tok.pos,
                                    set(self.prefixes))
        return local

    def parse_pattern(self) -> TriplePattern:
        self.check_unsupported()
        subject = self.parse_term(position="subject")
        predicate = self.parse_term(position="predicate")
        obj = self.parse_term(position="object")
        return TriplePattern(subject, predicate, obj)

    def parse_term(self, position: str):
        self.check_unsupported()
        tok = self.peek()
        if tok.type == "VAR":
            return Variable(self.parse_var())
        if tok.type == "PNAME":
            local = self.resolve_pname(self.advance())
            if position == "object":
                return local if ENTITY_ID_RE.match(local) else infer_literal(local)
            return local
        if position == "object":
            if tok.type == "STRING":
                self.advance()
                return infer_literal(_unescape(tok.value[1:-1]))
            if tok.type == "NUMBER":
                self.advance()
                return Literal(tok.value, "float" if "." in tok.value else "integer")
        self.fail(f"got {tok.value or 'end of input'!r} as {position}",
                  {"?var", "ns:name"} | ({"\"string\"", "number"} if position == "object" else set()))

    def parse_filter(self) -> Comparison:
        self.expect_keyword("FILTER")
        self.expect_punct("(")
        var = self.parse_var()
        tok = self.peek()
        if tok.type != "OP":
            self.fail(f"got {tok.value!r}", set(COMPARISON_OPS))
        op = self.advance().value
        val_tok = self.peek()
        if val_tok.type == "VAR":
            operand: Literal | Variable = Variable(self.parse_var())
        elif val_tok.type == "STRING":
            self.advance()
            operand = infer_literal(_unescape(val_tok.value[1:-1]))
        elif val_tok.type == "NUMBER":
            self.advance()
            operand = Literal(val_tok.value, "float" if "." in val_tok.value else "integer")
        else:
            self.fail(f"got {val_tok.value!r}", {"?var", "\"string\"", "number"})
        self.expect_punct(")")
        return Comparison(var, op, operand)

    def validate(self, ast: QueryAst):
        bound = ast.variables()
        mentioned = set(ast.projection)
        if ast.order:
            mentioned.add(ast.order[0])
        for f in ast.filters:
            mentioned.add(f.var)
            if isinstance(f.operand, Variable):
                mentioned.add(f.operand.name)
        missing = mentioned - bound
        if missing:
            raise SparqlSyntaxError(
                f"variables not bound by any pattern: {', '.join(sorted(missing))}", 0)


def _unescape(body: str) -> str:
    return body.replace('\\"', '"').replace("\\\\", "\\").replace("\\n", "\n").replace("\\t", "\t")


def _escape(body: str) -> str:
    return body.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t")


def parse(query_text: str) -> QueryAst:
    """Parse query text into a QueryAst; total over the grammar above."""
    return _Parser(_tokenize(query_text)).parse_query()


def _print_term(term) -> str:
    if isinstance(term, Variable):
        return f"?{term.name}"
    if isinstance(term, Literal):
        if term.kind in ("integer", "float"):
            return term.canonical()
        return f'"{_escape(term.value)}"'
    return f"ns:{term}"


def print_query(ast: QueryAst) -> str:
    """Canonical text form; parse(print_query(ast)) round-trips parsed ASTs."""
    head = "SELECT "
    if ast.distinct:
        head += "DISTINCT "
    if ast.form == "count":
        head += f"COUNT(?{ast.projection[0]})"
    else:
        head += " ".join(f"?{v}" for v in ast.projection)
    body = " . ".join(
        f"{_print_term(p.subject)} {_print_term(p.predicate)} {_print_term(p.object)}"
        for p in ast.patterns)
    for f in ast.filters:
        body += f" FILTER(?{f.var} {f.op} {_print_term(f.operand)})"
    text = f"{head} WHERE {{ {body} }}"
    if ast.order:
        text += f" ORDER BY {ast.order[1].upper()}(?{ast.order[0]})"
    if ast.limit is not None:
        text += f" LIMIT {ast.limit}"
    return text


# --- execution ---

_KIND_RANK = {"integer": 0, "float": 0, "datetime": 1, "text": 2}


def order_key(value):
    """Total order over heterogeneous values: numerics, datetimes, text, entities."""
    if isinstance(value, Literal):
        if value.kind in ("integer", "float"):
            return (0, float(value.value), "")
        if value.kind == "datetime":
            return (1, value.as_python().timestamp(), "")
        return (2, 0.0, value.value)
    return (3, 0.0, value)


def compare_values(left, right, op: str) -> bool:
    """Filter comparison semantics: kind-mismatched comparisons are False."""
    if isinstance(left, str) and isinstance(right, str):
        if op == "=":
            return left == right
        if op == "!=":
            return left != right
        return False
    if not (isinstance(left, Literal) and isinstance(right, Literal)):
        return False
    lrank, rrank = _KIND_RANK[left.kind], _KIND_RANK[right.kind]
    if lrank != rrank:
        return False
    if lrank == 0:
        a, b = float(left.value), float(right.value)
    elif lrank == 1:
        a, b = left.as_python(), right.as_python()
    else:
        a, b = left.value, right.value
    return {
        "=": a == b, "!=": a != b,
        "<": a < b, "<=": a <= b,
        ">": a > b, ">=": a >= b,
    }[op]


def _resolve(term, binding):
    if isinstance(term, Variable):
        return binding.get(term.name)
    return term


def execute(ast: QueryAst, graph: KnowledgeGraph) -> ResultTable:
    """Evaluate a query with basic-graph-pattern join semantics.

    Pure: the same (ast, graph) pair always yields an identical table.
    Unknown constants simply produce empty results.
    """
    bindings: list[dict] = [{}]
    for pat in ast.patterns:
        extended: list[dict] = []
        for binding in bindings:
            s = _resolve(pat.subject, binding)
            p = _resolve(pat.predicate, binding)
            o = _resolve(pat.object, binding)
            for triple in graph.match(s, p, o):
                new = dict(binding)
                ok = True
                for term, value in ((pat.subject, triple.subject),
                                    (pat.predicate, triple.predicate),
                                    (pat.object, triple.object)):
                    if isinstance(term, Variable):
                        if term.name in new and new[term.name] != value:
                            ok = False
                            break
                        new[term.name] = value
                if ok:
                    extended.append(new)
        bindings = extended
        if not bindings:
            break

    for f in ast.filters:
        operand_of = (lambda b: b[f.operand.name]) if isinstance(f.operand, Variable) \
            else (lambda b: f.operand)
        bindings = [b for b in bindings if compare_values(b[f.var], operand_of(b), f.op)]

    if ast.order:
        var, direction = ast.order
        bindings.sort(key=lambda b: tuple(term_string(b[v]) for v in ast.projection))
        bindings.sort(key=lambda b: order_key(b[var]), reverse=(direction == "desc"))
        rows = [tuple(b[v] for v in ast.projection) for b in bindings]
    else:
        rows = sorted((tuple(b[v] for v in ast.projection) for b in bindings),
                      key=lambda row: tuple(term_string(v) for v in row))

    if ast.distinct:
        seen = set()
        unique = []
        for row in rows:
            if row not in seen:
                seen.add(row)
                unique.append(row)
        rows = unique

    if ast.form == "count":
        return ResultTable(("count",), ((Literal(str(len(rows)), "integer"),),))

    if ast.limit is not None:
        rows = rows[:ast.limit]
    return ResultTable(tuple(ast.projection), tuple(rows))
