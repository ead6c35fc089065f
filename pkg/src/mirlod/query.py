"""SELECT queries over basic graph patterns with one optional UNION block.

Supported grammar (keywords case-insensitive)::

    PREFIX p: <iri> ...
    SELECT ?v ... | *  WHERE { triple-pattern ... [ { {group} UNION {group} ... } ] ... } [LIMIT n]

Rows are returned in a canonical order (sorted by the N-Triples form of the
selected terms) before LIMIT applies, so results are reproducible.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Optional

from .mapping import DEFAULT_DIANA
from .rdf import IRI, RDF_TYPE, STANDARD_PREFIXES, Blank, Literal, RdfSyntaxError, _unescape

UNSUPPORTED = {"FILTER", "OPTIONAL", "GRAPH", "SERVICE", "BIND", "VALUES", "MINUS", "CONSTRUCT",
               "ASK", "DESCRIBE", "INSERT", "DELETE", "ORDER", "GROUP", "HAVING", "OFFSET",
               "DISTINCT", "REDUCED", "FROM", "NAMED", "EXISTS", "LOAD", "CLEAR", "DROP", "CREATE"}


class QueryError(Exception):
    pass


class ParseError(QueryError):
    def __init__(self, message, position=None):
        super().__init__(f"{message} (at offset {position})" if position is not None else message)
        self.position = position


class UnknownPrefix(ParseError):
    pass


class UnsupportedFeature(ParseError):
    pass


class UnknownFormat(QueryError):
    pass


@dataclass(frozen=True, order=True)
class Variable:
    name: str

    def n3(self):
        return "?" + self.name


@dataclass(frozen=True)
class TriplePattern:
    subject: object
    predicate: object
    object: object

    def variables(self):
        return [t.name for t in (self.subject, self.predicate, self.object) if isinstance(t, Variable)]


@dataclass(frozen=True)
class Query:
    select_vars: tuple
    where: tuple      # where[0]: shared patterns; where[1:]: UNION branches
    limit: Optional[int] = None

    @property
    def shared(self):
        return self.where[0]

    @property
    def branches(self):
        return self.where[1:]


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<iri><[^<>"{}|^`\\\x00-\x20]*>)
  | (?P<var>[?$][A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*"|'(?:[^'\\\n]|\\.)*')
  | (?P<lang>@[a-zA-Z]+(?:-[a-zA-Z0-9]+)*)
  | (?P<dt>\^\^)
  | (?P<number>[0-9]+)
  | (?P<pname>[A-Za-z][A-Za-z0-9_\-]*:[A-Za-z0-9_\-]*(?:\.[A-Za-z0-9_\-]+)*|:[A-Za-z0-9_\-]*)
  | (?P<word>[A-Za-z]+)
  | (?P<punct>[{}().;,*])
  | (?P<other>\S)
    """,
    re.X,
)


def _tokens(text):
    out = []
    for m in _TOKEN_RE.finditer(text):
        kind = m.lastgroup
        if kind == "ws":
            continue
        out.append((kind, m.group(kind), m.start()))
    return out


class _Parser:
    def __init__(self, text, prefixes):
        self.toks = _tokens(text)
        self.i = 0
        self.prefixes = dict(STANDARD_PREFIXES, diana=DEFAULT_DIANA)
        self.prefixes.update(prefixes or {})
        self.end = len(text)

    def peek(self, offset=0):
        j = self.i + offset
        return self.toks[j] if j < len(self.toks) else ("eof", "", self.end)

    def next(self):
        tok = self.peek()
        self.i += 1
        return tok

    def keyword(self, tok):
        if tok[0] == "word":
            word = tok[1].upper()
            if word in UNSUPPORTED:
                raise UnsupportedFeature(f"{word} is not supported", tok[2])
            return word
        return None

    def expect_word(self, word):
        tok = self.next()
        if self.keyword(tok) != word:
            raise ParseError(f"expected {word}, got {tok[1]!r}", tok[2])

    def expect(self, punct):
        tok = self.next()
        if tok[1] != punct:
            raise ParseError(f"expected {punct!r}, got {tok[1]!r}", tok[2])

    def parse(self):
        while self.keyword(self.peek()) in ("PREFIX", "BASE"):
            tok = self.next()
            if tok[1].upper() == "BASE":
                raise UnsupportedFeature("BASE is not supported", tok[2])
            name = self.next()
            if name[0] != "pname" or not name[1].endswith(":"):
                raise ParseError("expected a prefix name like 'ex:'", name[2])
            iri = self.next()
            if iri[0] != "iri":
                raise ParseError("expected <iri> after prefix name", iri[2])
            self.prefixes[name[1][:-1]] = iri[1][1:-1]
        self.expect_word("SELECT")
        variables = []
        star = False
        while True:
            tok = self.peek()
            if tok[0] == "var":
                variables.append(tok[1][1:])
                self.next()
            elif tok[1] == "*" and not variables and not star:
                star = True
                self.next()
            else:
                self.keyword(tok)
                break
        if not variables and not star:
            raise ParseError("SELECT needs at least one variable", self.peek()[2])
        if self.keyword(self.peek()) == "WHERE":
            self.next()
        shared, branches = self.group(top=True)
        limit = None
        tok = self.peek()
        if self.keyword(tok) == "LIMIT":
            self.next()
            num = self.next()
            if num[0] != "number":
                raise ParseError("LIMIT needs a non-negative integer", num[2])
            limit = int(num[1])
        tok = self.peek()
        if tok[0] != "eof":
            self.keyword(tok)
            raise ParseError(f"unexpected {tok[1]!r} after query", tok[2])
        mentioned = []
        for pat in shared + [p for b in branches for p in b]:
            for v in pat.variables():
                if v not in mentioned:
                    mentioned.append(v)
        if star:
            variables = mentioned
        for v in variables:
            if v not in mentioned:
                raise ParseError(f"selected variable ?{v} does not occur in WHERE")
        return Query(tuple(variables), (tuple(shared),) + tuple(tuple(b) for b in branches), limit)

    def group(self, top=False):
        """Parse ``{ ... }``; returns (patterns, union_branches)."""
        self.expect("{")
        patterns, branches = [], []
        while True:
            tok = self.peek()
            if tok[1] == "}":
                self.next()
                break
            if tok[0] == "eof":
                raise ParseError("unterminated group", tok[2])
            if tok[1] == ".":
                self.next()
                continue
            if tok[1] == "{":
                alternatives = [self.group()]
                while self.keyword(self.peek()) == "UNION":
                    self.next()
                    alternatives.append(self.group())
                if len(alternatives) == 1:
                    inner, inner_branches = alternatives[0]
                    patterns.extend(inner)
                    if inner_branches:
                        if branches:
                            raise UnsupportedFeature("only one UNION block per query", tok[2])
                        branches = inner_branches
                    continue
                if branches:
                    raise UnsupportedFeature("only one UNION block per query", tok[2])
                for alt, nested in alternatives:
                    if nested:
                        raise UnsupportedFeature("nested UNION", tok[2])
                branches = [alt for alt, _ in alternatives]
                continue
            self.keyword(tok)
            patterns.extend(self.triples())
        return patterns, branches

    def triples(self):
        subject = self.term("subject")
        out = []
        while True:
            predicate = self.term("predicate")
            while True:
                out.append(TriplePattern(subject, predicate, self.term("object")))
                if self.peek()[1] != ",":
                    break
                self.next()
            if self.peek()[1] != ";":
                break
            self.next()
            if self.peek()[1] in (".", "}"):
                break
        return out

    def term(self, position):
        kind, value, pos = self.next()
        if kind == "var":
            return Variable(value[1:])
        if kind == "iri":
            return IRI(value[1:-1])
        if kind == "pname":
            prefix, _, local = value.partition(":")
            if prefix not in self.prefixes:
                raise UnknownPrefix(f"unknown prefix {prefix!r}", pos)
            return IRI(self.prefixes[prefix] + local)
        if kind == "word" and value == "a" and position == "predicate":
            return IRI(RDF_TYPE)
        if kind == "string" and position == "object":
            try:
                text = _unescape(value[1:-1])
            except RdfSyntaxError as exc:
                raise ParseError(str(exc), pos) from None
            nxt = self.peek()
            if nxt[0] == "lang":
                self.next()
                return Literal(text, lang=nxt[1][1:])
            if nxt[0] == "dt":
                self.next()
                dt = self.term("datatype")
                if not isinstance(dt, IRI):
                    raise ParseError("datatype must be an IRI", nxt[2])
                return Literal(text, datatype=dt.value)
            return Literal(text)
        if kind == "number" and position == "object":
            return Literal(value, datatype="http://www.w3.org/2001/XMLSchema#integer")
        if kind == "word":
            self.keyword((kind, value, pos))
        if kind == "eof":
            raise ParseError("unexpected end of query", pos)
        raise ParseError(f"unexpected {value!r} in {position} position", pos)


def parse_query(text: str, prefixes: Optional[dict] = None) -> Query:
    """Parse ``text``. rdf, rdfs, owl, xsd and diana are predeclared; ``prefixes`` adds or overrides."""
    return _Parser(text, prefixes).parse()


# ---------------------------------------------------------------------------
# Evaluation


def _bound(term, row):
    if isinstance(term, Variable):
        return row.get(term.name)
    return term


def _pattern_score(pat, bound_vars):
    score = 0
    for t in (pat.subject, pat.predicate, pat.object):
        if not isinstance(t, Variable) or t.name in bound_vars:
            score += 1
    return score


def _join_group(patterns, graph, seed):
    rows = list(seed)
    remaining = list(patterns)
    while remaining and rows:
        bound_vars = set(rows[0])
        remaining.sort(key=lambda p: -_pattern_score(p, bound_vars))
        pat = remaining.pop(0)
        out = []
        for row in rows:
            s, p, o = (_bound(t, row) for t in (pat.subject, pat.predicate, pat.object))
            for triple in graph.match(s, p, o):
                new = dict(row)
                ok = True
                for term, value in zip((pat.subject, pat.predicate, pat.object), triple):
                    if isinstance(term, Variable):
                        if new.setdefault(term.name, value) != value:
                            ok = False
                            break
                if ok:
                    out.append(new)
        rows = out
    return rows


def row_key(row: dict, variables) -> tuple:
    return tuple(row[v].n3() if v in row else "" for v in variables)


def evaluate(query: Query, graph) -> list:
    """Solutions of ``query`` over ``graph`` (anything with ``match(s, p, o)``), projected and ordered."""
    rows = _join_group(query.shared, graph, [{}])
    if query.branches:
        combined = []
        for branch in query.branches:
            combined.extend(_join_group(branch, graph, rows))
        rows = combined
    projected = [{v: r[v] for v in query.select_vars if v in r} for r in rows]
    projected.sort(key=lambda r: row_key(r, query.select_vars))
    if query.limit is not None:
        projected = projected[: query.limit]
    return projected


# ---------------------------------------------------------------------------
# Results


def _json_term(term):
    if isinstance(term, IRI):
        return {"type": "uri", "value": term.value}
    if isinstance(term, Blank):
        return {"type": "bnode", "value": term.label}
    out = {"type": "literal", "value": term.value}
    if term.lang:
        out["xml:lang"] = term.lang
    elif term.datatype:
        out["datatype"] = term.datatype
    return out


def serialize_results(rows, variables, fmt: str = "json") -> bytes:
    variables = list(variables)
    if fmt == "json":
        doc = {
            "head": {"vars": variables},
            "results": {"bindings": [{v: _json_term(r[v]) for v in variables if v in r} for r in rows]},
        }
        return json.dumps(doc, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    if fmt == "tsv":
        lines = ["\t".join("?" + v for v in variables)]
        for r in rows:
            lines.append("\t".join(r[v].n3() if v in r else "" for v in variables))
        return ("\n".join(lines) + "\n").encode("utf-8")
    raise UnknownFormat(f"unknown results format {fmt!r}")


def parse_results(data: bytes, fmt: str = "json"):
    """Inverse of :func:`serialize_results`; returns ``(variables, rows)``."""
    text = data.decode("utf-8")
    if fmt == "json":
        doc = json.loads(text)
        rows = []
        for b in doc["results"]["bindings"]:
            row = {}
            for v, t in b.items():
                if t["type"] == "uri":
                    row[v] = IRI(t["value"])
                elif t["type"] == "bnode":
                    row[v] = Blank(t["value"])
                else:
                    row[v] = Literal(t["value"], t.get("datatype"), t.get("xml:lang"))
            rows.append(row)
        return doc["head"]["vars"], rows
    if fmt == "tsv":
        from .rdf import _TurtleReader

        if not text.endswith("\n"):
            raise QueryError("TSV results must end with a newline")
        lines = text[:-1].split("\n")
        variables = [h[1:] for h in lines[0].split("\t")] if lines[0] else []
        rows = []
        for line in lines[1:]:
            row = {}
            for v, cell in zip(variables, line.split("\t")):
                if cell:
                    row[v] = _TurtleReader(cell).term()
            rows.append(row)
        return variables, rows
    raise UnknownFormat(f"unknown results format {fmt!r}")
