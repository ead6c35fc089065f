"""RDF terms, canonical N-Triples/Turtle output and readers for both."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional, Union

RDF = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
RDFS = "http://www.w3.org/2000/01/rdf-schema#"
OWL = "http://www.w3.org/2002/07/owl#"
XSD = "http://www.w3.org/2001/XMLSchema#"
RDF_TYPE = RDF + "type"

STANDARD_PREFIXES = {"rdf": RDF, "rdfs": RDFS, "owl": OWL, "xsd": XSD}


@dataclass(frozen=True, order=True)
class IRI:
    value: str

    def n3(self) -> str:
        return "<" + _escape_iri(self.value) + ">"

    def __str__(self):
        return self.value


@dataclass(frozen=True, order=True)
class Literal:
    value: str
    datatype: Optional[str] = None
    lang: Optional[str] = None

    def n3(self) -> str:
        text = '"' + _escape_literal(self.value) + '"'
        if self.lang:
            return text + "@" + self.lang
        if self.datatype:
            return text + "^^<" + _escape_iri(self.datatype) + ">"
        return text

    def __str__(self):
        return self.value


@dataclass(frozen=True, order=True)
class Blank:
    label: str

    def n3(self) -> str:
        return "_:" + self.label


Term = Union[IRI, Literal, Blank]


class Triple(NamedTuple):
    subject: Term
    predicate: IRI
    object: Term

    def n3(self) -> str:
        return f"{self.subject.n3()} {self.predicate.n3()} {self.object.n3()} ."


def sort_key(triple: Triple):
    return (triple.subject.n3(), triple.predicate.n3(), triple.object.n3())


class RdfSyntaxError(ValueError):
    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


# ---------------------------------------------------------------------------
# Escaping

_LITERAL_ESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\r": "\\r", "\t": "\\t",
                    "\b": "\\b", "\f": "\\f"}
_IRI_FORBIDDEN = set('<>"{}|^`\\') | {chr(c) for c in range(0x21)} | {"\x7f", "\x85", "\u2028", "\u2029"}


_LINE_BREAKING = {chr(c) for c in range(0x20)} | {"\x7f", "\x85", "\u2028", "\u2029"}


def _escape_literal(value: str) -> str:
    # control and line-separator characters go out as \uXXXX so line-oriented readers stay in sync
    return "".join(_LITERAL_ESCAPES.get(c) or (f"\\u{ord(c):04X}" if c in _LINE_BREAKING else c)
                   for c in value)


def _escape_iri(value: str) -> str:
    return "".join(f"\\u{ord(c):04X}" if c in _IRI_FORBIDDEN or c.isspace() else c for c in value)


_UNESCAPE_RE = re.compile(r"\\(?:u([0-9A-Fa-f]{4})|U([0-9A-Fa-f]{8})|(.))", re.S)
_SIMPLE = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f", '"': '"', "'": "'", "\\": "\\"}


def _unescape(text: str, line=None) -> str:
    def sub(m):
        if m.group(1) or m.group(2):
            return chr(int(m.group(1) or m.group(2), 16))
        c = m.group(3)
        if c not in _SIMPLE:
            raise RdfSyntaxError(f"invalid escape \\{c}", line)
        return _SIMPLE[c]

    return _UNESCAPE_RE.sub(sub, text)


# ---------------------------------------------------------------------------
# Writers


def serialize_ntriples(triples: Iterable[Triple]) -> str:
    """One canonical line per distinct triple, sorted."""
    return "".join(line + "\n" for line in sorted({t.n3() for t in triples}))


def _qname(iri: str, prefixes: dict) -> Optional[str]:
    best = None
    for prefix, ns in prefixes.items():
        if iri.startswith(ns) and (best is None or len(ns) > len(prefixes[best])):
            best = prefix
    if best is None:
        return None
    local = iri[len(prefixes[best]):]
    if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_\-]*", local):
        return f"{best}:{local}"
    return None


def _turtle_term(term, prefixes, position="object"):
    if isinstance(term, IRI):
        if position == "predicate" and term.value == RDF_TYPE:
            return "a"
        return _qname(term.value, prefixes) or term.n3()
    if isinstance(term, Literal) and term.datatype and not term.lang:
        dt = _qname(term.datatype, prefixes) or "<" + _escape_iri(term.datatype) + ">"
        return '"' + _escape_literal(term.value) + '"^^' + dt
    return term.n3()


def serialize_turtle(triples: Iterable[Triple], prefixes: Optional[dict] = None) -> str:
    """Deterministic Turtle: prefixes sorted, one subject block each, sorted predicates/objects."""
    prefixes = dict(prefixes or {})
    ordered = sorted(set(triples), key=sort_key)
    used = {}
    out = []
    for p in sorted(prefixes):
        used[p] = prefixes[p]
    for p in sorted(used):
        out.append(f"@prefix {p}: <{_escape_iri(used[p])}> .\n")
    if out and ordered:
        out.append("\n")
    i = 0
    while i < len(ordered):
        subject = ordered[i].subject
        block = []
        while i < len(ordered) and ordered[i].subject == subject:
            block.append(ordered[i])
            i += 1
        out.append(_turtle_term(subject, used, "subject") + "\n")
        by_pred: dict = {}
        for t in block:
            by_pred.setdefault(t.predicate, []).append(t.object)
        preds = list(by_pred)
        for j, pred in enumerate(preds):
            objs = ", ".join(_turtle_term(o, used) for o in by_pred[pred])
            end = " ;" if j < len(preds) - 1 else " ."
            out.append(f"    {_turtle_term(pred, used, 'predicate')} {objs}{end}\n")
        out.append("\n")
    return "".join(out)


# ---------------------------------------------------------------------------
# Readers

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*)
  | (?P<iri><[^<>"{}|^`\\\x00-\x20]*(?:\\u[0-9A-Fa-f]{4}[^<>"{}|^`\\\x00-\x20]*)*>)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<lang>@[a-zA-Z]+(?:-[a-zA-Z0-9]+)*)
  | (?P<dt>\^\^)
  | (?P<bnode>_:[A-Za-z0-9_][A-Za-z0-9_\-.]*)
  | (?P<punct>[.;,])
  | (?P<pname>[A-Za-z][A-Za-z0-9_\-]*?:[A-Za-z0-9_\-]*|:[A-Za-z0-9_\-]*)
  | (?P<word>[A-Za-z]+)
    """,
    re.X,
)


def _tokenize(text):
    pos, line = 0, 1
    tokens = []
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise RdfSyntaxError(f"unexpected input {text[pos:pos + 20]!r}", line)
        kind = m.lastgroup
        value = m.group(kind)
        if kind != "ws":
            if kind == "word" and value == "a":
                kind = "a"
            tokens.append((kind, value, line))
        line += value.count("\n")
        pos = m.end()
    return tokens


class _TurtleReader:
    def __init__(self, text, prefixes=None):
        self.tokens = _tokenize(text)
        self.i = 0
        self.prefixes = dict(prefixes or {})

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None, None)

    def next(self, *kinds):
        tok = self.peek()
        if tok[0] is None:
            last = self.tokens[-1][2] if self.tokens else 1
            raise RdfSyntaxError("unexpected end of input", last)
        if kinds and tok[0] not in kinds:
            raise RdfSyntaxError(f"expected {'/'.join(kinds)}, got {tok[1]!r}", tok[2])
        self.i += 1
        return tok

    def iri(self, tok):
        kind, value, line = tok
        if kind == "iri":
            return IRI(_unescape(value[1:-1], line))
        if kind == "pname":
            prefix, _, local = value.partition(":")
            if prefix not in self.prefixes:
                raise RdfSyntaxError(f"undeclared prefix {prefix!r}", line)
            return IRI(self.prefixes[prefix] + local)
        raise RdfSyntaxError(f"expected an IRI, got {value!r}", line)

    def term(self):
        tok = self.next()
        kind, value, line = tok
        if kind == "string":
            text = _unescape(value[1:-1], line)
            nxt = self.peek()
            if nxt[0] == "lang":
                self.next()
                return Literal(text, lang=nxt[1][1:])
            if nxt[0] == "dt":
                self.next()
                return Literal(text, datatype=self.iri(self.next("iri", "pname")).value)
            return Literal(text)
        if kind == "bnode":
            return Blank(value[2:])
        return self.iri(tok)

    def parse(self):
        triples = []
        while self.peek()[0] is not None:
            kind, value, line = self.peek()
            if kind == "lang" and value == "@prefix":
                self.next()
                name = self.next("pname")[1]
                if not name.endswith(":"):
                    raise RdfSyntaxError("prefix name must end with ':'", line)
                self.prefixes[name[:-1]] = self.iri(self.next("iri")).value
                self.next("punct")
                continue
            subject = self.term()
            if isinstance(subject, Literal):
                raise RdfSyntaxError("literal in subject position", line)
            while True:
                tok = self.next()
                predicate = IRI(RDF_TYPE) if tok[0] == "a" else self.iri(tok)
                while True:
                    triples.append(Triple(subject, predicate, self.term()))
                    sep = self.next("punct")
                    if sep[1] != ",":
                        break
                if sep[1] == ".":
                    break
                if self.peek()[1] == ".":
                    self.next()
                    break
        return triples


def parse_turtle(text: str, prefixes: Optional[dict] = None) -> list:
    """Read the Turtle subset emitted by :func:`serialize_turtle` (prefixes, ``;``, ``,``, ``a``)."""
    return _TurtleReader(text, prefixes).parse()


def parse_ntriples(text: str) -> list:
    triples = []
    for lineno, line in enumerate(text.split("\n"), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        reader = _TurtleReader(stripped)
        tokens = reader.tokens
        if any(k == "pname" or k == "a" for k, _, _ in tokens):
            raise RdfSyntaxError("prefixed names are not N-Triples", lineno)
        try:
            found = reader.parse()
        except RdfSyntaxError as exc:
            raise RdfSyntaxError(str(exc), lineno) from None
        if len(found) != 1:
            raise RdfSyntaxError("expected exactly one triple", lineno)
        triples.extend(found)
    return triples


# ---------------------------------------------------------------------------
# Materialized index


class TripleIndex:
    """Immutable in-memory triple set indexed by every triple position."""

    def __init__(self, triples: Iterable[Triple] = ()):
        self._triples = frozenset(triples)
        self._s: dict = {}
        self._p: dict = {}
        self._o: dict = {}
        for t in self._triples:
            self._s.setdefault(t.subject, []).append(t)
            self._p.setdefault(t.predicate, []).append(t)
            self._o.setdefault(t.object, []).append(t)

    def __len__(self):
        return len(self._triples)

    def __iter__(self):
        return iter(self._triples)

    def __contains__(self, triple):
        return triple in self._triples

    def match(self, s=None, p=None, o=None):
        candidates = [c for c in (
            self._s.get(s, ()) if s is not None else None,
            self._p.get(p, ()) if p is not None else None,
            self._o.get(o, ()) if o is not None else None,
        ) if c is not None]
        if not candidates:
            return iter(self._triples)
        smallest = min(candidates, key=len)
        return (t for t in smallest
                if (s is None or t.subject == s)
                and (p is None or t.predicate == p)
                and (o is None or t.object == o))
