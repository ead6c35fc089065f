"""Readers and writers for the four per-release change-tracking files.

``miRNA.dat``, ``miRNA.dead`` and ``miFam.dat`` are line-prefixed records
(two-letter tag, one space, payload) terminated by ``//``. ``miRNA.diff`` is
one whitespace-separated line per changed entity::

    MI0000001 cel-let-7 NEW
    MI0004476 mdv2-miR-M29-5p SEQUENCE NAME
    MIMAT0000115 dme-miR-10* SEQUENCE NAME
    MIMAT0000002 cel-miR-1 ADDPARENT:MI0000003

Every writer is the exact inverse of its reader on conforming input.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Iterable, Optional

from .versionstore import entity_kind, is_hairpin_id, is_mature_id, is_sequence

HAIRPIN_TOKENS = frozenset({"NEW", "NAME", "SEQUENCE", "DELETE", "FORWARD"})
MATURE_TOKENS = frozenset({"NEW", "NAME", "SEQUENCE", "DELETE"})
PARENT_OPS = ("ADDPARENT", "REMOVEPARENT")


class FlatFileError(Exception):
    """Base for every reader error; carries the 1-based offending line."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class FlatFileSyntaxError(FlatFileError):
    def __init__(self, line: int, expected: str, got: str = ""):
        message = f"expected {expected}"
        if got:
            message += f", got {got!r}"
        super().__init__(line, message)
        self.expected = expected


class TruncatedRecord(FlatFileSyntaxError):
    def __init__(self, line: int):
        super().__init__(line, "'//' record terminator before end of input")


class EmptyFamily(FlatFileError):
    pass


class UnknownChangeToken(FlatFileError):
    pass


class MatureTokenOnHairpin(FlatFileError):
    pass


@dataclass(frozen=True)
class MatureRef:
    mimat: str
    name: str
    sequence: str


@dataclass(frozen=True)
class DatEntry:
    mima_id: str
    name: str
    description: str
    matures: tuple
    sequence: str
    publications: tuple


@dataclass(frozen=True)
class DiffLine:
    entity_id: str
    name: str
    changes: tuple

    @property
    def kind(self) -> str:
        return entity_kind(self.entity_id)

    @property
    def tokens(self) -> frozenset:
        """Plain change tokens, parent operations excluded."""
        return frozenset(t for t in self.changes if ":" not in t)

    @property
    def parent_ops(self) -> list:
        return [tuple(t.split(":", 1)) for t in self.changes if ":" in t]

    @property
    def parent_ref(self) -> Optional[str]:
        ops = self.parent_ops
        return ops[0][1] if ops else None


@dataclass(frozen=True)
class DeadEntry:
    mima_id: str
    name: str
    forward_to: Optional[str]
    comments: tuple = ()

    @property
    def comment(self) -> str:
        return " ".join(self.comments)


@dataclass(frozen=True)
class FamilyEntry:
    family_id: str
    family_name: str
    members: tuple  # of (mima_id, name)


def _lines(source):
    """Yield ``(lineno, line)`` from text, bytes or a text stream; strict ``\\n`` endings."""
    if isinstance(source, (bytes, bytearray)):
        try:
            source = bytes(source).decode("utf-8")
        except UnicodeDecodeError as exc:
            line = bytes(source)[: exc.start].count(b"\n") + 1
            raise FlatFileSyntaxError(line, "UTF-8 text") from None
    if isinstance(source, str):
        text = source
    else:
        text = source.read() if hasattr(source, "read") else "".join(source)
    if not text:
        return
    parts = text.split("\n")
    if parts[-1] == "":
        parts.pop()
    for lineno, line in enumerate(parts, 1):
        if "\r" in line:
            raise FlatFileSyntaxError(lineno, "'\\n' line endings", line)
        yield lineno, line


def _tagged(lineno, line, allowed):
    """Split ``XX payload``; ``allowed`` is a string describing acceptable tags."""
    if line == "//":
        return "//", ""
    if len(line) < 4 or line[2] != " " or line[3] == " ":
        raise FlatFileSyntaxError(lineno, allowed, line)
    return line[:2], line[3:]


def _single_token(lineno, payload, what):
    if not payload or any(c.isspace() for c in payload):
        raise FlatFileSyntaxError(lineno, what, payload)
    return payload


class _Reader:
    """Cursor over tagged lines shared by the record readers."""

    def __init__(self, source):
        self.items = list(_lines(source))
        self.pos = 0

    def done(self):
        return self.pos >= len(self.items)

    def peek_tag(self):
        if self.done():
            return None
        lineno, line = self.items[self.pos]
        return "//" if line == "//" else line[:2]

    def take(self, tag, expected):
        if self.done():
            last = self.items[-1][0] if self.items else 0
            raise TruncatedRecord(last + 1)
        lineno, line = self.items[self.pos]
        got, payload = _tagged(lineno, line, expected)
        if got != tag:
            raise FlatFileSyntaxError(lineno, expected, line)
        self.pos += 1
        return lineno, payload


def _accession(lineno, payload, check, what):
    value = _single_token(lineno, payload, what)
    if not check(value):
        raise FlatFileSyntaxError(lineno, what, value)
    return value


def parse_dat(source) -> list:
    """Parse ``miRNA.dat`` records (ID, AC, DE, MT*, RX+, SQ, //)."""
    reader, entries = _Reader(source), []
    while not reader.done():
        ln, name = reader.take("ID", "'ID <name>'")
        name = _single_token(ln, name, "single-token name")
        ln, payload = reader.take("AC", "'AC <hairpin accession>'")
        mima_id = _accession(ln, payload, is_hairpin_id, "hairpin accession MI#######")
        _, description = reader.take("DE", "'DE <description>'")
        matures = []
        while reader.peek_tag() == "MT":
            ln, payload = reader.take("MT", "'MT <mimat> <name> <sequence>'")
            parts = payload.split(" ")
            if len(parts) != 3 or not is_mature_id(parts[0]) or not parts[1] or not is_sequence(parts[2]):
                raise FlatFileSyntaxError(ln, "'MT <mimat> <name> <sequence>'", payload)
            matures.append(MatureRef(*parts))
        publications = [reader.take("RX", "'RX <publication>' or 'MT' line")[1]]
        while reader.peek_tag() == "RX":
            publications.append(reader.take("RX", "'RX <publication>'")[1])
        ln, sequence = reader.take("SQ", "'SQ <sequence>'")
        if not is_sequence(sequence):
            raise FlatFileSyntaxError(ln, "sequence over ACGUN", sequence)
        reader.take("//", "'//'")
        entries.append(DatEntry(mima_id, name, description, tuple(matures), sequence, tuple(publications)))
    return entries


def serialize_dat(entries: Iterable[DatEntry]) -> str:
    out = io.StringIO()
    for e in entries:
        out.write(f"ID {e.name}\nAC {e.mima_id}\nDE {e.description}\n")
        for m in e.matures:
            out.write(f"MT {m.mimat} {m.name} {m.sequence}\n")
        for pub in e.publications:
            out.write(f"RX {pub}\n")
        out.write(f"SQ {e.sequence}\n//\n")
    return out.getvalue()


def _check_token(lineno, entity_id, token):
    kind = entity_kind(entity_id)
    if ":" in token:
        op, _, ref = token.partition(":")
        if op not in PARENT_OPS:
            raise UnknownChangeToken(lineno, f"unknown change token {token!r}")
        if kind == "hairpin":
            raise MatureTokenOnHairpin(lineno, f"{op} applies to matures only, not {entity_id}")
        if not is_hairpin_id(ref):
            raise FlatFileSyntaxError(lineno, f"hairpin accession after {op}:", ref)
        return
    allowed = HAIRPIN_TOKENS if kind == "hairpin" else MATURE_TOKENS
    if token not in allowed:
        raise UnknownChangeToken(lineno, f"{token!r} is not a {kind} change token")


def parse_diff(source) -> list:
    """Parse ``miRNA.diff`` lines, validating tokens against the entity kind."""
    result = []
    for lineno, line in _lines(source):
        parts = line.split()
        if len(parts) < 3:
            raise FlatFileSyntaxError(lineno, "'<id> <name> <change>...'", line)
        entity_id, name, changes = parts[0], parts[1], parts[2:]
        if not (is_hairpin_id(entity_id) or is_mature_id(entity_id)):
            raise FlatFileSyntaxError(lineno, "MI####### or MIMAT####### accession", entity_id)
        for token in changes:
            _check_token(lineno, entity_id, token)
        if len(set(changes)) != len(changes):
            raise FlatFileSyntaxError(lineno, "each change token at most once", line)
        result.append(DiffLine(entity_id, name, tuple(changes)))
    return result


def serialize_diff(lines: Iterable[DiffLine]) -> str:
    return "".join(f"{d.entity_id} {d.name} {' '.join(d.changes)}\n" for d in lines)


def parse_dead(source) -> list:
    """Parse ``miRNA.dead`` records (ID, AC, optional FW, CC*, //)."""
    reader, entries = _Reader(source), []
    while not reader.done():
        ln, name = reader.take("ID", "'ID <name>'")
        name = _single_token(ln, name, "single-token name")
        ln, payload = reader.take("AC", "'AC <hairpin accession>'")
        mima_id = _accession(ln, payload, is_hairpin_id, "hairpin accession MI#######")
        forward = None
        if reader.peek_tag() == "FW":
            ln, payload = reader.take("FW", "'FW <hairpin accession>'")
            forward = _accession(ln, payload, is_hairpin_id, "hairpin accession MI#######")
        comments = []
        while reader.peek_tag() == "CC":
            comments.append(reader.take("CC", "'CC <text>'")[1])
        reader.take("//", "'CC' line or '//'")
        entries.append(DeadEntry(mima_id, name, forward, tuple(comments)))
    return entries


def serialize_dead(entries: Iterable[DeadEntry]) -> str:
    out = io.StringIO()
    for e in entries:
        out.write(f"ID {e.name}\nAC {e.mima_id}\n")
        if e.forward_to:
            out.write(f"FW {e.forward_to}\n")
        for c in e.comments:
            out.write(f"CC {c}\n")
        out.write("//\n")
    return out.getvalue()


def parse_fam(source) -> list:
    """Parse ``miFam.dat`` records (AC, ID, MI+, //)."""
    reader, entries = _Reader(source), []
    while not reader.done():
        ln, family_id = reader.take("AC", "'AC <family accession>'")
        family_id = _single_token(ln, family_id, "single-token family accession")
        start = ln
        ln, family_name = reader.take("ID", "'ID <family name>'")
        family_name = _single_token(ln, family_name, "single-token family name")
        members = []
        while reader.peek_tag() == "MI":
            ln, payload = reader.take("MI", "'MI <hairpin accession> <name>'")
            parts = payload.split(" ")
            if len(parts) != 2 or not is_hairpin_id(parts[0]) or not parts[1]:
                raise FlatFileSyntaxError(ln, "'MI <hairpin accession> <name>'", payload)
            members.append((parts[0], parts[1]))
        if not members and not reader.done() and reader.peek_tag() == "//":
            raise EmptyFamily(start, f"family {family_id} lists no members")
        reader.take("//", "'MI' line or '//'")
        entries.append(FamilyEntry(family_id, family_name, tuple(members)))
    return entries


def serialize_fam(entries: Iterable[FamilyEntry]) -> str:
    out = io.StringIO()
    for e in entries:
        out.write(f"AC {e.family_id}\nID {e.family_name}\n")
        for mima_id, name in e.members:
            out.write(f"MI {mima_id} {name}\n")
        out.write("//\n")
    return out.getvalue()
