"""D2RQ-style mapping documents and the virtual RDF graph they define.

A mapping document declares ClassMaps (one RDF resource per table row, named
by a ``@@table.column@@`` URI pattern) and PropertyBridges (one property per
ClassMap, valued from a column, a pattern, or a join to another ClassMap).
:class:`VirtualGraph` evaluates those declarations on demand against a
:class:`~mirlod.versionstore.TableSet`, and adds the versioned hairpin and
mature descriptions and change resources derived from a
:class:`~mirlod.history.History`.
"""

from __future__ import annotations

import os
import re
import threading
from dataclasses import dataclass, field
from typing import Iterator, Optional
from urllib.parse import quote, unquote

from .history import ChangeEvent, History, NotAliveAtVersion
from .rdf import (
    IRI, OWL, RDF_TYPE, STANDARD_PREFIXES, Blank, Literal, RdfSyntaxError, Triple, TripleIndex,
    parse_turtle, sort_key,
)
from .versionstore import SCHEMAS, TERMINAL_CHANGES, TableSet, canonical_table

D2RQ = "http://www.wiwiss.fu-berlin.de/suhl/bizer/D2RQ/0.1#"
DEFAULT_DIANA = "http://example.org/diana/vocab#"
DEFAULT_BASE = "http://localhost:8080"

CLASSMAP_DIRECTIVES = {"dataStorage", "uriPattern", "class", "classDefinitionLabel", "condition"}
BRIDGE_DIRECTIVES = {"belongsToClassMap", "property", "propertyDefinitionLabel", "column", "pattern",
                     "uriPattern", "refersToClassMap", "join", "condition"}
DIRECTIVES = CLASSMAP_DIRECTIVES | BRIDGE_DIRECTIVES

VERSIONED_COLUMNS = {"name", "sequence"}
VERSIONED_TABLES = {"hairpins": "hairpin", "matures": "mature"}

CHANGE_PREDICATES = {
    "NEW": "changeNew",
    "NAME": "changeName",
    "SEQ": "changeSequence",
    "NS": "changeNameSequence",
    "DEL": "changeDelete",
    "FW": "changeForward",
    "APH": "changeAddParent",
    "RPH": "changeRemoveParent",
}


class MappingError(Exception):
    pass


class UnknownDirective(MappingError):
    pass


class DanglingBelongsTo(MappingError):
    pass


class BadPattern(MappingError):
    pass


class BadJoin(MappingError):
    pass


class MissingColumn(MappingError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class UnknownResource(LookupError):
    pass


# ---------------------------------------------------------------------------
# Mapping model

_PLACEHOLDER_RE = re.compile(r"@@([^@]*)@@")
_COLREF_RE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\.([A-Za-z_][A-Za-z0-9_]*)\s*$")


def _column_ref(text, error=BadPattern):
    m = _COLREF_RE.match(text)
    if not m:
        raise error(f"not a table.column reference: {text!r}")
    table = canonical_table(m.group(1))
    if table is None:
        raise error(f"unknown table {m.group(1)!r} in {text!r}")
    column = m.group(2)
    if column not in SCHEMAS[table].columns:
        raise error(f"table {table} has no column {column!r}")
    return table, column


@dataclass(frozen=True)
class UriPattern:
    template: str
    placeholders: tuple = ()   # (table, column) in order of appearance

    @classmethod
    def parse(cls, template: str) -> "UriPattern":
        if template.count("@@") % 2:
            raise BadPattern(f"unbalanced @@ in pattern {template!r}")
        refs = tuple(_column_ref(m.group(1)) for m in _PLACEHOLDER_RE.finditer(template))
        return cls(template, refs)

    @property
    def tables(self) -> set:
        return {t for t, _ in self.placeholders}

    def fill(self, row, encode=True) -> Optional[str]:
        """Substitute placeholder values; None when any value is empty."""
        parts, pos = [], 0
        for m, (table, column) in zip(_PLACEHOLDER_RE.finditer(self.template), self.placeholders):
            value = _row_value(row, table, column)
            if value == "":
                return None
            parts.append(self.template[pos:m.start()])
            parts.append(quote(value, safe="") if encode else value)
            pos = m.end()
        parts.append(self.template[pos:])
        return "".join(parts)

    def regex(self) -> re.Pattern:
        out, pos = [], 0
        for m in _PLACEHOLDER_RE.finditer(self.template):
            out.append(re.escape(self.template[pos:m.start()]))
            out.append("([^/]*)")
            pos = m.end()
        out.append(re.escape(self.template[pos:]))
        return re.compile("".join(out))


def _row_value(row, table, column):
    """Column value from a flat record or a ``{table: record}`` binding."""
    if table in row and isinstance(row[table], dict):
        rec = row[table]
        if column in rec:
            return rec[column]
    elif f"{table}.{column}" in row:
        return row[f"{table}.{column}"]
    elif column in row and not isinstance(row[column], dict):
        return row[column]
    raise MissingColumn(f"row lacks column {table}.{column}")


def expand_pattern(pattern: UriPattern, row, base: str = DEFAULT_BASE) -> IRI:
    """Fill ``pattern`` from ``row`` (percent-encoding values) and make it absolute under ``base``."""
    if isinstance(pattern, str):
        pattern = UriPattern.parse(pattern)
    relative = pattern.fill(row)
    if relative is None:
        raise MissingColumn(f"empty value for a placeholder of {pattern.template!r}")
    return IRI(base.rstrip("/") + "/resource/" + relative)


@dataclass(frozen=True)
class JoinCondition:
    left: tuple
    right: tuple


@dataclass(frozen=True)
class Condition:
    """Conjunction of ``table.column = 'value'`` / ``!=`` comparisons."""

    text: str
    terms: tuple  # ((table, column), op, value)

    @classmethod
    def parse(cls, text: str) -> "Condition":
        terms = []
        for part in re.split(r"\s+AND\s+", text.strip(), flags=re.I):
            m = re.match(r"^\s*([\w.]+)\s*(=|!=|<>)\s*(?:'((?:[^']|'')*)'|(-?\d+(?:\.\d+)?))\s*$", part)
            if not m:
                raise MappingError(f"unsupported condition {part!r}")
            value = m.group(3).replace("''", "'") if m.group(3) is not None else m.group(4)
            terms.append((_column_ref(m.group(1), MappingError), "=" if m.group(2) == "=" else "!=", value))
        return cls(text, tuple(terms))

    def holds(self, binding) -> bool:
        for (table, column), op, value in self.terms:
            actual = _row_value(binding, table, column)
            if (actual == value) != (op == "="):
                return False
        return True


@dataclass(frozen=True)
class ColumnSource:
    table: str
    column: str


@dataclass(frozen=True)
class PatternSource:
    pattern: UriPattern
    as_iri: bool = False


@dataclass(frozen=True)
class RefersTo:
    class_map: str


@dataclass
class PropertyBridge:
    name: str
    properties: tuple
    source: object
    joins: tuple = ()
    conditions: tuple = ()
    label: str = ""
    class_map: str = ""

    @property
    def property(self) -> IRI:
        return self.properties[0]


@dataclass
class ClassMap:
    name: str
    uri_pattern: UriPattern
    rdf_class: IRI
    label: str = ""
    bridges: list = field(default_factory=list)
    conditions: tuple = ()
    data_storage: Optional[str] = None

    @property
    def table(self) -> str:
        return self.uri_pattern.placeholders[0][0]

    @property
    def path_prefix(self) -> str:
        return self.uri_pattern.template.split("/", 1)[0]


@dataclass
class MappingSpec:
    prefixes: dict
    class_maps: dict  # name -> ClassMap, in declaration order

    @property
    def diana(self) -> str:
        return self.prefixes.get("diana", DEFAULT_DIANA)

    def bridges(self):
        for cm in self.class_maps.values():
            yield from cm.bridges


def _local(iri: str) -> str:
    return re.split(r"[#/:]", iri)[-1]


def parse_mapping(document: str) -> MappingSpec:
    """Parse a mapping document restricted to the supported d2rq directives."""
    prefixes = dict(STANDARD_PREFIXES)
    declared = {}
    for m in re.finditer(r"@prefix\s+([A-Za-z][\w\-]*)?:\s*<([^>]*)>", document):
        declared[m.group(1) or ""] = m.group(2)
    prefixes.update(declared)
    try:
        triples = parse_turtle(document, STANDARD_PREFIXES)
    except RdfSyntaxError as exc:
        raise MappingError(f"mapping syntax error: {exc}") from None

    subjects: dict = {}
    for s, p, o in triples:
        subjects.setdefault(s, []).append((p, o))

    kinds, props = {}, {}
    for s, pairs in subjects.items():
        types = [o.value for p, o in pairs if p.value == RDF_TYPE]
        if len(types) != 1 or not types[0].startswith(D2RQ):
            raise MappingError(f"{s.value}: expected exactly one d2rq type, got {types}")
        kind = types[0][len(D2RQ):]
        if kind not in ("ClassMap", "PropertyBridge", "Database"):
            raise UnknownDirective(f"{s.value}: unsupported d2rq type {kind}")
        kinds[s] = kind
        bag: dict = {}
        for p, o in pairs:
            if p.value == RDF_TYPE:
                continue
            directive = p.value[len(D2RQ):] if p.value.startswith(D2RQ) else None
            allowed = {"ClassMap": CLASSMAP_DIRECTIVES, "PropertyBridge": BRIDGE_DIRECTIVES,
                       "Database": set()}[kind]
            if directive not in allowed:
                raise UnknownDirective(f"{_local(s.value)}: unsupported directive {p.value}")
            bag.setdefault(directive, []).append(o)
        props[s] = bag

    def one(s, bag, key, required=True):
        values = bag.get(key, [])
        if len(values) > 1:
            raise MappingError(f"{_local(s.value)}: d2rq:{key} given more than once")
        if not values:
            if required:
                raise MappingError(f"{_local(s.value)}: missing d2rq:{key}")
            return None
        return values[0]

    def text(term):
        return term.value

    class_maps = {}
    by_iri = {}
    for s, kind in kinds.items():
        if kind != "ClassMap":
            continue
        bag = props[s]
        pattern = UriPattern.parse(text(one(s, bag, "uriPattern")))
        if not pattern.placeholders or len(pattern.tables) != 1:
            raise BadPattern(f"{_local(s.value)}: class URI pattern must draw on exactly one table")
        rdf_class = one(s, bag, "class")
        if not isinstance(rdf_class, IRI):
            raise MappingError(f"{_local(s.value)}: d2rq:class must be an IRI")
        label = one(s, bag, "classDefinitionLabel", False)
        storage = one(s, bag, "dataStorage", False)
        cm = ClassMap(
            name=_local(s.value),
            uri_pattern=pattern,
            rdf_class=rdf_class,
            label=text(label) if label else "",
            conditions=tuple(Condition.parse(text(c)) for c in bag.get("condition", [])),
            data_storage=storage.value if storage else None,
        )
        for cond in cm.conditions:
            if {t for (t, _), _, _ in cond.terms} - {cm.table}:
                raise MappingError(f"{cm.name}: class condition may only use table {cm.table}")
        if cm.name in class_maps:
            raise MappingError(f"duplicate ClassMap name {cm.name}")
        class_maps[cm.name] = cm
        by_iri[s] = cm

    for s, kind in kinds.items():
        if kind != "PropertyBridge":
            continue
        bag = props[s]
        name = _local(s.value)
        owner_ref = one(s, bag, "belongsToClassMap")
        owner = by_iri.get(owner_ref)
        if owner is None:
            raise DanglingBelongsTo(f"{name}: belongsToClassMap {owner_ref.value} is not a declared ClassMap")
        properties = tuple(bag.get("property", []))
        if not properties or not all(isinstance(p, IRI) for p in properties):
            raise MappingError(f"{name}: d2rq:property must be given as IRIs")
        sources = [k for k in ("column", "pattern", "uriPattern", "refersToClassMap") if k in bag]
        if len(sources) != 1:
            raise MappingError(f"{name}: exactly one of column/pattern/uriPattern/refersToClassMap required")
        kind_ = sources[0]
        value = one(s, bag, kind_)
        if kind_ == "column":
            source = ColumnSource(*_column_ref(text(value)))
            needed = {source.table}
        elif kind_ in ("pattern", "uriPattern"):
            pat = UriPattern.parse(text(value))
            source = PatternSource(pat, as_iri=kind_ == "uriPattern")
            needed = pat.tables
        else:
            target = by_iri.get(value)
            if target is None:
                raise DanglingBelongsTo(f"{name}: refersToClassMap {value.value} is not a declared ClassMap")
            source = RefersTo(target.name)
            needed = {target.table}
        joins = []
        for j in bag.get("join", []):
            left, sep, right = text(j).partition("=")
            if not sep or right.startswith(">"):
                raise BadJoin(f"{name}: join must be 'table.column = table.column', got {text(j)!r}")
            joins.append(JoinCondition(_column_ref(left, BadJoin), _column_ref(right.lstrip("<"), BadJoin)))
        conditions = tuple(Condition.parse(text(c)) for c in bag.get("condition", []))
        for cond in conditions:
            needed |= {t for (t, _), _, _ in cond.terms}
        reached = _join_reach(owner.table, joins, name)
        missing = needed - reached
        if missing:
            raise BadJoin(f"{name}: tables {sorted(missing)} are not connected to {owner.table} by joins")
        label = one(s, bag, "propertyDefinitionLabel", False)
        owner.bridges.append(PropertyBridge(
            name=name, properties=properties, source=source, joins=tuple(joins),
            conditions=conditions, label=text(label) if label else "", class_map=owner.name,
        ))
    return MappingSpec(prefixes, class_maps)


def _join_reach(owner_table, joins, name):
    reached = {owner_table}
    pending = list(joins)
    while pending:
        progress = False
        for j in list(pending):
            lt, rt = j.left[0], j.right[0]
            if lt in reached or rt in reached:
                reached |= {lt, rt}
                pending.remove(j)
                progress = True
        if not progress:
            raise BadJoin(f"{name}: join {pending[0]} is not connected to table {owner_table}")
    return reached


def load_mapping(path) -> MappingSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_mapping(fh.read())


def default_mapping_text() -> str:
    with open(os.path.join(os.path.dirname(__file__), "data", "mapping.ttl"), encoding="utf-8") as fh:
        return fh.read()


@dataclass(frozen=True)
class SameAsLink:
    class_map: str
    key: str
    external_iri: str


def parse_sameas(text: str) -> list:
    """Rows of ``sameas.tsv``: ClassMap name, key value, external IRI."""
    links = []
    for lineno, line in enumerate(text.split("\n"), 1):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 3 or not all(parts) or ":" not in parts[2]:
            raise MappingError(f"sameas.tsv:{lineno}: expected 'classmap<TAB>key<TAB>IRI'")
        links.append(SameAsLink(*parts))
    return links


def load_sameas(path) -> list:
    if not os.path.isfile(path):
        return []
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_sameas(fh.read())


# ---------------------------------------------------------------------------
# Virtual graph


class VirtualGraph:
    """RDF view over tables and history, computed per resource on request."""

    def __init__(self, spec: MappingSpec, tables: TableSet, history: Optional[History] = None,
                 sameas=(), base: str = DEFAULT_BASE):
        self.spec = spec
        self.tables = tables
        self.history = history
        self.base = base.rstrip("/")
        self.resource_base = self.base + "/resource/"
        ns = spec.diana
        self.vocab = {k: IRI(ns + k) for k in (
            "label", "version", "prevVersion", "nextVersion", "Change", "changeType", "atVersion",
            "affects", "oldValue", "newValue", "forwardTo", "cause", "parentHairpin",
            *CHANGE_PREDICATES.values())}
        self._patterns = [(cm, cm.uri_pattern.regex()) for cm in spec.class_maps.values()]
        self._versioned: dict = {}  # kind -> ClassMap
        for cm in spec.class_maps.values():
            kind = VERSIONED_TABLES.get(cm.table)
            key = SCHEMAS[cm.table].key
            if kind and tuple(c for _, c in cm.uri_pattern.placeholders) == key:
                self._versioned.setdefault(kind, cm)
        self._sameas: dict = {}
        for link in sameas:
            if link.class_map not in spec.class_maps:
                raise MappingError(f"sameas link names unknown ClassMap {link.class_map}")
            self._sameas.setdefault((link.class_map, link.key), []).append(IRI(link.external_iri))
        self._index: Optional[TripleIndex] = None
        self._lock = threading.Lock()
        self._check_keys()

    def _check_keys(self):
        for cm in self.spec.class_maps.values():
            cols = {c for _, c in cm.uri_pattern.placeholders}
            if set(SCHEMAS[cm.table].key) <= cols:
                continue
            seen = set()
            for rec in self.tables.records(cm.table):
                rel = cm.uri_pattern.fill(rec)
                if rel is not None and rel in seen:
                    raise BadPattern(f"{cm.name}: URI pattern does not identify rows uniquely ({rel})")
                seen.add(rel)

    # -- naming -----------------------------------------------------------

    @property
    def current_label(self) -> Optional[str]:
        return self.history.registry.current_label if self.history else None

    def is_internal(self, iri) -> bool:
        return str(iri).startswith(self.resource_base)

    def class_iri(self, cm: ClassMap, rec) -> Optional[IRI]:
        rel = cm.uri_pattern.fill(rec)
        return IRI(self.resource_base + rel) if rel is not None else None

    def entity_iri(self, entity_id: str, kind: Optional[str] = None) -> IRI:
        kind = kind or ("mature" if entity_id.startswith("MIMA") else "hairpin")
        cm = self._versioned.get(kind)
        if cm is None:
            raise MappingError(f"mapping declares no versionable ClassMap for {kind}s")
        column = cm.uri_pattern.placeholders[0][1]
        return self.class_iri(cm, {column: entity_id})

    def versioned_iri(self, entity_id: str, v, kind=None) -> IRI:
        label = v if isinstance(v, str) else self.history.registry.label(v)
        return IRI(self.entity_iri(entity_id, kind).value + "/" + quote(label, safe=""))

    def change_iri(self, event: ChangeEvent) -> IRI:
        label = self.history.registry.label(event.at)
        return IRI(f"{self.resource_base}changes/{quote(event.entity_id, safe='')}/"
                   f"{quote(label, safe='')}/{quote(event.slug, safe='')}")

    # -- resolution -------------------------------------------------------

    def _match_current(self, uri: str):
        if not uri.startswith(self.resource_base):
            return None
        rel = uri[len(self.resource_base):]
        for cm, rx in self._patterns:
            m = rx.fullmatch(rel)
            if not m:
                continue
            values = [unquote(g) for g in m.groups()]
            cols = tuple(c for _, c in cm.uri_pattern.placeholders)
            for rec in self.tables.lookup(cm.table, cols, tuple(values)):
                if all(c.holds({cm.table: rec}) for c in cm.conditions):
                    return cm, rec, values
            return cm, None, values
        return None

    def resolve(self, uri: str):
        """Classify ``uri``: ``("current", cm, rec)``, ``("versioned", cm, entity_id, label)``,
        ``("change", event)``, or ``("deleted", cm, entity_id)`` for entities known only to history.
        Raises UnknownResource otherwise."""
        if not uri.startswith(self.resource_base):
            raise UnknownResource(uri)
        rel = uri[len(self.resource_base):]
        if rel.startswith("changes/") and self.history is not None:
            parts = rel.split("/")
            if len(parts) == 4:
                entity, label, slug = (unquote(p) for p in parts[1:])
                if label in self.history.registry and self.history.knows(entity):
                    for ev in self.history.events_at(entity, label):
                        if ev.slug == slug:
                            return ("change", ev)
            raise UnknownResource(uri)
        found = self._match_current(uri)
        if found is not None:
            cm, rec, values = found
            if rec is not None:
                return ("current", cm, rec)
            if self.history is not None and cm in self._versioned.values() and self.history.knows(values[0]):
                return ("deleted", cm, values[0])
        if self.history is not None and "/" in rel:
            head, _, label = uri.rpartition("/")
            label = unquote(label)
            found = self._match_current(head)
            if found is not None and label in self.history.registry:
                cm, rec, values = found
                if cm in self._versioned.values() and self.history.knows(values[0]):
                    return ("versioned", cm, values[0], label)
        raise UnknownResource(uri)

    def describe(self, uri: str) -> list:
        """Triples of any internal resource: current, versioned or change."""
        kind, *rest = self.resolve(uri)
        if kind == "current":
            return self._current_triples(*rest)
        if kind == "versioned":
            return self.versioned_triples(uri)
        if kind == "change":
            return self.change_resource_triples(rest[0])
        raise NotAliveAtVersion(f"{rest[1]} is not live in the current release")

    # -- bridge evaluation ------------------------------------------------

    def _bindings(self, owner_table: str, rec: dict, joins) -> list:
        bindings = [{owner_table: rec}]
        pending = list(joins)
        while pending and bindings:
            for j in pending:
                lb = j.left[0] in bindings[0]
                rb = j.right[0] in bindings[0]
                if lb or rb:
                    break
            pending.remove(j)
            if lb and rb:
                bindings = [b for b in bindings
                            if b[j.left[0]][j.left[1]] == b[j.right[0]][j.right[1]]]
                continue
            (bt, bc), (ft, fc) = (j.left, j.right) if lb else (j.right, j.left)
            expanded = []
            for b in bindings:
                value = b[bt][bc]
                if value == "":
                    continue
                for other in self.tables.lookup(ft, (fc,), (value,)):
                    nb = dict(b)
                    nb[ft] = other
                    expanded.append(nb)
            bindings = expanded
        return bindings

    def _bridge_objects(self, bridge: PropertyBridge, owner: ClassMap, rec: dict) -> list:
        objects = []
        for b in self._bindings(owner.table, rec, bridge.joins):
            if not all(c.holds(b) for c in bridge.conditions):
                continue
            src = bridge.source
            if isinstance(src, ColumnSource):
                value = b[src.table][src.column]
                if value != "":
                    objects.append(Literal(value))
            elif isinstance(src, PatternSource):
                if src.as_iri:
                    rel = src.pattern.fill(b)
                    if rel is not None:
                        objects.append(IRI(rel if re.match(r"^[a-z][a-z0-9+.\-]*:", rel)
                                           else self.resource_base + rel))
                else:
                    text = src.pattern.fill(b, encode=False)
                    if text is not None:
                        objects.append(Literal(text))
            else:
                target = self.spec.class_maps[src.class_map]
                trec = b.get(target.table)
                if trec is not None and all(c.holds({target.table: trec}) for c in target.conditions):
                    iri = self.class_iri(target, trec)
                    if iri is not None:
                        objects.append(iri)
        return objects

    def _row_triples(self, cm: ClassMap, rec: dict, subject: IRI, skip=()) -> list:
        out = [Triple(subject, IRI(RDF_TYPE), cm.rdf_class)]
        for bridge in cm.bridges:
            if bridge.name in skip:
                continue
            for obj in self._bridge_objects(bridge, cm, rec):
                for prop in bridge.properties:
                    out.append(Triple(subject, prop, obj))
        return out

    def _current_triples(self, cm: ClassMap, rec: dict) -> list:
        subject = self.class_iri(cm, rec)
        out = self._row_triples(cm, rec, subject)
        out.append(Triple(subject, self.vocab["label"], Literal("now")))
        if self.current_label:
            out.append(Triple(subject, self.vocab["version"], Literal(self.current_label)))
        h = self.history
        kind = VERSIONED_TABLES.get(cm.table)
        if h is not None and self._versioned.get(kind) is cm and h.current > 1:
            entity = _row_value(rec, *cm.uri_pattern.placeholders[0])
            if h.knows(entity) and h.exists_at(entity, h.current - 1):
                out.append(Triple(subject, self.vocab["prevVersion"],
                                  self.versioned_iri(entity, h.current - 1, kind)))
        key = ",".join(_row_value(rec, t, c) for t, c in cm.uri_pattern.placeholders)
        for ext in self._sameas.get((cm.name, key), ()):
            out.append(Triple(subject, IRI(OWL + "sameAs"), ext))
        return _dedupe(out)

    def triples_for_resource(self, uri) -> list:
        """Current-release description of ``uri`` taken from the tables."""
        uri = str(uri)
        found = self._match_current(uri)
        if found is None or found[1] is None:
            raise UnknownResource(uri)
        return self._current_triples(found[0], found[1])

    # -- versions ---------------------------------------------------------

    def _parent_bridge(self, cm: ClassMap, bridge: PropertyBridge) -> Optional[str]:
        """Target kind when ``bridge`` links hairpins and matures (answered from history)."""
        if not isinstance(bridge.source, RefersTo):
            return None
        target = self.spec.class_maps[bridge.source.class_map]
        own = VERSIONED_TABLES.get(cm.table)
        other = VERSIONED_TABLES.get(target.table)
        if own and other and own != other and self._versioned.get(other) is target:
            return other
        return None

    def versioned_triples(self, uri, v: Optional[str] = None) -> list:
        """Description of an entity as of release ``v`` (``<current-uri>/<label>``)."""
        if self.history is None:
            raise UnknownResource(str(uri))
        uri = str(uri)
        if v is not None and not uri.endswith("/" + quote(v, safe="")):
            uri = uri + "/" + quote(v, safe="")
        head, _, label = uri.rpartition("/")
        label = unquote(label)
        found = self._match_current(head)
        if found is None or label not in self.history.registry:
            raise UnknownResource(uri)
        cm, rec, values = found
        entity = values[0]
        kind = VERSIONED_TABLES.get(cm.table)
        if cm is not self._versioned.get(kind) or not self.history.knows(entity):
            raise UnknownResource(uri)
        h = self.history
        o = h.ordinal(label)
        if not h.exists_at(entity, o):
            raise NotAliveAtVersion(f"{entity} does not exist at release {label}")
        state = h.record_at(entity, o)
        subject = IRI(uri)

        virtual = {c: "" for c in SCHEMAS[cm.table].columns}
        if rec is not None:
            virtual.update(rec)
        virtual[SCHEMAS[cm.table].key[0]] = entity
        virtual["name"], virtual["sequence"] = state.name, state.sequence

        skip = {b.name for b in cm.bridges if self._parent_bridge(cm, b)}
        out = self._row_triples(cm, virtual, subject, skip)
        for bridge in cm.bridges:
            other = self._parent_bridge(cm, bridge)
            if not other:
                continue
            related = h.parents_at(entity, o) if kind == "mature" else h.children_at(entity, o)
            for rid in related:
                for prop in bridge.properties:
                    out.append(Triple(subject, prop, self.versioned_iri(rid, label, other)))
        out.append(Triple(subject, self.vocab["version"], Literal(label)))
        if o > 1 and h.exists_at(entity, o - 1):
            out.append(Triple(subject, self.vocab["prevVersion"], self.versioned_iri(entity, o - 1, kind)))
        if o < h.current and h.exists_at(entity, o + 1):
            out.append(Triple(subject, self.vocab["nextVersion"], self.versioned_iri(entity, o + 1, kind)))
        for ev in h.events_at(entity, o):
            out.append(Triple(subject, self.vocab[CHANGE_PREDICATES[ev.change]], self.change_iri(ev)))
        return _dedupe(out)

    def change_resource_triples(self, event: ChangeEvent) -> list:
        s = self.change_iri(event)
        v = self.vocab
        label = self.history.registry.label(event.at)
        out = [
            Triple(s, IRI(RDF_TYPE), v["Change"]),
            Triple(s, v["changeType"], Literal(str(event.change))),
            Triple(s, v["atVersion"], Literal(label)),
            Triple(s, v["affects"], self.versioned_iri(event.entity_id, event.at, event.kind)),
        ]
        for old, new in ((event.old_name, event.new_name), (event.old_sequence, event.new_sequence)):
            if old is not None:
                out.append(Triple(s, v["oldValue"], Literal(old)))
            if new is not None:
                out.append(Triple(s, v["newValue"], Literal(new)))
        if event.forward_to:
            out.append(Triple(s, v["forwardTo"], self.versioned_iri(event.forward_to, event.at, "hairpin")))
        if event.parent:
            out.append(Triple(s, v["parentHairpin"], self.versioned_iri(event.parent, event.at, "hairpin")))
        if event.cause:
            out.append(Triple(s, v["cause"], Literal(event.cause)))
        return out

    # -- enumeration --------------------------------------------------------

    def current_resources(self) -> Iterator[tuple]:
        for cm in self.spec.class_maps.values():
            for rec in self.tables.records(cm.table):
                if all(c.holds({cm.table: rec}) for c in cm.conditions):
                    yield cm, rec

    def versioned_resources(self) -> Iterator[IRI]:
        if self.history is None:
            return
        h = self.history
        for kind, cm in self._versioned.items():
            for entity in h.entities(kind):
                for rec in h.state_records(entity):
                    last = rec.first_appearance if rec.change in TERMINAL_CHANGES else rec.last_appearance
                    for o in range(rec.first_appearance, last + 1):
                        yield self.versioned_iri(entity, o, kind)

    def _stream(self, scope):
        if scope not in ("current", "versioned", "all"):
            raise ValueError(f"unknown scope {scope!r}; expected current, versioned or all")
        if scope in ("current", "all"):
            for cm, rec in self.current_resources():
                yield from self._current_triples(cm, rec)
        if scope in ("versioned", "all") and self.history is not None:
            for iri in self.versioned_resources():
                yield from self.versioned_triples(iri)
            for ev in self.history.events:
                yield from self.change_resource_triples(ev)

    def enumerate_all(self, scope: str = "all") -> Iterator[Triple]:
        """Every triple of ``scope`` exactly once, in canonical (s, p, o) order."""
        keyed = {}
        for t in self._stream(scope):
            keyed[t] = None
        return iter(sorted(keyed, key=sort_key))

    # -- matching -----------------------------------------------------------

    def index(self) -> TripleIndex:
        with self._lock:
            if self._index is None:
                self._index = TripleIndex(self._stream("all"))
            return self._index

    def match(self, s=None, p=None, o=None):
        if isinstance(s, IRI) and self._index is None:
            try:
                triples = self.describe(s.value)
            except (UnknownResource, NotAliveAtVersion):
                return iter(())
            return (t for t in triples
                    if (p is None or t.predicate == p) and (o is None or t.object == o))
        if isinstance(s, (Literal, Blank)):
            return iter(())
        return self.index().match(s, p, o)


def _dedupe(triples):
    return list(dict.fromkeys(triples))
