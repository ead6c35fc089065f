"""Release registry, relational tables and the shared miRNA domain types.

Tables are kept as immutable TSV-backed row sets (one file per table, fixed
column order, no header). History tables reference releases by ordinal; the
:class:`VersionRegistry` translates between ordinals and release labels.
"""

from __future__ import annotations

import enum
import os
import re
from dataclasses import dataclass, field, fields
from typing import Iterable, Optional

LABEL_RE = re.compile(r"^[0-9]+(\.[0-9]+)?$")
HAIRPIN_ID_RE = re.compile(r"^MI[0-9]{7}$")
MATURE_ID_RE = re.compile(r"^MIMAT[0-9]{7}$")
SEQUENCE_RE = re.compile(r"^[ACGUN]+$")


class StoreError(Exception):
    pass


class DuplicateLabel(StoreError):
    pass


class UnknownLabel(StoreError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class MissingFile(StoreError):
    pass


class MalformedRow(StoreError):
    def __init__(self, filename, line, message):
        super().__init__(f"{filename}:{line}: {message}")
        self.filename = filename
        self.line = line


class DuplicateKey(StoreError):
    def __init__(self, filename, line, key):
        super().__init__(f"{filename}:{line}: duplicate key {key!r}")
        self.filename = filename
        self.line = line
        self.key = key


def is_hairpin_id(value: str) -> bool:
    return bool(HAIRPIN_ID_RE.match(value))


def is_mature_id(value: str) -> bool:
    return bool(MATURE_ID_RE.match(value))


def entity_kind(entity_id: str) -> str:
    """Classify an accession: ``MIMAT...`` ids are matures, other ``MI...`` ids hairpins."""
    if entity_id.startswith("MIMA"):
        return "mature"
    if entity_id.startswith("MI"):
        return "hairpin"
    raise ValueError(f"not a miRNA accession: {entity_id!r}")


def is_sequence(value: str) -> bool:
    return bool(SEQUENCE_RE.match(value))


# ---------------------------------------------------------------------------
# Versions


class VersionRegistry:
    """Total order over release labels; position in registration order is the ordinal."""

    def __init__(self, labels: Iterable[str] = ()):
        self._labels: list[str] = []
        self._ordinals: dict[str, int] = {}
        for label in labels:
            self.register(label)

    def register(self, label: str) -> int:
        if not isinstance(label, str) or not LABEL_RE.match(label):
            raise ValueError(f"malformed release label {label!r}")
        if label in self._ordinals:
            raise DuplicateLabel(label)
        self._labels.append(label)
        self._ordinals[label] = len(self._labels)
        return len(self._labels)

    def ordinal(self, label: str) -> int:
        try:
            return self._ordinals[label]
        except KeyError:
            raise UnknownLabel(f"release {label!r} is not registered") from None

    def label(self, ordinal: int) -> str:
        if not 1 <= ordinal <= len(self._labels):
            raise UnknownLabel(f"no release with ordinal {ordinal}")
        return self._labels[ordinal - 1]

    def compare(self, a: str, b: str) -> int:
        """-1, 0 or 1 by registration order (not by the label's numeric value)."""
        oa, ob = self.ordinal(a), self.ordinal(b)
        return (oa > ob) - (oa < ob)

    def __contains__(self, label) -> bool:
        return label in self._ordinals

    def __len__(self) -> int:
        return len(self._labels)

    def __iter__(self):
        return iter(self._labels)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self._labels)

    @property
    def current(self) -> int:
        """Ordinal of the newest release (0 when empty)."""
        return len(self._labels)

    @property
    def current_label(self) -> Optional[str]:
        return self._labels[-1] if self._labels else None

    def __eq__(self, other):
        return isinstance(other, VersionRegistry) and self._labels == other._labels

    def __repr__(self):
        return f"VersionRegistry({self._labels!r})"


def load_versions(path) -> VersionRegistry:
    """Read a ``versions.txt`` manifest: one label per line, oldest first."""
    if not os.path.isfile(path):
        raise MissingFile(f"release manifest not found: {path}")
    registry = VersionRegistry()
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, 1):
            label = line.rstrip("\n")
            if not label:
                continue
            try:
                registry.register(label)
            except DuplicateLabel:
                raise DuplicateLabel(f"{path}:{lineno}: release {label!r} listed twice") from None
            except ValueError as exc:
                raise MalformedRow(path, lineno, str(exc)) from None
    return registry


def dump_versions(registry: VersionRegistry) -> str:
    return "".join(label + "\n" for label in registry)


# ---------------------------------------------------------------------------
# Change vocabulary and history rows


class ChangeTypeHairpin(str, enum.Enum):
    NEW = "NEW"
    NAME = "NAME"
    SEQ = "SEQ"
    NS = "NS"
    FW = "FW"
    DEL = "DEL"

    def __str__(self):
        return self.value


class ChangeTypeMature(str, enum.Enum):
    NEW = "NEW"
    NAME = "NAME"
    SEQ = "SEQ"
    NS = "NS"
    APH = "APH"
    RPH = "RPH"
    DEL = "DEL"

    def __str__(self):
        return self.value


TERMINAL_CHANGES = frozenset({"DEL", "FW"})
LINK_CHANGES = frozenset({"APH", "RPH"})


@dataclass(frozen=True)
class HairpinHistoryRecord:
    mima_id: str
    change: ChangeTypeHairpin
    name: str
    sequence: str
    first_appearance: int
    last_appearance: int

    @property
    def entity_id(self):
        return self.mima_id

    @property
    def parent_hairpin(self):
        return None


@dataclass(frozen=True)
class MatureHistoryRecord:
    mimat: str
    change: ChangeTypeMature
    name: str
    sequence: str
    parent_hairpin: Optional[str]
    first_appearance: int
    last_appearance: int

    @property
    def entity_id(self):
        return self.mimat


@dataclass(frozen=True)
class DeadHairpinRecord:
    mima_id: str
    name: str
    forward_to: Optional[str]
    comment: str
    deleted_in: int


@dataclass(frozen=True)
class FamilyRecord:
    family_id: str
    family_name: str
    members: frozenset

    def __post_init__(self):
        if not self.members:
            raise ValueError(f"family {self.family_id} has no members")
        object.__setattr__(self, "members", frozenset(self.members))


# ---------------------------------------------------------------------------
# Relational tables


def _text(value, column):
    return value


def _int(value, column):
    try:
        number = int(value)
    except ValueError:
        raise ValueError(f"{column} must be an integer, got {value!r}") from None
    if str(number) != value:
        raise ValueError(f"{column} must be a canonical integer, got {value!r}")
    return number


def _strand(value, column):
    if value not in ("+", "-"):
        raise ValueError(f"{column} must be '+' or '-', got {value!r}")
    return value


def _hairpin_id(value, column):
    if not is_hairpin_id(value):
        raise ValueError(f"{column} is not a hairpin accession: {value!r}")
    return value


def _mature_id(value, column):
    if not is_mature_id(value):
        raise ValueError(f"{column} is not a mature accession: {value!r}")
    return value


def _sequence(value, column):
    if not is_sequence(value):
        raise ValueError(f"{column} must be a non-empty sequence over ACGUN, got {value!r}")
    return value


def _key(value, column):
    if not value:
        raise ValueError(f"{column} must not be empty")
    return value


def _column(parse=_text, **kw):
    return field(metadata={"parse": parse}, **kw)


@dataclass(frozen=True)
class HairpinRow:
    mima_id: str = _column(_hairpin_id)
    name: str = _column(_key)
    sequence: str = _column(_sequence)
    species: str = _column()
    chromosome: str = _column()
    strand: str = _column(_strand)
    start: int = _column(_int)
    end: int = _column(_int)

    def check(self):
        if self.start < 0:
            raise ValueError("start must be >= 0")
        if self.end < self.start:
            raise ValueError(f"end ({self.end}) < start ({self.start})")


@dataclass(frozen=True)
class MatureRow:
    mimat: str = _column(_mature_id)
    name: str = _column(_key)
    sequence: str = _column(_sequence)
    species: str = _column()


@dataclass(frozen=True)
class TranscriptRow:
    tid: int = _column(_int)
    enstid: str = _column(_key)
    species: str = _column()
    strand: str = _column(_strand)
    location: str = _column()


@dataclass(frozen=True)
class ProteinGeneRow:
    ensgid: str = _column(_key)
    enstid: str = _column(_key)
    name: str = _column()
    description: str = _column()


@dataclass(frozen=True)
class KeggRow:
    kegg_id: str = _column(_key)
    name: str = _column()


@dataclass(frozen=True)
class TissueRow:
    name: str = _column(_key)
    species: str = _column(_key)


@dataclass(frozen=True)
class MatureHairpinRow:
    mimat: str = _column(_mature_id)
    mima_id: str = _column(_hairpin_id)


@dataclass(frozen=True)
class MicroT5Row:
    mimat: str = _column(_mature_id)
    tid: int = _column(_int)


@dataclass(frozen=True)
class GeneKeggRow:
    ensgid: str = _column(_key)
    kegg_id: str = _column(_key)


@dataclass(frozen=True)
class MatureTissueRow:
    mimat: str = _column(_mature_id)
    name: str = _column(_key)
    species: str = _column(_key)


@dataclass(frozen=True)
class TableSchema:
    name: str
    row_type: type
    key: tuple
    aliases: tuple = ()

    @property
    def filename(self):
        return self.name + ".tsv"

    @property
    def columns(self) -> tuple:
        return tuple(f.name for f in fields(self.row_type))


SCHEMAS = {
    s.name: s
    for s in [
        TableSchema("hairpins", HairpinRow, ("mima_id",), ("Hairpins",)),
        TableSchema("matures", MatureRow, ("mimat",), ("Matures",)),
        TableSchema("transcripts", TranscriptRow, ("tid",), ("Transcripts",)),
        TableSchema("proteingenes", ProteinGeneRow, ("ensgid",), ("ProteinGenes",)),
        TableSchema("keggs", KeggRow, ("kegg_id",), ("Keggs",)),
        TableSchema("tissues", TissueRow, ("name", "species"), ("Tissues",)),
        TableSchema("mature_hairpin", MatureHairpinRow, ("mimat", "mima_id"), ("MatureHairpinConn",)),
        TableSchema("microt5", MicroT5Row, ("mimat", "tid"), ("MicroT5Interactions",)),
        TableSchema("gene_kegg", GeneKeggRow, ("ensgid", "kegg_id"), ("ProteinGeneKeggConn",)),
        TableSchema("mature_tissue", MatureTissueRow, ("mimat", "name", "species"), ("MatureTissueConn",)),
    ]
}

_ALIASES = {}
for _schema in SCHEMAS.values():
    for _alias in (_schema.name, "diana_" + _schema.name) + _schema.aliases:
        _ALIASES[_alias.lower()] = _schema.name


def canonical_table(name: str) -> Optional[str]:
    """Resolve ``diana_hairpins``, ``Hairpins`` or ``hairpins`` to the canonical table name."""
    return _ALIASES.get(name.lower())


def parse_row(schema: TableSchema, values: list, filename="<row>", line=0):
    cols = fields(schema.row_type)
    if len(values) != len(cols):
        raise MalformedRow(filename, line, f"expected {len(cols)} columns, got {len(values)}")
    kwargs = {}
    for f, raw in zip(cols, values):
        try:
            kwargs[f.name] = f.metadata["parse"](raw, f.name)
        except ValueError as exc:
            raise MalformedRow(filename, line, str(exc)) from None
    row = schema.row_type(**kwargs)
    check = getattr(row, "check", None)
    if check is not None:
        try:
            check()
        except ValueError as exc:
            raise MalformedRow(filename, line, str(exc)) from None
    return row


def row_fields(row) -> list:
    return [str(getattr(row, f.name)) for f in fields(row)]


def row_key(schema: TableSchema, row) -> tuple:
    return tuple(getattr(row, c) for c in schema.key)


class TableSet:
    """Immutable set of the core and join tables, keyed by each table's primary key.

    Besides typed rows, every table is exposed as string-valued records
    (``records``) with lazily built hash indexes (``lookup``) for the mapping
    engine's joins.
    """

    def __init__(self, tables: Optional[dict] = None):
        self._rows: dict[str, dict] = {name: {} for name in SCHEMAS}
        for name, rows in (tables or {}).items():
            schema = SCHEMAS[canonical_table(name) or name]
            target = self._rows[schema.name]
            for row in rows:
                key = row_key(schema, row)
                if key in target:
                    raise DuplicateKey(schema.filename, 0, key)
                target[key] = row
        self._records: dict[str, tuple] = {}
        self._indexes: dict = {}

    # typed access
    def rows(self, table: str) -> list:
        return list(self._rows[canonical_table(table)].values())

    def get(self, table: str, *key):
        return self._rows[canonical_table(table)].get(tuple(key))

    def __len__(self):
        return sum(len(t) for t in self._rows.values())

    @property
    def hairpins(self) -> dict:
        return {k[0]: r for k, r in self._rows["hairpins"].items()}

    @property
    def matures(self) -> dict:
        return {k[0]: r for k, r in self._rows["matures"].items()}

    # generic access for the mapping engine
    def records(self, table: str) -> tuple:
        name = canonical_table(table)
        cached = self._records.get(name)
        if cached is None:
            cols = SCHEMAS[name].columns
            cached = tuple(
                dict(zip(cols, row_fields(row))) for row in self._rows[name].values()
            )
            self._records[name] = cached
        return cached

    def lookup(self, table: str, columns: tuple, values: tuple) -> list:
        """Records of ``table`` whose ``columns`` equal ``values`` (string comparison)."""
        name = canonical_table(table)
        index = self._indexes.get((name, columns))
        if index is None:
            index = {}
            for rec in self.records(name):
                index.setdefault(tuple(rec[c] for c in columns), []).append(rec)
            self._indexes[(name, columns)] = index
        return index.get(tuple(values), [])

    def dump(self, table: str, sort=True) -> str:
        name = canonical_table(table)
        items = self._rows[name]
        keys = sorted(items) if sort else list(items)
        return "".join("\t".join(row_fields(items[k])) + "\n" for k in keys)

    def write(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        for name, schema in SCHEMAS.items():
            with open(os.path.join(directory, schema.filename), "w", encoding="utf-8", newline="") as fh:
                fh.write(self.dump(name))


def parse_table(schema: TableSchema, text: str, filename=None) -> list:
    filename = filename or schema.filename
    rows, seen = [], set()
    if text and not text.endswith("\n"):
        text += "\n"
    for lineno, line in enumerate(text.split("\n")[:-1], 1):
        if "\r" in line:
            raise MalformedRow(filename, lineno, "carriage return in row")
        row = parse_row(schema, line.split("\t"), filename, lineno)
        key = row_key(schema, row)
        if key in seen:
            raise DuplicateKey(filename, lineno, key)
        seen.add(key)
        rows.append(row)
    return rows


def load_tables(directory) -> TableSet:
    """Parse every table file in ``directory``; referential integrity is left to :func:`validate`."""
    if not os.path.isdir(directory):
        raise MissingFile(f"table directory not found: {directory}")
    tables = {}
    for name, schema in SCHEMAS.items():
        path = os.path.join(directory, schema.filename)
        if not os.path.isfile(path):
            raise MissingFile(f"missing table file {path}")
        with open(path, encoding="utf-8", newline="") as fh:
            tables[name] = parse_table(schema, fh.read(), path)
    return TableSet(tables)


# ---------------------------------------------------------------------------
# Integrity


@dataclass(frozen=True)
class IntegrityViolation:
    table: str
    key: tuple
    column: str
    message: str

    def __str__(self):
        return f"{self.table}{list(self.key)}: {self.column}: {self.message}"


def validate(tables: TableSet) -> list:
    """Every dangling foreign key in ``tables``; an empty list means consistent."""
    violations = []
    hairpins = {r.mima_id for r in tables.rows("hairpins")}
    matures = {r.mimat for r in tables.rows("matures")}
    tids = {r.tid for r in tables.rows("transcripts")}
    enstids = {r.enstid for r in tables.rows("transcripts")}
    genes = {r.ensgid for r in tables.rows("proteingenes")}
    keggs = {r.kegg_id for r in tables.rows("keggs")}
    tissues = {(r.name, r.species) for r in tables.rows("tissues")}

    def dangling(table, row, column, target):
        violations.append(IntegrityViolation(
            table, row_key(SCHEMAS[table], row), column,
            f"{getattr(row, column)!r} has no matching row in {target}",
        ))

    for row in tables.rows("proteingenes"):
        if row.enstid not in enstids:
            dangling("proteingenes", row, "enstid", "transcripts.enstid")
    for row in tables.rows("mature_hairpin"):
        if row.mimat not in matures:
            dangling("mature_hairpin", row, "mimat", "matures")
        if row.mima_id not in hairpins:
            dangling("mature_hairpin", row, "mima_id", "hairpins")
    for row in tables.rows("microt5"):
        if row.mimat not in matures:
            dangling("microt5", row, "mimat", "matures")
        if row.tid not in tids:
            dangling("microt5", row, "tid", "transcripts")
    for row in tables.rows("gene_kegg"):
        if row.ensgid not in genes:
            dangling("gene_kegg", row, "ensgid", "proteingenes")
        if row.kegg_id not in keggs:
            dangling("gene_kegg", row, "kegg_id", "keggs")
    for row in tables.rows("mature_tissue"):
        if row.mimat not in matures:
            dangling("mature_tissue", row, "mimat", "matures")
        if (row.name, row.species) not in tissues:
            dangling("mature_tissue", row, "name", "tissues")
    return violations
