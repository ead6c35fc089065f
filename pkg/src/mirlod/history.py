"""Release replay and interval history.

Each release's diff is applied to the previous :class:`Snapshot`, taking new
names and sequences from that release's ``miRNA.dat`` and deletion causes and
forward links from ``miRNA.dead``. The resulting change events are folded into
interval records (``first_appearance``..``last_appearance`` ordinals): one
stream of state records per entity and, for matures, one stream of
parent-link records per (mature, hairpin) pair.
"""

from __future__ import annotations

import bisect
import io
import os
from dataclasses import dataclass, field, replace
from typing import Optional

from . import flatfile
from .flatfile import DatEntry, DeadEntry, DiffLine, FamilyEntry, MatureRef
from .versionstore import (
    LINK_CHANGES,
    TERMINAL_CHANGES,
    ChangeTypeHairpin,
    ChangeTypeMature,
    DeadHairpinRecord,
    FamilyRecord,
    HairpinHistoryRecord,
    MatureHistoryRecord,
    UnknownLabel,
    VersionRegistry,
    entity_kind,
)

DAT_FILE = "miRNA.dat"
DIFF_FILE = "miRNA.diff"
DEAD_FILE = "miRNA.dead"
FAM_FILE = "miFam.dat"


class ReplayError(Exception):
    """A release cannot be applied to the previous snapshot."""

    def __init__(self, message, label=None, entity_id=None):
        where = f"release {label}: " if label else ""
        super().__init__(where + message)
        self.label = label
        self.entity_id = entity_id


class NewOnExisting(ReplayError):
    pass


class ChangeOnMissing(ReplayError):
    pass


class RphWithoutParentLink(ReplayError):
    pass


class SnapshotDatMismatch(ReplayError):
    pass


class InvalidChange(ReplayError):
    """Token combination or reference the replay rules do not allow."""


class UnknownEntity(KeyError):
    def __str__(self):
        return Exception.__str__(self)


class NotAliveAtVersion(LookupError):
    pass


@dataclass(frozen=True)
class ReleaseFileSet:
    label: str
    dat: tuple
    diff: Optional[tuple]
    dead: tuple = ()
    fam: tuple = ()


@dataclass
class Snapshot:
    at: int
    hairpins: dict = field(default_factory=dict)   # mima_id -> (name, sequence)
    matures: dict = field(default_factory=dict)    # mimat -> (name, sequence)
    parents: dict = field(default_factory=dict)    # mimat -> frozenset of mima_id
    families: dict = field(default_factory=dict)   # family_id -> FamilyRecord
    forwards: dict = field(default_factory=dict)   # mima_id -> mima_id, this release only

    @classmethod
    def empty(cls):
        return cls(at=0)


@dataclass(frozen=True)
class ChangeEvent:
    entity_id: str
    kind: str
    change: str
    at: int
    old_name: Optional[str] = None
    new_name: Optional[str] = None
    old_sequence: Optional[str] = None
    new_sequence: Optional[str] = None
    parent: Optional[str] = None
    forward_to: Optional[str] = None
    cause: str = ""

    @property
    def slug(self) -> str:
        """Identifier of the event among the entity's events at one release."""
        return f"{self.change}-{self.parent}" if self.parent else str(self.change)


def record_valid_at(record, v_ordinal: int) -> bool:
    return record.first_appearance <= v_ordinal <= record.last_appearance


# ---------------------------------------------------------------------------
# Loading release directories


def read_release(directory, label, require_diff=True) -> ReleaseFileSet:
    def read(name, parser, required):
        path = os.path.join(directory, name)
        if not os.path.isfile(path):
            if required:
                raise FileNotFoundError(f"{path}: missing release file")
            return None
        with open(path, encoding="utf-8", newline="") as fh:
            text = fh.read()
        try:
            return tuple(parser(text))
        except flatfile.FlatFileError as exc:
            raise flatfile.FlatFileError(exc.line, f"{path}:{exc.line}: {exc}") from exc

    return ReleaseFileSet(
        label=label,
        dat=read(DAT_FILE, flatfile.parse_dat, True),
        diff=read(DIFF_FILE, flatfile.parse_diff, require_diff),
        dead=read(DEAD_FILE, flatfile.parse_dead, False) or (),
        fam=read(FAM_FILE, flatfile.parse_fam, False) or (),
    )


def write_release(directory, files: ReleaseFileSet) -> None:
    os.makedirs(directory, exist_ok=True)
    outputs = {
        DAT_FILE: flatfile.serialize_dat(files.dat),
        DEAD_FILE: flatfile.serialize_dead(files.dead),
        FAM_FILE: flatfile.serialize_fam(files.fam),
    }
    if files.diff is not None:
        outputs[DIFF_FILE] = flatfile.serialize_diff(files.diff)
    for name, text in outputs.items():
        with open(os.path.join(directory, name), "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def bootstrap_diff(dat) -> tuple:
    """NEW lines for every hairpin and mature of a first release lacking a diff."""
    lines, matures = [], {}
    for entry in dat:
        lines.append(DiffLine(entry.mima_id, entry.name, ("NEW",)))
        for m in entry.matures:
            matures.setdefault(m.mimat, (m.name, []))[1].append(entry.mima_id)
    for mimat in sorted(matures):
        name, parents = matures[mimat]
        ops = tuple(f"ADDPARENT:{p}" for p in sorted(set(parents)))
        lines.append(DiffLine(mimat, name, ("NEW",) + ops))
    return tuple(lines)


# ---------------------------------------------------------------------------
# Replay


def _dat_state(files: ReleaseFileSet):
    hairpins, matures, parents = {}, {}, {}
    for entry in files.dat:
        if entry.mima_id in hairpins:
            raise SnapshotDatMismatch(f"hairpin {entry.mima_id} listed twice in {DAT_FILE}", files.label)
        hairpins[entry.mima_id] = (entry.name, entry.sequence)
        for m in entry.matures:
            value = (m.name, m.sequence)
            if matures.setdefault(m.mimat, value) != value:
                raise SnapshotDatMismatch(
                    f"mature {m.mimat} has conflicting MT lines in {DAT_FILE}", files.label, m.mimat)
            parents.setdefault(m.mimat, set()).add(entry.mima_id)
    return hairpins, matures, {k: frozenset(v) for k, v in parents.items()}


def _state_change(tokens):
    name, seq = "NAME" in tokens, "SEQUENCE" in tokens
    if name and seq:
        return "NS"
    if name:
        return "NAME"
    if seq:
        return "SEQ"
    return None


def apply_release(prev: Snapshot, files: ReleaseFileSet):
    """Apply one release to ``prev``; returns ``(snapshot, events)``."""
    at = prev.at + 1
    label = files.label
    dat_hairpins, dat_matures, dat_parents = _dat_state(files)
    dead = {d.mima_id: d for d in files.dead}
    diff = files.diff if files.diff is not None else bootstrap_diff(files.dat)

    hairpins = dict(prev.hairpins)
    matures = dict(prev.matures)
    parents = {k: set(v) for k, v in prev.parents.items()}
    forwards = {}
    events = []
    seen = set()

    def from_dat(source, entity_id):
        try:
            return source[entity_id]
        except KeyError:
            raise SnapshotDatMismatch(
                f"{entity_id} changed but is absent from {DAT_FILE}", label, entity_id) from None

    for line in diff:
        eid, kind, tokens = line.entity_id, line.kind, line.tokens
        if eid in seen:
            raise InvalidChange(f"{eid} appears on more than one diff line", label, eid)
        seen.add(eid)
        live = hairpins if kind == "hairpin" else matures
        dat = dat_hairpins if kind == "hairpin" else dat_matures
        terminal = tokens & {"DELETE", "FORWARD"}
        state = _state_change(tokens)
        if "NEW" in tokens and (state or terminal):
            raise InvalidChange(f"NEW cannot be combined with other state changes on {eid}", label, eid)
        if len(terminal) > 1 or (terminal and state):
            raise InvalidChange(f"conflicting change tokens on {eid}", label, eid)

        if "NEW" in tokens:
            if eid in live:
                raise NewOnExisting(f"{eid} already exists", label, eid)
            name, seq = from_dat(dat, eid)
            live[eid] = (name, seq)
            events.append(ChangeEvent(eid, kind, "NEW", at, new_name=name, new_sequence=seq))
        elif tokens or not line.parent_ops:
            if eid not in live:
                raise ChangeOnMissing(f"{eid} is not live", label, eid)

        if state:
            old_name, old_seq = live[eid]
            new_name, new_seq = from_dat(dat, eid)
            if state == "NAME":
                new_seq = old_seq
            elif state == "SEQ":
                new_name = old_name
            live[eid] = (new_name, new_seq)
            ev = ChangeEvent(eid, kind, state, at)
            if state in ("NAME", "NS"):
                ev = replace(ev, old_name=old_name, new_name=new_name)
            if state in ("SEQ", "NS"):
                ev = replace(ev, old_sequence=old_seq, new_sequence=new_seq)
            events.append(ev)

        for op, parent in line.parent_ops:
            if eid not in live:
                raise ChangeOnMissing(f"{eid} is not live", label, eid)
            links = parents.setdefault(eid, set())
            if op == "ADDPARENT":
                if parent in links:
                    raise InvalidChange(f"{eid} already has parent {parent}", label, eid)
                links.add(parent)
                events.append(ChangeEvent(eid, kind, "APH", at, parent=parent))
            else:
                if parent not in links:
                    raise RphWithoutParentLink(f"{eid} has no parent link to {parent}", label, eid)
                links.discard(parent)
                events.append(ChangeEvent(eid, kind, "RPH", at, parent=parent))
            if not links:
                del parents[eid]

        if terminal:
            old_name, old_seq = live.pop(eid)
            entry = dead.get(eid) if kind == "hairpin" else None
            cause = entry.comment if entry else ""
            if "FORWARD" in terminal:
                if entry is None or not entry.forward_to:
                    raise InvalidChange(f"FORWARD on {eid} without an FW link in {DEAD_FILE}", label, eid)
                forwards[eid] = entry.forward_to
                events.append(ChangeEvent(eid, kind, "FW", at, old_name=old_name, old_sequence=old_seq,
                                          forward_to=entry.forward_to, cause=cause))
            else:
                events.append(ChangeEvent(eid, kind, "DEL", at, old_name=old_name,
                                          old_sequence=old_seq, cause=cause))
            if kind == "mature" and eid in parents:
                raise InvalidChange(f"deleted mature {eid} still has parent links", label, eid)

    if hairpins != dat_hairpins:
        missing = sorted(set(dat_hairpins) ^ set(hairpins)) or sorted(
            k for k in hairpins if hairpins[k] != dat_hairpins[k])
        raise SnapshotDatMismatch(f"replayed hairpins differ from {DAT_FILE} at {missing[:5]}", label)
    if matures != dat_matures:
        missing = sorted(set(dat_matures) ^ set(matures)) or sorted(
            k for k in matures if matures[k] != dat_matures[k])
        raise SnapshotDatMismatch(f"replayed matures differ from {DAT_FILE} at {missing[:5]}", label)
    frozen_parents = {k: frozenset(v) for k, v in parents.items()}
    if frozen_parents != dat_parents:
        bad = sorted(set(frozen_parents.items()) ^ set(dat_parents.items()))
        raise SnapshotDatMismatch(f"replayed parent links differ from {DAT_FILE} at {bad[:3]}", label)
    for eid, target in forwards.items():
        if target not in hairpins:
            raise InvalidChange(f"{eid} forwards to {target}, which is not live", label, eid)

    families = {}
    for fam in files.fam:
        if fam.family_id in families:
            raise InvalidChange(f"family {fam.family_id} listed twice", label)
        families[fam.family_id] = FamilyRecord(fam.family_id, fam.family_name,
                                               frozenset(m for m, _ in fam.members))
    snap = Snapshot(at, hairpins, matures, frozen_parents, families, forwards)
    return snap, events


# ---------------------------------------------------------------------------
# History tables


class History:
    """Interval records plus the events and family memberships behind them."""

    def __init__(self, registry: VersionRegistry, hairpin_records, mature_records, events, families):
        self.registry = registry
        self.hairpin_records = list(hairpin_records)
        self.mature_records = list(mature_records)
        self.events = list(events)
        self.families = dict(families)   # ordinal -> {family_id: FamilyRecord}
        self._state: dict = {}
        self._starts: dict = {}
        self._links: dict = {}        # mimat -> {parent: [records]}
        self._children: dict = {}     # mima_id -> {mimat: [records]}
        self._events: dict = {}       # entity -> {ordinal: [events]}
        for rec in self.hairpin_records:
            self._state.setdefault(rec.mima_id, []).append(rec)
        for rec in self.mature_records:
            if rec.change in LINK_CHANGES:
                self._links.setdefault(rec.mimat, {}).setdefault(rec.parent_hairpin, []).append(rec)
                self._children.setdefault(rec.parent_hairpin, {}).setdefault(rec.mimat, []).append(rec)
            else:
                self._state.setdefault(rec.mimat, []).append(rec)
        for recs in self._state.values():
            recs.sort(key=lambda r: r.first_appearance)
        for eid, recs in self._state.items():
            self._starts[eid] = [r.first_appearance for r in recs]
        for ev in self.events:
            self._events.setdefault(ev.entity_id, {}).setdefault(ev.at, []).append(ev)

    @property
    def current(self) -> int:
        return self.registry.current

    def ordinal(self, v) -> int:
        if isinstance(v, int):
            if not 1 <= v <= self.registry.current:
                raise UnknownLabel(f"no release with ordinal {v}")
            return v
        return self.registry.ordinal(v)

    def entities(self, kind=None) -> list:
        return sorted(e for e in self._state if kind is None or entity_kind(e) == kind)

    def knows(self, entity_id) -> bool:
        return entity_id in self._state

    def state_records(self, entity_id) -> list:
        try:
            return self._state[entity_id]
        except KeyError:
            raise UnknownEntity(f"no history for {entity_id}") from None

    def record_at(self, entity_id, v) -> Optional[object]:
        """The state record of ``entity_id`` valid at ``v``, or None."""
        o = self.ordinal(v)
        recs = self._state.get(entity_id)
        if not recs:
            return None
        i = bisect.bisect_right(self._starts[entity_id], o) - 1
        if i >= 0 and record_valid_at(recs[i], o):
            return recs[i]
        return None

    def alive_at(self, entity_id, v) -> bool:
        rec = self.record_at(entity_id, v)
        return rec is not None and rec.change not in TERMINAL_CHANGES

    def exists_at(self, entity_id, v) -> bool:
        """Alive at ``v`` or deleted exactly at ``v`` (the tombstone version)."""
        rec = self.record_at(entity_id, v)
        if rec is None:
            return False
        return rec.change not in TERMINAL_CHANGES or rec.first_appearance == self.ordinal(v)

    def terminal_record(self, entity_id):
        recs = self._state.get(entity_id) or []
        if recs and recs[-1].change in TERMINAL_CHANGES:
            return recs[-1]
        return None

    def parents_at(self, mimat, v) -> list:
        o = self.ordinal(v)
        return sorted(
            parent for parent, recs in self._links.get(mimat, {}).items()
            if any(r.change == "APH" and record_valid_at(r, o) for r in recs)
        )

    def children_at(self, mima_id, v) -> list:
        o = self.ordinal(v)
        return sorted(
            mimat for mimat, recs in self._children.get(mima_id, {}).items()
            if any(r.change == "APH" and record_valid_at(r, o) for r in recs)
        )

    def events_at(self, entity_id, v) -> list:
        return list(self._events.get(entity_id, {}).get(self.ordinal(v), ()))

    def forward_chain(self, mima_id) -> Optional[str]:
        """Final live replacement reached by following FW links from a deleted hairpin."""
        seen = set()
        current = mima_id
        while True:
            rec = self.terminal_record(current)
            if rec is None:
                return current if current != mima_id else None
            if rec.change != "FW" or current in seen:
                return None
            seen.add(current)
            target = [e for e in self.events_at(current, rec.first_appearance) if e.change == "FW"]
            current = target[0].forward_to

    def dead_records(self) -> list:
        result = []
        for ev in self.events:
            if ev.kind == "hairpin" and ev.change in TERMINAL_CHANGES:
                result.append(DeadHairpinRecord(ev.entity_id, ev.old_name, ev.forward_to, ev.cause, ev.at))
        return result


def changes_at(history: History, entity_id, v) -> list:
    if not history.knows(entity_id):
        raise UnknownEntity(f"no history for {entity_id}")
    return history.events_at(entity_id, v)


def _close(rec, last):
    return replace(rec, last_appearance=last)


def _records_from_events(events, current):
    """Fold ordered events into interval records closed at ``current``."""
    open_state: dict = {}
    open_links: dict = {}
    hairpins, matures = [], []

    def emit(rec):
        (hairpins if isinstance(rec, HairpinHistoryRecord) else matures).append(rec)

    for ev in events:
        if ev.change in LINK_CHANGES:
            name, seq = open_state[ev.entity_id].name, open_state[ev.entity_id].sequence
            key = (ev.entity_id, ev.parent)
            if key in open_links:
                emit(_close(open_links[key], ev.at - 1))
            open_links[key] = MatureHistoryRecord(ev.entity_id, ChangeTypeMature(ev.change), name, seq,
                                                  ev.parent, ev.at, ev.at)
            continue
        prev = open_state.get(ev.entity_id)
        if prev is not None:
            emit(_close(prev, ev.at - 1))
        name = ev.new_name if ev.new_name is not None else (prev.name if prev else ev.old_name)
        seq = ev.new_sequence if ev.new_sequence is not None else (prev.sequence if prev else ev.old_sequence)
        if ev.kind == "hairpin":
            rec = HairpinHistoryRecord(ev.entity_id, ChangeTypeHairpin(ev.change), name, seq, ev.at, ev.at)
        else:
            rec = MatureHistoryRecord(ev.entity_id, ChangeTypeMature(ev.change), name, seq, None, ev.at, ev.at)
        open_state[ev.entity_id] = rec
    for rec in list(open_state.values()) + list(open_links.values()):
        emit(_close(rec, current))
    hairpins.sort(key=lambda r: (r.mima_id, r.first_appearance))
    matures.sort(key=lambda r: (r.mimat, r.parent_hairpin or "", r.first_appearance))
    return hairpins, matures


def build_history(releases, registry: Optional[VersionRegistry] = None) -> History:
    """Replay ``releases`` (oldest first) and build both history tables."""
    labels = [r.label for r in releases]
    if registry is None:
        registry = VersionRegistry(labels)
    elif list(registry) != labels:
        raise ReplayError(f"release order {labels} does not match the registry {list(registry)}")
    snap = Snapshot.empty()
    events, families = [], {}
    ended = set()
    for i, files in enumerate(releases):
        if i == 0:
            if files.diff is None:
                files = replace(files, diff=bootstrap_diff(files.dat))
            bad = [d for d in files.diff if "NEW" not in d.tokens or len(d.tokens) != 1
                   or any(op != "ADDPARENT" for op, _ in d.parent_ops)]
            if bad:
                raise InvalidChange(f"first release may only create entities; got {bad[0].changes}",
                                    files.label, bad[0].entity_id)
        elif files.diff is None:
            raise ReplayError(f"missing {DIFF_FILE}", files.label)
        for line in files.diff:
            if "NEW" in line.tokens and line.entity_id in ended:
                raise NewOnExisting(f"{line.entity_id} was deleted earlier and cannot be recreated",
                                    files.label, line.entity_id)
        snap, evs = apply_release(snap, files)
        ended.update(e.entity_id for e in evs if e.change in TERMINAL_CHANGES)
        events.extend(evs)
        families[snap.at] = snap.families
    hairpins, matures = _records_from_events(events, registry.current)
    return History(registry, hairpins, matures, events, families)


def replay(releases) -> list:
    """Sequential snapshots after each release, for cross-checking the history tables."""
    snap, out = Snapshot.empty(), []
    for i, files in enumerate(releases):
        if i == 0 and files.diff is None:
            files = replace(files, diff=bootstrap_diff(files.dat))
        snap, _ = apply_release(snap, files)
        out.append(snap)
    return out


def snapshot_at(history: History, registry: Optional[VersionRegistry], v) -> Snapshot:
    """Live state at ``v`` assembled from the history records alone."""
    registry = registry or history.registry
    o = registry.ordinal(v) if not isinstance(v, int) else history.ordinal(v)
    hairpins, matures, parents, forwards = {}, {}, {}, {}
    for rec in history.hairpin_records:
        if record_valid_at(rec, o):
            if rec.change not in TERMINAL_CHANGES:
                hairpins[rec.mima_id] = (rec.name, rec.sequence)
            elif rec.change == "FW" and rec.first_appearance == o:
                forwards[rec.mima_id] = None
    for rec in history.mature_records:
        if not record_valid_at(rec, o):
            continue
        if rec.change == "APH":
            parents.setdefault(rec.mimat, set()).add(rec.parent_hairpin)
        elif rec.change not in LINK_CHANGES and rec.change not in TERMINAL_CHANGES:
            matures[rec.mimat] = (rec.name, rec.sequence)
    for eid in forwards:
        fw = [e for e in history.events_at(eid, o) if e.change == "FW"]
        forwards[eid] = fw[0].forward_to
    return Snapshot(
        at=o,
        hairpins=hairpins,
        matures=matures,
        parents={k: frozenset(v) for k, v in parents.items()},
        families=dict(history.families.get(o, {})),
        forwards=forwards,
    )


# ---------------------------------------------------------------------------
# Deriving release files from snapshots


def derive_diff(a: Snapshot, b: Snapshot) -> list:
    """Minimal diff lines turning ``a`` into ``b``."""
    lines = []
    for mid in sorted(set(a.hairpins) | set(b.hairpins)):
        if mid not in a.hairpins:
            lines.append(DiffLine(mid, b.hairpins[mid][0], ("NEW",)))
        elif mid not in b.hairpins:
            token = "FORWARD" if mid in b.forwards else "DELETE"
            lines.append(DiffLine(mid, a.hairpins[mid][0], (token,)))
        elif a.hairpins[mid] != b.hairpins[mid]:
            (oname, oseq), (nname, nseq) = a.hairpins[mid], b.hairpins[mid]
            tokens = (("SEQUENCE",) if oseq != nseq else ()) + (("NAME",) if oname != nname else ())
            lines.append(DiffLine(mid, nname, tokens))
    for mimat in sorted(set(a.matures) | set(b.matures)):
        old_p = a.parents.get(mimat, frozenset())
        new_p = b.parents.get(mimat, frozenset())
        adds = tuple(f"ADDPARENT:{p}" for p in sorted(new_p - old_p))
        removes = tuple(f"REMOVEPARENT:{p}" for p in sorted(old_p - new_p))
        if mimat not in a.matures:
            lines.append(DiffLine(mimat, b.matures[mimat][0], ("NEW",) + adds))
        elif mimat not in b.matures:
            lines.append(DiffLine(mimat, a.matures[mimat][0], ("DELETE",) + removes))
        else:
            (oname, oseq), (nname, nseq) = a.matures[mimat], b.matures[mimat]
            tokens = (("SEQUENCE",) if oseq != nseq else ()) + (("NAME",) if oname != nname else ())
            if tokens or adds or removes:
                lines.append(DiffLine(mimat, nname, tokens + adds + removes))
    return lines


def snapshot_to_dat(snap: Snapshot) -> list:
    children: dict = {}
    for mimat, parents in snap.parents.items():
        for p in parents:
            children.setdefault(p, []).append(mimat)
    entries = []
    for mid in sorted(snap.hairpins):
        name, seq = snap.hairpins[mid]
        mts = tuple(MatureRef(m, *snap.matures[m]) for m in sorted(children.get(mid, ())))
        entries.append(DatEntry(mid, name, f"{name} stem-loop", mts, seq, ("PMID:0",)))
    return entries


def snapshot_to_fam(snap: Snapshot) -> list:
    entries = []
    for fid in sorted(snap.families):
        fam = snap.families[fid]
        members = tuple((m, snap.hairpins[m][0] if m in snap.hairpins else m) for m in sorted(fam.members))
        entries.append(FamilyEntry(fid, fam.family_name, members))
    return entries


def derive_dead(a: Snapshot, b: Snapshot, prior=()) -> list:
    """Cumulative dead list: ``prior`` plus hairpins present in ``a`` but not ``b``."""
    entries = list(prior)
    for mid in sorted(set(a.hairpins) - set(b.hairpins)):
        entries.append(DeadEntry(mid, a.hairpins[mid][0], b.forwards.get(mid), ()))
    return entries


def release_between(a: Snapshot, b: Snapshot, label: str, prior_dead=()) -> ReleaseFileSet:
    return ReleaseFileSet(
        label=label,
        dat=tuple(snapshot_to_dat(b)),
        diff=tuple(derive_diff(a, b)),
        dead=tuple(derive_dead(a, b, prior_dead)),
        fam=tuple(snapshot_to_fam(b)),
    )


# ---------------------------------------------------------------------------
# TSV persistence


def _cell(value) -> str:
    if value is None:
        return ""
    text = str(value)
    if "\t" in text or "\n" in text:
        raise ValueError(f"value not representable in TSV: {text!r}")
    return text


def dump_hairpin_history(history: History) -> str:
    return "".join(
        "\t".join(_cell(x) for x in (r.mima_id, r.change, r.name, r.sequence,
                                     r.first_appearance, r.last_appearance)) + "\n"
        for r in history.hairpin_records
    )


def dump_mature_history(history: History) -> str:
    return "".join(
        "\t".join(_cell(x) for x in (r.mimat, r.change, r.name, r.sequence, r.parent_hairpin or "-",
                                     r.first_appearance, r.last_appearance)) + "\n"
        for r in history.mature_records
    )


EVENT_COLUMNS = ("entity_id", "kind", "change", "at", "old_name", "new_name", "old_sequence",
                 "new_sequence", "parent", "forward_to", "cause")


def dump_events(history: History) -> str:
    out = io.StringIO()
    for ev in history.events:
        out.write("\t".join(_cell(getattr(ev, c)) for c in EVENT_COLUMNS) + "\n")
    return out.getvalue()


def dump_families(history: History) -> str:
    out = io.StringIO()
    for o in sorted(history.families):
        for fid in sorted(history.families[o]):
            fam = history.families[o][fid]
            for m in sorted(fam.members):
                out.write(f"{o}\t{fid}\t{_cell(fam.family_name)}\t{m}\n")
    return out.getvalue()


def _rows(text):
    return [line.split("\t") for line in text.split("\n") if line]


def load_history(hairpins_tsv: str, matures_tsv: str, events_tsv: str, families_tsv: str,
                 registry: VersionRegistry) -> History:
    """Rebuild a :class:`History` from its TSV exports."""
    hairpins = [HairpinHistoryRecord(r[0], ChangeTypeHairpin(r[1]), r[2], r[3], int(r[4]), int(r[5]))
                for r in _rows(hairpins_tsv)]
    matures = [MatureHistoryRecord(r[0], ChangeTypeMature(r[1]), r[2], r[3], None if r[4] == "-" else r[4],
                                   int(r[5]), int(r[6]))
               for r in _rows(matures_tsv)]
    events = []
    for r in _rows(events_tsv):
        r = r + [""] * (len(EVENT_COLUMNS) - len(r))
        values = dict(zip(EVENT_COLUMNS, r))
        kw = {k: (v or None) for k, v in values.items()}
        kw["at"] = int(values["at"])
        kw["cause"] = values["cause"]
        events.append(ChangeEvent(**kw))
    families: dict = {o: {} for o in range(1, registry.current + 1)}
    grouped: dict = {}
    for o, fid, name, member in _rows(families_tsv):
        grouped.setdefault((int(o), fid, name), set()).add(member)
    for (o, fid, name), members in grouped.items():
        families.setdefault(o, {})[fid] = FamilyRecord(fid, name, frozenset(members))
    return History(registry, hairpins, matures, events, families)
