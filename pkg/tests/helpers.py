"""Hand-built release timelines and history invariant checks shared by the tests."""

from __future__ import annotations

import hashlib
from dataclasses import replace

from mirlod.flatfile import DeadEntry
from mirlod.generator import release_labels
from mirlod.history import Snapshot, release_between
from mirlod.versionstore import (
    SCHEMAS, FamilyRecord, HairpinRow, LINK_CHANGES, MatureHairpinRow, MatureRow, TableSet,
    TERMINAL_CHANGES,
)


class State:
    """Mutable live state edited by timeline callbacks."""

    def __init__(self, snap: Snapshot):
        self.hairpins = dict(snap.hairpins)
        self.matures = dict(snap.matures)
        self.parents = {k: set(v) for k, v in snap.parents.items()}
        self.forwards = {}
        self.causes = {}

    # hairpins
    def new_hairpin(self, mid, name, seq):
        self.hairpins[mid] = (name, seq)

    def rename(self, eid, name):
        table = self.hairpins if eid in self.hairpins else self.matures
        table[eid] = (name, table[eid][1])

    def reseq(self, eid, seq):
        table = self.hairpins if eid in self.hairpins else self.matures
        table[eid] = (table[eid][0], seq)

    def delete(self, eid, forward_to=None, cause="removed"):
        if eid in self.hairpins:
            del self.hairpins[eid]
            self.causes[eid] = cause
            if forward_to:
                self.forwards[eid] = forward_to
            for m in list(self.parents):
                self.parents[m].discard(eid)
        else:
            del self.matures[eid]
            self.parents.pop(eid, None)

    # matures
    def new_mature(self, mimat, name, seq, *parents):
        self.matures[mimat] = (name, seq)
        self.parents[mimat] = set(parents)

    def link(self, mimat, parent):
        self.parents[mimat].add(parent)

    def unlink(self, mimat, parent):
        self.parents[mimat].discard(parent)

    def snapshot(self, at):
        fams = {}
        for mid in self.hairpins:
            fams.setdefault("MIPF0000001", set()).add(mid)
        families = {fid: FamilyRecord(fid, "mir-fixture", frozenset(m)) for fid, m in fams.items()}
        return Snapshot(at, dict(self.hairpins), dict(self.matures),
                        {k: frozenset(v) for k, v in self.parents.items() if v}, families, dict(self.forwards))


def timeline(n_releases, edits, labels=None):
    """Release file sets for ``n_releases`` releases; ``edits[o](state)`` mutates release ``o``."""
    labels = labels or release_labels(n_releases)
    prev = Snapshot.empty()
    dead, releases, snapshots = [], [], []
    for o in range(1, n_releases + 1):
        state = State(prev)
        if o in edits:
            edits[o](state)
        snap = state.snapshot(o)
        files = release_between(prev, snap, labels[o - 1])
        for entry in files.dead:
            dead.append(DeadEntry(entry.mima_id, entry.name, entry.forward_to,
                                  (state.causes.get(entry.mima_id, "removed"),)))
        releases.append(replace(files, dead=tuple(dead)))
        snapshots.append(snap)
        prev = snap
    return releases, snapshots


def tables_for(snap: Snapshot, chromosome=lambda mid: "1", species="hsa") -> TableSet:
    """Minimal consistent tables for the live state ``snap``."""
    rows = {name: [] for name in SCHEMAS}
    for i, mid in enumerate(sorted(snap.hairpins)):
        name, seq = snap.hairpins[mid]
        rows["hairpins"].append(HairpinRow(mid, name, seq, species, chromosome(mid), "+", 100 * i,
                                           100 * i + len(seq) - 1))
    for mimat in sorted(snap.matures):
        name, seq = snap.matures[mimat]
        rows["matures"].append(MatureRow(mimat, name, seq, species))
        for p in sorted(snap.parents.get(mimat, ())):
            rows["mature_hairpin"].append(MatureHairpinRow(mimat, p))
    return TableSet(rows)


def seq(i, length=60):
    """Deterministic RNA sequence for an integer (distinct integers give distinct sequences)."""
    out, block = [], 0
    while len(out) < length:
        digest = hashlib.sha256(f"{i}:{block}".encode()).digest()
        out.extend("ACGU"[b % 4] for b in digest)
        block += 1
    return "".join(out[:length])


def history_violations(h) -> list:
    """Broken structural invariants of a History (empty when all hold)."""
    problems = []
    current = h.current
    for eid in h.entities():
        recs = h.state_records(eid)
        if recs[0].change != "NEW":
            problems.append(f"{eid}: first record is {recs[0].change}, not NEW")
        for a, b in zip(recs, recs[1:]):
            if b.first_appearance != a.last_appearance + 1:
                problems.append(f"{eid}: gap or overlap between {a} and {b}")
            if a.change in TERMINAL_CHANGES:
                problems.append(f"{eid}: record after {a.change} at {a.first_appearance}")
        for r in recs:
            if r.first_appearance > r.last_appearance:
                problems.append(f"{eid}: empty interval {r}")
        if recs[-1].last_appearance != current:
            problems.append(f"{eid}: last record not closed at current release")
    for rec in h.mature_records:
        if rec.change in LINK_CHANGES:
            continue
        if rec.parent_hairpin is not None:
            problems.append(f"{rec.mimat}: state record carries a parent")
    links = {}
    for rec in h.mature_records:
        if rec.change in LINK_CHANGES:
            links.setdefault((rec.mimat, rec.parent_hairpin), []).append(rec)
    for (mimat, parent), recs in links.items():
        recs.sort(key=lambda r: r.first_appearance)
        if recs[0].change != "APH":
            problems.append(f"{mimat}->{parent}: link stream starts with {recs[0].change}")
        for a, b in zip(recs, recs[1:]):
            if b.first_appearance != a.last_appearance + 1:
                problems.append(f"{mimat}->{parent}: link gap")
            if a.change == b.change:
                problems.append(f"{mimat}->{parent}: repeated {a.change}")
        for r in recs:
            if r.change != "APH":
                continue
            for o in range(r.first_appearance, r.last_appearance + 1):
                if not (h.alive_at(mimat, o) and h.alive_at(parent, o)):
                    problems.append(f"{mimat}->{parent}: link live at {o} while an end is not")
                    break
    return problems
