from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from helpers import history_violations, seq, timeline
from mirlod.flatfile import DatEntry, DeadEntry, DiffLine, MatureRef
from mirlod.generator import generate
from mirlod.history import (
    ChangeOnMissing, InvalidChange, NewOnExisting, ReleaseFileSet, RphWithoutParentLink, Snapshot,
    SnapshotDatMismatch, UnknownEntity, apply_release, build_history, changes_at, derive_diff,
    dump_events, dump_families, dump_hairpin_history, dump_mature_history, load_history, read_release,
    record_valid_at, release_between, replay, snapshot_at, write_release,
)
from mirlod.versionstore import HairpinHistoryRecord, UnknownLabel, VersionRegistry


def dat(mid, name, sequence, *matures):
    return DatEntry(mid, name, f"{name} stem-loop", tuple(MatureRef(*m) for m in matures), sequence, ("PMID:1",))


@pytest.fixture(scope="module")
def edited_hairpin():
    edits = {
        13: lambda s: s.new_hairpin("MI0001364", "dre-mir-10b", seq(1)),
        16: lambda s: s.rename("MI0001364", "dre-mir-10b-1"),
        18: lambda s: s.reseq("MI0001364", seq(2)),
        20: lambda s: s.reseq("MI0001364", seq(3)),
    }
    releases, snaps = timeline(32, edits)
    return build_history(releases), snaps


# apply_release

def test_first_new_hairpin():
    files = ReleaseFileSet("1.0", (dat("MI0000001", "cel-let-7", "UACACUGUGG"),),
                           (DiffLine("MI0000001", "cel-let-7", ("NEW",)),))
    snap, events = apply_release(Snapshot.empty(), files)
    assert snap.hairpins == {"MI0000001": ("cel-let-7", "UACACUGUGG")}
    assert [(e.entity_id, e.change, e.at) for e in events] == [("MI0000001", "NEW", 1)]


def test_noop_release():
    files = ReleaseFileSet("1.0", (dat("MI0000001", "cel-let-7", "UACACUGUGG"),), None)
    prev, _ = apply_release(Snapshot.empty(), files)
    snap, events = apply_release(prev, replace(files, label="2.0", diff=()))
    assert events == []
    assert (snap.hairpins, snap.matures, snap.parents) == (prev.hairpins, prev.matures, prev.parents)


def test_name_and_sequence_change_carries_old_values():
    first = ReleaseFileSet("1.0", (dat("MI0004476", "mdv2-mir-M29", "ACGUACGU"),), None)
    prev, _ = apply_release(Snapshot.empty(), first)
    second = ReleaseFileSet("2.0", (dat("MI0004476", "mdv2-miR-M29-5p", "GGGUACGU"),),
                            (DiffLine("MI0004476", "mdv2-miR-M29-5p", ("SEQUENCE", "NAME")),))
    snap, [ev] = apply_release(prev, second)
    assert ev.change == "NS"
    assert (ev.old_name, ev.new_name) == ("mdv2-mir-M29", "mdv2-miR-M29-5p")
    assert (ev.old_sequence, ev.new_sequence) == ("ACGUACGU", "GGGUACGU")
    assert snap.hairpins["MI0004476"] == ("mdv2-miR-M29-5p", "GGGUACGU")


def _base():
    files = ReleaseFileSet("1.0", (dat("MI0000001", "a", "ACGU", ("MIMAT0000001", "a-5p", "CGU")),
                                   dat("MI0000002", "b", "GGGG")), None)
    return apply_release(Snapshot.empty(), files)[0]


@pytest.mark.parametrize("diff,dats,error", [
    ((DiffLine("MI0000002", "b", ("NEW",)),), None, NewOnExisting),
    ((DiffLine("MI0000009", "z", ("NAME",)),), None, ChangeOnMissing),
    ((DiffLine("MIMAT0000001", "a-5p", ("REMOVEPARENT:MI0000002",)),), None, RphWithoutParentLink),
    ((), "rename-b", SnapshotDatMismatch),
    ((DiffLine("MI0000002", "b", ("NEW", "NAME")),), None, InvalidChange),
    ((DiffLine("MI0000002", "b", ("FORWARD",)),), "drop-b", InvalidChange),
])
def test_replay_errors(diff, dats, error):
    prev = _base()
    entries = (dat("MI0000001", "a", "ACGU", ("MIMAT0000001", "a-5p", "CGU")), dat("MI0000002", "b", "GGGG"))
    if dats == "drop-b":
        entries = entries[:1]
    elif dats == "rename-b":
        entries = entries[:1] + (dat("MI0000002", "b2", "GGGG"),)
    with pytest.raises(error):
        apply_release(prev, ReleaseFileSet("2.0", entries, diff))


def test_forward_uses_dead_entry():
    prev = _base()
    files = ReleaseFileSet("2.0", (dat("MI0000001", "a", "ACGU", ("MIMAT0000001", "a-5p", "CGU")),),
                           (DiffLine("MI0000002", "b", ("FORWARD",)),),
                           (DeadEntry("MI0000002", "b", "MI0000001", ("duplicate entry",)),))
    snap, [ev] = apply_release(prev, files)
    assert snap.forwards == {"MI0000002": "MI0000001"}
    assert (ev.change, ev.forward_to, ev.cause, ev.old_name) == ("FW", "MI0000001", "duplicate entry", "b")


def test_forward_to_dead_target_rejected():
    prev = _base()
    files = ReleaseFileSet("2.0", (dat("MI0000001", "a", "ACGU", ("MIMAT0000001", "a-5p", "CGU")),),
                           (DiffLine("MI0000002", "b", ("FORWARD",)),),
                           (DeadEntry("MI0000002", "b", "MI0000777", ()),))
    with pytest.raises(InvalidChange):
        apply_release(prev, files)


# build_history

def test_hairpin_intervals(edited_hairpin):
    h, _ = edited_hairpin
    assert [(r.change, r.first_appearance, r.last_appearance) for r in h.state_records("MI0001364")] == [
        ("NEW", 13, 15), ("NAME", 16, 17), ("SEQ", 18, 19), ("SEQ", 20, 32)]


def test_mature_state_and_link_streams():
    edits = {
        1: lambda s: s.new_hairpin("MI0000021", "bfl-mir-79", seq(10)),
        28: lambda s: s.new_mature("MIMAT0009477", "bfl-miR-79", seq(11, 22), "MI0000021"),
        30: lambda s: (s.rename("MIMAT0009477", "bfl-miR-9-3p"), s.reseq("MIMAT0009477", seq(12, 22))),
    }
    h = build_history(timeline(32, edits)[0])
    recs = [(r.change, r.parent_hairpin, r.first_appearance, r.last_appearance)
            for r in h.mature_records if r.mimat == "MIMAT0009477"]
    assert sorted(recs, key=str) == sorted([("NEW", None, 28, 29), ("NS", None, 30, 32),
                                            ("APH", "MI0000021", 28, 32)], key=str)


def test_single_release_single_record():
    h = build_history(timeline(1, {1: lambda s: s.new_hairpin("MI0000001", "x", seq(1))})[0])
    assert [(r.first_appearance, r.last_appearance) for r in h.hairpin_records] == [(1, 1)]


def test_unlink_and_relink_alternate():
    edits = {
        1: lambda s: (s.new_hairpin("MI0000001", "a", seq(1)), s.new_hairpin("MI0000002", "b", seq(2)),
                      s.new_mature("MIMAT0000001", "m", seq(3, 20), "MI0000001")),
        3: lambda s: s.link("MIMAT0000001", "MI0000002"),
        5: lambda s: s.unlink("MIMAT0000001", "MI0000002"),
        7: lambda s: s.link("MIMAT0000001", "MI0000002"),
    }
    h = build_history(timeline(8, edits)[0])
    stream = [(r.change, r.first_appearance, r.last_appearance) for r in h.mature_records
              if r.parent_hairpin == "MI0000002"]
    assert stream == [("APH", 3, 4), ("RPH", 5, 6), ("APH", 7, 8)]
    assert h.parents_at("MIMAT0000001", 5) == ["MI0000001"]
    assert h.children_at("MI0000002", 8) == ["MIMAT0000001"]
    assert history_violations(h) == []


def test_deleted_hairpin_cannot_return():
    edits = {
        1: lambda s: s.new_hairpin("MI0000001", "a", seq(1)),
        2: lambda s: s.delete("MI0000001"),
        3: lambda s: s.new_hairpin("MI0000001", "a", seq(1)),
    }
    with pytest.raises(NewOnExisting):
        build_history(timeline(3, edits)[0])


def test_tombstone_exists_only_at_deletion():
    edits = {
        1: lambda s: (s.new_hairpin("MI0000104", "hsa-mir-101-9", seq(1)),
                      s.new_hairpin("MI0000739", "hsa-mir-101-1", seq(2))),
        3: lambda s: s.delete("MI0000104", forward_to="MI0000739", cause="duplicate entry"),
    }
    h = build_history(timeline(5, edits)[0])
    assert [h.exists_at("MI0000104", o) for o in range(1, 6)] == [True, True, True, False, False]
    assert [h.alive_at("MI0000104", o) for o in range(1, 6)] == [True, True, False, False, False]
    assert h.forward_chain("MI0000104") == "MI0000739"
    [dead] = h.dead_records()
    assert (dead.mima_id, dead.forward_to, dead.comment, dead.deleted_in) == ("MI0000104", "MI0000739", "duplicate entry", 3)


# snapshot_at / record_valid_at / changes_at

def test_snapshot_mid_interval(edited_hairpin):
    h, _ = edited_hairpin
    assert snapshot_at(h, h.registry, 17).hairpins["MI0001364"] == ("dre-mir-10b-1", seq(1))


def test_snapshot_at_current_is_final(edited_hairpin):
    h, snaps = edited_hairpin
    got = snapshot_at(h, None, h.registry.current_label)
    assert (got.hairpins, got.matures, got.parents) == (snaps[-1].hairpins, snaps[-1].matures, snaps[-1].parents)


def test_snapshot_unknown_label(edited_hairpin):
    h, _ = edited_hairpin
    with pytest.raises(UnknownLabel):
        snapshot_at(h, None, "99.9")


def test_record_valid_at():
    rec = HairpinHistoryRecord("MI0001364", "NAME", "dre-mir-10b-1", "ACGU", 16, 17)
    assert record_valid_at(rec, 16)
    assert not record_valid_at(rec, 18)
    assert [o for o in range(1, 33) if record_valid_at(rec, o)] == list(range(16, 18))


def test_changes_at(edited_hairpin):
    h, _ = edited_hairpin
    [ev] = changes_at(h, "MI0001364", 16)
    assert (ev.change, ev.old_name, ev.new_name) == ("NAME", "dre-mir-10b", "dre-mir-10b-1")
    assert changes_at(h, "MI0001364", 17) == []
    with pytest.raises(UnknownEntity):
        changes_at(h, "MI0009999", 1)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_generated_history_matches_replay(seed):
    corpus = generate(10, 15, 25, seed)
    h = build_history(corpus.releases)
    for o, snap in enumerate(replay(corpus.releases), 1):
        got = snapshot_at(h, None, o)
        assert (got.hairpins, got.matures, got.parents, got.forwards, got.families) == \
            (snap.hairpins, snap.matures, snap.parents, snap.forwards, snap.families)
    assert history_violations(h) == []
    partition = [ev for eid in h.entities() for o in range(1, h.current + 1) for ev in changes_at(h, eid, o)]
    assert sorted(partition, key=repr) == sorted(h.events, key=repr)


# derive_diff

def test_derive_diff_identity():
    snap = _base()
    assert derive_diff(snap, snap) == []


def test_derive_diff_single_insertion():
    a = _base()
    b = replace(a, hairpins={**a.hairpins, "MI0000099": ("hsa-mir-99", "ACGU")})
    assert derive_diff(a, b) == [DiffLine("MI0000099", "hsa-mir-99", ("NEW",))]


hairpin_ids = st.sets(st.integers(1, 30).map(lambda i: f"MI{i:07d}"), max_size=8)


@st.composite
def snapshot_pairs(draw):
    def snapshot(at, ids, mature_ids, forward_from=()):
        hairpins = {m: (draw(st.sampled_from(["x", "y"])) + m[-2:], draw(st.sampled_from(["ACGU", "GGCC"])))
                    for m in sorted(ids)}
        matures, parents = {}, {}
        for mm in sorted(mature_ids):
            ps = draw(st.sets(st.sampled_from(sorted(ids)), min_size=1, max_size=2)) if ids else set()
            if not ps:
                continue
            matures[mm] = (draw(st.sampled_from(["m", "n"])) + mm[-2:], draw(st.sampled_from(["CGU", "UUA"])))
            parents[mm] = frozenset(ps)
        forwards = {}
        for f in sorted(forward_from):
            if ids and draw(st.booleans()):
                forwards[f] = draw(st.sampled_from(sorted(ids)))
        return Snapshot(at, hairpins, matures, parents, {}, forwards)

    mature_ids = st.sets(st.integers(1, 30).map(lambda i: f"MIMAT{i:07d}"), max_size=6)
    ids_a = draw(hairpin_ids)
    a = snapshot(1, ids_a, draw(mature_ids))
    ids_b = draw(hairpin_ids)
    b = snapshot(2, ids_b, draw(mature_ids), forward_from=ids_a - ids_b)
    return a, b


@settings(max_examples=200)
@given(snapshot_pairs())
def test_derive_then_apply_reproduces_target(pair):
    a, b = pair
    files = release_between(a, b, "2.0")
    got, _ = apply_release(a, files)
    assert (got.hairpins, got.matures, got.parents, got.forwards) == (b.hairpins, b.matures, b.parents, b.forwards)


# persistence

def test_tsv_round_trip():
    corpus = generate(8, 20, 30, 7)
    h = build_history(corpus.releases)
    again = load_history(dump_hairpin_history(h), dump_mature_history(h), dump_events(h), dump_families(h),
                         VersionRegistry(h.registry.labels))
    assert again.hairpin_records == h.hairpin_records
    assert again.mature_records == h.mature_records
    assert again.events == h.events
    assert again.families == h.families


def test_release_directory_round_trip(tmp_path):
    corpus = generate(3, 5, 8, 1)
    for files in corpus.releases:
        write_release(tmp_path / files.label, files)
    read = [read_release(tmp_path / f.label, f.label) for f in corpus.releases]
    assert read == list(corpus.releases)
