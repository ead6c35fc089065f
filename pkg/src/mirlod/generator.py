"""Synthetic release sequences and relational tables for tests and demos.

Everything is drawn from one seeded ``random.Random`` so a seed fully
determines the output tree.
"""

from __future__ import annotations

import os
import random
from dataclasses import dataclass, field

from .flatfile import DeadEntry
from .history import Snapshot, release_between, write_release
from .versionstore import (
    SCHEMAS, FamilyRecord, HairpinRow, KeggRow, MatureHairpinRow, MatureRow, MatureTissueRow,
    MicroT5Row, ProteinGeneRow, GeneKeggRow, TableSet, TissueRow, TranscriptRow, VersionRegistry,
    dump_versions,
)

MIRBASE_LABELS = ("1.0", "1.1", "1.2", "1.3", "1.4", "1.5", "2.0", "2.1", "2.2", "3.0", "3.1",
                  "4.0", "5.0", "5.1", "6.0", "7.0", "7.1", "8.0", "8.1", "8.2", "9.0", "9.1",
                  "9.2", "10.0", "10.1", "11.0", "12.0", "13.0", "14.0", "15.0", "16.0", "17.0",
                  "18.0")

# per-entity, per-release probabilities
P_HAIRPIN = {"NAME": 0.02, "SEQ": 0.02, "NS": 0.01, "DEL": 0.01, "FW": 0.01}
P_MATURE = {"NAME": 0.02, "SEQ": 0.02, "NS": 0.01, "DEL": 0.01, "APH": 0.015, "RPH": 0.01}

SPECIES = ("hsa", "mmu", "rno", "dme", "cel")
CHROMOSOMES = tuple(str(i) for i in range(1, 23)) + ("X", "Y")
TISSUES = ("brain", "liver", "heart", "lung", "kidney", "muscle", "blood", "skin")
CAUSES = ("withdrawn after review", "merged into a related entry", "sequence not confirmed")


class GeneratorError(ValueError):
    pass


def release_labels(n: int) -> list:
    labels = list(MIRBASE_LABELS[:n])
    major = 19
    while len(labels) < n:
        labels.append(f"{major}.0")
        major += 1
    return labels


@dataclass
class Corpus:
    registry: VersionRegistry
    releases: list                       # ReleaseFileSet, oldest first
    snapshots: list                      # Snapshot after each release
    tables: TableSet
    sameas: list = field(default_factory=list)   # (classmap, key, iri)


class _Gen:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.next_hairpin = 1
        self.next_mature = 1
        self.family_of: dict = {}
        self.families: dict = {}

    def seq(self, lo, hi):
        return "".join(self.rng.choice("ACGU") for _ in range(self.rng.randint(lo, hi)))

    def new_hairpin(self):
        mid = f"MI{self.next_hairpin:07d}"
        sp = self.rng.choice(SPECIES)
        name = f"{sp}-mir-{self.next_hairpin}"
        self.next_hairpin += 1
        if self.families and self.rng.random() < 0.5:
            fid = self.rng.choice(sorted(self.families))
        else:
            fid = f"MIPF{len(self.families) + 1:07d}"
            self.families[fid] = f"mir-{self.next_hairpin - 1}"
        self.family_of[mid] = fid
        return mid, (name, self.seq(60, 110))

    def new_mature(self):
        mimat = f"MIMAT{self.next_mature:07d}"
        sp = self.rng.choice(SPECIES)
        name = f"{sp}-miR-{self.next_mature}"
        self.next_mature += 1
        return mimat, (name, self.seq(18, 25))

    def renamed(self, name):
        return name + self.rng.choice("abcdefgh")


def _targets(n_releases, final):
    """Live-count targets growing linearly towards ``final``."""
    return [max(1, round(final * (i + 1) / n_releases)) for i in range(n_releases)]


def _families(g: _Gen, hairpins) -> dict:
    members: dict = {}
    for mid in hairpins:
        members.setdefault(g.family_of[mid], set()).add(mid)
    return {fid: FamilyRecord(fid, g.families[fid], frozenset(m)) for fid, m in members.items()}


def _evolve(g: _Gen, prev: Snapshot, h_target: int, m_target: int, first: bool):
    rng = g.rng
    hairpins = dict(prev.hairpins)
    matures = dict(prev.matures)
    parents = {k: set(v) for k, v in prev.parents.items()}
    forwards, causes = {}, {}

    if not first:
        removed = []
        for mid in sorted(prev.hairpins):
            r = rng.random()
            acc = 0.0
            for change, p in P_HAIRPIN.items():
                acc += p
                if r < acc:
                    break
            else:
                continue
            name, seq = hairpins[mid]
            if change == "NAME":
                hairpins[mid] = (g.renamed(name), seq)
            elif change == "SEQ":
                hairpins[mid] = (name, g.seq(60, 110))
            elif change == "NS":
                hairpins[mid] = (g.renamed(name), g.seq(60, 110))
            elif len(hairpins) - len(removed) > 2:
                removed.append((mid, change))
        for mid, change in removed:
            del hairpins[mid]
            causes[mid] = rng.choice(CAUSES)
        survivors = sorted(hairpins)
        for mid, change in removed:
            if change == "FW":
                forwards[mid] = rng.choice(survivors)
        for mimat in sorted(prev.matures):
            r = rng.random()
            acc = 0.0
            change = None
            for c, p in P_MATURE.items():
                acc += p
                if r < acc:
                    change = c
                    break
            name, seq = matures[mimat]
            if change == "NAME":
                matures[mimat] = (g.renamed(name), seq)
            elif change == "SEQ":
                matures[mimat] = (name, g.seq(18, 25))
            elif change == "NS":
                matures[mimat] = (g.renamed(name), g.seq(18, 25))
            elif change == "DEL":
                del matures[mimat]
                parents.pop(mimat, None)
                continue
            elif change == "APH":
                options = [h for h in survivors if h not in parents[mimat]]
                if options:
                    parents[mimat].add(rng.choice(options))
            elif change == "RPH" and len(parents[mimat]) > 1:
                parents[mimat].discard(rng.choice(sorted(parents[mimat])))
            # links to removed hairpins go; orphans get a new parent or are deleted
            parents[mimat] &= hairpins.keys()
            if not parents[mimat]:
                if rng.random() < 0.5:
                    parents[mimat].add(rng.choice(survivors))
                else:
                    del matures[mimat]
                    del parents[mimat]

    while len(hairpins) < h_target:
        mid, value = g.new_hairpin()
        hairpins[mid] = value
    live = sorted(hairpins)
    while len(matures) < m_target:
        mimat, value = g.new_mature()
        matures[mimat] = value
        k = 1 if rng.random() < 0.85 else 2
        parents[mimat] = set(rng.sample(live, min(k, len(live))))
    snap = Snapshot(prev.at + 1, hairpins, matures, {k: frozenset(v) for k, v in parents.items()},
                    _families(g, hairpins), forwards)
    return snap, causes


def generate_releases(n_releases: int, n_hairpins: int, n_matures: int, seed: int):
    """Release file sets plus the snapshot after each one; final live counts are exactly
    ``n_hairpins`` and ``n_matures``."""
    if n_releases < 1:
        raise GeneratorError("need at least one release")
    if n_hairpins < 3 or n_matures < 1:
        raise GeneratorError("need at least 3 hairpins and 1 mature")
    rng = random.Random(seed)
    g = _Gen(rng)
    labels = release_labels(n_releases)
    h_targets = _targets(n_releases, n_hairpins)
    m_targets = _targets(n_releases, n_matures)
    h_targets = [max(3, t) for t in h_targets]
    snap = Snapshot.empty()
    releases, snapshots, dead = [], [], []
    for i, label in enumerate(labels):
        nxt, causes = _evolve(g, snap, h_targets[i], m_targets[i], first=(i == 0))
        files = release_between(snap, nxt, label, ())
        for entry in files.dead:
            dead.append(DeadEntry(entry.mima_id, entry.name, entry.forward_to, (causes[entry.mima_id],)))
        files = type(files)(files.label, files.dat, files.diff, tuple(dead), files.fam)
        releases.append(files)
        snapshots.append(nxt)
        snap = nxt
    return VersionRegistry(labels), releases, snapshots


def generate_tables(g_rng: random.Random, snap: Snapshot, species: dict):
    """Relational tables consistent with the final snapshot."""
    rng = g_rng
    rows: dict = {name: [] for name in SCHEMAS}
    for mid in sorted(snap.hairpins):
        name, seq = snap.hairpins[mid]
        start = rng.randint(1000, 10_000_000)
        rows["hairpins"].append(HairpinRow(mid, name, seq, species.get(mid, "hsa"), rng.choice(CHROMOSOMES),
                                           rng.choice("+-"), start, start + len(seq) - 1))
    for mimat in sorted(snap.matures):
        name, seq = snap.matures[mimat]
        rows["matures"].append(MatureRow(mimat, name, seq, species.get(mimat, "hsa")))
        for p in sorted(snap.parents[mimat]):
            rows["mature_hairpin"].append(MatureHairpinRow(mimat, p))
    n_transcripts = max(4, len(snap.matures) // 2)
    for tid in range(1, n_transcripts + 1):
        start = rng.randint(1000, 10_000_000)
        rows["transcripts"].append(TranscriptRow(
            tid, f"ENST{tid:011d}", rng.choice(SPECIES), rng.choice("+-"),
            f"chr{rng.choice(CHROMOSOMES)}:{start}-{start + rng.randint(200, 5000)}"))
    n_keggs = max(2, n_transcripts // 40)
    for k in range(1, n_keggs + 1):
        rows["keggs"].append(KeggRow(f"hsa{k:05d}", f"pathway {k}"))
    for tid in range(1, n_transcripts + 1):
        if rng.random() < 0.8:
            gid = f"ENSG{tid:011d}"
            rows["proteingenes"].append(ProteinGeneRow(gid, f"ENST{tid:011d}", f"GENE{tid}",
                                                       f"protein coding gene {tid}"))
            for k in sorted(rng.sample(range(1, n_keggs + 1), rng.randint(0, min(2, n_keggs)))):
                rows["gene_kegg"].append(GeneKeggRow(gid, f"hsa{k:05d}"))
    for sp in SPECIES:
        for t in TISSUES:
            rows["tissues"].append(TissueRow(t, sp))
    for mimat in sorted(snap.matures):
        for tid in sorted(rng.sample(range(1, n_transcripts + 1), rng.randint(0, 3))):
            rows["microt5"].append(MicroT5Row(mimat, tid))
        sp = species.get(mimat, "hsa")
        for t in sorted(rng.sample(TISSUES, rng.randint(0, 2))):
            rows["mature_tissue"].append(MatureTissueRow(mimat, t, sp))
    return TableSet(rows)


def generate(n_releases: int, n_hairpins: int, n_matures: int, seed: int) -> Corpus:
    registry, releases, snapshots = generate_releases(n_releases, n_hairpins, n_matures, seed)
    final = snapshots[-1]
    # names start with the species code, which renames keep
    species = {eid: _species_from_name(value[0])
               for eid, value in list(final.hairpins.items()) + list(final.matures.items())}
    rng = random.Random(f"{seed}-tables")
    tables = generate_tables(rng, final, species)
    sameas = [("Hairpins", mid, f"http://www.mirbase.org/cgi-bin/mirna_entry.pl?acc={mid}")
              for mid in sorted(final.hairpins)]
    return Corpus(registry, releases, snapshots, tables, sameas)


def _species_from_name(name: str) -> str:
    prefix = name.split("-", 1)[0]
    return prefix if prefix in SPECIES else "hsa"


def write_corpus(corpus: Corpus, out_dir) -> None:
    """Lay out ``releases/<label>/``, ``releases/versions.txt`` and ``tables/`` (with ``sameas.tsv``)."""
    rel_dir = os.path.join(out_dir, "releases")
    os.makedirs(rel_dir, exist_ok=True)
    for files in corpus.releases:
        write_release(os.path.join(rel_dir, files.label), files)
    with open(os.path.join(rel_dir, "versions.txt"), "w", encoding="utf-8", newline="") as fh:
        fh.write(dump_versions(corpus.registry))
    corpus.tables.write(os.path.join(out_dir, "tables"))
    with open(os.path.join(out_dir, "tables", "sameas.tsv"), "w", encoding="utf-8", newline="") as fh:
        for cm, key, iri in corpus.sameas:
            fh.write(f"{cm}\t{key}\t{iri}\n")
