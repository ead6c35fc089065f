import os

import pytest
from hypothesis import given, strategies as st

from mirlod.versionstore import (
    SCHEMAS, DuplicateKey, DuplicateLabel, HairpinRow, MalformedRow, MatureRow, MicroT5Row,
    MissingFile, ProteinGeneRow, TableSet, TranscriptRow, UnknownLabel, VersionRegistry,
    dump_versions, load_tables, load_versions, parse_table, validate,
)

HAIRPIN_LINE = "MI0000005\tcel-mir-2\tUAUCACAGCCAGCUUUGAUGUGC\tcel\tX\t+\t100\t200\n"


def write_tables(directory, **texts):
    os.makedirs(directory, exist_ok=True)
    for name, schema in SCHEMAS.items():
        with open(os.path.join(directory, schema.filename), "w", encoding="utf-8") as fh:
            fh.write(texts.get(name, ""))


def consistent_tables():
    return TableSet({
        "matures": [MatureRow("MIMAT0000115", "dme-miR-10*", "ACAAAUUCGGAUCUACAGGGU", "dme")],
        "transcripts": [TranscriptRow(99, "ENST000001", "dme", "+", "2R:100-900")],
        "proteingenes": [ProteinGeneRow("ENSG000001", "ENST000001", "abd-A", "abdominal A")],
        "microt5": [MicroT5Row("MIMAT0000115", 99)],
    })


# registry

def test_first_registration_gets_ordinal_one():
    assert VersionRegistry().register("1.3") == 1


def test_current_after_32_labels():
    reg = VersionRegistry(f"{i}.0" for i in range(1, 33))
    assert reg.current == 32
    assert reg.current_label == "32.0"


def test_duplicate_label_rejected():
    reg = VersionRegistry(["8.0"])
    with pytest.raises(DuplicateLabel):
        reg.register("8.0")


def test_compare_by_registration_order():
    reg = VersionRegistry(["1.3", "8.0", "16.0"])
    assert reg.compare("1.3", "8.0") == -1
    assert reg.compare("8.0", "8.0") == 0
    assert reg.compare("16.0", "8.0") == 1


def test_unknown_label():
    reg = VersionRegistry(["1.0"])
    with pytest.raises(UnknownLabel):
        reg.ordinal("2.0")
    with pytest.raises(UnknownLabel):
        reg.label(2)


@given(st.lists(st.from_regex(r"[0-9]{1,3}\.[0-9]", fullmatch=True), unique=True, max_size=40))
def test_ordinals_are_a_bijection(labels):
    reg = VersionRegistry(labels)
    assert [reg.ordinal(l) for l in labels] == list(range(1, len(labels) + 1))
    assert [reg.label(o) for o in range(1, len(labels) + 1)] == labels


def test_versions_manifest_round_trip(tmp_path):
    reg = VersionRegistry(["1.0", "8.0", "8.1", "9.0"])
    path = tmp_path / "versions.txt"
    path.write_text(dump_versions(reg))
    assert load_versions(path) == reg


def test_versions_manifest_missing(tmp_path):
    with pytest.raises(MissingFile):
        load_versions(tmp_path / "versions.txt")


# tables

def test_load_single_hairpin_round_trip(tmp_path):
    write_tables(tmp_path, hairpins=HAIRPIN_LINE)
    tables = load_tables(tmp_path)
    assert list(tables.hairpins) == ["MI0000005"]
    row = tables.get("hairpins", "MI0000005")
    assert (row.name, row.chromosome, row.start, row.end) == ("cel-mir-2", "X", 100, 200)
    assert tables.dump("hairpins") == HAIRPIN_LINE


def test_empty_directory_is_missing_file(tmp_path):
    with pytest.raises(MissingFile):
        load_tables(tmp_path)


def test_duplicate_key(tmp_path):
    line = "MI0000001\tcel-let-7\tUACUAUACAACC\tcel\tX\t+\t1\t12\n"
    write_tables(tmp_path, hairpins=line + line.replace("cel-let-7", "cel-let-7b"))
    with pytest.raises(DuplicateKey) as err:
        load_tables(tmp_path)
    assert err.value.line == 2


@pytest.mark.parametrize("line", [
    "MI0000005\tcel-mir-2\tUAUCA\tcel\tX\t+\t100\n",          # short row
    "MI0000005\tcel-mir-2\tUAUCA\tcel\tX\t*\t100\t200\n",     # bad strand
    "MI0000005\tcel-mir-2\tUAUCA\tcel\tX\t+\t200\t100\n",     # end before start
    "MIMAT000005\tcel-mir-2\tUAUCA\tcel\tX\t+\t100\t200\n",   # wrong id family
])
def test_malformed_row_reports_line(tmp_path, line):
    write_tables(tmp_path, hairpins=HAIRPIN_LINE.replace("MI0000005", "MI0000006") + line)
    with pytest.raises(MalformedRow) as err:
        load_tables(tmp_path)
    assert err.value.line == 2


row_text = st.text(st.characters(min_codepoint=33, max_codepoint=126, exclude_characters="\t"), min_size=1, max_size=8)


@given(st.dictionaries(st.integers(0, 9999999), st.tuples(row_text, st.text("ACGU", min_size=1, max_size=30),
                                                          st.integers(0, 10**6), st.integers(0, 500)),
                       max_size=20))
def test_hairpin_table_round_trip(rows):
    items = [HairpinRow(f"MI{k:07d}", name, s, "hsa", "1", "-", start, start + span)
             for k, (name, s, start, span) in rows.items()]
    tables = TableSet({"hairpins": items})
    text = tables.dump("hairpins")
    again = TableSet({"hairpins": parse_table(SCHEMAS["hairpins"], text)})
    assert again.dump("hairpins") == text
    assert sorted(again.rows("hairpins"), key=lambda r: r.mima_id) == sorted(items, key=lambda r: r.mima_id)


# integrity

def test_dangling_microt5_transcript():
    tables = TableSet({
        "matures": [MatureRow("MIMAT0000115", "dme-miR-10*", "ACAAAUUCGG", "dme")],
        "microt5": [MicroT5Row("MIMAT0000115", 99)],
    })
    violations = validate(tables)
    assert len(violations) == 1
    assert (violations[0].table, violations[0].column) == ("microt5", "tid")


def test_consistent_fixture_has_no_violations():
    assert validate(consistent_tables()) == []


def test_proteingene_with_missing_transcript():
    full = consistent_tables()
    rows = {name: full.rows(name) for name in SCHEMAS}
    rows["transcripts"] = []
    rows["microt5"] = []
    violations = validate(TableSet(rows))
    assert len(violations) == 1
    assert (violations[0].table, violations[0].column) == ("proteingenes", "enstid")
