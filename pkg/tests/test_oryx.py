from datetime import timedelta

import pytest

import gen
from olac.datestamp import format_datestamp
from olac.errors import (
    BadArgumentError,
    DuplicateIdError,
    NoOpWarning,
    NotFoundError,
    RecordRejected,
    SerializeError,
    ValidationError,
)
from olac.metadata import MetadataRecord, QualifiedElement
from olac.oryx import (
    RepositoryRecord,
    delete_record,
    new_repository,
    parse_repository,
    select_records,
    serialize_repository,
    upsert_record,
)

T0 = gen.T0

THREE = b"""<?xml version="1.0" encoding="UTF-8"?>
<repository id="demo">
  <description>
    <archiveName>Demo Archive</archiveName>
    <archiveURL>http://demo.example.org/</archiveURL>
    <curator>Jo Curator</curator>
    <location>Philadelphia</location>
    <synopsis>A small fixture.</synopsis>
  </description>
  <records>
    <record id="zeta" datestamp="2002-03-01T00:00:00Z">
      <olac xmlns="http://purl.org/dc/elements/1.1/"><title>Z</title></olac>
    </record>
    <record id="alpha" datestamp="2002-01-01T00:00:00Z">
      <olac xmlns="http://purl.org/dc/elements/1.1/"><title>A</title></olac>
    </record>
    <record id="gone" datestamp="2002-02-01T00:00:00Z" status="deleted"/>
  </records>
</repository>
"""


def _title(text):
    return MetadataRecord((QualifiedElement("title", text),))


def test_readback_in_file_order():
    repo = parse_repository(THREE)
    assert [r.local_id for r in repo.records] == ["zeta", "alpha", "gone"]
    assert repo.description.curator == "Jo Curator"
    assert repo.get("gone").deleted and repo.get("gone").metadata is None
    assert parse_repository(serialize_repository(repo)) == repo


def test_empty_repository():
    repo = new_repository("empty", gen.description("empty"))
    again = parse_repository(serialize_repository(repo))
    assert again.records == () and again == repo


def test_random_repositories_round_trip():
    rng = gen.seeded(21)
    for _ in range(3):
        repo = gen.repository(rng, 200)
        text = serialize_repository(repo)
        assert parse_repository(text) == repo
        assert serialize_repository(parse_repository(text)) == text


@pytest.mark.parametrize("doc, error", [
    (THREE.replace(b'id="alpha"', b'id="zeta"'), DuplicateIdError),
    (THREE.replace(b"<curator>Jo Curator</curator>", b""), ValidationError),
    (THREE.replace(b'id="demo"', b'id="9demo"'), ValidationError),
    (THREE.replace(b'id="gone"', b'id="gone" sets="nope"'), ValidationError),
    (THREE.replace(b'datestamp="2002-01-01T00:00:00Z"', b'datestamp="yesterday"'),
     ValidationError),
])
def test_invalid_documents(doc, error):
    with pytest.raises(error):
        parse_repository(doc)


def test_missing_description_fields_are_named():
    with pytest.raises(ValidationError) as info:
        parse_repository(THREE.replace(b"<curator>Jo Curator</curator>", b""))
    assert "curator" in info.value.fields


def test_serialize_refuses_broken_invariants():
    repo = new_repository("demo", gen.description("demo"))
    broken = repo.__class__(repo.repository_id, repo.description, (
        RepositoryRecord("a", T0, "active", _title("x")),
        RepositoryRecord("a", T0, "active", _title("y")),
    ))
    with pytest.raises(SerializeError):
        serialize_repository(broken)


def test_upsert_insert_and_replace():
    repo = new_repository("demo", gen.description("demo"))
    repo = upsert_record(repo, "a", _title("one"), T0)
    assert len(repo.records) == 1 and repo.records[0].datestamp == T0
    later = T0 + timedelta(hours=1)
    repo = upsert_record(repo, "a", _title("two"), later)
    assert len(repo.records) == 1
    assert repo.records[0].datestamp == later
    assert repo.records[0].metadata == _title("two")


def test_upsert_rejects_invalid_metadata():
    repo = new_repository("demo", gen.description("demo"))
    bad = MetadataRecord((QualifiedElement("subject", "", "olac:language", "x-sil-NOPE"),))
    with pytest.raises(RecordRejected) as info:
        upsert_record(repo, "a", bad, T0)
    assert info.value.findings
    with pytest.raises(ValidationError):
        upsert_record(repo, "has space", _title("x"), T0)


def test_delete_semantics():
    repo = upsert_record(new_repository("demo", gen.description("demo")), "a", _title("x"), T0)
    later = T0 + timedelta(minutes=5)
    repo = delete_record(repo, "a", later)
    assert repo.records[0].deleted and repo.records[0].datestamp == later
    with pytest.warns(NoOpWarning):
        assert delete_record(repo, "a", later + timedelta(1)) == repo
    with pytest.raises(NotFoundError):
        delete_record(repo, "missing", later)
    repo = upsert_record(repo, "a", _title("back"), later + timedelta(minutes=1))
    assert not repo.records[0].deleted and repo.records[0].metadata == _title("back")


def test_random_edits_match_map_replay():
    """Replay upserts and deletes on a plain dict and compare."""
    rng = gen.seeded(8)
    for trial in range(5):
        repo = new_repository("demo", gen.description("demo"))
        expected = {}  # id -> (datestamp, deleted, metadata)
        order = []
        clock = T0
        for _ in range(50):
            clock += timedelta(seconds=rng.randint(1, 600))
            local_id = "r%d" % rng.randrange(12)
            if rng.random() < 0.3:
                if local_id not in expected:
                    with pytest.raises(NotFoundError):
                        delete_record(repo, local_id, clock)
                elif expected[local_id][1]:
                    with pytest.warns(NoOpWarning):
                        repo = delete_record(repo, local_id, clock)
                else:
                    repo = delete_record(repo, local_id, clock)
                    expected[local_id] = (clock, True, None)
            else:
                md = gen.record(rng, max_elements=4)
                repo = upsert_record(repo, local_id, md, clock)
                if local_id not in expected:
                    order.append(local_id)
                expected[local_id] = (clock, False, md)
        assert [r.local_id for r in repo.records] == order
        got = {r.local_id: (r.datestamp, r.deleted, r.metadata) for r in repo.records}
        assert got == expected
        assert parse_repository(serialize_repository(repo)) == repo


def test_select_examples():
    repo = parse_repository(THREE)
    assert [r.local_id for r in select_records(repo)] == ["alpha", "gone", "zeta"]
    stamp = repo.get("gone").datestamp
    assert [r.local_id for r in select_records(repo, stamp, stamp)] == ["gone"]
    assert [r.local_id for r in select_records(repo, "2002-02-01")] == ["gone", "zeta"]
    with pytest.raises(BadArgumentError):
        select_records(repo, "2003-01-01", "2002-01-01")


def test_select_matches_linear_scan():
    rng = gen.seeded(13)
    repo = gen.repository(rng, 1000)
    stamps = sorted(r.datestamp for r in repo.records)
    for _ in range(100):
        lo, hi = sorted(rng.choice(stamps) + timedelta(seconds=rng.randint(-5, 5))
                        for _ in range(2))
        set_spec = rng.choice([None, "a", "b"])
        use_lo, use_hi = rng.random() < 0.8, rng.random() < 0.8
        expected = []
        for r in repo.records:
            if use_lo and r.datestamp < lo:
                continue
            if use_hi and r.datestamp > hi:
                continue
            if set_spec is not None and set_spec not in r.set_memberships:
                continue
            expected.append(r)
        expected.sort(key=lambda r: (r.datestamp, r.local_id))
        got = select_records(repo, format_datestamp(lo) if use_lo else None,
                             format_datestamp(hi) if use_hi else None, set_spec)
        assert got == expected
