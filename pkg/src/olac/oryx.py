"""A whole metadata repository as one XML document.

The file carries the archive description, optional set declarations and
every record with its datestamp.  Deleted records stay in the file as
tombstones so harvesters can learn about deletions incrementally.

Edits never mutate a document; they return a new one.
"""

import re
import warnings
from dataclasses import dataclass, replace

from lxml import etree

from .datestamp import format_datestamp, normalize, parse_datestamp
from .errors import (
    BadArgumentError,
    DuplicateIdError,
    NoOpWarning,
    NotFoundError,
    ParseError,
    RecordRejected,
    SerializeError,
    ValidationError,
)
from .metadata import (
    ArchiveDescription,
    MetadataRecord,
    build_record_element,
    errors_in,
    record_from_element,
    validate_record,
)

REPOSITORY_ID = re.compile(r"^[a-zA-Z][a-zA-Z0-9\-]*$")
LOCAL_ID = re.compile(r"^\S+$")

_PARSER = etree.XMLParser(
    remove_comments=True, remove_pis=True, resolve_entities=False, no_network=True,
    huge_tree=True)


@dataclass(frozen=True)
class RepositoryRecord:
    local_id: str
    datestamp: object  # aware datetime, whole seconds
    status: str = "active"
    metadata: MetadataRecord = None
    set_memberships: tuple = ()

    @property
    def deleted(self):
        return self.status == "deleted"


@dataclass(frozen=True)
class RepositoryDocument:
    repository_id: str
    description: ArchiveDescription
    records: tuple = ()
    sets: tuple = ()  # (set_spec, set_name) pairs

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "sets", tuple(tuple(s) for s in self.sets))

    def get(self, local_id):
        for rec in self.records:
            if rec.local_id == local_id:
                return rec
        return None

    def earliest_datestamp(self):
        return min((r.datestamp for r in self.records), default=None)

    def problems(self):
        """Invariant violations, as human-readable strings."""
        out = []
        if not REPOSITORY_ID.match(self.repository_id or ""):
            out.append("bad repository id %r" % self.repository_id)
        declared = {spec for spec, _ in self.sets}
        seen = set()
        for rec in self.records:
            if rec.local_id in seen:
                out.append("duplicate record id %r" % rec.local_id)
            seen.add(rec.local_id)
            if not LOCAL_ID.match(rec.local_id or ""):
                out.append("bad record id %r" % rec.local_id)
            if rec.status not in ("active", "deleted"):
                out.append("record %s: bad status %r" % (rec.local_id, rec.status))
            if rec.deleted and rec.metadata is not None:
                out.append("record %s: deleted but carries metadata" % rec.local_id)
            if not rec.deleted and rec.metadata is None:
                out.append("record %s: no metadata" % rec.local_id)
            for spec in rec.set_memberships:
                if spec not in declared:
                    out.append("record %s: undeclared set %r" % (rec.local_id, spec))
        return out


def parse_repository(doc):
    if isinstance(doc, str):
        doc = doc.encode("utf-8")
    try:
        root = etree.fromstring(doc, _PARSER)
    except etree.XMLSyntaxError as exc:
        line, column = exc.position if exc.position else (None, None)
        raise ParseError("malformed repository: %s" % exc.msg, line, column) from None
    if root.tag != "repository":
        raise ParseError("root element must be <repository>, got <%s>" % root.tag)
    repository_id = root.get("id", "")
    if not REPOSITORY_ID.match(repository_id):
        raise ValidationError("bad repository id %r" % repository_id)

    node = root.find("description")
    if node is None:
        raise ValidationError("missing archive description")
    description = ArchiveDescription.from_element(node)
    missing = description.missing_fields()
    if missing:
        raise ValidationError("archive description incomplete", missing)

    sets = []
    sets_node = root.find("sets")
    if sets_node is not None:
        for s in sets_node.iter("set"):
            sets.append((s.get("spec", ""), (s.text or "").strip()))
    declared = {spec for spec, _ in sets}

    records = []
    seen = set()
    records_node = root.find("records")
    for node in (records_node.iterchildren("record") if records_node is not None else ()):
        local_id = node.get("id", "")
        if local_id in seen:
            raise DuplicateIdError(local_id)
        seen.add(local_id)
        if not LOCAL_ID.match(local_id):
            raise ValidationError("bad record id %r" % local_id)
        try:
            datestamp = parse_datestamp(node.get("datestamp", ""))
        except BadArgumentError as exc:
            raise ValidationError("record %s: %s" % (local_id, exc)) from None
        status = node.get("status", "active")
        memberships = tuple(node.get("sets", "").split())
        undeclared = [s for s in memberships if s not in declared]
        if undeclared:
            raise ValidationError("record %s references undeclared sets" % local_id, undeclared)
        body = [c for c in node if isinstance(c.tag, str)]
        if status == "deleted":
            if body:
                raise ValidationError("deleted record %s carries metadata" % local_id)
            metadata = None
        elif status == "active":
            if len(body) != 1:
                raise ValidationError("record %s must hold exactly one metadata element" % local_id)
            metadata = record_from_element(body[0])
        else:
            raise ValidationError("record %s: bad status %r" % (local_id, status))
        records.append(RepositoryRecord(local_id, datestamp, status, metadata, memberships))

    return RepositoryDocument(repository_id, description, tuple(records), tuple(sets))


def build_repository_element(repo):
    problems = repo.problems()
    if problems:
        raise SerializeError("; ".join(problems))
    root = etree.Element("repository", id=repo.repository_id)
    repo.description.fill_into(etree.SubElement(root, "description"))
    if repo.sets:
        sets_node = etree.SubElement(root, "sets")
        for spec, name in repo.sets:
            etree.SubElement(sets_node, "set", spec=spec).text = name or None
    records_node = etree.SubElement(root, "records")
    for rec in repo.records:
        node = etree.SubElement(records_node, "record")
        node.set("id", rec.local_id)
        node.set("datestamp", format_datestamp(rec.datestamp))
        if rec.deleted:
            node.set("status", "deleted")
        if rec.set_memberships:
            node.set("sets", " ".join(rec.set_memberships))
        if rec.metadata is not None:
            node.append(build_record_element(rec.metadata))
    return root


def serialize_repository(repo):
    root = build_repository_element(repo)
    return etree.tostring(
        root, encoding="UTF-8", xml_declaration=True, pretty_print=True).decode("utf-8")


def new_repository(repository_id, description, sets=()):
    repo = RepositoryDocument(repository_id, description, (), tuple(sets))
    problems = repo.problems()
    if problems:
        raise ValidationError("; ".join(problems))
    missing = description.missing_fields()
    if missing:
        raise ValidationError("archive description incomplete", missing)
    return repo


def upsert_record(repo, local_id, metadata, now, profile=None, set_memberships=None):
    """Insert or replace ``local_id``; the record becomes active, stamped ``now``."""
    if not LOCAL_ID.match(local_id or ""):
        raise ValidationError("bad record id %r" % local_id)
    findings = validate_record(metadata, profile)
    if errors_in(findings):
        raise RecordRejected(findings)
    declared = {spec for spec, _ in repo.sets}
    if set_memberships is not None:
        undeclared = [s for s in set_memberships if s not in declared]
        if undeclared:
            raise ValidationError("undeclared sets", undeclared)
    stamp = normalize(now)
    records = list(repo.records)
    for i, rec in enumerate(records):
        if rec.local_id == local_id:
            memberships = rec.set_memberships if set_memberships is None else tuple(set_memberships)
            records[i] = RepositoryRecord(local_id, stamp, "active", metadata, memberships)
            break
    else:
        records.append(RepositoryRecord(
            local_id, stamp, "active", metadata, tuple(set_memberships or ())))
    return replace(repo, records=tuple(records))


def delete_record(repo, local_id, now):
    records = list(repo.records)
    for i, rec in enumerate(records):
        if rec.local_id == local_id:
            if rec.deleted:
                warnings.warn("record %s is already deleted" % local_id, NoOpWarning, stacklevel=2)
                return repo
            records[i] = replace(rec, status="deleted", metadata=None, datestamp=normalize(now))
            return replace(repo, records=tuple(records))
    raise NotFoundError("no record %r" % local_id)


def select_records(repo, from_=None, until=None, set_spec=None):
    """Records (tombstones included) inside the inclusive datestamp window."""
    lo = parse_datestamp(from_) if from_ is not None else None
    hi = parse_datestamp(until) if until is not None else None
    if lo is not None and hi is not None and lo > hi:
        raise BadArgumentError("from is later than until")
    hits = [
        r for r in repo.records
        if (lo is None or r.datestamp >= lo)
        and (hi is None or r.datestamp <= hi)
        and (set_spec is None or set_spec in r.set_memberships)
    ]
    hits.sort(key=lambda r: (r.datestamp, r.local_id))
    return hits
