"""Aggregator: harvest registered providers and re-expose the union.

On-disk layout under ``data_dir``::

    registry.json          registered providers (list of entries)
    archives/<id>.xml      one repository document per source archive

The element index used by the Query verb is rebuilt from the archive
files on load; it is never written to disk.
"""

import json
import logging
import os
import tempfile
import threading
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass, field, replace
from pathlib import Path

from lxml import etree

from . import ns
from .datestamp import format_datestamp, parse_datestamp, utcnow
from .errors import (
    BadArgumentError,
    BadRepositoryError,
    HarvestError,
    OlacError,
    RegistrationError,
)
from .metadata import ArchiveDescription, extract_quads, record_from_element
from .oryx import (
    REPOSITORY_ID,
    RepositoryDocument,
    RepositoryRecord,
    parse_repository,
    serialize_repository,
)
from .provider import (
    ProviderConfig,
    RepositorySource,
    SourceRecord,
    handle_request,
    page_items,
    records_payload,
    resolve_page_arguments,
    split_identifier,
)
from .query import CompiledQuery, parse_query

log = logging.getLogger(__name__)

OAI = "{%s}" % ns.OAI
FAILING_AFTER = 3


@dataclass
class RegistryEntry:
    archive_id: str
    base_url: str
    description: ArchiveDescription
    last_successful_harvest: object = None
    status: str = "active"  # active | failing | suspended
    consecutive_failures: int = 0

    def to_json(self):
        return {
            "archive_id": self.archive_id,
            "base_url": self.base_url,
            "last_successful_harvest": (format_datestamp(self.last_successful_harvest)
                                        if self.last_successful_harvest else None),
            "status": self.status,
            "consecutive_failures": self.consecutive_failures,
            "description": {k: getattr(self.description, k)
                            for k in ArchiveDescription.__dataclass_fields__},
        }

    @classmethod
    def from_json(cls, data):
        stamp = data.get("last_successful_harvest")
        return cls(
            archive_id=data["archive_id"],
            base_url=data["base_url"],
            description=ArchiveDescription(**data.get("description", {})),
            last_successful_harvest=parse_datestamp(stamp) if stamp else None,
            status=data.get("status", "active"),
            consecutive_failures=data.get("consecutive_failures", 0),
        )


@dataclass(frozen=True)
class ProvenancedRecord:
    identifier: str
    source_archive: str
    datestamp: object
    deleted: bool
    record: object = None
    quads: tuple = ()

    @classmethod
    def build(cls, identifier, source_archive, datestamp, deleted, record):
        quads = tuple(extract_quads(record)) if record is not None and not deleted else ()
        return cls(identifier, source_archive, datestamp, deleted,
                   None if deleted else record, quads)


@dataclass
class HarvestReport:
    archive_id: str
    mode: str
    added: int = 0
    updated: int = 0
    deleted: int = 0
    unchanged: int = 0
    errors: list = field(default_factory=list)  # (stage, message)
    started_at: object = None
    finished_at: object = None

    def summary(self):
        text = "%s (%s): added=%d updated=%d deleted=%d unchanged=%d" % (
            self.archive_id, self.mode, self.added, self.updated, self.deleted, self.unchanged)
        for stage, message in self.errors:
            text += "\n  error [%s]: %s" % (stage, message)
        return text


# -- transport ----------------------------------------------------------------

def http_transport(base_url, params, timeout=60):
    url = base_url + ("&" if "?" in base_url else "?") + urllib.parse.urlencode(params)
    try:
        with urllib.request.urlopen(url, timeout=timeout) as resp:
            return resp.read()
    except urllib.error.HTTPError as exc:
        # error responses still carry a protocol document
        body = exc.read()
        if body:
            return body
        raise


def _response_root(data):
    try:
        root = etree.fromstring(data)
    except etree.XMLSyntaxError as exc:
        raise HarvestError("unparseable response: %s" % exc) from None
    if root.tag != OAI + "OAI-PMH":
        raise HarvestError("not a protocol response (root %s)" % root.tag)
    return root


def _protocol_error(root):
    err = root.find(OAI + "error")
    if err is None:
        return None
    return err.get("code"), (err.text or "").strip()


def fetch_identify(transport, base_url):
    """Ask a provider who it is; returns ``(repository_id, ArchiveDescription)``."""
    try:
        root = _response_root(transport(base_url, {"verb": "Identify"}))
    except HarvestError as exc:
        raise RegistrationError("%s: %s" % (base_url, exc)) from None
    except Exception as exc:
        raise RegistrationError("%s is unreachable: %s" % (base_url, exc)) from None
    error = _protocol_error(root)
    if error is not None:
        raise RegistrationError("%s answered Identify with %s: %s" % ((base_url,) + error))
    ident = root.find(".//{%s}repositoryIdentifier" % ns.OAI_IDENTIFIER)
    archive = root.find(".//{%s}olac-archive" % ns.OLAC_ARCHIVE)
    if archive is None:
        raise BadRepositoryError("%s: Identify has no archive description" % base_url)
    description = ArchiveDescription.from_element(archive)
    missing = description.missing_fields()
    if missing:
        raise BadRepositoryError("%s: archive description lacks %s" % (base_url, ", ".join(missing)))
    if ident is None or not (ident.text or "").strip():
        raise BadRepositoryError("%s: Identify has no repositoryIdentifier" % base_url)
    archive_id = ident.text.strip()
    if not REPOSITORY_ID.match(archive_id):
        raise BadRepositoryError("%s: unusable repositoryIdentifier %r" % (base_url, archive_id))
    return archive_id, description


def _parse_record_node(node):
    header = node.find(OAI + "header")
    identifier = header.findtext(OAI + "identifier").strip()
    datestamp = parse_datestamp(header.findtext(OAI + "datestamp"))
    deleted = header.get("status") == "deleted"
    metadata = None
    if not deleted:
        wrapper = node.find(OAI + "metadata")
        body = [c for c in wrapper if isinstance(c.tag, str)] if wrapper is not None else []
        if len(body) != 1:
            raise HarvestError("record %s has no metadata" % identifier)
        metadata = record_from_element(body[0])
    return identifier, datestamp, deleted, metadata


# -- aggregate source ---------------------------------------------------------------

class AggregateSource(RepositorySource):
    """Immutable snapshot of the store, served through the provider engine."""

    def __init__(self, repository_id, description, records, archives):
        self.repository_id = repository_id
        self._description = description
        self.records = tuple(sorted(records, key=lambda r: (r.datestamp, r.identifier)))
        self._by_id = {r.identifier: r for r in self.records}
        self._archives = dict(archives)  # archive_id -> ArchiveDescription

    def _wrap(self, rec):
        return SourceRecord(
            rec.identifier, rec.datestamp, rec.deleted, (rec.source_archive,), rec.record,
            (rec.source_archive, self._archives.get(rec.source_archive, ArchiveDescription())))

    def description(self):
        return self._description

    def get(self, identifier):
        rec = self._by_id.get(identifier)
        return self._wrap(rec) if rec is not None else None

    def select(self, from_=None, until=None, set_spec=None):
        return [
            self._wrap(r) for r in self.records
            if (from_ is None or r.datestamp >= from_)
            and (until is None or r.datestamp <= until)
            and (set_spec is None or r.source_archive == set_spec)
        ]

    def sets(self):
        return tuple((aid, d.archive_name) for aid, d in sorted(self._archives.items()))

    def earliest_datestamp(self):
        return self.records[0].datestamp if self.records else None

    def query(self, expr):
        compiled = CompiledQuery(expr)
        return [r for r in self.records if compiled.matches(r)]


# -- the aggregator -----------------------------------------------------------------

DEFAULT_DESCRIPTION = ArchiveDescription(
    archive_name="Language Archives Aggregator",
    archive_url="http://localhost:8081/",
    curator="Aggregator operator",
    synopsis="Union of all metadata harvested from registered language archives.",
)


class Aggregator:
    def __init__(self, data_dir, transport=http_transport, repository_id="olaca",
                 description=DEFAULT_DESCRIPTION, clock=utcnow, watch=False):
        """``watch``: re-read the store when another process changes it (serving only)."""
        self.data_dir = Path(data_dir)
        self.watch = watch
        self._signature = None
        self.transport = transport
        self.repository_id = repository_id
        self.description = description
        self.clock = clock
        self._lock = threading.RLock()
        self._archive_locks = {}
        self.registry = {}   # archive_id -> RegistryEntry
        self._stores = {}    # archive_id -> {local_id: RepositoryRecord}
        self._records = {}   # identifier -> ProvenancedRecord
        self.load()

    # -- persistence --

    @property
    def registry_path(self):
        return self.data_dir / "registry.json"

    def archive_path(self, archive_id):
        return self.data_dir / "archives" / ("%s.xml" % archive_id)

    def _disk_signature(self):
        paths = [self.registry_path]
        archives = self.data_dir / "archives"
        if archives.is_dir():
            paths += sorted(archives.glob("*.xml"))
        out = []
        for path in paths:
            try:
                st = path.stat()
            except FileNotFoundError:
                continue
            out.append((path.name, st.st_mtime_ns, st.st_size))
        return tuple(out)

    def refresh(self):
        """Reload if the files on disk changed since the last load."""
        with self._lock:
            if self._disk_signature() != self._signature:
                self.load()

    def load(self):
        with self._lock:
            self._signature = self._disk_signature()
            self.registry.clear()
            self._stores.clear()
            self._records.clear()
            if self.registry_path.exists():
                data = json.loads(self.registry_path.read_text("utf-8"))
                for item in data.get("entries", []):
                    entry = RegistryEntry.from_json(item)
                    self.registry[entry.archive_id] = entry
            for archive_id in self.registry:
                path = self.archive_path(archive_id)
                store = {}
                if path.exists():
                    repo = parse_repository(path.read_bytes())
                    store = {r.local_id: r for r in repo.records}
                self._stores[archive_id] = store
                for rec in store.values():
                    self._index(archive_id, rec)

    def _index(self, archive_id, rec):
        identifier = "oai:%s:%s" % (archive_id, rec.local_id)
        self._records[identifier] = ProvenancedRecord.build(
            identifier, archive_id, rec.datestamp, rec.deleted, rec.metadata)

    @staticmethod
    def _atomic_write(path, text):
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)

    def _save_registry(self):
        entries = [e.to_json() for _, e in sorted(self.registry.items())]
        self._atomic_write(self.registry_path,
                           json.dumps({"entries": entries}, indent=2, sort_keys=True) + "\n")

    def _save_archive(self, archive_id):
        entry = self.registry[archive_id]
        store = self._stores[archive_id]
        records = sorted(store.values(), key=lambda r: r.local_id)
        repo = RepositoryDocument(archive_id, entry.description, tuple(records))
        self._atomic_write(self.archive_path(archive_id), serialize_repository(repo))

    # -- registry --

    def entries(self):
        with self._lock:
            return [replace(e) for _, e in sorted(self.registry.items())]

    def register_provider(self, base_url):
        """Identify the provider at ``base_url`` and add it to the registry."""
        archive_id, description = fetch_identify(self.transport, base_url)
        with self._lock:
            for entry in self.registry.values():
                if entry.base_url == base_url:
                    return replace(entry)
            if archive_id in self.registry:
                raise RegistrationError("archive id %r is already registered from %s"
                                        % (archive_id, self.registry[archive_id].base_url))
            entry = RegistryEntry(archive_id, base_url, description)
            self.registry[archive_id] = entry
            self._stores[archive_id] = {}
            self._save_registry()
            log.info("registered %s at %s", archive_id, base_url)
            return replace(entry)

    def set_status(self, archive_id, status):
        with self._lock:
            self.registry[archive_id].status = status
            self._save_registry()

    # -- harvesting --

    def _archive_lock(self, archive_id):
        with self._lock:
            return self._archive_locks.setdefault(archive_id, threading.Lock())

    def harvest(self, archive, mode="incremental"):
        """Harvest one archive (id or entry); ``mode`` is ``full`` or ``incremental``."""
        archive_id = getattr(archive, "archive_id", archive)
        if mode not in ("full", "incremental"):
            raise ValueError("mode must be 'full' or 'incremental'")
        with self._archive_lock(archive_id):
            with self._lock:
                if archive_id not in self.registry:
                    raise HarvestError("archive %r is not registered" % archive_id)
                entry = replace(self.registry[archive_id])
            if entry.status == "suspended":
                raise HarvestError("archive %r is suspended" % archive_id)
            report = HarvestReport(archive_id, mode, started_at=self.clock())
            params = {"verb": "ListRecords", "metadataPrefix": "olac"}
            if mode == "incremental" and entry.last_successful_harvest is not None:
                params["from"] = format_datestamp(entry.last_successful_harvest)
            changed = self._run_harvest(entry, params, report)
            report.finished_at = max(self.clock(), report.started_at)
            with self._lock:
                current = self.registry[archive_id]
                if report.errors:
                    current.consecutive_failures += 1
                    if current.consecutive_failures >= FAILING_AFTER:
                        current.status = "failing"
                else:
                    current.consecutive_failures = 0
                    current.last_successful_harvest = report.started_at
                    if current.status == "failing":
                        current.status = "active"
                if changed:
                    self._save_archive(archive_id)
                self._save_registry()
            log.info("harvest %s", report.summary())
            return report

    def _run_harvest(self, entry, params, report):
        prefix = "oai:%s:" % entry.archive_id
        changed = False
        while True:
            try:
                root = _response_root(self.transport(entry.base_url, params))
            except HarvestError as exc:
                report.errors.append(("parse", str(exc)))
                return changed
            except Exception as exc:
                report.errors.append(("transport", "%s: %s" % (entry.base_url, exc)))
                return changed
            error = _protocol_error(root)
            if error is not None:
                if error[0] != "noRecordsMatch":
                    report.errors.append(("protocol", "%s: %s" % error))
                return changed
            listing = root.find(OAI + "ListRecords")
            if listing is None:
                report.errors.append(("protocol", "response carries no ListRecords payload"))
                return changed
            for node in listing.iterchildren(OAI + "record"):
                try:
                    identifier, datestamp, deleted, metadata = _parse_record_node(node)
                except (OlacError, AttributeError) as exc:
                    report.errors.append(("record", str(exc)))
                    continue
                if not identifier.startswith(prefix) or len(identifier) == len(prefix):
                    report.errors.append(
                        ("record", "identifier %s outside archive %s" % (identifier, entry.archive_id)))
                    continue
                changed |= self._merge(entry.archive_id, identifier[len(prefix):],
                                       datestamp, deleted, metadata, report)
            token = listing.findtext(OAI + "resumptionToken")
            if not token or not token.strip():
                return changed
            params = {"verb": "ListRecords", "resumptionToken": token.strip()}

    def _merge(self, archive_id, local_id, datestamp, deleted, metadata, report):
        with self._lock:
            store = self._stores[archive_id]
            old = store.get(local_id)
            if deleted:
                if old is not None and old.deleted:
                    report.unchanged += 1
                    return False
                report.deleted += 1
                new = RepositoryRecord(local_id, datestamp, "deleted", None)
            else:
                if old is None:
                    report.added += 1
                elif (not old.deleted and old.datestamp == datestamp
                      and old.metadata == metadata):
                    report.unchanged += 1
                    return False
                else:
                    report.updated += 1
                new = RepositoryRecord(local_id, datestamp, "active", metadata)
            store[local_id] = new
            self._index(archive_id, new)
            return True

    def harvest_all(self, mode="incremental"):
        reports = []
        for entry in self.entries():
            if entry.status == "suspended":
                continue
            reports.append(self.harvest(entry.archive_id, mode))
        return reports

    # -- serving --

    def source(self):
        """Snapshot of the whole store as a protocol source."""
        with self._lock:
            if self.watch:
                self.refresh()
            archives = {aid: e.description for aid, e in self.registry.items()}
            return AggregateSource(self.repository_id, self.description,
                                   list(self._records.values()), archives)

    aggregate_source = source

    def provenance_ok(self):
        with self._lock:
            return all(split_identifier(i)[0] in self.registry for i in self._records)

    def _query_verb(self, req, src, config):
        args, cursor = resolve_page_arguments(req, config, {"sql", "elements"})
        if "sql" not in args or "elements" not in args:
            raise BadArgumentError("Query needs both sql and elements")
        expr = parse_query(args["sql"], args["elements"])
        hits = [src._wrap(r) for r in src.query(expr)]
        page, token_node = page_items(req, config, args, cursor, hits)
        return records_payload("ListRecords", page, token_node, config)

    def extra_verbs(self):
        return {"Query": ({"sql", "elements"}, {"resumptionToken"}, self._query_verb)}

    def handle_request(self, req, config=None):
        config = config or ProviderConfig()
        return handle_request(req, self.source(), config, self.extra_verbs())

    def query_records(self, sql, elements):
        """Matching records in aggregate order, without paging."""
        return self.source().query(parse_query(sql, elements))

