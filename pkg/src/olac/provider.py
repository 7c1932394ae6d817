"""Harvesting-protocol data provider.

:func:`handle_request` answers the six standard verbs over any
:class:`RepositorySource`.  Resumption tokens are stateless: each one
carries the original arguments, a cursor and an HMAC, so a restarted
process can still honour tokens it issued.

Vida (the virtual data provider) serves a repository document that lives
somewhere else on the web.  The document's URL, minus its scheme, is
appended to the Vida mount point to form the provider's base URL.
"""

import base64
import hashlib
import hmac
import json
import threading
import time
import urllib.request
from dataclasses import dataclass, field
from datetime import timedelta

from lxml import etree

from . import ns
from .crosswalk import build_oai_dc_element, dumbdown_record
from .datestamp import EPOCH, GRANULARITY, format_datestamp, parse_datestamp, utcnow
from .errors import (
    BadArgumentError,
    BadRepositoryError,
    BadResumptionTokenError,
    BadVerbError,
    CannotDisseminateFormatError,
    IdDoesNotExistError,
    NoRecordsMatchError,
    NoSetHierarchyError,
    OAIError,
    OlacError,
    UpstreamUnavailableError,
)
from .metadata import build_record_element
from .oryx import parse_repository, select_records
from .vocab import default_profile

PROTOCOL_VERSION = "2.0"
OAI_SCHEMA = "http://www.openarchives.org/OAI/2.0/OAI-PMH.xsd"

METADATA_FORMATS = (
    ("olac", ns.OLAC, ns.OLAC),
    ("oai_dc", "http://www.openarchives.org/OAI/2.0/oai_dc.xsd", ns.OAI_DC),
)
FORMAT_PREFIXES = tuple(prefix for prefix, _, _ in METADATA_FORMATS)

LIST_ARGS = {"metadataPrefix", "from", "until", "set", "resumptionToken"}
VERB_ARGS = {
    "Identify": (set(), set()),
    "ListMetadataFormats": (set(), {"identifier"}),
    "ListSets": (set(), {"resumptionToken"}),
    "GetRecord": ({"identifier", "metadataPrefix"}, set()),
    "ListIdentifiers": (set(), LIST_ARGS),
    "ListRecords": (set(), LIST_ARGS),
}


# -- sources ----------------------------------------------------------------

@dataclass(frozen=True)
class SourceRecord:
    identifier: str
    datestamp: object
    deleted: bool
    set_specs: tuple = ()
    metadata: object = None
    provenance: tuple = None  # (archive_id, ArchiveDescription) for aggregated records


class RepositorySource:
    """What the protocol engine needs from a repository.

    Subclasses return :class:`SourceRecord` objects and must hand out a
    stable snapshot: repeated ``select`` calls on one instance agree.
    """

    repository_id = None

    def description(self):
        raise NotImplementedError

    def get(self, identifier):
        raise NotImplementedError

    def select(self, from_=None, until=None, set_spec=None):
        raise NotImplementedError

    def sets(self):
        return ()

    def earliest_datestamp(self):
        return None


def make_identifier(repository_id, local_id):
    return "oai:%s:%s" % (repository_id, local_id)


def split_identifier(identifier):
    """``oai:repo:local`` -> ``(repo, local)``; BadArgumentError otherwise."""
    scheme, _, rest = identifier.partition(":")
    repo, sep, local = rest.partition(":")
    if scheme != "oai" or not sep or not repo or not local:
        raise BadArgumentError("identifier %r is not of the form oai:<repository>:<local-id>"
                               % identifier)
    return repo, local


class DocumentSource(RepositorySource):
    """A :class:`RepositoryDocument` exposed as a protocol source."""

    def __init__(self, repo):
        self.repo = repo
        self.repository_id = repo.repository_id

    def _wrap(self, rec):
        return SourceRecord(
            make_identifier(self.repository_id, rec.local_id), rec.datestamp, rec.deleted,
            rec.set_memberships, rec.metadata)

    def description(self):
        return self.repo.description

    def get(self, identifier):
        repo, local = split_identifier(identifier)
        if repo != self.repository_id:
            return None
        rec = self.repo.get(local)
        return self._wrap(rec) if rec is not None else None

    def select(self, from_=None, until=None, set_spec=None):
        return [self._wrap(r) for r in select_records(self.repo, from_, until, set_spec)]

    def sets(self):
        return self.repo.sets

    def earliest_datestamp(self):
        return self.repo.earliest_datestamp()


# -- requests and configuration ----------------------------------------------

@dataclass(frozen=True)
class ProtocolRequest:
    verb: str = None
    arguments: dict = field(default_factory=dict)
    duplicates: tuple = ()

    @classmethod
    def from_pairs(cls, pairs):
        args = {}
        dupes = []
        for name, value in pairs:
            if name in args:
                dupes.append(name)
                continue
            args[name] = value
        verb = args.pop("verb", None)
        return cls(verb, args, tuple(dupes))

    @classmethod
    def of(cls, verb, **arguments):
        if "from_" in arguments:
            arguments["from"] = arguments.pop("from_")
        return cls(verb, {k: v for k, v in arguments.items() if v is not None})


@dataclass
class ProviderConfig:
    base_url: str = "http://localhost:8080/oai"
    page_size: int = 500
    token_expiry: timedelta = timedelta(hours=24)
    token_secret: bytes = b"olac-provider"
    profile: object = None
    clock: object = utcnow
    admin_email: str = None

    def __post_init__(self):
        if self.page_size < 1:
            raise ValueError("page_size must be at least 1")
        if self.profile is None:
            self.profile = default_profile()


# -- resumption tokens --------------------------------------------------------

def _fingerprint(verb, args):
    canonical = json.dumps([verb, sorted(args.items())], separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _sign(secret, body):
    return hmac.new(secret, body, hashlib.sha256).hexdigest()[:24]


@dataclass(frozen=True)
class ResumptionToken:
    verb: str
    arguments: dict
    cursor: int
    issued_at: int
    complete_list_size: int

    @property
    def fingerprint(self):
        return _fingerprint(self.verb, self.arguments)

    def encode(self, secret):
        payload = {
            "v": self.verb, "a": self.arguments, "f": self.fingerprint,
            "c": self.cursor, "t": self.issued_at, "n": self.complete_list_size,
        }
        body = base64.urlsafe_b64encode(
            json.dumps(payload, separators=(",", ":"), sort_keys=True).encode("utf-8"))
        body = body.rstrip(b"=")
        return "%s.%s" % (body.decode("ascii"), _sign(secret, body))

    @classmethod
    def decode(cls, text, secret):
        body, sep, signature = text.partition(".")
        if not sep or not hmac.compare_digest(_sign(secret, body.encode("ascii", "replace")),
                                              signature):
            raise BadResumptionTokenError("resumption token not recognised")
        try:
            raw = base64.urlsafe_b64decode(body + "=" * (-len(body) % 4))
            payload = json.loads(raw)
            token = cls(payload["v"], dict(payload["a"]), int(payload["c"]),
                        int(payload["t"]), int(payload["n"]))
        except (ValueError, KeyError, TypeError):
            raise BadResumptionTokenError("resumption token is corrupt") from None
        if token.cursor < 0 or payload.get("f") != token.fingerprint:
            raise BadResumptionTokenError("resumption token fingerprint mismatch")
        return token


# -- response building ----------------------------------------------------------

def _envelope(req, config):
    root = etree.Element("{%s}OAI-PMH" % ns.OAI, nsmap={None: ns.OAI, "xsi": ns.XSI})
    root.set("{%s}schemaLocation" % ns.XSI, "%s %s" % (ns.OAI, OAI_SCHEMA))
    etree.SubElement(root, "{%s}responseDate" % ns.OAI).text = format_datestamp(config.clock())
    request = etree.SubElement(root, "{%s}request" % ns.OAI)
    echo = {}
    if req.verb is not None:
        echo["verb"] = req.verb
    echo.update(req.arguments)
    for name, value in echo.items():
        try:
            request.set(name, value)
        except ValueError:
            pass  # not representable as an XML attribute
    request.text = config.base_url
    return root


def _sub(parent, name, text=None, **attrs):
    node = etree.SubElement(parent, "{%s}%s" % (ns.OAI, name), **attrs)
    if text is not None:
        node.text = text
    return node


def _to_text(root):
    return etree.tostring(root, encoding="UTF-8", xml_declaration=True,
                          pretty_print=True).decode("utf-8")


def error_response(req, config, error):
    root = _envelope(req, config)
    _sub(root, "error", str(error), code=error.code)
    return _to_text(root)


def _header(parent, rec):
    header = _sub(parent, "header")
    if rec.deleted:
        header.set("status", "deleted")
    _sub(header, "identifier", rec.identifier)
    _sub(header, "datestamp", format_datestamp(rec.datestamp))
    for spec in rec.set_specs:
        _sub(header, "setSpec", spec)
    return header


def _metadata_element(rec, prefix, config):
    if prefix == "oai_dc":
        return build_oai_dc_element(dumbdown_record(rec.metadata, config.profile))
    return build_record_element(rec.metadata)


def _record(parent, rec, prefix, config):
    node = _sub(parent, "record")
    _header(node, rec)
    if not rec.deleted and rec.metadata is not None:
        _sub(node, "metadata").append(_metadata_element(rec, prefix, config))
    if rec.provenance is not None:
        archive_id, description = rec.provenance
        about = _sub(node, "about")
        prov = etree.SubElement(about, "{%s}provenance" % ns.PROVENANCE,
                                nsmap={None: ns.PROVENANCE}, archive=archive_id)
        etree.SubElement(prov, "{%s}archiveName" % ns.PROVENANCE).text = description.archive_name
        etree.SubElement(prov, "{%s}archiveURL" % ns.PROVENANCE).text = description.archive_url
    return node


# -- verbs ----------------------------------------------------------------------

def identify(src, config):
    payload = etree.Element("{%s}Identify" % ns.OAI)
    description = src.description()
    earliest = src.earliest_datestamp() or EPOCH
    _sub(payload, "repositoryName", description.archive_name)
    _sub(payload, "baseURL", config.base_url)
    _sub(payload, "protocolVersion", PROTOCOL_VERSION)
    if config.admin_email:
        _sub(payload, "adminEmail", config.admin_email)
    _sub(payload, "earliestDatestamp", format_datestamp(earliest))
    _sub(payload, "deletedRecord", "persistent")
    _sub(payload, "granularity", GRANULARITY)

    ident = etree.SubElement(_sub(payload, "description"), "{%s}oai-identifier" % ns.OAI_IDENTIFIER,
                             nsmap={None: ns.OAI_IDENTIFIER})
    for name, text in (("scheme", "oai"), ("repositoryIdentifier", src.repository_id),
                       ("delimiter", ":"),
                       ("sampleIdentifier", make_identifier(src.repository_id, "item1"))):
        etree.SubElement(ident, "{%s}%s" % (ns.OAI_IDENTIFIER, name)).text = text

    archive = etree.SubElement(_sub(payload, "description"), "{%s}olac-archive" % ns.OLAC_ARCHIVE,
                               nsmap={None: ns.OLAC_ARCHIVE})
    description.fill_into(archive, ns.OLAC_ARCHIVE)
    return payload


def list_metadata_formats(src, config, identifier=None):
    if identifier is not None:
        split_identifier(identifier)
        if src.get(identifier) is None:
            raise IdDoesNotExistError("no record %s" % identifier)
    payload = etree.Element("{%s}ListMetadataFormats" % ns.OAI)
    for prefix, schema, namespace in METADATA_FORMATS:
        fmt = _sub(payload, "metadataFormat")
        _sub(fmt, "metadataPrefix", prefix)
        _sub(fmt, "schema", schema)
        _sub(fmt, "metadataNamespace", namespace)
    return payload


def list_sets(src, config, resumption_token=None):
    if resumption_token is not None:
        raise BadResumptionTokenError("ListSets is never paged")
    sets = src.sets()
    if not sets:
        raise NoSetHierarchyError("this repository does not support sets")
    payload = etree.Element("{%s}ListSets" % ns.OAI)
    for spec, name in sets:
        node = _sub(payload, "set")
        _sub(node, "setSpec", spec)
        _sub(node, "setName", name)
    return payload


def _check_prefix(prefix):
    if prefix not in FORMAT_PREFIXES:
        raise CannotDisseminateFormatError("metadata format %r is not supported" % prefix)


def get_record(src, config, identifier, metadata_prefix):
    split_identifier(identifier)
    _check_prefix(metadata_prefix)
    rec = src.get(identifier)
    if rec is None:
        raise IdDoesNotExistError("no record %s" % identifier)
    payload = etree.Element("{%s}GetRecord" % ns.OAI)
    _record(payload, rec, metadata_prefix, config)
    return payload


def resolve_page_arguments(req, config, allowed):
    """Return ``(arguments, cursor)`` for a possibly-resumed list request.

    A token may arrive alone or alongside the arguments it was minted for;
    anything else is a different request and the token is refused.
    """
    args = {k: v for k, v in req.arguments.items() if k != "resumptionToken"}
    text = req.arguments.get("resumptionToken")
    if text is None:
        return args, 0
    token = ResumptionToken.decode(text, config.token_secret)
    if token.verb != req.verb:
        raise BadResumptionTokenError("resumption token was issued for %s" % token.verb)
    for name, value in args.items():
        if token.arguments.get(name) != value:
            raise BadResumptionTokenError("resumption token does not match argument %s" % name)
    issued = EPOCH + timedelta(seconds=token.issued_at)
    if config.clock() > issued + config.token_expiry:
        raise BadResumptionTokenError("resumption token has expired")
    unknown = set(token.arguments) - allowed
    if unknown:
        raise BadResumptionTokenError("resumption token is corrupt")
    return dict(token.arguments), token.cursor


def page_items(req, config, args, cursor, items):
    """Slice one page out of ``items``; returns ``(page, token_element_or_None)``."""
    if not items and cursor == 0:
        raise NoRecordsMatchError("no records match the request")
    if cursor and cursor >= len(items):
        raise BadResumptionTokenError("resumption token points past the end of the list")
    end = cursor + config.page_size
    page = items[cursor:end]
    token_node = None
    if end < len(items):
        issued = int((config.clock() - EPOCH).total_seconds())
        token = ResumptionToken(req.verb, args, end, issued, len(items))
        token_node = etree.Element("{%s}resumptionToken" % ns.OAI)
        token_node.text = token.encode(config.token_secret)
    elif cursor:
        token_node = etree.Element("{%s}resumptionToken" % ns.OAI)
    if token_node is not None:
        token_node.set("completeListSize", str(len(items)))
        token_node.set("cursor", str(cursor))
    return page, token_node


def _selection(src, args):
    prefix = args.get("metadataPrefix")
    if prefix is None:
        raise BadArgumentError("metadataPrefix is required")
    _check_prefix(prefix)
    bounds = {}
    for name in ("from", "until"):
        if name in args:
            bounds[name] = parse_datestamp(args[name])
    if "from" in bounds and "until" in bounds and bounds["from"] > bounds["until"]:
        raise BadArgumentError("from is later than until")
    set_spec = args.get("set")
    if set_spec is not None and not src.sets():
        raise NoSetHierarchyError("this repository does not support sets")
    return prefix, src.select(bounds.get("from"), bounds.get("until"), set_spec)


def list_records(src, config, req, headers_only=False):
    args, cursor = resolve_page_arguments(req, config, LIST_ARGS)
    prefix, items = _selection(src, args)
    page, token_node = page_items(req, config, args, cursor, items)
    payload = etree.Element("{%s}%s" % (ns.OAI, req.verb))
    for rec in page:
        if headers_only:
            _header(payload, rec)
        else:
            _record(payload, rec, prefix, config)
    if token_node is not None:
        payload.append(token_node)
    return payload


def records_payload(verb, records, token_node, config, prefix="olac"):
    """Build a ListRecords-shaped payload from already selected records."""
    payload = etree.Element("{%s}%s" % (ns.OAI, verb))
    for rec in records:
        _record(payload, rec, prefix, config)
    if token_node is not None:
        payload.append(token_node)
    return payload


def _check_arguments(req, required, optional):
    if req.duplicates:
        raise BadArgumentError("repeated argument: %s" % ", ".join(sorted(set(req.duplicates))))
    given = set(req.arguments)
    illegal = given - required - optional
    if illegal:
        raise BadArgumentError("illegal argument: %s" % ", ".join(sorted(illegal)))
    if "resumptionToken" in given:
        return
    missing = required - given
    if missing:
        raise BadArgumentError("missing argument: %s" % ", ".join(sorted(missing)))


def dispatch(req, src, config, extra_verbs=None):
    """Run one request and return the payload element; OAIError on failure."""
    extra_verbs = extra_verbs or {}
    if req.verb in extra_verbs:
        required, optional, handler = extra_verbs[req.verb]
        _check_arguments(req, required, optional)
        return handler(req, src, config)
    if req.verb not in VERB_ARGS:
        raise BadVerbError("illegal verb %r" % req.verb if req.verb else "missing verb")
    required, optional = VERB_ARGS[req.verb]
    _check_arguments(req, required, optional)
    a = req.arguments
    if req.verb == "Identify":
        return identify(src, config)
    if req.verb == "ListMetadataFormats":
        return list_metadata_formats(src, config, a.get("identifier"))
    if req.verb == "ListSets":
        return list_sets(src, config, a.get("resumptionToken"))
    if req.verb == "GetRecord":
        return get_record(src, config, a["identifier"], a["metadataPrefix"])
    if "resumptionToken" not in a and "metadataPrefix" not in a:
        raise BadArgumentError("missing argument: metadataPrefix")
    return list_records(src, config, req, headers_only=req.verb == "ListIdentifiers")


def handle_request(req, src, config, extra_verbs=None):
    """Answer one protocol request with a complete XML response document."""
    try:
        payload = dispatch(req, src, config, extra_verbs)
    except OAIError as exc:
        return error_response(req, config, exc)
    root = _envelope(req, config)
    root.append(payload)
    return _to_text(root)


# -- Vida -----------------------------------------------------------------------

def suffix_to_url(path_suffix):
    suffix = (path_suffix or "").lstrip("/")
    if not suffix:
        raise BadArgumentError("no repository URL after the Vida mount point")
    if suffix.startswith("https/"):
        return "https://" + suffix[len("https/"):]
    return "http://" + suffix


def url_to_suffix(url):
    if url.startswith("https://"):
        return "https/" + url[len("https://"):]
    if url.startswith("http://"):
        return url[len("http://"):]
    raise ValueError("Vida can only serve http(s) URLs: %r" % url)


def fetch_url(url, timeout=30):
    with urllib.request.urlopen(url, timeout=timeout) as resp:
        return resp.read()


class VidaCache:
    """URL -> parsed source, kept for ``ttl`` seconds.

    Concurrent misses on one URL wait for a single fetch.
    """

    def __init__(self, ttl=300, clock=time.monotonic):
        self.ttl = ttl
        self.clock = clock
        self._entries = {}
        self._locks = {}
        self._guard = threading.Lock()

    def _lock_for(self, url):
        with self._guard:
            return self._locks.setdefault(url, threading.Lock())

    def get_or_load(self, url, load):
        with self._lock_for(url):
            hit = self._entries.get(url)
            now = self.clock()
            if hit is not None and hit[0] > now:
                return hit[1]
            value = load()
            self._entries[url] = (now + self.ttl, value)
            return value

    def clear(self):
        with self._guard:
            self._entries.clear()


def vida_resolve(path_suffix, fetcher=fetch_url, cache=None):
    """Turn the path after the Vida mount into a snapshot source."""
    url = suffix_to_url(path_suffix)

    def load():
        try:
            data = fetcher(url)
        except Exception as exc:
            raise UpstreamUnavailableError("cannot fetch %s: %s" % (url, exc)) from None
        try:
            return DocumentSource(parse_repository(data))
        except OlacError as exc:
            raise BadRepositoryError("%s is not a valid repository: %s" % (url, exc)) from None

    if cache is None:
        return load()
    return cache.get_or_load(url, load)
