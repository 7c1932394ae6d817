"""Command-line entry point.

Exit codes: 0 success, 1 validation or usage error, 2 environment or I/O error.
"""

import argparse
import getpass
import logging
import os
import sys
import tempfile
import threading
import warnings
from pathlib import Path

from lxml import etree

from . import ns
from .config import SERVICES, ConfigError, load_config
from .datestamp import format_datestamp, parse_datestamp, utcnow
from .errors import (
    HarvestError,
    NoOpWarning,
    OAIError,
    OlacError,
    RecordRejected,
    RegistrationError,
    UpstreamUnavailableError,
    ValidationError,
)
from .metadata import (
    ArchiveDescription,
    MetadataRecord,
    QualifiedElement,
    validate_record,
)
from .oryx import (
    delete_record,
    new_repository,
    parse_repository,
    serialize_repository,
    upsert_record,
)
from .provider import url_to_suffix

EXIT_OK, EXIT_USER, EXIT_ENV = 0, 1, 2
OAI = "{%s}" % ns.OAI

log = logging.getLogger("olac")


class UsageError(OlacError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; that code is reserved for the environment
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USER, "%s: error: %s\n" % (self.prog, message))


# -- element specs ----------------------------------------------------------------

def parse_element_spec(spec):
    """``TAG[|TYPE[|CODE]]=CONTENT`` -> QualifiedElement.

    Content may be empty (``subject|olac:language|x-sil-SWA=``) and may
    contain ``=`` or ``|``; only the first ``=`` separates it.
    """
    head, sep, content = spec.partition("=")
    if not sep:
        raise UsageError("element %r: expected TAG[|TYPE[|CODE]]=CONTENT" % spec)
    parts = head.split("|")
    if len(parts) > 3:
        raise UsageError("element %r: too many '|' separators before '='" % spec)
    tag = parts[0].strip()
    type_ = parts[1].strip() if len(parts) > 1 and parts[1].strip() else None
    code = parts[2].strip() if len(parts) > 2 and parts[2].strip() else None
    if tag not in ns.DC_ELEMENT_SET:
        raise UsageError("element %r: %r is not a Dublin Core element" % (spec, tag))
    if code is not None and type_ is None:
        raise UsageError("element %r: a code needs a type" % spec)
    return QualifiedElement(tag, content, type_, code)


# -- repository file helpers -------------------------------------------------------

def _read_repo(path):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise OSError("cannot read %s: %s" % (path, exc.strerror)) from None
    return parse_repository(data)


def _write_text(path, text):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=str(path.parent or "."), prefix=".olac-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _now(args):
    return parse_datestamp(args.now) if args.now else utcnow()


def _prompt(label, interactive):
    if not interactive:
        return None
    value = input("%s: " % label).strip()
    return value or None


# -- repo commands -------------------------------------------------------------------

_DESCRIPTION_FLAGS = (
    ("name", "archive_name", "Archive name"),
    ("url", "archive_url", "Archive URL"),
    ("curator", "curator", "Curator"),
    ("location", "location", None),
    ("institution", "institution_name", None),
    ("institution_url", "institution_url", None),
    ("synopsis", "synopsis", None),
    ("access", "access_terms", None),
)


def cmd_repo_init(args, cfg):
    path = Path(args.file)
    if path.exists() and not args.force:
        raise UsageError("%s already exists (use --force to overwrite)" % path)
    interactive = sys.stdin.isatty() and not args.no_input
    values = {}
    for flag, attr, prompt in _DESCRIPTION_FLAGS:
        value = getattr(args, flag)
        if value is None and prompt is not None:
            value = _prompt(prompt, interactive)
        values[attr] = value or ""
    repo_id = args.id or _prompt("Repository id", interactive)
    if not repo_id:
        raise UsageError("a repository id is required (--id)")
    if not values["curator"] and interactive:
        values["curator"] = getpass.getuser()
    repo = new_repository(repo_id, ArchiveDescription(**values))
    _write_text(path, serialize_repository(repo))
    print("initialized repository %s in %s" % (repo_id, path))


def _record_edit(args, cfg, replace_elements):
    repo = _read_repo(args.file)
    new = [parse_element_spec(s) for s in args.elements]
    existing = repo.get(args.local_id)
    if replace_elements or existing is None or existing.deleted:
        elements = new
    else:
        elements = list(existing.metadata.elements) + new
    if not elements:
        raise UsageError("a record needs at least one element")
    namespaces = existing.metadata.namespace_decls if existing and existing.metadata else ()
    metadata = MetadataRecord(tuple(elements), namespaces)
    sets = args.set if args.set else None
    repo = upsert_record(repo, args.local_id, metadata, _now(args), cfg.profile(), sets)
    _write_text(args.file, serialize_repository(repo))
    print("%s %s (%d elements)" % ("set" if replace_elements else "added", args.local_id,
                                   len(elements)))


def cmd_repo_add(args, cfg):
    _record_edit(args, cfg, replace_elements=False)


def cmd_repo_set(args, cfg):
    _record_edit(args, cfg, replace_elements=True)


def cmd_repo_remove(args, cfg):
    repo = _read_repo(args.file)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NoOpWarning)
        repo = delete_record(repo, args.local_id, _now(args))
    for w in caught:
        print("warning: %s" % w.message, file=sys.stderr)
    if not caught:
        _write_text(args.file, serialize_repository(repo))
        print("removed %s" % args.local_id)


def _findings(repo, profile):
    out = []
    for problem in repo.problems():
        out.append(("error", "-", problem))
    for rec in repo.records:
        if rec.deleted:
            continue
        for f in validate_record(rec.metadata, profile):
            where = "" if f.index is None else "element %d: " % (f.index + 1)
            out.append((f.severity, rec.local_id, where + f.message))
    return out


def cmd_repo_validate(args, cfg):
    repo = _read_repo(args.file)
    findings = _findings(repo, cfg.profile())
    for severity, where, message in findings:
        print("%s\t%s\t%s" % (severity, where, message))
    errors = sum(1 for f in findings if f[0] == "error")
    print("%d records, %d errors, %d warnings" % (
        len(repo.records), errors, sum(1 for f in findings if f[0] == "warning")))
    return EXIT_USER if errors else EXIT_OK


def cmd_repo_publish(args, cfg):
    repo = _read_repo(args.file)
    findings = _findings(repo, cfg.profile())
    errors = [f for f in findings if f[0] == "error"]
    if errors and not args.force:
        for severity, where, message in errors:
            print("%s\t%s\t%s" % (severity, where, message), file=sys.stderr)
        raise ValidationError("%d validation errors block publishing (use --force)" % len(errors))
    Path(args.output).parent.mkdir(parents=True, exist_ok=True)
    _write_text(args.output, serialize_repository(repo))
    print("wrote %s (%d records)" % (args.output, len(repo.records)))
    if args.url:
        suffix = url_to_suffix(args.url)
        print("Vida base URL suffix: %s" % suffix)
        print("register: <vida service>/%s" % suffix)
    return EXIT_OK


# -- services ------------------------------------------------------------------------------

def _file_source(path):
    """A provider source that re-reads ``path`` whenever it changes."""
    from .provider import DocumentSource

    state = {"key": None, "src": None}
    lock = threading.Lock()

    def current():
        stat = os.stat(path)
        key = (stat.st_mtime_ns, stat.st_size)
        with lock:
            if state["key"] != key:
                state["src"] = DocumentSource(_read_repo(path))
                state["key"] = key
            return state["src"]

    current()
    return current


def build_app(service, args, cfg):
    from . import web

    host, port = cfg.listen_address(service)
    base = "http://%s:%d/" % (host, port)
    profile = cfg.profile()
    if service == "vida":
        from .provider import VidaCache, fetch_url
        return web.vida_app(cfg.provider_config(base, profile), fetch_url,
                            VidaCache(cfg.vida_ttl_seconds))
    if service == "provider":
        if not args.repo:
            raise UsageError("serve provider needs --repo FILE")
        return web.provider_app(_file_source(args.repo), cfg.provider_config(base, profile))
    if service == "aggregator":
        from .aggregator import Aggregator
        return web.aggregator_app(Aggregator(cfg.data_dir, watch=True),
                                  cfg.provider_config(base, profile))
    from .provider import fetch_url
    from .viser import Viser, local_client, remote_client
    if cfg.aggregator_url:
        client = remote_client(cfg.aggregator_url)
    else:
        from .aggregator import Aggregator
        agg = Aggregator(cfg.data_dir, watch=True)
        client = local_client(agg, cfg.provider_config(base, profile))
    return web.viser_app(Viser(client, base_url="", fetcher=fetch_url, profile=profile))


def cmd_serve(args, cfg):
    from . import web

    if args.listen:
        from .config import parse_address
        cfg.listen[args.service] = parse_address(args.listen)
    host, port = cfg.listen_address(args.service)
    app = build_app(args.service, args, cfg)
    try:
        server, thread = web.serve(app, host, port, args.service)
    except OSError as exc:
        raise OSError("cannot listen on %s:%d: %s" % (host, port, exc.strerror or exc)) from None
    print("serving %s on http://%s:%d/" % (args.service, host, server.server_port), flush=True)
    try:
        thread.join()
    except KeyboardInterrupt:
        print("shutting down", file=sys.stderr)
    finally:
        server.shutdown()
        server.server_close()
    return EXIT_OK


# -- aggregator commands -----------------------------------------------------------------

def _aggregator(cfg):
    from .aggregator import Aggregator

    cfg.data_dir.mkdir(parents=True, exist_ok=True)
    return Aggregator(cfg.data_dir)


def cmd_register(args, cfg):
    entry = _aggregator(cfg).register_provider(args.base_url)
    print(entry.archive_id)


def cmd_list(args, cfg):
    agg = _aggregator(cfg)
    counts = {}
    for rec in agg.source().records:
        counts[rec.source_archive] = counts.get(rec.source_archive, 0) + 1
    for e in agg.entries():
        last = format_datestamp(e.last_successful_harvest) if e.last_successful_harvest else "never"
        print("%s\t%s\t%s\t%s\t%d" % (e.archive_id, e.status, e.base_url, last,
                                      counts.get(e.archive_id, 0)))


def cmd_harvest(args, cfg):
    agg = _aggregator(cfg)
    mode = "full" if args.full else "incremental"
    if args.archives:
        reports = [agg.harvest(a, mode) for a in args.archives]
    else:
        reports = agg.harvest_all(mode)
    failed = False
    for report in reports:
        print(report.summary())
        for kind, message in report.errors:
            print("  %s error: %s" % (kind, message), file=sys.stderr)
            failed = True
    return EXIT_ENV if failed else EXIT_OK


def _query_client(args, cfg):
    if args.url or cfg.aggregator_url:
        from .viser import remote_client
        return remote_client(args.url or cfg.aggregator_url)
    from .viser import local_client
    return local_client(_aggregator(cfg), cfg.provider_config("http://localhost/"))


def run_query(client, sql, elements):
    """Yield record nodes for a Query, following resumption tokens."""
    params = {"verb": "Query", "sql": sql, "elements": str(elements)}
    while True:
        try:
            root = etree.fromstring(client(params))
        except etree.XMLSyntaxError as exc:
            raise UpstreamUnavailableError("unreadable aggregator response: %s" % exc) from None
        err = root.find(OAI + "error")
        if err is not None:
            code = err.get("code")
            if code == "noRecordsMatch":
                return
            exc = OAIError((err.text or "").strip())
            exc.code = code
            raise exc
        listing = root.find(OAI + "ListRecords")
        for node in listing.iterchildren(OAI + "record"):
            yield node
        token = (listing.findtext(OAI + "resumptionToken") or "").strip()
        if not token:
            return
        params = {"verb": "Query", "resumptionToken": token}


def cmd_query(args, cfg):
    client = _query_client(args, cfg)
    for node in run_query(client, args.sql, args.elements):
        if args.full:
            print(etree.tostring(node, encoding="unicode", pretty_print=True), end="")
        else:
            print(node.findtext("%sheader/%sidentifier" % (OAI, OAI)).strip())


# -- parser ----------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="olac", description="Language archive metadata tools.")
    p.add_argument("--config", help="configuration file (INI, [olac] section)")
    p.add_argument("--now", help="use this datestamp instead of the clock (reproducible edits)")
    p.add_argument("-v", "--verbose", action="store_true", help="log to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    repo = sub.add_parser("repo", help="author a static repository document")
    rsub = repo.add_subparsers(dest="repo_command", required=True, parser_class=_Parser)

    init = rsub.add_parser("init", help="create a new repository file")
    init.add_argument("file")
    init.add_argument("--id", help="repository identifier")
    for flag, _, _ in _DESCRIPTION_FLAGS:
        init.add_argument("--" + flag.replace("_", "-"), dest=flag)
    init.add_argument("--force", action="store_true", help="overwrite an existing file")
    init.add_argument("--no-input", action="store_true", help="never prompt")
    init.set_defaults(func=cmd_repo_init)

    for name, func, what in (("add", cmd_repo_add, "append elements to a record"),
                             ("set", cmd_repo_set, "replace a record's elements")):
        sp = rsub.add_parser(name, help=what)
        sp.add_argument("file")
        sp.add_argument("local_id")
        sp.add_argument("elements", nargs="*", metavar="TAG[|TYPE[|CODE]]=CONTENT")
        sp.add_argument("--set", action="append", metavar="SPEC", help="set membership")
        sp.set_defaults(func=func)

    rm = rsub.add_parser("remove", help="withdraw a record (leaves a tombstone)")
    rm.add_argument("file")
    rm.add_argument("local_id")
    rm.set_defaults(func=cmd_repo_remove)

    val = rsub.add_parser("validate", help="report validation findings")
    val.add_argument("file")
    val.set_defaults(func=cmd_repo_validate)

    pub = rsub.add_parser("publish", help="write the publishable repository document")
    pub.add_argument("file")
    pub.add_argument("-o", "--output", required=True)
    pub.add_argument("--url", help="public URL the document will be posted at")
    pub.add_argument("--force", action="store_true", help="publish despite validation errors")
    pub.set_defaults(func=cmd_repo_publish)

    serve = sub.add_parser("serve", help="run a service")
    serve.add_argument("service", choices=SERVICES)
    serve.add_argument("--listen", metavar="HOST:PORT", help="override the configured address")
    serve.add_argument("--repo", help="repository document (provider only)")
    serve.set_defaults(func=cmd_serve)

    reg = sub.add_parser("register", help="register a data provider with the aggregator")
    reg.add_argument("base_url")
    reg.set_defaults(func=cmd_register)

    ls = sub.add_parser("list", help="list registered providers")
    ls.set_defaults(func=cmd_list)

    hv = sub.add_parser("harvest", help="harvest registered providers")
    hv.add_argument("archives", nargs="*", metavar="ARCHIVE_ID")
    hv.add_argument("--full", action="store_true", help="ignore the last harvest date")
    hv.set_defaults(func=cmd_harvest)

    q = sub.add_parser("query", help="query the aggregated metadata")
    q.add_argument("--elements", required=True, type=int)
    q.add_argument("--sql", required=True)
    q.add_argument("--full", action="store_true", help="print whole records")
    q.add_argument("--url", help="remote aggregator base URL")
    q.set_defaults(func=cmd_query)
    return p


_ENV_ERRORS = (ConfigError, RegistrationError, HarvestError, UpstreamUnavailableError)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(message)s")
    try:
        cfg = load_config(args.config)
        code = args.func(args, cfg)
    except RecordRejected as exc:
        for f in exc.findings:
            print(f, file=sys.stderr)
        print("olac: %s" % exc, file=sys.stderr)
        return EXIT_USER
    except _ENV_ERRORS as exc:
        print("olac: %s" % exc, file=sys.stderr)
        return EXIT_ENV
    except OlacError as exc:
        print("olac: %s" % exc, file=sys.stderr)
        return EXIT_USER
    except OSError as exc:
        print("olac: %s" % exc, file=sys.stderr)
        return EXIT_ENV
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
