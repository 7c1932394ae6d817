"""WSGI front ends for the provider, Vida, the aggregator and Viser."""

import logging
import socketserver
import threading
import time
import urllib.parse
from dataclasses import replace
from wsgiref.simple_server import WSGIRequestHandler, WSGIServer, make_server

from .errors import BadArgumentError, OAIError
from .provider import ProtocolRequest, error_response, handle_request, vida_resolve
from .viser import ViserRequest

log = logging.getLogger("olac.access")

XML_TYPE = "text/xml; charset=utf-8"
HTML_TYPE = "text/html; charset=utf-8"
_STATUS = {200: "200 OK", 400: "400 Bad Request", 404: "404 Not Found",
           405: "405 Method Not Allowed", 502: "502 Bad Gateway"}


def request_pairs(environ):
    """Query-string pairs for GET, form pairs for POST, in arrival order."""
    pairs = urllib.parse.parse_qsl(environ.get("QUERY_STRING", ""), keep_blank_values=True)
    if environ.get("REQUEST_METHOD") == "POST":
        ctype = environ.get("CONTENT_TYPE", "")
        if ctype.startswith("application/x-www-form-urlencoded"):
            try:
                length = int(environ.get("CONTENT_LENGTH") or 0)
            except ValueError:
                length = 0
            body = environ["wsgi.input"].read(length).decode("utf-8", "replace")
            pairs += urllib.parse.parse_qsl(body, keep_blank_values=True)
    return pairs


def request_base(environ):
    scheme = environ.get("wsgi.url_scheme", "http")
    host = environ.get("HTTP_HOST") or "%s:%s" % (environ.get("SERVER_NAME", "localhost"),
                                                  environ.get("SERVER_PORT", "80"))
    return "%s://%s%s" % (scheme, host, environ.get("SCRIPT_NAME", ""))


def _respond(start_response, status, body, ctype, extra=()):
    data = body.encode("utf-8")
    headers = [("Content-Type", ctype), ("Content-Length", str(len(data)))]
    headers.extend(extra)
    start_response(_STATUS.get(status, "%d Error" % status), headers)
    return [data]


def logged(app, service):
    """One structured access-log line per request."""

    def wrapper(environ, start_response):
        started = time.monotonic()
        seen = {}

        def capture(status, headers, exc_info=None):
            seen["status"] = status.split(" ", 1)[0]
            return start_response(status, headers, exc_info)

        try:
            return app(environ, capture)
        finally:
            verb = dict(urllib.parse.parse_qsl(environ.get("QUERY_STRING", ""))).get("verb", "")
            log.info("ts=%s service=%s method=%s path=%s verb=%s status=%s duration_ms=%.1f",
                     time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()), service,
                     environ.get("REQUEST_METHOD"), environ.get("PATH_INFO", ""), verb,
                     seen.get("status", "-"), (time.monotonic() - started) * 1000)

    return wrapper


def provider_app(source, config, extra_verbs=None):
    """Serve a fixed source (or a zero-argument callable returning one)."""

    def app(environ, start_response):
        if environ.get("REQUEST_METHOD") not in ("GET", "POST"):
            return _respond(start_response, 405, "", "text/plain")
        req = ProtocolRequest.from_pairs(request_pairs(environ))
        src = source() if callable(source) else source
        return _respond(start_response, 200, handle_request(req, src, config, extra_verbs),
                        XML_TYPE)

    return app


def vida_app(config, fetcher, cache=None, mount="/vida"):
    """Vida: ``<mount>/<repository URL minus scheme>?verb=...``."""
    mount = mount.rstrip("/")

    def app(environ, start_response):
        path = environ.get("PATH_INFO", "")
        req = ProtocolRequest.from_pairs(request_pairs(environ))
        if not path.startswith(mount):
            return _respond(start_response, 404, "", "text/plain")
        suffix = path[len(mount):].lstrip("/")
        base = request_base(environ) + mount + "/" + suffix
        cfg = replace(config, base_url=base)
        try:
            src = vida_resolve(suffix, fetcher, cache)
        except OAIError as exc:
            status = 400 if isinstance(exc, BadArgumentError) else exc.http_status
            return _respond(start_response, status, error_response(req, cfg, exc), XML_TYPE)
        return _respond(start_response, 200, handle_request(req, src, cfg), XML_TYPE)

    return app


def aggregator_app(aggregator, config):
    def app(environ, start_response):
        req = ProtocolRequest.from_pairs(request_pairs(environ))
        return _respond(start_response, 200, aggregator.handle_request(req, config), XML_TYPE)

    return app


def viser_app(viser):
    """Listing at ``/``; crawler pages at ``/record/<quoted identifier>``."""

    def app(environ, start_response):
        path = environ.get("PATH_INFO", "") or "/"
        if path.startswith("/record/"):
            identifier = urllib.parse.unquote(path[len("/record/"):])
            page = viser.render_record_page(identifier)
            extra = [("Cache-Control", "public, max-age=3600")] if page.status == 200 else []
            return _respond(start_response, page.status, page.html, HTML_TYPE, extra)
        if path not in ("/", ""):
            return _respond(start_response, 404, "<h1>Not found</h1>", HTML_TYPE)
        params = dict(request_pairs(environ))
        page = viser.render_listing(ViserRequest.from_params(params))
        return _respond(start_response, page.status, page.html, HTML_TYPE)

    return app


class _ThreadingServer(socketserver.ThreadingMixIn, WSGIServer):
    daemon_threads = True


class _QuietHandler(WSGIRequestHandler):
    def log_message(self, format, *args):
        pass


def serve(app, host, port, service):
    """Start a threaded server; returns (server, thread). OSError if the port is taken."""
    server = make_server(host, port, logged(app, service), server_class=_ThreadingServer,
                         handler_class=_QuietHandler)
    thread = threading.Thread(target=server.serve_forever, name="olac-" + service, daemon=True)
    thread.start()
    return server, thread


def wsgi_transport(routes):
    """In-process transport: ``routes`` maps URL prefixes to WSGI apps.

    Has the same ``(base_url, params) -> bytes`` signature as the HTTP
    transport, so harvesters can talk to local apps without sockets.
    """
    import io
    from wsgiref.util import setup_testing_defaults

    def call(base_url, params):
        for prefix, app in sorted(routes.items(), key=lambda kv: -len(kv[0])):
            if base_url.startswith(prefix):
                break
        else:
            raise ConnectionError("no route to %s" % base_url)
        parts = urllib.parse.urlsplit(base_url)
        prefix_path = urllib.parse.urlsplit(prefix).path.rstrip("/")
        environ = {
            "REQUEST_METHOD": "GET",
            "SCRIPT_NAME": prefix_path,
            "PATH_INFO": parts.path[len(prefix_path):],
            "QUERY_STRING": urllib.parse.urlencode(params),
            "HTTP_HOST": parts.netloc,
            "wsgi.url_scheme": parts.scheme,
            "wsgi.input": io.BytesIO(),
        }
        setup_testing_defaults(environ)
        captured = {}

        def start_response(status, headers, exc_info=None):
            captured["status"] = status

        body = b"".join(app(environ, start_response))
        if not captured.get("status", "").startswith(("200", "400", "502")):
            raise ConnectionError("%s answered %s" % (base_url, captured.get("status")))
        return body

    return call
