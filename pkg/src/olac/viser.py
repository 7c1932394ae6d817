"""Virtual service provider: aggregator queries rendered as web pages.

A listing page is driven by the same parameters a site would put in a
link: ``elements``, ``sql``, ``title``, an optional ``template`` and, when
following a continuation, ``resumptionToken``.  Per-record pages give web
crawlers a plain HTML view of every harvested record.

Custom templates use a small placeholder syntax::

    {{title}}                      page title
    {{#items}} ... {{/items}}      repeated per item; inside it
                                   {{display_title}} {{archive_name}}
                                   {{identifier}} {{link}}
    {{^items}} ... {{/items}}      rendered only when there are no items
    {{#more_link}} {{more_link}} {{/more_link}}

Every substituted value is HTML-escaped.  A template must contain the
items loop and reference ``more_link``.
"""

import html
import re
import urllib.parse
from dataclasses import dataclass

from lxml import etree

from . import ns
from .crosswalk import dumbdown_element, dumbdown_record
from .metadata import record_from_element
from .vocab import default_profile

OAI = "{%s}" % ns.OAI
PROV = "{%s}" % ns.PROVENANCE

ITEM_FIELDS = ("display_title", "archive_name", "identifier", "link")
PAGE_FIELDS = ("title", "items", "more_link")


class TemplateError(ValueError):
    pass


@dataclass(frozen=True)
class ViserRequest:
    elements: str = None
    sql: str = None
    title: str = ""
    template: str = None
    resumption_token: str = None

    @classmethod
    def from_params(cls, params):
        return cls(
            elements=params.get("elements"), sql=params.get("sql"),
            title=params.get("title", ""), template=params.get("template") or None,
            resumption_token=params.get("resumptionToken") or None)

    def problem(self):
        if self.resumption_token:
            return None
        if not self.elements or not self.sql:
            return "either elements and sql, or resumptionToken, must be given"
        return None


@dataclass(frozen=True)
class ListingItem:
    display_title: str
    archive_name: str
    record_identifier: str
    link: str


@dataclass(frozen=True)
class ListingPage:
    title: str
    items: tuple = ()
    more_link: str = None


@dataclass(frozen=True)
class Rendered:
    status: int
    html: str

    def __str__(self):
        return self.html


# -- templates --------------------------------------------------------------------

_TAG = re.compile(r"\{\{\s*([#^/]?)\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}")


def _compile(template):
    """Parse into a nested list of str | ("var", name) | (kind, name, children)."""
    root = []
    stack = [(None, root)]
    pos = 0
    for m in _TAG.finditer(template):
        stack[-1][1].append(template[pos:m.start()])
        kind, name = m.group(1), m.group(2)
        if kind in ("#", "^"):
            children = []
            stack[-1][1].append((kind, name, children))
            stack.append((name, children))
        elif kind == "/":
            if stack[-1][0] != name:
                raise TemplateError("unexpected {{/%s}}" % name)
            stack.pop()
        else:
            stack[-1][1].append(("var", name))
        pos = m.end()
    if len(stack) != 1:
        raise TemplateError("unclosed section {{#%s}}" % stack[-1][0])
    stack[-1][1].append(template[pos:])
    if "{{" in "".join(n for n in _flatten_text(root)):
        raise TemplateError("malformed placeholder")
    return root


def _flatten_text(nodes):
    for node in nodes:
        if isinstance(node, str):
            yield node
        elif node[0] != "var":
            yield from _flatten_text(node[2])


def _check(nodes, in_items=False, seen=None):
    seen = set() if seen is None else seen
    for node in nodes:
        if isinstance(node, str):
            continue
        kind, name = node[0], node[1]
        allowed = PAGE_FIELDS + (ITEM_FIELDS if in_items else ())
        if kind == "var":
            if name not in allowed or name == "items":
                raise TemplateError("unknown placeholder {{%s}}" % name)
            seen.add(name)
            continue
        if name not in ("items", "more_link"):
            raise TemplateError("unknown section {{%s%s}}" % (kind, name))
        if name == "items" and kind == "#":
            if in_items:
                raise TemplateError("nested items loop")
            seen.add("#items")
        else:
            seen.add(name)
        _check(node[2], in_items or (name == "items" and kind == "#"), seen)
    return seen


def validate_template(template):
    tree = _compile(template)
    seen = _check(tree)
    if "#items" not in seen:
        raise TemplateError("template has no {{#items}} loop")
    if "more_link" not in seen:
        raise TemplateError("template never references more_link")
    return tree


def _render(nodes, scope, out):
    for node in nodes:
        if isinstance(node, str):
            out.append(node)
            continue
        kind, name = node[0], node[1]
        value = scope.get(name)
        if kind == "var":
            out.append(html.escape(str(value or ""), quote=True))
        elif kind == "#":
            if name == "items":
                for item in value:
                    _render(node[2], {**scope, **item}, out)
            elif value:
                _render(node[2], scope, out)
        elif not value:
            _render(node[2], scope, out)


def apply_template(template, page):
    """Expand ``template`` for ``page``; TemplateError if the template is invalid."""
    tree = validate_template(template)
    scope = {
        "title": page.title,
        "more_link": page.more_link or "",
        "items": [
            {"display_title": i.display_title, "archive_name": i.archive_name,
             "identifier": i.record_identifier, "link": i.link}
            for i in page.items
        ],
    }
    out = []
    _render(tree, scope, out)
    return "".join(out)


DEFAULT_TEMPLATE = """<!DOCTYPE html>
<html>
<head>
<meta charset="utf-8">
<title>{{title}}</title>
</head>
<body>
<h1>{{title}}</h1>
<ul class="resources">
{{#items}}<li><a href="{{link}}">{{display_title}}</a> <span class="archive">{{archive_name}}</span></li>
{{/items}}</ul>
{{^items}}<p class="empty">No resources match this query.</p>
{{/items}}{{#more_link}}<p class="more"><a href="{{more_link}}">More resources ...</a></p>
{{/more_link}}</body>
</html>
"""


def _comment_safe(text):
    return text.replace("--", "- -")


def _page_html(title, body):
    return ("<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>%s</title>\n"
            "</head>\n<body>\n%s\n</body>\n</html>\n") % (html.escape(title), body)


def error_page(status, title, message):
    body = "<h1>%s</h1>\n<p class=\"error\">%s</p>" % (html.escape(title), html.escape(message))
    return Rendered(status, _page_html(title, body))


# -- aggregator access ------------------------------------------------------------

def local_client(aggregator, config=None):
    """Query an in-process Aggregator; returns a ``params -> bytes`` callable."""
    from .provider import ProtocolRequest

    def call(params):
        req = ProtocolRequest.from_pairs(params.items())
        return aggregator.handle_request(req, config).encode("utf-8")

    return call


def remote_client(base_url, transport=None):
    from .aggregator import http_transport

    transport = transport or http_transport
    return lambda params: transport(base_url, params)


def _call(agg, params):
    """Run a request; returns (root, error) where error is (status, code, message) or None."""
    try:
        data = agg(params)
    except Exception as exc:
        return None, (502, "unavailable", "the aggregator could not be reached: %s" % exc)
    try:
        root = etree.fromstring(data)
    except etree.XMLSyntaxError as exc:
        return None, (502, "unavailable", "the aggregator sent an unreadable response: %s" % exc)
    err = root.find(OAI + "error")
    if err is not None:
        return root, (400, err.get("code"), (err.text or "").strip())
    return root, None


def _provenance(node):
    prov = node.find("%sabout/%sprovenance" % (OAI, PROV))
    if prov is None:
        return "", "", ""
    return (prov.get("archive", ""), prov.findtext(PROV + "archiveName") or "",
            prov.findtext(PROV + "archiveURL") or "")


def _metadata(node):
    wrapper = node.find(OAI + "metadata")
    if wrapper is None:
        return None
    body = [c for c in wrapper if isinstance(c.tag, str)]
    return record_from_element(body[0]) if body else None


def display_title(rec, identifier, profile=None):
    if rec is not None:
        for el in rec.elements:
            if el.tag == "title" and el.content.strip():
                return el.content.strip()
        titles = dumbdown_record(rec, profile).values("title")
        if titles:
            return titles[0]
    return identifier


# -- pages --------------------------------------------------------------------------

class Viser:
    def __init__(self, agg, base_url="/viser", fetcher=None, profile=None):
        self.agg = agg
        self.base_url = base_url.rstrip("/")
        self.fetcher = fetcher
        self.profile = profile or default_profile()

    def record_link(self, identifier):
        return "%s/record/%s" % (self.base_url, urllib.parse.quote(identifier, safe=""))

    def more_link(self, token, req):
        params = {"resumptionToken": token, "title": req.title}
        if req.template:
            params["template"] = req.template
        return "%s/?%s" % (self.base_url, urllib.parse.urlencode(params))

    def listing_page(self, req):
        """Query the aggregator and build the page model; (page, error) pair."""
        problem = req.problem()
        if problem:
            return None, (400, "badArgument", problem)
        if req.resumption_token:
            params = {"verb": "Query", "resumptionToken": req.resumption_token}
        else:
            params = {"verb": "Query", "elements": req.elements, "sql": req.sql}
        root, error = _call(self.agg, params)
        if error is not None:
            if error[1] == "noRecordsMatch":
                return ListingPage(req.title), None
            return None, error
        listing = root.find(OAI + "ListRecords")
        items = []
        for node in listing.iterchildren(OAI + "record"):
            identifier = node.findtext("%sheader/%sidentifier" % (OAI, OAI)).strip()
            archive_id, archive_name, _ = _provenance(node)
            items.append(ListingItem(
                display_title(_metadata(node), identifier, self.profile),
                archive_name or archive_id, identifier, self.record_link(identifier)))
        token = (listing.findtext(OAI + "resumptionToken") or "").strip()
        more = self.more_link(token, req) if token else None
        return ListingPage(req.title, tuple(items), more), None

    def _template_text(self, ref):
        if self.fetcher is None:
            raise TemplateError("custom templates are not enabled")
        data = self.fetcher(ref)
        return data.decode("utf-8") if isinstance(data, bytes) else data

    def render_page(self, page, template_ref=None):
        if template_ref:
            try:
                return apply_template(self._template_text(template_ref), page)
            except Exception as exc:
                warning = "<!-- warning: template %s rejected (%s); default template used -->\n" % (
                    _comment_safe(template_ref), _comment_safe(str(exc)))
                return apply_template(DEFAULT_TEMPLATE, page) + warning
        return apply_template(DEFAULT_TEMPLATE, page)

    def render_listing(self, req):
        page, error = self.listing_page(req)
        if error is not None:
            status, code, message = error
            title = "Service unavailable" if status == 502 else "Bad request"
            return error_page(status, title, "%s: %s" % (code, message))
        return Rendered(200, self.render_page(page, req.template))

    def render_record_page(self, identifier):
        root, error = _call(self.agg, {
            "verb": "GetRecord", "identifier": identifier, "metadataPrefix": "olac"})
        if error is not None:
            status, code, message = error
            if code in ("idDoesNotExist", "badArgument"):
                return error_page(404, "Record not found", "No record is known by that identifier.")
            return error_page(status, "Service unavailable", "%s: %s" % (code, message))
        node = root.find("%sGetRecord/%srecord" % (OAI, OAI))
        header = node.find(OAI + "header")
        datestamp = header.findtext(OAI + "datestamp") or ""
        archive_id, archive_name, archive_url = _provenance(node)
        ident_attr = html.escape(identifier, quote=True)
        archive_block = "<section class=\"archive\">\n<h2>Source archive</h2>\n<p>%s</p>\n</section>" % (
            "<a href=\"%s\">%s</a>" % (html.escape(archive_url, quote=True),
                                      html.escape(archive_name or archive_id))
            if archive_url else html.escape(archive_name or archive_id))
        if header.get("status") == "deleted":
            body = ("<article data-oai-identifier=\"%s\">\n<h1>Record withdrawn</h1>\n"
                    "<p class=\"withdrawn\">This record was withdrawn by its archive on %s.</p>\n"
                    "%s\n</article>") % (ident_attr, html.escape(datestamp), archive_block)
            return Rendered(200, _page_html("Record withdrawn", body))

        rec = _metadata(node)
        title = display_title(rec, None, self.profile) or "Untitled resource"
        rows = []
        for el in rec.elements:
            text = dumbdown_element(rec, el, self.profile)
            if not text:
                continue
            label = self._code_label(rec, el)
            extra = ""
            if label and label != text:
                extra = " <span class=\"code-label\">(%s)</span>" % html.escape(label)
            rows.append("<dt>%s</dt><dd>%s%s</dd>" % (
                html.escape(el.tag.capitalize()), html.escape(text), extra))
        body = ("<article data-oai-identifier=\"%s\">\n<h1>%s</h1>\n<dl class=\"metadata\">\n%s\n"
                "</dl>\n<p class=\"datestamp\">Last modified %s</p>\n%s\n</article>") % (
            ident_attr, html.escape(title), "\n".join(rows), html.escape(datestamp), archive_block)
        return Rendered(200, _page_html(title, body))

    def _code_label(self, rec, el):
        if not el.code or not el.refinement_type:
            return None
        uri, local = rec.resolve(el.refinement_type)
        if uri is None or not self.profile.is_olac(uri):
            return None
        vocabulary = self.profile.vocabulary(local)
        return vocabulary.label(el.code) if vocabulary is not None else None


def render_listing(req, agg, **kwargs):
    return Viser(agg, **kwargs).render_listing(req)


def render_record_page(identifier, agg, **kwargs):
    return Viser(agg, **kwargs).render_record_page(identifier)
