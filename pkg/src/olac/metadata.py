"""Qualified Dublin Core records with ``xsi:type`` extensions.

A record is a flat, ordered list of :class:`QualifiedElement`.  Each
element keeps its DC tag, an optional refinement type (a qualified name
such as ``olac:language``), an optional vocabulary code and free-text
content.  Third-party attributes are carried along untouched so that
serialization is lossless; they are only dropped when projecting to
:class:`ElementQuad`.
"""

from dataclasses import dataclass, field

from lxml import etree

from . import ns
from .errors import ParseError, SerializeError, UnknownElementError, UnknownRefinementError
from .vocab import default_profile

_PARSER = etree.XMLParser(
    remove_comments=True, remove_pis=True, resolve_entities=False, no_network=True)


@dataclass(frozen=True)
class QualifiedElement:
    tag: str
    content: str = ""
    refinement_type: str = None
    code: str = None
    xml_lang: str = None
    extra_attrs: tuple = ()

    def __post_init__(self):
        if self.tag not in ns.DC_ELEMENT_SET:
            raise UnknownElementError(self.tag)
        if isinstance(self.extra_attrs, dict):
            object.__setattr__(self, "extra_attrs", tuple(self.extra_attrs.items()))

    @property
    def attrs(self):
        return dict(self.extra_attrs)


@dataclass(frozen=True)
class ElementQuad:
    tag: str
    content: str
    type_: str
    code: str


@dataclass(frozen=True)
class MetadataRecord:
    elements: tuple = ()
    namespace_decls: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        decls = dict(self.namespace_decls)
        bound = set(decls.values())
        for prefix, uri in ns.STANDARD_PREFIXES.items():
            if prefix not in decls and uri not in bound:
                decls[prefix] = uri
        object.__setattr__(self, "namespace_decls", decls)

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def resolve(self, qname):
        """Return ``(namespace_uri, local_name)`` for a prefixed name."""
        prefix, sep, local = qname.partition(":")
        if not sep:
            return None, qname
        return self.namespace_decls.get(prefix), local

    def prefix_for(self, uri, default=None):
        for prefix, bound in self.namespace_decls.items():
            if bound == uri:
                return prefix
        return default

    def olac_prefix(self):
        for prefix, uri in self.namespace_decls.items():
            if ns.is_olac(uri) and uri != ns.OLAC_ARCHIVE:
                return prefix
        return None

    def first(self, tag):
        for el in self.elements:
            if el.tag == tag:
                return el
        return None


def _load(doc):
    if isinstance(doc, str):
        doc = doc.encode("utf-8")
    try:
        return etree.fromstring(doc, _PARSER)
    except etree.XMLSyntaxError as exc:
        line, column = exc.position if exc.position else (None, None)
        raise ParseError("malformed markup: %s" % exc.msg, line, column) from None


def _collect_decls(root):
    decls = {}
    for node in root.iter():
        if not isinstance(node.tag, str):
            continue
        for prefix, uri in node.nsmap.items():
            if prefix is None:
                continue
            if decls.get(prefix, uri) != uri:
                raise ParseError("prefix %r bound to two namespaces" % prefix, node.sourceline, 0)
            decls[prefix] = uri
    return decls


def _qualified(node, clark):
    qn = etree.QName(clark)
    if qn.namespace is None:
        return qn.localname
    if qn.namespace == ns.XML:
        return "xml:" + qn.localname
    for prefix, uri in node.nsmap.items():
        if uri == qn.namespace and prefix:
            return "%s:%s" % (prefix, qn.localname)
    raise ParseError("attribute %s has no namespace prefix" % clark, node.sourceline, 0)


def _read_element(node, tag, refinement):
    code = None
    bare_code = None
    lang = None
    extra = []
    for clark, value in node.attrib.items():
        qn = etree.QName(clark)
        if clark == ns.XSI_TYPE and refinement is None:
            value = value.strip()
            prefix, sep, _ = value.partition(":")
            if sep and prefix not in node.nsmap:
                raise ParseError("undeclared prefix %r in xsi:type" % prefix, node.sourceline, 0)
            refinement = value
        elif qn.localname == "code" and ns.is_olac(qn.namespace) and code is None:
            code = value
        elif clark == "code" and bare_code is None:
            bare_code = value
        elif clark == ns.XML_LANG:
            lang = value
        else:
            extra.append((_qualified(node, clark), value))
    if code is None and bare_code is not None:
        code = bare_code
    elif bare_code is not None:
        extra.append(("code", bare_code))
    if len(node):
        raise ParseError("element %s has child elements" % tag, node.sourceline, 0)
    return QualifiedElement(
        tag=tag, content=node.text or "", refinement_type=refinement, code=code,
        xml_lang=lang, extra_attrs=tuple(extra))


def _element_from_node(node, legacy=None):
    qn = etree.QName(node)
    uri, local = qn.namespace, qn.localname
    if uri in (ns.DC, None):
        if local in ns.DC_ELEMENT_SET:
            return _read_element(node, local, None)
        if legacy is not None and "." in local:
            base = local.split(".", 1)[0]
            if base in ns.DC_ELEMENT_SET:
                if local not in legacy:
                    raise UnknownRefinementError(local)
                return _read_element(node, base, legacy[local])
        raise UnknownElementError(local, node.sourceline)
    if uri == ns.DCTERMS and local in ns.DCTERMS_PARENT:
        prefix = node.prefix or "dcterms"
        return _read_element(node, ns.DCTERMS_PARENT[local], "%s:%s" % (prefix, local))
    name = "%s:%s" % (node.prefix, local) if node.prefix else "{%s}%s" % (uri, local)
    raise UnknownElementError(name, node.sourceline)


def _record_from_root(root, legacy=None):
    decls = _collect_decls(root)
    elements = [
        _element_from_node(child, legacy)
        for child in root if isinstance(child.tag, str)
    ]
    return MetadataRecord(tuple(elements), decls)


def parse_record(doc):
    """Parse a record document (root element of any name) into a MetadataRecord."""
    return _record_from_root(_load(doc))


def record_from_element(root):
    """Build a record from an already-parsed lxml element."""
    return _record_from_root(root)


def upgrade_legacy_record(doc, profile=None):
    """Read the original dot-notation format into the current model.

    ``<subject.language code="x">`` becomes a ``subject`` element typed
    with whatever the profile maps ``subject.language`` to.
    """
    profile = profile or default_profile()
    return _record_from_root(_load(doc), legacy=profile.legacy_refinements)


def _clark(decls, qname, what):
    prefix, sep, local = qname.partition(":")
    if not sep:
        return qname
    if prefix == "xml":
        return "{%s}%s" % (ns.XML, local)
    if prefix not in decls:
        raise SerializeError("undeclared namespace prefix %r in %s %r" % (prefix, what, qname))
    return "{%s}%s" % (decls[prefix], local)


def build_record_element(rec, root_tag=None):
    """Serialize ``rec`` as an lxml element (used when embedding records)."""
    decls = dict(rec.namespace_decls)
    olac_prefix = rec.olac_prefix()
    if olac_prefix is None:
        olac_prefix = "olac" if "olac" not in decls else "olac0"
        decls[olac_prefix] = ns.OLAC
    xsi_prefix = rec.prefix_for(ns.XSI)
    if xsi_prefix is None:
        decls["xsi"] = ns.XSI
    nsmap = {None: ns.DC}
    nsmap.update(decls)
    root = etree.Element(root_tag or "{%s}olac" % decls[olac_prefix], nsmap=nsmap)
    code_attr = "{%s}code" % decls[olac_prefix]
    for el in rec.elements:
        node_tag = "{%s}%s" % (ns.DC, el.tag)
        type_attr = el.refinement_type
        if el.refinement_type:
            uri, local = rec.resolve(el.refinement_type)
            if el.refinement_type.count(":") == 1 and uri is None:
                raise SerializeError("undeclared namespace prefix in %r" % el.refinement_type)
            if uri == ns.DCTERMS and ns.DCTERMS_PARENT.get(local) == el.tag:
                node_tag = "{%s}%s" % (ns.DCTERMS, local)
                type_attr = None
        node = etree.SubElement(root, node_tag)
        try:
            if type_attr:
                node.set(ns.XSI_TYPE, type_attr)
            if el.code is not None:
                node.set(code_attr, el.code)
            if el.xml_lang is not None:
                node.set(ns.XML_LANG, el.xml_lang)
            for name, value in el.extra_attrs:
                node.set(_clark(decls, name, "attribute"), value)
            if el.content:
                node.text = el.content
        except ValueError as exc:
            raise SerializeError(str(exc)) from None
    return root


def serialize_record(rec):
    root = build_record_element(rec)
    return etree.tostring(root, encoding="unicode", pretty_print=True)


def extract_quads(rec):
    return [
        ElementQuad(el.tag, el.content, el.refinement_type or "", el.code or "")
        for el in rec.elements
    ]


@dataclass(frozen=True)
class Finding:
    severity: str  # error | warning | info
    message: str
    index: int = None

    def __str__(self):
        where = "" if self.index is None else "element %d: " % (self.index + 1)
        return "%s: %s%s" % (self.severity, where, self.message)


def validate_record(rec, profile=None):
    """Check a record against the application profile.

    Returns a list of :class:`Finding`.  Nothing is raised; callers decide
    what an error means for them.
    """
    profile = profile or default_profile()
    findings = []
    for i, el in enumerate(rec.elements):
        if el.tag not in ns.DC_ELEMENT_SET:
            findings.append(Finding("error", "unknown DC element %r" % el.tag, i))
            continue
        if not el.refinement_type:
            continue
        uri, local = rec.resolve(el.refinement_type)
        if uri is None or not profile.is_olac(uri):
            if uri != ns.DCTERMS:
                findings.append(Finding(
                    "warning", "third-party refinement %s on %s" % (el.refinement_type, el.tag), i))
            continue
        if not profile.knows_type(local):
            findings.append(Finding("error", "unknown OLAC type %s" % el.refinement_type, i))
            continue
        if el.tag not in profile.parents_of(local):
            findings.append(Finding(
                "error", "%s may not refine %s" % (el.refinement_type, el.tag), i))
        vocabulary = profile.vocabulary(local)
        if el.code is not None and vocabulary is not None and el.code not in vocabulary:
            findings.append(Finding(
                "error", "code %r not in %s vocabulary" % (el.code, el.refinement_type), i))
        if el.code is None and el.content.strip():
            findings.append(Finding("info", "free-text %s without a code" % el.refinement_type, i))
    return findings


def errors_in(findings):
    return [f for f in findings if f.severity == "error"]


# (attribute, element name) pairs, in serialization order
DESCRIPTION_FIELDS = (
    ("archive_name", "archiveName"),
    ("archive_url", "archiveURL"),
    ("curator", "curator"),
    ("location", "location"),
    ("institution_name", "institution"),
    ("institution_url", "institutionURL"),
    ("synopsis", "synopsis"),
    ("access_terms", "access"),
)
REQUIRED_DESCRIPTION_FIELDS = ("archive_name", "archive_url", "curator")


@dataclass(frozen=True)
class ArchiveDescription:
    archive_name: str = ""
    archive_url: str = ""
    curator: str = ""
    location: str = ""
    institution_name: str = ""
    institution_url: str = ""
    synopsis: str = ""
    access_terms: str = ""

    def missing_fields(self, required=REQUIRED_DESCRIPTION_FIELDS):
        missing = [name for name in required if not getattr(self, name).strip()]
        if "archive_url" not in missing and "archive_url" in required \
                and not _looks_like_url(self.archive_url):
            missing.append("archive_url")
        return missing

    def fill_into(self, parent, namespace=None):
        for attr, name in DESCRIPTION_FIELDS:
            value = getattr(self, attr)
            if not value and attr not in ("archive_name", "archive_url", "curator"):
                continue
            tag = "{%s}%s" % (namespace, name) if namespace else name
            etree.SubElement(parent, tag).text = value or None
        return parent

    @classmethod
    def from_element(cls, node):
        values = {}
        by_name = {name: attr for attr, name in DESCRIPTION_FIELDS}
        for child in node:
            if not isinstance(child.tag, str):
                continue
            attr = by_name.get(etree.QName(child).localname)
            if attr is not None and attr not in values:
                values[attr] = (child.text or "").strip()
        return cls(**values)


def _looks_like_url(text):
    from urllib.parse import urlsplit

    parts = urlsplit(text.strip())
    return parts.scheme in ("http", "https", "ftp", "file") and bool(parts.netloc or parts.path)
