"""Dumbdown from qualified OLAC records to simple (unqualified) Dublin Core."""

from dataclasses import dataclass

from lxml import etree

from . import ns
from .metadata import MetadataRecord, QualifiedElement
from .vocab import default_profile

OAI_DC_SCHEMA = "http://www.openarchives.org/OAI/2.0/oai_dc.xsd"


@dataclass(frozen=True)
class SimpleDCRecord:
    elements: tuple = ()  # (tag, text) pairs

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(tuple(e) for e in self.elements))
        for tag, text in self.elements:
            if tag not in ns.DC_ELEMENT_SET:
                raise ValueError("not a DC element: %r" % tag)
            if not text or not text.strip():
                raise ValueError("empty %s element" % tag)

    def values(self, tag):
        return [text for t, text in self.elements if t == tag]


def _target_tag(rec, el):
    if el.refinement_type:
        uri, local = rec.resolve(el.refinement_type)
        if uri == ns.DCTERMS and local in ns.DCTERMS_PARENT:
            return ns.DCTERMS_PARENT[local]
    return el.tag


def _label(rec, el, profile):
    if not el.refinement_type:
        return None
    uri, local = rec.resolve(el.refinement_type)
    if uri is None or not profile.is_olac(uri):
        return None
    vocabulary = profile.vocabulary(local)
    return vocabulary.label(el.code) if vocabulary is not None else None


def dumbdown_element(rec, el, profile=None):
    """Text for one element: content, else vocabulary label, else raw code."""
    profile = profile or default_profile()
    if el.content.strip():
        return el.content
    if el.code:
        return _label(rec, el, profile) or el.code
    return None


def dumbdown_record(rec, profile=None):
    profile = profile or default_profile()
    out = []
    for el in rec.elements:
        text = dumbdown_element(rec, el, profile)
        if text:
            out.append((_target_tag(rec, el), text))
    return SimpleDCRecord(tuple(out))


def as_metadata_record(simple):
    """Lift a simple DC record back into the qualified model (no types, no codes)."""
    return MetadataRecord(tuple(QualifiedElement(tag, text) for tag, text in simple.elements))


def build_oai_dc_element(simple):
    root = etree.Element(
        "{%s}dc" % ns.OAI_DC, nsmap={"oai_dc": ns.OAI_DC, "dc": ns.DC, "xsi": ns.XSI})
    root.set("{%s}schemaLocation" % ns.XSI, "%s %s" % (ns.OAI_DC, OAI_DC_SCHEMA))
    for tag, text in simple.elements:
        etree.SubElement(root, "{%s}%s" % (ns.DC, tag)).text = text
    return root


def serialize_oai_dc(simple):
    return etree.tostring(build_oai_dc_element(simple), encoding="unicode", pretty_print=True)


def parse_oai_dc(doc):
    if isinstance(doc, str):
        doc = doc.encode("utf-8")
    root = etree.fromstring(doc) if isinstance(doc, bytes) else doc
    out = []
    for child in root:
        if not isinstance(child.tag, str):
            continue
        qn = etree.QName(child)
        if qn.namespace != ns.DC:
            raise ValueError("unexpected element %s in oai_dc record" % child.tag)
        out.append((qn.localname, child.text or ""))
    return SimpleDCRecord(tuple(out))
