"""XML namespace URIs and element tables used throughout the package."""

DC = "http://purl.org/dc/elements/1.1/"
DCTERMS = "http://purl.org/dc/terms/"
OLAC = "http://www.language-archives.org/OLAC/1.0bl/olac.xsd"
OLAC_BASE = "http://www.language-archives.org/OLAC/"
OLAC_ARCHIVE = "http://www.language-archives.org/OLAC/1.0/olac-archive"
XSI = "http://www.w3.org/2001/XMLSchema-instance"
XML = "http://www.w3.org/XML/1998/namespace"
OAI = "http://www.openarchives.org/OAI/2.0/"
OAI_DC = "http://www.openarchives.org/OAI/2.0/oai_dc/"
OAI_IDENTIFIER = "http://www.openarchives.org/OAI/2.0/oai-identifier"
PROVENANCE = "http://www.language-archives.org/OLAC/1.0/provenance"

XSI_TYPE = "{%s}type" % XSI
XML_LANG = "{%s}lang" % XML

DC_ELEMENTS = (
    "title", "creator", "subject", "description", "publisher",
    "contributor", "date", "type", "format", "identifier", "source",
    "language", "relation", "coverage", "rights",
)
DC_ELEMENT_SET = frozenset(DC_ELEMENTS)

# dcterms element refinements and the DC element each one dumbs down to.
DCTERMS_PARENT = {
    "alternative": "title",
    "created": "date",
    "issued": "date",
    "modified": "date",
    "valid": "date",
    "available": "date",
    "dateAccepted": "date",
    "dateCopyrighted": "date",
    "dateSubmitted": "date",
    "extent": "format",
    "medium": "format",
    "isPartOf": "relation",
    "hasPart": "relation",
    "isVersionOf": "relation",
    "hasVersion": "relation",
    "isFormatOf": "relation",
    "hasFormat": "relation",
    "references": "relation",
    "isReferencedBy": "relation",
    "replaces": "relation",
    "isReplacedBy": "relation",
    "requires": "relation",
    "isRequiredBy": "relation",
    "conformsTo": "relation",
    "spatial": "coverage",
    "temporal": "coverage",
    "abstract": "description",
    "tableOfContents": "description",
    "bibliographicCitation": "identifier",
    "accessRights": "rights",
    "license": "rights",
    "audience": "description",
}

STANDARD_PREFIXES = {
    "dcterms": DCTERMS,
    "olac": OLAC,
    "xsi": XSI,
}


def is_olac(uri):
    return bool(uri) and uri.startswith(OLAC_BASE)
