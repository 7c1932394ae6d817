"""Controlled vocabularies, language code tables and the application profile.

Vocabulary data lives in tab-separated fixture files (``code<TAB>label``,
``#`` comments) so the term lists can be replaced without code changes.
"""

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from . import ns
from .errors import InvalidSubtagError

_SUBTAG = re.compile(r"^[A-Za-z0-9]{1,8}$")

# vocabulary file stem -> qualified type name
VOCABULARY_FILES = {
    "linguistic-type": "olac:linguistic-type",
    "linguistic-field": "olac:linguistic-field",
    "role": "olac:role",
}
ISO_FILE = "iso639-1"
EXTENSION_FILE = "language-extensions"

DEFAULT_REFINEMENT_PARENT = {
    "olac:language": frozenset({"language", "subject"}),
    "olac:linguistic-type": frozenset({"type"}),
    "olac:linguistic-field": frozenset({"subject"}),
    "olac:role": frozenset({"contributor", "creator", "publisher"}),
}

# Dot-notation element names from the original metadata format.
DEFAULT_LEGACY_REFINEMENTS = {
    "subject.language": "olac:language",
    "language.language": "olac:language",
    "type.linguistic": "olac:linguistic-type",
    "subject.linguistic-field": "olac:linguistic-field",
    "contributor.role": "olac:role",
    "creator.role": "olac:role",
}


def read_table(lines, source="<table>"):
    """Parse ``code<TAB>label`` lines into an ordered dict."""
    terms = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        code, sep, label = line.partition("\t")
        code, label = code.strip(), label.strip()
        if not sep or not code or not label:
            raise ValueError("%s:%d: expected code<TAB>label" % (source, lineno))
        if code in terms:
            raise ValueError("%s:%d: duplicate code %r" % (source, lineno, code))
        terms[code] = label
    return terms


def _read_path(path):
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        return read_table(fh, str(path))


def _read_packaged(stem):
    text = resources.files("olac").joinpath("data").joinpath(stem + ".tab").read_text("utf-8")
    return read_table(text.splitlines(), stem + ".tab")


@dataclass(frozen=True)
class ControlledVocabulary:
    name: str
    terms: dict

    def __post_init__(self):
        for code, label in self.terms.items():
            if not label:
                raise ValueError("empty label for %r in %s" % (code, self.name))

    def __contains__(self, code):
        return code in self.terms

    def label(self, code):
        return self.terms.get(code)


@dataclass(frozen=True)
class LanguageIdentifier:
    kind: str  # "iso639_1" or "extension"
    authority: str
    code: str

    def __str__(self):
        if self.kind == "extension":
            return "x-%s-%s" % (self.authority, self.code)
        return self.code


def make_language_identifier(authority, code):
    for part, what in ((authority, "authority"), (code, "code")):
        if not part or not _SUBTAG.match(part):
            raise InvalidSubtagError(
                "%s subtag must be 1-8 alphanumeric characters, got %r" % (what, part))
    return LanguageIdentifier("extension", authority.lower(), code)


def parse_language_identifier(text):
    """Split ``x-auth-code`` or a two-letter code; None if neither shape."""
    if re.fullmatch(r"[A-Za-z]{2}", text):
        return LanguageIdentifier("iso639_1", "", text)
    m = re.fullmatch(r"x-([A-Za-z0-9]{1,8})-([A-Za-z0-9]{1,8})", text)
    if m:
        return LanguageIdentifier("extension", m.group(1), m.group(2))
    return None


@dataclass(frozen=True)
class LanguageCheck:
    valid: bool
    reason: str = ""
    label: str = None

    def __bool__(self):
        return self.valid


@dataclass(frozen=True)
class LanguageTable:
    """Two-letter ISO codes plus extension codes keyed ``authority-code``."""

    iso: dict
    extensions: dict

    @classmethod
    def load(cls, iso_path=None, extension_path=None):
        iso = _read_path(iso_path) if iso_path else _read_packaged(ISO_FILE)
        ext = _read_path(extension_path) if extension_path else _read_packaged(EXTENSION_FILE)
        return cls(iso, ext)

    def identifiers(self):
        """Every identifier the table accepts, in serialized form."""
        return list(self.iso) + ["x-" + key for key in self.extensions]

    def as_vocabulary(self, name="olac:language"):
        terms = dict(self.iso)
        terms.update(("x-" + k, v) for k, v in self.extensions.items())
        return ControlledVocabulary(name, terms)


def validate_language_identifier(identifier, table):
    parsed = parse_language_identifier(identifier)
    if parsed is None:
        return LanguageCheck(False, "not a coded identifier")
    if parsed.kind == "iso639_1":
        if identifier in table.iso:
            return LanguageCheck(True, label=table.iso[identifier])
        return LanguageCheck(False, "unknown ISO 639-1 code %r" % identifier)
    key = "%s-%s" % (parsed.authority, parsed.code)
    if key in table.extensions:
        return LanguageCheck(True, label=table.extensions[key])
    return LanguageCheck(False, "unknown extension code %r" % identifier)


@dataclass(frozen=True)
class ApplicationProfile:
    olac_namespace_uri: str
    vocabularies: dict
    refinement_parent: dict
    languages: LanguageTable = None
    legacy_refinements: dict = field(default_factory=dict)

    def __post_init__(self):
        missing = [name for name in self.vocabularies if name not in self.refinement_parent]
        if missing:
            raise ValueError("vocabularies without refinement parents: %s" % ", ".join(missing))

    def is_olac(self, uri):
        return uri == self.olac_namespace_uri or ns.is_olac(uri)

    def knows_type(self, local):
        return "olac:" + local in self.refinement_parent

    def parents_of(self, local):
        return self.refinement_parent.get("olac:" + local, frozenset())

    def vocabulary(self, local):
        return self.vocabularies.get("olac:" + local)


def load_profile(vocab_paths=(), olac_namespace_uri=ns.OLAC):
    """Assemble the shipped profile, replacing any table named in ``vocab_paths``.

    Override files are matched by stem: ``role.tab`` replaces the role
    vocabulary, ``iso639-1.tab`` and ``language-extensions.tab`` the
    language tables.
    """
    overrides = {Path(p).stem: Path(p) for p in vocab_paths}
    languages = LanguageTable.load(overrides.get(ISO_FILE), overrides.get(EXTENSION_FILE))
    vocabularies = {"olac:language": languages.as_vocabulary()}
    for stem, name in VOCABULARY_FILES.items():
        terms = _read_path(overrides[stem]) if stem in overrides else _read_packaged(stem)
        vocabularies[name] = ControlledVocabulary(name, terms)
    return ApplicationProfile(
        olac_namespace_uri=olac_namespace_uri,
        vocabularies=vocabularies,
        refinement_parent=dict(DEFAULT_REFINEMENT_PARENT),
        languages=languages,
        legacy_refinements=dict(DEFAULT_LEGACY_REFINEMENTS),
    )


_default_profile = None


def default_profile():
    global _default_profile
    if _default_profile is None:
        _default_profile = load_profile()
    return _default_profile
