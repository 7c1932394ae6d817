"""Exception classes shared across the toolkit.

Protocol errors carry the OAI error code string in ``code`` so the
provider can turn any of them into an ``<error>`` element directly.
"""


class OlacError(Exception):
    pass


# -- metadata ---------------------------------------------------------------

class ParseError(OlacError):
    """Markup could not be read as a record or repository."""

    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = "%s (line %s, column %s)" % (message, line, column)
        super().__init__(message)
        self.line = line
        self.column = column


class UnknownElementError(ParseError):
    def __init__(self, tag, line=None):
        super().__init__("not a Dublin Core element: %s" % tag, line, 0 if line else None)
        self.tag = tag


class UnknownRefinementError(ParseError):
    def __init__(self, name):
        super().__init__("no refinement mapping for legacy element %s" % name)
        self.name = name


class SerializeError(OlacError):
    pass


class InvalidSubtagError(OlacError, ValueError):
    pass


# -- repository documents ---------------------------------------------------

class ValidationError(OlacError):
    def __init__(self, message, fields=()):
        if fields:
            message = "%s: %s" % (message, ", ".join(fields))
        super().__init__(message)
        self.fields = tuple(fields)


class DuplicateIdError(ValidationError):
    def __init__(self, local_id):
        super().__init__("duplicate record id %r" % local_id)
        self.local_id = local_id


class NotFoundError(OlacError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class RecordRejected(OlacError):
    """Metadata failed validation; ``findings`` holds the report."""

    def __init__(self, findings):
        errors = [f for f in findings if f.severity == "error"]
        super().__init__("record rejected: " + "; ".join(f.message for f in errors))
        self.findings = list(findings)


class NoOpWarning(UserWarning):
    pass


# -- protocol ---------------------------------------------------------------

class OAIError(OlacError):
    code = "badArgument"
    http_status = 200


class BadVerbError(OAIError):
    code = "badVerb"


class BadArgumentError(OAIError):
    code = "badArgument"


class CannotDisseminateFormatError(OAIError):
    code = "cannotDisseminateFormat"


class IdDoesNotExistError(OAIError):
    code = "idDoesNotExist"


class NoRecordsMatchError(OAIError):
    code = "noRecordsMatch"


class BadResumptionTokenError(OAIError):
    code = "badResumptionToken"


class NoSetHierarchyError(OAIError):
    code = "noSetHierarchy"


class BadRepositoryError(OAIError):
    code = "badRepository"
    http_status = 502


class UpstreamUnavailableError(OAIError):
    code = "upstreamUnavailable"
    http_status = 502


# -- aggregator -------------------------------------------------------------

class RegistrationError(OlacError):
    pass


class HarvestError(OlacError):
    pass
