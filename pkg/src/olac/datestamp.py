"""UTC datestamps at one-second granularity."""

import re
from datetime import datetime, timedelta, timezone

from .errors import BadArgumentError

GRANULARITY = "YYYY-MM-DDThh:mm:ssZ"
EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
ONE_SECOND = timedelta(seconds=1)

_FULL = re.compile(r"^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}Z$")
_DAY = re.compile(r"^\d{4}-\d{2}-\d{2}$")


def parse_datestamp(text):
    """Parse ``YYYY-MM-DD`` or ``YYYY-MM-DDThh:mm:ssZ`` into an aware datetime."""
    if isinstance(text, datetime):
        return normalize(text)
    text = (text or "").strip()
    try:
        if _FULL.match(text):
            dt = datetime.strptime(text, "%Y-%m-%dT%H:%M:%SZ")
        elif _DAY.match(text):
            dt = datetime.strptime(text, "%Y-%m-%d")
        else:
            raise ValueError(text)
    except ValueError:
        raise BadArgumentError("malformed datestamp %r" % text) from None
    return dt.replace(tzinfo=timezone.utc)


def normalize(dt):
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).replace(microsecond=0)


def format_datestamp(dt):
    return normalize(dt).strftime("%Y-%m-%dT%H:%M:%SZ")


def utcnow():
    return normalize(datetime.now(timezone.utc))
