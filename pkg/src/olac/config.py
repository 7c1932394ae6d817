"""Tool configuration: an INI file with an ``[olac]`` section plus ``OLAC_*`` overrides.

Example::

    [olac]
    data_dir = /var/lib/olac
    page_size = 500
    vida_ttl_seconds = 300
    token_expiry_hours = 24
    vocab_paths = /etc/olac/language-extensions.tab
    listen_vida = 127.0.0.1:8001
    listen_provider = 127.0.0.1:8002
    listen_aggregator = 127.0.0.1:8003
    listen_viser = 127.0.0.1:8004
    aggregator_url = http://127.0.0.1:8003/

Every key can be overridden by the upper-cased environment variable with an
``OLAC_`` prefix, e.g. ``OLAC_PAGE_SIZE=50``.
"""

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import OlacError

SERVICES = ("vida", "provider", "aggregator", "viser")
DEFAULT_PORTS = {"vida": 8001, "provider": 8002, "aggregator": 8003, "viser": 8004}
ENV_PREFIX = "OLAC_"
SECTION = "olac"


class ConfigError(OlacError):
    pass


def default_config_path():
    if os.environ.get(ENV_PREFIX + "CONFIG"):
        return Path(os.environ[ENV_PREFIX + "CONFIG"])
    base = os.environ.get("XDG_CONFIG_HOME") or Path.home() / ".config"
    return Path(base) / "olac" / "olac.ini"


def parse_address(text):
    host, sep, port = text.strip().rpartition(":")
    if not sep or not host:
        raise ConfigError("listen address %r is not host:port" % text)
    try:
        port = int(port)
    except ValueError:
        raise ConfigError("listen address %r has a non-numeric port" % text) from None
    if not 0 <= port <= 65535:
        raise ConfigError("listen address %r has an out-of-range port" % text)
    return host, port


@dataclass
class ToolConfig:
    data_dir: Path = field(default_factory=lambda: Path("olac-data"))
    page_size: int = 500
    vida_ttl_seconds: int = 300
    token_expiry_hours: int = 24
    vocab_paths: tuple = ()
    listen: dict = field(default_factory=lambda: {
        s: ("127.0.0.1", p) for s, p in DEFAULT_PORTS.items()})
    aggregator_url: str = ""
    token_secret: str = ""

    def check(self):
        """Raise ConfigError unless the invariants hold."""
        if self.page_size < 1:
            raise ConfigError("page_size must be at least 1")
        if self.vida_ttl_seconds < 0:
            raise ConfigError("vida_ttl_seconds must not be negative")
        if self.token_expiry_hours < 1:
            raise ConfigError("token_expiry_hours must be at least 1")
        for path in self.vocab_paths:
            if not Path(path).is_file():
                raise ConfigError("vocabulary file %s does not exist" % path)
        return self

    def listen_address(self, service):
        return self.listen[service]

    def profile(self):
        from .vocab import default_profile, load_profile
        if not self.vocab_paths:
            return default_profile()
        return load_profile(self.vocab_paths)

    def provider_config(self, base_url, profile=None):
        from datetime import timedelta

        from .provider import ProviderConfig
        extra = {"token_secret": self.token_secret.encode("utf-8")} if self.token_secret else {}
        return ProviderConfig(base_url=base_url, page_size=self.page_size,
                              token_expiry=timedelta(hours=self.token_expiry_hours),
                              profile=profile or self.profile(), **extra)


def _int(key, value):
    try:
        return int(value)
    except ValueError:
        raise ConfigError("%s must be an integer, not %r" % (key, value)) from None


def load_config(path=None, environ=None):
    """Read ``path`` (or the default location, if it exists) and apply env overrides."""
    environ = os.environ if environ is None else environ
    values = {}
    explicit = path is not None
    path = Path(path) if explicit else default_config_path()
    if path.exists():
        parser = configparser.ConfigParser()
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError("cannot parse %s: %s" % (path, exc)) from None
        if parser.has_section(SECTION):
            values.update(parser.items(SECTION))
    elif explicit:
        raise ConfigError("config file %s does not exist" % path)
    known = {"data_dir", "page_size", "vida_ttl_seconds", "token_expiry_hours", "vocab_paths",
             "aggregator_url", "token_secret"} | {"listen_" + s for s in SERVICES}
    for name, value in environ.items():
        key = name[len(ENV_PREFIX):].lower()
        if name.startswith(ENV_PREFIX) and key in known:
            values[key] = value

    cfg = ToolConfig()
    for key, value in values.items():
        if key == "data_dir":
            cfg.data_dir = Path(value).expanduser()
        elif key in ("page_size", "vida_ttl_seconds", "token_expiry_hours"):
            setattr(cfg, key, _int(key, value))
        elif key == "vocab_paths":
            cfg.vocab_paths = tuple(
                str(Path(p).expanduser()) for p in value.replace(",", " ").split())
        elif key.startswith("listen_") and key[len("listen_"):] in SERVICES:
            cfg.listen[key[len("listen_"):]] = parse_address(value)
        elif key in ("aggregator_url", "token_secret"):
            setattr(cfg, key, value)
        else:
            raise ConfigError("unknown configuration key %r" % key)
    return cfg.check()
