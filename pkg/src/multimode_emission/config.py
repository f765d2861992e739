"""Flat ``key = value`` configuration files.

Units live in key names (``kappa_per_us``, ``chi_a_MHz``, ``C_ac_fF``).
Blank lines and ``#`` comments are ignored.  Lists are comma separated.
Every error names the offending line.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

from . import units
from .errors import ConfigError


@dataclass
class ConfigFile:
    values: dict
    lines: dict = field(default_factory=dict)  # key -> 1-based line number
    source: str = "<string>"

    def line_of(self, key):
        return self.lines.get(key)

    def content_hash(self) -> str:
        return config_hash(self.values)


def config_hash(values: dict) -> str:
    canon = "\n".join(f"{k}={values[k]}" for k in sorted(values))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def parse_config(text: str, source: str = "<string>") -> ConfigFile:
    values, lines = {}, {}
    for num, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", num)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or not key.replace("_", "").isalnum():
            raise ConfigError(f"invalid key {key!r}", num, key)
        if key in values:
            raise ConfigError(f"duplicate key {key!r} (first set on line {lines[key]})", num, key)
        if value == "":
            raise ConfigError(f"empty value for {key!r}", num, key)
        values[key] = value
        lines[key] = num
    return ConfigFile(values, lines, source)


def read_config(path) -> ConfigFile:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from exc
    return parse_config(text, str(path))


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ", ".join(format_value(x) for x in v)
    return str(v)


def write_config(path, values: dict, header: str | None = None):
    out = [f"# {header}"] if header else []
    out += [f"{k} = {format_value(v)}" for k, v in values.items()]
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


# -- typed access ----------------------------------------------------------------------


class Reader:
    """Typed, line-aware accessors over a :class:`ConfigFile`; tracks used keys."""

    def __init__(self, cfg: ConfigFile):
        self.cfg = cfg
        self.used = set()

    def has(self, key) -> bool:
        return key in self.cfg.values

    def _raw(self, key, default):
        self.used.add(key)
        if key not in self.cfg.values:
            if default is _REQUIRED:
                raise ConfigError(f"missing required key {key!r}", None, key)
            return None
        return self.cfg.values[key]

    def _fail(self, key, msg):
        raise ConfigError(f"{key}: {msg}", self.cfg.line_of(key), key)

    def float(self, key, default=None, positive=False, nonnegative=False):
        raw = self._raw(key, default)
        if raw is None:
            return default
        try:
            v = float(raw)
        except ValueError:
            self._fail(key, f"expected a number, got {raw!r}")
        if not math.isfinite(v):
            self._fail(key, "must be finite")
        if positive and v <= 0:
            self._fail(key, f"must be positive, got {v}")
        if nonnegative and v < 0:
            self._fail(key, f"must be non-negative, got {v}")
        return v

    def int(self, key, default=None, minimum=None):
        raw = self._raw(key, default)
        if raw is None:
            return default
        try:
            v = int(raw)
        except ValueError:
            self._fail(key, f"expected an integer, got {raw!r}")
        if minimum is not None and v < minimum:
            self._fail(key, f"must be at least {minimum}, got {v}")
        return v

    def str(self, key, default=None, choices=None):
        raw = self._raw(key, default)
        if raw is None:
            return default
        if choices is not None and raw not in choices:
            self._fail(key, f"must be one of {', '.join(choices)}; got {raw!r}")
        return raw

    def bool(self, key, default=None):
        raw = self._raw(key, default)
        if raw is None:
            return default
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        self._fail(key, f"expected true/false, got {raw!r}")

    def floats(self, key, default=None):
        raw = self._raw(key, default)
        if raw is None:
            return default
        items = [s.strip() for s in raw.split(",") if s.strip()]
        if not items:
            self._fail(key, "empty list")
        try:
            return [float(s) for s in items]
        except ValueError:
            self._fail(key, f"expected comma-separated numbers, got {raw!r}")

    def mhz(self, key, default=None):
        v = self.float(key, None if default is None else default)
        return None if v is None else units.mhz_to_rad_per_us(v)

    def path(self, key, default=None, must_exist=True):
        raw = self._raw(key, default)
        if raw is None:
            return default
        p = Path(raw)
        if not p.is_absolute() and self.cfg.source != "<string>":
            p = Path(self.cfg.source).parent / p
        if must_exist and not p.exists():
            self._fail(key, f"file {p} does not exist")
        return p

    def check_unused(self, allowed=()):
        extra = [k for k in self.cfg.values if k not in self.used and k not in allowed]
        if extra:
            k = min(extra, key=lambda x: self.cfg.line_of(x))
            raise ConfigError(f"unknown key {k!r}", self.cfg.line_of(k), k)


_REQUIRED = object()
REQUIRED = _REQUIRED
