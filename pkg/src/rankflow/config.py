"""Flat `key = value` experiment configs.

Grammar: one assignment per line, `#` starts a comment, values are
numbers, double-quoted strings, `true`/`false`, or bracketed lists of
numbers/strings.  Errors carry one-based line numbers.  Initial
distributions are written as e.g. "gaussian(0,1)", "point_mass(0)",
"uniform(-1,2)", or "mixture(0.3 gaussian(0,1), 0.7 uniform(-1,2))".
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

from .measures import InitialDistribution, gaussian, mixture, point_mass, uniform

__all__ = ["ConfigError", "RunConfig", "parse_config", "parse_init"]

_REQUIRED = object()


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


_KEY_RE = re.compile(r"^[A-Za-z_][A-Za-z_0-9]*$")
_NUM_RE = re.compile(r"^[-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?$")


def _parse_scalar(text: str, line: int):
    text = text.strip()
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        return text[1:-1]
    if text in ("true", "false"):
        return text == "true"
    if _NUM_RE.match(text):
        return int(text) if re.fullmatch(r"[-+]?\d+", text) else float(text)
    raise ConfigError(f"cannot parse value {text!r}", line)


def _parse_value(text: str, line: int):
    text = text.strip()
    if text.startswith("["):
        if not text.endswith("]"):
            raise ConfigError("unterminated list", line)
        inner = text[1:-1].strip()
        if not inner:
            return []
        return [_parse_scalar(part, line) for part in inner.split(",")]
    return _parse_scalar(text, line)


def parse_config(text: str) -> "RunConfig":
    values: dict = {}
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", i)
        key, _, value = line.partition("=")
        key = key.strip()
        if not _KEY_RE.match(key):
            raise ConfigError(f"bad key {key!r}", i)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", i)
        values[key] = _parse_value(value, i)
    return RunConfig(values=values, source=text)


@dataclass(frozen=True)
class RunConfig:
    values: dict
    source: str = field(default="", repr=False)

    def sha256(self) -> str:
        return hashlib.sha256(self.source.encode()).hexdigest()

    def _get(self, key: str, default):
        if key in self.values:
            return self.values[key]
        if default is _REQUIRED:
            raise ConfigError(f"missing required key {key!r}")
        return default

    def num(self, key: str, default=_REQUIRED) -> float:
        v = self._get(key, default)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"key {key!r} must be a number, got {v!r}")
        return float(v)

    def integer(self, key: str, default=_REQUIRED) -> int:
        v = self._get(key, default)
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"key {key!r} must be an integer, got {v!r}")
        return v

    def text(self, key: str, default=_REQUIRED) -> str:
        v = self._get(key, default)
        if not isinstance(v, str):
            raise ConfigError(f"key {key!r} must be a string, got {v!r}")
        return v

    def flag(self, key: str, default=_REQUIRED) -> bool:
        v = self._get(key, default)
        if not isinstance(v, bool):
            raise ConfigError(f"key {key!r} must be true or false, got {v!r}")
        return v

    def num_list(self, key: str, default=_REQUIRED) -> list:
        v = self._get(key, default)
        if not isinstance(v, list) or any(isinstance(x, (str, bool)) for x in v):
            raise ConfigError(f"key {key!r} must be a list of numbers, got {v!r}")
        return [float(x) for x in v]

    def int_list(self, key: str, default=_REQUIRED) -> list:
        v = self._get(key, default)
        if not isinstance(v, list) or any(not isinstance(x, int) or isinstance(x, bool) for x in v):
            raise ConfigError(f"key {key!r} must be a list of integers, got {v!r}")
        return list(v)


_INIT_TOKEN = re.compile(r"\s*([A-Za-z_]+|\(|\)|,|[-+]?\d*\.?\d+(?:[eE][-+]?\d+)?)")


def parse_init(spec: str) -> InitialDistribution:
    """Parse an initial-distribution spec string."""
    tokens = []
    pos = 0
    while pos < len(spec):
        m = _INIT_TOKEN.match(spec, pos)
        if not m:
            if spec[pos:].strip() == "":
                break
            raise ConfigError(f"bad initial distribution spec near {spec[pos:]!r}")
        tokens.append(m.group(1))
        pos = m.end()

    def expect(tok):
        if not tokens or tokens[0] != tok:
            raise ConfigError(f"expected {tok!r} in init spec {spec!r}")
        tokens.pop(0)

    def number() -> float:
        if not tokens:
            raise ConfigError(f"init spec {spec!r} ended unexpectedly")
        try:
            return float(tokens.pop(0))
        except ValueError:
            raise ConfigError(f"expected a number in init spec {spec!r}") from None

    def dist() -> InitialDistribution:
        if not tokens:
            raise ConfigError(f"init spec {spec!r} ended unexpectedly")
        name = tokens.pop(0)
        expect("(")
        if name == "point_mass":
            x0 = number()
            expect(")")
            return point_mass(x0)
        if name == "uniform":
            a = number()
            expect(",")
            b = number()
            expect(")")
            return uniform(a, b)
        if name == "gaussian":
            mu = number()
            expect(",")
            s = number()
            expect(")")
            return gaussian(mu, s)
        if name == "mixture":
            comps, weights = [], []
            while True:
                weights.append(number())
                comps.append(dist())
                if tokens and tokens[0] == ",":
                    tokens.pop(0)
                    continue
                break
            expect(")")
            return mixture(comps, weights)
        raise ConfigError(f"unknown initial distribution {name!r}")

    out = dist()
    if tokens:
        raise ConfigError(f"trailing tokens in init spec {spec!r}")
    return out
