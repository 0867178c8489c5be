"""Config-file handling, value parsers, and provenance tags for CSV output.

Config files are flat ``key = value`` text: one pair per line, ``#`` starts a
comment, blank lines are ignored.  Values stay strings until a subcommand
resolves them with its own parsers; resolution order is command-line flag,
then config file, then built-in default.  Unknown keys are rejected so a
typo cannot silently fall back to a default.

Provenance strings embed a hash of the fully resolved configuration and the
package version but never a timestamp, keeping reruns byte-identical.
"""

from __future__ import annotations

import hashlib
import math
from fractions import Fraction
from typing import Callable, Mapping, Sequence

from .errors import ConfigError

__all__ = [
    "parse_kv_text",
    "read_kv_file",
    "resolve",
    "parse_eps",
    "parse_dims",
    "parse_float_list",
    "parse_bool",
    "config_hash",
    "provenance",
]


def parse_kv_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; duplicate keys and malformed lines raise
    with their line number."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"config line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"config line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_kv_file(path) -> dict[str, str]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_kv_text(fh.read())


def resolve(
    flags: Mapping[str, object],
    file_values: Mapping[str, str],
    defaults: Mapping[str, object],
    parsers: Mapping[str, Callable[[str], object]],
) -> dict[str, object]:
    """Merge flag > file > default into one dict over the keys of ``defaults``.

    ``flags`` holds already-typed values (None meaning "not given"); file
    values are raw strings run through ``parsers``.  A file key outside the
    known set is an error.
    """
    unknown = set(file_values) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    out: dict[str, object] = {}
    for key, default in defaults.items():
        flag = flags.get(key)
        if flag is not None:
            out[key] = flag
        elif key in file_values:
            parser = parsers.get(key, str)
            try:
                out[key] = parser(file_values[key])
            except ConfigError:
                raise
            except (ValueError, ZeroDivisionError) as exc:
                raise ConfigError(f"config key {key!r}: {exc}")
        else:
            out[key] = default
    return out


def parse_eps(text: str) -> float:
    """Radius spec: plain float or an exact fraction like ``8/255``."""
    s = text.strip()
    try:
        if "/" in s:
            num, den = s.split("/", 1)
            frac = Fraction(int(num), int(den))
            value = frac.numerator / frac.denominator
        else:
            value = float(s)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"cannot parse radius {text!r}; use a float or a fraction like 8/255")
    if not math.isfinite(value) or value < 0:
        raise ConfigError(f"radius must be finite and >= 0, got {text!r}")
    return value


def parse_dims(text: str) -> tuple[int, ...]:
    """Layer sizes: comma-separated positive integers, at least two."""
    try:
        dims = tuple(int(p.strip()) for p in text.split(","))
    except ValueError:
        raise ConfigError(f"cannot parse layer sizes {text!r}; use e.g. 16,64,64,2")
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ConfigError(f"layer sizes need >= 2 positive entries, got {text!r}")
    return dims


def parse_float_list(text: str) -> tuple[float, ...]:
    """Comma-separated floats (fractions allowed), at least one."""
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ConfigError(f"expected at least one value in {text!r}")
    return tuple(parse_eps(p) for p in parts)


def parse_bool(text: str) -> bool:
    s = text.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"cannot parse boolean {text!r}")


# Keys that name output destinations; they never influence computed values,
# so they are left out of the provenance hash.
_OUTPUT_KEYS = frozenset({"out", "summary", "traces", "curves", "hist_out", "repro_dir"})


def config_hash(resolved: Mapping[str, object]) -> str:
    """Short stable digest of a resolved configuration (output paths excluded)."""
    keys = sorted(k for k in resolved if k not in _OUTPUT_KEYS)
    lines = "\n".join(f"{k}={resolved[k]!r}" for k in keys)
    return hashlib.sha256(lines.encode("utf-8")).hexdigest()[:12]


def provenance(command: str, resolved: Mapping[str, object], seeds: Sequence[int] = ()) -> str:
    """Comment line stamped into every CSV: toolkit version, the command, a
    digest of the full semantic configuration, and the seeds that drove it."""
    from . import __version__

    seed_part = ",".join(str(s) for s in seeds) if seeds else "-"
    return f"rgdkit/{__version__} {command} config={config_hash(resolved)} seeds={seed_part}"
