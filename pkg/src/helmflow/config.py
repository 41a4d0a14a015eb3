"""Flat key = value experiment configuration with dotted section names.

The format is line-oriented text: blank lines and lines starting with '#'
are ignored; every other line is `dotted.key = value`.  Values are parsed
as int, float, bool (true/false), or kept as strings.  A canonical
serialization (sorted keys, repr-exact numbers) defines the config hash
that stamps every emitted artifact, so re-running a config reproduces
byte-identical outputs.
"""

import hashlib

__all__ = ["ExperimentConfig", "parse_value", "format_value"]


def parse_value(text):
    s = text.strip()
    low = s.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        pass
    return s


def format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


class ExperimentConfig:
    """An ordered mapping of dotted keys to scalar values."""

    def __init__(self, values=None):
        self.values = dict(values or {})

    # -- construction -------------------------------------------------- #

    @classmethod
    def from_text(cls, text):
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected 'key = value', "
                                 f"got {raw!r}")
            key, _, val = line.partition("=")
            key = key.strip()
            if not key:
                raise ValueError(f"line {lineno}: empty key")
            if key in values:
                raise ValueError(f"line {lineno}: duplicate key {key!r}")
            values[key] = parse_value(val)
        return cls(values)

    @classmethod
    def from_file(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    # -- access --------------------------------------------------------- #

    def get(self, key, default=None):
        return self.values.get(key, default)

    def require(self, key):
        if key not in self.values:
            raise KeyError(f"missing required config key {key!r}")
        return self.values[key]

    def section(self, prefix):
        """All keys under `prefix.` with the prefix stripped."""
        p = prefix + "."
        return {k[len(p):]: v for k, v in self.values.items()
                if k.startswith(p)}

    def __contains__(self, key):
        return key in self.values

    def __getitem__(self, key):
        return self.require(key)

    def set(self, key, value):
        self.values[key] = value

    # -- serialization ---------------------------------------------------#

    def canonical_text(self):
        lines = [f"{k} = {format_value(self.values[k])}"
                 for k in sorted(self.values)]
        return "\n".join(lines) + "\n"

    def hash(self):
        return hashlib.sha256(
            self.canonical_text().encode("utf-8")).hexdigest()[:12]

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.canonical_text())

    # -- validation ------------------------------------------------------#

    def validate_positive(self, keys):
        for k in keys:
            if k in self.values:
                v = self.values[k]
                if not isinstance(v, (int, float)) or isinstance(v, bool) \
                        or v <= 0:
                    raise ValueError(f"config key {k!r} must be a positive "
                                     f"number, got {v!r}")
