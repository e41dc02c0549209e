"""Run configuration: defaults, file parsing, and validation.

A config file is flat ``key = value`` text, one pair per line; blank lines
and ``#`` comments are ignored.  Command-line overrides win over the file,
the file wins over defaults.  ``depth`` accepts an integer or the literal
``inf``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

from .exceptions import ConfigError

__all__ = ["SolverConfig", "parse_config_file", "merge_overrides",
           "OPT_NORM_DEFAULTS", "format_resolved"]

PROBLEMS = ("richardson", "toy", "cavity")
METHODS = ("picard", "aa", "ngmres", "aag")
OPT_NORMS = ("l2", "h1", "vprime")

# which norm the least-squares minimization uses when the config leaves
# opt_norm unset; picard runs no minimization, the entry exists so
# resolution never fails
OPT_NORM_DEFAULTS = {"picard": "vprime", "aa": "h1",
                     "ngmres": "vprime", "aag": "vprime"}

# the flow problem measures map residuals in the velocity space and
# nonlinear residuals in the dual space; a mismatched choice has no
# meaning there (the linear problems accept any, every norm is l2)
_CAVITY_OPT_NORMS = {"aa": ("l2", "h1"), "ngmres": ("l2", "vprime"),
                     "aag": ("l2", "vprime"), "picard": OPT_NORMS}


@dataclass
class SolverConfig:
    problem: str = "cavity"
    method: str = "picard"
    depth: float = 2            # window cap; math.inf allowed
    adaptive: bool = False
    threshold: float = 0.01
    tol: float = 1e-8
    max_iter: int = 500
    opt_norm: str | None = None  # l2 | h1 | vprime; None = per-method default
    # problem parameters
    n: int = 20                 # linear-problem dimension
    seed: int = 0               # toy-problem generator seed
    omega: float = 0.25         # Richardson damping
    N: int = 16                 # cavity cells per side
    Re: float = 100.0

    def resolved_opt_norm(self):
        return self.opt_norm or OPT_NORM_DEFAULTS[self.method]

    def validate(self):
        """Raise ConfigError (naming the offending field) on any violation."""
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem: {self.problem!r} is not one of "
                              f"{'/'.join(PROBLEMS)}")
        if self.method not in METHODS:
            raise ConfigError(f"method: {self.method!r} is not one of "
                              f"{'/'.join(METHODS)}")
        if not (self.depth == math.inf
                or (float(self.depth).is_integer() and self.depth >= 0)):
            raise ConfigError("depth: must be a nonnegative integer or inf")
        if self.adaptive:
            if self.method != "aag":
                raise ConfigError("adaptive: only valid with method=aag")
            if self.depth == math.inf:
                raise ConfigError("adaptive: depth must be finite "
                                  "(it is the starting window)")
        if not self.threshold > 0:
            raise ConfigError("threshold: must be > 0")
        if not self.tol > 0:
            raise ConfigError("tol: must be > 0")
        if self.max_iter < 1:
            raise ConfigError("max_iter: must be >= 1")
        if self.opt_norm is not None:
            if self.opt_norm not in OPT_NORMS:
                raise ConfigError(f"opt_norm: {self.opt_norm!r} is not one "
                                  f"of {'/'.join(OPT_NORMS)}")
            if (self.problem == "cavity"
                    and self.opt_norm not in _CAVITY_OPT_NORMS[self.method]):
                raise ConfigError(
                    f"opt_norm: {self.opt_norm!r} does not apply to method "
                    f"{self.method!r} on the cavity problem (allowed: "
                    f"{'/'.join(_CAVITY_OPT_NORMS[self.method])})")
        if self.problem == "richardson":
            if self.n < 1:
                raise ConfigError("n: must be >= 1")
            if self.omega == 0:
                raise ConfigError("omega: must be nonzero")
        if self.problem == "toy" and self.n < 2:
            raise ConfigError("n: must be >= 2 for the toy problem")
        if self.problem == "cavity":
            if not 8 <= self.N <= 64:
                raise ConfigError("N: must be in [8, 64]")
            if not self.Re > 0:
                raise ConfigError("Re: must be > 0")
        return self


_FIELDS = {f.name: f for f in dataclasses.fields(SolverConfig)}


def _parse_value(key, text, where):
    text = text.strip()
    if key == "depth":
        if text == "inf":
            return math.inf
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"{where}: depth: expected integer or 'inf', "
                              f"got {text!r}") from None
    if key == "adaptive":
        low = text.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"{where}: adaptive: expected true/false, "
                          f"got {text!r}")
    if key == "opt_norm":
        return text
    kind = _FIELDS[key].type
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
    except ValueError:
        raise ConfigError(f"{where}: {key}: cannot parse {text!r} "
                          f"as {kind}") from None
    return text


def parse_config_file(path):
    """Read a flat key=value file into a dict of typed values."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected key = value, "
                                  f"got {stripped!r}")
            key, _, text = stripped.partition("=")
            key = key.strip()
            if key not in _FIELDS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _parse_value(key, text, f"{path}:{lineno}")
    return values


def merge_overrides(file_values, cli_values):
    """Build a validated SolverConfig; CLI beats file beats defaults."""
    merged = dict(file_values)
    merged.update({k: v for k, v in cli_values.items() if v is not None})
    unknown = set(merged) - set(_FIELDS)
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r}")
    return SolverConfig(**merged).validate()


def format_resolved(config):
    """Render the fully resolved config as key = value lines."""
    lines = []
    for f in dataclasses.fields(SolverConfig):
        value = getattr(config, f.name)
        if f.name == "depth" and value == math.inf:
            value = "inf"
        elif f.name == "opt_norm":
            value = config.resolved_opt_norm()
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
