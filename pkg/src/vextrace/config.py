"""Flat key/value problem configs with section headers.

Format: ``[section]`` headers, ``key = value`` lines, ``#`` comments.
Repeated keys accumulate in order (used for boundary pieces).  Example::

    [domain]
    arc = 0 0 1 0 6.283185307179586
    h = 0.05
    gamma =

    [exponents]
    n = 2
    p_expr = 1.5
    r_expr = 2

    [solver]
    init = constant
    max_iter = 200
    tol = 1e-6
    radii = 0.3 1.0

Boundary pieces: ``segment = x0 y0 x1 y1`` or ``arc = cx cy R a0 a1`` in
loop order; ``gamma`` lists piece indices carrying the zero condition.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

from .exponents import ExponentField
from .geometry import BoundaryLoop, CircularArc, Segment, mesh_domain


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def parse_config_text(text):
    """Parse into {section: {key: [values...]}} preserving repeat order."""
    sections = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if current is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, value = line.split("=", 1)
        sections[current].setdefault(key.strip(), []).append(value.strip())
    return sections


@dataclass
class ProblemConfig:
    """Typed access over the parsed sections, with the raw text hash."""

    sections: dict
    text: str = ""
    path: str | None = None

    @classmethod
    def from_path(cls, path):
        with open(path) as fh:
            text = fh.read()
        return cls(parse_config_text(text), text=text, path=str(path))

    @classmethod
    def from_text(cls, text):
        return cls(parse_config_text(text), text=text)

    @property
    def config_hash(self):
        return hashlib.sha256(self.text.encode()).hexdigest()

    # -- raw getters ---------------------------------------------------------

    def _get(self, section, key, default=None, required=False):
        vals = self.sections.get(section, {}).get(key)
        if not vals:
            if required:
                raise ConfigError(f"missing [{section}] {key}")
            return default
        return vals[-1]

    def get_str(self, section, key, default=None, required=False):
        return self._get(section, key, default, required)

    def get_float(self, section, key, default=None, required=False):
        v = self._get(section, key, default, required)
        if v is default:
            return default
        try:
            return float(v)
        except (TypeError, ValueError):
            raise ConfigError(f"[{section}] {key}: not a number: {v!r}")

    def get_int(self, section, key, default=None, required=False):
        v = self.get_float(section, key, default, required)
        return v if v is default else int(v)

    def get_floats(self, section, key, default=()):
        v = self._get(section, key)
        if v is None:
            return list(default)
        if not v:
            return []
        try:
            return [float(x) for x in v.split()]
        except ValueError:
            raise ConfigError(f"[{section}] {key}: expected numbers: {v!r}")

    def get_ints(self, section, key, default=()):
        return [int(x) for x in self.get_floats(section, key, default)]

    # -- builders --------------------------------------------------------------

    def build_loop(self):
        pieces = []
        order = []
        for raw in self.text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line or "=" not in line:
                continue
            key = line.split("=", 1)[0].strip()
            if key in ("segment", "arc"):
                order.append((key, line.split("=", 1)[1].strip()))
        if not order:
            raise ConfigError("missing [domain] segment/arc entries")
        for kind, spec in order:
            try:
                nums = [float(x) for x in spec.split()]
            except ValueError:
                raise ConfigError(f"[domain] {kind}: bad numbers: {spec!r}")
            if kind == "segment":
                if len(nums) != 4:
                    raise ConfigError(f"[domain] segment needs x0 y0 x1 y1: {spec!r}")
                pieces.append(Segment((nums[0], nums[1]), (nums[2], nums[3])))
            else:
                if len(nums) != 5:
                    raise ConfigError(f"[domain] arc needs cx cy R a0 a1: {spec!r}")
                pieces.append(CircularArc((nums[0], nums[1]), nums[2], nums[3], nums[4]))
        return BoundaryLoop(tuple(pieces))

    def build_domain(self):
        h = self.get_float("domain", "h", required=True)
        if h <= 0:
            raise ConfigError("[domain] h must be positive")
        gamma = self.get_ints("domain", "gamma", default=())
        return mesh_domain(self.build_loop(), h, gamma_arcs=gamma)

    def build_exponents(self):
        n = self.get_int("exponents", "n", default=2)
        p_text = self.get_str("exponents", "p_expr", required=True)
        r_text = self.get_str("exponents", "r_expr", required=True)
        try:
            p = ExponentField.from_text(p_text, n)
            r = ExponentField.from_text(r_text, n)
        except ValueError as err:
            raise ConfigError(f"[exponents]: {err}")
        return p, r

    def build_problem(self):
        from .solver import DiscreteTraceProblem

        domain = self.build_domain()
        p, r = self.build_exponents()
        crit_tol = self.get_float("solver", "crit_tol", default=1e-8)
        try:
            return DiscreteTraceProblem(domain, p, r, crit_tol=crit_tol)
        except ValueError as err:
            raise ConfigError(f"problem assembly: {err}")

    def solver_options(self):
        init = self.get_str("solver", "init", default="constant")
        if init.startswith("bubble"):
            parts = init.split()
            if len(parts) != 4:
                raise ConfigError("[solver] init bubble needs: bubble x y lam")
            init = ("bubble", (float(parts[1]), float(parts[2])), float(parts[3]))
        elif init not in ("constant", "random", "multistart"):
            raise ConfigError(f"[solver] init: unknown {init!r}")
        return {
            "init": init,
            "max_iter": self.get_int("solver", "max_iter", default=200),
            "tol": self.get_float("solver", "tol", default=1e-6),
            "radii": self.get_floats("solver", "radii", default=()),
            "n_random": self.get_int("solver", "n_random", default=3),
        }


def hash_of_args(args_repr):
    return hashlib.sha256(args_repr.encode()).hexdigest()


def isfinite_or_error(name, value):
    if not math.isfinite(value):
        raise ConfigError(f"{name} must be finite")
    return value
