"""Run configuration: YAML files validated into a :class:`RunConfig`.

Example::

    domain: {kind: ball, n: 1, radius: 1.0}
    h: 1/32
    obstacle: "0"
    f: "4"
    method: obstacle

Spacings may be written as fractions (``1/32``).  Obstacles and densities are
expressions, numbers, or ``{file: path}`` pointing at a grid function file.
"""

from dataclasses import dataclass, field, fields
import difflib
from fractions import Fraction
import logging
import os

import numpy as np
import yaml

from .domain import ball, from_dict
from .errors import ConfigError, DomainError, ExpressionSyntaxError, ParseError, StencilError, ValidationError
from .expr import Expression
from .solver import DEFAULT_TOL
from .stencil import StencilSet

log = logging.getLogger(__name__)

METHODS = ("obstacle", "berman")
MODES = ("seq", "redblack")
OBSTACLE_DENSITY = "obstacle_density"

TOP_KEYS = (
    "n", "domain", "h", "refinement", "stencil", "obstacle", "f", "g", "p", "method", "j_schedule",
    "tol", "max_iter", "mode", "subsolution", "check_maximality", "exact", "capacity_set",
    "experiments", "out", "seed",
)


@dataclass
class RunConfig:
    """Validated run parameters (defaults resolved)."""

    domain: object
    h: float = 1 / 32
    refinement: list = field(default_factory=list)
    stencil: object = None
    obstacle: object = "0"
    f: object = 0.0
    g: object = None
    p: float = 2.0
    method: str = "obstacle"
    j_schedule: list = field(default_factory=lambda: [float(2 ** k) for k in range(11)])
    tol: float = None
    max_iter: int = 400_000
    mode: str = "seq"
    subsolution: str = "check"
    check_maximality: bool = False
    exact: str = None
    capacity_set: object = None
    experiments: dict = field(default_factory=dict)
    out: str = "out"
    seed: int = 0
    source: str = None

    @property
    def n(self):
        return self.domain.n

    def to_dict(self):
        """Effective configuration as plain data (round-trips through :func:`config_from_dict`)."""
        d = {}
        for fl in fields(self):
            if fl.name == "source":
                continue
            v = getattr(self, fl.name)
            if fl.name == "domain":
                v = v.to_dict()
            elif fl.name == "stencil":
                v = v.to_config() if self.n == 2 else {}
            d[fl.name] = v
        return d


def _line_map(text):
    """Line numbers (1-based) of mapping keys, keyed by dotted path."""
    lines = {}
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return lines

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                key = f"{prefix}{k.value}"
                lines[key] = k.start_mark.line + 1
                walk(v, key + ".")

    walk(root, "")
    return lines


def _where(lines, key):
    ln = lines.get(key)
    return f" (line {ln})" if ln else ""


def _check_keys(d, allowed, lines, prefix=""):
    for k in d:
        if k not in allowed:
            close = difflib.get_close_matches(str(k), allowed, n=1)
            hint = f"; did you mean {close[0]!r}?" if close else ""
            raise ParseError(f"unknown key {prefix}{k!r}{_where(lines, prefix + str(k))}{hint}")


def parse_number(v, name):
    """Float from a number or a fraction string such as ``"1/32"``."""
    if isinstance(v, bool):
        raise ValidationError(f"{name}: expected a number, got {v!r}")
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str):
        try:
            return float(Fraction(v.strip()))
        except (ValueError, ZeroDivisionError):
            pass
    raise ValidationError(f"{name}: expected a number, got {v!r}")


def _data_source(v, name, base, allow_obstacle_density=False):
    """Normalise an obstacle/density entry to a float, expression text or {'file': path}."""
    if v is None:
        return None
    if isinstance(v, bool):
        raise ValidationError(f"{name}: expected an expression, number or file")
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str):
        if allow_obstacle_density and v.strip() == OBSTACLE_DENSITY:
            return OBSTACLE_DENSITY
        try:
            Expression(v)
        except ExpressionSyntaxError as exc:
            raise ValidationError(f"{name}: {exc}") from None
        return v
    if isinstance(v, dict):
        if set(v) != {"file"}:
            raise ValidationError(f"{name}: a mapping must have the single key 'file'")
        path = v["file"]
        if base and not os.path.isabs(path):
            path = os.path.join(base, path)
        if not os.path.exists(path):
            raise ValidationError(f"{name}: file {path!r} does not exist")
        return {"file": path}
    raise ValidationError(f"{name}: expected an expression, number or file, got {type(v).__name__}")


def _check_density(v, name, spec):
    """Reject densities that are negative somewhere on a coarse sample of the domain."""
    if v is None or v == OBSTACLE_DENSITY or isinstance(v, dict):
        return
    if isinstance(v, float):
        if not v >= 0:
            raise ValidationError(f"{name}: density must be >= 0, got {v:g}")
        return
    lo, hi = spec.bounding_box()
    axes = [np.linspace(a, b, 9) for a, b in zip(lo, hi)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 2 * spec.n)
    pts = pts[spec.rho(pts) < 0]
    if not len(pts):
        return
    try:
        vals = Expression(v).evaluate(pts)
    except ConfigError:
        raise
    except Exception as exc:  # evaluation problems surface with the field name
        raise ValidationError(f"{name}: {exc}") from None
    if np.any(vals < 0):
        raise ValidationError(f"{name}: density must be >= 0 (value {vals.min():g} at a sample point)")


def config_from_dict(d, strict=True, lines=None, base=None, source=None):
    """Validate a mapping into a RunConfig."""
    lines = lines or {}
    if d is None:
        d = {}
    if not isinstance(d, dict):
        raise ParseError("configuration must be a mapping")
    if strict:
        _check_keys(d, TOP_KEYS, lines)
    else:
        for k in d:
            if k not in TOP_KEYS:
                log.warning("ignoring unknown config key %r%s", k, _where(lines, str(k)))
        d = {k: v for k, v in d.items() if k in TOP_KEYS}

    n = int(d.get("n", 1))
    try:
        dom = d.get("domain")
        if dom is None:
            spec = ball(radius=1.0, n=n)
        else:
            dom = dict(dom)
            dom.setdefault("n", n)
            spec = from_dict(dom)
    except (DomainError, KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"domain{_where(lines, 'domain')}: {exc}") from None
    if "n" in d and spec.n != n:
        raise ValidationError(f"n = {n} does not match the domain dimension {spec.n}")

    kw = {"domain": spec, "source": source}
    if "h" in d:
        kw["h"] = parse_number(d["h"], "h")
        if not kw["h"] > 0:
            raise ValidationError("h: spacing must be positive")
    if "refinement" in d:
        ref = [parse_number(x, "refinement") for x in d["refinement"]]
        if any(not x > 0 for x in ref):
            raise ValidationError("refinement: spacings must be positive")
        kw["refinement"] = ref
    try:
        kw["stencil"] = StencilSet.from_config(spec.n, d.get("stencil"))
    except StencilError as exc:
        raise ValidationError(f"stencil{_where(lines, 'stencil')}: {exc}") from None
    if "obstacle" in d:
        kw["obstacle"] = _data_source(d["obstacle"], "obstacle", base)
    for name in ("f", "g"):
        if name in d:
            kw[name] = _data_source(d[name], name, base, allow_obstacle_density=(name == "g"))
            _check_density(kw[name], name, spec)
    if "p" in d:
        kw["p"] = parse_number(d["p"], "p")
        if not kw["p"] > 1:
            raise ValidationError("p: integrability exponent must exceed 1")
    if "method" in d:
        if d["method"] not in METHODS:
            raise ValidationError(f"method: expected one of {METHODS}, got {d['method']!r}")
        kw["method"] = d["method"]
    if "mode" in d:
        if d["mode"] not in MODES:
            raise ValidationError(f"mode: expected one of {MODES}, got {d['mode']!r}")
        kw["mode"] = d["mode"]
    if "subsolution" in d:
        if d["subsolution"] not in ("check", "declared"):
            raise ValidationError("subsolution: expected 'check' or 'declared'")
        kw["subsolution"] = d["subsolution"]
    if "j_schedule" in d:
        js = d["j_schedule"]
        if isinstance(js, dict):
            _check_keys(js, ("k_max",), lines, "j_schedule.")
            js = [float(2 ** k) for k in range(int(js.get("k_max", 10)) + 1)]
        js = [parse_number(j, "j_schedule") for j in js]
        if not js or any(j < 0 for j in js) or any(b < a for a, b in zip(js, js[1:])):
            raise ValidationError("j_schedule: expected a nonempty nondecreasing list of j >= 0")
        kw["j_schedule"] = js
    if "tol" in d:
        kw["tol"] = parse_number(d["tol"], "tol")
        if not kw["tol"] > 0:
            raise ValidationError("tol: tolerance must be positive")
    else:
        kw["tol"] = DEFAULT_TOL[spec.n]
    if "max_iter" in d:
        kw["max_iter"] = int(d["max_iter"])
        if kw["max_iter"] <= 0:
            raise ValidationError("max_iter: must be positive")
    if "check_maximality" in d:
        kw["check_maximality"] = bool(d["check_maximality"])
    if "exact" in d and d["exact"] is not None:
        kw["exact"] = _data_source(str(d["exact"]), "exact", base)
    if "capacity_set" in d:
        kw["capacity_set"] = _data_source(d["capacity_set"], "capacity_set", base)
    if "experiments" in d:
        ex = d["experiments"]
        if isinstance(ex, str):
            ex = [ex]
        if isinstance(ex, list):
            ex = {str(name): {} for name in ex}
        if not isinstance(ex, dict):
            raise ValidationError("experiments: expected a list of names or a mapping")
        kw["experiments"] = {k: dict(v or {}) for k, v in ex.items()}
    if "out" in d:
        kw["out"] = str(d["out"])
    if "seed" in d:
        kw["seed"] = int(d["seed"])
    return RunConfig(**kw)


def parse_config(path, strict=True):
    """Read and validate a YAML configuration file.

    Raises
    ------
    ParseError
        Malformed YAML, or an unknown key in strict mode (with a suggestion).
    ValidationError
        A field has an invalid value; the message names the field.
    """
    with open(path) as fh:
        text = fh.read()
    return parse_config_text(text, strict=strict, base=os.path.dirname(os.path.abspath(path)), source=path)


def parse_config_text(text, strict=True, base=None, source=None):
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        problem = getattr(exc, "problem", None) or str(exc)
        raise ParseError(f"malformed configuration{where}: {problem}") from None
    return config_from_dict(data, strict=strict, lines=_line_map(text), base=base, source=source)
