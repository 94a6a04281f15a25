"""Experiment configuration: an INI file with typed values.

Sections are ``[map] [kernel] [grid] [solver] [sweep] [output]``.  Values
are Python-style literals (numbers, quoted or bare strings, ``true``/``false``
and bracketed lists).  Every validation error names the offending line.
See ``docs/config.md`` for the full key reference.
"""

import ast
import configparser
import hashlib
import re
from dataclasses import dataclass, field

from .errors import CatalogError, ConfigError
from .maps import CATALOG, _PARAM_NAMES, build_catalog_map
from .noise import DEFAULT_EPSILONS

SECTIONS = ("map", "kernel", "grid", "solver", "sweep", "output")


@dataclass
class ExperimentConfig:
    map_name: str
    map_parameters: dict
    kernel: dict
    grid_cells: tuple
    epsilon_list: tuple
    solver: dict
    seeds: tuple
    output_dir: str
    sweep: dict = field(default_factory=dict)
    text: str = ""

    @property
    def config_hash(self):
        return hashlib.sha256(self.text.encode()).hexdigest()

    def build_map(self):
        return build_catalog_map(self.map_name, **self.map_parameters)


# key -> (type name, default); type names are checked by _coerce
_SCHEMA = {
    "kernel": {"shape": ("str", "ball"), "policy": ("str", None), "mask": ("boollist", None),
               "epsilon": ("pos", None)},
    "grid": {"cells": ("intlist", None), "reference_factor": ("int", 8)},
    "solver": {"tol": ("pos", 1e-10), "max_iters": ("int", 100_000),
               "samples_per_cell": ("int", None), "method": ("str", "power"),
               "n_steps": ("int", 100_000), "renorm_period": ("int", 1),
               "lanes": ("int", 20), "x0": ("floatlist", None),
               "n_samples": ("int", 100_000), "n_init": ("int", 500),
               "n_iter": ("int", 100_000), "basin_tol": ("pos", 0.02),
               "degenerate_tol": ("pos", 1e-6), "orbit_steps": ("int", 1000)},
    "sweep": {"epsilon_list": ("poslist", DEFAULT_EPSILONS), "seeds": ("intlist", (0,)),
              "lyapunov_steps": ("int", 100_000), "metric": ("str", "auto")},
    "output": {"directory": ("str", "out")},
}

_CHOICES = {("kernel", "shape"): ("ball", "cube"), ("kernel", "policy"): ("wrap", "reject"),
            ("solver", "method"): ("power", "direct"),
            ("sweep", "metric"): ("auto", "L1", "W1_circle", "W1_projected")}

_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([A-Za-z_][\w\-]*)\s*[=:]")


def _line_index(text):
    """(section, key) -> 1-based line number, plus section -> header line."""
    where, section = {}, None
    for no, line in enumerate(text.splitlines(), 1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip()
            where.setdefault((section, None), no)
            continue
        m = _KEY_RE.match(line)
        if m and section is not None:
            where.setdefault((section, m.group(1).lower()), no)
    return where


def _literal(raw):
    raw = raw.strip()
    low = raw.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        if raw.startswith("["):
            raise
        return raw


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _coerce(kind, value):
    """Return the value converted to ``kind`` or raise ``TypeError``."""
    if kind == "str":
        if isinstance(value, str):
            return value
    elif kind == "int":
        if _is_num(value) and float(value) == int(value):
            return int(value)
    elif kind == "pos":
        if _is_num(value) and value > 0:
            return float(value)
    elif kind in ("intlist", "poslist", "floatlist", "boollist"):
        items = list(value) if isinstance(value, (list, tuple)) else [value]
        elem = {"intlist": "int", "poslist": "pos", "floatlist": "float"}.get(kind)
        if kind == "boollist":
            if all(isinstance(v, bool) for v in items):
                return tuple(items)
        elif elem == "float":
            if all(_is_num(v) for v in items):
                return tuple(float(v) for v in items)
        else:
            return tuple(_coerce(elem, v) for v in items)
    raise TypeError


_TYPE_WORDS = {"str": "a string", "int": "an integer", "pos": "a positive number",
               "intlist": "a list of integers", "poslist": "a list of positive numbers",
               "floatlist": "a list of numbers", "boollist": "a list of booleans"}


def parse_config(text):
    """Validate config text; raises :class:`ConfigError` naming the first bad line."""
    where = _line_index(text)
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno) from None
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside any section", exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line (expected 'key = value')", lineno) from None

    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]; expected one of "
                              f"{', '.join(SECTIONS)}", where.get((section, None)))
    if not parser.has_section("map"):
        raise ConfigError("missing [map] section", None)

    values = {}
    for section in SECTIONS:
        if section == "map" or not parser.has_section(section):
            continue
        for key, raw in parser.items(section):
            line = where.get((section, key))
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]", line)
            kind = _SCHEMA[section][key][0]
            try:
                value = _coerce(kind, _literal(raw))
            except (TypeError, ValueError, SyntaxError):
                raise ConfigError(f"type mismatch for {key!r}: expected "
                                  f"{_TYPE_WORDS[kind]}, got {raw.strip()!r}", line) from None
            choices = _CHOICES.get((section, key))
            if choices and value not in choices:
                raise ConfigError(f"{key} must be one of {choices}, got {value!r}", line)
            values[(section, key)] = value

    def get(section, key):
        return values.get((section, key), _SCHEMA[section][key][1])

    # map section: name plus catalog parameters
    items = dict(parser.items("map"))
    if "name" not in items:
        raise ConfigError("[map] needs a 'name' key", where.get(("map", None)))
    name = str(_literal(items.pop("name")))
    if name not in CATALOG:
        raise CatalogError(f"unknown map {name!r}; valid names: {', '.join(CATALOG)}",
                           where.get(("map", "name")))
    params = {}
    for key, raw in items.items():
        line = where.get(("map", key))
        if key not in _PARAM_NAMES[name]:
            raise ConfigError(f"unknown key {key!r} in [map] for {name}; accepted: "
                              f"{list(_PARAM_NAMES[name])}", line)
        value = _literal(raw)
        if not _is_num(value):
            raise ConfigError(f"type mismatch for {key!r}: expected a number, got "
                              f"{raw.strip()!r}", line)
        params[key] = value
    try:
        build_catalog_map(name, **params)
    except ConfigError as exc:
        raise ConfigError(str(exc), where.get(("map", None))) from None

    eps = get("sweep", "epsilon_list")
    line = where.get(("sweep", "epsilon_list"))
    if not eps:
        raise ConfigError("epsilon_list is empty", line)
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigError("epsilon_list not decreasing", line)
    seeds = get("sweep", "seeds")
    if not seeds:
        raise ConfigError("seeds is empty", where.get(("sweep", "seeds")))
    if any(s < 0 for s in seeds):
        raise ConfigError("seeds must be nonnegative", where.get(("sweep", "seeds")))
    cells = get("grid", "cells")
    if cells is not None and any(c < 1 for c in cells):
        raise ConfigError("grid cells must be positive", where.get(("grid", "cells")))

    kernel = {k: get("kernel", k) for k in _SCHEMA["kernel"]}
    solver = {k: get("solver", k) for k in _SCHEMA["solver"]}
    sweep = {k: get("sweep", k) for k in ("lyapunov_steps", "metric")}
    sweep["reference_factor"] = get("grid", "reference_factor")
    return ExperimentConfig(name, params, kernel, cells, tuple(eps), solver, tuple(seeds),
                            get("output", "directory"), sweep, text)
