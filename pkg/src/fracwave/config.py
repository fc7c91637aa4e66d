"""Run configuration: a strict INI dialect.

Every section and key must appear in :data:`SCHEMA`; unknown names, bad
values and out-of-range numbers raise :class:`ConfigError` naming the key and
the line.  Missing keys take their defaults, and ``RunConfig.to_ini`` writes
every key back out, so parse -> serialize -> parse is the identity.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError


@dataclass(frozen=True)
class Key:
    kind: str  # float, int, str, bool, floats, path
    default: object
    lo: float | None = None
    hi: float | None = None
    choices: tuple = ()
    open_lo: bool = False
    open_hi: bool = False


def _f(default, lo=None, hi=None, open_lo=False, open_hi=False):
    return Key("float", default, lo, hi, open_lo=open_lo, open_hi=open_hi)


SCHEMA = {
    "physics": {
        "c": _f(1.0, 0.0, open_lo=True),
        "b": _f(0.1, 0.0),
        "alpha": _f(0.5, 0.0, 1.0, open_lo=True, open_hi=True),
        "k": _f(0.0),
        "k_decay": _f(0.0, 0.0),
        "T": _f(1.0, 0.0, open_lo=True),
        "b_max": _f(math.inf, 0.0),
        "delta": _f(math.inf, 0.0),
    },
    "mesh": {
        "n_elements": Key("int", 20, 1, 400),
        "a": _f(0.0),
        "b": _f(1.0),
        "file": Key("path", ""),
    },
    "time": {
        "n_steps": Key("int", 40, 1, 4096),
    },
    "boundary": {
        "profile": Key("str", "zero", choices=("zero", "sine", "ramp", "file")),
        "amplitude": _f(0.0),
        "frequency": _f(1.0),
        "file": Key("path", ""),
        "condition": Key("bool", True),
        "eps_steps": _f(4.0, 0.0, open_lo=True),
        "bump_r": _f(1.0, 0.0, open_lo=True),
        "bump_R": _f(2.0, 0.0, open_lo=True),
    },
    "source": {
        "profile": Key("str", "zero", choices=("zero", "gauss", "file")),
        "amplitude": _f(0.0),
        "center": _f(0.5),
        "width": _f(0.1, 0.0, open_lo=True),
        "frequency": _f(1.0),
        "file": Key("path", ""),
    },
    "objective": {
        "nu": Key("int", 1, 0, 1),
        "gamma": _f(1e-4, 0.0),
        "eta": _f(1e-4, 0.0),
        "roi": Key("floats", (0.0, 1.0)),
        "target": Key("str", "attainable", choices=("zero", "attainable", "file")),
        "target_file": Key("path", ""),
    },
    "admissible": {
        "L1_g": _f(1e6, 0.0, open_lo=True),
        "L2_f": _f(1e6, 0.0, open_lo=True),
    },
    "solver": {
        "fp_tol": _f(1e-12, 0.0, open_lo=True),
        "fp_max_iter": Key("int", 50, 1, 10000),
        "a_lower": _f(0.1, 0.0, open_lo=True),
        "a_upper": _f(4.0, 0.0, open_lo=True),
    },
    "optimizer": {
        "max_iter": Key("int", 200, 0, 100000),
        "step0": _f(1.0, 0.0, open_lo=True),
        "shrink": _f(0.5, 0.0, 1.0, open_lo=True),
        "c1": _f(1e-4, 0.0, 1.0, open_lo=True),
        "max_backtracks": Key("int", 30, 1, 1000),
        "tol": _f(1e-9, 0.0),
    },
    "study": {
        "deltas": Key("floats", (0.1, 0.05, 0.025, 0.0125)),
        "gammas": Key("floats", (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)),
    },
    "simulate": {
        "mode": Key("str", "state", choices=("state", "manufactured")),
        "levels": Key("int", 3, 1, 6),
    },
    "run": {
        "seed": Key("int", 0, 0, 2 ** 63 - 1),
    },
}


def _fmt(kind, value) -> str:
    if kind == "float":
        return repr(float(value))
    if kind == "floats":
        return ", ".join(repr(float(v)) for v in value)
    if kind == "bool":
        return "true" if value else "false"
    return str(value)


def _line_index(text: str) -> dict:
    """(section, key) -> 1-based line number, and section -> line number."""
    where = {}
    section = None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"^\[(.+)\]$", line)
        if m:
            section = m.group(1).strip()
            where.setdefault(section, i)
            continue
        m = re.match(r"^([^=:#;\s][^=:]*?)\s*[=:]", line)
        if m and section is not None:
            where.setdefault((section, m.group(1).strip()), i)
    return where


def _convert(section, name, spec: Key, raw: str, line):
    where = f"{section}.{name}"
    try:
        if spec.kind == "float":
            value = float(raw)
        elif spec.kind == "int":
            value = int(raw)
        elif spec.kind == "bool":
            low = raw.strip().lower()
            if low not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
                raise ValueError(raw)
            value = low in ("true", "yes", "1", "on")
        elif spec.kind == "floats":
            value = tuple(float(s) for s in raw.split(",") if s.strip())
        else:
            value = raw.strip()
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {spec.kind}"
                          + (f" (line {line})" if line else ""), key=where, line=line) from None
    nums = value if spec.kind == "floats" else (value,) if spec.kind in ("float", "int") else ()
    for v in nums:
        if math.isnan(v):
            raise ConfigError(f"{where}: NaN is not allowed", key=where, line=line)
        bad_lo = spec.lo is not None and (v <= spec.lo if spec.open_lo else v < spec.lo)
        bad_hi = spec.hi is not None and (v >= spec.hi if spec.open_hi else v > spec.hi)
        if bad_lo or bad_hi:
            raise ConfigError(f"{where}: value {v} out of range"
                              + (f" (line {line})" if line else ""), key=where, line=line)
    if spec.choices and value not in spec.choices:
        raise ConfigError(f"{where}: {value!r} is not one of {', '.join(spec.choices)}"
                          + (f" (line {line})" if line else ""), key=where, line=line)
    return value


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)
    base_dir: Path = field(default_factory=Path, compare=False)

    def __post_init__(self):
        full = {s: {k: spec.default for k, spec in keys.items()} for s, keys in SCHEMA.items()}
        for s, kv in self.values.items():
            if s not in SCHEMA:
                raise ConfigError(f"unknown section [{s}]", key=s)
            for k, v in kv.items():
                if k not in SCHEMA[s]:
                    raise ConfigError(f"unknown key {s}.{k}", key=f"{s}.{k}")
                full[s][k] = v
        self.values = full
        self._validate()

    def __getitem__(self, section) -> dict:
        return self.values[section]

    def _validate(self):
        if not self["mesh"]["b"] > self["mesh"]["a"]:
            raise ConfigError("mesh.b must exceed mesh.a", key="mesh.b")
        if not self["boundary"]["bump_r"] < self["boundary"]["bump_R"]:
            raise ConfigError("boundary.bump_r must be below boundary.bump_R", key="boundary.bump_r")
        if not self["solver"]["a_lower"] < self["solver"]["a_upper"]:
            raise ConfigError("solver.a_lower must be below solver.a_upper", key="solver.a_lower")
        if len(self["objective"]["roi"]) != 2:
            raise ConfigError("objective.roi needs two numbers", key="objective.roi")

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base_dir / p

    def check_files(self):
        """Raise FileNotFoundError for referenced files that do not exist."""
        refs = [("mesh", "file", False),
                ("boundary", "file", self["boundary"]["profile"] == "file"),
                ("source", "file", self["source"]["profile"] == "file"),
                ("objective", "target_file", self["objective"]["target"] == "file")]
        for s, k, required in refs:
            name = self[s][k]
            if required and not name:
                raise ConfigError(f"{s}.{k} is required by the selected profile", key=f"{s}.{k}")
            if name and not self.resolve(name).exists():
                raise FileNotFoundError(f"{s}.{k}: file {self.resolve(name)} not found")

    def to_ini(self) -> str:
        out = []
        for s, keys in SCHEMA.items():
            out.append(f"[{s}]")
            out += [f"{k} = {_fmt(spec.kind, self.values[s][k])}" for k, spec in keys.items()]
            out.append("")
        return "\n".join(out)

    def with_overrides(self, **sections) -> "RunConfig":
        vals = {s: dict(kv) for s, kv in self.values.items()}
        for s, kv in sections.items():
            vals[s].update(kv)
        return RunConfig(vals, self.base_dir)


def parse_config(text: str, base_dir=None) -> RunConfig:
    lines = _line_index(text)
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    parser.optionxform = str  # keys are case sensitive
    try:
        parser.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.section}.{exc.option} (line {exc.lineno})",
                          key=f"{exc.section}.{exc.option}", line=exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}] (line {exc.lineno})",
                          key=exc.section, line=exc.lineno) from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}", line=getattr(exc, "lineno", None)) from None
    if parser.defaults():
        raise ConfigError("keys outside a section are not allowed", key="DEFAULT")
    values = {}
    for section in parser.sections():
        if section not in SCHEMA:
            line = lines.get(section)
            raise ConfigError(f"unknown section [{section}] (line {line})", key=section, line=line)
        values[section] = {}
        for name, raw in parser.items(section):
            line = lines.get((section, name))
            if name not in SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{name} (line {line})",
                                  key=f"{section}.{name}", line=line)
            values[section][name] = _convert(section, name, SCHEMA[section][name], raw, line)
    return RunConfig(values, Path(base_dir) if base_dir is not None else Path.cwd())


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file {path} not found")
    return parse_config(path.read_text(), base_dir=path.parent)
