"""Sectioned ``key = value`` run configuration with full validation.

Every key has a type, a default (or is optional) and a range rule.  Parsing
collects all problems before failing, and rejects unknown sections and keys.
:func:`serialize_config` writes the resolved values back so that
``parse -> serialize -> parse`` is the identity.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

__all__ = ["COMMANDS", "SCHEMA", "ConfigError", "RunConfig", "parse_config",
           "parse_config_text", "serialize_config", "default_config"]

COMMANDS = ("scatter", "groundstate", "evolve-gp", "evolve-manybody", "verify-ops",
            "experiment-trapped-depletion")


class ConfigError(ValueError):
    """Raised with the complete list of validation problems."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


_REQUIRED = object()
_OPTIONAL = object()


@dataclass(frozen=True)
class _Key:
    kind: str                 # int, float, str, choice, ints, floats, path
    default: object = _OPTIONAL
    rule: str = ""
    check: object = None      # callable(value) -> bool
    choices: tuple = ()


def _pos(x):
    return x > 0


def _nonneg(x):
    return x >= 0


def _pow2(x):
    return x >= 1 and not (x & (x - 1))


SCHEMA: dict[str, dict[str, _Key]] = {
    "run": {
        "command": _Key("choice", _REQUIRED, choices=COMMANDS),
        "seed": _Key("int", 0, "seed >= 0", _nonneg),
        "out": _Key("str", "gplab-out"),
    },
    "potential": {
        "kind": _Key("choice", "square_well", choices=("square_well", "table")),
        "depth": _Key("float", 2.0, "depth >= 0", _nonneg),
        "radius": _Key("float", 1.0, "radius > 0", _pos),
        "dr": _Key("float", 1e-3, "dr > 0", _pos),
        "r_max": _Key("float", _OPTIONAL, "r_max > 0", _pos),
        "file": _Key("path", _OPTIONAL),
    },
    "grid": {
        "dim": _Key("int", 3, "dim in {1, 2, 3}", lambda x: x in (1, 2, 3)),
        "points": _Key("int", 16, "points is a power of two", _pow2),
        "h": _Key("float", 0.5, "h > 0", _pos),
    },
    "gp": {
        "g": _Key("float", 0.0, "g >= 0", _nonneg),
        "trap_omega": _Key("float", 0.0, "trap_omega >= 0", _nonneg),
        "tol": _Key("float", 1e-8, "tol > 0", _pos),
        "max_iter": _Key("int", 20000, "max_iter > 0", _pos),
        "initial": _Key("choice", "gaussian", choices=("gaussian", "plane_wave", "constant")),
        "width": _Key("float", 1.0, "width > 0", _pos),
        "mode": _Key("ints", (0,)),
        "dt": _Key("float", 1e-3, "dt > 0", _pos),
        "t_final": _Key("float", 1.0, "t_final > 0", _pos),
        "order": _Key("int", 4, "order in {2, 4}", lambda x: x in (2, 4)),
        "sample_every": _Key("int", 10, "sample_every >= 1", _pos),
        "mass_tol": _Key("float", 1e-10, "mass_tol > 0", _pos),
        "energy_tol": _Key("float", 1e-8, "energy_tol > 0", _pos),
    },
    "manybody": {
        "N": _Key("int", 2, "N >= 1", _pos),
        "sampling": _Key("choice", "sample", choices=("sample", "cell_average")),
        "scaling": _Key("choice", "gp", choices=("gp", "mean-field")),
        "initial": _Key("choice", "product", choices=("product", "correlated")),
        "dt": _Key("float", 5e-3, "dt > 0", _pos),
        "t_final": _Key("float", 0.5, "t_final > 0", _pos),
        "sample_every": _Key("int", 20, "sample_every >= 1", _pos),
        "krylov_dim": _Key("int", 12, "krylov_dim >= 2", lambda x: x >= 2),
        "krylov_tol": _Key("float", 1e-12, "krylov_tol > 0", _pos),
        "r": _Key("float", _OPTIONAL, "r > 0", _pos),
    },
    "verify": {
        "M": _Key("int", 2, "M >= 1", _pos),
        "N": _Key("int", 2, "N >= 1", _pos),
        "draws": _Key("int", 20, "draws >= 1", _pos),
        "kernel_scale": _Key("float", 0.2, "kernel_scale >= 0", _nonneg),
        "tol": _Key("float", 1e-10, "tol > 0", _pos),
    },
    "experiment": {
        "Ns": _Key("ints", (2, 3), "every N >= 1", lambda xs: len(xs) > 0 and min(xs) >= 1),
        "strengths": _Key("floats", (0.25, 0.5, 1.0), "every strength >= 0",
                          lambda xs: len(xs) > 0 and min(xs) >= 0),
        "trap_omega": _Key("float", 1.0, "trap_omega > 0", _pos),
        "sampling": _Key("choice", "cell_average", choices=("sample", "cell_average")),
        "scaling": _Key("choice", "gp", choices=("gp", "mean-field")),
    },
}


@dataclass
class RunConfig:
    """Validated configuration: command, seed, output directory and sections."""

    command: str
    seed: int
    out: str
    sections: dict = field(default_factory=dict)
    base_dir: str = "."

    def __getitem__(self, section: str) -> dict:
        return self.sections[section]

    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)


def _convert(raw: str, key: _Key, where: str, base: Path, errors: list):
    raw = raw.strip()
    try:
        if key.kind == "int":
            value = int(raw)
        elif key.kind == "float":
            value = float(raw)
            if value != value or value in (float("inf"), float("-inf")):
                raise ValueError
        elif key.kind == "ints":
            value = tuple(int(x) for x in raw.replace(",", " ").split())
        elif key.kind == "floats":
            value = tuple(float(x) for x in raw.replace(",", " ").split())
        elif key.kind == "choice":
            if raw not in key.choices:
                errors.append(f"{where}: {raw!r} is not one of {', '.join(key.choices)}")
                return None
            value = raw
        elif key.kind == "path":
            p = Path(raw)
            if not p.is_absolute():
                p = base / p
            if not p.exists():
                errors.append(f"{where}: file {raw!r} does not exist")
                return None
            value = raw
        else:
            value = raw
    except ValueError:
        errors.append(f"{where}: cannot read {raw!r} as {key.kind}")
        return None
    if key.check is not None and not key.check(value):
        errors.append(f"{where}: {value!r} violates the rule {key.rule}")
        return None
    return value


def parse_config_text(text: str, base_dir: str | Path = ".") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from exc
    base = Path(base_dir)
    errors: list[str] = []
    sections: dict[str, dict] = {}
    for name in cp.sections():
        if name not in SCHEMA:
            errors.append(f"unknown section [{name}]")
    for name, keys in SCHEMA.items():
        given = cp[name] if cp.has_section(name) else {}
        for k in given:
            if k not in keys:
                errors.append(f"[{name}]: unknown key {k!r}")
        out = {}
        for k, spec in keys.items():
            where = f"[{name}] {k}"
            if k in given:
                v = _convert(given[k], spec, where, base, errors)
                if v is not None:
                    out[k] = v
            elif spec.default is _REQUIRED:
                errors.append(f"{where}: required key is missing")
            elif spec.default is not _OPTIONAL:
                out[k] = spec.default
        sections[name] = out
    pot = sections["potential"]
    if pot.get("kind") == "table" and "file" not in pot:
        if not any("[potential] file" in e for e in errors):
            errors.append("[potential] file: required when kind = table")
    if errors:
        raise ConfigError(errors)
    run = sections.pop("run")
    return RunConfig(run["command"], run["seed"], run["out"], sections, str(base))


def parse_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"config file {str(path)!r} does not exist"])
    return parse_config_text(path.read_text(), base_dir=path.parent)


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_config(cfg: RunConfig) -> str:
    lines = ["[run]", f"command = {cfg.command}", f"seed = {cfg.seed}", f"out = {cfg.out}", ""]
    for name in SCHEMA:
        if name == "run":
            continue
        lines.append(f"[{name}]")
        for k in SCHEMA[name]:
            if k in cfg.sections.get(name, {}):
                lines.append(f"{k} = {_fmt(cfg.sections[name][k])}")
        lines.append("")
    return "\n".join(lines)


def default_config(command: str, **overrides) -> RunConfig:
    """Defaults for ``command``; ``overrides`` maps ``section`` to a key dict."""
    text = [f"[run]\ncommand = {command}\n"]
    for sec, kv in overrides.items():
        text.append(f"[{sec}]")
        text.extend(f"{k} = {_fmt(v) if not isinstance(v, str) else v}" for k, v in kv.items())
    return parse_config_text("\n".join(text))
