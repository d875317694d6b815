"""
Run configuration: a schema per subcommand, a flat ``key = value`` file
format with ``[section]`` headers, and merging with command-line flags.

Precedence, lowest first: schema default, config file, environment (output
directory only), command-line flag.
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass
from typing import Any, Callable

OUTPUT_ENV = "VORTEXLAB_OUTPUT_DIR"


class ConfigError(ValueError):
    def __init__(self, key: str, message: str, line: int | None = None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"config key '{key}'{where}: {message}")
        self.key = key
        self.line = line


def _floats(s) -> tuple:
    if isinstance(s, (list, tuple)):
        return tuple(float(v) for v in s)
    return tuple(float(v) for v in str(s).replace(" ", "").split(",") if v)


def _ints(s) -> tuple:
    if isinstance(s, (list, tuple)):
        return tuple(int(v) for v in s)
    return tuple(int(v) for v in str(s).replace(" ", "").split(",") if v)


def _bool(s) -> bool:
    if isinstance(s, bool):
        return s
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


@dataclass(frozen=True)
class Key:
    kind: Callable[[Any], Any]
    default: Any
    help: str
    choices: tuple | None = None

    def convert(self, name: str, raw, line=None):
        try:
            v = self.kind(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(name, f"cannot parse {raw!r}: {exc}", line) from None
        if self.choices is not None and v not in self.choices:
            raise ConfigError(name, f"{v!r} not one of {self.choices}", line)
        return v


COMMON = {
    "out_dir": Key(str, "vortexlab_out", f"output directory (env {OUTPUT_ENV} overrides the default)"),
    "seed": Key(int, 0, "random seed"),
}

SCHEMA: dict[str, dict[str, Key]] = {
    "beltrami-gen": {
        "family": Key(str, "shear", "field family", ("shear", "reynolds", "herglotz", "points")),
        "N": Key(int, 2, "frequency"),
        "grid": Key(int, 32, "grid points per axis"),
        "axis": Key(int, 3, "shear axis", (1, 2, 3)),
        "amplitude": Key(str, "planewave", "Herglotz amplitude", ("constant", "planewave", "twisted")),
        "output": Key(str, "field.vxf", "snapshot file name"),
    },
    "simulate": {
        "input": Key(str, "", "initial VXF1 snapshot (empty: shear B_N)"),
        "N": Key(int, 2, "frequency of the default initial field"),
        "grid": Key(int, 32, "grid points per axis (default initial field)"),
        "delta": Key(float, 0.0, "amplitude of the rotated unit-frequency perturbation"),
        "nu": Key(float, 0.05, "viscosity"),
        "alpha": Key(float, 1.0, "dissipation exponent"),
        "dt": Key(float, 1e-3, "time step"),
        "times": Key(_floats, (1.0,), "sample times"),
        "r": Key(int, 2, "highest Sobolev order in the stability report"),
        "sigma": Key(float, 0.9, "decay rate fraction for the envelope"),
    },
    "trace": {
        "input": Key(str, "", "VXF1 snapshot (velocity; lines of its curl)"),
        "vorticity": Key(_bool, False, "treat the snapshot as the vorticity itself"),
        "seed_point": Key(_floats, (0.1, 0.2, 0.3), "start point x1,x2,x3"),
        "tau": Key(float, 100.0, "line parameter horizon"),
        "tol": Key(float, 1e-10, "local error tolerance"),
        "h_max": Key(float, 0.5, "largest step"),
    },
    "classify": {
        "input": Key(str, "", "VXF1 snapshot"),
        "vorticity": Key(_bool, False, "treat the snapshot as the vorticity itself"),
        "seeds": Key(int, 200, "number of lattice seeds"),
        "tol": Key(float, 1e-10, "local error tolerance"),
        "periods": Key(float, 10.0, "horizon in turnover lengths"),
    },
    "melnikov": {
        "p": Key(int, 1, "resonance numerator"),
        "q": Key(int, 2, "resonance denominator"),
        "M": Key(float, 1.0, "amplitude"),
        "nu": Key(float, 0.05, "viscosity"),
        "eps": Key(float, 1e-3, "deformation size"),
        "grid": Key(int, 32, "grid points per axis"),
        "samples": Key(int, 128, "xi samples on [0, 2pi/p)"),
        "breakdown": Key(_bool, False, "also run the return-map diagnostic"),
    },
    "scenario": {
        "mode": Key(str, "verify-only", "scenario mode", ("verify-only", "desk-dns")),
        "times": Key(_floats, (1.0, 2.0), "times T_1..T_n"),
        "margin": Key(float, 1e3, "slack factor for every << inequality"),
        "nu": Key(float, 1.0, "viscosity"),
        "M": Key(float, 1.0, "amplitude of the leading field"),
        "r": Key(int, 7, "regularity index"),
        "prec": Key(int, 512, "mantissa bits"),
        "N": Key(_ints, (), "desk frequencies N_0..N_n (desk-dns)"),
        "delta1": Key(float, 1e-3, "desk amplitude delta_1 (desk-dns)"),
        "grid": Key(int, 32, "grid points per axis (desk-dns)"),
        "dt": Key(float, 1e-2, "time step (desk-dns)"),
        "seeds": Key(int, 64, "lattice seeds per classification (desk-dns)"),
    },
    "constants": {
        "times": Key(_floats, (1.0, 2.0), "times T_1..T_n"),
        "margin": Key(float, 1e3, "slack factor"),
        "nu": Key(float, 1.0, "viscosity"),
        "M": Key(float, 1.0, "amplitude"),
        "r": Key(int, 7, "regularity index"),
        "prec": Key(int, 512, "mantissa bits"),
        "output": Key(str, "constants.txt", "output file name"),
    },
    "verify": {
        "constants_file": Key(str, "", "structured-text constants to re-verify"),
        "snapshot": Key(str, "", "VXF1 snapshot to audit"),
    },
}


def schema_for(command: str) -> dict:
    return {**COMMON, **SCHEMA[command]}


def parse_config_text(text: str, command: str) -> dict:
    """
    Values for ``command`` from a config file: keys before any section and
    keys in ``[command]`` apply; other sections are ignored; unknown keys in
    applicable sections are rejected with their line number.
    """
    schema = schema_for(command)
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=("#",), strict=True)
    cp.optionxform = str
    try:
        cp.read_string("[__top__]\n" + text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError("<syntax>", str(exc).splitlines()[0], None if line is None else line - 1) from None
    lines = _key_lines(text)
    out = {}
    for section in ("__top__", command):
        if not cp.has_section(section):
            continue
        for k, raw in cp.items(section):
            line = lines.get((section, k))
            if k not in schema:
                raise ConfigError(k, "unknown key", line)
            out[k] = schema[k].convert(k, raw, line)
    return out


def _key_lines(text: str) -> dict:
    section = "__top__"
    out = {}
    for i, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
        elif "=" in s and not s.startswith(("#", ";")):
            out[(section, s.split("=", 1)[0].strip())] = i
    return out


def resolve(command: str, file_values: dict | None = None, flag_values: dict | None = None,
            env: dict | None = None) -> dict:
    schema = schema_for(command)
    env = os.environ if env is None else env
    cfg = {k: v.default for k, v in schema.items()}
    cfg.update(file_values or {})
    if env.get(OUTPUT_ENV):
        cfg["out_dir"] = env[OUTPUT_ENV]
    for k, v in (flag_values or {}).items():
        if v is None:
            continue
        if k not in schema:
            raise ConfigError(k, "unknown key")
        cfg[k] = schema[k].convert(k, v)
    return cfg
