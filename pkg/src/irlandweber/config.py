"""Experiment configuration files.

Configs are INI files with the sections below; every key is optional unless
marked. Unknown sections or keys are errors, reported with the file line.

``[space]``
    ``p`` (2), ``r`` (= p), ``weights`` (list), ``c_p``, ``g_q``,
    ``estimate_constants`` (bool), ``estimate_samples`` (10000).
``[problem]``
    ``kind`` (required): ``diagonal``, ``monomial`` or ``resistor_network``.
    diagonal: ``singular_values`` (required), ``ground_truth``.
    monomial: ``dimension`` (required), ``m`` (required), ``ground_truth``
    (list, ``default`` or ``zeros``), ``ball_radius``.
    resistor_network: ``boundary_nodes``, ``interior_nodes``, ``edges``
    (``a-b`` pairs), ``sigma_truth``, ``ball_radius``, ``sample_count``;
    all default to the shipped seven-edge network.
``[constants]``
    Overrides ``lipschitz_L``, ``deriv_bound_Lhat``, ``stability_CF``,
    ``stability_eps`` (all four or none).
``[solver]``
    ``mu`` (``auto`` = 0.9 x step-size bound), ``mu_override``, ``schedule``,
    ``beta_base``, ``beta_decay``, ``smoothness_C``, ``beta_max``,
    ``variant``, ``max_iterations``, ``residual_tolerance``,
    ``gamma_tolerance``, ``u0`` (``zero``, ``truth_offset:<fraction>`` or a
    list), ``rho_sq`` (``auto`` or a number).
``[analysis]``
    ``mode`` (``run``, or ``estimate`` for configs only meant for the
    stability fit), ``checks`` (subset of ``recursion, envelope, order``), ``burn_in``,
    ``seed``, ``sample_count``, ``fit_radius``.
``[output]``
    ``directory``.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MU_AUTO_FRACTION = 0.9


class ConfigError(ValueError):
    """Schema violation, reported with file and line."""


def _num(s):
    return float(s)


def _int(s):
    v = float(s)
    if v != int(v):
        raise ValueError(f"expected an integer, got {s!r}")
    return int(v)


def _bool(s):
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _floats(s):
    parts = [x for x in re.split(r"[,\s]+", s.strip()) if x]
    if not parts:
        raise ValueError("empty list")
    return [float(x) for x in parts]


def _edges(s):
    out = []
    for item in [x for x in re.split(r"[,\s]+", s.strip()) if x]:
        a, sep, b = item.partition("-")
        if not sep:
            raise ValueError(f"edge {item!r} is not of the form a-b")
        out.append((int(a), int(b)))
    return out


def _str(s):
    return s.strip()


def _num_or_auto(s):
    return "auto" if s.strip() == "auto" else float(s)


def _u0(s):
    s = s.strip()
    if s == "zero":
        return s
    if s.startswith("truth_offset:"):
        frac = float(s.split(":", 1)[1])
        if not 0.0 <= frac <= 1.0:
            raise ValueError("truth_offset fraction must lie in [0, 1]")
        return ("truth_offset", frac)
    return _floats(s)


def _truth(s):
    s = s.strip()
    return s if s in ("default", "zeros") else _floats(s)


def _checks(s):
    items = tuple(x for x in re.split(r"[,\s]+", s.strip()) if x)
    bad = set(items) - {"recursion", "envelope", "order"}
    if bad:
        raise ValueError(f"unknown checks {sorted(bad)}")
    return items


SCHEMA = {
    "space": {
        "p": _num,
        "r": _num,
        "weights": _floats,
        "c_p": _num,
        "g_q": _num,
        "estimate_constants": _bool,
        "estimate_samples": _int,
    },
    "problem": {
        "kind": _str,
        "singular_values": _floats,
        "ground_truth": _truth,
        "dimension": _int,
        "m": _num,
        "ball_radius": _num,
        "boundary_nodes": _int,
        "interior_nodes": _int,
        "edges": _edges,
        "sigma_truth": _floats,
        "sample_count": _int,
    },
    "constants": {
        "lipschitz_L": _num,
        "deriv_bound_Lhat": _num,
        "stability_CF": _num,
        "stability_eps": _num,
    },
    "solver": {
        "mu": _num_or_auto,
        "mu_override": _bool,
        "schedule": _str,
        "beta_base": _num,
        "beta_decay": _num,
        "smoothness_C": _num,
        "beta_max": _num,
        "variant": _str,
        "max_iterations": _int,
        "residual_tolerance": _num,
        "gamma_tolerance": _num,
        "u0": _u0,
        "rho_sq": _num_or_auto,
    },
    "analysis": {
        "mode": _str,
        "checks": _checks,
        "burn_in": _num,
        "seed": _int,
        "sample_count": _int,
        "fit_radius": _num,
    },
    "output": {"directory": _str},
}

REQUIRED = {("problem", "kind")}
KINDS = ("diagonal", "monomial", "resistor_network")
KIND_KEYS = {
    "diagonal": {"kind", "singular_values", "ground_truth"},
    "monomial": {"kind", "dimension", "m", "ground_truth", "ball_radius"},
    "resistor_network": {
        "kind",
        "boundary_nodes",
        "interior_nodes",
        "edges",
        "sigma_truth",
        "ball_radius",
        "sample_count",
    },
}

DEFAULTS = {
    "space": {"p": 2.0, "estimate_constants": False, "estimate_samples": 10_000},
    "solver": {
        "mu": "auto",
        "mu_override": False,
        "schedule": "zero",
        "beta_base": 0.05,
        "beta_decay": 2.0,
        "smoothness_C": 1.0,
        "beta_max": 0.5,
        "variant": "standard",
        "max_iterations": 10_000,
        "residual_tolerance": 0.0,
        "gamma_tolerance": 1e-10,
        "u0": "zero",
        "rho_sq": "auto",
    },
    "analysis": {
        "mode": "run",
        "checks": ("recursion", "envelope", "order"),
        "burn_in": 0.2,
        "seed": 0,
        "sample_count": 500,
    },
    "output": {},
    "problem": {},
    "constants": {},
}


def _line_index(text):
    """Map (section, key) and section headers to 1-based line numbers."""
    index, section = {}, None
    for no, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped[0] in "#;":
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            index.setdefault((section, None), no)
        elif section is not None:
            key = re.split(r"[=:]", stripped, maxsplit=1)[0].strip()
            index.setdefault((section, key), no)
    return index


@dataclass
class ExperimentConfig:
    """Parsed, schema-checked configuration. ``values[section][key]``."""

    values: dict
    path: Path | None = None
    lines: dict = field(default_factory=dict, repr=False)

    def get(self, section, key, default=None):
        return self.values.get(section, {}).get(key, default)

    def section(self, name) -> dict:
        return self.values.get(name, {})

    def error(self, section, key, msg) -> ConfigError:
        where = str(self.path) if self.path else "<config>"
        line = self.lines.get((section, key)) or self.lines.get((section, None))
        loc = f"{where}:{line}" if line else where
        label = f"[{section}] {key}" if key else f"[{section}]"
        return ConfigError(f"{loc}: {label}: {msg}")

    @property
    def name(self) -> str:
        return self.path.stem if self.path else "experiment"


def parse_config(text: str, path=None) -> ExperimentConfig:
    lines = _line_index(text)
    where = str(path) if path else "<config>"
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=where)
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        loc = f"{where}:{lineno}" if lineno else where
        raise ConfigError(f"{loc}: malformed config: {exc.message if hasattr(exc, 'message') else exc}") from None

    cfg = ExperimentConfig({}, Path(path) if path else None, lines)
    for section in parser.sections():
        if section not in SCHEMA:
            raise cfg.error(section, None, f"unknown section; expected one of {sorted(SCHEMA)}")
        parsed = {}
        for key, raw in parser.items(section):
            conv = SCHEMA[section].get(key)
            if conv is None:
                raise cfg.error(section, key, "unknown key")
            try:
                parsed[key] = conv(raw)
            except ValueError as exc:
                raise cfg.error(section, key, f"invalid value {raw!r}: {exc}") from None
        cfg.values[section] = parsed
    for section, key in REQUIRED:
        if key not in cfg.section(section):
            raise cfg.error(section, None, f"missing required key {key!r}")
    for section, defaults in DEFAULTS.items():
        merged = dict(defaults)
        merged.update(cfg.values.get(section, {}))
        cfg.values[section] = merged
    _validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    return parse_config(text, path)


def _validate(cfg: ExperimentConfig):
    kind = cfg.get("problem", "kind")
    if kind not in KINDS:
        raise cfg.error("problem", "kind", f"unknown problem kind {kind!r}; expected one of {KINDS}")
    extra = set(cfg.section("problem")) - KIND_KEYS[kind]
    if extra:
        key = sorted(extra)[0]
        raise cfg.error("problem", key, f"key not used by problem kind {kind!r}")
    if kind == "diagonal" and "singular_values" not in cfg.section("problem"):
        raise cfg.error("problem", None, "diagonal problem needs singular_values")
    if kind == "monomial":
        for key in ("dimension", "m"):
            if key not in cfg.section("problem"):
                raise cfg.error("problem", None, f"monomial problem needs {key}")
    consts = cfg.section("constants")
    if consts and len(consts) != 4:
        raise cfg.error("constants", None, "give all four constants or none")
    for key in ("schedule", "variant"):
        allowed = {"schedule": ("zero", "power", "geometric", "adaptive"), "variant": ("standard", "additive")}[key]
        if cfg.get("solver", key) not in allowed:
            raise cfg.error("solver", key, f"expected one of {allowed}")
    if cfg.get("analysis", "mode") not in ("run", "estimate"):
        raise cfg.error("analysis", "mode", "expected 'run' or 'estimate'")
    burn = cfg.get("analysis", "burn_in")
    if not 0.0 <= burn < 1.0:
        raise cfg.error("analysis", "burn_in", "must lie in [0, 1)")
    if cfg.get("analysis", "sample_count") < 1:
        raise cfg.error("analysis", "sample_count", "must be positive")
    fit = cfg.get("analysis", "fit_radius")
    if fit is not None and fit < 0:
        raise cfg.error("analysis", "fit_radius", "must be nonnegative")


# --- echo -------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, tuple) and len(v) == 2 and v[0] == "truth_offset":
        return f"truth_offset:{_fmt(v[1])}"
    if isinstance(v, (list, tuple, np.ndarray)):
        if len(v) and isinstance(v[0], tuple):
            return ", ".join(f"{a}-{b}" for a, b in v)
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def render_config(values: dict) -> str:
    """Serialize a values dict back to INI text (deterministic order)."""
    out = []
    for section in SCHEMA:
        entries = values.get(section) or {}
        entries = {k: v for k, v in entries.items() if v is not None}
        if not entries:
            continue
        out.append(f"[{section}]")
        for key in SCHEMA[section]:
            if key in entries:
                out.append(f"{key} = {_fmt(entries[key])}")
        out.append("")
    return "\n".join(out)
