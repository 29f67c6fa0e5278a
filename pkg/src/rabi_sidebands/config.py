"""Strict INI-style configuration files.

Example::

    [qubit]
    gap_ghz = 6.0
    persistent_current_na = 500

    [mode.1]
    omega_ghz = 3.143
    g_ghz = 0.306
    truncation = 8

    [drive]
    amplitude_ghz = 0.0
    rwa = false

    [sweep]
    flux_start_mphi0 = -3
    flux_stop_mphi0 = 3
    flux_count = 121

Every quantity carries its unit in the key name.  Unknown sections or keys,
a key whose unit suffix differs from the expected one, and missing required
keys are all rejected with the offending line number.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import asdict
from importlib import resources
from pathlib import Path

from .hamiltonian import DEFAULT_MAX_DIM, FluxSweep, QubitSpec, SystemConfig
from .operators import ModeSpec

_SECTION = re.compile(r"^\[\s*([A-Za-z0-9_.]+)\s*\]$")
_KEYVAL = re.compile(r"^([A-Za-z0-9_]+)\s*=\s*(.*?)\s*$")

# key -> (type, required)
_SCHEMA = {
    "qubit": {"gap_ghz": (float, True), "persistent_current_na": (float, True)},
    "mode": {"omega_ghz": (float, True), "g_ghz": (float, True), "truncation": (int, False),
             "enabled": (bool, False)},
    "drive": {"amplitude_ghz": (float, False), "rwa": (bool, False)},
    "sweep": {"flux_start_mphi0": (float, True), "flux_stop_mphi0": (float, True), "flux_count": (int, True)},
    "limits": {"max_dim": (int, False)},
}
_REQUIRED_SECTIONS = ("qubit", "sweep")
_UNIT_SUFFIXES = ("_ghz", "_mhz", "_hz", "_na", "_ua", "_mphi0", "_phi0")
DEFAULT_TRUNCATION = {1: 8}
FALLBACK_TRUNCATION = 6
PRESETS = ("paper_device",)


class ConfigError(ValueError):
    pass


def _suffix(key: str) -> str | None:
    for s in _UNIT_SUFFIXES:
        if key.endswith(s):
            return s
    return None


def _convert(raw: str, kind, where: str):
    if kind is bool:
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"{where}: expected a boolean, got {raw!r}")
    try:
        if kind is int:
            v = float(raw)
            if v != int(v):
                raise ValueError
            return int(v)
        return float(raw)
    except ValueError:
        raise ConfigError(f"{where}: expected {kind.__name__}, got {raw!r}") from None


def parse_config_text(text: str, source: str = "<config>") -> SystemConfig:
    """Parse configuration text into a SystemConfig, collecting every error."""
    errors: list[str] = []
    sections: dict[str, dict[str, tuple[object, int]]] = {}
    header_line: dict[str, int] = {}
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].split(";", 1)[0].strip()
        if not body:
            continue
        where = f"{source}:{lineno}"
        m = _SECTION.match(body)
        if m:
            name = m.group(1)
            family = "mode" if re.fullmatch(r"mode\.\d+", name) else name
            if family not in _SCHEMA:
                errors.append(f"{where}: unknown section [{name}]")
                current = None
                continue
            if name in sections:
                errors.append(f"{where}: duplicate section [{name}]")
            sections.setdefault(name, {})
            header_line[name] = lineno
            current = name
            continue
        m = _KEYVAL.match(body)
        if not m:
            errors.append(f"{where}: cannot parse line {line.strip()!r}")
            continue
        if current is None:
            errors.append(f"{where}: key {m.group(1)!r} outside a known section")
            continue
        key, raw = m.group(1), m.group(2)
        family = "mode" if current.startswith("mode.") else current
        schema = _SCHEMA[family]
        if key not in schema:
            stem = key[: -len(_suffix(key))] if _suffix(key) else key
            expected = [k for k in schema if _suffix(k) and k[: -len(_suffix(k))] == stem]
            if expected:
                errors.append(f"{where}: unit mismatch for {key!r} in [{current}]; expected {expected[0]!r}")
            else:
                errors.append(f"{where}: unknown key {key!r} in [{current}]")
            continue
        if key in sections[current]:
            errors.append(f"{where}: duplicate key {key!r}")
            continue
        try:
            sections[current][key] = (_convert(raw, schema[key][0], where), lineno)
        except ConfigError as exc:
            errors.append(str(exc))

    for name in _REQUIRED_SECTIONS:
        if name not in sections:
            for key, (_, req) in _SCHEMA[name].items():
                if req:
                    errors.append(f"{source}: missing key [{name}] {key}")
    mode_names = [n for n in sections if n.startswith("mode.")]
    if not mode_names:
        for key, (_, req) in _SCHEMA["mode"].items():
            if req:
                errors.append(f"{source}: missing key [mode.N] {key} (at least one mode section is required)")
    for name, values in sections.items():
        family = "mode" if name.startswith("mode.") else name
        for key, (_, req) in _SCHEMA[family].items():
            if req and key not in values:
                errors.append(f"{source}:{header_line[name]}: missing key [{name}] {key}")
    if errors:
        raise ConfigError("\n".join(errors))

    def val(sec, key, default=None):
        return sections.get(sec, {}).get(key, (default, 0))[0]

    try:
        qubit = QubitSpec(val("qubit", "gap_ghz"), val("qubit", "persistent_current_na"))
        modes = []
        for name in mode_names:
            if not val(name, "enabled", True):
                continue
            idx = int(name.split(".")[1])
            trunc = val(name, "truncation", DEFAULT_TRUNCATION.get(idx, FALLBACK_TRUNCATION))
            modes.append(ModeSpec(idx, val(name, "omega_ghz"), val(name, "g_ghz"), trunc))
        sweep = FluxSweep(val("sweep", "flux_start_mphi0"), val("sweep", "flux_stop_mphi0"),
                          val("sweep", "flux_count"))
        return SystemConfig(qubit, tuple(modes), bool(val("drive", "rwa", False)),
                            val("drive", "amplitude_ghz", 0.0), sweep, val("limits", "max_dim", DEFAULT_MAX_DIM))
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def parse_config(path) -> SystemConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"configuration file not found: {p}")
    return parse_config_text(p.read_text(), str(p))


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    return resources.files("rabi_sidebands").joinpath("presets", f"{name}.ini").read_text()


def load_preset(name: str) -> SystemConfig:
    return parse_config_text(preset_text(name), f"preset:{name}")


def config_to_dict(config: SystemConfig) -> dict:
    d = asdict(config)
    d["modes"] = [asdict(m) for m in config.modes]
    return d


def config_hash(config: SystemConfig) -> str:
    """sha256 of the canonical JSON of the resolved configuration."""
    canon = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(canon.encode()).hexdigest()


def format_config(config: SystemConfig) -> str:
    """Configuration text that parses back to ``config``."""
    lines = ["[qubit]", f"gap_ghz = {config.qubit.gap_ghz!r}",
             f"persistent_current_na = {config.qubit.persistent_current_na!r}", ""]
    for m in config.modes:
        lines += [f"[mode.{m.index}]", f"omega_ghz = {m.omega_ghz!r}", f"g_ghz = {m.g_ghz!r}",
                  f"truncation = {m.truncation}", ""]
    lines += ["[drive]", f"amplitude_ghz = {config.drive_amplitude_ghz!r}",
              f"rwa = {'true' if config.rwa else 'false'}", ""]
    fs = config.flux_sweep
    lines += ["[sweep]", f"flux_start_mphi0 = {fs.start!r}", f"flux_stop_mphi0 = {fs.stop!r}",
              f"flux_count = {fs.count}", ""]
    if config.max_dim != DEFAULT_MAX_DIM:
        lines += ["[limits]", f"max_dim = {config.max_dim}", ""]
    return "\n".join(lines)
