"""INI scenario files.

Sections ``[model]``, ``[kernel]``, ``[solver]`` and ``[sim]``; unknown
sections or keys are errors, reported with their line number.
"""
from __future__ import annotations

import configparser
import hashlib
import re
from pathlib import Path

from .errors import ConfigError
from .model import KERNEL_KINDS, KernelSpec, ScenarioConfig

# key -> (ScenarioConfig/KernelSpec field, parser)
_MODEL = {"p0": ("p0", float), "q0": ("q0", float), "lambda": ("lam", float),
          "gamma": ("gamma", float), "horizon_T": ("horizon", float)}
_LISTS = ("si_ages", "si_values", "infectivity_ages", "infectivity_values")
_KERNEL = {"kind": str, "pi_ss": float, "pi_si": float, "pi_ii": float, "phi1": float,
           "phi2": float, "window_a": float, "p_ss_norm": float, "p_ss_dist": float,
           "p_si_norm": float, "p_si_dist": float, **{k: "list" for k in _LISTS}}
_SOLVER = {"n_steps": int, "graphon_resolution": int}
_SIM = {"n_vertices": int, "base_seed": int, "replicates": int, "sample_points": int,
        "event_budget": int}
_SECTIONS = {"model": _MODEL, "kernel": _KERNEL, "solver": _SOLVER, "sim": _SIM}


def _line_index(text: str) -> dict:
    """(section, key) -> line number, for diagnostics."""
    index, section = {}, None
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip()
            index[(section, None)] = lineno
        elif s and s[0] not in "#;" and section is not None:
            key = re.split(r"[=:]", s, maxsplit=1)[0].strip()
            index.setdefault((section, key), lineno)
    return index


def _parse_value(raw: str, kind, where: str):
    try:
        if kind == "list":
            return tuple(float(x) for x in raw.split(",") if x.strip())
        if kind is int:
            return int(raw, 0)
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r}") from None


def parse_config(text: str, source: str = "<config>") -> ScenarioConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    lines = _line_index(text)

    def where(section, key=None):
        line = lines.get((section, key))
        loc = f"{source}:{line}" if line else source
        return f"{loc}: [{section}]" + (f" field '{key}'" if key else "")

    values = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"{where(section)}: unknown section")
        schema = _SECTIONS[section]
        for key, raw in parser.items(section):
            if key not in schema:
                raise ConfigError(f"{where(section, key)}: unknown key")
            kind = schema[key][1] if section == "model" else schema[key]
            values[(section, key)] = _parse_value(raw.strip(), kind, where(section, key))

    for key in _MODEL:
        if ("model", key) not in values:
            raise ConfigError(f"{source}: [model] missing field '{key}'")
    kind = values.get(("kernel", "kind"))
    if kind is None:
        raise ConfigError(f"{source}: [kernel] missing field 'kind'")
    if kind not in KERNEL_KINDS:
        raise ConfigError(f"{where('kernel', 'kind')}: must be one of {', '.join(KERNEL_KINDS)}")

    kernel_args = {k: v for (s, k), v in values.items() if s == "kernel"}
    model_args = {_MODEL[k][0]: v for (s, k), v in values.items() if s == "model"}
    other = {k: v for (s, k), v in values.items() if s in ("solver", "sim")}
    try:
        kernel = KernelSpec(**kernel_args)
        return ScenarioConfig(kernel=kernel, **model_args, **other)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, source=str(path))


def config_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def dump_config(config: ScenarioConfig) -> str:
    """INI text that parses back to ``config``."""
    k = config.kernel
    out = ["[model]", f"p0 = {config.p0!r}", f"q0 = {config.q0!r}", f"lambda = {config.lam!r}",
           f"gamma = {config.gamma!r}", f"horizon_T = {config.horizon!r}", "", "[kernel]",
           f"kind = {k.kind}"]
    for key in _KERNEL:
        if key == "kind":
            continue
        value = getattr(k, key)
        if value is None:
            continue
        if key in _LISTS:
            value = ", ".join(repr(float(x)) for x in value)
        else:
            value = repr(value)
        out.append(f"{key} = {value}")
    out += ["", "[solver]"] + [f"{key} = {getattr(config, key)}" for key in _SOLVER]
    out += ["", "[sim]"] + [f"{key} = {getattr(config, key)}" for key in _SIM]
    return "\n".join(out) + "\n"
