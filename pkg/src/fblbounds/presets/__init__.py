"""Experiment presets: named, file-backed parameter bundles for the CLI.

Each preset is a flat ``key = value`` file shipped under
``fblbounds/presets/``; it selects a CLI command and provides the full
sweep geometry, so variants can be derived by copying and editing the file.
Values given on the command line override preset values.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

from ..config import ConfigError, SystemConfig, validate_config
from ..linksim.convcode import CodeSpec

__all__ = ["ExperimentPreset", "PresetError", "list_presets", "load_preset", "parse_preset_text"]


class PresetError(ValueError):
    """Raised for unknown presets or malformed preset files."""


_SYS_INT = {"n_tx", "n_rx", "n_res", "n_subc", "n_ofdm"}
_SYS_FLOAT = {"snr_db"}
_SYS_STR = {"link"}
_EXP_KEYS = {
    "command", "epsilon", "n_ofdm_values", "n_res_values", "subc_total",
    "k_bits", "snr_grid_db", "np_values", "k_info", "memory", "generators",
    "osd_order", "min_errors", "max_packets",
}


@dataclass(frozen=True)
class ExperimentPreset:
    """A command plus everything needed to run its sweep."""

    name: str
    command: str                       # bounds | eexp | simulate
    base: SystemConfig
    epsilon: float | None = None
    n_ofdm_values: tuple[int, ...] = ()
    n_res_values: tuple[int, ...] = ()
    subc_total: int | None = None      # eexp: n_subc = subc_total // n_res
    k_bits: int | None = None
    snr_grid_db: tuple[float, ...] = ()
    np_values: tuple[int, ...] = ()
    code: CodeSpec | None = None
    osd_order: int = 3
    min_errors: int = 50
    max_packets: int = 100_000


def _parse_int_list(value: str) -> tuple[int, ...]:
    """Comma list ('2,4') or inclusive range ('1:25')."""
    value = value.strip()
    if ":" in value:
        lo, hi = value.split(":")
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(v) for v in value.split(","))


def _parse_grid(value: str) -> tuple[float, ...]:
    """Comma list or 'start:stop:step' inclusive grid."""
    value = value.strip()
    if ":" in value:
        lo, hi, step = (float(v) for v in value.split(":"))
        n = int(round((hi - lo) / step)) + 1
        return tuple(float(x) for x in np.round(lo + step * np.arange(n), 12))
    return tuple(float(v) for v in value.split(","))


def parse_preset_text(name: str, text: str) -> ExperimentPreset:
    sys_kwargs: dict = {}
    exp: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise PresetError(f"{name} line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in _SYS_INT:
            sys_kwargs[key] = int(value)
        elif key in _SYS_FLOAT:
            sys_kwargs[key] = float(value)
        elif key in _SYS_STR:
            sys_kwargs[key] = value
        elif key in _EXP_KEYS:
            exp[key] = value
        else:
            raise PresetError(f"{name} line {lineno}: unknown key {key!r}")
    if "command" not in exp:
        raise PresetError(f"{name}: missing 'command'")
    command = exp["command"]
    if command not in ("bounds", "eexp", "simulate"):
        raise PresetError(f"{name}: unknown command {exp['command']!r}")

    base = SystemConfig(**sys_kwargs)
    if command != "eexp":  # eexp derives n_subc per sweep point
        validate_config(base)

    code = None
    if command == "simulate":
        code = CodeSpec(
            k_info=int(exp.get("k_info", 92)),
            memory=int(exp.get("memory", CodeSpec().memory)),
            generators=tuple(exp["generators"].split(","))
            if "generators" in exp else CodeSpec().generators,
        )
        code.validate()

    return ExperimentPreset(
        name=name,
        command=command,
        base=base,
        epsilon=float(exp["epsilon"]) if "epsilon" in exp else None,
        n_ofdm_values=_parse_int_list(exp["n_ofdm_values"]) if "n_ofdm_values" in exp else (),
        n_res_values=_parse_int_list(exp["n_res_values"]) if "n_res_values" in exp else (),
        subc_total=int(exp["subc_total"]) if "subc_total" in exp else None,
        k_bits=int(exp["k_bits"]) if "k_bits" in exp else None,
        snr_grid_db=_parse_grid(exp["snr_grid_db"]) if "snr_grid_db" in exp else (),
        np_values=_parse_int_list(exp["np_values"]) if "np_values" in exp else (),
        code=code,
        osd_order=int(exp.get("osd_order", 3)),
        min_errors=int(exp.get("min_errors", 50)),
        max_packets=int(exp.get("max_packets", 100_000)),
    )


def list_presets() -> list[str]:
    files = resources.files("fblbounds.presets")
    return sorted(
        p.name[: -len(".cfg")]
        for p in files.iterdir()
        if p.name.endswith(".cfg")
    )


def load_preset(name: str) -> ExperimentPreset:
    files = resources.files("fblbounds.presets")
    path = files / f"{name}.cfg"
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise PresetError(
            f"unknown preset {name!r}; available: {', '.join(list_presets())}"
        ) from None
    try:
        return parse_preset_text(name, text)
    except ConfigError as exc:
        raise PresetError(f"{name}: {exc}") from exc
