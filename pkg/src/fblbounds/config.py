"""System geometry, power normalization, and physical-unit conversions.

All SNR quantities are configured in dB and converted to linear scale once,
at this boundary; every downstream computation works with linear values.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

__all__ = [
    "SystemConfig",
    "PhysicalProfile",
    "DerivedDims",
    "ConfigError",
    "validate_config",
    "rb_power",
    "derive_dimensions",
    "parse_config_text",
    "cfg_digest",
]


class ConfigError(ValueError):
    """Raised for invalid or inconsistent system configurations."""


@dataclass(frozen=True)
class SystemConfig:
    """Antenna counts, resource-block geometry, link direction and SNR.

    ``n_coh = n_ofdm * n_subc`` is the number of time-frequency slots per
    resource block (the fading coherence block).  ``snr_db`` is the uplink
    per-time-use SNR or the downlink per-slot PSD SNR depending on ``link``.
    """

    n_tx: int
    n_rx: int
    n_res: int = 1
    n_subc: int = 12
    n_ofdm: int = 2
    link: str = "uplink"
    snr_db: float = 0.0

    @property
    def n_coh(self) -> int:
        return self.n_ofdm * self.n_subc

    @property
    def p(self) -> int:
        return max(self.n_tx, self.n_rx)

    @property
    def q(self) -> int:
        return min(self.n_tx, self.n_rx)

    @property
    def total_slots(self) -> int:
        return self.n_coh * self.n_res

    @property
    def snr_linear(self) -> float:
        return 10.0 ** (self.snr_db / 10.0)

    def with_snr_db(self, snr_db: float) -> "SystemConfig":
        return replace(self, snr_db=snr_db)

    def with_n_res(self, n_res: int) -> "SystemConfig":
        return replace(self, n_res=n_res)


@dataclass(frozen=True)
class PhysicalProfile:
    """OFDM numerology used only for unit conversions (defaults: LTE)."""

    ofdm_symbol_duration: float = 71.4e-6  # seconds
    subcarrier_spacing: float = 15e3       # Hz

    def __post_init__(self):
        if self.ofdm_symbol_duration <= 0 or self.subcarrier_spacing <= 0:
            raise ConfigError("physical profile values must be positive")


@dataclass(frozen=True)
class DerivedDims:
    """Slot counts and physical units derived from a configuration."""

    n_coh: int
    total_slots: int
    latency: float    # seconds
    bandwidth: float  # Hz
    rb_power: float   # linear SNR per resource block


def validate_config(cfg: SystemConfig) -> SystemConfig:
    """Check invariants and return ``cfg`` unchanged.

    The coherence block must be strictly larger than the total antenna
    count, otherwise the eigenvalue machinery downstream is undefined.
    """
    for name in ("n_tx", "n_rx", "n_res", "n_subc", "n_ofdm"):
        v = getattr(cfg, name)
        if not isinstance(v, int) or v < 1:
            raise ConfigError(f"{name} must be a positive integer, got {v!r}")
    if cfg.link not in ("uplink", "downlink"):
        raise ConfigError(f"link must be 'uplink' or 'downlink', got {cfg.link!r}")
    if not (cfg.snr_db == cfg.snr_db and abs(cfg.snr_db) < 1e6):
        raise ConfigError(f"snr_db must be finite, got {cfg.snr_db!r}")
    if cfg.n_coh <= cfg.n_tx + cfg.n_rx:
        raise ConfigError(
            f"n_coh = n_ofdm*n_subc = {cfg.n_coh} must exceed "
            f"n_tx + n_rx = {cfg.n_tx + cfg.n_rx}"
        )
    return cfg


def rb_power(cfg: SystemConfig) -> float:
    """Linear SNR budget per resource block.

    Uplink: a fixed per-time-use budget shared across resource blocks,
    ``rho = n_ofdm * rho_u / n_res``.  Downlink: a PSD constraint, so the
    per-block budget grows with the block area, ``rho = n_ofdm * n_subc * rho_d``.
    """
    validate_config(cfg)
    if cfg.link == "uplink":
        return cfg.n_ofdm * cfg.snr_linear / cfg.n_res
    return cfg.n_ofdm * cfg.n_subc * cfg.snr_linear


def derive_dimensions(cfg: SystemConfig, prof: PhysicalProfile | None = None) -> DerivedDims:
    """Physical latency/bandwidth of the allocation plus the per-RB power."""
    validate_config(cfg)
    prof = prof or PhysicalProfile()
    return DerivedDims(
        n_coh=cfg.n_coh,
        total_slots=cfg.total_slots,
        latency=cfg.n_ofdm * prof.ofdm_symbol_duration,
        bandwidth=cfg.n_subc * cfg.n_res * prof.subcarrier_spacing,
        rb_power=rb_power(cfg),
    )


_INT_FIELDS = {"n_tx", "n_rx", "n_res", "n_subc", "n_ofdm"}
_FLOAT_FIELDS = {"snr_db"}
_STR_FIELDS = {"link"}


def parse_config_text(text: str) -> SystemConfig:
    """Parse a flat key=value config file into a validated SystemConfig.

    Blank lines and '#' comments are ignored; unknown keys are errors.
    """
    kwargs: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in _INT_FIELDS:
            kwargs[key] = int(value)
        elif key in _FLOAT_FIELDS:
            kwargs[key] = float(value)
        elif key in _STR_FIELDS:
            kwargs[key] = value
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    return validate_config(SystemConfig(**kwargs))


def cfg_digest(cfg: SystemConfig) -> str:
    """Short stable hash of the fields that determine the sampling law."""
    canon = (
        f"ntx={cfg.n_tx},nrx={cfg.n_rx},nres={cfg.n_res},nsubc={cfg.n_subc},"
        f"nofdm={cfg.n_ofdm},link={cfg.link},snr_db={cfg.snr_db!r}"
    )
    return hashlib.sha256(canon.encode()).hexdigest()[:16]
