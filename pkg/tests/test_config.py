"""Configuration validation, power conventions, and parsing."""

import math

import pytest
from hypothesis import given, strategies as st

from fblbounds.config import (
    ConfigError,
    PhysicalProfile,
    SystemConfig,
    cfg_digest,
    derive_dimensions,
    parse_config_text,
    rb_power,
    validate_config,
)


def test_derived_properties():
    cfg = SystemConfig(n_tx=2, n_rx=2, n_res=3, n_subc=12, n_ofdm=4,
                       link="uplink", snr_db=20.0)
    assert cfg.n_coh == 48
    assert cfg.p == 2 and cfg.q == 2
    assert cfg.total_slots == 144
    assert cfg.snr_linear == pytest.approx(100.0)


def test_validate_rejects_bad_fields():
    good = SystemConfig(n_tx=1, n_rx=1)
    validate_config(good)
    with pytest.raises(ConfigError):
        validate_config(SystemConfig(n_tx=0, n_rx=1))
    with pytest.raises(ConfigError):
        validate_config(SystemConfig(n_tx=1, n_rx=1, link="sideways"))
    with pytest.raises(ConfigError):
        validate_config(SystemConfig(n_tx=1, n_rx=1, snr_db=float("nan")))


def test_validate_rejects_small_coherence_block():
    # n_coh = 4 does not exceed n_tx + n_rx = 4
    with pytest.raises(ConfigError):
        validate_config(SystemConfig(n_tx=2, n_rx=2, n_subc=2, n_ofdm=2))


def test_rb_power_uplink_splits_budget_across_blocks():
    cfg = SystemConfig(n_tx=1, n_rx=2, n_res=4, n_subc=12, n_ofdm=4,
                       link="uplink", snr_db=20.0)
    assert rb_power(cfg) == pytest.approx(4 * 100.0 / 4)
    # total power over the packet is invariant in n_res
    total = rb_power(cfg) * cfg.n_res
    cfg2 = cfg.with_n_res(8)
    assert rb_power(cfg2) * cfg2.n_res == pytest.approx(total)


def test_rb_power_downlink_scales_with_block_area():
    cfg = SystemConfig(n_tx=2, n_rx=1, n_res=8, n_subc=12, n_ofdm=2,
                       link="downlink", snr_db=10.0)
    assert rb_power(cfg) == pytest.approx(2 * 12 * 10.0)
    # PSD constraint: per-RB power independent of n_res
    assert rb_power(cfg.with_n_res(1)) == pytest.approx(rb_power(cfg))


def test_derive_dimensions_units():
    cfg = SystemConfig(n_tx=1, n_rx=2, n_res=4, n_subc=12, n_ofdm=4,
                       link="uplink", snr_db=20.0)
    dims = derive_dimensions(cfg)
    assert dims.n_coh == 48
    assert dims.total_slots == 192
    assert dims.latency == pytest.approx(4 * 71.4e-6)
    assert dims.bandwidth == pytest.approx(12 * 4 * 15e3)
    with pytest.raises(ConfigError):
        PhysicalProfile(ofdm_symbol_duration=0.0)


def test_parse_config_text_roundtrip():
    text = """
    # comment line
    n_tx = 2
    n_rx = 2   # trailing comment
    n_res = 3
    n_subc = 12
    n_ofdm = 4
    link = uplink
    snr_db = 20.0
    """
    cfg = parse_config_text(text)
    assert cfg == SystemConfig(n_tx=2, n_rx=2, n_res=3, n_subc=12, n_ofdm=4,
                               link="uplink", snr_db=20.0)


def test_parse_config_text_errors():
    with pytest.raises(ConfigError):
        parse_config_text("n_tx 2")
    with pytest.raises(ConfigError):
        parse_config_text("bogus_key = 1")


def test_cfg_digest_stable_and_sensitive():
    cfg = SystemConfig(n_tx=1, n_rx=2, snr_db=25.0)
    assert cfg_digest(cfg) == cfg_digest(SystemConfig(n_tx=1, n_rx=2, snr_db=25.0))
    assert cfg_digest(cfg) != cfg_digest(cfg.with_snr_db(26.0))
    assert len(cfg_digest(cfg)) == 16


@given(
    n_tx=st.integers(1, 4),
    n_rx=st.integers(1, 4),
    n_res=st.integers(1, 16),
    n_ofdm=st.integers(1, 4),
    snr_db=st.floats(-20.0, 40.0),
)
def test_uplink_power_conservation_property(n_tx, n_rx, n_res, n_ofdm, snr_db):
    cfg = SystemConfig(n_tx=n_tx, n_rx=n_rx, n_res=n_res, n_subc=12,
                       n_ofdm=n_ofdm, link="uplink", snr_db=snr_db)
    try:
        validate_config(cfg)
    except ConfigError:
        return
    # per-time-use budget: rb_power * n_res == n_ofdm * rho_u
    assert rb_power(cfg) * n_res == pytest.approx(n_ofdm * cfg.snr_linear)
    assert math.isfinite(rb_power(cfg))
