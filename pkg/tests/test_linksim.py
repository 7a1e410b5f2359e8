"""Unit tests for the coded-chain link simulator."""

import numpy as np
import pytest
from scipy.stats import beta

from fblbounds.config import SystemConfig, rb_power
from fblbounds.linksim import (
    CodeSpec,
    CodeSpecError,
    FrameLayout,
    LayoutError,
    build_packet,
    candidate_count,
    channel_pass,
    clopper_pearson,
    conv_encode_tailbiting,
    estimate_channel_ml,
    generator_matrix,
    mrc_llr,
    osd_decode,
    puncture,
    puncture_pattern,
    simulate_per,
)
from fblbounds.linksim.convcode import is_noncatastrophic
from fblbounds.linksim.frame import slot_amplitude
from fblbounds.linksim.osd import osd_decode_matrix
from fblbounds.streams import stream_for

SPEC = CodeSpec()
CFG = SystemConfig(n_tx=1, n_rx=2, n_res=8, n_subc=12, n_ofdm=2,
                   link="uplink", snr_db=20.0)


def _layout(npil: int) -> FrameLayout:
    return FrameLayout(n_pilots_per_rb=npil, n_coh=24, n_res=8)


# ---------------------------------------------------------------- encoder

def test_all_zero_encodes_to_all_zero():
    out = conv_encode_tailbiting(np.zeros(92, dtype=np.uint8), SPEC)
    assert out.shape == (368,)
    assert not out.any()


def test_cyclic_shift_property():
    rng = np.random.default_rng(7)
    msg = rng.integers(0, 2, 92, dtype=np.uint8)
    base = conv_encode_tailbiting(msg, SPEC)
    shifted = conv_encode_tailbiting(np.roll(msg, 1), SPEC)
    assert np.array_equal(shifted, np.roll(base, 4))


def test_single_one_matches_convolution_oracle():
    msg = np.zeros(92, dtype=np.uint8)
    msg[0] = 1
    out = conv_encode_tailbiting(msg, SPEC)
    expect = np.zeros(368, dtype=np.uint8)
    for s, g in enumerate(SPEC.generator_ints):
        for lag in range(SPEC.memory + 1):
            if (g >> lag) & 1:
                expect[4 * (lag % 92) + s] ^= 1
    assert np.array_equal(out, expect)


def test_encoder_is_linear():
    rng = np.random.default_rng(3)
    a = rng.integers(0, 2, 92, dtype=np.uint8)
    b = rng.integers(0, 2, 92, dtype=np.uint8)
    lhs = conv_encode_tailbiting(a ^ b, SPEC)
    rhs = conv_encode_tailbiting(a, SPEC) ^ conv_encode_tailbiting(b, SPEC)
    assert np.array_equal(lhs, rhs)


def test_encoder_rejects_wrong_length():
    with pytest.raises(CodeSpecError):
        conv_encode_tailbiting(np.zeros(91, dtype=np.uint8), SPEC)


def test_spec_validation():
    with pytest.raises(CodeSpecError):
        CodeSpec(generators=("0o7", "0o5")).validate()  # not rate 1/4
    with pytest.raises(CodeSpecError):
        CodeSpec(memory=2, generators=("0o17", "0o15", "0o13", "0o11")).validate()
    # all generators share the factor (1 + D): catastrophic
    catastrophic = CodeSpec(memory=2, generators=("0o3", "0o6", "0o5", "0o3"))
    assert not is_noncatastrophic(catastrophic)
    with pytest.raises(CodeSpecError):
        catastrophic.validate()


def test_default_code_is_noncatastrophic_full_rank():
    assert is_noncatastrophic(SPEC)
    g = generator_matrix(SPEC)
    assert g.shape == (92, 368)
    # full rank: message recovery reproduces random messages
    rng = np.random.default_rng(0)
    for _ in range(5):
        msg = rng.integers(0, 2, 92, dtype=np.uint8)
        c = conv_encode_tailbiting(msg, SPEC)
        llr = 1.0 - 2.0 * c.astype(float)
        assert np.array_equal(osd_decode(llr, SPEC, order=0), msg)


# ---------------------------------------------------------------- puncturing

def test_puncture_identity_for_single_pilot():
    lay = _layout(1)
    assert lay.puncture_count(SPEC) == 0
    coded = np.arange(368, dtype=np.uint64).astype(np.uint8) % 2
    assert np.array_equal(puncture(coded, SPEC, lay), coded)


def test_puncture_counts_and_pattern():
    lay = _layout(6)
    assert lay.puncture_count(SPEC) == 80
    assert lay.coded_bits == 288 == 2 * 18 * 8
    pat = puncture_pattern(SPEC, lay)
    assert pat.size == 80
    assert np.all(np.diff(pat) > 0)  # strictly increasing, no duplicates
    kept = puncture(np.ones(368, dtype=np.uint8), SPEC, lay)
    assert kept.size == 288


def test_layout_validation():
    with pytest.raises(LayoutError):
        _layout(0).validate(SPEC)
    with pytest.raises(LayoutError):
        _layout(24).validate(SPEC)   # no data slots left
    with pytest.raises(LayoutError):
        # more data capacity than mother-code bits
        FrameLayout(n_pilots_per_rb=1, n_coh=24, n_res=16).validate(SPEC)


# ---------------------------------------------------------------- framing

def test_packet_geometry_and_power():
    lay = _layout(6)
    bits = np.random.default_rng(1).integers(0, 2, lay.coded_bits, dtype=np.uint8)
    x = build_packet(bits, lay, CFG)
    assert x.shape == (8, 24)
    # per-block transmit energy equals the per-block budget exactly
    energies = np.sum(np.abs(x) ** 2, axis=1)
    assert np.allclose(energies, rb_power(CFG), rtol=1e-12)
    # total data symbols
    assert x[:, 6:].size == 18 * 8 == lay.coded_bits // 2


def test_gray_map_convention():
    lay = _layout(1)
    bits = np.zeros(lay.coded_bits, dtype=np.uint8)
    bits[2] = 1            # second symbol: (b0, b1) = (1, 0)
    x = build_packet(bits, lay, CFG)
    amp = slot_amplitude(CFG)
    assert np.isclose(x[0, 1], amp * (1 + 1j) / np.sqrt(2))   # (0,0)
    assert np.isclose(x[0, 2], amp * (-1 + 1j) / np.sqrt(2))  # (1,0): one bit flip
    # adjacent constellation points differ in exactly one bit (Gray property)
    consts = {(0, 0): 1 + 1j, (0, 1): 1 - 1j, (1, 0): -1 + 1j, (1, 1): -1 - 1j}
    for (b0, b1), v in consts.items():
        for (c0, c1), u in consts.items():
            if abs(v - u) == 2.0:  # adjacent (one axis flipped)
                assert (b0 != c0) + (b1 != c1) == 1


def test_build_packet_rejects_multi_tx():
    cfg2 = SystemConfig(n_tx=2, n_rx=2, n_res=8, n_subc=12, n_ofdm=2,
                        link="uplink", snr_db=20.0)
    lay = _layout(6)
    with pytest.raises(LayoutError):
        build_packet(np.zeros(lay.coded_bits, dtype=np.uint8), lay, cfg2)


def test_channel_zero_input_is_unit_noise():
    lay = _layout(6)
    x = np.zeros((8, 24), dtype=np.complex128)
    y, _ = channel_pass(x, CFG, stream_for(0, 0))
    v = np.mean(np.abs(y) ** 2)
    assert abs(v - 1.0) < 5 / np.sqrt(y.size)


def test_channel_determinism_and_pilot_snr():
    lay = _layout(4)
    bits = np.random.default_rng(2).integers(0, 2, lay.coded_bits, dtype=np.uint8)
    x = build_packet(bits, lay, CFG)
    y1, h1 = channel_pass(x, CFG, stream_for(9, 1))
    y2, h2 = channel_pass(x, CFG, stream_for(9, 1))
    assert np.array_equal(y1, y2) and np.array_equal(h1, h2)
    # pilot-slot received power = slot power * E|h|^2 + 1 = P + 1
    p_slot = slot_amplitude(CFG) ** 2
    powers = []
    for i in range(400):
        y, _ = channel_pass(x, CFG, stream_for(11, i))
        powers.append(np.mean(np.abs(y[:, :4, :]) ** 2))
    measured = np.mean(powers)
    sd = np.std(powers) / np.sqrt(len(powers))
    assert abs(measured - (p_slot + 1.0)) < 4 * sd + 1e-3


# ----------------------------------------------------- estimation and LLRs

def test_estimator_exact_without_noise():
    pilots = np.full((8, 4), 1.3 + 0.0j)
    h = np.array([[0.7 - 0.2j, -1.1 + 0.4j]] * 8)
    y = pilots[:, :, None] * h[:, None, :]
    h_hat = estimate_channel_ml(y, pilots)
    assert np.allclose(h_hat, h, atol=1e-14)


def test_estimator_variance_oracle():
    npil, p_pilot, trials = 4, 2.5, 100_000
    rng = np.random.default_rng(5)
    a = np.sqrt(p_pilot)
    pilots = np.full((trials, npil), a + 0.0j)
    h = (rng.standard_normal((trials, 1)) + 1j * rng.standard_normal((trials, 1))) / np.sqrt(2)
    w = (rng.standard_normal((trials, npil, 1))
         + 1j * rng.standard_normal((trials, npil, 1))) / np.sqrt(2)
    y = pilots[:, :, None] * h[:, None, :] + w
    h_hat = estimate_channel_ml(y, pilots)
    err = (h_hat - h).ravel()
    var = np.mean(np.abs(err) ** 2)
    target = 1.0 / (npil * p_pilot)
    # |err|^2 is exponential with mean `target`: sd of the mean = target/sqrt(N)
    assert abs(var - target) < 3 * target / np.sqrt(trials)


def test_mrc_llr_signs_and_puncture_zeros():
    lay = _layout(6)
    rng = np.random.default_rng(8)
    msg = rng.integers(0, 2, 92, dtype=np.uint8)
    coded = conv_encode_tailbiting(msg, SPEC)
    tx = puncture(coded, SPEC, lay)
    x = build_packet(tx, lay, CFG)
    h = np.array([[0.9 + 0.3j, -0.4 + 1.2j]] * 8)       # noiseless, known h
    y = x[:, :, None] * h[:, None, :]
    llr = mrc_llr(y[:, 6:, :], h, SPEC, lay, CFG)
    pat = puncture_pattern(SPEC, lay)
    assert np.all(llr[pat] == 0.0)
    keep = np.ones(368, dtype=bool)
    keep[pat] = False
    hard = (llr[keep] < 0).astype(np.uint8)
    assert np.array_equal(hard, tx)


def test_mrc_combining_snr_is_sum_of_branch_snrs():
    h = np.array([[1.1 - 0.5j, 0.3 + 0.8j]])
    amp = 1.7
    x = amp * (1 + 1j) / np.sqrt(2)
    rng = np.random.default_rng(12)
    n = 200_000
    w = (rng.standard_normal((n, 2)) + 1j * rng.standard_normal((n, 2))) / np.sqrt(2)
    y = x * h[0][None, :] + w
    m = np.sum(np.conj(h[0])[None, :] * y, axis=1)
    g = float(np.sum(np.abs(h[0]) ** 2))
    snr = np.abs(np.mean(m)) ** 2 / np.var(m)
    branch_sum = abs(x) ** 2 * g
    assert abs(snr - branch_sum) < 0.05 * branch_sum


# ---------------------------------------------------------------- OSD

HAMMING74 = np.array([
    [1, 0, 0, 0, 1, 1, 0],
    [0, 1, 0, 0, 1, 0, 1],
    [0, 0, 1, 0, 0, 1, 1],
    [0, 0, 0, 1, 1, 1, 1],
], dtype=np.uint8)


def _ml_decode(llr: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Exhaustive maximum-likelihood decoding (minimum soft discrepancy)."""
    k = g.shape[0]
    w = np.abs(llr)
    hard = (llr < 0).astype(np.uint8)
    best, best_msg = np.inf, None
    for m in range(1 << k):
        msg = np.array([(m >> i) & 1 for i in range(k)], dtype=np.uint8)
        c = msg @ g % 2
        d = float(w[c != hard].sum())
        if d < best:
            best, best_msg = d, msg
    return best_msg


def test_candidate_count_order3():
    assert candidate_count(92, 3) == 1 + 92 + 4186 + 125580 == 129859


def test_noiseless_llrs_recover_message_any_order():
    rng = np.random.default_rng(21)
    lay = _layout(1)
    for order in (0, 1, 3):
        msg = rng.integers(0, 2, 92, dtype=np.uint8)
        c = conv_encode_tailbiting(msg, SPEC)
        llr = (1.0 - 2.0 * c.astype(float)) * rng.uniform(0.5, 2.0, 368)
        assert np.array_equal(osd_decode(llr, SPEC, order=order), msg)


def test_osd_order4_matches_ml_on_hamming74():
    rng = np.random.default_rng(33)
    for _ in range(500):
        llr = rng.standard_normal(7) * 2.0
        got = osd_decode_matrix(llr, HAMMING74, order=4)
        assert np.array_equal(got, _ml_decode(llr, HAMMING74))


def _tailbiting_16_8() -> np.ndarray:
    """(16,8) tail-biting rate-1/2 memory-2 block code (circulant rows)."""
    g1, g2 = 0o7, 0o5
    rows = np.zeros((8, 16), dtype=np.uint8)
    for r in range(8):
        for lag in range(3):
            t = (r + lag) % 8
            rows[r, 2 * t] ^= (g1 >> lag) & 1
            rows[r, 2 * t + 1] ^= (g2 >> lag) & 1
    return rows


def test_osd_full_order_equals_ml_on_small_codes():
    rng = np.random.default_rng(44)
    g168 = _tailbiting_16_8()
    for _ in range(200):
        llr7 = rng.standard_normal(7) * 1.5
        assert np.array_equal(
            osd_decode_matrix(llr7, HAMMING74, order=4),
            _ml_decode(llr7, HAMMING74))
    for _ in range(100):
        llr16 = rng.standard_normal(16) * 1.5
        got = osd_decode_matrix(llr16, g168, order=8)
        # compare codewords (the circulant code may have distinct messages
        # with equal discrepancy only at ties, which continuous LLRs avoid)
        assert np.array_equal(got @ g168 % 2,
                              _ml_decode(llr16, g168) @ g168 % 2)


# ---------------------------------------------------------------- simulator

def test_clopper_pearson_brackets_and_closed_forms():
    lo, hi = clopper_pearson(0, 100)
    assert lo == 0.0
    assert np.isclose(hi, 1 - 0.025 ** (1 / 100))
    lo, hi = clopper_pearson(7, 100)
    assert lo < 0.07 < hi
    lo, hi = clopper_pearson(100, 100)
    assert hi == 1.0
    with pytest.raises(ValueError):
        clopper_pearson(0, 0)


def test_simulate_per_deterministic_and_thread_invariant():
    lay = _layout(6)
    cfg = CFG.with_snr_db(18.0)
    kw = dict(min_errors=10, max_packets=512, seed=3)
    r1 = simulate_per(cfg, SPEC, lay, **kw)
    r2 = simulate_per(cfg, SPEC, lay, **kw)
    r8 = simulate_per(cfg, SPEC, lay, n_threads=8, **kw)
    assert (r1.packets_run, r1.packet_errors) == (r2.packets_run, r2.packet_errors)
    assert (r1.packets_run, r1.packet_errors) == (r8.packets_run, r8.packet_errors)
    assert r1.per == r1.packet_errors / r1.packets_run
    assert r1.ci_low <= r1.per <= r1.ci_high


def test_simulate_per_stop_rule():
    lay = _layout(6)
    # hopeless SNR: every packet errs, so the loop stops at the first
    # chunk boundary after min_errors
    r = simulate_per(CFG.with_snr_db(-20.0), SPEC, lay,
                     min_errors=5, max_packets=4096, seed=1)
    assert r.packet_errors >= 5
    assert r.packets_run < 4096
    with pytest.raises(ValueError):
        simulate_per(CFG, SPEC, lay, min_errors=0)
