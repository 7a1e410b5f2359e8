"""Frame construction, fading channel, ML channel estimation and MRC LLRs.

Single-transmit-antenna pilot-assisted chain: each resource block carries
``n_pilots_per_rb`` known unit-modulus pilot slots followed by Gray-mapped
QPSK data symbols, all at equal per-slot power so the per-block power budget
is met exactly.  The receiver forms least-squares (= ML under Gaussian
noise) channel estimates from the pilots, combines antennas by maximum
ratio, and emits bitwise log-likelihood ratios computed as if the estimate
were exact; punctured mother-code positions get LLR 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..config import SystemConfig, rb_power
from .convcode import CodeSpec, CodeSpecError

__all__ = [
    "FrameLayout",
    "LayoutError",
    "puncture_pattern",
    "puncture",
    "build_packet",
    "channel_pass",
    "estimate_channel_ml",
    "mrc_llr",
]

_SQRT2 = np.sqrt(2.0)


class LayoutError(ValueError):
    """Raised for frame layouts inconsistent with the code or geometry."""


@dataclass(frozen=True)
class FrameLayout:
    """Pilot/data split of the resource blocks carrying one codeword."""

    n_pilots_per_rb: int
    n_coh: int
    n_res: int

    @property
    def data_slots_per_rb(self) -> int:
        return self.n_coh - self.n_pilots_per_rb

    @property
    def coded_bits(self) -> int:
        return 2 * self.data_slots_per_rb * self.n_res

    def puncture_count(self, spec: CodeSpec) -> int:
        return spec.n_coded_mother - self.coded_bits

    def validate(self, spec: CodeSpec) -> None:
        if self.n_pilots_per_rb < 1:
            raise LayoutError("at least one pilot slot per resource block is required")
        if self.data_slots_per_rb < 1:
            raise LayoutError("no data slots left after pilots")
        n_punct = self.puncture_count(spec)
        if n_punct < 0:
            raise LayoutError(
                f"layout carries {self.coded_bits} bits but the mother code "
                f"produces only {spec.n_coded_mother}"
            )
        if n_punct >= spec.n_coded_mother:
            raise LayoutError("puncturing would remove the entire codeword")


@lru_cache(maxsize=32)
def _pattern_cached(n_mother: int, n_punct: int) -> np.ndarray:
    """Evenly spaced punctured indices; collisions advance to the next free slot."""
    used = np.zeros(n_mother, dtype=bool)
    out = np.empty(n_punct, dtype=np.int64)
    for j in range(n_punct):
        idx = int(round(j * n_mother / n_punct)) % n_mother
        while used[idx]:
            idx = (idx + 1) % n_mother
        used[idx] = True
        out[j] = idx
    out.sort()
    out.setflags(write=False)
    return out


def puncture_pattern(spec: CodeSpec, layout: FrameLayout) -> np.ndarray:
    """Sorted mother-code positions removed before transmission."""
    layout.validate(spec)
    n = layout.puncture_count(spec)
    if n == 0:
        return np.empty(0, dtype=np.int64)
    return _pattern_cached(spec.n_coded_mother, n)


def puncture(coded: np.ndarray, spec: CodeSpec, layout: FrameLayout) -> np.ndarray:
    """Drop the patterned positions, leaving exactly ``layout.coded_bits`` bits."""
    coded = np.asarray(coded, dtype=np.uint8).ravel()
    if coded.size != spec.n_coded_mother:
        raise CodeSpecError(
            f"expected {spec.n_coded_mother} mother-code bits, got {coded.size}"
        )
    pat = puncture_pattern(spec, layout)
    keep = np.ones(coded.size, dtype=bool)
    keep[pat] = False
    return coded[keep]


def _qpsk_map(bits: np.ndarray) -> np.ndarray:
    """Gray-mapped unit-energy QPSK: bit pair (b0, b1) -> ((1-2b0)+1j(1-2b1))/sqrt(2)."""
    pairs = bits.reshape(-1, 2).astype(np.float64)
    return ((1.0 - 2.0 * pairs[:, 0]) + 1j * (1.0 - 2.0 * pairs[:, 1])) / _SQRT2


def slot_amplitude(cfg: SystemConfig) -> float:
    """Common per-slot amplitude meeting the per-block power budget exactly."""
    return float(np.sqrt(rb_power(cfg) / cfg.n_coh))


def build_packet(coded_bits: np.ndarray, layout: FrameLayout, cfg: SystemConfig) -> np.ndarray:
    """Per-RB transmit columns, shape (n_res, n_coh): pilots first, then QPSK data."""
    if cfg.n_tx != 1:
        raise LayoutError("the coded chain is single-transmit-antenna only")
    if layout.n_coh != cfg.n_coh or layout.n_res != cfg.n_res:
        raise LayoutError("frame layout does not match the system geometry")
    coded_bits = np.asarray(coded_bits, dtype=np.uint8).ravel()
    if coded_bits.size != layout.coded_bits:
        raise LayoutError(
            f"expected {layout.coded_bits} coded bits, got {coded_bits.size}"
        )
    amp = slot_amplitude(cfg)
    symbols = amp * _qpsk_map(coded_bits)
    x = np.empty((layout.n_res, layout.n_coh), dtype=np.complex128)
    x[:, : layout.n_pilots_per_rb] = amp  # fixed unit-modulus pilot sequence
    x[:, layout.n_pilots_per_rb :] = symbols.reshape(
        layout.n_res, layout.data_slots_per_rb
    )
    return x


def channel_pass(
    packet: np.ndarray, cfg: SystemConfig, stream: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Block-fading pass: Y = x h + W per RB, fresh iid CN(0,1) h and W.

    Returns (y, h) with y of shape (n_res, n_coh, n_rx) and the true fading
    coefficients h of shape (n_res, n_rx) for diagnostics.
    """
    n_res, n_coh = packet.shape
    n_rx = cfg.n_rx
    h = (
        stream.standard_normal((n_res, n_rx)) + 1j * stream.standard_normal((n_res, n_rx))
    ) / _SQRT2
    w = (
        stream.standard_normal((n_res, n_coh, n_rx))
        + 1j * stream.standard_normal((n_res, n_coh, n_rx))
    ) / _SQRT2
    y = packet[:, :, None] * h[:, None, :] + w
    return y, h


def estimate_channel_ml(y_pilots: np.ndarray, pilots: np.ndarray) -> np.ndarray:
    """Least-squares estimate per RB and rx antenna: (sum conj(x) y) / sum |x|^2."""
    num = np.sum(np.conj(pilots)[:, :, None] * y_pilots, axis=1)
    den = np.sum(np.abs(pilots) ** 2, axis=1)
    return num / den[:, None]


def mrc_llr(
    y_data: np.ndarray,
    h_hat: np.ndarray,
    spec: CodeSpec,
    layout: FrameLayout,
    cfg: SystemConfig,
) -> np.ndarray:
    """Bitwise LLRs for all mother-code positions (punctured positions get 0).

    The per-symbol MRC statistic is m = sum_antennas conj(h_hat) y, which —
    treating the estimate as exact — is CN(x * G, G) with G = sum |h_hat|^2.
    For Gray QPSK at amplitude ``a`` per axis this gives LLR = 4 a Re(m)
    (in-phase bit) and 4 a Im(m) (quadrature bit); positive LLR favors bit 0.
    """
    amp = slot_amplitude(cfg) / _SQRT2  # per-axis amplitude of each QPSK symbol
    m = np.sum(np.conj(h_hat)[:, None, :] * y_data, axis=2)  # (n_res, data_slots)
    llr_pairs = np.stack([4.0 * amp * m.real, 4.0 * amp * m.imag], axis=-1)
    llr_tx = llr_pairs.reshape(-1)  # transmitted-bit order
    pat = puncture_pattern(spec, layout)
    keep = np.ones(spec.n_coded_mother, dtype=bool)
    keep[pat] = False
    llr = np.zeros(spec.n_coded_mother, dtype=np.float64)
    llr[keep] = llr_tx
    return llr
