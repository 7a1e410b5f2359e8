"""Monte-Carlo packet-error-rate measurement of the coded chain.

Each packet runs the full chain — random message, tail-biting encode,
puncture, frame build, block-fading channel, ML channel estimation, MRC
LLRs, OSD decode — and is counted as an error on any message-bit mismatch.
Per-packet random streams are addressed by (seed, packet index), so results
are independent of how packets are distributed over workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import beta

from ..config import SystemConfig, validate_config
from ..streams import stream_for
from .convcode import CodeSpec, conv_encode_tailbiting
from .frame import (
    FrameLayout,
    build_packet,
    channel_pass,
    estimate_channel_ml,
    mrc_llr,
    puncture,
)
from .osd import osd_decode

__all__ = ["SimResult", "simulate_per", "clopper_pearson"]

# Stream sub-addresses within one packet.
_ADDR_MESSAGE = 0
_ADDR_CHANNEL = 1

# Packets per scheduling chunk; chunk boundaries never affect the output
# (streams are per-packet), only the parallel grain.
_CHUNK = 256


@dataclass(frozen=True)
class SimResult:
    """Measured packet error rate with a 95% Clopper-Pearson interval."""

    snr_db: float
    n_pilots_per_rb: int
    packets_run: int
    packet_errors: int
    per: float
    ci_low: float
    ci_high: float
    seed: int


def clopper_pearson(errors: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    """Exact binomial confidence interval on the error probability."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    alpha = 1.0 - confidence
    lo = 0.0 if errors == 0 else float(beta.ppf(alpha / 2, errors, trials - errors + 1))
    hi = 1.0 if errors == trials else float(beta.ppf(1 - alpha / 2, errors + 1, trials - errors))
    return lo, hi


def _run_packet(
    packet_index: int,
    cfg: SystemConfig,
    spec: CodeSpec,
    layout: FrameLayout,
    order: int,
    seed: int,
) -> bool:
    msg_stream = stream_for(seed, packet_index, _ADDR_MESSAGE)
    chan_stream = stream_for(seed, packet_index, _ADDR_CHANNEL)
    msg = msg_stream.integers(0, 2, size=spec.k_info, dtype=np.uint8)
    coded = conv_encode_tailbiting(msg, spec)
    tx_bits = puncture(coded, spec, layout)
    packet = build_packet(tx_bits, layout, cfg)
    y, _ = channel_pass(packet, cfg, chan_stream)
    np_pil = layout.n_pilots_per_rb
    h_hat = estimate_channel_ml(y[:, :np_pil, :], packet[:, :np_pil])
    llr = mrc_llr(y[:, np_pil:, :], h_hat, spec, layout, cfg)
    decoded = osd_decode(llr, spec, order=order)
    return bool(np.any(decoded != msg))


def simulate_per(
    cfg: SystemConfig,
    spec: CodeSpec,
    layout: FrameLayout,
    *,
    min_errors: int = 50,
    max_packets: int = 100_000,
    order: int = 3,
    seed: int = 0,
    n_threads: int = 1,
) -> SimResult:
    """Run packets until ``min_errors`` errors or ``max_packets`` packets.

    The stop rule is evaluated on chunk boundaries of consecutive packet
    indices, so the set of packets run — and therefore every count — is a
    pure function of (parameters, seed), independent of ``n_threads``.
    """
    validate_config(cfg)
    spec.validate()
    layout.validate(spec)
    if min_errors < 1 or max_packets < 1:
        raise ValueError("min_errors and max_packets must be positive")

    errors = 0
    run = 0

    def chunk_errors(start: int, count: int) -> int:
        return sum(
            _run_packet(i, cfg, spec, layout, order, seed)
            for i in range(start, start + count)
        )

    if n_threads <= 1:
        while run < max_packets and errors < min_errors:
            count = min(_CHUNK, max_packets - run)
            errors += chunk_errors(run, count)
            run += count
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            while run < max_packets and errors < min_errors:
                grain = max(_CHUNK // n_threads, 16)
                total = min(_CHUNK, max_packets - run)
                futs = []
                at = run
                while at < run + total:
                    count = min(grain, run + total - at)
                    futs.append(pool.submit(chunk_errors, at, count))
                    at += count
                errors += sum(f.result() for f in futs)
                run += total

    lo, hi = clopper_pearson(errors, run)
    return SimResult(
        snr_db=cfg.snr_db,
        n_pilots_per_rb=layout.n_pilots_per_rb,
        packets_run=run,
        packet_errors=errors,
        per=errors / run,
        ci_low=lo,
        ci_high=hi,
        seed=seed,
    )
