"""Pilot-assisted convolutionally-coded link simulator (1 transmit antenna).

Chain: tail-biting (368,92) rate-1/4 mother code -> even-spacing puncturing
-> QPSK framing with per-block pilots -> Rayleigh block-fading channel ->
ML channel estimation -> maximum ratio combining -> ordered statistics
decoding.  ``simulate_per`` measures the packet error rate.
"""

from .convcode import CodeSpec, CodeSpecError, conv_encode_tailbiting, generator_matrix
from .frame import (
    FrameLayout,
    LayoutError,
    build_packet,
    channel_pass,
    estimate_channel_ml,
    mrc_llr,
    puncture,
    puncture_pattern,
)
from .osd import candidate_count, osd_decode
from .sim import SimResult, clopper_pearson, simulate_per

__all__ = [
    "CodeSpec",
    "CodeSpecError",
    "conv_encode_tailbiting",
    "generator_matrix",
    "FrameLayout",
    "LayoutError",
    "build_packet",
    "channel_pass",
    "estimate_channel_ml",
    "mrc_llr",
    "puncture",
    "puncture_pattern",
    "candidate_count",
    "osd_decode",
    "SimResult",
    "clopper_pearson",
    "simulate_per",
]
