"""Achievability and converse bounds on the maximum coding rate.

The achievability side is the dependence-testing bound: for a codebook of m
codewords the error probability is upper-bounded by
E[exp(-[S - log((m-1)/2)]+)], where S is the information density summed over
the resource blocks of one packet.  The converse side is the metaconverse
bound evaluated through the empirical CDF of the same S, with the output
channel law fixed to the isotropic input that also generates the samples, so
one Monte-Carlo batch serves both bounds.

Rates are reported in bits per time-frequency slot; a packet occupies
n_subc * n_ofdm * n_res slots.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from .config import SystemConfig, derive_dimensions, validate_config
from .infodensity import SumSampleBatch, sample_sum_batch

__all__ = [
    "BoundResult",
    "DTEpsilon",
    "BracketError",
    "dt_epsilon",
    "dt_max_rate",
    "mc_rate_upper",
    "snr_search",
    "sweep_rates",
    "SWEEP_CSV_FIELDS",
]

_LN2 = math.log(2.0)
# confidence level of the distribution-free CDF band used by the converse
MC_BAND_CONFIDENCE = 1e-3
# normal quantile for the ~95% Monte-Carlo interval reported on epsilon
_Z95 = 1.959963984540054


class BracketError(ValueError):
    """SNR search endpoints do not straddle feasibility."""


class DTEpsilon(NamedTuple):
    """Point estimate and ~95% half-width of the achievability epsilon."""

    value: float
    ci_halfwidth: float


@dataclass(frozen=True)
class BoundResult:
    """One evaluated rate bound.

    ``kind`` is "achievability" or "converse".  For achievability,
    ``m_codewords`` is the reported codebook size and the rate equals
    log2(m) / total_slots exactly; ci_low/ci_high bracket the rate the same
    batch supports at the lower/upper edge of the epsilon interval.  For the
    converse, ``gamma`` is the optimizing threshold, the rate carries the
    CDF-band correction (valid with confidence 1 - 1e-3), and ci_low holds
    the uncorrected point estimate.
    """

    kind: str
    rate_bits_per_slot: float
    epsilon_target: float
    n_samples: int
    seed: int
    m_codewords: int | None = None
    gamma: float | None = None
    ci_low: float = 0.0
    ci_high: float = math.inf


def dt_epsilon(batch: SumSampleBatch, m: int) -> DTEpsilon:
    """Dependence-testing error bound for an m-codeword codebook.

    Returns the Monte-Carlo estimate of E[exp(-[S - log((m-1)/2)]+)] and a
    ~95% half-width.  Nondecreasing in m.
    """
    if m < 2:
        raise ValueError(f"codebook needs at least 2 codewords, got m={m}")
    # math.log on the exact integer keeps this valid for m far beyond 2**53
    thr = math.log(m - 1) - _LN2
    vals = np.exp(-np.maximum(batch.values - thr, 0.0))
    n = vals.size
    est = float(vals.mean())
    hw = _Z95 * float(vals.std()) / math.sqrt(n)
    return DTEpsilon(est, hw)


def _dt_feasible(batch: SumSampleBatch, k: int, epsilon: float) -> bool:
    est, hw = dt_epsilon(batch, 1 << k)
    return est + hw <= epsilon


def dt_max_rate(batch: SumSampleBatch, cfg: SystemConfig,
                epsilon: float) -> BoundResult:
    """Largest power-of-two codebook whose dependence-testing bound meets
    epsilon, reported in bits per slot.

    Conservative: the comparison uses the upper edge of the Monte-Carlo
    interval on epsilon.  Returns rate 0 when even one bit fails.
    """
    _check_epsilon(epsilon)
    if batch.n < 100.0 / epsilon:
        warnings.warn(
            f"{batch.n} samples resolve epsilon={epsilon:g} poorly; "
            f"recommend >= {math.ceil(100.0 / epsilon)}",
            stacklevel=2,
        )
    slots = cfg.total_slots
    # threshold above max(S) forces epsilon_ub = 1, so cap the search there
    k_hi = max(1, int(math.ceil(float(batch.values.max()) / _LN2)) + 2)
    k_star = _largest_feasible_k(
        k_hi, lambda k: _dt_feasible(batch, k, epsilon))
    # optimistic edge of the interval, for the reported rate bracket
    k_opt = _largest_feasible_k(
        k_hi, lambda k: dt_epsilon(batch, 1 << k).value
        - dt_epsilon(batch, 1 << k).ci_halfwidth <= epsilon)
    rate = k_star / slots
    return BoundResult(
        kind="achievability",
        rate_bits_per_slot=rate,
        epsilon_target=epsilon,
        n_samples=batch.n,
        seed=batch.seed,
        m_codewords=(1 << k_star) if k_star else None,
        ci_low=rate,
        ci_high=k_opt / slots,
    )


def _largest_feasible_k(k_hi: int, feasible: Callable[[int], bool]) -> int:
    """Largest k in [1, k_hi] passing a monotone feasibility predicate."""
    if not feasible(1):
        return 0
    lo, hi = 1, k_hi
    while feasible(hi):
        lo = hi
        hi *= 2
    # invariant: feasible(lo), not feasible(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def mc_rate_upper(batch: SumSampleBatch, cfg: SystemConfig,
                  epsilon: float) -> BoundResult:
    """Metaconverse upper bound on the rate, bits per slot.

    Evaluates inf_gamma {gamma - log([P(S <= gamma) - epsilon]+)} over the
    sample order statistics (the infimum over real gamma is attained there
    because the objective grows with gamma between jumps of the empirical
    CDF).  The CDF is lowered by the Dvoretzky-Kiefer-Wolfowitz band at
    confidence 1 - 1e-3 so the reported value stays a valid upper bound;
    the uncorrected point estimate lands in ci_low.
    """
    _check_epsilon(epsilon)
    n = batch.n
    if n * epsilon < 100:
        warnings.warn(
            f"{n} samples give only {n * epsilon:.1f} expected below the "
            f"epsilon={epsilon:g} quantile; converse will be loose",
            stacklevel=2,
        )
    slots = cfg.total_slots
    s = np.sort(batch.values)
    ecdf = np.arange(1, n + 1) / n
    band = math.sqrt(math.log(2.0 / MC_BAND_CONFIDENCE) / (2.0 * n))

    def best(cdf: np.ndarray) -> tuple[float, float]:
        margin = cdf - epsilon
        ok = margin > 0.0
        if not np.any(ok):
            return math.inf, math.nan
        obj = (s[ok] - np.log(margin[ok])) / (slots * _LN2)
        i = int(np.argmin(obj))
        return float(obj[i]), float(s[ok][i])

    corrected, gamma = best(ecdf - band)
    point, gamma_pt = best(ecdf)
    if math.isinf(corrected) and not math.isinf(point):
        gamma = gamma_pt
    return BoundResult(
        kind="converse",
        rate_bits_per_slot=corrected,
        epsilon_target=epsilon,
        n_samples=n,
        seed=batch.seed,
        gamma=gamma,
        ci_low=point,
        ci_high=corrected,
    )


def _check_epsilon(epsilon: float) -> None:
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon!r}")


class _BatchCache:
    """Tiny FIFO cache of sampled batches keyed by (config, seed, size)."""

    def __init__(self, capacity: int = 8):
        self.capacity = capacity
        self._store: dict[tuple, SumSampleBatch] = {}

    def get(self, cfg: SystemConfig, n_samples: int, seed: int,
            threads: int = 1) -> SumSampleBatch:
        key = (cfg, n_samples, seed)
        hit = self._store.get(key)
        if hit is not None:
            return hit
        batch = sample_sum_batch(cfg, n_samples, seed, threads=threads)
        if len(self._store) >= self.capacity:
            self._store.pop(next(iter(self._store)))
        self._store[key] = batch
        return batch


_batch_cache = _BatchCache()


def snr_search(cfg: SystemConfig, epsilon: float, rate_bits_per_slot: float,
               snr_lo_db: float, snr_hi_db: float, *,
               n_samples: int = 100_000, seed: int = 0,
               tol_db: float = 0.05, threads: int = 1,
               feasible: Callable[[SystemConfig], bool] | None = None,
               probe_log: list | None = None) -> float:
    """Minimal SNR (dB) at which the achievability bound supports the rate.

    Bisects to ``tol_db``.  ``feasible(cfg)`` may replace the default
    dependence-testing feasibility test (used to drive other bounds through
    the same search).  Raises BracketError unless snr_hi is feasible and
    snr_lo is not.  Probe SNRs and outcomes are appended to ``probe_log``
    when given, and monotonicity of feasibility across the probes is
    asserted.
    """
    validate_config(cfg)
    _check_epsilon(epsilon)
    if rate_bits_per_slot <= 0.0:
        return snr_lo_db
    if snr_lo_db >= snr_hi_db:
        raise BracketError(
            f"need snr_lo_db < snr_hi_db, got [{snr_lo_db}, {snr_hi_db}]")

    if feasible is None:
        def feasible(probe_cfg: SystemConfig) -> bool:
            batch = _batch_cache.get(probe_cfg, n_samples, seed,
                                     threads=threads)
            res = dt_max_rate(batch, probe_cfg, epsilon)
            return res.rate_bits_per_slot >= rate_bits_per_slot

    probes: list[tuple[float, bool]] = []

    def probe(snr_db: float) -> bool:
        ok = feasible(cfg.with_snr_db(snr_db))
        probes.append((snr_db, ok))
        if probe_log is not None:
            probe_log.append((snr_db, ok))
        worst_pass = min((p for p, o in probes if o), default=math.inf)
        best_fail = max((p for p, o in probes if not o), default=-math.inf)
        if best_fail >= worst_pass:
            raise RuntimeError(
                "bound is not monotone in SNR across probes "
                f"(fails at {best_fail} dB but passes at {worst_pass} dB)")
        return ok

    if not probe(snr_hi_db):
        raise BracketError(f"rate infeasible even at {snr_hi_db} dB")
    if probe(snr_lo_db):
        raise BracketError(f"rate already feasible at {snr_lo_db} dB")
    lo, hi = snr_lo_db, snr_hi_db
    while hi - lo > tol_db:
        mid = 0.5 * (lo + hi)
        if probe(mid):
            hi = mid
        else:
            lo = mid
    return hi


SWEEP_CSV_FIELDS = (
    "n_res", "n_ofdm", "bandwidth_hz", "latency_s",
    "achievability_bits_per_slot", "converse_bits_per_slot",
    "n_samples", "seed",
)


def sweep_rates(cfg: SystemConfig, epsilon: float,
                n_res_values: Sequence[int], n_ofdm_values: Sequence[int],
                *, n_samples: int, seed: int,
                threads: int = 1) -> Iterable[dict]:
    """Achievability/converse rates over an (n_res, n_ofdm) grid.

    Yields one CSV-ready dict per grid point; both bounds reuse one sampled
    batch per point.
    """
    validate_config(cfg)
    for n_ofdm in n_ofdm_values:
        for n_res in n_res_values:
            point = SystemConfig(
                n_tx=cfg.n_tx, n_rx=cfg.n_rx, n_res=n_res,
                n_subc=cfg.n_subc, n_ofdm=n_ofdm, link=cfg.link,
                snr_db=cfg.snr_db)
            dims = derive_dimensions(point)
            batch = sample_sum_batch(point, n_samples, seed, threads=threads)
            ach = dt_max_rate(batch, point, epsilon)
            conv = mc_rate_upper(batch, point, epsilon)
            yield {
                "n_res": n_res,
                "n_ofdm": n_ofdm,
                "bandwidth_hz": dims.bandwidth,
                "latency_s": dims.latency,
                "achievability_bits_per_slot": ach.rate_bits_per_slot,
                "converse_bits_per_slot": conv.rate_bits_per_slot,
                "n_samples": n_samples,
                "seed": seed,
            }
