"""Per-RB information density and Monte-Carlo batches of its per-packet sum.

The batch sampler is the throughput-critical path of the whole artifact.
For the isotropic-plus-spike covariance used by both bounds the Gram matrix
splits into two independent Wishart parts, so a draw needs a handful of
Gamma/normal variates instead of an explicit n_coh x n_rx Gaussian matrix;
the per-sample math then runs in the compiled kernels.  A general (any
covariance, any antenna count) path built from the module-level ops serves
as the slow reference.
"""

from __future__ import annotations

import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import special

from .config import SystemConfig, cfg_digest, rb_power, validate_config
from .matrixkernels import (
    DEGENERACY_TOL,
    DegenerateSampleError,
    EigenSample,
    build_log_matrix_M,
    log_det_from_parts,
    log_vandermonde,
    sample_sigma_eigs,
)
from .kernels.infodens import info_nrx1, info_nrx2, nrx1_plan
from .streams import BLOCK_SIZE, iter_blocks, stream_for

__all__ = [
    "InfoDensityParams",
    "SumSampleBatch",
    "SamplingError",
    "ustm_sigma_thm1",
    "c_sigma",
    "log_psi",
    "sample_info_density",
    "sample_info_density_batch",
    "sample_sum_batch",
    "save_batch",
    "load_batch",
]

# Abort a batch when more than this fraction of draws hit the degeneracy
# resample path; it signals a systematically ill-conditioned configuration.
MAX_RESAMPLE_FRACTION = 1e-4
_MAX_RETRIES = 100


class SamplingError(RuntimeError):
    """Raised when batch generation cannot satisfy its quality contract."""


@dataclass(frozen=True)
class InfoDensityParams:
    """The (Sigma, xi, rho) triple parameterizing one sampler."""

    sigma_diag: np.ndarray
    xi: float
    rho: float

    def __post_init__(self):
        object.__setattr__(self, "sigma_diag", np.asarray(self.sigma_diag, dtype=float))
        if np.any(self.sigma_diag <= 0):
            raise ValueError("sigma_diag entries must be positive")
        if self.xi <= 0:
            raise ValueError("xi must be positive")
        if self.rho <= 0:
            raise ValueError("rho must be positive")


@dataclass(frozen=True)
class SumSampleBatch:
    """N draws of the per-packet information-density sum (natural log)."""

    values: np.ndarray
    seed: int
    cfg_digest: str
    n: int

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.values.shape != (self.n,):
            raise ValueError("n must equal len(values)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("batch values must be finite")


def ustm_sigma_thm1(cfg: SystemConfig) -> InfoDensityParams:
    """Covariance and threshold constant of the achievability theorem.

    Under the isotropic simplification the converse evaluation uses the
    identical parameters, so one sampler serves both bounds.
    """
    validate_config(cfg)
    rho = rb_power(cfg)
    if rho <= 0:
        raise ValueError("rho must be positive (xi would not be)")
    t, n = cfg.n_tx, cfg.n_coh
    sigma = np.concatenate([np.full(t, rho / t + 1.0), np.ones(n - t)])
    return InfoDensityParams(sigma_diag=sigma, xi=rho / (t + rho), rho=rho)


def c_sigma(params: InfoDensityParams, cfg: SystemConfig) -> float:
    """Additive constant of the information density (natural log units)."""
    t, r, n, q = cfg.n_tx, cfg.n_rx, cfg.n_coh, cfg.q
    rho = params.rho
    if rho <= 0:
        raise ValueError("rho must be positive")
    if params.sigma_diag.size != n:
        raise ValueError(f"sigma_diag must have length n_coh={n}")
    log_det_sigma = float(np.sum(np.log(params.sigma_diag)))
    return float(
        t * (n - t) * np.log(rho / t)
        - r * log_det_sigma
        - t * (n - t - r) * np.log(1.0 + rho / t)
        + sum(special.gammaln(u) for u in range(1, t + 1))
        - sum(special.gammaln(u) for u in range(n - q + 1, n + 1))
    )


def log_psi(lams: EigenSample, params: InfoDensityParams, cfg: SystemConfig) -> float:
    """Log of the output-density weight psi, fully in log domain."""
    logM, sgn = build_log_matrix_M(lams, params.xi, cfg)
    det = log_det_from_parts(logM, sgn)
    vdm = log_vandermonde(lams)
    if vdm.sign == 0:
        raise DegenerateSampleError("tied eigenvalues: Vandermonde factor vanished")
    if det.sign == 0:
        raise DegenerateSampleError("det M underflowed to zero")
    lam = lams.lambdas
    n, r, t = cfg.n_coh, cfg.n_rx, cfg.n_tx
    tail = float(np.sum(-lam / (1.0 + params.rho / t) - (n - r) * np.log(lam)))
    return det.log_abs - vdm.log_abs + tail


def sample_info_density(
    params: InfoDensityParams, cfg: SystemConfig, stream: np.random.Generator
) -> float:
    """One information-density draw via the op-composition (reference) path."""
    c = c_sigma(params, cfg)
    for _ in range(_MAX_RETRIES):
        lams, tr_zz = sample_sigma_eigs(params.sigma_diag, cfg, stream)
        if lams.degenerate_flag:
            continue
        return c - tr_zz - log_psi(lams, params, cfg)
    raise SamplingError("degenerate eigenvalue draws exceeded retry budget")


def sample_info_density_batch(
    params: InfoDensityParams, cfg: SystemConfig, stream: np.random.Generator, n: int
) -> np.ndarray:
    """n reference-path draws (explicit Gaussian matrices; slow, general)."""
    return np.array([sample_info_density(params, cfg, stream) for _ in range(n)])


# ---------------------------------------------------------------------------
# fast batched sampler
# ---------------------------------------------------------------------------

def _has_fast_path(cfg: SystemConfig) -> bool:
    if cfg.n_rx == 1:
        return True
    return cfg.n_rx == 2 and cfg.n_tx in (1, 2)


def _draw_eigs_nrx1(gen: np.random.Generator, count: int, t: int, n: int, a: float):
    """(lambda, trace) draws: Gram matrix splits into two Gamma variates."""
    g_top = gen.gamma(t, 1.0, size=count)
    g_rest = gen.gamma(n - t, 1.0, size=count)
    lam = (1.0 + a) * g_top + g_rest
    tr = g_top + g_rest
    return lam, tr


def _draw_eigs_nrx2(gen: np.random.Generator, count: int, t: int, n: int, a: float):
    """(lambda1, lambda2, trace) draws via two-part Bartlett construction."""
    if t == 1:
        zn = gen.standard_normal((count, 4))
        a1 = (zn[:, 0] + 1j * zn[:, 1]) / np.sqrt(2.0)
        a2 = (zn[:, 2] + 1j * zn[:, 3]) / np.sqrt(2.0)
        wa11 = a1.real**2 + a1.imag**2
        wa22 = a2.real**2 + a2.imag**2
        wa12 = np.conj(a1) * a2
        tr_a = wa11 + wa22
        ga1 = None
    else:
        ga1 = gen.gamma(2, 1.0, size=count)
        ga2 = gen.gamma(1, 1.0, size=count)
        za = gen.standard_normal((count, 2))
        zac = (za[:, 0] + 1j * za[:, 1]) / np.sqrt(2.0)
        wa11 = ga1
        wa22 = zac.real**2 + zac.imag**2 + ga2
        wa12 = np.conj(zac * np.sqrt(ga1))
        tr_a = wa11 + wa22
    gb1 = gen.gamma(n - t, 1.0, size=count)
    gb2 = gen.gamma(n - t - 1, 1.0, size=count)
    zb = gen.standard_normal((count, 2))
    zbc = (zb[:, 0] + 1j * zb[:, 1]) / np.sqrt(2.0)
    wb11 = gb1
    wb22 = zbc.real**2 + zbc.imag**2 + gb2
    wb12 = np.conj(zbc * np.sqrt(gb1))
    tr_b = wb11 + wb22

    c11 = (1.0 + a) * wa11 + wb11
    c22 = (1.0 + a) * wa22 + wb22
    c12 = (1.0 + a) * wa12 + wb12
    c12sq = c12.real**2 + c12.imag**2
    mean = 0.5 * (c11 + c22)
    root = np.sqrt(0.25 * (c11 - c22) ** 2 + c12sq)
    return mean + root, np.maximum(mean - root, 0.0), tr_a + tr_b


def _fill_block_fast(cfg, params, c_const, plan, seed, k, block_idx, count, out):
    """Fill out[:count] with info-density draws for RB k, block block_idx.

    Returns the number of degeneracy resamples performed.
    """
    t, r, n = cfg.n_tx, cfg.n_rx, cfg.n_coh
    a = params.rho / t
    a1 = 1.0 + a
    xi = params.xi
    gen = stream_for(seed, k, block_idx)
    if r == 1:
        lam, tr = _draw_eigs_nrx1(gen, count, t, n, a)
        info_nrx1(lam, tr, a1, c_const, plan, out[:count])
    else:
        l1, l2, tr = _draw_eigs_nrx2(gen, count, t, n, a)
        info_nrx2(l1, l2, tr, xi, a1, n, t, c_const, DEGENERACY_TOL, out[:count])
    resampled = 0
    bad = np.flatnonzero(~np.isfinite(out[:count]))
    retry = 0
    while bad.size and retry < _MAX_RETRIES:
        retry += 1
        resampled += bad.size
        rgen = stream_for(seed, k, block_idx, retry)
        sub = np.empty(bad.size)
        if r == 1:
            lam, tr = _draw_eigs_nrx1(rgen, bad.size, t, n, a)
            info_nrx1(lam, tr, a1, c_const, plan, sub)
        else:
            l1, l2, tr = _draw_eigs_nrx2(rgen, bad.size, t, n, a)
            info_nrx2(l1, l2, tr, xi, a1, n, t, c_const, DEGENERACY_TOL, sub)
        out[bad] = sub
        bad = bad[~np.isfinite(sub)]
    if bad.size:
        raise SamplingError("degenerate draws exceeded retry budget")
    return resampled


def _fill_block_general(cfg, params, seed, k, block_idx, count, out):
    """Reference-path block fill for geometries without a fast kernel."""
    gen = stream_for(seed, k, block_idx)
    c = c_sigma(params, cfg)
    for i in range(count):
        lams, tr_zz = sample_sigma_eigs(params.sigma_diag, cfg, gen)
        retries = 0
        while lams.degenerate_flag and retries < _MAX_RETRIES:
            lams, tr_zz = sample_sigma_eigs(params.sigma_diag, cfg, gen)
            retries += 1
        out[i] = c - tr_zz - log_psi(lams, params, cfg)
    return 0


def sample_sum_batch(
    cfg: SystemConfig,
    n_samples: int,
    seed: int,
    threads: int = 1,
) -> SumSampleBatch:
    """N iid draws of the per-packet sum of per-RB information densities.

    Each (sample block, RB) pair draws from its own counter-addressed
    stream, so the output is bit-identical for any thread count.
    """
    validate_config(cfg)
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    params = ustm_sigma_thm1(cfg)
    fast = _has_fast_path(cfg)
    c_const = c_sigma(params, cfg)
    plan = nrx1_plan(cfg.n_coh, cfg.n_tx, params.xi) if cfg.n_rx == 1 else None

    values = np.zeros(n_samples)
    resample_total = 0
    blocks = list(iter_blocks(n_samples))

    def run_block(args):
        block_idx, start, count = args
        acc = np.zeros(count)
        scratch = np.empty(count)
        n_res = 0
        for k in range(cfg.n_res):
            if fast:
                n_res += _fill_block_fast(
                    cfg, params, c_const, plan, seed, k, block_idx, count, scratch
                )
            else:
                n_res += _fill_block_general(
                    cfg, params, seed, k, block_idx, count, scratch
                )
            acc += scratch[:count]
        return start, count, acc, n_res

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_block, blocks))
    else:
        results = [run_block(b) for b in blocks]
    for start, count, acc, n_res in results:
        values[start:start + count] = acc
        resample_total += n_res

    total_draws = n_samples * cfg.n_res
    if resample_total > MAX_RESAMPLE_FRACTION * total_draws:
        raise SamplingError(
            f"resample rate {resample_total / total_draws:.2e} exceeds "
            f"{MAX_RESAMPLE_FRACTION:.0e}"
        )
    if not np.all(np.isfinite(values)):
        raise SamplingError("non-finite values in batch")
    return SumSampleBatch(values=values, seed=seed, cfg_digest=cfg_digest(cfg), n=n_samples)


# ---------------------------------------------------------------------------
# batch cache files
# ---------------------------------------------------------------------------

_MAGIC = b"FBLBATCH1\n"


def save_batch(batch: SumSampleBatch, path) -> None:
    """Write header (digest, seed, N) + packed little-endian float64."""
    header = json.dumps(
        {"cfg_digest": batch.cfg_digest, "seed": batch.seed, "n": batch.n}
    ).encode()
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        f.write(batch.values.astype("<f8").tobytes())


def load_batch(path, cfg: SystemConfig | None = None) -> SumSampleBatch:
    """Load a batch file; verifies the config digest when cfg is given."""
    with open(path, "rb") as f:
        if f.read(len(_MAGIC)) != _MAGIC:
            raise SamplingError(f"{path}: not a batch cache file")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode())
        values = np.frombuffer(f.read(), dtype="<f8").copy()
    if len(values) != header["n"]:
        raise SamplingError(f"{path}: truncated batch payload")
    if cfg is not None and cfg_digest(cfg) != header["cfg_digest"]:
        raise SamplingError(f"{path}: config digest mismatch")
    return SumSampleBatch(
        values=values, seed=header["seed"], cfg_digest=header["cfg_digest"], n=header["n"]
    )
