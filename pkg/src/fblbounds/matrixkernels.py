"""Random-matrix sampling and special-function kernels.

Everything determinant-shaped is carried as (log-magnitude, sign) pairs:
with coherence blocks approaching 100 slots the raw determinants leave
double-precision range long before any bound is evaluated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .config import SystemConfig

__all__ = [
    "EigenSample",
    "LogDet",
    "DegenerateSampleError",
    "DEGENERACY_TOL",
    "sample_gaussian_matrix",
    "sample_sigma_eigs",
    "sample_wishart_eigs",
    "sample_wishart_eigs_batch",
    "reg_inc_gamma",
    "log_vandermonde",
    "build_matrix_M",
    "build_log_matrix_M",
    "log_abs_det",
    "log_det_from_parts",
]

# Eigenvalue gap below DEGENERACY_TOL * lambda_1 makes det(M)/V(Lambda)
# numerically treacherous even though the ratio stays finite; such samples
# are flagged and resampled upstream.
DEGENERACY_TOL = 1e-10


class DegenerateSampleError(RuntimeError):
    """Raised when a degenerate eigenvalue sample reaches a log-domain op."""


@dataclass(frozen=True)
class EigenSample:
    """Ordered (descending) nonnegative eigenvalues plus a degeneracy flag."""

    lambdas: np.ndarray
    degenerate_flag: bool = False

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        object.__setattr__(self, "lambdas", lam)
        if lam.ndim != 1:
            raise ValueError("lambdas must be a 1-D vector")
        if np.any(lam < 0):
            raise ValueError("eigenvalues must be nonnegative")
        if np.any(np.diff(lam) > 0):
            raise ValueError("eigenvalues must be sorted descending")


@dataclass(frozen=True)
class LogDet:
    """log|det| plus sign; sign 0 encodes an exactly singular value."""

    log_abs: float
    sign: int

    def __post_init__(self):
        if self.sign == 0 and not np.isneginf(self.log_abs):
            raise ValueError("sign 0 requires log_abs = -inf")


def _flag_degenerate(lam: np.ndarray) -> bool:
    if lam.size < 2 or lam[0] <= 0:
        return False
    return bool(np.min(lam[:-1] - lam[1:]) < DEGENERACY_TOL * lam[0])


def sample_gaussian_matrix(rows: int, cols: int, stream: np.random.Generator) -> np.ndarray:
    """rows x cols matrix of iid CN(0,1) entries."""
    if rows < 1 or cols < 1:
        raise ValueError("matrix dimensions must be >= 1")
    z = stream.standard_normal((rows, cols, 2))
    return (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)


def sample_sigma_eigs(
    sigma_diag: np.ndarray, cfg: SystemConfig, stream: np.random.Generator
) -> tuple[EigenSample, float]:
    """Eigenvalues of Z^H diag(sigma) Z for a fresh CN(0,1) Z.

    Returns the ordered eigenvalue sample and tr(Z^H Z) from the same Z,
    which downstream information-density draws need jointly.
    """
    sigma_diag = np.asarray(sigma_diag, dtype=float)
    if sigma_diag.ndim != 1 or sigma_diag.size != cfg.n_coh:
        raise ValueError(f"sigma_diag must have length n_coh={cfg.n_coh}")
    if np.any(sigma_diag <= 0):
        raise ValueError("sigma_diag entries must be positive")
    z = sample_gaussian_matrix(cfg.n_coh, cfg.n_rx, stream)
    tr_zz = float(np.sum(z.real**2 + z.imag**2))
    zs = z * np.sqrt(sigma_diag)[:, None]
    gram = zs.conj().T @ zs
    lam = np.linalg.eigvalsh(gram)[::-1].real.copy()
    lam[lam < 0] = 0.0
    return EigenSample(lam, _flag_degenerate(lam)), tr_zz


def sample_wishart_eigs(n_coh: int, n_rx: int, stream: np.random.Generator) -> EigenSample:
    """Ordered eigenvalues of Z^H Z, Z of size n_coh x n_rx with iid CN(0,1)."""
    lam = sample_wishart_eigs_batch(n_coh, n_rx, 1, stream)[0]
    return EigenSample(lam, _flag_degenerate(lam))


def sample_wishart_eigs_batch(
    n_coh: int, n_rx: int, n: int, stream: np.random.Generator
) -> np.ndarray:
    """(n, n_rx) array of ordered Wishart eigenvalue draws.

    Uses the Bartlett decomposition for n_rx <= 2 (distribution-identical to
    forming Z^H Z explicitly, at a fraction of the variates); explicit Z
    otherwise.
    """
    if not (n_coh > n_rx >= 1):
        raise ValueError("need n_coh > n_rx >= 1")
    m = n_coh
    if n_rx == 1:
        return stream.gamma(m, 1.0, size=(n, 1))
    if n_rx == 2:
        g1 = stream.gamma(m, 1.0, size=n)
        g2 = stream.gamma(m - 1, 1.0, size=n)
        zn = stream.standard_normal((n, 2))
        z2 = (zn[:, 0] ** 2 + zn[:, 1] ** 2) / 2.0
        w11 = g1
        w22 = z2 + g2
        w12sq = z2 * g1
        return _eig2_desc(w11, w22, w12sq)
    out = np.empty((n, n_rx))
    for i in range(n):
        z = sample_gaussian_matrix(m, n_rx, stream)
        lam = np.linalg.eigvalsh(z.conj().T @ z)[::-1].real
        out[i] = np.maximum(lam, 0.0)
    return out


def _eig2_desc(c11: np.ndarray, c22: np.ndarray, c12sq: np.ndarray) -> np.ndarray:
    """Closed-form descending eigenvalues of 2x2 Hermitian matrices."""
    mean = 0.5 * (c11 + c22)
    root = np.sqrt(0.25 * (c11 - c22) ** 2 + c12sq)
    return np.stack([mean + root, np.maximum(mean - root, 0.0)], axis=1)


def reg_inc_gamma(n: int, x) -> np.ndarray | float:
    """Regularized lower incomplete gamma for integer order n >= 0.

    The n = 0 case is defined as 1 for all x >= 0; it is the limit of the
    regularized function and the convention the matrix builder relies on
    when the order clamps at zero.
    """
    if n < 0:
        raise ValueError("order must be >= 0")
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < 0):
        raise ValueError("argument must be >= 0")
    if n == 0:
        out = np.ones_like(x_arr)
        return float(out) if np.isscalar(x) else out
    out = special.gammainc(n, x_arr)
    return float(out) if np.isscalar(x) else out


def log_vandermonde(lams: EigenSample) -> LogDet:
    """log of prod_{i<j} (lambda_i - lambda_j), as magnitude + sign.

    Exact ties yield sign 0 (log -inf); the caller owns the resample policy.
    """
    lam = lams.lambdas
    r = lam.size
    if r < 2:
        return LogDet(0.0, 1)
    log_abs = 0.0
    sign = 1
    for i in range(r):
        for j in range(i + 1, r):
            d = lam[i] - lam[j]
            if d == 0.0:
                return LogDet(-np.inf, 0)
            if d < 0:
                sign = -sign
                d = -d
            log_abs += np.log(d)
    return LogDet(float(log_abs), sign)


def _padding_row_value(n_coh: int, i: int, xi: float, n_tx: int, j: int) -> float:
    """Entry (i, j), i > n_rx: (d/d delta)^{n_tx-j} delta^{n_coh-i} at delta=xi."""
    a = n_coh - i
    d = n_tx - j
    if d > a:
        return 0.0
    return float(special.poch(a - d + 1, d)) * xi ** (a - d)


def build_matrix_M(lams: EigenSample, xi: float, cfg: SystemConfig) -> np.ndarray:
    """The p x p matrix whose determinant drives the output density weight.

    Rows 1..n_rx hold the eigenvalue-dependent entries; when n_tx > n_rx the
    remaining rows are the closed-form derivative entries (falling-factorial
    formula), which extend across all n_tx leading columns.
    """
    lam = lams.lambdas
    t, r, n, p = cfg.n_tx, cfg.n_rx, cfg.n_coh, cfg.p
    if lam.size != r:
        raise ValueError(f"expected {r} eigenvalues, got {lam.size}")
    if xi <= 0:
        raise ValueError("xi must be positive")
    M = np.zeros((p, p))
    for i in range(1, r + 1):
        li = lam[i - 1]
        for j in range(1, t + 1):
            arg = max(0, n + j - p - t)
            M[i - 1, j - 1] = li ** (t - j) * reg_inc_gamma(arg, li * xi)
        for j in range(t + 1, p + 1):
            M[i - 1, j - 1] = li ** (n - j) * np.exp(-li * xi)
    for i in range(r + 1, p + 1):
        for j in range(1, t + 1):
            M[i - 1, j - 1] = _padding_row_value(n, i, xi, t, j)
    return M


def build_log_matrix_M(
    lams: EigenSample, xi: float, cfg: SystemConfig
) -> tuple[np.ndarray, np.ndarray]:
    """(log|entry|, sign) form of build_matrix_M, safe for large n_coh."""
    lam = lams.lambdas
    t, r, n, p = cfg.n_tx, cfg.n_rx, cfg.n_coh, cfg.p
    if lam.size != r:
        raise ValueError(f"expected {r} eigenvalues, got {lam.size}")
    logM = np.full((p, p), -np.inf)
    sgn = np.zeros((p, p))
    with np.errstate(divide="ignore"):
        loglam = np.log(lam)
    for i in range(1, r + 1):
        li, lli = lam[i - 1], loglam[i - 1]
        for j in range(1, t + 1):
            arg = max(0, n + j - p - t)
            lg = _log_reg_inc_gamma(arg, li * xi)
            if np.isfinite(lg) or lg == 0.0:
                logM[i - 1, j - 1] = (t - j) * lli + lg
                sgn[i - 1, j - 1] = 1.0
        for j in range(t + 1, p + 1):
            logM[i - 1, j - 1] = (n - j) * lli - li * xi
            sgn[i - 1, j - 1] = 1.0
    for i in range(r + 1, p + 1):
        for j in range(1, t + 1):
            v = _padding_row_value(n, i, xi, t, j)
            if v != 0.0:
                logM[i - 1, j - 1] = np.log(abs(v))
                sgn[i - 1, j - 1] = np.sign(v)
    return logM, sgn


def _log_reg_inc_gamma(n: int, x: float) -> float:
    """log of reg_inc_gamma(n, x), stable in the deep lower tail."""
    if n == 0:
        return 0.0
    if x == 0.0:
        return -np.inf
    g = special.gammainc(n, x)
    if g > 1e-250:
        return float(np.log(g))
    # lower-tail series: x^n e^{-x} / Gamma(n+1) * sum_k x^k / poch(n+1, k)
    s, term, k = 1.0, 1.0, 1
    while term > 1e-20 * s and k < 1000:
        term *= x / (n + k)
        s += term
        k += 1
    return float(n * np.log(x) - x - special.gammaln(n + 1) + np.log(s))


def log_abs_det(m: np.ndarray) -> LogDet:
    """log|det| and sign via pivoted factorization of a column-scaled copy."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("square matrix required")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    scales = np.max(np.abs(m), axis=0)
    if np.any(scales == 0.0):
        return LogDet(-np.inf, 0)
    scaled = m / scales
    sign, ld = np.linalg.slogdet(scaled)
    if sign == 0.0:
        return LogDet(-np.inf, 0)
    return LogDet(float(ld + np.sum(np.log(scales))), int(sign))


def log_det_from_parts(logM: np.ndarray, sgn: np.ndarray) -> LogDet:
    """Determinant of a matrix given in (log|entry|, sign) form.

    Rows are rescaled by their maximum before factorization so that huge
    dynamic range across rows cannot overflow.
    """
    row_max = np.max(logM, axis=1)
    if np.any(np.isneginf(row_max)):
        return LogDet(-np.inf, 0)
    shifted = logM - row_max[:, None]
    col_max = np.max(shifted, axis=0)
    if np.any(np.isneginf(col_max)):
        return LogDet(-np.inf, 0)
    scaled = sgn * np.exp(shifted - col_max[None, :])
    sign, ld = np.linalg.slogdet(scaled)
    if sign == 0.0:
        return LogDet(-np.inf, 0)
    return LogDet(float(ld + np.sum(row_max) + np.sum(col_max)), int(sign))
