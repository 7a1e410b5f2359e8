"""Hot per-sample kernels for information-density and error-exponent draws.

Single-receive-antenna draws reduce the determinant to a cofactor expansion
along the one eigenvalue-dependent row: the padding-row cofactors are
precomputed once per (geometry, xi) in ``nrx1_cofactors`` and every sample
costs one incomplete-gamma series plus an n_tx-term signed log-sum-exp.

Two-receive-antenna draws (n_tx <= 2, so the matrix stays 2x2) evaluate the
determinant directly in log form.

Every kernel exists twice: a numba scalar loop (``*_nb``) and a vectorized
numpy fallback (``*_np``).  ``fblbounds.backend`` picks which one runs.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

from ..backend import njit, using_numba

__all__ = [
    "nrx1_cofactors",
    "nrx1_plan",
    "Nrx1Plan",
    "info_nrx1",
    "info_nrx2",
    "logg_nrx1",
]

# above this many transmit antennas the signed cofactor sum cancels too many
# digits (~1e-4 relative at n_tx = 8); switch to a scaled-LU determinant
_COFACTOR_MAX_NTX = 4

# x beyond which the regularized lower gamma is 1.0 to double precision for
# every order this code ever uses (order <= n_coh ~ 100, upper tail < e^-700).
_X_SATURATED = 700.0
# linear-domain result below which the lower-tail series is used instead
_G_TINY = 1e-12


def nrx1_cofactors(n_coh: int, n_tx: int, xi: float):
    """Signed log cofactors of the padding rows, expansion along row 1.

    Returns (cof_log, cof_sign, m0) where the determinant of the p x p
    matrix for an eigenvalue lam is

        sum_j cof_sign[j] * exp(cof_log[j] + (n_tx-1-j)*log(lam)
                                + log_gammainc(m0+1+j, lam*xi))

    with j = 0..n_tx-1 and gamma order clamped at 0 (log term 0).
    """
    t, n = n_tx, n_coh
    if t == 1:
        return np.zeros(1), np.ones(1), n - 2
    # padding rows i=2..t, cols j=1..t: poch(a-d+1, d)*xi^(a-d),
    # a = n-i, d = t-j; the xi powers factor into xi^(n-i-t) * xi^j.
    P = np.zeros((t - 1, t))
    for i in range(2, t + 1):
        a = n - i
        for j in range(1, t + 1):
            d = t - j
            P[i - 2, j - 1] = 0.0 if d > a else special.poch(a - d + 1, d)
    row_log = np.log(xi) * sum(n - i - t for i in range(2, t + 1))
    col_sum = t * (t + 1) // 2
    cof_log = np.empty(t)
    cof_sign = np.empty(t)
    cols = np.arange(t)
    for j in range(1, t + 1):
        minor = P[:, cols != (j - 1)]
        sign, ld = np.linalg.slogdet(minor)
        if sign == 0.0:
            cof_log[j - 1] = -np.inf
            cof_sign[j - 1] = 0.0
            continue
        cof_log[j - 1] = ld + row_log + (col_sum - j) * np.log(xi)
        cof_sign[j - 1] = sign * (-1.0) ** (1 + j)
    return cof_log, cof_sign, n - 2 * t


class Nrx1Plan:
    """Precomputed per-(n_coh, n_tx, xi) data for the n_rx = 1 fast path.

    Small n_tx uses the cofactor expansion (cof_log/cof_sign); larger n_tx
    builds the full matrix per sample and takes a scaled LU determinant
    (pad_scaled/pad_shift hold the eigenvalue-independent rows).
    """

    __slots__ = ("n", "t", "xi", "m0", "cof_log", "cof_sign",
                 "pad_scaled", "pad_shift", "use_matrix")

    def __init__(self, n_coh: int, n_tx: int, xi: float):
        self.n = n_coh
        self.t = n_tx
        self.xi = xi
        self.m0 = n_coh - 2 * n_tx
        self.use_matrix = n_tx > _COFACTOR_MAX_NTX
        if self.use_matrix:
            self.cof_log = np.zeros(1)
            self.cof_sign = np.zeros(1)
            self.pad_scaled, self.pad_shift = _nrx1_pad_rows(n_coh, n_tx, xi)
        else:
            self.cof_log, self.cof_sign, _ = nrx1_cofactors(n_coh, n_tx, xi)
            self.pad_scaled = np.zeros((1, 1))
            self.pad_shift = 0.0


def nrx1_plan(n_coh: int, n_tx: int, xi: float) -> Nrx1Plan:
    """Build the per-geometry evaluation plan for the n_rx = 1 kernels."""
    return Nrx1Plan(n_coh, n_tx, xi)


def _nrx1_pad_rows(n_coh: int, n_tx: int, xi: float):
    """Matrix rows 2..n_tx (eigenvalue independent), scaled to unit row max.

    Row i (i = 2..n_tx), column j entry is poch(a-d+1, d) * xi^(a-d) with
    a = n_coh - i, d = n_tx - j, and 0 whenever d > a.  The row-common power
    xi^(a-n_tx+1) and row maxima move into the returned log shift so the
    stored entries stay in [0, 1]; keeping them in linear form preserves full
    entry-level precision (logarithm round trips would cost several digits
    once the determinant's conditioning amplifies them).
    """
    t, n = n_tx, n_coh
    pad = np.zeros((t - 1, t))
    shift = 0.0
    for i in range(2, t + 1):
        a = n - i
        for j in range(1, t + 1):
            d = t - j
            if d > a:
                continue
            pad[i - 2, j - 1] = special.poch(a - d + 1, d) * xi ** (j - 1)
        rmax = pad[i - 2].max()
        pad[i - 2] /= rmax
        shift += math.log(rmax) + (a - t + 1) * math.log(xi)
    return pad, shift


# ---------------------------------------------------------------------------
# scalar helpers (numba-compiled when the numba backend is active)
# ---------------------------------------------------------------------------

@njit
def _lgaminc_small(m: int, x: float) -> float:
    """log gammainc(m, x) via the lower-tail series (for tiny results)."""
    s = 1.0
    term = 1.0
    k = 1
    while term > 1e-20 * s and k < 1000:
        term *= x / (m + k)
        s += term
        k += 1
    return m * math.log(x) - x - math.lgamma(m + 1) + math.log(s)


@njit
def _fill_lgaminc_run(m_lo: int, m_hi: int, x: float, out) -> None:
    """log gammainc(m, x) for consecutive orders m_lo..m_hi in one pass.

    out[m - m_lo] receives log gammainc(m, x); callers guarantee
    1 <= m_lo <= m_hi.
    """
    if x <= 0.0:
        for idx in range(m_hi - m_lo + 1):
            out[idx] = -np.inf
        return
    if x > _X_SATURATED:
        for idx in range(m_hi - m_lo + 1):
            out[idx] = 0.0
        return
    emx = math.exp(-x)
    s = 1.0
    tk = 1.0
    for m in range(1, m_hi + 1):
        if m >= m_lo:
            g = 1.0 - emx * s
            if g < _G_TINY:
                out[m - m_lo] = _lgaminc_small(m, x)
            else:
                out[m - m_lo] = math.log(g)
        tk *= x / m
        s += tk


@njit
def _logdet_nrx1(lam: float, loglam: float, xi: float, t: int, m0: int,
                 cof_log, cof_sign, scratch) -> float:
    """log det of the p x p matrix for a single eigenvalue (n_rx = 1).

    Returns -inf on total underflow and nan on sign-destroying cancellation.
    """
    x = lam * xi
    m_lo = m0 + 1
    m_hi = m0 + t
    if m_hi >= 1:
        _fill_lgaminc_run(max(1, m_lo), m_hi, x, scratch)
    best = -np.inf
    for j in range(t):
        if cof_sign[j] == 0.0:
            continue
        m = m0 + 1 + j
        lg = 0.0 if m <= 0 else scratch[m - max(1, m_lo)]
        term = cof_log[j] + (t - 1 - j) * loglam + lg
        if term > best:
            best = term
    if best == -np.inf:
        return -np.inf
    acc = 0.0
    for j in range(t):
        m = m0 + 1 + j
        lg = 0.0 if m <= 0 else scratch[m - max(1, m_lo)]
        if cof_sign[j] != 0.0:
            acc += cof_sign[j] * math.exp(cof_log[j] + (t - 1 - j) * loglam + lg - best)
    if acc <= 0.0:
        return np.nan
    return best + math.log(acc)


@njit
def _logdet_nrx1_mat(lam: float, loglam: float, xi: float, t: int, m0: int,
                     pad_scaled, pad_shift: float, scratch, A) -> float:
    """log det via row/column-scaled LU for a single eigenvalue (n_rx = 1).

    A is a (t, t) work array.  Returns -inf on total underflow and nan when
    the determinant comes out non-positive.  The non-first rows arrive
    pre-scaled in linear form; only the eigenvalue-dependent first row is
    scaled here, so entry precision stays near machine level.
    """
    x = lam * xi
    m_lo = m0 + 1
    m_hi = m0 + t
    if m_hi >= 1:
        _fill_lgaminc_run(max(1, m_lo), m_hi, x, scratch)
    rmax0 = -np.inf
    for j in range(t):
        m = m0 + 1 + j
        lg = 0.0 if m <= 0 else scratch[m - max(1, m_lo)]
        v = (t - 1 - j) * loglam + lg
        A[0, j] = v
        if v > rmax0:
            rmax0 = v
    if rmax0 == -np.inf:
        return -np.inf
    for j in range(t):
        A[0, j] = math.exp(A[0, j] - rmax0)
    for i in range(1, t):
        for j in range(t):
            A[i, j] = pad_scaled[i - 1, j]
    shift = rmax0 + pad_shift
    for j in range(t):
        cmax = 0.0
        for i in range(t):
            if A[i, j] > cmax:
                cmax = A[i, j]
        if cmax == 0.0:
            return -np.inf
        shift += math.log(cmax)
        for i in range(t):
            A[i, j] /= cmax
    sign, ld = np.linalg.slogdet(A)
    if sign <= 0.0:
        return np.nan
    return ld + shift


@njit
def _info_nrx1_mat_nb(lam, tr, xi, a1, n, t, c_const, m0, pad_scaled,
                      pad_shift, out):
    scratch = np.empty(t)
    A = np.empty((t, t))
    for s in range(lam.shape[0]):
        li = lam[s]
        loglam = math.log(li)
        ld = _logdet_nrx1_mat(li, loglam, xi, t, m0, pad_scaled, pad_shift,
                              scratch, A)
        log_psi = ld - li / a1 - (n - 1) * loglam
        out[s] = c_const - tr[s] - log_psi


@njit
def _logg_nrx1_mat_nb(lam, xi, n, t, m0, pad_scaled, pad_shift, out):
    scratch = np.empty(t)
    A = np.empty((t, t))
    for s in range(lam.shape[0]):
        li = lam[s]
        loglam = math.log(li)
        ld = _logdet_nrx1_mat(li, loglam, xi, t, m0, pad_scaled, pad_shift,
                              scratch, A)
        out[s] = xi * li + (1 - n) * loglam + ld


@njit
def _info_nrx1_nb(lam, tr, xi, a1, n, t, c_const, m0, cof_log, cof_sign, out):
    scratch = np.empty(t)
    for s in range(lam.shape[0]):
        li = lam[s]
        loglam = math.log(li)
        ld = _logdet_nrx1(li, loglam, xi, t, m0, cof_log, cof_sign, scratch)
        log_psi = ld - li / a1 - (n - 1) * loglam
        out[s] = c_const - tr[s] - log_psi


@njit
def _logg_nrx1_nb(lam, xi, n, t, m0, cof_log, cof_sign, out):
    scratch = np.empty(t)
    for s in range(lam.shape[0]):
        li = lam[s]
        loglam = math.log(li)
        ld = _logdet_nrx1(li, loglam, xi, t, m0, cof_log, cof_sign, scratch)
        out[s] = xi * li + (1 - n) * loglam + ld


@njit
def _lgaminc_one(m: int, x: float) -> float:
    out = np.empty(1)
    _fill_lgaminc_run(m, m, x, out)
    return out[0]


@njit
def _info_nrx2_nb(lam1, lam2, tr, xi, a1, n, t, c_const, gap_tol, out):
    pair = np.empty(2)
    for s in range(lam1.shape[0]):
        l1 = lam1[s]
        l2 = lam2[s]
        if l2 <= 0.0 or l1 - l2 < gap_tol * l1:
            out[s] = np.nan
            continue
        ll1 = math.log(l1)
        ll2 = math.log(l2)
        if t == 1:
            # M[i][0] = gammainc(n-2, li*xi); M[i][1] = li^(n-2) e^{-li xi}
            a11 = _lgaminc_one(n - 2, l1 * xi)
            a21 = _lgaminc_one(n - 2, l2 * xi)
            a12 = (n - 2) * ll1 - l1 * xi
            a22 = (n - 2) * ll2 - l2 * xi
        else:
            # t = 2: M[i][j] = li^(2-j) gammainc(n-4+j, li*xi)
            _fill_lgaminc_run(n - 3, n - 2, l1 * xi, pair)
            a11 = ll1 + pair[0]
            a12 = pair[1]
            _fill_lgaminc_run(n - 3, n - 2, l2 * xi, pair)
            a21 = ll2 + pair[0]
            a22 = pair[1]
        lp = a11 + a22
        lm = a12 + a21
        hi = lp if lp > lm else lm
        acc = math.exp(lp - hi) - math.exp(lm - hi)
        if acc <= 0.0:
            out[s] = np.nan
            continue
        ld = hi + math.log(acc)
        log_psi = (ld - math.log(l1 - l2)
                   - l1 / a1 - (n - 2) * ll1
                   - l2 / a1 - (n - 2) * ll2)
        out[s] = c_const - tr[s] - log_psi


# ---------------------------------------------------------------------------
# numpy fallback implementations
# ---------------------------------------------------------------------------

def _lgaminc_np(m: int, x: np.ndarray) -> np.ndarray:
    """Vectorized log gammainc(m, x) with a lower-tail series fallback."""
    if m <= 0:
        return np.zeros_like(x)
    g = special.gammainc(m, x)
    with np.errstate(divide="ignore"):
        out = np.log(g)
    tiny = g < _G_TINY
    if np.any(tiny):
        xt = x[tiny]
        s = np.ones_like(xt)
        term = np.ones_like(xt)
        for k in range(1, 1000):
            term = term * xt / (m + k)
            s += term
            if np.all(term <= 1e-20 * s):
                break
        with np.errstate(divide="ignore"):
            small = m * np.log(xt) - xt - special.gammaln(m + 1) + np.log(s)
        out[tiny] = small
    return out


def _logdet_nrx1_np(lam, loglam, xi, t, m0, cof_log, cof_sign):
    terms = np.full((t, lam.size), -np.inf)
    for j in range(t):
        if cof_sign[j] == 0.0:
            continue
        m = m0 + 1 + j
        lg = _lgaminc_np(m, lam * xi) if m > 0 else 0.0
        terms[j] = cof_log[j] + (t - 1 - j) * loglam + lg
    best = np.max(terms, axis=0)
    acc = np.zeros(lam.size)
    for j in range(t):
        if cof_sign[j] == 0.0:
            continue
        acc += cof_sign[j] * np.exp(terms[j] - best)
    out = np.where(acc > 0.0, best + np.log(np.maximum(acc, 1e-300)), np.nan)
    out[np.isneginf(best)] = -np.inf
    return out


def _logdet_nrx1_mat_np(lam, loglam, xi, t, m0, pad_scaled, pad_shift):
    nsmp = lam.size
    row0 = np.empty((nsmp, t))
    for j in range(t):
        m = m0 + 1 + j
        lg = _lgaminc_np(m, lam * xi) if m > 0 else 0.0
        row0[:, j] = (t - 1 - j) * loglam + lg
    rmax0 = np.max(row0, axis=1)
    A = np.empty((nsmp, t, t))
    with np.errstate(invalid="ignore"):
        A[:, 0, :] = np.exp(row0 - rmax0[:, None])
    A[:, 1:, :] = pad_scaled[None, :, :]
    A[:, 0, :][~np.isfinite(rmax0)] = 0.0
    cmax = np.max(A, axis=1, keepdims=True)
    safe = np.all(cmax > 0.0, axis=2)[:, 0] & np.isfinite(rmax0)
    cmax = np.where(cmax > 0.0, cmax, 1.0)
    A /= cmax
    shift = rmax0 + pad_shift + np.log(cmax[:, 0, :]).sum(axis=1)
    sign, ld = np.linalg.slogdet(A)
    out = np.where(sign > 0.0, ld + shift, np.nan)
    out[~safe] = -np.inf
    return out


def _info_nrx1_mat_np(lam, tr, xi, a1, n, t, c_const, m0, pad_scaled,
                      pad_shift, out):
    loglam = np.log(lam)
    ld = _logdet_nrx1_mat_np(lam, loglam, xi, t, m0, pad_scaled, pad_shift)
    log_psi = ld - lam / a1 - (n - 1) * loglam
    out[:] = c_const - tr - log_psi


def _logg_nrx1_mat_np(lam, xi, n, t, m0, pad_scaled, pad_shift, out):
    loglam = np.log(lam)
    ld = _logdet_nrx1_mat_np(lam, loglam, xi, t, m0, pad_scaled, pad_shift)
    out[:] = xi * lam + (1 - n) * loglam + ld


def _info_nrx1_np(lam, tr, xi, a1, n, t, c_const, m0, cof_log, cof_sign, out):
    loglam = np.log(lam)
    ld = _logdet_nrx1_np(lam, loglam, xi, t, m0, cof_log, cof_sign)
    log_psi = ld - lam / a1 - (n - 1) * loglam
    out[:] = c_const - tr - log_psi


def _logg_nrx1_np(lam, xi, n, t, m0, cof_log, cof_sign, out):
    loglam = np.log(lam)
    ld = _logdet_nrx1_np(lam, loglam, xi, t, m0, cof_log, cof_sign)
    out[:] = xi * lam + (1 - n) * loglam + ld


def _info_nrx2_np(lam1, lam2, tr, xi, a1, n, t, c_const, gap_tol, out):
    ll1 = np.log(lam1)
    ll2 = np.log(np.maximum(lam2, 1e-300))
    if t == 1:
        a11 = _lgaminc_np(n - 2, lam1 * xi)
        a21 = _lgaminc_np(n - 2, lam2 * xi)
        a12 = (n - 2) * ll1 - lam1 * xi
        a22 = (n - 2) * ll2 - lam2 * xi
    else:
        a11 = ll1 + _lgaminc_np(n - 3, lam1 * xi)
        a12 = _lgaminc_np(n - 2, lam1 * xi)
        a21 = ll2 + _lgaminc_np(n - 3, lam2 * xi)
        a22 = _lgaminc_np(n - 2, lam2 * xi)
    lp = a11 + a22
    lm = a12 + a21
    hi = np.maximum(lp, lm)
    acc = np.exp(lp - hi) - np.exp(lm - hi)
    gap = lam1 - lam2
    bad = (lam2 <= 0.0) | (gap < gap_tol * lam1) | (acc <= 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ld = hi + np.log(np.maximum(acc, 1e-300))
        log_psi = (ld - np.log(np.maximum(gap, 1e-300))
                   - lam1 / a1 - (n - 2) * ll1
                   - lam2 / a1 - (n - 2) * ll2)
        out[:] = c_const - tr - log_psi
    out[bad] = np.nan


# ---------------------------------------------------------------------------
# dispatchers
# ---------------------------------------------------------------------------

def info_nrx1(lam, tr, a1, c_const, plan: Nrx1Plan, out):
    """Per-sample information density for n_rx = 1 from (eigenvalue, trace)."""
    xi, n, t, m0 = plan.xi, plan.n, plan.t, plan.m0
    if plan.use_matrix:
        if using_numba():
            _info_nrx1_mat_nb(lam, tr, xi, a1, n, t, c_const, m0,
                              plan.pad_scaled, plan.pad_shift, out)
        else:
            _info_nrx1_mat_np(lam, tr, xi, a1, n, t, c_const, m0,
                              plan.pad_scaled, plan.pad_shift, out)
    elif using_numba():
        _info_nrx1_nb(lam, tr, xi, a1, n, t, c_const, m0,
                      plan.cof_log, plan.cof_sign, out)
    else:
        _info_nrx1_np(lam, tr, xi, a1, n, t, c_const, m0,
                      plan.cof_log, plan.cof_sign, out)


def info_nrx2(lam1, lam2, tr, xi, a1, n, t, c_const, gap_tol, out):
    """Per-sample information density for n_rx = 2 (n_tx <= 2)."""
    if t not in (1, 2):
        raise ValueError("fast n_rx=2 kernel supports n_tx in {1, 2}")
    if using_numba():
        _info_nrx2_nb(lam1, lam2, tr, xi, a1, n, t, c_const, gap_tol, out)
    else:
        _info_nrx2_np(lam1, lam2, tr, xi, a1, n, t, c_const, gap_tol, out)


def logg_nrx1(lam, plan: Nrx1Plan, out):
    """Log integrand of the error-exponent inner expectation, n_rx = 1."""
    xi, n, t, m0 = plan.xi, plan.n, plan.t, plan.m0
    if plan.use_matrix:
        if using_numba():
            _logg_nrx1_mat_nb(lam, xi, n, t, m0, plan.pad_scaled, plan.pad_shift, out)
        else:
            _logg_nrx1_mat_np(lam, xi, n, t, m0, plan.pad_scaled, plan.pad_shift, out)
    elif using_numba():
        _logg_nrx1_nb(lam, xi, n, t, m0, plan.cof_log, plan.cof_sign, out)
    else:
        _logg_nrx1_np(lam, xi, n, t, m0, plan.cof_log, plan.cof_sign, out)
