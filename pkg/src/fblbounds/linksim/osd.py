"""Ordered statistics decoding of the (punctured) tail-biting block code.

Order-w OSD: sort positions by reliability |LLR|, Gaussian-eliminate the
generator matrix onto the most reliable independent positions (the MRB),
then re-encode every error pattern of weight <= w on that basis and keep
the candidate with minimum soft discrepancy sum_{c_j != hard_j} |LLR_j|.

Enumeration visits basis positions in increasing-reliability order; the
discrepancy of any candidate is at least the summed reliability of its
flipped basis positions, so whole branches are skipped once that lower
bound exceeds the incumbent.  The reprocessing core is a numba kernel with
a pure-python fallback (same visit order, identical results).
"""

from __future__ import annotations

from functools import lru_cache
from math import comb

import numpy as np

from ..backend import njit, using_numba
from .convcode import CodeSpec, CodeSpecError, generator_matrix

__all__ = ["osd_decode", "osd_decode_matrix", "candidate_count"]


def candidate_count(k: int, order: int) -> int:
    """Number of test error patterns of weight <= order on a size-k basis."""
    return sum(comb(k, i) for i in range(order + 1))


def _reduce_to_mrb(g: np.ndarray, sort_idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-reduce ``g`` so the most reliable independent columns form identity.

    Returns (reduced matrix, basis column indices in reduction order).
    Rank deficiency on the reliable prefix is handled by the ordinary MRB
    procedure: dependent columns are skipped in favor of later ones.
    """
    k, _ = g.shape
    m = g.copy()
    basis = np.empty(k, dtype=np.int64)
    row = 0
    for col in sort_idx:
        pivot = -1
        for r in range(row, k):
            if m[r, col]:
                pivot = r
                break
        if pivot < 0:
            continue
        if pivot != row:
            m[[row, pivot]] = m[[pivot, row]]
        hits = np.flatnonzero(m[:, col])
        hits = hits[hits != row]
        m[hits] ^= m[row]
        basis[row] = col
        row += 1
        if row == k:
            break
    if row < k:
        raise CodeSpecError("generator matrix rank below k: corrupt code spec")
    return m, basis


@njit(cache=True)
def _reprocess_njit(rows, c0, w, hard, basis_w, order):  # pragma: no cover - numba
    k, n = rows.shape
    best = 0.0
    for j in range(n):
        if c0[j] != hard[j]:
            best += w[j]
    cand = np.empty(n, dtype=np.uint8)
    best_c = c0.copy()
    # weight-1..order patterns over basis rows sorted by ascending reliability
    if order >= 1:
        for i in range(k):
            if basis_w[i] >= best:
                break
            d = 0.0
            for j in range(n):
                cand[j] = c0[j] ^ rows[i, j]
                if cand[j] != hard[j]:
                    d += w[j]
                    if d >= best:
                        break
            if d < best:
                best = d
                best_c[:] = cand
    if order >= 2:
        for i1 in range(k):
            if basis_w[i1] >= best:
                break
            for i2 in range(i1 + 1, k):
                lb = basis_w[i1] + basis_w[i2]
                if lb >= best:
                    break
                d = 0.0
                for j in range(n):
                    cand[j] = c0[j] ^ rows[i1, j] ^ rows[i2, j]
                    if cand[j] != hard[j]:
                        d += w[j]
                        if d >= best:
                            break
                if d < best:
                    best = d
                    best_c[:] = cand
    if order >= 3:
        for i1 in range(k):
            if basis_w[i1] >= best:
                break
            for i2 in range(i1 + 1, k):
                if basis_w[i1] + basis_w[i2] >= best:
                    break
                for i3 in range(i2 + 1, k):
                    lb = basis_w[i1] + basis_w[i2] + basis_w[i3]
                    if lb >= best:
                        break
                    d = 0.0
                    for j in range(n):
                        cand[j] = c0[j] ^ rows[i1, j] ^ rows[i2, j] ^ rows[i3, j]
                        if cand[j] != hard[j]:
                            d += w[j]
                            if d >= best:
                                break
                    if d < best:
                        best = d
                        best_c[:] = cand
    if order >= 4:
        for i1 in range(k):
            if basis_w[i1] >= best:
                break
            for i2 in range(i1 + 1, k):
                if basis_w[i1] + basis_w[i2] >= best:
                    break
                for i3 in range(i2 + 1, k):
                    if basis_w[i1] + basis_w[i2] + basis_w[i3] >= best:
                        break
                    for i4 in range(i3 + 1, k):
                        lb = basis_w[i1] + basis_w[i2] + basis_w[i3] + basis_w[i4]
                        if lb >= best:
                            break
                        d = 0.0
                        for j in range(n):
                            cand[j] = (
                                c0[j]
                                ^ rows[i1, j]
                                ^ rows[i2, j]
                                ^ rows[i3, j]
                                ^ rows[i4, j]
                            )
                            if cand[j] != hard[j]:
                                d += w[j]
                                if d >= best:
                                    break
                        if d < best:
                            best = d
                            best_c[:] = cand
    return best_c


def _reprocess_numpy(rows, c0, w, hard, basis_w, order):
    best = float(w[c0 != hard].sum())
    best_c = c0.copy()
    k = rows.shape[0]

    def score(cand):
        return float(w[cand != hard].sum())

    # per weight, lexicographic over ascending basis_w — same visit order
    # and tie-breaking as the numba kernel.
    for weight in range(1, order + 1):
        idx = np.arange(weight)
        if weight > k:
            break
        while True:
            lb = float(basis_w[idx].sum())
            if lb < best:
                cand = c0.copy()
                for i in idx:
                    cand ^= rows[i]
                d = score(cand)
                if d < best:
                    best = d
                    best_c = cand
            # next combination (standard odometer)
            pos = weight - 1
            while pos >= 0 and idx[pos] == k - weight + pos:
                pos -= 1
            if pos < 0:
                break
            idx[pos] += 1
            for q in range(pos + 1, weight):
                idx[q] = idx[q - 1] + 1
    return best_c


def _recovery_from_matrix(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(info positions S, row-op matrix T) so that msg = c[S] @ T mod 2."""
    k, n = g.shape
    m = np.concatenate([g.copy(), np.eye(k, dtype=np.uint8)], axis=1)
    row = 0
    cols = np.empty(k, dtype=np.int64)
    for col in range(n):
        pivot = -1
        for r in range(row, k):
            if m[r, col]:
                pivot = r
                break
        if pivot < 0:
            continue
        if pivot != row:
            m[[row, pivot]] = m[[pivot, row]]
        hits = np.flatnonzero(m[:, col])
        hits = hits[hits != row]
        m[hits] ^= m[row]
        cols[row] = col
        row += 1
        if row == k:
            break
    if row < k:
        raise CodeSpecError("generator matrix rank below k: corrupt code spec")
    # m[:, n:] is the accumulated row-operation matrix T with T G identity on
    # ``cols``; for any codeword c = msg G this gives msg = c[cols] T.
    inv = np.ascontiguousarray(m[:, n:])
    inv.setflags(write=False)
    cols.setflags(write=False)
    return cols, inv


@lru_cache(maxsize=4)
def _recovery_for_spec(spec: CodeSpec) -> tuple[np.ndarray, np.ndarray]:
    return _recovery_from_matrix(generator_matrix(spec))


def osd_decode(llrs: np.ndarray, spec: CodeSpec, order: int = 3) -> np.ndarray:
    """Decode soft values for all mother-code positions into k_info bits."""
    return osd_decode_matrix(llrs, generator_matrix(spec), order,
                             recovery=_recovery_for_spec(spec))


def osd_decode_matrix(
    llrs: np.ndarray,
    g: np.ndarray,
    order: int = 3,
    recovery: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """Decode against an arbitrary full-rank k x n GF(2) generator matrix."""
    if order < 0:
        raise ValueError("order must be nonnegative")
    llrs = np.asarray(llrs, dtype=np.float64).ravel()
    g = np.asarray(g, dtype=np.uint8)
    k, n = g.shape
    if llrs.size != n:
        raise CodeSpecError(f"expected {n} soft values, got {llrs.size}")
    w = np.abs(llrs)
    hard = (llrs < 0).astype(np.uint8)
    sort_idx = np.argsort(-w, kind="stable")
    m, basis = _reduce_to_mrb(g, sort_idx)
    # order-0 candidate: re-encode the hard decisions on the basis
    sel = np.flatnonzero(hard[basis])
    c0 = np.zeros(n, dtype=np.uint8)
    for r in sel:
        c0 ^= m[r]
    # enumerate basis rows from least reliable so pruning breaks work
    order_rows = np.argsort(w[basis], kind="stable")
    rows = np.ascontiguousarray(m[order_rows])
    basis_w = np.ascontiguousarray(w[basis][order_rows])
    reprocess = _reprocess_njit if using_numba() else _reprocess_numpy
    best_c = reprocess(rows, c0, w, hard, basis_w, int(order))
    cols, inv = recovery if recovery is not None else _recovery_from_matrix(g)
    msg = (best_c[cols].astype(np.int64) @ inv.astype(np.int64)) % 2
    return msg.astype(np.uint8)
