"""Information-density evaluation and the Monte-Carlo sum-batch sampler."""

import math
import os
import subprocess
import sys

import numpy as np
import pytest

from fblbounds.config import SystemConfig, cfg_digest
from fblbounds.infodensity import (
    InfoDensityParams,
    SumSampleBatch,
    c_sigma,
    load_batch,
    log_psi,
    sample_info_density,
    sample_sum_batch,
    save_batch,
    ustm_sigma_thm1,
)
from fblbounds.matrixkernels import EigenSample, reg_inc_gamma
from fblbounds.streams import stream_for


def _ul_cfg(n_tx, n_rx, n_coh, rho):
    """Uplink config with n_res=1, n_ofdm=1 so rb_power == rho exactly."""
    return SystemConfig(n_tx=n_tx, n_rx=n_rx, n_res=1, n_subc=n_coh,
                        n_ofdm=1, link="uplink", snr_db=10 * math.log10(rho))


# -------------------------------------------------------------- parameters

def test_ustm_sigma_direct_substitution():
    p = ustm_sigma_thm1(_ul_cfg(1, 1, 24, 25.0))
    assert p.sigma_diag[0] == pytest.approx(26.0)
    np.testing.assert_allclose(p.sigma_diag[1:], 1.0)
    assert p.sigma_diag.size == 24
    assert p.xi == pytest.approx(25.0 / 26.0)


def test_ustm_sigma_two_antennas():
    p = ustm_sigma_thm1(_ul_cfg(2, 1, 24, 240.0))
    np.testing.assert_allclose(p.sigma_diag[:2], 121.0)
    np.testing.assert_allclose(p.sigma_diag[2:], 1.0)


def test_ustm_sigma_rejects_zero_power():
    with pytest.raises(ValueError):
        InfoDensityParams(sigma_diag=np.ones(4), xi=0.0, rho=1.0)
    with pytest.raises(ValueError):
        InfoDensityParams(sigma_diag=np.ones(4), xi=0.5, rho=0.0)


# ----------------------------------------------------------------- c_sigma

def test_c_sigma_siso_collapse():
    # t=r=1, n_coh=2, rho=1: c collapses to log(rho) - log(1+rho) = log(1/2)
    cfg = SystemConfig(n_tx=1, n_rx=1, n_subc=2, n_ofdm=1)
    params = InfoDensityParams(sigma_diag=np.array([2.0, 1.0]), xi=0.5, rho=1.0)
    assert c_sigma(params, cfg) == pytest.approx(math.log(0.5), abs=1e-12)


def test_c_sigma_log_det_linearity():
    cfg = _ul_cfg(2, 2, 24, 25.0)
    params = ustm_sigma_thm1(cfg)
    alpha = 0.37
    scaled = InfoDensityParams(sigma_diag=params.sigma_diag * math.exp(alpha),
                               xi=params.xi, rho=params.rho)
    delta = c_sigma(scaled, cfg) - c_sigma(params, cfg)
    assert delta == pytest.approx(-cfg.n_rx * cfg.n_coh * alpha, rel=1e-12)


def test_c_sigma_symbolic_oracle_2x2():
    # Independent term-by-term evaluation for t=r=2, n_coh=24, rho=25.
    cfg = _ul_cfg(2, 2, 24, 25.0)
    params = ustm_sigma_thm1(cfg)
    t, r, n, q, rho = 2, 2, 24, 2, 25.0
    expected = (
        t * (n - t) * math.log(rho / t)
        - r * (t * math.log(rho / t + 1.0))
        - t * (n - t - r) * math.log(1.0 + rho / t)
        + sum(math.lgamma(u) for u in range(1, t + 1))
        - sum(math.lgamma(u) for u in range(n - q + 1, n + 1))
    )
    assert c_sigma(params, cfg) == pytest.approx(expected, rel=1e-12)


# ------------------------------------------------------------------ log_psi

def test_log_psi_siso_reduction():
    cfg = SystemConfig(n_tx=1, n_rx=1, n_subc=2, n_ofdm=1)
    params = InfoDensityParams(sigma_diag=np.array([2.0, 1.0]), xi=0.5, rho=1.0)
    lam = 3.7
    got = log_psi(EigenSample(np.array([lam]), False), params, cfg)
    expected = (math.log(reg_inc_gamma(1, lam * params.xi))
                - lam / (1.0 + params.rho) - math.log(lam))
    assert got == pytest.approx(expected, rel=1e-12)


def test_log_psi_no_overflow_at_large_lambda():
    cfg = SystemConfig(n_tx=1, n_rx=1, n_subc=2, n_ofdm=1)
    params = InfoDensityParams(sigma_diag=np.array([2.0, 1.0]), xi=0.5, rho=1.0)
    v = log_psi(EigenSample(np.array([1e4]), False), params, cfg)
    assert math.isfinite(v)


@pytest.fixture(scope="module")
def psi_density_grid():
    """Quadrature tabulation of psi * V^2 * (prod lam)^(n-r) for 1x2, rho=25.

    That product is proportional to the eigenvalue density induced by the
    output distribution (the exponential decay lives inside psi), which is
    what makes both quadrature oracles below possible.
    """
    cfg = _ul_cfg(1, 2, 24, 25.0)
    params = ustm_sigma_thm1(cfg)
    n = cfg.n_coh
    l1g = np.geomspace(0.5, 650.0, 280)
    l2g = np.geomspace(0.05, 110.0, 220)
    logh = np.full((l1g.size, l2g.size), -np.inf)
    lp_grid = np.zeros((l1g.size, l2g.size))
    for i, l1 in enumerate(l1g):
        for j, l2 in enumerate(l2g):
            if l2 >= l1:
                continue
            lp = log_psi(EigenSample(np.array([l1, l2]), False), params, cfg)
            lp_grid[i, j] = lp
            logh[i, j] = (lp + 2.0 * math.log(l1 - l2)
                          + (n - 2) * (math.log(l1) + math.log(l2)))
    shift = logh.max()
    h = np.exp(logh - shift)

    def integral(f_grid):
        inner = np.trapezoid(h * f_grid, l2g, axis=1)
        return float(np.trapezoid(inner, l1g))

    z = integral(np.ones_like(h))
    l1m, l2m = np.meshgrid(l1g, l2g, indexing="ij")
    return cfg, params, integral, z, l1m, l2m, lp_grid


def test_psi_density_moment_oracles(psi_density_grid):
    # Exact moments of the induced eigenvalue law: E[L1+L2] = n_rx tr(Sigma)
    # and E[L1^2 + L2^2] = E[tr(W^2)] = 4 sum(s^2) + 2 (sum s)^2 for the
    # weighted-sum-of-rank-ones Gram W = sum_k s_k z_k z_k^H with n_rx = 2.
    cfg, params, integral, z, l1m, l2m, _ = psi_density_grid
    s = params.sigma_diag
    mean_sum = integral(l1m + l2m) / z
    assert mean_sum == pytest.approx(cfg.n_rx * float(s.sum()), rel=1e-3)
    second = integral(l1m**2 + l2m**2) / z
    exact = 4.0 * float((s**2).sum()) + 2.0 * float(s.sum()) ** 2
    assert second == pytest.approx(exact, rel=1e-3)


def test_mean_info_density_quadrature_oracle(psi_density_grid):
    # E[i] = c - E[tr] - E[log psi]; E[tr(Z^H Z)] = n_coh*n_rx exactly, and
    # E[log psi] integrates over the induced eigenvalue density.
    cfg, params, integral, z, _, _, lp_grid = psi_density_grid
    e_logpsi = integral(lp_grid) / z
    expected = c_sigma(params, cfg) - cfg.n_coh * cfg.n_rx - e_logpsi
    batch = sample_sum_batch(cfg, 200_000, seed=13)
    se = batch.values.std(ddof=1) / math.sqrt(batch.n)
    assert abs(batch.values.mean() - expected) < 3 * se


# ------------------------------------------------------------ sample draws

def test_sample_info_density_deterministic():
    cfg = _ul_cfg(1, 2, 24, 25.0)
    params = ustm_sigma_thm1(cfg)
    a = sample_info_density(params, cfg, stream_for(3, 1))
    b = sample_info_density(params, cfg, stream_for(3, 1))
    assert a == b


def test_mean_info_density_monotone_in_snr():
    means = []
    for snr_db in (10.0, 20.0, 30.0, 40.0):
        cfg = SystemConfig(n_tx=1, n_rx=1, n_subc=24, n_ofdm=1,
                           link="uplink", snr_db=snr_db)
        batch = sample_sum_batch(cfg, 20_000, seed=5)
        means.append(batch.values.mean())
    assert all(b > a for a, b in zip(means, means[1:]))


# -------------------------------------------------------------- sum batches

def test_sum_batch_nres_additivity():
    base = SystemConfig(n_tx=1, n_rx=2, n_res=1, n_subc=12, n_ofdm=2,
                        link="downlink", snr_db=10.0)
    b1 = sample_sum_batch(base, 50_000, seed=2)
    b2 = sample_sum_batch(base.with_n_res(2), 50_000, seed=2)
    m1, m2 = b1.values.mean(), b2.values.mean()
    se = math.hypot(b1.values.std(ddof=1), b2.values.std(ddof=1)) / math.sqrt(50_000)
    # downlink PSD: per-RB law identical across n_res, so the sum doubles
    assert abs(m2 - 2 * m1) < 3 * se * 2
    # and variance scales linearly in n_res
    v1, v2 = b1.values.var(ddof=1), b2.values.var(ddof=1)
    assert abs(v2 - 2 * v1) / (2 * v1) < 0.05


def test_sum_batch_thread_count_invariance():
    cfg = SystemConfig(n_tx=2, n_rx=2, n_res=3, n_subc=12, n_ofdm=2,
                       link="uplink", snr_db=20.0)
    a = sample_sum_batch(cfg, 70_000, seed=9, threads=1)
    b = sample_sum_batch(cfg, 70_000, seed=9, threads=8)
    np.testing.assert_array_equal(a.values, b.values)


def test_sum_batch_finite_and_reproducible():
    cfg = _ul_cfg(2, 1, 24, 100.0)
    a = sample_sum_batch(cfg, 30_000, seed=4)
    b = sample_sum_batch(cfg, 30_000, seed=4)
    np.testing.assert_array_equal(a.values, b.values)
    assert np.all(np.isfinite(a.values))
    assert a.cfg_digest == cfg_digest(cfg)


def test_batch_rejects_nonfinite_values():
    with pytest.raises(ValueError):
        SumSampleBatch(values=np.array([1.0, math.nan]), seed=0,
                       cfg_digest="x", n=2)


def test_save_load_roundtrip(tmp_path):
    cfg = _ul_cfg(1, 1, 24, 25.0)
    batch = sample_sum_batch(cfg, 5_000, seed=1)
    path = tmp_path / "batch.bin"
    save_batch(batch, path)
    loaded = load_batch(path, cfg)
    np.testing.assert_array_equal(loaded.values, batch.values)
    assert loaded.seed == batch.seed and loaded.cfg_digest == batch.cfg_digest
    from fblbounds.infodensity import SamplingError
    with pytest.raises(SamplingError):
        load_batch(path, cfg.with_snr_db(26.0))


# ---------------------------------------------------------------- backends

_BACKEND_SNIPPET = """
import numpy as np
from fblbounds.config import SystemConfig
from fblbounds.infodensity import sample_sum_batch
cfg = SystemConfig(n_tx={n_tx}, n_rx={n_rx}, n_res=2, n_subc=12, n_ofdm=2,
                   link="uplink", snr_db=20.0)
batch = sample_sum_batch(cfg, 20000, seed=17)
np.save({out!r}, batch.values)
"""


@pytest.mark.parametrize("n_tx,n_rx", [(1, 1), (2, 2)])
def test_backend_agreement(tmp_path, n_tx, n_rx):
    outs = {}
    for backend in ("numpy", "numba"):
        out = str(tmp_path / f"{backend}.npy")
        env = dict(os.environ, FBLBOUNDS_BACKEND=backend)
        subprocess.run(
            [sys.executable, "-c",
             _BACKEND_SNIPPET.format(n_tx=n_tx, n_rx=n_rx, out=out)],
            check=True, env=env,
        )
        outs[backend] = np.load(out)
    np.testing.assert_allclose(outs["numba"], outs["numpy"], rtol=1e-9, atol=1e-9)
