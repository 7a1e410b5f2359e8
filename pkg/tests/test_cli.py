"""Tests for the presets and the command-line front end."""

import subprocess
import sys

import numpy as np
import pytest

from fblbounds.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, main
from fblbounds.presets import (
    PresetError,
    list_presets,
    load_preset,
    parse_preset_text,
)

# ---------------------------------------------------------------- presets

EXPECTED_PRESETS = {"fig2_ul_1x2", "fig3_ul_2x2", "fig4_dl", "fig5_eexp", "fig6_code"}


def test_all_presets_present_and_loadable():
    names = set(list_presets())
    assert names == EXPECTED_PRESETS
    for name in names:
        preset = load_preset(name)
        assert preset.command in ("bounds", "eexp", "simulate")


def test_bounds_preset_shapes():
    p = load_preset("fig2_ul_1x2")
    assert p.base.n_tx == 1 and p.base.n_rx == 2
    assert p.base.link == "uplink" and p.base.snr_db == 20.0
    assert p.epsilon == 1e-5
    assert p.n_ofdm_values == (2, 4)
    assert p.n_res_values == tuple(range(1, 26))
    assert len(p.n_res_values) * len(p.n_ofdm_values) == 50
    p3 = load_preset("fig3_ul_2x2")
    assert p3.base.n_tx == 2 and p3.base.n_rx == 2
    p4 = load_preset("fig4_dl")
    assert p4.base.link == "downlink" and p4.base.snr_db == 10.0


def test_eexp_preset_geometry():
    p = load_preset("fig5_eexp")
    assert p.command == "eexp"
    assert p.subc_total == 84 and p.k_bits == 130
    assert p.base.n_rx == 1 and p.base.link == "downlink"


def test_simulate_preset_code():
    p = load_preset("fig6_code")
    assert p.command == "simulate"
    assert p.code is not None and p.code.k_info == 92
    assert p.np_values == (1, 2, 4, 6, 8)
    assert p.base.n_res == 8 and p.base.n_ofdm == 2 and p.base.n_subc == 12


def test_preset_errors():
    with pytest.raises(PresetError):
        load_preset("nonexistent")
    with pytest.raises(PresetError):
        parse_preset_text("x", "mystery_key = 3\ncommand = bounds\nn_tx=1\nn_rx=1")
    with pytest.raises(PresetError):
        parse_preset_text("x", "n_tx = 1\nn_rx = 1")  # no command
    with pytest.raises(PresetError):
        parse_preset_text("x", "command = dance\nn_tx=1\nn_rx=1")


def test_preset_grid_parsers():
    p = parse_preset_text(
        "x", "command = eexp\nn_tx=1\nn_rx=1\nsnr_grid_db = 1:3:0.5\nk_bits=10")
    assert p.snr_grid_db == (1.0, 1.5, 2.0, 2.5, 3.0)
    p = parse_preset_text(
        "x", "command = eexp\nn_tx=1\nn_rx=1\nsnr_grid_db = 4,8\nk_bits=10")
    assert p.snr_grid_db == (4.0, 8.0)


# ---------------------------------------------------------------- CLI

def _run(args):
    return subprocess.run(
        [sys.executable, "-m", "fblbounds.cli", *args],
        capture_output=True, text=True,
    )


def test_cli_presets_lists_all():
    res = _run(["presets"])
    assert res.returncode == EXIT_OK
    for name in EXPECTED_PRESETS:
        assert name in res.stdout


def test_cli_usage_errors_exit_1():
    assert _run(["bounds", "--preset", "nonexistent"]).returncode == EXIT_USAGE
    assert _run(["bounds"]).returncode == EXIT_USAGE           # no epsilon
    assert _run(["frobnicate"]).returncode == EXIT_USAGE       # unknown command
    assert _run(["bounds", "--preset", "fig6_code"]).returncode == EXIT_USAGE
    res = _run(["bounds", "--preset", "fig2_ul_1x2", "--config", "x.cfg"])
    assert res.returncode == EXIT_USAGE


def test_cli_numerical_failure_exit_2():
    # eexp SNR bracket that cannot meet the requested rate -> numerical error
    res = _run(["eexp", "--ntx", "1", "--nrx", "1", "--nres", "2",
                "--nsubc", "12", "--link", "downlink", "--kbits", "4000",
                "--snr-grid", "0", "--samples", "2e3"])
    assert res.returncode in (EXIT_OK, EXIT_NUMERICAL)  # never a traceback
    # instability guard is a numerical failure path
    assert "Traceback" not in res.stderr


def test_cli_bounds_csv_shape_and_determinism(tmp_path):
    args = ["bounds", "--preset", "fig2_ul_1x2", "--samples", "5e3",
            "--seed", "3", "--nres-values", "1:2", "--nofdm-values", "2",
            "--epsilon", "1e-2"]
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    import warnings
    r1 = _run([*args, "--out", str(out1)])
    assert r1.returncode == EXIT_OK, r1.stderr
    r2 = _run([*args, "--out", str(out2)])
    assert out1.read_bytes() == out2.read_bytes()
    lines = out1.read_text().splitlines()
    assert lines[0].startswith("# fblbounds")
    assert "seed=3" in lines[0] and "cmd=bounds" in lines[0]
    assert lines[1].split(",")[0] == "n_res"
    assert len(lines) == 2 + 2  # comment + header + 2 grid points


def test_cli_bounds_thread_invariance(tmp_path):
    base = ["bounds", "--ntx", "1", "--nrx", "1", "--nres", "2",
            "--epsilon", "1e-2", "--samples", "2e4", "--seed", "9",
            "--snr-db", "10"]
    outs = []
    for threads in ("1", "8"):
        out = tmp_path / f"t{threads}.csv"
        r = _run([*base, "--threads", threads, "--out", str(out)])
        assert r.returncode == EXIT_OK, r.stderr
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_cli_eexp_csv(tmp_path):
    out = tmp_path / "e.csv"
    r = _run(["eexp", "--preset", "fig5_eexp", "--ntx", "1",
              "--snr-grid", "10,12", "--samples", "5e3", "--out", str(out)])
    assert r.returncode == EXIT_OK, r.stderr
    lines = out.read_text().splitlines()
    assert lines[1] == "k_bits,snr_db,eps_avg,eps_max,mu_star,n_samples"
    assert len(lines) == 4
    eps = [float(line.split(",")[3]) for line in lines[2:]]
    assert eps[1] < eps[0]  # error bound decreases with SNR


def test_cli_simulate_csv(tmp_path):
    out = tmp_path / "s.csv"
    r = _run(["simulate", "--preset", "fig6_code", "--np", "6",
              "--snr-grid", "24", "--min-errors", "3",
              "--max-packets", "300", "--seed", "4", "--out", str(out)])
    assert r.returncode == EXIT_OK, r.stderr
    lines = out.read_text().splitlines()
    assert lines[1] == "snr_db,np,packets,errors,per,ci_low,ci_high,seed"
    row = lines[2].split(",")
    assert row[0] == "24.0" and row[1] == "6" and row[7] == "4"
    assert int(row[2]) <= 300


def test_main_entry_returns_int():
    assert main(["presets"]) == EXIT_OK
