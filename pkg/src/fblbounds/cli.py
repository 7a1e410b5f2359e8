"""Command-line front end producing CSV artifacts.

Subcommands: ``bounds`` (achievability/converse rate sweeps), ``eexp``
(error-exponent error-probability-vs-SNR curves), ``simulate`` (coded-chain
packet-error-rate measurement), ``presets`` (list shipped presets).

Every CSV starts with a ``#`` comment line echoing the artifact version,
the resolved parameters and the seed — enough to re-run the exact command.
Output is deterministic for a fixed seed, byte-identical across reruns and
across ``--threads`` settings.

Exit codes: 0 success, 1 usage/configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from importlib.metadata import version as _dist_version

from .config import ConfigError, SystemConfig, validate_config
from .presets import ExperimentPreset, PresetError, list_presets, load_preset

__all__ = ["main"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2


class UsageError(ValueError):
    """Invalid flag combination or configuration."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; usage errors are 1
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(p: _Parser) -> None:
    p.add_argument("--config", metavar="PATH", help="key=value system-config file")
    p.add_argument("--preset", metavar="NAME", help="named experiment preset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=float, default=None,
                   help="Monte-Carlo sample count (accepts 1e7 notation)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", metavar="PATH", help="output CSV path (default: stdout)")
    p.add_argument("--ntx", type=int, help="transmit antennas")
    p.add_argument("--nrx", type=int, help="receive antennas")
    p.add_argument("--nsubc", type=int, help="subcarriers per resource block")
    p.add_argument("--nofdm", type=int, help="OFDM symbols per resource block")
    p.add_argument("--nres", type=int, help="resource blocks")
    p.add_argument("--link", choices=["uplink", "downlink"])
    p.add_argument("--snr-db", type=float, dest="snr_db")


def build_parser() -> _Parser:
    p = _Parser(prog="fblbounds",
                description="Finite-blocklength bounds and coded benchmarks "
                            "for short-packet MIMO-OFDM over block fading.")
    sub = p.add_subparsers(dest="cmd", required=True)

    b = sub.add_parser("bounds", parents=[], help="rate sweep of both bounds")
    _add_common(b)
    b.add_argument("--epsilon", type=float, help="target error probability")
    b.add_argument("--nres-values", metavar="LIST",
                   help="sweep list '1,2,3' or range '1:25' (overrides --nres)")
    b.add_argument("--nofdm-values", metavar="LIST",
                   help="sweep list (overrides --nofdm)")

    e = sub.add_parser("eexp", help="error-exponent curve over an SNR grid")
    _add_common(e)
    e.add_argument("--kbits", type=int, help="information bits per codeword")
    e.add_argument("--snr-grid", metavar="GRID", dest="snr_grid",
                   help="SNR grid 'lo:hi:step' or comma list, in dB")
    e.add_argument("--subc-total", type=int, dest="subc_total",
                   help="total subcarriers; per-block n_subc = total // n_res")

    s = sub.add_parser("simulate", help="coded-chain packet error rate")
    _add_common(s)
    s.add_argument("--np", dest="np_values", metavar="LIST",
                   help="pilots per resource block, comma list")
    s.add_argument("--snr-grid", metavar="GRID", dest="snr_grid",
                   help="SNR grid 'lo:hi:step' or comma list, in dB")
    s.add_argument("--order", type=int, help="OSD reprocessing order")
    s.add_argument("--min-errors", type=int, dest="min_errors")
    s.add_argument("--max-packets", type=int, dest="max_packets")

    sub.add_parser("presets", help="list shipped presets")
    return p


def _load_bundle(args) -> ExperimentPreset:
    """Resolve preset/config/flags into one parameter bundle (flags win)."""
    if args.preset and args.config:
        raise UsageError("--preset and --config are mutually exclusive")
    if args.preset:
        preset = load_preset(args.preset)
        if preset.command != args.cmd:
            raise UsageError(
                f"preset {preset.name!r} is a {preset.command!r} preset")
    else:
        base = SystemConfig(n_tx=1, n_rx=1)
        if args.config:
            from pathlib import Path
            from .config import parse_config_text
            base = parse_config_text(Path(args.config).read_text())
        preset = ExperimentPreset(name="custom", command=args.cmd, base=base)

    overrides = {}
    for flag, field in (("ntx", "n_tx"), ("nrx", "n_rx"), ("nsubc", "n_subc"),
                        ("nofdm", "n_ofdm"), ("nres", "n_res"),
                        ("link", "link"), ("snr_db", "snr_db")):
        v = getattr(args, flag, None)
        if v is not None:
            overrides[field] = v
    if overrides:
        from dataclasses import replace
        preset = _replace_preset(preset, base=replace(preset.base, **overrides))
    return preset


def _replace_preset(preset: ExperimentPreset, **kw) -> ExperimentPreset:
    from dataclasses import replace
    return replace(preset, **kw)


def _emit_csv(rows, fieldnames, header_comment: str, out_path: str | None) -> None:
    buf = io.StringIO(newline="")
    buf.write(header_comment + "\n")
    writer = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(row[k]) for k in fieldnames})
    data = buf.getvalue()
    if out_path:
        with open(out_path, "w", newline="") as fh:
            fh.write(data)
    else:
        sys.stdout.write(data)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _echo(args, fields: dict) -> str:
    parts = [f"fblbounds v{_dist_version('fblbounds')}", f"cmd={args.cmd}"]
    parts += [f"{k}={v}" for k, v in fields.items()]
    return "# " + " ".join(parts)


def _cfg_fields(cfg: SystemConfig) -> dict:
    return {
        "n_tx": cfg.n_tx, "n_rx": cfg.n_rx, "n_subc": cfg.n_subc,
        "n_ofdm": cfg.n_ofdm, "n_res": cfg.n_res, "link": cfg.link,
        "snr_db": cfg.snr_db,
    }


def _cmd_bounds(args) -> int:
    from .bounds import sweep_rates
    from .presets import _parse_int_list

    preset = _load_bundle(args)
    epsilon = args.epsilon if args.epsilon is not None else preset.epsilon
    if epsilon is None:
        raise UsageError("no epsilon given (flag --epsilon or preset)")
    n_samples = int(args.samples) if args.samples else 1_000_000
    n_res_values = (_parse_int_list(args.nres_values) if args.nres_values
                    else preset.n_res_values or (preset.base.n_res,))
    n_ofdm_values = (_parse_int_list(args.nofdm_values) if args.nofdm_values
                     else preset.n_ofdm_values or (preset.base.n_ofdm,))
    cfg = preset.base
    validate_config(cfg.with_n_res(n_res_values[0]))

    fields = dict(_cfg_fields(cfg))
    fields.update(epsilon=epsilon, n_res_values=",".join(map(str, n_res_values)),
                  n_ofdm_values=",".join(map(str, n_ofdm_values)),
                  samples=n_samples, seed=args.seed)
    rows = sweep_rates(cfg, epsilon, n_res_values, n_ofdm_values,
                       n_samples=n_samples, seed=args.seed, threads=args.threads)
    _emit_csv(rows,
              ["n_res", "n_ofdm", "bandwidth_hz", "latency_s",
               "achievability_bits_per_slot", "converse_bits_per_slot",
               "n_samples", "seed"],
              _echo(args, fields), args.out)
    return EXIT_OK


def _cmd_eexp(args) -> int:
    from .exponent import eexp_snr_curve
    from .presets import _parse_grid

    preset = _load_bundle(args)
    k_bits = args.kbits if args.kbits is not None else preset.k_bits
    if k_bits is None:
        raise UsageError("no --kbits given")
    grid = (_parse_grid(args.snr_grid) if args.snr_grid else preset.snr_grid_db)
    if not grid:
        raise UsageError("no --snr-grid given")
    subc_total = (args.subc_total if args.subc_total is not None
                  else preset.subc_total)
    n_samples = int(args.samples) if args.samples else 100_000

    cfg = preset.base
    n_res = args.nres if args.nres is not None else (
        preset.n_res_values[0] if preset.n_res_values else cfg.n_res)
    if subc_total is not None:
        if subc_total % n_res:
            raise UsageError(f"subc_total {subc_total} not divisible by n_res {n_res}")
        from dataclasses import replace
        cfg = replace(cfg, n_res=n_res, n_subc=subc_total // n_res)
    validate_config(cfg)

    fields = dict(_cfg_fields(cfg))
    fields.update(k_bits=k_bits, samples=n_samples, seed=args.seed,
                  snr_grid_db=",".join(repr(g) for g in grid))
    rows = ({"k_bits": k_bits, **row} for row in eexp_snr_curve(
        k_bits, cfg, grid, n_samples=n_samples, seed=args.seed))
    _emit_csv(rows,
              ["k_bits", "snr_db", "eps_avg", "eps_max", "mu_star", "n_samples"],
              _echo(args, fields), args.out)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    from .linksim import CodeSpec, FrameLayout, simulate_per
    from .presets import _parse_grid, _parse_int_list

    preset = _load_bundle(args)
    cfg = preset.base
    validate_config(cfg)
    spec = preset.code or CodeSpec()
    np_values = (_parse_int_list(args.np_values) if args.np_values
                 else preset.np_values)
    if not np_values:
        raise UsageError("no --np pilot counts given")
    grid = (_parse_grid(args.snr_grid) if args.snr_grid else preset.snr_grid_db)
    if not grid:
        raise UsageError("no --snr-grid given")
    order = args.order if args.order is not None else preset.osd_order
    min_errors = args.min_errors if args.min_errors is not None else preset.min_errors
    max_packets = args.max_packets if args.max_packets is not None else preset.max_packets

    fields = dict(_cfg_fields(cfg))
    fields.update(k_info=spec.k_info, memory=spec.memory,
                  generators=",".join(spec.generators), osd_order=order,
                  np_values=",".join(map(str, np_values)),
                  snr_grid_db=",".join(repr(g) for g in grid),
                  min_errors=min_errors, max_packets=max_packets,
                  seed=args.seed)

    def rows():
        for npil in np_values:
            layout = FrameLayout(n_pilots_per_rb=npil, n_coh=cfg.n_coh,
                                 n_res=cfg.n_res)
            for snr in grid:
                r = simulate_per(cfg.with_snr_db(float(snr)), spec, layout,
                                 min_errors=min_errors, max_packets=max_packets,
                                 order=order, seed=args.seed,
                                 n_threads=args.threads)
                yield {
                    "snr_db": r.snr_db, "np": r.n_pilots_per_rb,
                    "packets": r.packets_run, "errors": r.packet_errors,
                    "per": r.per, "ci_low": r.ci_low, "ci_high": r.ci_high,
                    "seed": r.seed,
                }

    _emit_csv(rows(),
              ["snr_db", "np", "packets", "errors", "per", "ci_low",
               "ci_high", "seed"],
              _echo(args, fields), args.out)
    return EXIT_OK


def _cmd_presets(_args) -> int:
    for name in list_presets():
        preset = load_preset(name)
        print(f"{name}: {preset.command}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {
        "bounds": _cmd_bounds,
        "eexp": _cmd_eexp,
        "simulate": _cmd_simulate,
        "presets": _cmd_presets,
    }[args.cmd]
    try:
        return handler(args)
    except (UsageError, ConfigError, PresetError, FileNotFoundError) as exc:
        print(f"fblbounds: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"fblbounds: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
