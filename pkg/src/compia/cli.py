"""Command-line interface.

Subcommands: discover-sweep, training-sweep, latency-overhead, crlb,
selftest.  Every sweep writes <name>.csv, a <name>.scenario.json
provenance sidecar, and (unless --no-figures) a <name>.png figure into
the output directory.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .codebook import pseudorandom_codebook
from .config import derive_stream, read_keyvalue_file
from .harness import (ResultRow, Scenario, run_discovery_sweep,
                      run_false_alarm_check, run_latency_overhead,
                      run_training_sweep, scenario_from_dict, selftest)
from .theory import crlb_angles
from .waveform import zadoff_chu

__all__ = ["main"]


def _parse_snr(spec: str) -> tuple:
    """Parse "lo:step:hi" (inclusive hi) into a tuple of dB values."""
    lo, step, hi = (float(x) for x in spec.split(":"))
    n = int(round((hi - lo) / step)) + 1
    return tuple(lo + step * i for i in range(n))


def _build_scenario(args) -> Scenario:
    scen = scenario_from_dict(read_keyvalue_file(args.config)) if args.config \
        else Scenario()
    over = {}
    if args.seed is not None:
        over["master_seed"] = args.seed
    if args.trials is not None:
        over["trials"] = args.trials
        over["train_trials"] = args.trials
    if args.threads is not None:
        over["threads"] = args.threads
    if args.snr is not None:
        snr = _parse_snr(args.snr)
        over["snr_db"] = snr
        over["train_snr_db"] = snr
    return replace(scen, **over) if over else scen


def _emit(rows: list[ResultRow], scen: Scenario, out_dir: Path, name: str,
          figures: bool, renderer) -> None:
    from . import report

    out_dir.mkdir(parents=True, exist_ok=True)
    report.write_csv(rows, out_dir / f"{name}.csv")
    report.write_scenario_json(scen, out_dir / f"{name}.scenario.json")
    if figures:
        renderer(rows, out_dir / f"{name}.png")
    print(f"wrote {out_dir / (name + '.csv')} ({len(rows)} rows)")


def _cmd_discover(args) -> int:
    from . import report

    scen = _build_scenario(args)
    rows = run_discovery_sweep(scen)
    _emit(rows, scen, Path(args.out), "discovery", not args.no_figures,
          report.render_discovery_figure)
    return 0


def _cmd_training(args) -> int:
    from . import report

    scen = _build_scenario(args)
    rows = run_training_sweep(scen)
    _emit(rows, scen, Path(args.out), "training", not args.no_figures,
          report.render_training_figure)
    return 0


def _cmd_latency(args) -> int:
    from . import report

    scen = _build_scenario(args)
    rows = run_latency_overhead(scen)
    _emit(rows, scen, Path(args.out), "latency_overhead", not args.no_figures,
          report.render_latency_figure)
    return 0


def _cmd_crlb(args) -> int:
    from . import report

    scen = _build_scenario(args)
    cfg = scen.cfg
    pss = zadoff_chu(25, cfg.P)
    rows = []
    draws = 50
    for n_tx, n_rx in scen.array_pairs:
        for snr_db in scen.train_snr_db:
            snr = 10.0 ** (snr_db / 10.0)
            vals = np.empty((draws, 2))
            for t in range(draws):
                rng = derive_stream(scen.master_seed, f"crlb/{n_tx}x{n_rx}", t).generator()
                cb_tx = pseudorandom_codebook(n_tx, cfg.M, rng)
                cb_rx = pseudorandom_codebook(n_rx, cfg.M, rng)
                lim = scen.train_angle_limit
                xi = np.array([
                    scen.eps_F_for("NT+CFO"),
                    rng.uniform(-lim, lim), rng.uniform(-lim, lim),
                    rng.uniform(0, cfg.N_c * cfg.T_s),
                    np.sqrt(snr), 0.0,
                ])
                vals[t] = crlb_angles(xi, cfg, cb_tx, cb_rx, 1.0, pss)
            for j, angle in enumerate(("aod", "aoa")):
                rows.append(ResultRow(
                    sweep=float(snr_db),
                    metric=f"crlb_rmse_{angle}_{n_tx}x{n_rx}",
                    sim=float(np.sqrt(np.mean(vals[:, j]))), theory=None,
                    trials=draws, ci95=0.0))
    _emit(rows, scen, Path(args.out), "crlb", not args.no_figures,
          report.render_training_figure)
    return 0


def _cmd_selftest(args) -> int:
    ok, _ = selftest(verbose=True)
    return 0 if ok else 1


def _cmd_fa_check(args) -> int:
    from . import report

    scen = _build_scenario(args)
    rows = run_false_alarm_check(scen, trials=args.trials or 10000)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report.write_csv(rows, out_dir / "false_alarm.csv")
    for r in rows:
        print(f"{r.metric}: {r.sim:.4f} (target {r.theory})")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="compia",
        description="Compressive initial-access link simulator and analysis")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=str, default=None,
                       help="key=value scenario file")
        p.add_argument("--out", type=str, default="results",
                       help="output directory")
        p.add_argument("--seed", type=int, default=None, help="master seed")
        p.add_argument("--trials", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--snr", type=str, default=None,
                       help="sweep grid as lo:step:hi in dB")
        p.add_argument("--no-figures", action="store_true")

    for name, fn, help_ in [
        ("discover-sweep", _cmd_discover, "miss-detection rate vs SNR"),
        ("training-sweep", _cmd_training, "angle RMSE vs SNR with CRLB"),
        ("latency-overhead", _cmd_latency, "latency/overhead vs user count"),
        ("crlb", _cmd_crlb, "angle CRLB curves"),
        ("fa-check", _cmd_fa_check, "empirical false-alarm calibration"),
        ("selftest", _cmd_selftest, "run embedded invariant checks"),
    ]:
        p = sub.add_parser(name, help=help_)
        if name != "selftest":
            common(p)
        p.set_defaults(fn=fn)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
