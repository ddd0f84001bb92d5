"""Delimited result output, scenario sidecars, and figure rendering.

CSV numbers are written with repr (shortest round-trip), so identical
runs produce byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .harness import ResultRow, Scenario  # noqa: E402

__all__ = [
    "write_csv",
    "write_scenario_json",
    "render_discovery_figure",
    "render_training_figure",
    "render_latency_figure",
]

CSV_HEADER = "sweep,metric,sim,theory,trials,ci95"


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def write_csv(rows: list[ResultRow], path) -> None:
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(",".join([
            _fmt(r.sweep), r.metric, _fmt(r.sim), _fmt(r.theory),
            str(r.trials), _fmt(r.ci95),
        ]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_csv(path) -> list[ResultRow]:
    rows = []
    text = Path(path).read_text(encoding="utf-8").strip().splitlines()
    for line in text[1:]:
        sweep, metric, sim, theory, trials, ci95 = line.split(",")
        rows.append(ResultRow(
            sweep=float(sweep), metric=metric, sim=float(sim),
            theory=float(theory) if theory else None,
            trials=int(trials), ci95=float(ci95)))
    return rows


def write_scenario_json(scenario: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario.to_dict(), indent=2, sort_keys=True)
                          + "\n", encoding="utf-8")


def _metric_groups(rows):
    groups: dict[str, list[ResultRow]] = {}
    for r in rows:
        groups.setdefault(r.metric, []).append(r)
    for rs in groups.values():
        rs.sort(key=lambda r: r.sweep)
    return groups


def render_discovery_figure(rows: list[ResultRow], path) -> None:
    """Miss rate vs SNR: simulation markers with error bars, theory lines."""
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    for metric, rs in _metric_groups(rows).items():
        x = [r.sweep for r in rs]
        ax.errorbar(x, [max(r.sim, 1e-4) for r in rs], yerr=[r.ci95 for r in rs],
                    marker="o", ms=4, ls="none", capsize=2,
                    label=metric.replace("p_md_", "") + " (sim)")
        if rs[0].theory is not None:
            ax.plot(x, [max(r.theory, 1e-4) for r in rs], ls="--",
                    label=metric.replace("p_md_", "") + " (theory)")
    ax.set_yscale("log")
    ax.set_xlabel("pre-BF SNR [dB]")
    ax.set_ylabel("miss-detection rate")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_training_figure(rows: list[ResultRow], path) -> None:
    """Angle RMSE vs SNR with the matching square-root CRLB."""
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    for metric, rs in _metric_groups(rows).items():
        x = [r.sweep for r in rs]
        ax.semilogy(x, [r.sim for r in rs], marker="o", ms=4,
                    label=metric.replace("rmse_", ""))
        if rs[0].theory is not None:
            ax.semilogy(x, [r.theory for r in rs], ls=":",
                        label=metric.replace("rmse_", "") + " bound")
    ax.set_xlabel("pre-BF SNR [dB]")
    ax.set_ylabel("RMSE [rad]")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_latency_figure(rows: list[ResultRow], path) -> None:
    """Latency against overhead, one point per (scheme, user count)."""
    groups = _metric_groups(rows)
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    schemes = sorted({m.split("_", 1)[1] for m in groups if m.startswith("latency")})
    for scheme in schemes:
        lat = groups.get(f"latency_{scheme}", [])
        oh = {r.sweep: r.sim for r in groups.get(f"overhead_{scheme}", [])}
        xs = [oh[r.sweep] for r in lat]
        ys = [max(r.sim, 1e-6) for r in lat]
        ax.semilogy(xs, ys, marker="o", ms=4, label=scheme)
    ax.set_xlabel("overhead [%]")
    ax.set_ylabel("access latency [s]")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
