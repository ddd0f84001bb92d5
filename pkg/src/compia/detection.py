"""Sync-sequence correlation, energy detection, and timing acquisition.

Index origin: correlation output index n is aligned to the capture, so
with zero timing offset the post-CP sync symbol of burst m peaks at
n = N_CP + m*N_B.  The detector windows therefore carry a fixed N_CP
base offset and a candidate offset eps in [0, eps_T_max); the acquired
timing estimate is the eps of the strongest window.  Window/argmax ties
resolve to the lowest index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .config import FrameConfig
from .waveform import PssSequence

__all__ = [
    "DetectionResult",
    "pss_correlate",
    "window_energies",
    "detect_pt",
    "detect_nt",
    "detect_dia",
]


@dataclass(frozen=True)
class DetectionResult:
    """Outcome of one energy-detection test."""

    decision: bool            # True = signal declared present
    statistic: float
    threshold: float
    mode: str                 # "PT" | "NT" | "DIA"
    eps_T_hat: int | None = None   # NT only, and only on a positive decision
    m_star: int | None = None      # DIA only: burst index of the peak


def pss_correlate(y: np.ndarray, pss: PssSequence) -> np.ndarray:
    """Sliding correlation (1/P) sum_k y[n+k] s_time*[k].

    Accepts batched input on the last axis; output length is
    y.shape[-1] - P + 1.
    """
    y = np.asarray(y)
    kernel = np.conj(pss.s_time[::-1])
    kernel = kernel.reshape((1,) * (y.ndim - 1) + (-1,))
    return fftconvolve(y, kernel, mode="valid", axes=-1) / pss.P


def window_energies(corr: np.ndarray, cfg: FrameConfig) -> np.ndarray:
    """Burst-combined window energy at every candidate timing offset.

    W[eps] = (1/M) sum_m sum_{k<N_c} |corr[eps + N_CP + k + m*N_B]|^2
    for eps in [0, eps_T_max).  Batched on the last axis.
    """
    energy = np.abs(corr) ** 2
    span = cfg.eps_T_max + cfg.N_c - 1
    acc = np.zeros(energy.shape[:-1] + (span,))
    for m in range(cfg.M):
        start = cfg.N_CP + m * cfg.N_B
        acc += energy[..., start: start + span]
    windows = np.zeros(energy.shape[:-1] + (cfg.eps_T_max,))
    for k in range(cfg.N_c):
        windows += acc[..., k: k + cfg.eps_T_max]
    return windows / cfg.M


def detect_pt(corr: np.ndarray, cfg: FrameConfig, eta: float) -> DetectionResult:
    """Energy detector with genie timing (capture aligned at offset 0)."""
    energy = np.abs(corr) ** 2
    gamma = 0.0
    for m in range(cfg.M):
        start = cfg.N_CP + m * cfg.N_B
        gamma += float(np.sum(energy[start: start + cfg.N_c]))
    gamma /= cfg.M
    return DetectionResult(decision=gamma >= eta, statistic=gamma,
                           threshold=eta, mode="PT")


def detect_nt(corr: np.ndarray, cfg: FrameConfig, eta: float) -> DetectionResult:
    """Energy detector searching the whole timing window; acquires timing.

    The statistic is the strongest window energy over candidate offsets,
    and the offset of that window is the timing estimate (reported only
    on a positive decision).
    """
    windows = window_energies(corr, cfg)
    eps_hat = int(np.argmax(windows))
    gamma = float(windows[eps_hat])
    decision = gamma >= eta
    return DetectionResult(decision=decision, statistic=gamma, threshold=eta,
                           mode="NT", eps_T_hat=eps_hat if decision else None)


def detect_dia(corr: np.ndarray, cfg: FrameConfig, eta: float) -> DetectionResult:
    """Directional benchmark: peak correlation power across the capture.

    The burst slot containing the peak (receiver clock, clamped to the
    last burst) identifies the winning sector pair.
    """
    energy = np.abs(corr) ** 2
    n_star = int(np.argmax(energy))
    gamma = float(energy[n_star])
    m_star = min(n_star // cfg.N_B, cfg.M - 1)
    return DetectionResult(decision=gamma >= eta, statistic=gamma,
                           threshold=eta, mode="DIA", m_star=m_star)
