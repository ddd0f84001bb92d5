"""Sync-sequence generation and burst-stream assembly.

DFT convention: unitary in both directions (1/sqrt(P) forward and
inverse), so Parseval holds without stray factors and every delayed
sync atom keeps squared norm P.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import FrameConfig

__all__ = [
    "PssSequence",
    "BurstPlacement",
    "zadoff_chu",
    "m_sequence",
    "burst_placement",
    "assemble_stream",
    "delay_response",
    "delayed_pss",
]


@dataclass(frozen=True)
class PssSequence:
    """A sync sequence in both domains under the unitary DFT.

    s_freq holds the subcarrier values, s_time their time-domain dual
    (s_time = unitary IDFT of s_freq).  For the Zadoff-Chu family both
    are unit-modulus, which the detection analysis relies on.
    """

    s_freq: np.ndarray
    s_time: np.ndarray

    @property
    def P(self) -> int:
        return len(self.s_time)


def zadoff_chu(root: int, P: int) -> PssSequence:
    """Length-P Zadoff-Chu sequence, constant amplitude in both domains.

    s_time[n] = exp(-j*pi*root*n*(n+1)/P)   for odd P
    s_time[n] = exp(-j*pi*root*n^2/P)       for even P

    Requires gcd(root, P) = 1, which gives |s_time[n]| = 1 for all n and
    a perfect (delta) periodic autocorrelation; by the flat-spectrum
    property |s_freq[p]| = 1 for all p as well.
    """
    if math.gcd(root, P) != 1:
        raise ValueError("root must be coprime with the sequence length")
    n = np.arange(P)
    if P % 2:
        phase = -np.pi * root * n * (n + 1) / P
    else:
        phase = -np.pi * root * n * n / P
    s_time = np.exp(1j * phase)
    s_freq = np.fft.fft(s_time, norm="ortho")
    return PssSequence(s_freq=s_freq, s_time=s_time)


def m_sequence(P: int, taps: tuple = (7, 6), state: int = 0b1111111) -> PssSequence:
    """BPSK maximum-length sequence, cyclically extended to length P.

    Alternative sync family behind the same interface; register length 7
    gives a period-127 sequence. The time samples stay unit-modulus but
    the autocorrelation is only near-delta, so the Zadoff-Chu family is
    the default everywhere.
    """
    degree = max(taps)
    period = (1 << degree) - 1
    reg = state & period
    if reg == 0:
        raise ValueError("LFSR state must be non-zero")
    bits = np.empty(period, dtype=int)
    for i in range(period):
        bits[i] = reg & 1
        fb = 0
        for t in taps:
            fb ^= (reg >> (t - 1)) & 1
        reg = (reg >> 1) | (fb << (degree - 1))
    chips = 1.0 - 2.0 * bits
    s_time = np.asarray([chips[i % period] for i in range(P)], dtype=np.complex128)
    s_freq = np.fft.fft(s_time, norm="ortho")
    return PssSequence(s_freq=s_freq, s_time=s_time)


@dataclass(frozen=True)
class BurstPlacement:
    """Index sets of CP and sync samples for each burst in the stream."""

    cp_sets: list
    pss_sets: list


def burst_placement(cfg: FrameConfig) -> BurstPlacement:
    """CP occupies [m*N_B, m*N_B+N_CP); the sync symbol follows it."""
    cp_sets, pss_sets = [], []
    for m in range(cfg.M):
        start = m * cfg.N_B
        cp_sets.append(np.arange(start, start + cfg.N_CP))
        pss_sets.append(np.arange(start + cfg.N_CP, start + cfg.N))
    return BurstPlacement(cp_sets=cp_sets, pss_sets=pss_sets)


def assemble_stream(cfg: FrameConfig, pss: PssSequence) -> np.ndarray:
    """Transmit-side stream of M bursts: CP + sync symbol, zero elsewhere.

    The CP copies the sequence tail (standard OFDM prefix), i.e. sample
    i of the CP equals s_time[P - N_CP + i]. Symbols other than the sync
    symbol are left at zero.
    """
    if pss.P != cfg.P:
        raise ValueError("sequence length must match the configured P")
    stream = np.zeros(cfg.M * cfg.N_B, dtype=np.complex128)
    block = np.concatenate([pss.s_time[cfg.P - cfg.N_CP:], pss.s_time])
    for m in range(cfg.M):
        stream[m * cfg.N_B: m * cfg.N_B + cfg.N] = block
    return stream


def delay_response(tau: float, cfg: FrameConfig) -> np.ndarray:
    """Per-subcarrier phase of an excess delay tau (seconds).

    f[p] = exp(-j*2*pi*p*tau / (P*T_s)), p = 0..P-1; periodic in tau
    with period P*T_s.
    """
    p = np.arange(cfg.P)
    return np.exp(-2j * np.pi * p * tau / (cfg.P * cfg.T_s))


def delayed_pss(tau: float, cfg: FrameConfig, pss: PssSequence) -> np.ndarray:
    """Time-domain sync symbol delayed by tau, realized in frequency.

    Returns the unitary IDFT of f(tau) * s_freq. For an on-sample delay
    tau = c*T_s this is s_time circularly shifted by c; squared norm is
    always P when |s_freq| = 1.
    """
    return np.fft.ifft(delay_response(tau, cfg) * pss.s_freq, norm="ortho")
