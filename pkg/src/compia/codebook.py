"""Sounding-beam codebooks: pseudorandom quasi-omni and sector designs."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import ArrayGeometry, steering_vector

__all__ = [
    "Codebook",
    "pseudorandom_codebook",
    "sector_codebook",
    "sector_centers",
    "beam_pair_schedule",
    "invert_burst_index",
    "sector_sounding_codebooks",
    "save_codebook_csv",
    "load_codebook_csv",
]

_QPSK_ALPHABET = np.array([1.0, -1.0, 1j, -1j])


@dataclass(frozen=True)
class Codebook:
    """Ordered set of unit-norm beam weight vectors, one per burst slot."""

    beams: np.ndarray  # (M, N)
    kind: str = "pseudorandom"

    @property
    def M(self) -> int:
        return self.beams.shape[0]

    @property
    def N(self) -> int:
        return self.beams.shape[1]


def pseudorandom_codebook(N: int, M: int, rng: np.random.Generator) -> Codebook:
    """M beams with i.i.d. entries from {+-1, +-j}/sqrt(N).

    Four-level phase quantization only; every beam is unit norm and the
    expected beam pattern is flat (quasi-omni).
    """
    idx = rng.integers(0, 4, size=(M, N))
    return Codebook(beams=_QPSK_ALPHABET[idx] / np.sqrt(N), kind="pseudorandom")


def sector_centers(M_sectors: int) -> np.ndarray:
    """Centers of M equal-width angular sectors covering (-pi/2, pi/2)."""
    width = np.pi / M_sectors
    return -np.pi / 2 + width * (np.arange(M_sectors) + 0.5)


def sector_codebook(N: int, M_sectors: int) -> Codebook:
    """Flat-response sector beams via frequency sampling.

    Beam m targets the angle sector of width pi/M_sectors centered at
    sector_centers(M_sectors)[m].  The design selects the orthogonal
    DFT beams (spatial frequencies sin(theta) = 2k/N) whose pointing
    angles fall inside the sector and sums them, which approximates a
    flat in-sector response with ideal (unquantized) weights.
    """
    geom = ArrayGeometry(N)
    width = np.pi / M_sectors
    edges = -np.pi / 2 + width * np.arange(M_sectors + 1)
    sines = (2.0 * np.arange(N) / N + 1.0) % 2.0 - 1.0  # DFT grid in [-1, 1)
    angles = np.arcsin(sines)
    beams = np.empty((M_sectors, N), dtype=np.complex128)
    for m in range(M_sectors):
        inside = (angles >= edges[m]) & (angles < edges[m + 1])
        if not np.any(inside):
            # narrow sector near endfire: fall back to the closest beam
            inside = np.zeros(N, dtype=bool)
            inside[np.argmin(np.abs(angles - 0.5 * (edges[m] + edges[m + 1])))] = True
        w = np.sum([steering_vector(geom, a) for a in angles[inside]], axis=0)
        beams[m] = w / np.linalg.norm(w)
    return Codebook(beams=beams, kind="sector")


def beam_pair_schedule(M_tx: int, M_rx: int) -> list[tuple[int, int]]:
    """Lexicographic (tx, rx) schedule: tx cycles fastest, 0-based.

    Burst m (0-based) uses tx index m % M_tx and rx index m // M_tx, so
    burst 0 -> (0, 0), burst M_tx -> (0, 1), and the final burst pairs
    the last beams of both ends.
    """
    return [(m % M_tx, m // M_tx) for m in range(M_tx * M_rx)]


def invert_burst_index(m_star: int, M_tx: int) -> tuple[int, int]:
    """Recover (tx, rx) indices (0-based) from a burst index."""
    rx = m_star // M_tx
    tx = m_star - rx * M_tx
    return tx, rx


def sector_sounding_codebooks(n_tx: int, n_rx: int, M_tx: int, M_rx: int
                              ) -> tuple[Codebook, Codebook]:
    """Per-burst sector codebooks following the pair schedule.

    Expands M_tx transmit sectors and M_rx receive sectors into two
    length M_tx*M_rx codebooks so each burst carries one (tx, rx) pair.
    """
    tx = sector_codebook(n_tx, M_tx)
    rx = sector_codebook(n_rx, M_rx)
    sched = beam_pair_schedule(M_tx, M_rx)
    return (
        Codebook(beams=tx.beams[[t for t, _ in sched]], kind="sector"),
        Codebook(beams=rx.beams[[r for _, r in sched]], kind="sector"),
    )


def save_codebook_csv(cb: Codebook, path) -> None:
    """One row per beam; each complex entry stored as a re,im pair."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        for beam in cb.beams:
            row = []
            for z in beam:
                row.extend((repr(float(z.real)), repr(float(z.imag))))
            writer.writerow(row)


def load_codebook_csv(path, kind: str = "pseudorandom") -> Codebook:
    rows = []
    with Path(path).open("r", newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            vals = np.asarray([float(x) for x in row], dtype=float)
            rows.append(vals[0::2] + 1j * vals[1::2])
    return Codebook(beams=np.asarray(rows), kind=kind)
