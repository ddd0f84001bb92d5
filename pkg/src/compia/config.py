"""Shared domain types, units, and RNG plumbing.

Unit conventions used across the whole package (chosen to keep the
estimation math free of unit bugs):

* angles in radians,
* delays and durations in seconds,
* powers linear (dB only at I/O boundaries),
* CFO normalized to radians per sample: ``eps_F = 2*pi*T_s*delta_f``.

All types are immutable after construction and safe to share across
concurrently running trials.
"""

from __future__ import annotations

import ast
import zlib
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

__all__ = [
    "FrameConfig",
    "ChannelRealization",
    "SyncState",
    "RngStream",
    "default_frame_config",
    "validate_config",
    "derive_stream",
    "read_keyvalue_file",
    "write_keyvalue_file",
    "frame_config_from_dict",
]


@dataclass(frozen=True)
class FrameConfig:
    """Frame and waveform constants for one synchronization-signal layout.

    Attributes:
        P: subcarriers occupied by the sync sequence (= its length).
        M: number of sync bursts per period.
        N_B: samples per burst.
        N_CP: cyclic-prefix samples per sync symbol.
        N_c: maximum excess-delay taps the receiver collects.
        T_s: sample duration in seconds.
        T_SS: burst-set period in seconds.
        eps_T_max: timing-offset search window in samples.
    """

    P: int = 128
    M: int = 64
    N_B: int = 1024
    N_CP: int = 8
    N_c: int = 4
    T_s: float = 1.0 / 57.6e6
    T_SS: float = 20e-3
    eps_T_max: int = 1024

    @property
    def T_B(self) -> float:
        """Burst duration in seconds, N_B * T_s by construction."""
        return self.N_B * self.T_s

    @property
    def N(self) -> int:
        """Samples per sync symbol including its cyclic prefix."""
        return self.P + self.N_CP

    @property
    def n_capture(self) -> int:
        """Capture length covering M bursts plus the search-window guard."""
        return self.M * self.N_B + self.eps_T_max + self.N

    def to_dict(self) -> dict:
        return asdict(self)


def default_frame_config() -> FrameConfig:
    """Baseline mmWave numerology: P=128, M=64, N_B=1024, 57.6 MHz sampling."""
    return FrameConfig()


def validate_config(cfg: FrameConfig) -> FrameConfig:
    """Check all FrameConfig invariants; return cfg unchanged if they hold.

    Raises ValueError naming the first violated invariant.
    """
    if cfg.P < 1:
        raise ValueError("P must be at least 1")
    if cfg.M < 1:
        raise ValueError("M must be at least 1")
    if cfg.N_CP <= cfg.N_c:
        raise ValueError("CP must exceed max excess delay")
    if cfg.N_B < cfg.P + cfg.N_CP:
        raise ValueError("burst must hold one CP-extended sync symbol")
    if not (0 <= cfg.eps_T_max <= cfg.N_B):
        raise ValueError("timing search window must lie within one burst")
    if cfg.T_s <= 0:
        raise ValueError("sample duration must be positive")
    if cfg.T_SS < cfg.M * cfg.T_B:
        raise ValueError("period must cover all bursts")
    return cfg


@dataclass(frozen=True)
class SyncState:
    """True or estimated synchronization offsets.

    eps_T is the integer sample timing offset of the capture window;
    eps_F is the carrier frequency offset in radians per sample.
    """

    eps_T: int = 0
    eps_F: float = 0.0

    @classmethod
    def from_offsets(cls, eps_T: int, delta_f_hz: float, cfg: FrameConfig) -> "SyncState":
        """Build from an absolute CFO in Hz: eps_F = 2*pi*T_s*delta_f."""
        return cls(eps_T=int(eps_T), eps_F=2.0 * np.pi * cfg.T_s * delta_f_hz)

    def delta_f_hz(self, cfg: FrameConfig) -> float:
        return self.eps_F / (2.0 * np.pi * cfg.T_s)

    def validate(self, cfg: FrameConfig) -> "SyncState":
        if not (0 <= self.eps_T <= cfg.eps_T_max):
            raise ValueError("timing offset outside the search window")
        return self


@dataclass(frozen=True)
class ChannelRealization:
    """A sparse multipath realization plus the receiver noise level.

    gains, aod, aoa, delays are length-L arrays (complex gain, departure
    angle, arrival angle, excess delay in seconds). sigma_n2 is the
    per-combined-sample noise power; sigma_g2 caches sum(|g_l|^2).
    """

    gains: np.ndarray
    aod: np.ndarray
    aoa: np.ndarray
    delays: np.ndarray
    sigma_n2: float
    sigma_g2: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        gains = np.atleast_1d(np.asarray(self.gains, dtype=np.complex128))
        object.__setattr__(self, "gains", gains)
        for name in ("aod", "aoa", "delays"):
            object.__setattr__(
                self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            )
        if self.sigma_g2 is None:
            object.__setattr__(self, "sigma_g2", float(np.sum(np.abs(gains) ** 2)))

    @property
    def L(self) -> int:
        return len(self.gains)

    @property
    def snr(self) -> float:
        """Pre-beamforming SNR: sum of path powers over noise power."""
        return self.sigma_g2 / self.sigma_n2

    def validate(self, cfg: FrameConfig) -> "ChannelRealization":
        if self.L < 1:
            raise ValueError("channel needs at least one path")
        if len({len(self.gains), len(self.aod), len(self.aoa), len(self.delays)}) != 1:
            raise ValueError("path arrays must share one length")
        if np.any(np.abs(np.sin(self.aod)) > 1) or np.any(np.abs(np.sin(self.aoa)) > 1):
            raise ValueError("angles must have |sin| <= 1")
        if np.any(self.delays < 0) or np.any(self.delays >= cfg.N_c * cfg.T_s):
            raise ValueError("delays must lie in [0, N_c*T_s)")
        total = float(np.sum(np.abs(self.gains) ** 2))
        if abs(total - self.sigma_g2) > 1e-12 * max(total, 1e-300):
            raise ValueError("sigma_g2 disagrees with the path gains")
        if self.sigma_n2 < 0:
            raise ValueError("noise power must be non-negative")
        return self


@dataclass(frozen=True)
class RngStream:
    """Counter-based substream of a master seed.

    The same (master_seed, purpose, trial_index) always yields the same
    generator, independent of evaluation order or worker count.
    """

    master_seed: int
    purpose: str
    trial_index: int = 0

    @property
    def stream_id(self) -> tuple:
        return (zlib.crc32(self.purpose.encode("utf-8")), self.trial_index)

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this substream."""
        seq = np.random.SeedSequence(
            entropy=self.master_seed, spawn_key=self.stream_id
        )
        return np.random.default_rng(seq)


def derive_stream(master_seed: int, purpose: str, trial_index: int = 0) -> RngStream:
    """Substream for one (purpose, trial); injective over its arguments."""
    return RngStream(int(master_seed), str(purpose), int(trial_index))


# ---------------------------------------------------------------------------
# Structured-text (key = value) config files.  Values use Python literal
# syntax, so floats round-trip bit-exactly through repr().
# ---------------------------------------------------------------------------

def write_keyvalue_file(path, mapping: dict) -> None:
    lines = [f"{key} = {value!r}" for key, value in mapping.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_keyvalue_file(path) -> dict:
    """Parse 'key = value' lines; '#' starts a comment, blank lines ignored."""
    out: dict = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"malformed config line: {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = ast.literal_eval(value.strip())
    return out


_FRAME_KEYS = ("P", "M", "N_B", "N_CP", "N_c", "T_s", "T_SS", "eps_T_max")


def frame_config_from_dict(mapping: dict) -> FrameConfig:
    """Build and validate a FrameConfig from the documented key names."""
    kwargs = {k: mapping[k] for k in _FRAME_KEYS if k in mapping}
    return validate_config(FrameConfig(**kwargs))
