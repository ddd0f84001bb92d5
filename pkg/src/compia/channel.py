"""Sparse multipath MIMO channel synthesis and the receive chain.

Coupling convention. The per-burst effective path gain is

    g_eff[m, l] = g_l * (w_m^H a_rx(phi_l)) * (a_tx(theta_l)^H v_m)

with unit-norm sounding beams, so a random quasi-omni beam pair has
expected |coupling|^2 of one and  E|g_eff|^2 = |g_l|^2.  The pre-BF SNR
sigma_g^2/sigma_n^2 is then exactly the mean detector-input SNR, which
is what the closed-form detection and CRLB expressions assume.  The
tap-domain matrix accessor ``channel_matrix`` carries the conventional
1/sqrt(N_tx*N_rx) array normalization instead (steered-beam gain |g|^2)
and is used for post-beamforming SNR reporting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ChannelRealization, FrameConfig, SyncState
from .waveform import PssSequence, delayed_pss

__all__ = [
    "ArrayGeometry",
    "RxCapture",
    "steering_vector",
    "steering_derivative",
    "cfo_phase_diag",
    "burst_couplings",
    "channel_matrix",
    "post_bf_snr",
    "draw_channel",
    "synthesize_capture",
]


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array with half-wavelength element spacing."""

    N: int
    kind: str = "ula"

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("array needs at least one element")


def steering_vector(geom: ArrayGeometry, angle: float) -> np.ndarray:
    """a[k] = exp(j*pi*k*sin(angle)), k = 0..N-1; squared norm is N."""
    k = np.arange(geom.N)
    return np.exp(1j * np.pi * k * np.sin(angle))


def steering_derivative(geom: ArrayGeometry, angle: float) -> np.ndarray:
    """Elementwise d/d(angle) of the steering vector."""
    k = np.arange(geom.N)
    return 1j * np.pi * k * np.cos(angle) * steering_vector(geom, angle)


def cfo_phase_diag(eps_F: float, P: int) -> np.ndarray:
    """Within-symbol CFO rotation diag(1, e^{j*eps_F}, ..., e^{j(P-1)eps_F})."""
    return np.exp(1j * eps_F * np.arange(P))


def _beams(codebook) -> np.ndarray:
    """Accept a Codebook object or a plain (M, N) array of beam weights."""
    return np.asarray(getattr(codebook, "beams", codebook))


def burst_couplings(chan: ChannelRealization, cb_tx, cb_rx,
                    geom_tx: ArrayGeometry, geom_rx: ArrayGeometry) -> np.ndarray:
    """(M, L) matrix of g_l*(w_m^H a_rx(phi_l))*(a_tx(theta_l)^H v_m).

    This is the per-burst effective path gain without any CFO phase.
    """
    v = _beams(cb_tx)  # (M, N_tx)
    w = _beams(cb_rx)  # (M, N_rx)
    a_tx = np.stack([steering_vector(geom_tx, th) for th in chan.aod], axis=1)
    a_rx = np.stack([steering_vector(geom_rx, ph) for ph in chan.aoa], axis=1)
    tx_part = v @ a_tx.conj()  # v_m^T conj(a_tx) = a_tx^H v_m, shape (M, L)
    rx_part = w.conj() @ a_rx  # w_m^H a_rx, shape (M, L)
    return chan.gains[None, :] * rx_part * tx_part


def _tap_weight(d: int, tau: float, cfg: FrameConfig) -> complex:
    """Periodic band-limited interpolation weight of delay tau at tap d."""
    p = np.arange(cfg.P)
    return np.mean(np.exp(2j * np.pi * p * (d - tau / cfg.T_s) / cfg.P))


def channel_matrix(chan: ChannelRealization, d: int,
                   geom_tx: ArrayGeometry, geom_rx: ArrayGeometry,
                   cfg: FrameConfig) -> np.ndarray:
    """Tap-d MIMO matrix with 1/sqrt(N_tx*N_rx) normalization.

    H[d] = sum_l g_l k(d - tau_l/T_s) a_rx(phi_l) a_tx(theta_l)^H / sqrt(N_tx N_rx)

    where k is the periodic interpolation kernel (a Kronecker delta for
    on-sample delays).
    """
    H = np.zeros((geom_rx.N, geom_tx.N), dtype=np.complex128)
    for g, th, ph, tau in zip(chan.gains, chan.aod, chan.aoa, chan.delays):
        w = _tap_weight(d, tau, cfg)
        if w != 0:
            H += g * w * np.outer(steering_vector(geom_rx, ph),
                                  steering_vector(geom_tx, th).conj())
    return H / np.sqrt(geom_tx.N * geom_rx.N)


def post_bf_snr(chan: ChannelRealization, w_star: np.ndarray, v_star: np.ndarray,
                geom_tx: ArrayGeometry, geom_rx: ArrayGeometry, cfg: FrameConfig,
                p_out: float = 1.0, b_tot: float | None = None) -> float:
    """Post-beamforming SNR in dB across all channel taps.

    Ratio of p_out * sum_d |w^H H[d] v|^2 (d = 0..N_c) to the noise power
    in bandwidth b_tot.  The noise power scales from the per-sample level
    sigma_n2 (which refers to the sounding bandwidth 1/T_s) by b_tot*T_s;
    b_tot=None keeps the sounding bandwidth.  Returns -inf for zero gain.
    """
    gain = 0.0
    for d in range(cfg.N_c + 1):
        H = channel_matrix(chan, d, geom_tx, geom_rx, cfg)
        gain += abs(np.vdot(w_star, H @ v_star)) ** 2
    noise = chan.sigma_n2 * (1.0 if b_tot is None else b_tot * cfg.T_s)
    if gain == 0.0:
        return -np.inf
    return 10.0 * np.log10(p_out * gain / noise)


def draw_channel(cfg: FrameConfig, L: int, sigma_g2: float, sigma_n2: float,
                 rng: np.random.Generator, delay_grid: str = "sample") -> ChannelRealization:
    """Sample one multipath realization for a Monte Carlo trial.

    Angles uniform on (-pi/2, pi/2); equal-power path gains with uniform
    random phases normalized to sigma_g2. delay_grid="sample" draws L
    distinct integer-sample delays in [0, N_c) (resolvable taps, matching
    the detection analysis); "continuous" draws uniform on [0, N_c*T_s).
    """
    phases = rng.uniform(0.0, 2.0 * np.pi, size=L)
    gains = np.sqrt(sigma_g2 / L) * np.exp(1j * phases)
    aod = rng.uniform(-np.pi / 2, np.pi / 2, size=L)
    aoa = rng.uniform(-np.pi / 2, np.pi / 2, size=L)
    if delay_grid == "sample":
        taps = rng.choice(cfg.N_c, size=L, replace=False)
        delays = taps * cfg.T_s
    elif delay_grid == "continuous":
        delays = rng.uniform(0.0, cfg.N_c * cfg.T_s, size=L)
    else:
        raise ValueError("delay_grid must be 'sample' or 'continuous'")
    return ChannelRealization(gains=gains, aod=aod, aoa=aoa,
                              delays=np.asarray(delays, dtype=float),
                              sigma_n2=sigma_n2)


@dataclass(frozen=True)
class RxCapture:
    """Received sample stream for one burst set plus search-window guard."""

    y: np.ndarray
    sync: SyncState
    cb_tx: object = None
    cb_rx: object = None


def synthesize_capture(cfg: FrameConfig, chan: ChannelRealization | None,
                       cb_tx, cb_rx, sync: SyncState, rng: np.random.Generator,
                       pss: PssSequence | None = None,
                       signal_present: bool = True,
                       phase_noise_var: float = 0.0) -> RxCapture:
    """Synthesize the combined receive stream for M sounding bursts.

    The burst-m sync symbol (CP included) starts at sample
    eps_T + m*N_B; each path contributes its fractionally delayed symbol
    (realized exactly in the frequency domain, circular within the
    CP-extended symbol), scaled by the per-burst coupling. The combiner
    index follows the receiver clock floor(n / N_B) mod M, so a timing
    offset can split a symbol across two combiners; the precoder travels
    with the transmitted burst and never splits. The CFO ramp
    exp(j*eps_F*n) multiplies the signal term; AWGN of per-sample power
    sigma_n2 covers the whole capture (unit-norm combiner).

    chan=None or signal_present=False yields a noise-only capture.
    phase_noise_var > 0 enables a Wiener phase walk on the signal term
    with the given per-sample increment variance (default off).
    """
    n_total = cfg.n_capture
    sigma_n2 = chan.sigma_n2 if chan is not None else 1.0
    noise = rng.standard_normal(n_total) + 1j * rng.standard_normal(n_total)
    y = np.sqrt(sigma_n2 / 2.0) * noise

    if signal_present and chan is not None:
        v = _beams(cb_tx)
        w = _beams(cb_rx)
        M, n_rx = w.shape
        geom_tx = ArrayGeometry(v.shape[1])
        geom_rx = ArrayGeometry(n_rx)
        if pss is None:
            from .waveform import zadoff_chu

            pss = zadoff_chu(25, cfg.P)
        # CP-extended delayed symbol per path: (N, L)
        blocks = np.empty((cfg.N, chan.L), dtype=np.complex128)
        for l, tau in enumerate(chan.delays):
            u = delayed_pss(tau, cfg, pss)
            blocks[:, l] = np.concatenate([u[cfg.P - cfg.N_CP:], u])
        a_tx = np.stack([steering_vector(geom_tx, th) for th in chan.aod], axis=1)
        a_rx = np.stack([steering_vector(geom_rx, ph) for ph in chan.aoa], axis=1)
        tx_part = v @ a_tx.conj()      # (M, L) = a_tx^H v_m
        rx_part = w.conj() @ a_rx      # (M, L) = w_m^H a_rx

        psi = None
        if phase_noise_var > 0.0:
            psi = np.cumsum(np.sqrt(phase_noise_var) * rng.standard_normal(n_total))

        eps_T, eps_F = sync.eps_T, sync.eps_F
        # burst m occupies capture samples eps_T + m*N_B + [0, N); the
        # combiner switches at receiver-clock burst boundaries, so with a
        # large offset the symbol tail is combined by the next beam
        # (cyclically reusing the codebook past the last burst).
        coeff_same = chan.gains[None, :] * tx_part * rx_part        # (M, L)
        coeff_next = chan.gains[None, :] * tx_part * np.roll(rx_part, -1, axis=0)
        sig = coeff_same @ blocks.T                                  # (M, N)
        split = min(cfg.N, max(0, cfg.N_B - eps_T))
        if split < cfg.N:
            sig[:, split:] = coeff_next @ blocks[split:].T
        n_abs = eps_T + cfg.N_B * np.arange(M)[:, None] + np.arange(cfg.N)[None, :]
        phase = eps_F * n_abs
        if psi is not None:
            phase = phase + psi[n_abs]
        sig = sig * np.exp(1j * phase)
        view = y[eps_T: eps_T + M * cfg.N_B].reshape(M, cfg.N_B)
        view[:, : cfg.N] += sig

    return RxCapture(y=y, sync=sync, cb_tx=cb_tx, cb_rx=cb_rx)
