"""Closed-form analysis: detection thresholds and miss rates, estimation
bounds, and system-level latency/overhead/complexity models.

The Gaussian Q function and its inverse come from scipy.special (ndtr /
ndtri), accurate to full double precision over the probabilities used
here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .config import FrameConfig
from .training import los_jacobian
from .waveform import PssSequence

__all__ = [
    "qfunc",
    "qfunc_inv",
    "beam_switch_samples",
    "snr_degradation",
    "threshold_adjustment",
    "detection_threshold",
    "miss_detection_rate",
    "DetectionTheoryInputs",
    "fisher_information",
    "crlb_angles",
    "AccessModel",
    "csirs_per_period",
    "mean_csirs_wait",
    "access_latency",
    "overhead_ratio",
    "baseband_op_counts",
    "compressive_to_dia_op_ratio",
    "GUMBEL_SCALE_FACTOR",
]

#: Converts a standard deviation into a Gumbel scale parameter,
#: sqrt(6)/pi; enters the no-timing threshold adjustment.
GUMBEL_SCALE_FACTOR = np.sqrt(6.0) / np.pi


def qfunc(x):
    """Gaussian tail probability Q(x) = P(Z > x)."""
    return ndtr(-np.asarray(x, dtype=float))


def qfunc_inv(p):
    """Inverse of the Gaussian tail probability."""
    return -ndtri(np.asarray(p, dtype=float))


# ---------------------------------------------------------------------------
# Detection theory
# ---------------------------------------------------------------------------

def beam_switch_samples(eps_T: int, cfg: FrameConfig) -> int:
    """Sync samples received after a combiner switch caused by the offset.

    Nonzero only when the offset pushes the sync symbol across a burst
    boundary: K = N_B - eps_T for N_B - P <= eps_T < N_B, else 0.
    """
    if cfg.N_B - cfg.P <= eps_T < cfg.N_B:
        return cfg.N_B - eps_T
    return 0


def snr_degradation(eps_T: int, eps_F: float, cfg: FrameConfig) -> float:
    """Multiplicative detection-SNR loss from CFO and mid-symbol beam switch.

    kappa = [sin^2(K*eps_F/2) + sin^2((P-K)*eps_F/2)]
            / (P^2 * sin^2(eps_F/2))

    with K = beam_switch_samples(eps_T).  The eps_F -> 0 limit is
    (K^2 + (P-K)^2)/P^2, i.e. exactly 1 when no switch occurs.
    """
    K = beam_switch_samples(eps_T, cfg)
    P = cfg.P
    if eps_F == 0.0:
        return (K * K + (P - K) * (P - K)) / (P * P)
    num = np.sin(K * eps_F / 2.0) ** 2 + np.sin((P - K) * eps_F / 2.0) ** 2
    den = (P * np.sin(eps_F / 2.0)) ** 2
    return float(num / den)


def threshold_adjustment(mode: str, p_fa: float, eps_T_max: int | None = None) -> float:
    """Threshold offset factor xi for a target false-alarm rate.

    Known timing: xi = Qinv(p_fa).  Unknown timing: the detector keeps
    the strongest of eps_T_max candidate windows, whose null maximum is
    Gumbel-like with location Qinv(1/eps_T_max) and scale
    (sqrt(6)/pi) / Qinv(1/eps_T_max) in units of the single-window
    deviation, giving

        xi = Qinv(1/eps_T_max)
             - (sqrt(6)/pi) * ln(-ln(1 - p_fa)) / Qinv(1/eps_T_max).
    """
    if not 0.0 < p_fa < 1.0:
        raise ValueError("target false-alarm rate must be in (0, 1)")
    mode = mode.upper()
    if mode == "PT":
        return float(qfunc_inv(p_fa))
    if mode == "NT":
        if eps_T_max is None or eps_T_max < 2:
            raise ValueError("NT mode needs the timing search-window size")
        a = float(qfunc_inv(1.0 / eps_T_max))
        return a - GUMBEL_SCALE_FACTOR * np.log(-np.log1p(-p_fa)) / a
    raise ValueError("mode must be 'PT' or 'NT'")


def detection_threshold(cfg: FrameConfig, sigma_n2: float, p_fa: float,
                        mode: str) -> float:
    """Optimal energy threshold: sigma_n2*(N_c/P + sqrt(N_c/(M P^2))*xi)."""
    xi = threshold_adjustment(mode, p_fa, cfg.eps_T_max)
    return sigma_n2 * (cfg.N_c / cfg.P
                       + np.sqrt(cfg.N_c / (cfg.M * cfg.P ** 2)) * xi)


def miss_detection_rate(cfg: FrameConfig, snr: float, p_fa: float, mode: str,
                        eps_T: int = 0, eps_F: float = 0.0) -> float:
    """Closed-form miss rate of the burst-combining energy detector.

    P_MD = Q( (kappa*snr - sqrt(N_c/(M P^2))*xi)
              / sqrt(2*kappa^2*snr^2/M + N_c/(P^2 M)) )

    snr is the linear pre-beamforming SNR; kappa folds in the timing and
    CFO degradation; xi the false-alarm threshold adjustment.
    """
    kappa = snr_degradation(eps_T, eps_F, cfg)
    xi = threshold_adjustment(mode, p_fa, cfg.eps_T_max)
    num = kappa * snr - np.sqrt(cfg.N_c / (cfg.M * cfg.P ** 2)) * xi
    den = np.sqrt(2.0 * kappa ** 2 * snr ** 2 / cfg.M
                  + cfg.N_c / (cfg.P ** 2 * cfg.M))
    return float(qfunc(num / den))


@dataclass(frozen=True)
class DetectionTheoryInputs:
    """Bundle of everything the closed-form detection results depend on."""

    cfg: FrameConfig
    snr: float
    p_fa_star: float
    mode: str = "NT"
    eps_T: int = 0
    eps_F: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.p_fa_star < 1.0:
            raise ValueError("target false-alarm rate must be in (0, 1)")

    def threshold(self, sigma_n2: float) -> float:
        return detection_threshold(self.cfg, sigma_n2, self.p_fa_star, self.mode)

    def miss_rate(self) -> float:
        return miss_detection_rate(self.cfg, self.snr, self.p_fa_star,
                                   self.mode, self.eps_T, self.eps_F)


# ---------------------------------------------------------------------------
# Fisher information and angle CRLB (single dominant path)
# ---------------------------------------------------------------------------

def fisher_information(xi: np.ndarray, cfg: FrameConfig, cb_tx, cb_rx,
                       sigma_n2: float, pss: PssSequence
                       ) -> tuple[np.ndarray, np.ndarray]:
    """FIM of (eps_F, theta, phi, tau, alpha, beta) for one codebook draw.

    Returns (J, Phi) where Phi[i, j] = Re[(d_i x)^H (d_j x)] from the
    analytic model Jacobian and J = (2/sigma_n2)*Phi is the Fisher
    information for circular complex Gaussian noise of power sigma_n2
    per sample.
    """
    jac = los_jacobian(np.asarray(xi, dtype=float), cfg, cb_tx, cb_rx, pss)
    phi = np.real(jac.conj().T @ jac)
    phi = 0.5 * (phi + phi.T)  # kill rounding asymmetry
    return 2.0 * phi / sigma_n2, phi


def crlb_angles(xi: np.ndarray, cfg: FrameConfig, cb_tx, cb_rx,
                sigma_n2: float, pss: PssSequence) -> tuple[float, float]:
    """(var_aod, var_aoa) lower bounds from the inverse FIM.

    Raises ValueError when the FIM is singular (degenerate geometry,
    e.g. an endfire angle where the steering derivative vanishes).
    """
    J, _ = fisher_information(xi, cfg, cb_tx, cb_rx, sigma_n2, pss)
    try:
        inv = np.linalg.inv(J)
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular Fisher information (degenerate geometry)") from exc
    if not np.all(np.isfinite(inv)):
        raise ValueError("singular Fisher information (degenerate geometry)")
    return float(inv[1, 1]), float(inv[2, 2])


# ---------------------------------------------------------------------------
# Access latency, overhead, and complexity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AccessModel:
    """System-level inputs for latency and overhead.

    T_R is the reference-slot period, T_r its duration; n_train the
    number of scheduled refinement slots a scheme needs per user (zero
    for the compressive scheme); b_tot the data bandwidth in Hz; p_md
    the per-period miss rate of initial discovery.
    """

    n_ue: int
    T_R: float
    T_r: float
    n_train: int
    b_tot: float
    p_md: float


def csirs_per_period(cfg: FrameConfig, T_R: float) -> int:
    """Reference slots fitting one period after the burst region."""
    return int(np.floor((cfg.T_SS - cfg.M * cfg.T_B) / T_R))


def mean_csirs_wait(n_ue: int, k_r: int, T_SS: float, T_R: float) -> float:
    """Average wait until a user's scheduled reference slot.

    Users are granted slots in order, k_r per period; the q-th slot of
    period f occurs at f*T_SS + q*T_R.  Closed form of the average over
    the n_ue grants (matches exhaustive enumeration exactly):

        (1/n_ue) [ sum_{f<K_F} sum_{q=1}^{k_r} (f*T_SS + q*T_R)
                   + sum_{q=1}^{K_res} (K_F*T_SS + q*T_R) ]

    with K_F = floor((n_ue-1)/k_r) full periods and
    K_res = n_ue - K_F*k_r grants in the last one.
    """
    if k_r < 1:
        raise ValueError("need at least one reference slot per period")
    k_f = (n_ue - 1) // k_r
    k_res = n_ue - k_f * k_r
    total = 0.0
    # full periods: k_r grants each
    total += T_SS * k_r * (k_f - 1) * k_f / 2.0
    total += k_f * T_R * k_r * (k_r + 1) / 2.0
    # residual grants in period k_f
    total += k_res * k_f * T_SS + T_R * k_res * (k_res + 1) / 2.0
    return total / n_ue


def access_latency(model: AccessModel, cfg: FrameConfig) -> float:
    """Expected access latency in seconds.

    Discovery retries cost one period each: T_SS * p_md/(1 - p_md).
    Schemes needing n_train scheduled slots add n_train times the mean
    scheduling wait. Raises for p_md >= 1 (latency diverges).
    """
    if not 0.0 <= model.p_md < 1.0:
        raise ValueError("miss rate must be in [0, 1) for finite latency")
    latency = cfg.T_SS * model.p_md / (1.0 - model.p_md)
    if model.n_train > 0:
        k_r = csirs_per_period(cfg, model.T_R)
        latency += model.n_train * mean_csirs_wait(model.n_ue, k_r,
                                                   cfg.T_SS, model.T_R)
    return latency


def overhead_ratio(model: AccessModel, cfg: FrameConfig) -> float:
    """Time-frequency resource overhead in percent.

    OH = (M*B_IA*T_B + K_R*b_tot*T_r) / (b_tot * T_SS) * 100 with the
    sounding bandwidth B_IA = 1/T_s.
    """
    b_ia = 1.0 / cfg.T_s
    k_r = csirs_per_period(cfg, model.T_R) if model.n_train > 0 else 0
    used = cfg.M * b_ia * cfg.T_B + k_r * model.b_tot * model.T_r
    return 100.0 * used / (model.b_tot * cfg.T_SS)


def baseband_op_counts(cfg: FrameConfig, G_d: int, G_T: int, G_R: int) -> dict:
    """Complex multiplications per processing block."""
    return {
        "pss_correlation": cfg.P * cfg.N_B,
        "detection": cfg.N_B,
        "delay_estimation": cfg.P * G_d + cfg.P * cfg.M,
        "angle_estimation": cfg.M * G_T * G_R,
        "cfo_estimation": 2 * cfg.M * G_T * G_R,
    }


def compressive_to_dia_op_ratio(cfg: FrameConfig, G_d: int, G_T: int, G_R: int) -> float:
    """Dominant-term op ratio of the compressive receiver over the
    correlation-only directional receiver:
    (P*N_B + P*G_d + 3*M*G_T*G_R) / (P*N_B)."""
    num = cfg.P * cfg.N_B + cfg.P * G_d + 3 * cfg.M * G_T * G_R
    return num / (cfg.P * cfg.N_B)
