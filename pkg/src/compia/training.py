"""Compressive beam training from rearranged sounding bursts.

Pipeline: rearrange the detected capture into per-burst sync symbols,
estimate the dominant excess delay against a delay dictionary, matched-
filter per-burst effective gains, run a CFO-robust matching pursuit over
the AoA x AoD grid, then refine all continuous parameters by first-order
descent on the single-path observation model.

Observation model (single dominant path, burst m, subcarrier-sample p):

    x[m, p] = g * c_m(theta, phi) * exp(j*eps_F*(m*N_B + p)) * u(tau)[p]

where c_m = (w_m^H a_rx(phi)) (a_tx(theta)^H v_m) and u(tau) is the
delayed sync symbol.  Sample indices count from the first post-CP sync
sample, so any constant phase offset from the absolute capture position
folds into the complex gain g.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ArrayGeometry, RxCapture, steering_vector, steering_derivative
from .codebook import invert_burst_index, sector_centers
from .config import ChannelRealization, FrameConfig
from .detection import DetectionResult, detect_nt, detect_pt, pss_correlate
from .waveform import PssSequence, delay_response, delayed_pss

__all__ = [
    "Dictionaries",
    "TrainingEstimate",
    "RefineOptions",
    "build_dictionaries",
    "rearrange_bursts",
    "estimate_delay",
    "estimate_burst_gains",
    "cfo_from_phase_increments",
    "matching_pursuit",
    "MatchingPursuitResult",
    "los_model",
    "los_jacobian",
    "refine_estimate",
    "run_initial_access",
    "hierarchical_beam_search",
]


# ---------------------------------------------------------------------------
# Dictionaries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Dictionaries:
    """Delay and angle dictionaries for one codebook realization.

    The angle dictionary is stored in factored form: entry k = (k_rx,
    k_tx) of the full dictionary is rx_factor[m, k_rx]*tx_factor[m, k_tx]
    for burst m, i.e. the anticipated per-burst coupling of a path
    arriving from aoa_grid[k_rx] and departing from aod_grid[k_tx].
    Flat indices follow k = k_rx*G_T + k_tx.
    """

    delay_grid: np.ndarray    # (G_d,) seconds
    delay_atoms: np.ndarray   # (P, G_d) time-domain delayed sync symbols
    aoa_grid: np.ndarray      # (G_R,) radians
    aod_grid: np.ndarray      # (G_T,) radians
    rx_factor: np.ndarray     # (M, G_R) = w_m^H a_rx(aoa_grid)
    tx_factor: np.ndarray     # (M, G_T) = a_tx(aod_grid)^H v_m
    atom_norms_sq: np.ndarray  # (G_R, G_T) squared dictionary-atom norms

    @property
    def G_d(self) -> int:
        return len(self.delay_grid)

    @property
    def G_R(self) -> int:
        return len(self.aoa_grid)

    @property
    def G_T(self) -> int:
        return len(self.aod_grid)

    def atom(self, k_rx: int, k_tx: int) -> np.ndarray:
        """The (M,) per-burst coupling vector of one angle pair."""
        return self.rx_factor[:, k_rx] * self.tx_factor[:, k_tx]


def angle_grid(G: int) -> np.ndarray:
    """G uniform candidates over (-pi/2, pi/2), endpoints excluded.

    The grid is offset by half a step so the array-response derivative
    (proportional to cos) never degenerates at the edges.
    """
    step = np.pi / G
    return -np.pi / 2 + step * (np.arange(G) + 0.5)


def build_dictionaries(cfg: FrameConfig, cb_tx, cb_rx, pss: PssSequence,
                       G_d: int = 500, G_T: int | None = None,
                       G_R: int | None = None) -> Dictionaries:
    """Precompute delay atoms and factored angle atoms.

    Delay candidates are q*delta_tau for q = 1..G_d with
    delta_tau = N_c*T_s/G_d; angle grids default to twice the array
    sizes.
    """
    v = np.asarray(getattr(cb_tx, "beams", cb_tx))
    w = np.asarray(getattr(cb_rx, "beams", cb_rx))
    geom_tx, geom_rx = ArrayGeometry(v.shape[1]), ArrayGeometry(w.shape[1])
    if G_T is None:
        G_T = 2 * geom_tx.N
    if G_R is None:
        G_R = 2 * geom_rx.N

    delta_tau = cfg.N_c * cfg.T_s / G_d
    delay_grid = delta_tau * np.arange(1, G_d + 1)
    p_idx = np.arange(cfg.P)[:, None]
    responses = np.exp(-2j * np.pi * p_idx * delay_grid[None, :] / (cfg.P * cfg.T_s))
    delay_atoms = np.fft.ifft(responses * pss.s_freq[:, None], axis=0, norm="ortho")

    aod_grid = angle_grid(G_T)
    aoa_grid = angle_grid(G_R)
    a_tx = np.stack([steering_vector(geom_tx, t) for t in aod_grid], axis=1)
    a_rx = np.stack([steering_vector(geom_rx, r) for r in aoa_grid], axis=1)
    tx_factor = v @ a_tx.conj()      # (M, G_T)
    rx_factor = w.conj() @ a_rx      # (M, G_R)
    norms = np.einsum("mr,mt->rt", np.abs(rx_factor) ** 2, np.abs(tx_factor) ** 2)
    return Dictionaries(delay_grid=delay_grid, delay_atoms=delay_atoms,
                        aoa_grid=aoa_grid, aod_grid=aod_grid,
                        rx_factor=rx_factor, tx_factor=tx_factor,
                        atom_norms_sq=norms)


# ---------------------------------------------------------------------------
# Coarse estimation steps
# ---------------------------------------------------------------------------

def rearrange_bursts(capture: RxCapture | np.ndarray, eps_T_hat: int,
                     cfg: FrameConfig) -> np.ndarray:
    """Stack the M post-CP sync symbols into a (M, P) matrix.

    Row m holds y[eps_T_hat + N_CP + p + m*N_B] for p = 0..P-1; assumes
    a correct detection and timing estimate.
    """
    y = capture.y if isinstance(capture, RxCapture) else np.asarray(capture)
    need = eps_T_hat + cfg.N_CP + (cfg.M - 1) * cfg.N_B + cfg.P
    if len(y) < need:
        raise ValueError("capture too short for the requested rearrangement")
    out = np.empty((cfg.M, cfg.P), dtype=np.complex128)
    for m in range(cfg.M):
        start = eps_T_hat + cfg.N_CP + m * cfg.N_B
        out[m] = y[start: start + cfg.P]
    return out


def estimate_delay(Y: np.ndarray, dicts: Dictionaries) -> tuple[int, float]:
    """Match the burst-averaged symbol against the delay dictionary.

    Scores |<p_q, mean_m y_m>| / ||p_q||^2 and returns (q_hat, tau_hat);
    the within-symbol CFO rotation is deliberately ignored here. Ties
    resolve to the lowest grid index.
    """
    ybar = Y.mean(axis=0)
    scores = np.abs(dicts.delay_atoms.conj().T @ ybar)
    q_hat = int(np.argmax(scores))
    return q_hat, float(dicts.delay_grid[q_hat])


def estimate_burst_gains(Y: np.ndarray, q_hat: int, dicts: Dictionaries) -> np.ndarray:
    """Per-burst matched-filter gain estimates at the chosen delay atom.

    g_hat[m] = p_q^H y_m / ||p_q||^2 with ||p_q||^2 = P; zero input
    gives zero output.
    """
    atom = dicts.delay_atoms[:, q_hat]
    return (Y @ atom.conj()) / np.real(np.vdot(atom, atom))


def cfo_from_phase_increments(tone: np.ndarray, N_B: int) -> float:
    """CFO from the mean burst-to-burst phase increment of a noisy tone.

    eps_F_hat = angle(mean_m conj(tone[m]) tone[m+1]) / N_B, which lies
    in (-pi/N_B, pi/N_B]; increments of |N_B*eps_F| beyond pi alias.
    """
    tone = np.asarray(tone)
    if len(tone) < 2:
        raise ValueError("need at least two bursts for a phase increment")
    acc = np.mean(np.conj(tone[:-1]) * tone[1:])
    if acc == 0:
        raise ValueError("zero tone has no phase increment")
    return float(np.angle(acc)) / N_B


@dataclass(frozen=True)
class MatchingPursuitResult:
    k_rx: int
    k_tx: int
    theta_hat: float
    phi_hat: float
    eps_F_hat: float
    score: float
    scores: np.ndarray  # (G_R, G_T) CFO-corrected scores


def matching_pursuit(g_hat: np.ndarray, dicts: Dictionaries,
                     cfg: FrameConfig) -> MatchingPursuitResult:
    """CFO-robust matching pursuit over the joint AoA x AoD grid.

    For every angle pair k the tone conj(atom_k) * g_hat yields a
    closed-form CFO estimate; the pair score is the magnitude of the
    inner product between the CFO-corrected atom and g_hat, normalized
    by the atom norm (the projection energy, which is the ML-consistent
    ranking under an unknown complex gain; atom norms vary across the
    grid, so a squared-norm normalization would favor weak atoms and
    break exact noiseless recovery).  The argmax (unmapped by
    k = k_rx*G_T + k_tx, lowest flat index on ties) gives the coarse
    angle estimates.
    """
    M = len(g_hat)
    # per-pair CFO: increments of conj(tone[m])*tone[m+1] factorize over
    # the rx/tx dictionary factors
    b = np.conj(g_hat[:-1]) * g_hat[1:]                       # (M-1,)
    rp = dicts.rx_factor[:-1] * np.conj(dicts.rx_factor[1:])  # (M-1, G_R)
    tp = dicts.tx_factor[:-1] * np.conj(dicts.tx_factor[1:])  # (M-1, G_T)
    inc = np.einsum("mr,mt,m->rt", rp, tp, b)
    eps = np.angle(inc) / cfg.N_B                             # (G_R, G_T)

    proj = np.conj(dicts.rx_factor)[:, :, None] * np.conj(dicts.tx_factor)[:, None, :]
    proj = proj * g_hat[:, None, None]                        # (M, G_R, G_T)
    ramps = np.exp(-1j * cfg.N_B * eps[None, :, :] * np.arange(M)[:, None, None])
    scores = np.abs(np.sum(proj * ramps, axis=0)) / np.sqrt(dicts.atom_norms_sq)

    flat = int(np.argmax(scores))
    k_rx, k_tx = divmod(flat, dicts.G_T)
    return MatchingPursuitResult(
        k_rx=k_rx, k_tx=k_tx,
        theta_hat=float(dicts.aod_grid[k_tx]),
        phi_hat=float(dicts.aoa_grid[k_rx]),
        eps_F_hat=float(eps[k_rx, k_tx]),
        score=float(scores[k_rx, k_tx]),
        scores=scores,
    )


# ---------------------------------------------------------------------------
# Single-path observation model and refinement
# ---------------------------------------------------------------------------

PARAM_NAMES = ("eps_F", "theta", "phi", "tau", "alpha", "beta")


def _couplings(theta: float, phi: float, cb_tx, cb_rx):
    v = np.asarray(getattr(cb_tx, "beams", cb_tx))
    w = np.asarray(getattr(cb_rx, "beams", cb_rx))
    geom_tx, geom_rx = ArrayGeometry(v.shape[1]), ArrayGeometry(w.shape[1])
    a_tx = steering_vector(geom_tx, theta)
    a_rx = steering_vector(geom_rx, phi)
    da_tx = steering_derivative(geom_tx, theta)
    da_rx = steering_derivative(geom_rx, phi)
    tx = v @ a_tx.conj()       # (M,) a_tx^H v_m
    rx = w.conj() @ a_rx       # (M,) w_m^H a_rx
    dtx = v @ da_tx.conj()     # d/dtheta of tx part
    drx = w.conj() @ da_rx     # d/dphi of rx part
    return tx, rx, dtx, drx


def los_model(xi: np.ndarray, cfg: FrameConfig, cb_tx, cb_rx,
              pss: PssSequence) -> np.ndarray:
    """(M, P) noiseless observation for xi = (eps_F, theta, phi, tau, alpha, beta)."""
    eps_F, theta, phi, tau, alpha, beta = xi
    g = alpha + 1j * beta
    tx, rx, _, _ = _couplings(theta, phi, cb_tx, cb_rx)
    u = delayed_pss(tau, cfg, pss)
    m_idx = np.arange(cfg.M)[:, None]
    p_idx = np.arange(cfg.P)[None, :]
    phase = np.exp(1j * eps_F * (m_idx * cfg.N_B + p_idx))
    return g * (rx * tx)[:, None] * phase * u[None, :]


def los_jacobian(xi: np.ndarray, cfg: FrameConfig, cb_tx, cb_rx,
                 pss: PssSequence) -> np.ndarray:
    """(M*P, 6) analytic partial derivatives of the flattened model.

    Column order matches PARAM_NAMES. All derivatives are exact: the
    CFO column multiplies by j*(m*N_B + p), the delay column swaps in
    the differentiated delay response, and the angle columns swap in the
    differentiated steering couplings.
    """
    eps_F, theta, phi, tau, alpha, beta = xi
    g = alpha + 1j * beta
    tx, rx, dtx, drx = _couplings(theta, phi, cb_tx, cb_rx)
    u = delayed_pss(tau, cfg, pss)
    p_idx = np.arange(cfg.P)
    m_idx = np.arange(cfg.M)[:, None]
    n_abs = m_idx * cfg.N_B + p_idx[None, :]
    phase = np.exp(1j * eps_F * n_abs)

    base = (rx * tx)[:, None] * phase * u[None, :]          # model / g
    dfreq = delay_response(tau, cfg) * pss.s_freq
    du = np.fft.ifft(-2j * np.pi * p_idx / (cfg.P * cfg.T_s) * dfreq, norm="ortho")

    cols = np.empty((cfg.M * cfg.P, 6), dtype=np.complex128)
    cols[:, 0] = (g * base * 1j * n_abs).ravel()
    cols[:, 1] = (g * (rx * dtx)[:, None] * phase * u[None, :]).ravel()
    cols[:, 2] = (g * (drx * tx)[:, None] * phase * u[None, :]).ravel()
    cols[:, 3] = (g * (rx * tx)[:, None] * phase * du[None, :]).ravel()
    cols[:, 4] = base.ravel()
    cols[:, 5] = (1j * base).ravel()
    return cols


@dataclass(frozen=True)
class TrainingEstimate:
    """Estimated path parameters plus the refinement trace."""

    theta_hat: float
    phi_hat: float
    tau_hat: float
    g_hat: complex
    eps_F_hat: float
    refined: bool = False
    residual_trace: tuple = ()

    def to_json_dict(self) -> dict:
        return {
            "theta_hat": self.theta_hat,
            "phi_hat": self.phi_hat,
            "tau_hat": self.tau_hat,
            "g_hat_re": float(np.real(self.g_hat)),
            "g_hat_im": float(np.imag(self.g_hat)),
            "eps_F_hat": self.eps_F_hat,
            "refined": self.refined,
            "residual_trace": list(self.residual_trace),
        }


@dataclass(frozen=True)
class RefineOptions:
    """Knobs for the first-order refinement loop.

    mu scales the normalized per-parameter steps; eps0 is the absolute
    residual stop (None picks a tiny floor that only fires on noiseless
    data); eps_f_bound limits the CFO ambiguity search (rad/sample).
    """

    mu: float = 1.0
    eps0: float | None = None
    rel_tol: float = 1e-6
    max_iters: int = 100
    max_halvings: int = 10
    eps_f_bound: float | None = None


def default_eps_f_bound(cfg: FrameConfig, ppm: float = 5.0,
                        carrier_hz: float = 28e9) -> float:
    """Largest |eps_F| the oscillator spec allows, with 5% margin."""
    return 1.05 * 2.0 * np.pi * cfg.T_s * ppm * 1e-6 * carrier_hz


def _fit_gain(model_unit: np.ndarray, y: np.ndarray) -> tuple[complex, float]:
    """LS complex gain of y on a unit-gain model; returns (g, |resid|^2)."""
    denom = np.real(np.vdot(model_unit, model_unit))
    g = np.vdot(model_unit, y) / denom if denom > 0 else 0.0
    resid = y - g * model_unit
    return g, float(np.real(np.vdot(resid, resid)))


def refine_estimate(Y: np.ndarray, coarse: TrainingEstimate, cfg: FrameConfig,
                    cb_tx, cb_rx, pss: PssSequence,
                    opts: RefineOptions | None = None) -> TrainingEstimate:
    """First-order descent on (tau, eps_F, theta, phi) with LS gain refits.

    Starting from the coarse estimate, each iteration refits the complex
    gain, then steps every continuous parameter by the real part of its
    pseudoinverse-scaled residual projection. A shared backtracking
    factor (halved up to max_halvings times) enforces a non-increasing
    residual; if no step length improves the residual the loop stops.
    The CFO is first de-aliased by testing every 2*pi/N_B shift inside
    eps_f_bound and keeping the residual-minimizing branch.
    """
    opts = opts or RefineOptions()
    y = Y.ravel()
    eps0 = opts.eps0 if opts.eps0 is not None else 1e-10 * float(np.real(np.vdot(y, y)))

    def unit_model(xi):
        xi_unit = np.array([xi[0], xi[1], xi[2], xi[3], 1.0, 0.0])
        return los_model(xi_unit, cfg, cb_tx, cb_rx, pss).ravel()

    # CFO integer-ambiguity resolution before any gradient step
    bound = opts.eps_f_bound if opts.eps_f_bound is not None \
        else default_eps_f_bound(cfg)
    wrap = 2.0 * np.pi / cfg.N_B
    q_lo = int(np.ceil((-bound - coarse.eps_F_hat) / wrap))
    q_hi = int(np.floor((bound - coarse.eps_F_hat) / wrap))
    best = None
    for q in range(q_lo, max(q_hi, q_lo) + 1):
        eps_f = coarse.eps_F_hat + wrap * q
        xi = np.array([eps_f, coarse.theta_hat, coarse.phi_hat, coarse.tau_hat,
                       1.0, 0.0])
        g, res = _fit_gain(unit_model(xi), y)
        if best is None or res < best[1]:
            best = (eps_f, res, g)
    eps_f0, res0, g0 = best
    xi = np.array([eps_f0, coarse.theta_hat, coarse.phi_hat, coarse.tau_hat,
                   np.real(g0), np.imag(g0)])
    trace = [res0]
    accepted = 0

    ang_lim = np.pi / 2 - 1e-9
    tau_lim = cfg.N_c * cfg.T_s

    for _ in range(opts.max_iters):
        if trace[-1] < eps0:
            break
        model = los_model(xi, cfg, cb_tx, cb_rx, pss).ravel()
        err = y - model
        jac = los_jacobian(xi, cfg, cb_tx, cb_rx, pss)
        # normalized first-order steps for (eps_F, theta, phi, tau)
        steps = np.zeros(4)
        for i in range(4):
            col = jac[:, i]
            denom = np.real(np.vdot(col, col))
            if denom > 0:
                steps[i] = opts.mu * np.real(np.vdot(col, err)) / denom

        improved = False
        scale = 1.0
        for _ in range(opts.max_halvings + 1):
            cand = xi.copy()
            cand[0] += scale * steps[0]
            cand[1] = np.clip(cand[1] + scale * steps[1], -ang_lim, ang_lim)
            cand[2] = np.clip(cand[2] + scale * steps[2], -ang_lim, ang_lim)
            cand[3] = np.clip(cand[3] + scale * steps[3], -cfg.T_s, tau_lim)
            g, res = _fit_gain(unit_model(cand), y)
            if res <= trace[-1]:
                cand[4], cand[5] = np.real(g), np.imag(g)
                xi = cand
                trace.append(res)
                improved = True
                accepted += 1
                break
            scale *= 0.5
        if not improved:
            break
        if len(trace) >= 2 and abs(trace[-2] - trace[-1]) <= opts.rel_tol * max(trace[-2], 1e-300):
            break

    return TrainingEstimate(
        theta_hat=float(xi[1]), phi_hat=float(xi[2]), tau_hat=float(xi[3]),
        g_hat=complex(xi[4], xi[5]), eps_F_hat=float(xi[0]),
        refined=accepted > 0 or trace[-1] < eps0,
        residual_trace=tuple(trace),
    )


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------

def run_initial_access(capture: RxCapture, cfg: FrameConfig, dicts: Dictionaries,
                       pss: PssSequence, eta: float, mode: str = "NT",
                       opts: RefineOptions | None = None, do_refine: bool = True):
    """Detection, timing acquisition, and beam training on one capture.

    Returns (DetectionResult, TrainingEstimate | None, w_star, v_star).
    On a negative decision no training runs and the beams are None. In
    "PT" mode the true timing from the capture is used (genie); in "NT"
    mode the acquired estimate is used.
    """
    corr = pss_correlate(capture.y, pss)
    if mode.upper() == "PT":
        det = detect_pt(corr, cfg, eta)
        eps_T_hat = capture.sync.eps_T
    elif mode.upper() == "NT":
        det = detect_nt(corr, cfg, eta)
        eps_T_hat = det.eps_T_hat
    else:
        raise ValueError("mode must be 'PT' or 'NT'")
    if not det.decision:
        return det, None, None, None

    Y = rearrange_bursts(capture, eps_T_hat, cfg)
    q_hat, tau_hat = estimate_delay(Y, dicts)
    g_hat = estimate_burst_gains(Y, q_hat, dicts)
    mp = matching_pursuit(g_hat, dicts, cfg)
    coarse = TrainingEstimate(theta_hat=mp.theta_hat, phi_hat=mp.phi_hat,
                              tau_hat=tau_hat, g_hat=0j, eps_F_hat=mp.eps_F_hat)
    est = refine_estimate(Y, coarse, cfg, cb_tx=capture.cb_tx, cb_rx=capture.cb_rx,
                          pss=pss, opts=opts) if do_refine else coarse

    n_tx = np.asarray(getattr(capture.cb_tx, "beams", capture.cb_tx)).shape[1]
    n_rx = np.asarray(getattr(capture.cb_rx, "beams", capture.cb_rx)).shape[1]
    w_star = steering_vector(ArrayGeometry(n_rx), est.phi_hat) / np.sqrt(n_rx)
    v_star = steering_vector(ArrayGeometry(n_tx), est.theta_hat) / np.sqrt(n_tx)
    return det, est, w_star, v_star


# ---------------------------------------------------------------------------
# Directional hierarchical benchmark
# ---------------------------------------------------------------------------

def hierarchical_beam_search(m_star: int, chan: ChannelRealization,
                             geom_tx: ArrayGeometry, geom_rx: ArrayGeometry,
                             M_tx: int, M_rx: int, cfg: FrameConfig,
                             n_train: int, beams_per_round: int = 4
                             ) -> tuple[float, float]:
    """Sector bisection refinement for the directional benchmark.

    Starting from the winning sector pair's centers, each scheduled
    round bisects the current angular region on both ends, measures the
    noiseless steered power of the candidate beam pairs across all
    channel taps, and keeps the strongest; the per-axis uncertainty
    halves every round. n_train = 0 returns the sector centers.
    """
    from .channel import channel_matrix

    k_tx, k_rx = invert_burst_index(m_star, M_tx)
    theta = float(sector_centers(M_tx)[k_tx])
    phi = float(sector_centers(M_rx)[k_rx])
    w_tx = np.pi / M_tx
    w_rx = np.pi / M_rx

    taps = [channel_matrix(chan, d, geom_tx, geom_rx, cfg)
            for d in range(cfg.N_c + 1)]

    def rss(th, ph):
        v = steering_vector(geom_tx, th) / np.sqrt(geom_tx.N)
        w = steering_vector(geom_rx, ph) / np.sqrt(geom_rx.N)
        return sum(abs(np.vdot(w, H @ v)) ** 2 for H in taps)

    for _ in range(n_train):
        cand_t = (theta - w_tx / 4, theta + w_tx / 4)
        cand_p = (phi - w_rx / 4, phi + w_rx / 4)
        pairs = [(t, p) for t in cand_t for p in cand_p][:beams_per_round]
        theta, phi = max(pairs, key=lambda tp: rss(*tp))
        w_tx /= 2
        w_rx /= 2
    return theta, phi
