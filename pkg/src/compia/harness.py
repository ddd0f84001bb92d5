"""Monte Carlo experiment runner for the discovery, training, and
latency/overhead sweeps.

Determinism contract: every trial draws from substreams keyed by
(master_seed, "<what>/<sweep-point>", trial_index), so results are a
pure function of (scenario, master_seed) and identical for any worker
count or evaluation order.  Reductions iterate trials in index order.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict, replace

import numpy as np

from .channel import ArrayGeometry, synthesize_capture, draw_channel
from .codebook import pseudorandom_codebook, sector_sounding_codebooks
from .config import (FrameConfig, SyncState, default_frame_config,
                     derive_stream, validate_config)
from .detection import pss_correlate, window_energies
from .theory import (AccessModel, access_latency, crlb_angles,
                     detection_threshold, miss_detection_rate, overhead_ratio)
from .training import (RefineOptions, TrainingEstimate, build_dictionaries,
                       estimate_burst_gains, estimate_delay, los_model,
                       matching_pursuit, refine_estimate)
from .waveform import PssSequence, zadoff_chu

__all__ = [
    "Scenario",
    "ResultRow",
    "scenario_from_dict",
    "wilson_interval",
    "run_discovery_sweep",
    "run_training_sweep",
    "run_latency_overhead",
    "selftest",
]

DEFAULT_ZC_ROOT = 25


@dataclass(frozen=True)
class Scenario:
    """Everything one reproducible experiment depends on."""

    cfg: FrameConfig = field(default_factory=default_frame_config)
    n_tx: int = 128
    n_rx: int = 32
    L: int = 2
    scheme: str = "compressive"          # "compressive" | "dia"
    modes: tuple = ("PT", "NT", "NT+CFO")
    delta_f_ppm: float = 5.0             # CFO magnitude used by *+CFO modes
    carrier_hz: float = 28e9
    eps_T: int = 170
    snr_db: tuple = tuple(np.arange(-25.0, 0.1, 2.5))
    trials: int = 2000
    master_seed: int = 20260809
    p_fa: float = 0.01
    M_tx: int = 16
    M_rx: int = 4
    G_d: int = 500
    delay_grid: str = "sample"
    # training sweep
    array_pairs: tuple = ((32, 8), (128, 32))
    train_angle_limit: float = np.pi / 3
    train_snr_db: tuple = (-10.0, -5.0, 0.0, 5.0, 10.0)
    train_trials: int = 500
    # latency/overhead sweep
    n_ue_list: tuple = (1, 2, 5, 10, 20, 40, 80)
    t_r_period: float = 18e-3            # reference-slot period (one slot/period)
    t_r_duration: float = 17.78e-6
    b_tot: float = 400e6
    p_md_input: float = 0.04
    dia_n_train: tuple = (1, 2)
    dia_cal_trials: int = 4000
    threads: int = 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cfg"] = self.cfg.to_dict()
        for key, value in list(d.items()):
            if isinstance(value, tuple):
                d[key] = list(value)
        return d

    def eps_F_for(self, mode: str) -> float:
        if mode.endswith("+CFO"):
            return 2.0 * np.pi * self.cfg.T_s * self.delta_f_ppm * 1e-6 * self.carrier_hz
        return 0.0

    def base_mode(self, mode: str) -> str:
        return mode.split("+", 1)[0].upper()


def scenario_from_dict(mapping: dict) -> Scenario:
    """Build a Scenario from a flat key-value mapping (config file)."""
    from .config import frame_config_from_dict

    cfg_keys = {"P", "M", "N_B", "N_CP", "N_c", "T_s", "T_SS", "eps_T_max"}
    cfg = frame_config_from_dict({k: v for k, v in mapping.items() if k in cfg_keys})
    kwargs = {}
    names = {f.name for f in Scenario.__dataclass_fields__.values()} - {"cfg"}
    for key, value in mapping.items():
        if key in cfg_keys:
            continue
        if key not in names:
            raise ValueError(f"unknown scenario key: {key}")
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    return Scenario(cfg=cfg, **kwargs)


@dataclass(frozen=True)
class ResultRow:
    """One (sweep value, metric) cell of a results table."""

    sweep: float
    metric: str
    sim: float
    theory: float | None
    trials: int
    ci95: float

    def validate(self) -> "ResultRow":
        if self.metric.startswith(("p_md", "p_fa")) and not 0.0 <= self.sim <= 1.0:
            raise ValueError("probability metric outside [0, 1]")
        if self.metric.startswith("rmse") and self.sim < 0:
            raise ValueError("rmse metric must be non-negative")
        return self


def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("need at least one trial")
    p = k / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return center - half, center + half


# ---------------------------------------------------------------------------
# Discovery sweep
# ---------------------------------------------------------------------------

def _pt_statistics(y_batch: np.ndarray, cfg: FrameConfig, pss: PssSequence) -> np.ndarray:
    """Genie-timing energy statistics for a (B, n) capture batch.

    Only the M*N_c correlation lags entering the statistic are computed,
    via direct windowed dot products.
    """
    starts = (cfg.N_CP + cfg.N_B * np.arange(cfg.M)[:, None]
              + np.arange(cfg.N_c)[None, :]).ravel()
    idx = starts[:, None] + np.arange(cfg.P)[None, :]
    windows = y_batch[..., idx]                       # (B, M*N_c, P)
    vals = windows @ np.conj(pss.s_time) / cfg.P
    return np.sum(np.abs(vals) ** 2, axis=-1) / cfg.M


def _discovery_chunk(scenario: Scenario, mode: str, snr_db: float,
                     trial_lo: int, trial_hi: int, batch: int = 32) -> dict:
    """Counts of misses/detections for one contiguous trial range."""
    cfg = scenario.cfg
    pss = zadoff_chu(DEFAULT_ZC_ROOT, cfg.P)
    snr = 10.0 ** (snr_db / 10.0)
    sigma_n2 = 1.0
    base = scenario.base_mode(mode)
    eps_F = scenario.eps_F_for(mode)
    eps_T = 0 if base == "PT" else scenario.eps_T
    sync = SyncState(eps_T=eps_T, eps_F=eps_F)
    eta = detection_threshold(cfg, sigma_n2, scenario.p_fa, base)
    tag = f"{mode}/snr={float(snr_db)!r}"

    misses = 0
    for lo in range(trial_lo, trial_hi, batch):
        hi = min(lo + batch, trial_hi)
        caps = np.empty((hi - lo, cfg.n_capture), dtype=np.complex128)
        for i, t in enumerate(range(lo, hi)):
            rng_cb = derive_stream(scenario.master_seed, f"cb/{tag}", t).generator()
            cb_tx = pseudorandom_codebook(scenario.n_tx, cfg.M, rng_cb)
            cb_rx = pseudorandom_codebook(scenario.n_rx, cfg.M, rng_cb)
            rng_ch = derive_stream(scenario.master_seed, f"chan/{tag}", t).generator()
            chan = draw_channel(cfg, scenario.L, sigma_g2=snr, sigma_n2=sigma_n2,
                                rng=rng_ch, delay_grid=scenario.delay_grid)
            rng_n = derive_stream(scenario.master_seed, f"noise/{tag}", t).generator()
            caps[i] = synthesize_capture(cfg, chan, cb_tx, cb_rx, sync, rng_n,
                                         pss=pss).y
        if base == "PT":
            gammas = _pt_statistics(caps, cfg, pss)
            misses += int(np.sum(gammas < eta))
        else:
            corr = pss_correlate(caps, pss)
            windows = window_energies(corr, cfg)
            eps_hat = np.argmax(windows, axis=-1)
            gammas = np.max(windows, axis=-1)
            # a miss is a negative decision or a wrong timing estimate
            misses += int(np.sum((gammas < eta) | (eps_hat != eps_T)))
    return {"misses": misses, "trials": trial_hi - trial_lo}


def _noise_only_chunk(scenario: Scenario, mode: str, trial_lo: int, trial_hi: int,
                      batch: int = 32) -> dict:
    """False alarms of the thresholded detector on noise-only captures."""
    cfg = scenario.cfg
    pss = zadoff_chu(DEFAULT_ZC_ROOT, cfg.P)
    base = scenario.base_mode(mode)
    eta = detection_threshold(cfg, 1.0, scenario.p_fa, base)
    tag = f"fa-{mode}"
    alarms = 0
    for lo in range(trial_lo, trial_hi, batch):
        hi = min(lo + batch, trial_hi)
        caps = np.empty((hi - lo, cfg.n_capture), dtype=np.complex128)
        for i, t in enumerate(range(lo, hi)):
            rng = derive_stream(scenario.master_seed, f"noise/{tag}", t).generator()
            caps[i] = synthesize_capture(cfg, None, None, None,
                                         SyncState(), rng).y
        if base == "PT":
            gammas = _pt_statistics(caps, cfg, pss)
        else:
            corr = pss_correlate(caps, pss)
            gammas = np.max(window_energies(corr, cfg), axis=-1)
        alarms += int(np.sum(gammas >= eta))
    return {"alarms": alarms, "trials": trial_hi - trial_lo}


def _dia_statistics(caps: np.ndarray, cfg: FrameConfig, pss: PssSequence) -> np.ndarray:
    corr = pss_correlate(caps, pss)
    return np.max(np.abs(corr) ** 2, axis=-1)


def _dia_threshold(scenario: Scenario, pss: PssSequence) -> float:
    """Noise-only Monte Carlo calibration of the directional threshold.

    The null statistic scales linearly with the noise power, so the
    quantile is calibrated once at unit noise power.
    """
    cfg = scenario.cfg
    stats = np.empty(scenario.dia_cal_trials)
    batch = 32
    for lo in range(0, scenario.dia_cal_trials, batch):
        hi = min(lo + batch, scenario.dia_cal_trials)
        caps = np.empty((hi - lo, cfg.n_capture), dtype=np.complex128)
        for i, t in enumerate(range(lo, hi)):
            rng = derive_stream(scenario.master_seed, "dia-cal", t).generator()
            caps[i] = synthesize_capture(cfg, None, None, None, SyncState(), rng).y
        stats[lo:hi] = _dia_statistics(caps, cfg, pss)
    return float(np.quantile(stats, 1.0 - scenario.p_fa))


def _dia_chunk(scenario: Scenario, snr_db: float, eta: float,
               trial_lo: int, trial_hi: int, batch: int = 32) -> dict:
    cfg = scenario.cfg
    pss = zadoff_chu(DEFAULT_ZC_ROOT, cfg.P)
    snr = 10.0 ** (snr_db / 10.0)
    sync = SyncState(eps_T=scenario.eps_T, eps_F=0.0)
    tag = f"dia/snr={float(snr_db)!r}"
    misses = 0
    cb_tx, cb_rx = sector_sounding_codebooks(scenario.n_tx, scenario.n_rx,
                                             scenario.M_tx, scenario.M_rx)
    for lo in range(trial_lo, trial_hi, batch):
        hi = min(lo + batch, trial_hi)
        caps = np.empty((hi - lo, cfg.n_capture), dtype=np.complex128)
        for i, t in enumerate(range(lo, hi)):
            rng_ch = derive_stream(scenario.master_seed, f"chan/{tag}", t).generator()
            chan = draw_channel(cfg, scenario.L, sigma_g2=snr, sigma_n2=1.0,
                                rng=rng_ch, delay_grid=scenario.delay_grid)
            rng_n = derive_stream(scenario.master_seed, f"noise/{tag}", t).generator()
            caps[i] = synthesize_capture(cfg, chan, cb_tx, cb_rx, sync, rng_n,
                                         pss=pss).y
        gammas = _dia_statistics(caps, cfg, pss)
        misses += int(np.sum(gammas < eta))
    return {"misses": misses, "trials": trial_hi - trial_lo}


def _run_chunks(fn, args_list, threads: int):
    """Run chunk jobs in order, optionally across processes."""
    if threads <= 1:
        return [fn(*args) for args in args_list]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, *args) for args in args_list]
        return [f.result() for f in futures]


def _chunk_ranges(total: int, chunks: int) -> list[tuple[int, int]]:
    size = max(1, math.ceil(total / chunks))
    return [(lo, min(lo + size, total)) for lo in range(0, total, size)]


def run_discovery_sweep(scenario: Scenario) -> list[ResultRow]:
    """Miss-detection rate versus SNR, simulated and closed form.

    The compressive scheme runs every mode in scenario.modes (timing
    misses count as missed detections when timing is unknown); the
    directional scheme sweeps the same SNRs against its calibrated
    threshold.  Rows carry the trial count and a 95% Wilson half-width.
    """
    rows: list[ResultRow] = []
    n_chunks = max(1, scenario.threads)
    if scenario.scheme == "compressive":
        for mode in scenario.modes:
            base = scenario.base_mode(mode)
            eps_F = scenario.eps_F_for(mode)
            eps_T = 0 if base == "PT" else scenario.eps_T
            for snr_db in scenario.snr_db:
                args = [(scenario, mode, snr_db, lo, hi)
                        for lo, hi in _chunk_ranges(scenario.trials, n_chunks)]
                parts = _run_chunks(_discovery_chunk, args, scenario.threads)
                misses = sum(p["misses"] for p in parts)
                theo = miss_detection_rate(scenario.cfg, 10.0 ** (snr_db / 10.0),
                                           scenario.p_fa, base,
                                           eps_T=eps_T, eps_F=eps_F)
                lo_w, hi_w = wilson_interval(misses, scenario.trials)
                rows.append(ResultRow(
                    sweep=float(snr_db), metric=f"p_md_{mode}",
                    sim=misses / scenario.trials, theory=theo,
                    trials=scenario.trials, ci95=(hi_w - lo_w) / 2).validate())
    elif scenario.scheme == "dia":
        pss = zadoff_chu(DEFAULT_ZC_ROOT, scenario.cfg.P)
        eta = _dia_threshold(scenario, pss)
        for snr_db in scenario.snr_db:
            args = [(scenario, snr_db, eta, lo, hi)
                    for lo, hi in _chunk_ranges(scenario.trials, n_chunks)]
            parts = _run_chunks(_dia_chunk, args, scenario.threads)
            misses = sum(p["misses"] for p in parts)
            lo_w, hi_w = wilson_interval(misses, scenario.trials)
            rows.append(ResultRow(
                sweep=float(snr_db), metric="p_md_DIA",
                sim=misses / scenario.trials, theory=None,
                trials=scenario.trials, ci95=(hi_w - lo_w) / 2).validate())
    else:
        raise ValueError("scheme must be 'compressive' or 'dia'")
    return rows


def run_false_alarm_check(scenario: Scenario, trials: int = 10000) -> list[ResultRow]:
    """Empirical false-alarm rate of both detectors at the target rate."""
    rows = []
    n_chunks = max(1, scenario.threads)
    for mode in ("PT", "NT"):
        args = [(scenario, mode, lo, hi)
                for lo, hi in _chunk_ranges(trials, n_chunks)]
        parts = _run_chunks(_noise_only_chunk, args, scenario.threads)
        alarms = sum(p["alarms"] for p in parts)
        lo_w, hi_w = wilson_interval(alarms, trials)
        rows.append(ResultRow(sweep=0.0, metric=f"p_fa_{mode}",
                              sim=alarms / trials, theory=scenario.p_fa,
                              trials=trials, ci95=(hi_w - lo_w) / 2).validate())
    return rows


# ---------------------------------------------------------------------------
# Training sweep (RMSE vs CRLB)
# ---------------------------------------------------------------------------

def _synthesize_bursts(cfg: FrameConfig, xi_true: np.ndarray, cb_tx, cb_rx,
                       pss: PssSequence, sigma_n2: float,
                       rng: np.random.Generator) -> np.ndarray:
    """Noisy rearranged burst matrix straight from the single-path model.

    Equivalent to synthesizing a full capture and rearranging at the
    true timing offset (verified against that route in tests) and used
    by the training sweep, which assumes acquired timing.
    """
    x = los_model(xi_true, cfg, cb_tx, cb_rx, pss)
    noise = rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape)
    return x + np.sqrt(sigma_n2 / 2.0) * noise


def _training_chunk(scenario: Scenario, n_tx: int, n_rx: int, snr_db: float,
                    trial_lo: int, trial_hi: int) -> dict:
    cfg = scenario.cfg
    pss = zadoff_chu(DEFAULT_ZC_ROOT, cfg.P)
    snr = 10.0 ** (snr_db / 10.0)
    sigma_n2 = 1.0
    eps_F = scenario.eps_F_for("NT+CFO")
    tag = f"train/{n_tx}x{n_rx}/snr={float(snr_db)!r}"
    lim = scenario.train_angle_limit
    opts = RefineOptions(eps_f_bound=1.05 * abs(eps_F) + 2 * np.pi / cfg.N_B)

    sq_coarse = np.zeros((trial_hi - trial_lo, 2))
    sq_refined = np.zeros((trial_hi - trial_lo, 2))
    crlbs = np.zeros((trial_hi - trial_lo, 2))
    for i, t in enumerate(range(trial_lo, trial_hi)):
        rng_cb = derive_stream(scenario.master_seed, f"cb/{tag}", t).generator()
        cb_tx = pseudorandom_codebook(n_tx, cfg.M, rng_cb)
        cb_rx = pseudorandom_codebook(n_rx, cfg.M, rng_cb)
        rng_ch = derive_stream(scenario.master_seed, f"chan/{tag}", t).generator()
        theta = rng_ch.uniform(-lim, lim)
        phi = rng_ch.uniform(-lim, lim)
        tau = rng_ch.uniform(0.0, cfg.N_c * cfg.T_s)
        gain = np.sqrt(snr) * np.exp(1j * rng_ch.uniform(0, 2 * np.pi))
        xi_true = np.array([eps_F, theta, phi, tau, gain.real, gain.imag])

        rng_n = derive_stream(scenario.master_seed, f"noise/{tag}", t).generator()
        Y = _synthesize_bursts(cfg, xi_true, cb_tx, cb_rx, pss, sigma_n2, rng_n)

        dicts = build_dictionaries(cfg, cb_tx, cb_rx, pss, G_d=scenario.G_d)
        q_hat, tau_hat = estimate_delay(Y, dicts)
        g_hat = estimate_burst_gains(Y, q_hat, dicts)
        mp = matching_pursuit(g_hat, dicts, cfg)
        coarse = TrainingEstimate(theta_hat=mp.theta_hat, phi_hat=mp.phi_hat,
                                  tau_hat=tau_hat, g_hat=0j,
                                  eps_F_hat=mp.eps_F_hat)
        est = refine_estimate(Y, coarse, cfg, cb_tx, cb_rx, pss, opts)

        sq_coarse[i] = [(mp.theta_hat - theta) ** 2, (mp.phi_hat - phi) ** 2]
        sq_refined[i] = [(est.theta_hat - theta) ** 2, (est.phi_hat - phi) ** 2]
        crlbs[i] = crlb_angles(xi_true, cfg, cb_tx, cb_rx, sigma_n2, pss)
    return {"sq_coarse": sq_coarse, "sq_refined": sq_refined, "crlbs": crlbs}


def run_training_sweep(scenario: Scenario) -> list[ResultRow]:
    """Angle-estimation RMSE (coarse and refined) against the CRLB.

    LOS draws with acquired timing; per-trial CRLBs use the same
    codebook realization as the estimator. Rows cover every array pair
    in scenario.array_pairs.
    """
    rows: list[ResultRow] = []
    n_chunks = max(1, scenario.threads)
    for (n_tx, n_rx) in scenario.array_pairs:
        for snr_db in scenario.train_snr_db:
            args = [(scenario, n_tx, n_rx, snr_db, lo, hi)
                    for lo, hi in _chunk_ranges(scenario.train_trials, n_chunks)]
            parts = _run_chunks(_training_chunk, args, scenario.threads)
            sq_coarse = np.concatenate([p["sq_coarse"] for p in parts])
            sq_refined = np.concatenate([p["sq_refined"] for p in parts])
            crlbs = np.concatenate([p["crlbs"] for p in parts])
            n = len(sq_coarse)
            for j, angle in enumerate(("aod", "aoa")):
                crlb_rmse = float(np.sqrt(np.mean(crlbs[:, j])))
                for stage, sq in (("coarse", sq_coarse), ("refined", sq_refined)):
                    rmse = float(np.sqrt(np.mean(sq[:, j])))
                    # delta-method half-width of the RMSE
                    ci = 1.96 * float(np.std(sq[:, j])) / (2 * max(rmse, 1e-300) * np.sqrt(n))
                    rows.append(ResultRow(
                        sweep=float(snr_db),
                        metric=f"rmse_{angle}_{stage}_{n_tx}x{n_rx}",
                        sim=rmse,
                        theory=crlb_rmse if stage == "refined" else None,
                        trials=n, ci95=ci).validate())
    return rows


# ---------------------------------------------------------------------------
# Latency / overhead sweep
# ---------------------------------------------------------------------------

def run_latency_overhead(scenario: Scenario) -> list[ResultRow]:
    """Access latency and overhead versus the number of served users.

    The compressive scheme needs no scheduled refinement slots; the
    directional benchmark is evaluated for every n_train in
    scenario.dia_n_train.
    """
    rows: list[ResultRow] = []
    cfg = scenario.cfg
    schemes = [("compressive", 0)] + [("dia", k) for k in scenario.dia_n_train]
    for name, n_train in schemes:
        for n_ue in scenario.n_ue_list:
            model = AccessModel(n_ue=n_ue, T_R=scenario.t_r_period,
                                T_r=scenario.t_r_duration, n_train=n_train,
                                b_tot=scenario.b_tot, p_md=scenario.p_md_input)
            lat = access_latency(model, cfg)
            oh = overhead_ratio(model, cfg)
            label = name if n_train == 0 else f"{name}{n_train}"
            rows.append(ResultRow(sweep=float(n_ue), metric=f"latency_{label}",
                                  sim=lat, theory=None, trials=1, ci95=0.0))
            rows.append(ResultRow(sweep=float(n_ue), metric=f"overhead_{label}",
                                  sim=oh, theory=None, trials=1, ci95=0.0))
    return rows


# ---------------------------------------------------------------------------
# Self test
# ---------------------------------------------------------------------------

def selftest(verbose: bool = True) -> tuple[bool, list[str]]:
    """Fast invariant checks across all modules; True when all pass."""
    from . import selfcheck

    return selfcheck.run_all(verbose=verbose)
