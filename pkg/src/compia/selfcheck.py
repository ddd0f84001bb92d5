"""Fast self-contained invariant checks behind the selftest command.

Each check re-derives its expectation independently of the module it
exercises (inline formulas, brute-force evaluation, small enumerations),
so a corrupted constant or dictionary shows up as a failure here.
"""

from __future__ import annotations

import numpy as np

from .channel import (ArrayGeometry, burst_couplings, cfo_phase_diag,
                      steering_vector, synthesize_capture)
from .codebook import (beam_pair_schedule, invert_burst_index,
                       pseudorandom_codebook)
from .config import (ChannelRealization, FrameConfig, SyncState,
                     derive_stream, validate_config)
from .detection import pss_correlate
from .theory import (GUMBEL_SCALE_FACTOR, baseband_op_counts,
                     compressive_to_dia_op_ratio, csirs_per_period,
                     fisher_information, mean_csirs_wait, snr_degradation,
                     threshold_adjustment)
from .training import (build_dictionaries, estimate_burst_gains,
                       estimate_delay, los_model, matching_pursuit,
                       rearrange_bursts)
from .waveform import delayed_pss, zadoff_chu

SMALL = FrameConfig(P=32, M=8, N_B=128, N_CP=8, N_c=4, T_s=1.0 / 57.6e6,
                    T_SS=1e-3, eps_T_max=64)


def check_config_validation():
    validate_config(FrameConfig())
    for bad, msg in [
        (FrameConfig(N_CP=4, N_c=4), "CP"),
        (FrameConfig(eps_T_max=2048), "window"),
    ]:
        try:
            validate_config(bad)
        except ValueError as e:
            assert msg.lower() in str(e).lower()
        else:
            raise AssertionError("invalid config accepted")


def check_rng_streams():
    a = derive_stream(7, "noise", 0).generator().standard_normal(4)
    b = derive_stream(7, "noise", 0).generator().standard_normal(4)
    c = derive_stream(7, "noise", 1).generator().standard_normal(4)
    d = derive_stream(7, "beams", 0).generator().standard_normal(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def check_sync_sequence():
    pss = zadoff_chu(25, 128)
    assert np.allclose(np.abs(pss.s_time), 1.0, atol=1e-12)
    assert np.allclose(np.abs(pss.s_freq), 1.0, atol=1e-12)
    # brute-force circular autocorrelation
    for lag in (0, 1, 37):
        val = np.vdot(np.roll(pss.s_time, lag), pss.s_time)
        expect = 128.0 if lag == 0 else 0.0
        assert abs(val - expect) < 1e-9


def check_delay_atoms():
    cfg = SMALL
    pss = zadoff_chu(5, cfg.P)
    atom0 = delayed_pss(0.0, cfg, pss)
    assert np.allclose(atom0, pss.s_time, atol=1e-12)
    atom2 = delayed_pss(2 * cfg.T_s, cfg, pss)
    assert np.allclose(atom2, np.roll(pss.s_time, 2), atol=1e-9)
    assert abs(np.vdot(atom2, atom2).real - cfg.P) < 1e-9


def check_steering_and_cfo():
    geom = ArrayGeometry(16)
    for ang in (-1.1, 0.0, 0.7):
        a = steering_vector(geom, ang)
        assert abs(np.vdot(a, a).real - geom.N) < 1e-12
    assert np.allclose(cfo_phase_diag(0.0, 8), np.ones(8))
    assert np.allclose(cfo_phase_diag(2 * np.pi, 8), np.ones(8), atol=1e-9)


def check_codebooks():
    rng = np.random.default_rng(3)
    cb = pseudorandom_codebook(32, 16, rng)
    vals = np.unique(np.round(cb.beams * np.sqrt(32), 9))
    assert len(vals) <= 4
    assert np.allclose(np.linalg.norm(cb.beams, axis=1), 1.0, atol=1e-12)
    sched = beam_pair_schedule(16, 4)
    for m, (t, r) in enumerate(sched):
        assert invert_burst_index(m, 16) == (t, r)


def check_threshold_factor():
    # independent recomputation of the unknown-timing adjustment from the
    # Gumbel location/scale construction
    from scipy.special import ndtri

    p_fa, win = 0.01, 1024
    a = -float(ndtri(1.0 / win))
    scale = float(np.sqrt(6.0) / np.pi)
    expect = a - scale * np.log(-np.log(1 - p_fa)) / a
    got = threshold_adjustment("NT", p_fa, win)
    assert abs(got - expect) < 1e-12, "timing-search threshold factor drifted"
    assert abs(GUMBEL_SCALE_FACTOR - scale) < 1e-15


def check_snr_degradation():
    cfg = FrameConfig()
    assert snr_degradation(0, 0.0, cfg) == 1.0
    assert snr_degradation(170, 0.0, cfg) == 1.0
    eps = 2 * np.pi * cfg.T_s * 5e-6 * 28e9
    for eps_T in (0, 170, 900, 960, 1000):
        k = snr_degradation(eps_T, eps, cfg)
        assert 0.0 < k <= 1.0


def check_dictionary_consistency():
    cfg = SMALL
    pss = zadoff_chu(5, cfg.P)
    rng = np.random.default_rng(11)
    cb_tx = pseudorandom_codebook(16, cfg.M, rng)
    cb_rx = pseudorandom_codebook(8, cfg.M, rng)
    dicts = build_dictionaries(cfg, cb_tx, cb_rx, pss, G_d=50)
    # unmap/remap bijection over every flat index
    for k in range(dicts.G_R * dicts.G_T):
        k_rx, k_tx = divmod(k, dicts.G_T)
        assert k_rx * dicts.G_T + k_tx == k
    # random atoms match the direct per-burst coupling product
    geom_tx, geom_rx = ArrayGeometry(16), ArrayGeometry(8)
    for k in rng.integers(0, dicts.G_R * dicts.G_T, size=5):
        k_rx, k_tx = divmod(int(k), dicts.G_T)
        direct = ((cb_rx.beams.conj() @ steering_vector(geom_rx, dicts.aoa_grid[k_rx]))
                  * (cb_tx.beams @ steering_vector(geom_tx, dicts.aod_grid[k_tx]).conj()))
        assert np.allclose(dicts.atom(k_rx, k_tx), direct, atol=1e-10), \
            "angle dictionary disagrees with direct coupling evaluation"


def check_noiseless_pipeline():
    cfg = SMALL
    pss = zadoff_chu(5, cfg.P)
    rng = np.random.default_rng(4)
    cb_tx = pseudorandom_codebook(16, cfg.M, rng)
    cb_rx = pseudorandom_codebook(8, cfg.M, rng)
    dicts = build_dictionaries(cfg, cb_tx, cb_rx, pss, G_d=cfg.N_c * 4)
    theta = float(dicts.aod_grid[20])
    phi = float(dicts.aoa_grid[5])
    tau = float(dicts.delay_grid[7])
    chan = ChannelRealization(gains=np.array([1.0 + 0.3j]), aod=[theta],
                              aoa=[phi], delays=[tau], sigma_n2=0.0)
    cap = synthesize_capture(cfg, chan, cb_tx, cb_rx, SyncState(eps_T=5),
                             np.random.default_rng(0), pss=pss)
    Y = rearrange_bursts(cap, 5, cfg)
    q_hat, tau_hat = estimate_delay(Y, dicts)
    assert abs(tau_hat - tau) < 1e-15
    g_hat = estimate_burst_gains(Y, q_hat, dicts)
    mp = matching_pursuit(g_hat, dicts, cfg)
    assert mp.theta_hat == theta and mp.phi_hat == phi
    # global phase invariance of the pursuit
    mp2 = matching_pursuit(g_hat * np.exp(1j * 1.234), dicts, cfg)
    assert (mp2.k_rx, mp2.k_tx) == (mp.k_rx, mp.k_tx)


def check_model_matches_capture():
    cfg = SMALL
    pss = zadoff_chu(5, cfg.P)
    rng = np.random.default_rng(9)
    cb_tx = pseudorandom_codebook(16, cfg.M, rng)
    cb_rx = pseudorandom_codebook(8, cfg.M, rng)
    xi = np.array([0.003, 0.4, -0.2, 1.7e-8, 0.8, -0.5])
    chan = ChannelRealization(gains=np.array([xi[4] + 1j * xi[5]]),
                              aod=[xi[1]], aoa=[xi[2]], delays=[xi[3]],
                              sigma_n2=0.0)
    sync = SyncState(eps_T=3, eps_F=xi[0])
    cap = synthesize_capture(cfg, chan, cb_tx, cb_rx, sync,
                             np.random.default_rng(0), pss=pss)
    Y = rearrange_bursts(cap, 3, cfg)
    model = los_model(xi, cfg, cb_tx, cb_rx, pss)
    # capture carries an extra constant phase from its absolute position
    extra = np.exp(1j * xi[0] * (3 + cfg.N_CP))
    assert np.max(np.abs(Y - model * extra)) < 1e-9


def check_fim_basics():
    cfg = SMALL
    pss = zadoff_chu(5, cfg.P)
    rng = np.random.default_rng(2)
    cb_tx = pseudorandom_codebook(16, cfg.M, rng)
    cb_rx = pseudorandom_codebook(8, cfg.M, rng)
    xi = np.array([0.002, 0.3, -0.6, 2.1e-8, 1.0, 0.4])
    J, phi = fisher_information(xi, cfg, cb_tx, cb_rx, 0.5, pss)
    assert np.allclose(J, J.T, atol=1e-9)
    eig = np.linalg.eigvalsh(J)
    assert eig.min() > -1e-6 * eig.max()
    # unit-norm delayed atom identity behind the diagonal gain entry
    alpha_alpha = phi[4, 4]
    unit_chan = ChannelRealization(gains=np.array([1.0]), aod=[xi[1]],
                                   aoa=[xi[2]], delays=[xi[3]], sigma_n2=1.0)
    direct = np.sum(np.abs(burst_couplings(
        unit_chan, cb_tx, cb_rx, ArrayGeometry(16), ArrayGeometry(8))) ** 2) * cfg.P
    assert abs(alpha_alpha - direct) / direct < 1e-9


def check_latency_model():
    cfg = FrameConfig()
    t_r = 2e-3
    k_r = csirs_per_period(cfg, t_r)
    for n_ue in (1, 2, 5, 9, 17):
        # brute-force grant enumeration
        times = []
        for i in range(1, n_ue + 1):
            f = (i - 1) // k_r
            q = i - f * k_r
            times.append(f * cfg.T_SS + q * t_r)
        expect = float(np.mean(times))
        got = mean_csirs_wait(n_ue, k_r, cfg.T_SS, t_r)
        assert abs(got - expect) < 1e-12


def check_complexity():
    cfg = FrameConfig()
    counts = baseband_op_counts(cfg, 500, 256, 64)
    assert counts["pss_correlation"] == 131072
    assert all(isinstance(v, int) and v >= 0 for v in counts.values())
    ratio = compressive_to_dia_op_ratio(cfg, 500, 2 * 64, 2 * 16)
    assert abs(ratio - 7.2) <= 0.5


def check_correlation_origin():
    cfg = SMALL
    pss = zadoff_chu(5, cfg.P)
    y = np.zeros(cfg.P * 3, dtype=complex)
    y[5: 5 + cfg.P] = pss.s_time
    corr = pss_correlate(y, pss)
    assert np.argmax(np.abs(corr)) == 5
    assert abs(corr[5] - 1.0) < 1e-12


ALL_CHECKS = [
    ("config validation", check_config_validation),
    ("rng substreams", check_rng_streams),
    ("sync sequence", check_sync_sequence),
    ("delay atoms", check_delay_atoms),
    ("steering and cfo phases", check_steering_and_cfo),
    ("codebooks and schedule", check_codebooks),
    ("threshold adjustment factor", check_threshold_factor),
    ("snr degradation factor", check_snr_degradation),
    ("dictionary consistency", check_dictionary_consistency),
    ("correlation index origin", check_correlation_origin),
    ("noiseless pipeline recovery", check_noiseless_pipeline),
    ("model matches synthesized capture", check_model_matches_capture),
    ("fisher information basics", check_fim_basics),
    ("latency scheduling model", check_latency_model),
    ("complexity counts", check_complexity),
]


def run_all(verbose: bool = True) -> tuple[bool, list[str]]:
    lines = []
    ok = True
    for name, fn in ALL_CHECKS:
        try:
            fn()
            lines.append(f"PASS {name}")
        except Exception as exc:  # noqa: BLE001 - report any failure kind
            ok = False
            lines.append(f"FAIL {name}: {exc}")
    if verbose:
        for line in lines:
            print(line)
    return ok, lines
