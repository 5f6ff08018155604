"""Matched filter, thresholding, figures of merit, and Wigner tests."""

import math

import numpy as np
import pytest
from scipy.linalg import expm

from jtwpd.conveyor import EnsembleResult, TrajectoryRecord
from jtwpd.detection import (
    DetectionReport,
    assignment_report,
    build_filter,
    filtered_series,
    filtered_signal,
    load_roc,
    optimize_threshold,
    roc_curve,
    save_roc,
    score_records,
    wigner,
)
from jtwpd.errors import ConfigError


def make_record(j, dt=0.01, failed=False):
    j = np.asarray(j, dtype=float)
    n = len(j)
    z = np.zeros(n)
    return TrajectoryRecord(
        t=np.arange(n) * dt,
        y_mean=z,
        y_var=z,
        x_mean=z,
        j_hom=j,
        seed=0,
        discarded_weight=0.0,
        config_hash="test",
        snapshots=[],
        failed=failed,
        error=None,
    )


def make_ensemble(mean_y, dt=0.01):
    mean_y = np.asarray(mean_y, dtype=float)
    n = len(mean_y)
    return EnsembleResult(
        t=np.arange(n) * dt,
        mean_y=mean_y,
        var_y=np.zeros(n),
        mean_x=np.zeros(n),
        n_traj=1,
        n_failed=0,
        base_seed=0,
        config_hash="test",
        records=[],
    )


# -- filter --------------------------------------------------------------------


def test_constant_mean_gives_uniform_normalized_filter():
    ens = make_ensemble(np.full(101, 3.0))
    filt = build_filter(ens, tau_m=1.0)
    assert np.allclose(filt.f, filt.f[0])
    assert np.sum(filt.f**2) * filt.dt == pytest.approx(1.0)


def test_filter_normalization_any_shape():
    rng = np.random.default_rng(0)
    ens = make_ensemble(rng.normal(size=120))
    filt = build_filter(ens, tau_m=0.8)
    assert np.sum(filt.f**2) * filt.dt == pytest.approx(1.0)
    assert filt.t[-1] <= 0.8 + 1e-9


def test_degenerate_filter_rejected():
    ens = make_ensemble(np.zeros(50))
    with pytest.raises(ConfigError):
        build_filter(ens, tau_m=0.3)
    with pytest.raises(ConfigError):
        build_filter(make_ensemble(np.ones(50)), tau_m=10.0)  # window too long


# -- filtered signal -----------------------------------------------------------


def test_zero_current_scores_zero():
    ens = make_ensemble(np.ones(101))
    filt = build_filter(ens, tau_m=1.0)
    assert filtered_signal(make_record(np.zeros(101)), filt) == 0.0


def test_single_bin_impulse_filter():
    mean = np.zeros(101)
    mean[7] = 5.0
    filt = build_filter(make_ensemble(mean), tau_m=1.0)
    j = np.arange(101.0)
    score = filtered_signal(make_record(j), filt)
    # only bin 7 contributes: f[7]*j[7]*dt with f[7] = 1/sqrt(dt)
    assert score == pytest.approx(filt.f[7] * 7.0 * filt.dt)


def test_vacuum_score_statistics_white_noise():
    """Unit-normalized filter => vacuum scores ~ N(0, 1)."""
    rng = np.random.default_rng(42)
    dt = 0.01
    n = 101
    filt = build_filter(make_ensemble(np.exp(-np.arange(n) * dt)), tau_m=1.0)
    scores = []
    for _ in range(4000):
        j = rng.normal(0.0, 1.0 / math.sqrt(dt), size=n)  # dW/dt white noise
        scores.append(filtered_signal(make_record(j), filt))
    scores = np.asarray(scores)
    assert abs(scores.mean()) < 0.06
    assert scores.var() == pytest.approx(1.0, rel=0.08)


def test_filtered_signal_window_checks():
    filt = build_filter(make_ensemble(np.ones(101)), tau_m=1.0)
    rec = make_record(np.ones(101))
    with pytest.raises(ConfigError):
        filtered_signal(rec, filt, t_eval=0.5)  # window runs past the record
    with pytest.raises(ConfigError):
        filtered_signal(rec, filt, t_eval=0.0033)  # off-grid evaluation time
    with pytest.raises(ConfigError):
        filtered_signal(make_record(np.ones(101), dt=0.02), filt)  # grid mismatch
    with pytest.raises(ConfigError):
        filtered_signal(make_record(np.ones(50)), filt)  # record too short


def test_filtered_series_and_maximize():
    mean = np.zeros(201)
    mean[:101] = 1.0
    filt = build_filter(make_ensemble(mean), tau_m=0.5)
    j = np.zeros(201)
    j[80:131] = 1.0  # burst aligned with t_eval = 0.8
    rec = make_record(j)
    ts, series = filtered_series(rec, filt)
    assert len(ts) == 201 - filt.n_samples + 1
    best = filtered_signal(rec, filt, maximize=True)
    assert best == pytest.approx(series.max())
    assert series.max() > filtered_signal(rec, filt, t_eval=0.0)


def test_score_records_skips_failed():
    filt = build_filter(make_ensemble(np.ones(101)), tau_m=1.0)
    recs = [make_record(np.ones(101)), make_record(np.ones(101), failed=True)]
    assert len(score_records(recs, filt)) == 1


def test_records_without_current_rejected():
    filt = build_filter(make_ensemble(np.ones(101)), tau_m=1.0)
    rec = make_record(np.ones(101))
    rec.j_hom = None
    with pytest.raises(ConfigError):
        filtered_signal(rec, filt)


# -- threshold / report ---------------------------------------------------------


def test_separated_sets_reach_unit_fidelity():
    thr = optimize_threshold([5.0, 6.0, 7.0], [0.0, 1.0])
    assert 1.0 < thr < 5.0
    rep = assignment_report([5.0, 6.0, 7.0], [0.0, 1.0], thr, 1.0)
    assert rep.fidelity == 1.0 and rep.eta == 1.0 and rep.p_dark == 0.0


def test_identical_distributions_give_half():
    s = list(np.linspace(-1, 1, 20))
    thr = optimize_threshold(s, s)
    rep = assignment_report(s, s, thr, 1.0)
    assert rep.fidelity == pytest.approx(0.5)


def test_optimizer_matches_exhaustive_oracle():
    rng = np.random.default_rng(17)
    s1 = rng.normal(1.0, 1.0, 150)
    s0 = rng.normal(0.0, 1.0, 130)
    thr = optimize_threshold(s1, s0)
    rep = assignment_report(s1, s0, thr, 1.0)
    pooled = np.concatenate([s1, s0])
    dense = np.linspace(pooled.min() - 1, pooled.max() + 1, 100001)
    brute = max(
        0.5 * (np.mean(s1 > t) + 1.0 - np.mean(s0 > t)) for t in dense
    )
    assert rep.fidelity == pytest.approx(brute, abs=1e-12)


def test_tie_break_prefers_lower_dark_counts():
    # two thresholds give F = 0.75; the higher one has p_dark = 0
    s1 = [1.0, 3.0]
    s0 = [0.0, 2.0]
    thr = optimize_threshold(s1, s0)
    rep = assignment_report(s1, s0, thr, 1.0)
    assert rep.fidelity == pytest.approx(0.75)
    assert rep.p_dark == 0.0


def test_fidelity_floor_random_data():
    rng = np.random.default_rng(3)
    s1 = rng.normal(size=400)
    s0 = rng.normal(size=400)
    rep = assignment_report(s1, s0, optimize_threshold(s1, s0), 1.0)
    assert rep.fidelity >= 0.5


def test_score_scaling_invariance():
    rng = np.random.default_rng(23)
    s1 = rng.normal(1.0, 1.0, 80)
    s0 = rng.normal(0.0, 1.0, 80)
    r1 = assignment_report(s1, s0, optimize_threshold(s1, s0), 1.0)
    c = 7.3
    r2 = assignment_report(c * s1, c * s0, optimize_threshold(c * s1, c * s0), 1.0)
    assert r1.fidelity == pytest.approx(r2.fidelity)
    assert r1.eta == pytest.approx(r2.eta)
    assert r1.p_dark == pytest.approx(r2.p_dark)


def test_report_arithmetic_and_stderr():
    s1 = [1.0] * 9 + [-1.0]  # eta = 0.9
    s0 = [-1.0] * 10  # p_dark = 0
    rep = assignment_report(s1, s0, 0.0, 2.5)
    assert rep.eta == pytest.approx(0.9)
    assert rep.fidelity == pytest.approx(0.95)
    assert rep.n_click_1 == 9 and rep.n_traj_1 == 10
    assert rep.stderr == pytest.approx(math.sqrt(0.95 * 0.05 / 10.0))
    # quoted example: F = 0.9, N = 2000 => stderr ~ 0.0067
    big = assignment_report([1.0] * 1600 + [-1.0] * 400, [-1.0] * 2000, 0.0, 1.0)
    assert big.fidelity == pytest.approx(0.9)
    assert big.stderr == pytest.approx(math.sqrt(0.09 / 2000.0), rel=1e-12)


def test_empty_sets_rejected():
    with pytest.raises(ConfigError):
        optimize_threshold([], [1.0])
    with pytest.raises(ConfigError):
        assignment_report([1.0], [], 0.0, 1.0)


def test_report_roundtrip(tmp_path):
    rep = assignment_report([1.0, 2.0], [-1.0, 0.2], 0.5, 3.0)
    path = tmp_path / "report.txt"
    rep.save(path)
    back = DetectionReport.load(path)
    assert back == rep


def test_roc_and_export(tmp_path):
    rng = np.random.default_rng(5)
    s1 = rng.normal(2.0, 1.0, 60)
    s0 = rng.normal(0.0, 1.0, 60)
    thr, eta, p_dark = roc_curve(s1, s0)
    assert np.all(np.diff(eta) <= 0) and np.all(np.diff(p_dark) <= 0)
    assert eta[0] == 1.0 and p_dark[0] == 1.0
    assert eta[-1] == 0.0 and p_dark[-1] == 0.0
    path = tmp_path / "roc.tsv"
    save_roc(path, thr, eta, p_dark)
    thr2, eta2, pd2 = load_roc(path)
    assert np.allclose(thr, thr2) and np.allclose(eta, eta2)
    assert np.allclose(p_dark, pd2)


# -- Wigner ----------------------------------------------------------------------


def fock_density(dim, weights):
    rho = np.zeros((dim, dim), dtype=complex)
    for k, w in weights.items():
        rho[k, k] = w
    return rho


def coherent_vec(alpha, dim):
    n = np.arange(dim)
    facts = np.array([math.factorial(int(k)) for k in n], dtype=float)
    v = alpha**n / np.sqrt(facts)
    v = v * math.exp(-abs(alpha) ** 2 / 2.0)
    return v / np.linalg.norm(v)


def test_wigner_vacuum():
    rho = fock_density(10, {0: 1.0})
    assert wigner(rho, [0.0], [0.0])[0, 0] == pytest.approx(1.0 / math.pi)
    x = np.linspace(-4, 4, 81)
    w = wigner(rho, x, x)
    ref = np.exp(-(x[None, :] ** 2 + x[:, None] ** 2)) / math.pi
    assert np.abs(w - ref).max() < 1e-12


def test_wigner_coherent_displacement_covariance():
    alpha = 0.9 - 0.4j
    v = coherent_vec(alpha, 18)
    rho = np.outer(v, v.conj())
    x = np.linspace(-6, 6, 241)
    w = wigner(rho, x, x)
    iy, ix = np.unravel_index(np.argmax(w), w.shape)
    assert x[ix] == pytest.approx(math.sqrt(2) * alpha.real, abs=0.06)
    assert x[iy] == pytest.approx(math.sqrt(2) * alpha.imag, abs=0.06)
    dx = x[1] - x[0]
    assert w.sum() * dx * dx == pytest.approx(1.0, abs=1e-6)


def test_wigner_matches_expm_oracle():
    dim_r, dim_o = 7, 50
    rng = np.random.default_rng(8)
    m = rng.normal(size=(dim_r, 3)) + 1j * rng.normal(size=(dim_r, 3))
    rho = m @ m.conj().T
    rho /= np.trace(rho).real
    a = np.diag(np.sqrt(np.arange(1, dim_o)), 1)
    parity = np.diag((-1.0) ** np.arange(dim_o))
    big = np.zeros((dim_o, dim_o), dtype=complex)
    big[:dim_r, :dim_r] = rho
    xg = np.linspace(-1.5, 1.5, 5)
    yg = np.linspace(-1.0, 1.0, 4)
    ref = np.zeros((len(yg), len(xg)))
    for iy, yv in enumerate(yg):
        for ix, xv in enumerate(xg):
            al = (xv + 1j * yv) / math.sqrt(2)
            d_op = expm(al * a.conj().T - np.conj(al) * a)
            ref[iy, ix] = (
                np.trace(big @ d_op @ parity @ d_op.conj().T).real / math.pi
            )
    assert np.abs(wigner(rho, xg, yg) - ref).max() < 1e-10


def test_wigner_mixture_vs_superposition_fringes():
    dim = 32
    va = coherent_vec(2.0, dim)
    vb = coherent_vec(-2.0, dim)
    mix = 0.5 * (np.outer(va, va.conj()) + np.outer(vb, vb.conj()))
    cat = va + vb
    cat = cat / np.linalg.norm(cat)
    pure = np.outer(cat, cat.conj())
    y = np.linspace(-3, 3, 201)
    w_mix = wigner(mix, [0.0], y)[:, 0]
    w_cat = wigner(pure, [0.0], y)[:, 0]
    assert w_mix.min() > -1e-10  # two lobes, no interference
    assert w_cat.min() < -0.05  # fringes go negative between the lobes
    assert w_cat.max() > 2 * w_mix.max()


def test_wigner_rejects_unphysical():
    with pytest.raises(ConfigError):
        wigner(np.eye(3), [0.0], [0.0])  # trace 3
    bad = np.diag([1.5, -0.5]).astype(complex)
    with pytest.raises(ConfigError):
        wigner(bad, [0.0], [0.0])
    nonherm = np.array([[0.5, 0.5], [0.0, 0.5]], dtype=complex)
    with pytest.raises(ConfigError):
        wigner(nonherm, [0.0], [0.0])
