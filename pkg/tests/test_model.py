"""Closed-form model quantities: envelope, rates, profiles, design formulas."""

import math

import numpy as np
import pytest
from scipy import integrate

from jtwpd.config import (
    FLUX_QUANTUM_REDUCED,
    PLANCK_H,
    PROFILE_COSINE,
    HardwareParams,
    WavepacketSpec,
    standard_setup,
    with_overrides,
)
from jtwpd.errors import ConfigError
from jtwpd import model


@pytest.fixture
def spec():
    return WavepacketSpec(sigma=2.0, x0=-2.0)


@pytest.fixture
def hw():
    e_j = model.josephson_energy_for_supercurrent(1.1e-6, 3)
    return HardwareParams(
        e_j=e_j,
        n_s=3,
        beta=1.0 / 3.0,
        phi_x=math.pi,
        alpha_probe=5.0,
        omega_bar=2 * math.pi * 5e9,
        z_tml=50.0,
        k_q=2 * math.pi * 1e6,
        k_j=0.0,
        phi_r=0.1,
        a_cell=1e-5,
        v_light=1e8,
        epsilon_drive=1.0,
        delta=0.0,
    )


def test_envelope_normalized(spec):
    val, _ = integrate.quad(
        lambda t: abs(model.wavepacket_envelope(t, spec)) ** 2, -10, 10
    )
    assert val == pytest.approx(1.0, abs=1e-10)


def test_envelope_peak_and_width(spec):
    # peak at t = -x0, |xi|^2 FWHM = sqrt(2 ln 2)/sigma
    peak = -spec.x0
    p = abs(model.wavepacket_envelope(peak, spec)) ** 2
    half = spec.temporal_fwhm / 2
    assert abs(model.wavepacket_envelope(peak + half, spec)) ** 2 == pytest.approx(
        p / 2
    )
    assert spec.fwhm == pytest.approx(2 * math.sqrt(2 * math.log(2)) * spec.sigma)


def test_envelope_carrier_phase():
    spec = WavepacketSpec(sigma=1.0, omega_bar=3.0, x0=-2.0)
    v = model.wavepacket_envelope(0.7, spec)
    assert np.angle(v) == pytest.approx(-3.0 * 0.7)


def test_emitter_rate_reconstructs_envelope(spec):
    """kappa_c(t) * survival(t) = |xi_peak_centered(t)|^2."""
    for t in (-1.0, -0.3, 0.0, 0.4, 1.0):
        lhs = model.emitter_rate(t, spec) * model.emitter_survival(t, spec)
        rhs = math.sqrt(2 * spec.sigma**2 / math.pi) * math.exp(
            -2 * spec.sigma**2 * t**2
        )
        assert lhs == pytest.approx(rhs, rel=1e-10)


def test_emitter_rate_capped(spec):
    assert model.emitter_rate(100.0, spec) == pytest.approx(
        model.EMITTER_RATE_CAP * spec.sigma
    )


def test_emitter_survival_limits(spec):
    assert model.emitter_survival(-50.0, spec) == pytest.approx(1.0)
    assert model.emitter_survival(50.0, spec) == pytest.approx(0.0, abs=1e-30)
    ts = np.linspace(-2, 2, 41)
    assert np.all(np.diff(model.emitter_survival(ts, spec)) < 0)


def test_photon_fraction_limits():
    sharp = WavepacketSpec(sigma=6.0, x0=-2.0)
    cfg, _ = standard_setup(1.0, 2 * math.sqrt(2 * math.log(2)) * sharp.sigma)
    assert model.photon_fraction(0.0, cfg, sharp) < 1e-6
    # centered: a packet much narrower than the detector sits fully inside
    assert model.photon_fraction(-sharp.x0, cfg, sharp) == pytest.approx(
        1.0, abs=1e-4
    )
    assert model.photon_fraction(100.0, cfg, sharp) == pytest.approx(0.0, abs=1e-12)


def test_noise_rate_zero_kappa_closed_form(spec):
    cfg, _ = standard_setup(2.0, 2 * math.sqrt(2 * math.log(2)) * spec.sigma)
    t = 1.7

    def integrand(x):
        return (
            2.0
            * cfg.g_tau**2
            * (x + 0.5)
            * math.sqrt(2 * spec.sigma**2 / math.pi)
            * math.exp(-2 * spec.sigma**2 * (t - x + spec.x0) ** 2)
        )

    ref, _ = integrate.quad(integrand, -0.5, 0.5)
    assert model.noise_rate(t, cfg, spec) == pytest.approx(ref, rel=1e-8)


def test_noise_rate_kappa_limit(spec):
    """kappa_a -> 0 limit of the finite-kappa_a expression matches."""
    cfg0, _ = standard_setup(2.0, 2 * math.sqrt(2 * math.log(2)) * spec.sigma)
    cfg1 = with_overrides(cfg0, kappa_a_tau=1e-6)
    t = 1.9
    assert model.noise_rate(t, cfg1, spec) == pytest.approx(
        model.noise_rate(t, cfg0, spec), rel=1e-5
    )
    assert model.noise_rate(t, cfg1, spec) >= 0.0


def test_coupling_profile_uniform():
    cfg, _ = standard_setup(2.0, 6.0)
    assert model.coupling_profile(0.25, cfg) == pytest.approx(cfg.g_tau)
    assert model.coupling_profile(0.75, cfg) == 0.0


def test_coupling_profile_cosine_mean():
    cfg, _ = standard_setup(2.0, 6.0, coupling_profile=PROFILE_COSINE)
    x = np.linspace(-0.5, 0.5, 20001)
    mean = integrate.trapezoid(model.coupling_profile(x, cfg), x)
    # 2 g cos^2 integrates to g over the detector
    assert mean == pytest.approx(cfg.g_tau, rel=1e-4)


def test_coupling_profile_noise_seeded():
    cfg, _ = standard_setup(
        2.0, 6.0, coupling_profile=PROFILE_COSINE, profile_noise=0.1, profile_seed=3
    )
    x = np.linspace(-0.49, 0.49, 57)
    a = model.coupling_profile(x, cfg)
    b = model.coupling_profile(x, cfg)
    assert np.array_equal(a, b)  # deterministic in the seed
    cfg2, _ = standard_setup(
        2.0, 6.0, coupling_profile=PROFILE_COSINE, profile_noise=0.1, profile_seed=4
    )
    assert not np.array_equal(a, model.coupling_profile(x, cfg2))


def test_coupler_energy_roundtrip():
    i_s = 1.1e-6
    for n_s in (2, 3, 5):
        e_j = model.josephson_energy_for_supercurrent(i_s, n_s)
        e_q = model.coupler_energy(e_j, n_s)
        assert e_q == pytest.approx(i_s * FLUX_QUANTUM_REDUCED / PLANCK_H)


def test_steady_state_alpha_linear_limit():
    alpha = model.steady_state_alpha(0.0, 2.0, 3.0)
    assert alpha == pytest.approx(3.0)  # 2 eps / kappa, rotated positive


def test_steady_state_alpha_residual():
    alpha, residual = model.steady_state_alpha(
        0.3, 1.0, 2.0 + 1.0j, return_residual=True
    )
    assert residual < 1e-12
    assert alpha.imag == 0.0 and alpha.real > 0.0


def test_steady_state_alpha_validates():
    with pytest.raises(ConfigError):
        model.steady_state_alpha(0.1, 0.0, 1.0)
    assert model.steady_state_alpha(0.1, 1.0, 0.0) == 0j


def test_n_cells_required_figure_scale(hw):
    """Order-10^3 cells for the published parameter point."""
    counts = [model.n_cells_required(gt, hw) for gt in (1.0, 2.0, 3.0)]
    assert all(300 <= n <= 5000 for n in counts)
    assert counts[0] < counts[1] < counts[2]


def test_n_cells_inverse_in_kq(hw):
    import dataclasses

    n1 = model.n_cells_required(2.0, hw)
    hw10 = dataclasses.replace(hw, k_q=10 * hw.k_q)
    n10 = model.n_cells_required(2.0, hw10)
    assert n10 == math.ceil(n1 / 10) or abs(10 * n10 - n1) <= 10  # exact 1/K_Q


def test_n_cells_rejects_bad_kq(hw):
    import dataclasses

    with pytest.raises(ConfigError):
        model.n_cells_required(2.0, dataclasses.replace(hw, k_q=0.0))


def test_chi_per_cell_linear_in_eq(hw):
    import dataclasses

    c1 = model.chi_per_cell(hw)
    c2 = model.chi_per_cell(dataclasses.replace(hw, e_j=2 * hw.e_j))
    assert c2 == pytest.approx(2 * c1)
