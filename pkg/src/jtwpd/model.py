"""Closed-form model quantities: wavepacket, emitter rate, detector-occupancy
and noise rates, coupling profiles, and the hardware design formulas.

All time/rate arguments in the dimensionless functions use tau = v = z = 1;
the hardware helpers work in SI units (see :class:`jtwpd.config.HardwareParams`).
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, special

from .config import (
    FLUX_QUANTUM_REDUCED,
    HBAR,
    PLANCK_H,
    PROFILE_UNIFORM,
    DetectorConfig,
    HardwareParams,
    WavepacketSpec,
)
from .errors import ConfigError

# kappa_c divergence guard: the closed-form emitter rate blows up once the
# residual emitter population is ~1e-10; clamping at 50*sigma keeps the
# reconstructed envelope exact to well below that level.
EMITTER_RATE_CAP = 50.0


def wavepacket_envelope(t, spec: WavepacketSpec):
    """Complex Gaussian envelope xi(t), normalized so int |xi|^2 dt = 1.

    The position-space form is xi(x, t) = xi(t - x/v).
    """
    t = np.asarray(t, dtype=float)
    amp = (2.0 * spec.sigma**2 / math.pi) ** 0.25
    out = amp * np.exp(-1j * spec.omega_bar * t - spec.sigma**2 * (t + spec.x0) ** 2)
    return out if out.ndim else complex(out)


def emitter_rate(t, spec: WavepacketSpec):
    """Decay rate kappa_c(t) shaping the emitter output into xi.

    Time is measured from the envelope peak (the caller shifts by the
    arrival time when the emitter sits at x0).  The analytic expression
    diverges as t -> +inf; it is clamped at ``EMITTER_RATE_CAP * sigma``.
    """
    s = spec.sigma
    x = np.sqrt(2.0) * s * np.asarray(t, dtype=float)
    # exp(-x^2)/erfc(x) == 1/erfcx(x), stable for large x
    rate = math.sqrt(8.0 * s**2 / math.pi) / special.erfcx(x)
    rate = np.minimum(rate, EMITTER_RATE_CAP * s)
    return rate if rate.ndim else float(rate)


def emitter_survival(t, spec: WavepacketSpec):
    """exp(-int_{-inf}^t kappa_c): emitter population for the uncapped rate."""
    x = np.sqrt(2.0) * spec.sigma * np.asarray(t, dtype=float)
    pop = 0.5 * special.erfc(x)
    return pop if pop.ndim else float(pop)


def photon_fraction(t, cfg: DetectorConfig, spec: WavepacketSpec):
    """Fraction of the photon inside the detector, n_det(t) in [0, 1]."""
    s = spec.sigma
    c = np.asarray(t, dtype=float) + spec.x0  # envelope center position
    root2s = np.sqrt(2.0) * s
    val = 0.5 * (special.erf(root2s * (c + 0.5)) - special.erf(root2s * (c - 0.5)))
    return val if val.ndim else float(val)


def _envelope_sq(x, t, spec: WavepacketSpec):
    s = spec.sigma
    return math.sqrt(2.0 * s**2 / math.pi) * np.exp(-2.0 * s**2 * (t - x + spec.x0) ** 2)


def noise_rate(t, cfg: DetectorConfig, spec: WavepacketSpec) -> float:
    """Probe dephasing-noise rate Gamma(t) >= 0.

    Quadrature of (4g^2/kappa_a) int [1 - exp(-(kappa_a/2)(x + 1/2))] |xi(x,t)|^2 dx
    over the detector; at kappa_a = 0 the analytic limit
    (2g^2) int (x + 1/2) |xi(x,t)|^2 dx is used.
    """
    if cfg.kappa_a_tau < 0:
        raise ConfigError("kappa_a must be nonnegative")
    g = cfg.g_tau
    ka = cfg.kappa_a_tau
    t = float(t)
    if ka == 0.0:

        def integrand(x):
            return 2.0 * g**2 * (x + 0.5) * _envelope_sq(x, t, spec)

    else:

        def integrand(x):
            bracket = -np.expm1(-0.5 * ka * (x + 0.5))
            return (4.0 * g**2 / ka) * bracket * _envelope_sq(x, t, spec)

    val, _ = integrate.quad(integrand, -0.5, 0.5, epsabs=1e-12, limit=200)
    return max(val, 0.0)


def coupling_profile(x, cfg: DetectorConfig):
    """Position-dependent longitudinal coupling g(x); zero outside [-1/2, 1/2].

    Uniform mode returns g everywhere inside the detector.  Cosine mode
    returns 2*g*cos^2(2*pi*x) plus seeded per-cell noise uniform in
    [-f, +f]*g, piecewise constant over unit cells.
    """
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) <= 0.5
    if cfg.coupling_profile == PROFILE_UNIFORM:
        out = np.where(inside, cfg.g_tau, 0.0)
    else:
        base = 2.0 * cfg.g_tau * np.cos(2.0 * math.pi * x) ** 2
        if cfg.profile_noise > 0.0:
            rng = np.random.Generator(np.random.PCG64(cfg.profile_seed))
            draws = rng.uniform(
                -cfg.profile_noise, cfg.profile_noise, size=cfg.n_sites
            ) * cfg.g_tau
            cell = np.clip(((x + 0.5) * cfg.n_sites).astype(int), 0, cfg.n_sites - 1)
            base = base + draws[cell]
        out = np.where(inside, base, 0.0)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Hardware design formulas (SI units).


def coupler_energy(e_j: float, n_s: int) -> float:
    """Quartic coupler energy E_Q = E_J (n_s^2 - 1)/n_s^3 (same units as e_j)."""
    if n_s < 1:
        raise ConfigError(f"n_s must be >= 1, got {n_s}")
    if e_j <= 0:
        raise ConfigError(f"e_j must be positive, got {e_j}")
    return e_j * (n_s**2 - 1) / n_s**3


def josephson_energy_for_supercurrent(i_s: float, n_s: int) -> float:
    """E_J (as a frequency E/h, Hz) giving coupler energy E_Q = i_s * phi_0."""
    e_q_hz = i_s * FLUX_QUANTUM_REDUCED / PLANCK_H
    return e_q_hz * n_s**3 / (n_s**2 - 1)


def steady_state_alpha(
    kerr: float, kappa_a: float, epsilon: complex, return_residual: bool = False
):
    """Steady-state probe displacement solving K|a|^2 a + i kappa_a a / 2 = i eps.

    Returns the root continuously connected to the K = 0 solution
    (alpha = 2 eps / kappa_a), rotated to the real-positive axis.
    """
    if kappa_a <= 0:
        raise ConfigError("kappa_a must be positive")
    eps2 = abs(epsilon) ** 2
    if eps2 == 0.0:
        return (0j, 0.0) if return_residual else 0j
    if kerr == 0.0:
        alpha = 2.0 * epsilon / kappa_a
        residual = 0.0
    else:
        # |alpha|^2 = u solves K^2 u^3 + (kappa_a^2/4) u - |eps|^2 = 0,
        # monotone in u, hence a unique positive root.
        roots = np.roots([kerr**2, 0.0, kappa_a**2 / 4.0, -eps2])
        real = roots[np.abs(roots.imag) < 1e-9 * np.abs(roots).max()].real
        pos = real[real > 0]
        if pos.size == 0:
            raise ArithmeticError(
                f"no positive root for steady-state amplitude (roots {roots})"
            )
        u = float(pos[0])
        alpha = 1j * epsilon / (kerr * u + 0.5j * kappa_a)
        residual = abs(kerr * abs(alpha) ** 2 * alpha + 0.5j * kappa_a * alpha - 1j * epsilon)
        if residual > 1e-10 * abs(epsilon):
            raise ArithmeticError(
                f"steady-state root did not converge (residual {residual:.3e})"
            )
    rotated = complex(abs(alpha))
    return (rotated, residual) if return_residual else rotated


def chi_per_cell(hw: HardwareParams) -> float:
    """Dispersive shift per unit length chi(x_n), rad/s per meter.

    hbar*chi = (v E_Q / a) * (4 pi Z / (R_K omega_bar)) * |phi_r|^2, with E_Q
    derived from the coupler junctions; linear in E_Q and |phi_r|^2.
    """
    hw.validate()
    e_q_joule = coupler_energy(hw.e_j, hw.n_s) * PLANCK_H
    return (
        (hw.v_light * e_q_joule / hw.a_cell)
        * (4.0 * math.pi * hw.z_tml)
        / (hw.r_k * hw.omega_bar)
        * hw.phi_r**2
        / HBAR
    )


def n_cells_required(g_tau: float, hw: HardwareParams) -> int:
    """Unit cells needed to reach a target g*tau (reflection-mode operation).

    Ceiling of (1/2) (g tau / alpha * R_K / (8 pi Z))^2 omega_bar^2 / (K_Q E_Q / hbar).
    The built-in factor 1/2 reflects operating the device in reflection, which
    doubles the interaction time per cell.
    """
    if hw.k_q <= 0:
        raise ConfigError(f"k_q must be positive, got {hw.k_q}")
    e_q = coupler_energy(hw.e_j, hw.n_s)  # Hz (E/h)
    e_q_over_hbar = 2.0 * math.pi * e_q   # rad/s
    factor = (g_tau / hw.alpha_probe) * hw.r_k / (8.0 * math.pi * hw.z_tml)
    n = 0.5 * factor**2 * hw.omega_bar**2 / (hw.k_q * e_q_over_hbar)
    return int(math.ceil(n))
