"""Simulation parameters and plain-text configuration I/O.

Dimensionless convention used throughout the simulation modules: the photon
group velocity v = 1 and the probe-photon interaction time tau = z/v = 1, so
the detector occupies x in [-1/2, 1/2] and all rates are in units of 1/tau.
SI units appear only in :class:`HardwareParams` and the design formulas that
consume it.
"""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, fields, replace

from .errors import ConfigError

# Physical constants (SI).
PLANCK_H = 6.62607015e-34          # J s
HBAR = PLANCK_H / (2.0 * math.pi)  # J s
ELEMENTARY_CHARGE = 1.602176634e-19
RESISTANCE_QUANTUM = PLANCK_H / ELEMENTARY_CHARGE**2   # h/e^2, ~25812.8 Ohm
FLUX_QUANTUM_REDUCED = HBAR / (2.0 * ELEMENTARY_CHARGE)  # phi_0 = hbar/2e

# FWHM of a Gaussian with unit standard deviation.
GAUSSIAN_FWHM = 2.0 * math.sqrt(2.0 * math.log(2.0))

PROFILE_UNIFORM = "uniform"
PROFILE_COSINE = "cosine"


@dataclass(frozen=True)
class WavepacketSpec:
    """Gaussian single-photon wavepacket.

    ``sigma`` is the spectral standard deviation (units 1/tau); the spectral
    FWHM is ``2*sqrt(2*ln 2)*sigma``.  ``x0`` is the emitter position, which
    must lie to the left of the detector entrance at -z/2.
    """

    sigma: float
    omega_bar: float = 0.0
    x0: float = -2.0

    @property
    def fwhm(self) -> float:
        """Spectral full width at half maximum."""
        return GAUSSIAN_FWHM * self.sigma

    @property
    def temporal_fwhm(self) -> float:
        """FWHM of the |envelope|^2 in time."""
        return math.sqrt(2.0 * math.log(2.0)) / self.sigma

    @property
    def peak_time(self) -> float:
        """Arrival time of the envelope maximum at x = 0 (v = 1)."""
        return -self.x0

    def validate(self) -> None:
        if self.sigma <= 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if self.x0 >= -0.5:
            raise ConfigError(
                f"emitter position x0 = {self.x0} must lie left of the "
                "detector entrance at -1/2"
            )


@dataclass(frozen=True)
class DetectorConfig:
    """Dimensionless parameters of one detector simulation.

    ``chi_ratio`` encodes g/chi; ``math.inf`` means the cross-Kerr shift is
    switched off.  ``kerr_ratio`` is |K|/kappa_a with the sign carried by
    ``kerr_sign``.  The waveguide discretization obeys dx = v*dt identically,
    so ``dt`` must equal ``1/n_sites``.
    """

    g_tau: float = 2.0
    gamma_tau: float = 4.0
    kappa_a_tau: float = 0.0
    chi_ratio: float = math.inf
    kerr_ratio: float = 0.0
    kerr_sign: int = 1
    n_sites: int = 100
    n_steps: int = 600
    dt: float = 0.01
    fock_dims: tuple[int, int, int] = (2, 16, 2)  # waveguide, probe, emitter
    emitter_site_offset: int = -150
    coupling_profile: str = PROFILE_UNIFORM
    profile_noise: float = 0.0
    profile_seed: int = 0

    # -- derived quantities (dimensionless, tau = v = z = 1) -------------

    @property
    def dx(self) -> float:
        return 1.0 / self.n_sites

    @property
    def kappa_a(self) -> float:
        return self.kappa_a_tau

    @property
    def g(self) -> float:
        return self.g_tau

    @property
    def chi(self) -> float:
        return 0.0 if math.isinf(self.chi_ratio) else self.g_tau / self.chi_ratio

    @property
    def kerr(self) -> float:
        """Total probe self-Kerr K (units 1/tau)."""
        return self.kerr_sign * self.kerr_ratio * self.kappa_a_tau

    @property
    def sigma(self) -> float:
        return self.gamma_tau / GAUSSIAN_FWHM

    @property
    def emitter_x0(self) -> float:
        """Emitter position implied by the site offset (cell centers)."""
        return (self.emitter_site_offset + 0.5) * self.dx - 0.5

    @property
    def total_time(self) -> float:
        return self.n_steps * self.dt

    def wavepacket(self, omega_bar: float = 0.0) -> WavepacketSpec:
        return WavepacketSpec(sigma=self.sigma, omega_bar=omega_bar, x0=self.emitter_x0)

    def validate(self) -> None:
        if self.g_tau < 0 or self.gamma_tau <= 0 or self.kappa_a_tau < 0:
            raise ConfigError("rates g_tau, gamma_tau, kappa_a_tau must be nonnegative")
        if self.kerr_ratio < 0:
            raise ConfigError("kerr_ratio carries no sign; use kerr_sign")
        if self.chi_ratio <= 0:
            raise ConfigError("chi_ratio must be positive (inf disables chi)")
        if self.n_sites < 2 or self.n_steps < 1:
            raise ConfigError("n_sites >= 2 and n_steps >= 1 required")
        if abs(self.dt * self.n_sites - 1.0) > 1e-9:
            raise ConfigError(
                f"dx = v*dt requires dt = 1/n_sites; got dt={self.dt}, "
                f"n_sites={self.n_sites}"
            )
        if any(d < 2 for d in self.fock_dims):
            raise ConfigError(f"all fock_dims must be >= 2, got {self.fock_dims}")
        if self.emitter_site_offset >= 0:
            raise ConfigError("emitter_site_offset must be negative (left of detector)")
        if self.coupling_profile not in (PROFILE_UNIFORM, PROFILE_COSINE):
            raise ConfigError(f"unknown coupling profile {self.coupling_profile!r}")
        if not 0.0 <= self.profile_noise < 1.0:
            raise ConfigError("profile_noise must be a fraction in [0, 1)")
        # full transit coverage: the envelope center must traverse the
        # detector with a margin of at least 3 temporal FWHM.
        spec = self.wavepacket()
        needed = (0.5 - spec.x0) + 3.0 * spec.temporal_fwhm
        if self.total_time + 1e-9 < needed:
            raise ConfigError(
                f"dt*n_steps = {self.total_time:.4g} does not cover the photon "
                f"transit with a 3-FWHM margin (need >= {needed:.4g})"
            )


def standard_setup(
    g_tau: float,
    gamma_tau: float,
    kappa_a_tau: float = 0.0,
    n_sites: int = 100,
    *,
    chi_ratio: float = math.inf,
    kerr_ratio: float = 0.0,
    kerr_sign: int = 1,
    probe_dim: int = 16,
    extra_time: float = 0.0,
    coupling_profile: str = PROFILE_UNIFORM,
    profile_noise: float = 0.0,
    profile_seed: int = 0,
) -> tuple[DetectorConfig, WavepacketSpec]:
    """Build a consistent (config, wavepacket) pair.

    Places the emitter 3 temporal FWHM ahead of the detector entrance and
    sizes the run so the envelope center clears the exit by another 3 FWHM,
    plus ``extra_time`` (useful for long measurement windows).
    """
    sigma = gamma_tau / GAUSSIAN_FWHM
    t_fwhm = math.sqrt(2.0 * math.log(2.0)) / sigma
    dx = 1.0 / n_sites
    offset = -int(math.ceil(3.0 * t_fwhm / dx + 0.5))
    x0 = (offset + 0.5) * dx - 0.5
    total = (0.5 - x0) + 3.0 * t_fwhm + extra_time
    n_steps = int(math.ceil(total * n_sites))
    cfg = DetectorConfig(
        g_tau=g_tau,
        gamma_tau=gamma_tau,
        kappa_a_tau=kappa_a_tau,
        chi_ratio=chi_ratio,
        kerr_ratio=kerr_ratio,
        kerr_sign=kerr_sign,
        n_sites=n_sites,
        n_steps=n_steps,
        dt=dx,
        fock_dims=(2, probe_dim, 2),
        emitter_site_offset=offset,
        coupling_profile=coupling_profile,
        profile_noise=profile_noise,
        profile_seed=profile_seed,
    )
    cfg.validate()
    spec = cfg.wavepacket()
    spec.validate()
    return cfg, spec


@dataclass(frozen=True)
class HardwareParams:
    """SI-unit device parameters for the design formulas.

    Energies ``e_j`` (and the derived coupler energy) are stored as
    frequencies in Hz, i.e. E/h.  ``k_q`` and ``k_j`` are angular rates
    (rad/s) with ``k_j <= 0``; the total probe self-Kerr is ``k_q + k_j``.
    """

    e_j: float = 1.85e12            # Josephson energy / h, Hz
    n_s: int = 3                    # large-junction count in the coupler loop
    beta: float = 1.0 / 3.0         # small-junction energy ratio
    phi_x: float = math.pi          # loop flux bias, radians
    alpha_probe: float = 5.0        # probe displacement (dimensionless)
    omega_bar: float = 2.0 * math.pi * 5e9   # photon center frequency, rad/s
    z_tml: float = 50.0             # characteristic impedance, Ohm
    r_k: float = RESISTANCE_QUANTUM
    k_q: float = 2.0 * math.pi * 1e6         # coupler self-Kerr, rad/s
    k_j: float = 0.0                # junction self-Kerr (<= 0), rad/s
    phi_r: float = 0.01             # zero-point flux per cell (dimensionless)
    a_cell: float = 5e-6            # unit cell length, m
    v_light: float = 5e6            # propagation speed in the metamaterial, m/s
    epsilon_drive: float = 0.0      # probe drive amplitude, rad/s
    delta: float = 0.0              # drive detuning omega_r - omega_d, rad/s

    @property
    def total_kerr(self) -> float:
        return self.k_q + self.k_j

    def validate(self) -> None:
        if self.n_s < 1:
            raise ConfigError("n_s must be a positive integer")
        if self.z_tml <= 0:
            raise ConfigError("z_tml must be positive")
        if self.e_j <= 0:
            raise ConfigError("e_j must be positive")
        if abs(self.r_k - RESISTANCE_QUANTUM) > 1e-6 * RESISTANCE_QUANTUM:
            raise ConfigError("r_k is the resistance quantum h/e^2 and is fixed")
        if self.k_j > 0:
            raise ConfigError("k_j must be <= 0")
        if self.a_cell <= 0 or self.v_light <= 0:
            raise ConfigError("a_cell and v_light must be positive")


# ---------------------------------------------------------------------------
# Plain-text (key = value) configuration files.

_DETECTOR_SECTION = "detector"
_WAVEPACKET_SECTION = "wavepacket"
_HARDWARE_SECTION = "hardware"


def _format_value(v) -> str:
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def save_config(
    path,
    cfg: DetectorConfig,
    spec: WavepacketSpec | None = None,
    hw: HardwareParams | None = None,
) -> None:
    parser = configparser.ConfigParser()
    parser[_DETECTOR_SECTION] = {
        f.name: _format_value(getattr(cfg, f.name)) for f in fields(cfg)
    }
    if spec is not None:
        parser[_WAVEPACKET_SECTION] = {
            f.name: _format_value(getattr(spec, f.name)) for f in fields(spec)
        }
    if hw is not None:
        parser[_HARDWARE_SECTION] = {
            f.name: _format_value(getattr(hw, f.name)) for f in fields(hw)
        }
    with open(path, "w") as fh:
        parser.write(fh)


def load_config(path):
    """Read a config file; returns (DetectorConfig, WavepacketSpec|None, HardwareParams|None)."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    if _DETECTOR_SECTION not in parser:
        raise ConfigError(f"config file {path} has no [{_DETECTOR_SECTION}] section")

    def build(cls, section):
        kwargs = {}
        valid = {f.name: f for f in fields(cls)}
        for key, raw in section.items():
            if key not in valid:
                raise ConfigError(f"unknown key {key!r} in [{section.name}]")
            hint = valid[key].type
            if key == "fock_dims":
                kwargs[key] = tuple(int(x) for x in raw.split(","))
            elif "int" in str(hint):
                kwargs[key] = int(raw)
            elif "str" in str(hint):
                kwargs[key] = raw
            else:
                kwargs[key] = float(raw)
        return cls(**kwargs)

    cfg = build(DetectorConfig, parser[_DETECTOR_SECTION])
    cfg.validate()
    spec = None
    if _WAVEPACKET_SECTION in parser:
        spec = build(WavepacketSpec, parser[_WAVEPACKET_SECTION])
        spec.validate()
    hw = None
    if _HARDWARE_SECTION in parser:
        hw = build(HardwareParams, parser[_HARDWARE_SECTION])
        hw.validate()
    return cfg, spec, hw


def config_hash(cfg: DetectorConfig, spec: WavepacketSpec | None = None) -> str:
    """Short stable hash identifying a (config, wavepacket) pair."""
    parts = [f"{f.name}={getattr(cfg, f.name)!r}" for f in fields(cfg)]
    if spec is not None:
        parts += [f"{f.name}={getattr(spec, f.name)!r}" for f in fields(spec)]
    digest = hashlib.sha256(";".join(parts).encode()).hexdigest()
    return digest[:12]


def with_overrides(cfg: DetectorConfig, **kwargs) -> DetectorConfig:
    """Functional update preserving validation."""
    out = replace(cfg, **kwargs)
    out.validate()
    return out
