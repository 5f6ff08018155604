"""Perturbative master equation on the joint emitter (x) probe space.

Serves as the analytic reference for the tensor-network simulations: the
waveguide is integrated out, leaving a two-body density operator driven by
the photon-fraction displacement term, the position-uncertainty noise term,
and the emitter/probe decay channels.  Also provides the backaction-free
Langevin mean and the detectors-in-series comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate as sp_integrate

from . import model
from .config import DetectorConfig, WavepacketSpec
from .errors import ConfigError, IntegrationError

DEFAULT_PROBE_DIM = 30
# below this emitter population the emission-conditioned state is replaced
# by the emitter-ground projection (the two coincide in the limit)
CONDITIONAL_FLOOR = 1e-12


def destroy(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim)), 1).astype(complex)


@dataclass
class _Operators:
    a: np.ndarray
    adag: np.ndarray
    x_plus: np.ndarray      # a + a^dag
    y: np.ndarray           # i(a^dag - a)/sqrt(2)
    x: np.ndarray           # (a + a^dag)/sqrt(2)
    c: np.ndarray
    n_c: np.ndarray


def _build_operators(n_a: int) -> _Operators:
    a1 = destroy(2)
    a2 = destroy(n_a)
    eye_c = np.eye(2, dtype=complex)
    eye_a = np.eye(n_a, dtype=complex)
    a = np.kron(eye_c, a2)
    adag = a.conj().T
    c = np.kron(a1, eye_a)
    return _Operators(
        a=a,
        adag=adag,
        x_plus=a + adag,
        y=1j * (adag - a) / np.sqrt(2.0),
        x=(a + adag) / np.sqrt(2.0),
        c=c,
        n_c=c.conj().T @ c,
    )


@dataclass
class KeldyshState:
    """Joint emitter(2) (x) probe(n_a) density operator."""

    rho: np.ndarray
    t: float = 0.0

    @property
    def dims(self) -> tuple[int, int]:
        return (2, self.rho.shape[0] // 2)

    @classmethod
    def initial(cls, n_a: int = DEFAULT_PROBE_DIM, excited: bool = True) -> "KeldyshState":
        """Emitter in |1> (or |0>), probe in the displaced-frame vacuum."""
        rho_c = np.zeros((2, 2), dtype=complex)
        rho_c[1 if excited else 0, 1 if excited else 0] = 1.0
        rho_a = np.zeros((n_a, n_a), dtype=complex)
        rho_a[0, 0] = 1.0
        return cls(rho=np.kron(rho_c, rho_a), t=0.0)

    def check(self, psd_floor: float | None = -1e-8) -> None:
        """Sanity checks on the joint operator.

        Positivity is only asserted when ``psd_floor`` is given: the
        perturbative equation drives and dephases with a *conditional* state,
        so it is not of Lindblad form on the joint operator and the joint
        eigenvalues may legitimately go negative while the probe moments stay
        exact (they match the closed-form Langevin solution).
        """
        tr = np.trace(self.rho).real
        if abs(tr - 1.0) > 1e-8:
            raise IntegrationError(f"trace drifted to {tr} at t={self.t}")
        herm = np.linalg.norm(self.rho - self.rho.conj().T)
        if herm > 1e-10:
            raise IntegrationError(f"hermiticity violated ({herm:.3e}) at t={self.t}")
        if psd_floor is not None:
            eigs = np.linalg.eigvalsh(self.rho)
            if eigs.min() < psd_floor:
                raise IntegrationError(
                    f"negative eigenvalue {eigs.min():.3e} at t={self.t}"
                )


@dataclass
class MomentSeries:
    """Probe moments and emitter population on a time grid."""

    t: np.ndarray
    y_mean: np.ndarray
    y_var: np.ndarray
    x_mean: np.ndarray
    emitter_pop: np.ndarray

    def __post_init__(self):
        n = len(self.t)
        for name in ("y_mean", "y_var", "x_mean", "emitter_pop"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} length does not match time grid")

    def save(self, path) -> None:
        data = np.column_stack(
            [self.t, self.y_mean, self.y_var, self.x_mean, self.emitter_pop]
        )
        np.savetxt(
            path,
            data,
            header="t\ty_mean\ty_var\tx_mean\temitter_pop",
            delimiter="\t",
        )

    @classmethod
    def load(cls, path) -> "MomentSeries":
        data = np.loadtxt(path)
        return cls(
            t=data[:, 0],
            y_mean=data[:, 1],
            y_var=data[:, 2],
            x_mean=data[:, 3],
            emitter_pop=data[:, 4],
        )


def _dissipator(op: np.ndarray, rho: np.ndarray) -> np.ndarray:
    opd = op.conj().T
    anti = opd @ op
    return op @ rho @ opd - 0.5 * (anti @ rho + rho @ anti)


def generator_apply(
    state: KeldyshState,
    cfg: DetectorConfig,
    spec: WavepacketSpec,
    ops: _Operators | None = None,
) -> np.ndarray:
    """Right-hand side of the master equation at the state's current time."""
    if ops is None:
        ops = _build_operators(state.dims[1])
    return _rhs(state.rho, state.t, cfg, spec, ops)


def _conditional(rho: np.ndarray, ops: _Operators) -> np.ndarray:
    pop = np.trace(ops.n_c @ rho).real
    if pop > CONDITIONAL_FLOOR:
        return (ops.c @ rho @ ops.c.conj().T) / pop
    # after full emission the conditional and unconditional probe states
    # coincide; project onto the emitter ground state and renormalize
    n_a = rho.shape[0] // 2
    proj = np.zeros_like(rho)
    proj[:n_a, :n_a] = rho[:n_a, :n_a]
    tr = np.trace(proj).real
    if tr <= 0.0:
        return rho / np.trace(rho).real
    return proj / tr


def _rhs(rho, t, cfg, spec, ops) -> np.ndarray:
    t_peak = spec.peak_time
    n_det = model.photon_fraction(t, cfg, spec)
    gamma_t = model.noise_rate(t, cfg, spec)
    kappa_c = model.emitter_rate(t - t_peak, spec)
    rho_c = _conditional(rho, ops)
    g = cfg.g_tau
    drho = -1j * g * n_det * (ops.x_plus @ rho_c - rho_c @ ops.x_plus)
    drho += gamma_t * _dissipator(ops.x_plus, rho_c)
    drho += kappa_c * _dissipator(ops.c, rho)
    if cfg.kappa_a_tau > 0:
        drho += cfg.kappa_a_tau * _dissipator(ops.a, rho)
    return drho


def integrate(
    cfg: DetectorConfig,
    spec: WavepacketSpec,
    t_grid: np.ndarray,
    state0: KeldyshState | None = None,
    n_a: int = DEFAULT_PROBE_DIM,
    dt: float = 1e-3,
    check_every: int = 0,
) -> MomentSeries:
    """Fixed-step RK4 integration, sampling moments on ``t_grid``.

    The grid must start at the initial-state time and be increasing.  Noise
    and occupancy rates are interpolated from a pretabulated fine grid for
    speed; the tabulation step matches the integrator step.
    """
    if state0 is None:
        state0 = KeldyshState.initial(n_a=n_a)
    n_a = state0.dims[1]
    ops = _build_operators(n_a)
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid[0] < state0.t - 1e-12 or np.any(np.diff(t_grid) <= 0):
        raise ConfigError("t_grid must be increasing and start at/after state0.t")

    # pretabulate Gamma(t) (quadrature-backed) on a fine grid
    t_fine = np.arange(state0.t, t_grid[-1] + 2 * dt, dt)
    gamma_tab = np.array([model.noise_rate(t, cfg, spec) for t in t_fine])

    def rhs(rho, t):
        t_peak = spec.peak_time
        n_det = model.photon_fraction(t, cfg, spec)
        gamma_t = float(np.interp(t, t_fine, gamma_tab))
        kappa_c = model.emitter_rate(t - t_peak, spec)
        rho_c = _conditional(rho, ops)
        drho = -1j * cfg.g_tau * n_det * (ops.x_plus @ rho_c - rho_c @ ops.x_plus)
        drho += gamma_t * _dissipator(ops.x_plus, rho_c)
        drho += kappa_c * _dissipator(ops.c, rho)
        if cfg.kappa_a_tau > 0:
            drho += cfg.kappa_a_tau * _dissipator(ops.a, rho)
        return drho

    rho = state0.rho.copy()
    t = state0.t
    out_y, out_yv, out_x, out_pop = [], [], [], []
    y2 = ops.y @ ops.y

    def record():
        ym = np.trace(ops.y @ rho).real
        out_y.append(ym)
        out_yv.append(np.trace(y2 @ rho).real - ym**2)
        out_x.append(np.trace(ops.x @ rho).real)
        out_pop.append(np.trace(ops.n_c @ rho).real)

    idx = 0
    n_recorded = 0
    steps_done = 0
    while n_recorded < len(t_grid):
        if abs(t - t_grid[idx]) < 1e-9:
            record()
            n_recorded += 1
            idx += 1
            if n_recorded == len(t_grid):
                break
        step = min(dt, t_grid[idx] - t)
        k1 = rhs(rho, t)
        k2 = rhs(rho + 0.5 * step * k1, t + 0.5 * step)
        k3 = rhs(rho + 0.5 * step * k2, t + 0.5 * step)
        k4 = rhs(rho + step * k3, t + step)
        rho = rho + (step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += step
        steps_done += 1
        if check_every and steps_done % check_every == 0:
            KeldyshState(rho=rho, t=t).check(psd_floor=None)

    final = KeldyshState(rho=rho, t=t)
    final.check(psd_floor=None)
    return MomentSeries(
        t=t_grid,
        y_mean=np.array(out_y),
        y_var=np.array(out_yv),
        x_mean=np.array(out_x),
        emitter_pop=np.array(out_pop),
    )


def langevin_mean(
    t: float,
    cfg: DetectorConfig,
    spec: WavepacketSpec,
    t0: float = 0.0,
    g: float | None = None,
    kappa_a: float | None = None,
) -> complex:
    """Backaction-free probe amplitude <a(t)> = -i g int e^{-ka (t-t')/2} n_det(t') dt'."""
    if g is None:
        g = cfg.g_tau
    if kappa_a is None:
        kappa_a = cfg.kappa_a_tau
    if t <= t0:
        return 0j

    def integrand(tp):
        return np.exp(-0.5 * kappa_a * (t - tp)) * model.photon_fraction(tp, cfg, spec)

    val, _ = sp_integrate.quad(integrand, t0, t, epsabs=1e-12, limit=400)
    return -1j * g * val


def series_displacement(
    m: int, cfg: DetectorConfig, spec: WavepacketSpec, t: float, t0: float = 0.0
) -> complex:
    """Collective-mode amplitude when the detector is split into m blocks.

    Each block couples to its own probe; the collective readout mode sees
    g -> g/sqrt(m) and a decay kappa_sigma = m * kappa_a, giving the
    sqrt(m) displacement reduction relative to the single-probe device.
    """
    if m < 1:
        raise ConfigError(f"block count must be >= 1, got {m}")
    return langevin_mean(
        t,
        cfg,
        spec,
        t0=t0,
        g=cfg.g_tau / np.sqrt(m),
        kappa_a=m * cfg.kappa_a_tau,
    )
