"""Trotterized "conveyor belt" MPS evolution of the monitored detector.

Time and space are discretized with dx = v*dt, so at step i the waveguide
mode with label j sits at position x_j(i) = (j + i + 1/2)*dx - 1/2; the
detector window covers the modes -i <= j < N_x - i.  A two-level emitter
feeds each mode just before it enters the window, with its decay clock
anchored so the emitted packet follows the trajectory of the analytic
envelope (modes are inert outside the window, so late injection at the
window edge is exactly equivalent to a far-left emitter).

Per step the probe site is swapped through the active part of the window,
applying the number-conserving interaction gates one bond at a time; the
gates of one step mutually commute in the single-photon sector, so the sweep
direction alternates instead of returning.  When kappa_a > 0, the step ends
with a one-site Euler-Maruyama update of the y-quadrature homodyne
stochastic Schroedinger equation on the probe, yielding the current sample
J = sqrt(kappa_a)<y> + dW/dt.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import DetectorConfig, WavepacketSpec, config_hash
from .errors import ConfigError, IntegrationError, TruncationError
from .keldysh import destroy
from .model import coupling_profile, emitter_survival
from .mps import DEFAULT_MAX_BOND, DEFAULT_SVD_TOL, MatrixProductState, TwoSiteGate

# chain cell of the physical emitter site: one cell left of the window edge
EMITTER_CELL = -1
# modes with expected photon population below this are skipped by the sweep
POPULATION_CUTOFF = 1e-12
# emitter treated as empty (gates stop) below this survival probability
SURVIVAL_CUTOFF = 1e-14
# per-step transfer probabilities below this count as "no emission yet"
EMISSION_EPS = 1e-16
# documented stability bound for the Euler-Maruyama homodyne update
KAPPA_DT_BOUND = 1e-2 * (1.0 + 1e-9)
# a homodyne substep moving the norm outside [1-NORM_GUARD, 1+NORM_GUARD]
# signals step-size instability
NORM_GUARD = 0.5


def code_version() -> str:
    try:
        from importlib.metadata import version

        return version("artifact")
    except Exception:
        return "unknown"


def _expm_hermitian(h: np.ndarray, dt: float) -> np.ndarray:
    """exp(-1j*dt*h) for Hermitian h via eigendecomposition."""
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * dt * w)) @ v.conj().T


def emitter_clock_offset(cfg: DetectorConfig, spec: WavepacketSpec) -> float:
    """Time at which the envelope peak passes the physical emitter site.

    The emitter sits at x_e = (EMITTER_CELL + 1/2)*dx - 1/2 just left of the
    window; the packet center follows x(t) = t + x0, so the peak passes at
    t = x_e - x0.  The extra half step aligns the center of each per-step
    deposit interval with the position assigned to the fed mode.
    """
    x_e = (EMITTER_CELL + 0.5) * cfg.dx - 0.5
    return x_e - spec.x0 + 0.5 * cfg.dt


def _emitter_matrix(theta: float, d_e: int, d_w: int) -> np.ndarray:
    """Excitation-conserving rotation on (emitter, waveguide), emitter left.

    Rotates |e,0> -> cos(theta)|e,0> - i sin(theta)|g,1> (and h.c. partner),
    acting as the exactly unitarized first-order transfer of amplitude
    ~ sqrt(kappa_c dt).
    """
    u = np.eye(d_e * d_w, dtype=complex)
    e0 = 1 * d_w + 0  # |e, 0>
    g1 = 0 * d_w + 1  # |g, 1>
    c, s = math.cos(theta), math.sin(theta)
    u[e0, e0] = c
    u[g1, g1] = c
    u[g1, e0] = -1j * s
    u[e0, g1] = -1j * s
    return u


def _interaction_blocks(cfg: DetectorConfig) -> tuple[np.ndarray, list[list[np.ndarray]]]:
    """Probe-space blocks of the interaction gates, one per window position.

    The gate at position x_m is block diagonal in the waveguide occupation n:
    B_n(x_m) = exp(-1j*dt*[n*A(x_m) + H_r/N_x]) with
    A(x) = chi(x)(a^dag a + alpha^2) + g(x)(a^dag + a) and
    H_r = (K/2) a^dag^2 a^2.  Returns (kerr_phases, blocks[m][n]); the n = 0
    block is the diagonal Kerr-only phase gate diag(kerr_phases).
    """
    d_w, d_p, _ = cfg.fock_dims
    dt = cfg.dt
    a = destroy(d_p)
    n_op = a.conj().T @ a
    x_pl = a + a.conj().T
    num = np.arange(d_p)
    h_kerr = 0.5 * cfg.kerr * num * (num - 1.0)  # diagonal of (K/2) a^dag^2 a^2
    kerr_phases = np.exp(-1j * dt * h_kerr / cfg.n_sites)
    positions = (np.arange(cfg.n_sites) + 0.5) * cfg.dx - 0.5
    g_vals = np.atleast_1d(coupling_profile(positions, cfg))
    finite_chi = math.isfinite(cfg.chi_ratio)
    blocks = []
    for m in range(cfg.n_sites):
        g_m = g_vals[m]
        a_op = g_m * x_pl
        if finite_chi:
            chi_m = g_m / cfg.chi_ratio
            alpha = cfg.chi_ratio
            a_op = a_op + chi_m * (n_op + alpha**2 * np.eye(d_p))
        row = [np.diag(kerr_phases)]
        for n in range(1, d_w):
            h = n * a_op + np.diag(h_kerr) / cfg.n_sites
            row.append(_expm_hermitian(h, dt))
        blocks.append(row)
    return kerr_phases, blocks


def build_interaction_gate(
    i: int,
    n: int,
    cfg: DetectorConfig,
    probe_side: str = "right",
    site: int = 0,
) -> TwoSiteGate:
    """Dense gate between waveguide mode label n and the probe at step i.

    ``probe_side`` selects the operator ordering on the bond.  The mode must
    be inside the detector window at step i.
    """
    m = n + i
    if not 0 <= m < cfg.n_sites:
        raise ConfigError(
            f"mode {n} is outside the detector window at step {i}"
        )
    d_w, d_p, _ = cfg.fock_dims
    _, blocks = _interaction_blocks(cfg)
    mats = blocks[m]
    gate = np.zeros((d_w * d_p, d_w * d_p), dtype=complex)
    for occ in range(d_w):
        proj = np.zeros((d_w, d_w))
        proj[occ, occ] = 1.0
        if probe_side == "right":
            gate += np.kron(proj, mats[occ])
        else:
            gate += np.kron(mats[occ], proj)
    return TwoSiteGate(matrix=gate, site=site, unitary=True)


def build_emitter_gate(
    i: int, cfg: DetectorConfig, spec: WavepacketSpec, site: int = 0
) -> TwoSiteGate:
    """Emitter-to-waveguide transfer gate for step i (emitter on the left).

    The rotation angle reproduces the exact per-step survival ratio
    exp(-int kappa_c dt) of the shaped emitter decay.
    """
    d_w, _, d_e = cfg.fock_dims
    t_e = emitter_clock_offset(cfg, spec)
    s0 = emitter_survival(i * cfg.dt - t_e, spec)
    s1 = emitter_survival((i + 1) * cfg.dt - t_e, spec)
    if s0 <= SURVIVAL_CUTOFF:
        theta = 0.0
    else:
        ratio = min(max(s1 / s0, 0.0), 1.0)
        theta = math.acos(math.sqrt(ratio))
    return TwoSiteGate(matrix=_emitter_matrix(theta, d_e, d_w), site=site)


@dataclass
class Snapshot:
    """Per-site photon populations (and probe state) at one instant."""

    t: float
    positions: np.ndarray
    populations: np.ndarray
    probe_rho: np.ndarray


@dataclass
class TrajectoryRecord:
    """One stochastic (or deterministic) trajectory on a common time grid."""

    t: np.ndarray
    y_mean: np.ndarray
    y_var: np.ndarray
    x_mean: np.ndarray
    j_hom: np.ndarray | None
    seed: int
    discarded_weight: float
    config_hash: str
    snapshots: list[Snapshot] = field(default_factory=list)
    failed: bool = False
    error: str | None = None


@dataclass
class EnsembleResult:
    """Trajectory-averaged moments plus the underlying records."""

    t: np.ndarray
    mean_y: np.ndarray
    var_y: np.ndarray
    mean_x: np.ndarray
    n_traj: int
    n_failed: int
    base_seed: int
    config_hash: str
    records: list[TrajectoryRecord] = field(default_factory=list)

    @classmethod
    def from_records(
        cls, records: list[TrajectoryRecord], base_seed: int
    ) -> "EnsembleResult":
        good = [r for r in records if not r.failed]
        if not good:
            raise IntegrationError("all trajectories in the ensemble failed")
        t = good[0].t
        mean_y = np.mean([r.y_mean for r in good], axis=0)
        var_y = np.mean([r.y_var for r in good], axis=0)
        mean_x = np.mean([r.x_mean for r in good], axis=0)
        return cls(
            t=t,
            mean_y=mean_y,
            var_y=var_y,
            mean_x=mean_x,
            n_traj=len(good),
            n_failed=len(records) - len(good),
            base_seed=base_seed,
            config_hash=good[0].config_hash,
            records=records,
        )


def derived_seed(base_seed: int, k: int) -> int:
    """Deterministic per-trajectory seed from (base_seed, index)."""
    ss = np.random.SeedSequence([int(base_seed), int(k)])
    return int(ss.generate_state(1, np.uint64)[0])


class ConveyorSimulation:
    """Reusable gate schedule + chain layout for one detector configuration.

    Building the schedule once and calling :meth:`run` per seed avoids
    repeating the gate exponentials for every trajectory of an ensemble.
    """

    def __init__(
        self,
        cfg: DetectorConfig,
        spec: WavepacketSpec | None = None,
        *,
        max_bond: int = DEFAULT_MAX_BOND,
        svd_tol: float = DEFAULT_SVD_TOL,
        probe_init: np.ndarray | None = None,
    ):
        cfg.validate()
        if spec is None:
            spec = cfg.wavepacket()
        spec.validate()
        if cfg.kappa_a_tau * cfg.dt > KAPPA_DT_BOUND:
            raise ConfigError(
                f"kappa_a*dt = {cfg.kappa_a_tau * cfg.dt:.3g} exceeds the "
                "Euler-Maruyama stability bound 1e-2; increase n_sites"
            )
        self.cfg = cfg
        self.spec = spec
        self.max_bond = max_bond
        self.svd_tol = svd_tol
        self.hash = config_hash(cfg, spec)
        d_w, d_p, d_e = cfg.fock_dims
        if probe_init is not None:
            probe_init = np.asarray(probe_init, dtype=complex)
            if probe_init.shape != (d_p,):
                raise ConfigError("probe_init dimension mismatch")
        self.probe_init = probe_init

        # probe-site operators
        a = destroy(d_p)
        self._a_op = a
        self._n_op = a.conj().T @ a
        self._x_op = (a + a.conj().T) / math.sqrt(2.0)
        self._y_op = 1j * (a.conj().T - a) / math.sqrt(2.0)
        self._y2_op = self._y_op @ self._y_op
        self._eye_p = np.eye(d_p, dtype=complex)

        self._build_schedule()
        self._build_gates()

    # -- precomputation ----------------------------------------------------

    def _build_schedule(self) -> None:
        cfg, spec = self.cfg, self.spec
        n_steps, dt = cfg.n_steps, cfg.dt
        t_e = emitter_clock_offset(cfg, spec)
        t_grid = np.arange(n_steps + 1) * dt
        surv = np.asarray(emitter_survival(t_grid - t_e, spec))
        ratio = np.ones(n_steps)
        ok = surv[:-1] > SURVIVAL_CUTOFF
        ratio[ok] = np.clip(surv[1:][ok] / surv[:-1][ok], 0.0, 1.0)
        transfer = 1.0 - ratio
        active = ok & (transfer > EMISSION_EPS)
        if not active.any():
            raise ConfigError(
                "no photon emission falls inside the simulated time window"
            )
        self._i_start = int(np.argmax(active))
        self._i_stop = int(len(active) - 1 - np.argmax(active[::-1]))
        self._theta = np.arccos(np.sqrt(ratio))
        # expected photon population of mode -1-k, fed during step k
        weights = surv[:-1] - surv[1:]
        heavy = np.nonzero(weights > POPULATION_CUTOFF)[0]
        if heavy.size:
            self._jw_lo = -1 - int(heavy[-1])
            self._jw_hi = -1 - int(heavy[0])
        else:
            self._jw_lo, self._jw_hi = 0, -1  # empty range

    def _build_gates(self) -> None:
        cfg = self.cfg
        d_w, d_p, _ = cfg.fock_dims
        kerr_phases, blocks = _interaction_blocks(cfg)
        self._kerr_phases = kerr_phases
        self._kerr_nonzero = bool(np.any(np.abs(kerr_phases - 1.0) > 0.0))
        projs = [np.zeros((d_w, d_w)) for _ in range(d_w)]
        for occ in range(d_w):
            projs[occ][occ, occ] = 1.0
        self._gate_probe_left = []
        self._gate_wg_left = []
        for m in range(cfg.n_sites):
            gp = sum(np.kron(blocks[m][occ], projs[occ]) for occ in range(d_w))
            gw = sum(np.kron(projs[occ], blocks[m][occ]) for occ in range(d_w))
            self._gate_probe_left.append(np.ascontiguousarray(gp))
            self._gate_wg_left.append(np.ascontiguousarray(gw))

    def _initial_mps(self, photon: bool) -> MatrixProductState:
        d_w, d_p, d_e = self.cfg.fock_dims
        j_min = -1 - self._i_stop
        j_max = -1 - self._i_start
        labels: list = [("wg", j) for j in range(j_min, j_max + 1)]
        # emitter starts immediately left of its first target mode j_max
        labels.insert(len(labels) - 1, "emitter")
        labels.append("probe")
        states = []
        for lab in labels:
            if lab == "emitter":
                v = np.zeros(d_e, dtype=complex)
                v[1 if photon else 0] = 1.0
            elif lab == "probe":
                if self.probe_init is not None:
                    v = self.probe_init / np.linalg.norm(self.probe_init)
                else:
                    v = np.zeros(d_p, dtype=complex)
                    v[0] = 1.0
            else:
                v = np.zeros(d_w, dtype=complex)
                v[0] = 1.0
            states.append(v)
        return MatrixProductState.product_state(
            states, labels=labels, max_bond=self.max_bond, svd_tol=self.svd_tol
        )

    # -- per-step pieces -----------------------------------------------------

    def _active_range(self, i: int, photon: bool):
        if not photon:
            return None
        lo = max(-i, self._jw_lo)
        hi = min(-1, self.cfg.n_sites - 1 - i, self._jw_hi)
        if lo > hi:
            return None
        return lo, hi

    def _emitter_op(self, mps: MatrixProductState, i: int) -> None:
        d_w, _, d_e = self.cfg.fock_dims
        e = mps.site_of("emitter")
        target = ("wg", -1 - i)
        assert mps.labels[e + 1] == target
        theta = float(self._theta[i])
        if theta > 0.0:
            mps.apply_two_site_gate(
                e, _emitter_matrix(theta, d_e, d_w), center_after="left"
            )
        if i < self._i_stop:
            mps.swap_sites(e - 1, center_after="left")

    def _position_probe_left_of(self, mps: MatrixProductState, j: int) -> None:
        while True:
            p = mps.site_of("probe")
            s = mps.site_of(("wg", j))
            if p == s - 1:
                return
            if p < s:
                mps.swap_sites(p, center_after="right")
            else:
                mps.swap_sites(p - 1, center_after="left")

    def _position_probe_right_of(self, mps: MatrixProductState, j: int) -> None:
        while True:
            p = mps.site_of("probe")
            s = mps.site_of(("wg", j))
            if p == s + 1:
                return
            if p > s:
                mps.swap_sites(p - 1, center_after="left")
            else:
                mps.swap_sites(p, center_after="right")

    def _sweep_right(
        self, mps: MatrixProductState, i: int, a_lo: int, a_hi: int
    ) -> int:
        self._position_probe_left_of(mps, a_lo)
        for j in range(a_lo, a_hi + 1):
            p = mps.site_of("probe")
            assert mps.labels[p + 1] == ("wg", j)
            mps.apply_two_site_gate(
                p, self._gate_probe_left[j + i], swap=True, center_after="right"
            )
        return a_hi - a_lo + 1

    def _sweep_left(
        self, mps: MatrixProductState, i: int, a_lo: int, a_hi: int
    ) -> int:
        self._position_probe_right_of(mps, a_hi)
        for j in range(a_hi, a_lo - 1, -1):
            p = mps.site_of("probe")
            assert mps.labels[p - 1] == ("wg", j)
            mps.apply_two_site_gate(
                p - 1, self._gate_wg_left[j + i], swap=True, center_after="left"
            )
        return a_hi - a_lo + 1

    def _probe_moments(self, mps: MatrixProductState):
        rho = mps.reduced_density(mps.site_of("probe"))
        ym = float(np.trace(rho @ self._y_op).real)
        y2 = float(np.trace(rho @ self._y2_op).real)
        xm = float(np.trace(rho @ self._x_op).real)
        return ym, y2 - ym * ym, xm

    def _homodyne(self, mps: MatrixProductState, rng, dt: float) -> float:
        """One Euler-Maruyama substep of the dual-channel homodyne SSE.

        kappa_a is split into two monitored channels c1 = -i sqrt(ka/2) a
        (y homodyne, reported) and c2 = sqrt(ka/2) a (x homodyne, discarded),
        which keeps the state pure while the reported current obeys
        J = sqrt(kappa_a)<y> + dW/dt with a unit-variance Wiener increment.
        """
        ka = self.cfg.kappa_a_tau
        p = mps.site_of("probe")
        rho = mps.reduced_density(p)
        ym = float(np.trace(rho @ self._y_op).real)
        xm = float(np.trace(rho @ self._x_op).real)
        dw = rng.normal(0.0, math.sqrt(dt), size=2)
        m1 = math.sqrt(ka) * ym
        m2 = math.sqrt(ka) * xm
        c1 = -1j * math.sqrt(ka / 2.0) * self._a_op
        c2 = math.sqrt(ka / 2.0) * self._a_op
        update = (
            self._eye_p
            + dt * (-0.5 * ka * self._n_op - (m1**2 + m2**2) / 8.0 * self._eye_p)
            + (0.5 * m1 * dt + dw[0]) * c1
            + (0.5 * m2 * dt + dw[1]) * c2
            - 0.5 * (m1 * dw[0] + m2 * dw[1]) * self._eye_p
        )
        norm = mps.apply_one_site(p, update, renormalize=True)
        if not math.isfinite(norm) or abs(norm - 1.0) > NORM_GUARD:
            raise IntegrationError(
                f"homodyne substep norm drift {abs(norm - 1.0):.3g} signals "
                f"step-size instability (kappa_a*dt = {ka * dt:.3g})"
            )
        return m1 + dw[0] / dt

    def _take_snapshot(self, mps: MatrixProductState, k: int) -> Snapshot:
        pops = mps.population_snapshot()
        xs, ns = [], []
        for lab, pop in zip(mps.labels, pops):
            if isinstance(lab, tuple) and lab[0] == "wg":
                xs.append((lab[1] + k + 0.5) * self.cfg.dx - 0.5)
                ns.append(pop)
        rho = mps.reduced_density(mps.site_of("probe"))
        return Snapshot(
            t=k * self.cfg.dt,
            positions=np.array(xs),
            populations=np.array(ns),
            probe_rho=rho,
        )

    # -- trajectory ----------------------------------------------------------

    def step(self, mps: MatrixProductState, i: int, rng=None, photon: bool = True):
        """Advance one trotter step; returns (gates applied, current or None)."""
        cfg = self.cfg
        blk = self._active_range(i, photon)
        emitting = photon and self._i_start <= i <= self._i_stop
        if blk is None:
            if emitting:
                self._emitter_op(mps, i)
            gates = 0
        else:
            a_lo, a_hi = blk
            p = mps.site_of("probe")
            s_lo = mps.site_of(("wg", a_lo))
            s_hi = mps.site_of(("wg", a_hi))
            if abs(p - s_lo) <= abs(p - s_hi):
                if emitting:
                    self._emitter_op(mps, i)
                gates = self._sweep_right(mps, i, a_lo, a_hi)
            else:
                gates = self._sweep_left(mps, i, a_lo, a_hi)
                if emitting:
                    self._emitter_op(mps, i)
        if self._kerr_nonzero and gates < cfg.n_sites:
            remainder = np.diag(self._kerr_phases ** (cfg.n_sites - gates))
            mps.apply_one_site(mps.site_of("probe"), remainder)
        sample = None
        if cfg.kappa_a_tau > 0.0:
            if rng is None:
                raise ConfigError("kappa_a > 0 requires an RNG for homodyne")
            sample = self._homodyne(mps, rng, cfg.dt)
        return gates, sample

    def run(
        self,
        seed: int,
        *,
        photon: bool = True,
        snapshot_times=(),
    ) -> TrajectoryRecord:
        cfg = self.cfg
        n_steps, dt = cfg.n_steps, cfg.dt
        monitored = cfg.kappa_a_tau > 0.0
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        mps = self._initial_mps(photon)
        t = np.arange(n_steps + 1) * dt
        y_mean = np.empty(n_steps + 1)
        y_var = np.empty(n_steps + 1)
        x_mean = np.empty(n_steps + 1)
        j_hom = np.zeros(n_steps + 1) if monitored else None
        y_mean[0], y_var[0], x_mean[0] = self._probe_moments(mps)
        snap_steps = {
            int(round(ts / dt)) for ts in snapshot_times if 0 <= ts <= n_steps * dt
        }
        snapshots = []
        if 0 in snap_steps:
            snapshots.append(self._take_snapshot(mps, 0))
        for i in range(n_steps):
            _, sample = self.step(mps, i, rng, photon=photon)
            if monitored:
                j_hom[i + 1] = sample
            y_mean[i + 1], y_var[i + 1], x_mean[i + 1] = self._probe_moments(mps)
            if (i + 1) in snap_steps:
                snapshots.append(self._take_snapshot(mps, i + 1))
        return TrajectoryRecord(
            t=t,
            y_mean=y_mean,
            y_var=y_var,
            x_mean=x_mean,
            j_hom=j_hom,
            seed=int(seed),
            discarded_weight=mps.cum_discarded,
            config_hash=self.hash,
            snapshots=snapshots,
        )


def run_trajectory(
    cfg: DetectorConfig,
    spec: WavepacketSpec | None = None,
    seed: int = 0,
    *,
    photon: bool = True,
    snapshot_times=(),
    max_bond: int = DEFAULT_MAX_BOND,
    svd_tol: float = DEFAULT_SVD_TOL,
    sim: ConveyorSimulation | None = None,
) -> TrajectoryRecord:
    """Run one trajectory; integration/truncation failures yield a record
    marked failed with diagnostics instead of raising."""
    if sim is None:
        sim = ConveyorSimulation(cfg, spec, max_bond=max_bond, svd_tol=svd_tol)
    try:
        return sim.run(seed, photon=photon, snapshot_times=snapshot_times)
    except (IntegrationError, TruncationError) as exc:
        n = cfg.n_steps + 1
        zeros = np.zeros(n)
        return TrajectoryRecord(
            t=np.arange(n) * cfg.dt,
            y_mean=zeros,
            y_var=zeros.copy(),
            x_mean=zeros.copy(),
            j_hom=zeros.copy() if cfg.kappa_a_tau > 0 else None,
            seed=int(seed),
            discarded_weight=float("nan"),
            config_hash=sim.hash,
            failed=True,
            error=f"{type(exc).__name__}: {exc}",
        )


def _ensemble_job(args):
    cfg, spec, seed, photon, max_bond, svd_tol = args
    return run_trajectory(
        cfg, spec, seed, photon=photon, max_bond=max_bond, svd_tol=svd_tol
    )


def run_ensemble(
    cfg: DetectorConfig,
    spec: WavepacketSpec | None = None,
    n_traj: int = 1,
    base_seed: int = 0,
    *,
    photon: bool = True,
    n_workers: int = 1,
    max_bond: int = DEFAULT_MAX_BOND,
    svd_tol: float = DEFAULT_SVD_TOL,
) -> EnsembleResult:
    """Average ``n_traj`` trajectories with seeds derived from ``base_seed``.

    Results are assembled in seed order irrespective of completion order;
    failed trajectories are excluded from the averages and counted.
    """
    if n_traj < 1:
        raise ConfigError("n_traj must be >= 1")
    seeds = [derived_seed(base_seed, k) for k in range(n_traj)]
    if n_workers > 1:
        jobs = [
            (cfg, spec, s, photon, max_bond, svd_tol) for s in seeds
        ]
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            records = list(pool.map(_ensemble_job, jobs))
    else:
        sim = ConveyorSimulation(cfg, spec, max_bond=max_bond, svd_tol=svd_tol)
        records = [
            run_trajectory(cfg, spec, s, photon=photon, sim=sim) for s in seeds
        ]
    return EnsembleResult.from_records(records, base_seed)


# ---------------------------------------------------------------------------
# Plain-text persistence: delimited series + key = value manifests.


def _write_manifest(path, entries: dict) -> None:
    with open(path, "w") as fh:
        for key, val in entries.items():
            fh.write(f"{key} = {val}\n")


def read_manifest(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            out[key.strip()] = val.strip()
    return out


def save_trajectory(record: TrajectoryRecord, path) -> None:
    cols = ["t", "y_mean", "y_var", "x_mean"]
    data = [record.t, record.y_mean, record.y_var, record.x_mean]
    if record.j_hom is not None:
        cols.append("j_hom")
        data.append(record.j_hom)
    header = (
        f"config_hash: {record.config_hash}\n"
        f"seed: {record.seed}\n"
        f"discarded_weight: {record.discarded_weight!r}\n"
        f"failed: {int(record.failed)}\n"
        f"error: {record.error or ''}\n"
        f"columns: {' '.join(cols)}"
    )
    np.savetxt(path, np.column_stack(data), header=header)
    stem, ext = os.path.splitext(str(path))
    for idx, snap in enumerate(record.snapshots):
        np.savetxt(
            f"{stem}_snap{idx}{ext or '.tsv'}",
            np.column_stack([snap.positions, snap.populations]),
            header=f"t: {snap.t!r}\ncolumns: x population",
        )
        rho = snap.probe_rho
        np.savetxt(
            f"{stem}_rho{idx}{ext or '.tsv'}",
            np.column_stack([rho.real, rho.imag]),
            header=f"t: {snap.t!r}\nlayout: [Re(rho) | Im(rho)]",
        )


def load_trajectory(path) -> TrajectoryRecord:
    meta = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, val = line[1:].strip().partition(":")
            meta[key.strip()] = val.strip()
    data = np.loadtxt(path)
    data = np.atleast_2d(data)
    cols = meta.get("columns", "").split()
    series = {name: data[:, k] for k, name in enumerate(cols)}
    return TrajectoryRecord(
        t=series["t"],
        y_mean=series["y_mean"],
        y_var=series["y_var"],
        x_mean=series["x_mean"],
        j_hom=series.get("j_hom"),
        seed=int(meta.get("seed", 0)),
        discarded_weight=float(meta.get("discarded_weight", "nan")),
        config_hash=meta.get("config_hash", ""),
        failed=bool(int(meta.get("failed", 0))),
        error=meta.get("error") or None,
    )


def save_ensemble(result: EnsembleResult, directory, include_records=True) -> None:
    os.makedirs(directory, exist_ok=True)
    _write_manifest(
        os.path.join(directory, "manifest.txt"),
        {
            "config_hash": result.config_hash,
            "base_seed": result.base_seed,
            "n_traj": result.n_traj,
            "n_failed": result.n_failed,
            "version": code_version(),
            "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        },
    )
    np.savetxt(
        os.path.join(directory, "series.tsv"),
        np.column_stack([result.t, result.mean_y, result.var_y, result.mean_x]),
        header="columns: t mean_y var_y mean_x",
    )
    if include_records:
        rec_dir = os.path.join(directory, "records")
        os.makedirs(rec_dir, exist_ok=True)
        for k, rec in enumerate(result.records):
            save_trajectory(rec, os.path.join(rec_dir, f"traj_{k:05d}.tsv"))


def load_ensemble(directory, load_records=True) -> EnsembleResult:
    meta = read_manifest(os.path.join(directory, "manifest.txt"))
    data = np.atleast_2d(np.loadtxt(os.path.join(directory, "series.tsv")))
    records = []
    rec_dir = os.path.join(directory, "records")
    if load_records and os.path.isdir(rec_dir):
        for name in sorted(os.listdir(rec_dir)):
            if name.startswith("traj_") and "snap" not in name and "rho" not in name:
                records.append(load_trajectory(os.path.join(rec_dir, name)))
    return EnsembleResult(
        t=data[:, 0],
        mean_y=data[:, 1],
        var_y=data[:, 2],
        mean_x=data[:, 3],
        n_traj=int(meta.get("n_traj", 0)),
        n_failed=int(meta.get("n_failed", 0)),
        base_seed=int(meta.get("base_seed", 0)),
        config_hash=meta.get("config_hash", ""),
        records=records,
    )
