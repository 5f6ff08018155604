"""Homodyne-record post-processing: matched filtering, click thresholds,
detector figures of merit, and Wigner-function evaluation.

Everything here is a pure function over trajectory records and score arrays,
so analyses are trivially parallel and reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

from .conveyor import EnsembleResult, TrajectoryRecord, _write_manifest, read_manifest
from .errors import ConfigError

__all__ = [
    "MatchedFilter",
    "DetectionReport",
    "build_filter",
    "filtered_signal",
    "filtered_series",
    "score_records",
    "optimize_threshold",
    "assignment_fidelity",
    "assignment_report",
    "roc_curve",
    "save_roc",
    "load_roc",
    "wigner",
]

_GRID_TOL = 1e-9


@dataclass(frozen=True)
class MatchedFilter:
    """Filter samples on a uniform time grid covering [0, tau_m].

    Normalized so that sum(f**2) * dt = 1, which makes the vacuum score a
    zero-mean unit-variance Gaussian regardless of the filter shape.
    """

    t: np.ndarray
    f: np.ndarray
    dt: float
    tau_m: float

    def __post_init__(self):
        if self.t.shape != self.f.shape or self.t.ndim != 1:
            raise ValueError("filter grid and samples must be matching 1-d arrays")

    @property
    def n_samples(self) -> int:
        return len(self.f)


@dataclass(frozen=True)
class DetectionReport:
    """Click statistics and figures of merit for one operating point."""

    eta: float
    p_dark: float
    fidelity: float
    stderr: float
    threshold: float
    tau_m: float
    n_click_1: int
    n_traj_1: int
    n_click_0: int
    n_traj_0: int

    def save(self, path) -> None:
        _write_manifest(
            path,
            {
                "eta": repr(self.eta),
                "p_dark": repr(self.p_dark),
                "fidelity": repr(self.fidelity),
                "stderr": repr(self.stderr),
                "threshold": repr(self.threshold),
                "tau_m": repr(self.tau_m),
                "n_click_1": self.n_click_1,
                "n_traj_1": self.n_traj_1,
                "n_click_0": self.n_click_0,
                "n_traj_0": self.n_traj_0,
            },
        )

    @classmethod
    def load(cls, path) -> "DetectionReport":
        raw = read_manifest(path)
        return cls(
            eta=float(raw["eta"]),
            p_dark=float(raw["p_dark"]),
            fidelity=float(raw["fidelity"]),
            stderr=float(raw["stderr"]),
            threshold=float(raw["threshold"]),
            tau_m=float(raw["tau_m"]),
            n_click_1=int(raw["n_click_1"]),
            n_traj_1=int(raw["n_traj_1"]),
            n_click_0=int(raw["n_click_0"]),
            n_traj_0=int(raw["n_traj_0"]),
        )


# -- matched filter -----------------------------------------------------------


def build_filter(ensemble: EnsembleResult, tau_m: float) -> MatchedFilter:
    """Matched filter f(t) proportional to the ensemble-mean signal on [0, tau_m]."""
    if tau_m <= 0:
        raise ConfigError("measurement window tau_m must be positive")
    t = np.asarray(ensemble.t, dtype=float)
    dt = float(t[1] - t[0])
    if tau_m > t[-1] + _GRID_TOL:
        raise ConfigError(
            f"tau_m = {tau_m} exceeds the ensemble record length {t[-1]}"
        )
    mask = t <= tau_m + _GRID_TOL
    f = np.asarray(ensemble.mean_y, dtype=float)[mask].copy()
    norm = math.sqrt(float(np.sum(f * f)) * dt)
    if norm == 0.0:
        raise ConfigError("ensemble mean signal is identically zero: degenerate filter")
    f /= norm
    return MatchedFilter(t=t[mask].copy(), f=f, dt=dt, tau_m=tau_m)


def _record_current(record: TrajectoryRecord) -> tuple[np.ndarray, float]:
    if record.j_hom is None:
        raise ConfigError("trajectory record carries no homodyne current")
    t = np.asarray(record.t, dtype=float)
    return np.asarray(record.j_hom, dtype=float), float(t[1] - t[0])


def filtered_signal(
    record: TrajectoryRecord,
    filt: MatchedFilter,
    t_eval: float = 0.0,
    maximize: bool = False,
) -> float:
    """Filtered current score sum_k f(t_k) J(t_eval + t_k) dt.

    With ``maximize=True`` the score is max_t of the filtered current over all
    window placements that fit inside the record, for use when the arrival
    time is not known a priori.
    """
    if maximize:
        _, series = filtered_series(record, filt)
        return float(series.max())
    j, dt = _record_current(record)
    if abs(dt - filt.dt) > _GRID_TOL:
        raise ConfigError(
            f"record time step {dt} does not match filter time step {filt.dt}"
        )
    start = int(round(t_eval / dt))
    if abs(start * dt - t_eval) > _GRID_TOL:
        raise ConfigError(f"t_eval = {t_eval} is not on the record time grid")
    stop = start + filt.n_samples
    if start < 0 or stop > len(j):
        raise ConfigError("measurement window exceeds the recorded trajectory")
    return float(np.dot(filt.f, j[start:stop]) * dt)


def filtered_series(
    record: TrajectoryRecord, filt: MatchedFilter
) -> tuple[np.ndarray, np.ndarray]:
    """Filtered current at every window placement; returns (t_eval grid, scores)."""
    j, dt = _record_current(record)
    if abs(dt - filt.dt) > _GRID_TOL:
        raise ConfigError(
            f"record time step {dt} does not match filter time step {filt.dt}"
        )
    n = len(j) - filt.n_samples + 1
    if n < 1:
        raise ConfigError("measurement window exceeds the recorded trajectory")
    scores = np.correlate(j, filt.f, mode="valid") * dt
    return np.arange(n) * dt, scores


def score_records(
    records,
    filt: MatchedFilter,
    t_eval: float = 0.0,
    maximize: bool = False,
) -> np.ndarray:
    """Score every non-failed record; failed trajectories are skipped."""
    return np.array(
        [
            filtered_signal(rec, filt, t_eval=t_eval, maximize=maximize)
            for rec in records
            if not rec.failed
        ]
    )


# -- thresholding and figures of merit ---------------------------------------


def assignment_fidelity(eta: float, p_dark: float) -> float:
    return 0.5 * (eta + 1.0 - p_dark)


def _click_fractions(scores_photon, scores_vacuum, threshold):
    s1 = np.asarray(scores_photon, dtype=float)
    s0 = np.asarray(scores_vacuum, dtype=float)
    if len(s1) == 0 or len(s0) == 0:
        raise ConfigError("both score sets must be nonempty")
    eta = float(np.mean(s1 > threshold))
    p_dark = float(np.mean(s0 > threshold))
    return eta, p_dark


def optimize_threshold(scores_photon, scores_vacuum) -> float:
    """Threshold maximizing the assignment fidelity on the empirical scores.

    Candidates are the midpoints between adjacent distinct values of the
    pooled sorted scores, plus guards below and above all scores; ties are
    broken toward lower dark-count probability.
    """
    s1 = np.asarray(scores_photon, dtype=float)
    s0 = np.asarray(scores_vacuum, dtype=float)
    if len(s1) == 0 or len(s0) == 0:
        raise ConfigError("both score sets must be nonempty")
    pooled = np.unique(np.concatenate([s1, s0]))
    span = max(pooled[-1] - pooled[0], 1.0)
    candidates = np.concatenate(
        [
            [pooled[0] - 0.5 * span],
            0.5 * (pooled[1:] + pooled[:-1]),
            [pooled[-1] + 0.5 * span],
        ]
    )
    best_thr = candidates[0]
    best_f = -1.0
    best_pd = 2.0
    for thr in candidates:
        eta, p_dark = _click_fractions(s1, s0, thr)
        f = assignment_fidelity(eta, p_dark)
        if f > best_f or (f == best_f and p_dark < best_pd):
            best_thr, best_f, best_pd = thr, f, p_dark
    return float(best_thr)


def assignment_report(
    scores_photon, scores_vacuum, threshold: float, tau_m: float
) -> DetectionReport:
    s1 = np.asarray(scores_photon, dtype=float)
    s0 = np.asarray(scores_vacuum, dtype=float)
    if len(s1) == 0 or len(s0) == 0:
        raise ConfigError("both score sets must be nonempty")
    n_click_1 = int(np.sum(s1 > threshold))
    n_click_0 = int(np.sum(s0 > threshold))
    eta = n_click_1 / len(s1)
    p_dark = n_click_0 / len(s0)
    fidelity = assignment_fidelity(eta, p_dark)
    n_eff = 0.5 * (len(s1) + len(s0))
    stderr = math.sqrt(max(fidelity * (1.0 - fidelity), 0.0) / n_eff)
    return DetectionReport(
        eta=eta,
        p_dark=p_dark,
        fidelity=fidelity,
        stderr=stderr,
        threshold=float(threshold),
        tau_m=float(tau_m),
        n_click_1=n_click_1,
        n_traj_1=len(s1),
        n_click_0=n_click_0,
        n_traj_0=len(s0),
    )


def roc_curve(scores_photon, scores_vacuum) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(thresholds, eta, p_dark) swept over all distinct pooled score values."""
    s1 = np.asarray(scores_photon, dtype=float)
    s0 = np.asarray(scores_vacuum, dtype=float)
    if len(s1) == 0 or len(s0) == 0:
        raise ConfigError("both score sets must be nonempty")
    pooled = np.unique(np.concatenate([s1, s0]))
    span = max(pooled[-1] - pooled[0], 1.0)
    thresholds = np.concatenate(
        [
            [pooled[0] - 0.5 * span],
            0.5 * (pooled[1:] + pooled[:-1]),
            [pooled[-1] + 0.5 * span],
        ]
    )
    eta = np.array([float(np.mean(s1 > thr)) for thr in thresholds])
    p_dark = np.array([float(np.mean(s0 > thr)) for thr in thresholds])
    return thresholds, eta, p_dark


def save_roc(path, thresholds, eta, p_dark) -> None:
    np.savetxt(
        path,
        np.column_stack([p_dark, eta, thresholds]),
        header="p_dark\teta\tthreshold",
        delimiter="\t",
    )


def load_roc(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    data = np.atleast_2d(np.loadtxt(path, delimiter="\t"))
    return data[:, 2], data[:, 1], data[:, 0]


# -- Wigner function ----------------------------------------------------------


def _check_density_matrix(rho: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ConfigError("density matrix must be square")
    if np.abs(rho - rho.conj().T).max() > tol:
        raise ConfigError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > 1e-6:
        raise ConfigError("density matrix is not trace-1")
    evals = np.linalg.eigvalsh(rho)
    if evals.min() < -1e-8:
        raise ConfigError(f"density matrix has negative eigenvalue {evals.min():.3e}")
    return rho


def wigner(rho: np.ndarray, x_grid, y_grid) -> np.ndarray:
    """Wigner function W(x, y) of a single-mode state in the Fock basis.

    Quadrature convention x = sqrt(2) Re(alpha), y = sqrt(2) Im(alpha), so a
    coherent state alpha0 appears centered at (sqrt(2) Re alpha0,
    sqrt(2) Im alpha0) and the vacuum has W(0, 0) = 1/pi.  Uses the displaced
    parity expression with associated-Laguerre matrix elements; the result is
    shaped (len(y_grid), len(x_grid)).
    """
    rho = _check_density_matrix(rho)
    dim = rho.shape[0]
    x = np.asarray(x_grid, dtype=float)
    y = np.asarray(y_grid, dtype=float)
    alpha = (x[None, :] + 1j * y[:, None]) / math.sqrt(2.0)
    r2 = 4.0 * np.abs(alpha) ** 2
    w = np.zeros(alpha.shape)
    # <m|Pi(alpha)|n> = e^{-2|a|^2} (-1)^n sqrt(n!/m!) (2a)^{m-n} L_n^{m-n}(4|a|^2), m >= n
    for n in range(dim):
        w += ((-1) ** n * rho[n, n].real) * eval_genlaguerre(n, 0, r2)
        for m in range(n + 1, dim):
            if rho[n, m] == 0:
                continue
            scale = (-1) ** n * math.exp(0.5 * (gammaln(n + 1) - gammaln(m + 1)))
            term = scale * (2.0 * alpha) ** (m - n) * eval_genlaguerre(n, m - n, r2)
            w += 2.0 * (rho[n, m] * term).real
    # 1/pi prefactor: W is normalized over the (x, y) quadrature plane,
    # where d^2alpha = dx dy / 2
    return (1.0 / math.pi) * np.exp(-0.5 * r2) * w
