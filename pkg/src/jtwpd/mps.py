"""Finite-chain matrix product states with mixed-canonical bookkeeping.

Tensors are rank-3 complex arrays indexed (left bond, physical, right bond).
Sites left of the orthogonality center are left-isometries, sites right of it
right-isometries; center moves use QR sweeps.  Two-site gates are applied with
SVD truncation controlled by a discarded-weight tolerance and a hard bond cap,
and the cumulative discarded weight is tracked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg.lapack import zgesdd

from .errors import TruncationError

DEFAULT_MAX_BOND = 64
DEFAULT_SVD_TOL = 1e-8
# a single truncation discarding more relative weight than this aborts the run
HARD_DISCARD_LIMIT = 1e-4


@dataclass(frozen=True)
class TwoSiteGate:
    """Dense operator on the combined physical space of sites (site, site+1)."""

    matrix: np.ndarray
    site: int
    unitary: bool = True

    def check_unitary(self, tol: float = 1e-10) -> bool:
        m = self.matrix
        return bool(np.allclose(m @ m.conj().T, np.eye(m.shape[0]), atol=tol))


class MatrixProductState:
    def __init__(
        self,
        tensors: list[np.ndarray],
        labels: list | None = None,
        max_bond: int = DEFAULT_MAX_BOND,
        svd_tol: float = DEFAULT_SVD_TOL,
        ortho_center: int = 0,
    ):
        self.tensors = [np.asarray(t, dtype=complex) for t in tensors]
        if self.tensors[0].shape[0] != 1 or self.tensors[-1].shape[2] != 1:
            raise ValueError("boundary bond dimensions must be 1")
        for a, b in zip(self.tensors, self.tensors[1:]):
            if a.shape[2] != b.shape[0]:
                raise ValueError("neighboring bond dimensions are inconsistent")
        self.labels = list(labels) if labels is not None else list(range(len(tensors)))
        if len(self.labels) != len(self.tensors):
            raise ValueError("one label per site required")
        self._site_of = {lab: i for i, lab in enumerate(self.labels)}
        self.max_bond = max_bond
        self.svd_tol = svd_tol
        self.ortho_center = ortho_center
        self.cum_discarded = 0.0

    # -- construction ------------------------------------------------------

    @classmethod
    def product_state(
        cls,
        local_states: list[np.ndarray],
        labels: list | None = None,
        max_bond: int = DEFAULT_MAX_BOND,
        svd_tol: float = DEFAULT_SVD_TOL,
    ) -> "MatrixProductState":
        tensors = []
        for vec in local_states:
            vec = np.asarray(vec, dtype=complex)
            nrm = np.linalg.norm(vec)
            if abs(nrm - 1.0) > 1e-10:
                raise ValueError("local states must be normalized")
            tensors.append(vec.reshape(1, -1, 1))
        return cls(tensors, labels=labels, max_bond=max_bond, svd_tol=svd_tol)

    @classmethod
    def vacuum(
        cls, phys_dims: list[int], labels: list | None = None, **kwargs
    ) -> "MatrixProductState":
        states = []
        for d in phys_dims:
            v = np.zeros(d, dtype=complex)
            v[0] = 1.0
            states.append(v)
        return cls.product_state(states, labels=labels, **kwargs)

    # -- bookkeeping -------------------------------------------------------

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def phys_dims(self) -> list[int]:
        return [t.shape[1] for t in self.tensors]

    def site_of(self, label) -> int:
        return self._site_of[label]

    def bond_dims(self) -> list[int]:
        return [t.shape[2] for t in self.tensors[:-1]]

    def norm(self) -> float:
        t = self.tensors[self.ortho_center]
        return float(np.linalg.norm(t))

    # -- canonical-form maintenance -----------------------------------------

    def move_center(self, target: int) -> None:
        while self.ortho_center < target:
            i = self.ortho_center
            t = self.tensors[i]
            dl, d, dr = t.shape
            q, r = np.linalg.qr(t.reshape(dl * d, dr))
            self.tensors[i] = q.reshape(dl, d, -1)
            nxt = self.tensors[i + 1]
            self.tensors[i + 1] = np.tensordot(r, nxt, axes=(1, 0))
            self.ortho_center += 1
        while self.ortho_center > target:
            i = self.ortho_center
            t = self.tensors[i]
            dl, d, dr = t.shape
            # M = L Q with row-isometric Q, via QR of the conjugate transpose
            q, r = np.linalg.qr(t.reshape(dl, d * dr).conj().T)
            self.tensors[i] = q.conj().T.reshape(-1, d, dr)
            prev = self.tensors[i - 1]
            self.tensors[i - 1] = np.tensordot(prev, r.conj().T, axes=(2, 0))
            self.ortho_center -= 1

    # -- gates ---------------------------------------------------------------

    def apply_two_site_gate(
        self,
        site: int,
        matrix: np.ndarray,
        swap: bool = False,
        center_after: str = "right",
        renormalize: bool = True,
    ) -> None:
        """Apply a dense two-site operator at (site, site+1).

        ``swap=True`` additionally exchanges the two physical systems after
        the gate (a fused gate+swap), including the label/dimension
        bookkeeping.  ``center_after`` selects which of the two sites ends up
        holding the orthogonality center.
        """
        if not 0 <= site < self.n_sites - 1:
            raise IndexError(f"no bond at site {site}")
        if self.ortho_center not in (site, site + 1):
            self.move_center(site)
        t1, t2 = self.tensors[site], self.tensors[site + 1]
        dl, d1, _ = t1.shape
        _, d2, dr = t2.shape
        if matrix.shape != (d1 * d2, d1 * d2):
            raise ValueError(
                f"gate shape {matrix.shape} does not match physical dims ({d1},{d2})"
            )
        k = t1.shape[2]
        theta = t1.reshape(dl * d1, k) @ t2.reshape(k, d2 * dr)
        theta = theta.reshape(dl, d1, d2, dr).transpose(1, 2, 0, 3)
        theta = matrix @ theta.reshape(d1 * d2, dl * dr)
        theta = theta.reshape(d1, d2, dl, dr)
        if swap:
            theta = theta.transpose(1, 0, 2, 3)
            d1, d2 = d2, d1
            lab1 = self.labels[site]
            self.labels[site] = self.labels[site + 1]
            self.labels[site + 1] = lab1
            self._site_of[self.labels[site]] = site
            self._site_of[self.labels[site + 1]] = site + 1
        theta = theta.transpose(2, 0, 1, 3).reshape(dl * d1, d2 * dr)
        u, s, vh, info = zgesdd(theta, compute_uv=1, full_matrices=0)
        if info != 0:  # rare gesdd convergence failure; retry with gesvd path
            u, s, vh = np.linalg.svd(theta, full_matrices=False)
        keep, discarded, kept_norm = self._truncation_rank(s)
        self.cum_discarded += discarded
        u = u[:, :keep]
        s = s[:keep]
        vh = vh[:keep]
        if renormalize:
            s = s / kept_norm
        if center_after == "right":
            self.tensors[site] = u.reshape(dl, d1, keep)
            self.tensors[site + 1] = (s[:, None] * vh).reshape(keep, d2, dr)
            self.ortho_center = site + 1
        else:
            self.tensors[site] = (u * s[None, :]).reshape(dl, d1, keep)
            self.tensors[site + 1] = vh.reshape(keep, d2, dr)
            self.ortho_center = site

    def _truncation_rank(self, s: np.ndarray) -> tuple[int, float, float]:
        """Smallest rank whose relative discarded weight stays below svd_tol.

        Returns (keep, discarded fraction, Frobenius norm of the kept block).
        """
        cum = np.cumsum(s * s)
        total = float(cum[-1])
        if total == 0.0:
            raise TruncationError("two-site block collapsed to zero norm")
        keep = int(np.searchsorted(cum, total * (1.0 - self.svd_tol))) + 1
        keep = max(1, min(keep, len(s)))
        if keep > self.max_bond:
            capped = (total - float(cum[self.max_bond - 1])) / total
            if capped > HARD_DISCARD_LIMIT:
                raise TruncationError(
                    f"bond cap {self.max_bond} forces discarded weight "
                    f"{capped:.3e} > {HARD_DISCARD_LIMIT:.0e}"
                )
            keep = self.max_bond
        kept = float(cum[keep - 1])
        return keep, (total - kept) / total, math.sqrt(kept)

    def apply_gate(self, gate: TwoSiteGate, **kwargs) -> None:
        self.apply_two_site_gate(gate.site, gate.matrix, **kwargs)

    def swap_sites(self, site: int, center_after: str = "right") -> None:
        """Exchange the physical systems at (site, site+1)."""
        d1 = self.tensors[site].shape[1]
        d2 = self.tensors[site + 1].shape[1]
        eye = np.eye(d1 * d2)
        self.apply_two_site_gate(site, eye, swap=True, center_after=center_after)

    def apply_one_site(
        self, site: int, matrix: np.ndarray, renormalize: bool = False
    ) -> float:
        """Apply a single-site operator (need not be unitary).

        Returns the state norm after the update but before any
        renormalization, so callers can monitor nonunitary drift.
        """
        self.move_center(site)
        t = self.tensors[site]
        if matrix.shape != (t.shape[1], t.shape[1]):
            raise ValueError("operator dimension does not match site")
        t = np.tensordot(matrix, t, axes=(1, 1)).transpose(1, 0, 2)
        nrm = float(np.linalg.norm(t))
        if renormalize:
            if nrm == 0.0:
                raise TruncationError("one-site update annihilated the state")
            t = t / nrm
        self.tensors[site] = t
        return nrm

    # -- observables ---------------------------------------------------------

    def local_expectation(self, site: int, op: np.ndarray) -> complex:
        self.move_center(site)
        t = self.tensors[site]
        if op.shape != (t.shape[1], t.shape[1]):
            raise ValueError("operator dimension does not match site")
        m = t.transpose(1, 0, 2).reshape(t.shape[1], -1)
        val = np.vdot(m, op @ m)
        return complex(val)

    def reduced_density(self, site: int) -> np.ndarray:
        self.move_center(site)
        t = self.tensors[site]
        m = t.transpose(1, 0, 2).reshape(t.shape[1], -1)
        rho = m @ m.conj().T
        tr = np.trace(rho).real
        return rho / tr

    def population_snapshot(self) -> np.ndarray:
        """Number-operator expectation at every site, one left-to-right sweep."""
        out = np.empty(self.n_sites)
        self.move_center(0)
        for i in range(self.n_sites):
            t = self.tensors[i]
            n_op = np.arange(t.shape[1])
            weights = np.abs(t) ** 2
            out[i] = float(np.tensordot(n_op, weights.sum(axis=(0, 2)), axes=1))
            if i < self.n_sites - 1:
                self.move_center(i + 1)
        return out

    def to_statevector(self) -> np.ndarray:
        """Dense state vector; only sensible for small chains."""
        vec = self.tensors[0]
        for t in self.tensors[1:]:
            vec = np.tensordot(vec, t, axes=(vec.ndim - 1, 0))
        return vec.reshape(-1)

    # -- diagnostics ---------------------------------------------------------

    def isometry_residuals(self) -> list[float]:
        """Deviation of each tensor from its canonical isometry condition."""
        out = []
        for i, t in enumerate(self.tensors):
            dl, d, dr = t.shape
            if i < self.ortho_center:
                m = t.reshape(dl * d, dr)
                res = np.linalg.norm(m.conj().T @ m - np.eye(dr))
            elif i > self.ortho_center:
                m = t.reshape(dl, d * dr)
                res = np.linalg.norm(m @ m.conj().T - np.eye(dl))
            else:
                res = abs(np.linalg.norm(t) - 1.0)
            out.append(float(res))
        return out


def init_product_state(
    phys_dims: list[int],
    local_states: list[np.ndarray],
    labels: list | None = None,
    **kwargs,
) -> MatrixProductState:
    """Bond-dimension-1 MPS from per-site normalized vectors."""
    if len(phys_dims) != len(local_states):
        raise ValueError("phys_dims and local_states length mismatch")
    for d, v in zip(phys_dims, local_states):
        if len(v) != d:
            raise ValueError("local state dimension mismatch")
    return MatrixProductState.product_state(local_states, labels=labels, **kwargs)
