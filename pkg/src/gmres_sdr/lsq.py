"""Incremental QR of the sketched image and Givens-based residual diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

__all__ = [
    "IncrementalQR",
    "RankDeficientError",
    "GivensDiagnostics",
    "RANK_TOL",
    "qr_append",
    "ls_solve",
    "givens_rotation",
    "givens_residual_track",
    "estimate_true_residual",
    "whiten_arnoldi",
    "augmented_hessenberg",
]

RANK_TOL = 1e-12


class RankDeficientError(np.linalg.LinAlgError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"sketched matrix is rank deficient at column {column}")


class IncrementalQR:
    """Economic QR factorization ``M = Q R`` grown one column at a time.

    Columns are orthogonalized by classical Gram-Schmidt with one full
    reorthogonalization pass. A column whose remainder falls below
    ``rank_tol`` times its norm is kept with a zero Q column and
    ``R[p, p] = 0``; its index is recorded in ``deficient``.
    """

    def __init__(self, s, capacity, dtype=np.float64, rank_tol=RANK_TOL):
        self.s = int(s)
        self.capacity = int(capacity)
        self.rank_tol = rank_tol
        self._Q = np.zeros((self.s, self.capacity), dtype=dtype, order="F")
        self._R = np.zeros((self.capacity, self.capacity), dtype=dtype)
        self.p = 0
        self.deficient = []

    @property
    def Q(self):
        return self._Q[:, : self.p]

    @property
    def R(self):
        return self._R[: self.p, : self.p]

    def append(self, col):
        col = np.asarray(col)
        if col.shape != (self.s,):
            raise ValueError(f"column must have length {self.s}")
        p = self.p
        if p >= min(self.s, self.capacity):
            raise ValueError("cannot append: factorization is full")
        if np.iscomplexobj(col) and not np.iscomplexobj(self._Q):
            self._Q = self._Q.astype(np.complex128)
            self._R = self._R.astype(np.complex128)
        Q = self._Q[:, :p]
        w = col.astype(self._Q.dtype, copy=True)
        r = np.zeros(p, dtype=self._Q.dtype)
        for _ in range(2):
            c = Q.conj().T @ w
            w -= Q @ c
            r += c
        rho = float(np.linalg.norm(w))
        self._R[:p, p] = r
        if rho <= self.rank_tol * float(np.linalg.norm(col)) or rho == 0.0:
            self._R[p, p] = 0.0
            self._Q[:, p] = 0.0
            self.deficient.append(p)
        else:
            self._R[p, p] = rho
            self._Q[:, p] = w / rho
        self.p = p + 1
        return self

    def solve(self, rhs, ncols=None):
        """Least-squares solve over the first ``ncols`` factored columns.

        Returns ``(y, sres)`` with ``sres = ‖rhs - M y‖``.
        """
        p = self.p if ncols is None else int(ncols)
        bad = [c for c in self.deficient if c < p]
        if bad:
            raise RankDeficientError(bad[0])
        rhs = np.asarray(rhs)
        Q = self._Q[:, :p]
        c = Q.conj().T @ rhs
        y = scipy.linalg.solve_triangular(self._R[:p, :p], c) if p else c
        sres = float(np.linalg.norm(rhs - Q @ c))
        return y, sres


def qr_append(qr: IncrementalQR, col) -> IncrementalQR:
    return qr.append(col)


def ls_solve(qr: IncrementalQR, rhs_sketch):
    return qr.solve(rhs_sketch)


@dataclass
class GivensDiagnostics:
    """Moduli of the Givens sines/cosines and the implied residual norms.

    ``sres[i]`` is the least-squares residual after ``i + 1`` columns;
    ``R`` and ``rotated_rhs`` hold the triangularized system.
    """

    sines: list = field(default_factory=list)
    cosines: list = field(default_factory=list)
    sres: list = field(default_factory=list)
    R: np.ndarray | None = None
    rotated_rhs: np.ndarray | None = None

    def solve(self, p=None):
        """Least-squares coefficients using the first ``p`` columns."""
        p = len(self.sines) if p is None else p
        return scipy.linalg.solve_triangular(self.R[:p, :p], self.rotated_rhs[:p])


def givens_rotation(a, b):
    """``(c, s, r)`` with real ``c >= 0`` such that ``[c, s; -conj(s), c]`` maps
    ``(a, b)`` to ``(r, 0)``."""
    rho = np.hypot(abs(a), abs(b))
    if rho == 0:
        return 1.0, 0.0, 0.0
    if a == 0:
        return 0.0, 1.0, b
    phase = a / abs(a)
    c = abs(a) / rho
    s = phase * np.conj(b) / rho
    return c, s, phase * rho


def givens_residual_track(H_hat, beta=1.0, rhs=None) -> GivensDiagnostics:
    """Triangularize an upper Hessenberg ``(p+1) x p`` matrix with Givens rotations.

    The right-hand side defaults to ``beta * e1``. After each rotation the
    least-squares residual is the norm of the not-yet-reachable tail of the
    rotated right-hand side; for ``beta * e1`` this equals
    ``beta * prod(|s_i|)``.
    """
    H = np.array(H_hat, dtype=np.result_type(np.asarray(H_hat).dtype, np.float64), copy=True)
    n1, p = H.shape
    if n1 != p + 1:
        raise ValueError("expected a (p+1) x p matrix")
    if np.any(np.tril(H, -2) != 0):
        raise ValueError("matrix has nonzero entries below the subdiagonal")
    if rhs is None:
        g = np.zeros(n1, dtype=H.dtype)
        g[0] = beta
    else:
        g = np.array(rhs, dtype=np.result_type(H.dtype, np.asarray(rhs).dtype), copy=True)
    diag = GivensDiagnostics()
    for i in range(p):
        c, s, r = givens_rotation(H[i, i], H[i + 1, i])
        row_i = c * H[i, i:] + s * H[i + 1, i:]
        row_n = -np.conj(s) * H[i, i:] + c * H[i + 1, i:]
        H[i, i:], H[i + 1, i:] = row_i, row_n
        H[i + 1, i] = 0.0
        g[i], g[i + 1] = c * g[i] + s * g[i + 1], -np.conj(s) * g[i] + c * g[i + 1]
        diag.sines.append(float(abs(s)))
        diag.cosines.append(float(abs(c)))
        diag.sres.append(float(np.linalg.norm(g[i + 1 :])))
    diag.R = H[:p, :]
    diag.rotated_rhs = g
    return diag


def estimate_true_residual(diag, eps_hat, prev_estimate):
    """Upper bound on the next true residual norm from the latest rotation.

    ``sqrt((s^2 + 2 eps (1 + c)) / (1 - eps^2)) * prev_estimate``; the
    sine and cosine are the last entries of ``diag``.
    """
    if not 0 <= eps_hat < 1:
        raise ValueError("eps_hat must lie in [0, 1)")
    s, c = diag.sines[-1], diag.cosines[-1]
    return float(np.sqrt((s * s + 2 * eps_hat * (1 + c)) / (1 - eps_hat**2)) * prev_estimate)


def _positive_qr(M):
    Q, R = np.linalg.qr(M)
    d = np.diag(R)
    phase = np.where(d == 0, 1.0, d / np.where(d == 0, 1.0, np.abs(d)))
    return Q * phase, (R.T * np.conj(phase)).T


def whiten_arnoldi(SV, H):
    """Turn ``S A V_m = S V_{m+1} H`` into ``S A V_m = W H_hat`` with orthonormal ``W``.

    Returns ``(W, R, H_hat)`` where ``S V_{m+1} = W R`` and ``H_hat = R H``
    is upper Hessenberg.
    """
    W, R = _positive_qr(np.asarray(SV))
    return W, R, R @ np.asarray(H)


def augmented_hessenberg(SAU, SV, H):
    """Hessenberg form of the augmented sketched relation.

    With ``[SAU, S V_{m+1}] = W R`` the augmented image satisfies
    ``S A [U, V_m] = W G`` where ``G = R blkdiag(I_k, H)`` has an upper
    triangular leading ``k x k`` block. Returns ``(W, R, G)``.
    """
    SAU = np.asarray(SAU)
    H = np.asarray(H)
    k = SAU.shape[1]
    W, R = _positive_qr(np.hstack([SAU, SV]))
    B = np.zeros((k + H.shape[0], k + H.shape[1]), dtype=np.result_type(R, H))
    B[:k, :k] = np.eye(k)
    B[k:, k:] = H
    return W, R, R @ B
