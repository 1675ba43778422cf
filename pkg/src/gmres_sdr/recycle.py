"""Sketched harmonic Ritz extraction and recycle-space maintenance."""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .counters import Counters

__all__ = [
    "RecycleSpace",
    "HarmonicPencil",
    "HarmonicPairs",
    "DEFAULT_RANK_TOL",
    "truncated_svd",
    "harmonic_pencil",
    "harmonic_pairs",
    "update_recycle",
    "refresh_for_new_matrix",
    "dump_recycle",
    "load_recycle",
]

DEFAULT_RANK_TOL = 1e-12
PROVENANCES = ("fresh", "reused", "exact-resketch", "inexact-carryover")


@dataclass
class RecycleSpace:
    """Augmentation basis ``U`` with its sketches ``SU = S U`` and ``SAU = S A U``.

    When ``provenance == "inexact-carryover"`` the ``SAU`` block was built
    with a previous system matrix and is only an approximation.
    """

    U: np.ndarray
    SU: np.ndarray
    SAU: np.ndarray
    provenance: str = "fresh"

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        k = self.U.shape[1]
        if self.SU.shape[1] != k or self.SAU.shape[1] != k or self.SU.shape != self.SAU.shape:
            raise ValueError("U, SU and SAU must have matching column counts")

    @classmethod
    def empty(cls, N, s, dtype=np.float64):
        return cls(np.zeros((N, 0), dtype), np.zeros((s, 0), dtype), np.zeros((s, 0), dtype))

    @property
    def k(self):
        return self.U.shape[1]

    def drop(self, columns):
        keep = np.setdiff1d(np.arange(self.k), np.asarray(columns, dtype=int))
        return RecycleSpace(self.U[:, keep], self.SU[:, keep], self.SAU[:, keep], self.provenance)

    def with_provenance(self, provenance):
        return RecycleSpace(self.U, self.SU, self.SAU, provenance)


@dataclass
class HarmonicPencil:
    """Rank-``ell`` regularization ``SAW ~ U_l diag(Sigma_l) V_l^*`` and ``M_l = U_l^* SW V_l``."""

    U_l: np.ndarray
    Sigma_l: np.ndarray
    V_l: np.ndarray
    M_l: np.ndarray | None = None

    @property
    def ell(self):
        return self.Sigma_l.size


@dataclass
class HarmonicPairs:
    coeffs: np.ndarray
    theta: np.ndarray
    k: int
    notes: list = field(default_factory=list)


def truncated_svd(SAW, rank_tol=DEFAULT_RANK_TOL) -> HarmonicPencil:
    """Economic SVD of ``SAW`` keeping singular values above ``rank_tol * sigma_max``."""
    SAW = np.asarray(SAW)
    Ul, sig, Vh = scipy.linalg.svd(SAW, full_matrices=False, lapack_driver="gesvd")
    if sig.size == 0 or sig[0] == 0:
        raise ValueError("cannot regularize an all-zero sketched matrix")
    ell = int(np.sum(sig > rank_tol * sig[0]))
    return HarmonicPencil(Ul[:, :ell], sig[:ell], Vh[:ell].conj().T)


def harmonic_pencil(SAW, SW, rank_tol=DEFAULT_RANK_TOL) -> HarmonicPencil:
    pencil = truncated_svd(SAW, rank_tol)
    pencil.M_l = pencil.U_l.conj().T @ np.asarray(SW) @ pencil.V_l
    return pencil


def _select_largest(mu, k):
    """Mask of the ``k`` largest-modulus values.

    Ties go to the larger real part, then to the earlier position. A
    complex-conjugate pair straddling the cut is kept whole.
    """
    mu = np.asarray(mu)
    order = np.lexsort((np.arange(mu.size), -mu.real, -np.abs(mu)))
    n_sel = min(k, mu.size)
    if 0 < n_sel < mu.size:
        last, nxt = mu[order[n_sel - 1]], mu[order[n_sel]]
        scale = max(abs(last), np.finfo(float).tiny)
        if last.imag != 0 and abs(nxt - np.conj(last)) <= 1e-10 * scale:
            n_sel += 1
    mask = np.zeros(mu.size, dtype=bool)
    mask[order[:n_sel]] = True
    return mask


def harmonic_pairs(pencil: HarmonicPencil, k: int) -> HarmonicPairs:
    """Leading ``k`` sketched harmonic Ritz directions.

    Orders the QZ decomposition of ``(M_l, diag(Sigma_l))`` so that the
    generalized eigenvalues ``mu`` of largest modulus come first. These
    are reciprocals of the smallest harmonic Ritz values ``theta = 1/mu``.
    Returns coefficients ``V_l Z[:, :k]`` on the augmented basis.
    """
    notes = []
    ell = pencil.ell
    if k > ell:
        msg = f"recycle rank reduced from {k} to {ell} (numerical rank of sketched image)"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
        k = ell
    if k <= 0:
        return HarmonicPairs(np.zeros((pencil.V_l.shape[0], 0), pencil.V_l.dtype), np.zeros(0, complex), 0, notes)
    M = pencil.M_l
    B = np.diag(pencil.Sigma_l).astype(M.dtype)
    chosen = {}

    def select(alpha, beta):
        mu = np.asarray(alpha) / np.asarray(beta)
        mask = _select_largest(mu, k)
        chosen["n"] = int(mask.sum())
        return mask

    output = "complex" if np.iscomplexobj(M) else "real"
    _, _, alpha, beta, _, Z = scipy.linalg.ordqz(M, B, sort=select, output=output)
    k_used = chosen["n"]
    if k_used > k:
        notes.append(f"recycle rank extended to {k_used} to keep a complex-conjugate pair")
    theta = np.asarray(beta[:k_used]) / np.asarray(alpha[:k_used])
    return HarmonicPairs(pencil.V_l @ Z[:, :k_used], theta, k_used, notes)


def update_recycle(state, old: RecycleSpace, coeffs, counters: Counters | None = None, normalize=True) -> RecycleSpace:
    """New recycle space from harmonic coefficients on ``[U, V_j]``.

    ``U``, ``SU`` and ``SAU`` are all obtained by the same right
    multiplication; no matvecs or sketches are performed. Columns are
    rescaled to unit Euclidean norm (one inner product each).
    """
    counters = Counters() if counters is None else counters
    j = state.j
    C = np.asarray(coeffs)
    if C.shape[0] != old.k + j:
        raise ValueError("coefficient block does not match the augmented basis")
    Ck, Cv = C[: old.k], C[old.k :]
    U = old.U @ Ck + state.V_buf[:, :j] @ Cv
    SU = old.SU @ Ck + state.SV_buf[:, :j] @ Cv
    SAU = old.SAU @ Ck + state.SAV_buf[:, :j] @ Cv
    if normalize and U.shape[1]:
        norms = np.array([counters.norm(U[:, i]) for i in range(U.shape[1])])
        norms[norms == 0] = 1.0
        U, SU, SAU = U / norms, SU / norms, SAU / norms
    provenance = "inexact-carryover" if old.provenance == "inexact-carryover" else "fresh"
    return RecycleSpace(U, SU, SAU, provenance)


def refresh_for_new_matrix(space: RecycleSpace, A_new, S, mode="exact", counters: Counters | None = None) -> RecycleSpace:
    """Adapt a recycle space to a new system matrix.

    ``exact`` recomputes ``S A_new U`` (k matvecs and k sketches);
    ``inexact`` keeps the stale ``SAU`` and marks it as such.
    """
    counters = Counters() if counters is None else counters
    if mode == "exact":
        if space.k == 0:
            return space.with_provenance("exact-resketch")
        AU = counters.matvec(A_new, space.U)
        return RecycleSpace(space.U, space.SU, counters.sketch(S, AU), "exact-resketch")
    if mode == "inexact":
        return space.with_provenance("inexact-carryover")
    raise ValueError(f"unknown refresh mode {mode!r}")


_MAGIC = b"GSDRRCY1"


def dump_recycle(space: RecycleSpace, path):
    """Binary dump: magic, ``N s k is_complex`` as int64, provenance, then
    ``U``, ``SU``, ``SAU`` column-major."""
    is_complex = any(np.iscomplexobj(a) for a in (space.U, space.SU, space.SAU))
    dtype = np.complex128 if is_complex else np.float64
    prov = space.provenance.encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<4q", space.U.shape[0], space.SU.shape[0], space.k, int(is_complex)))
        fh.write(struct.pack("<q", len(prov)))
        fh.write(prov)
        for arr in (space.U, space.SU, space.SAU):
            fh.write(np.asarray(arr, dtype=dtype).tobytes(order="F"))


def load_recycle(path) -> RecycleSpace:
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError("not a recycle-space dump")
        N, s, k, is_complex = struct.unpack("<4q", fh.read(32))
        (plen,) = struct.unpack("<q", fh.read(8))
        prov = fh.read(plen).decode()
        dtype = np.dtype(np.complex128 if is_complex else np.float64)
        blocks = []
        for rows in (N, s, s):
            raw = fh.read(rows * k * dtype.itemsize)
            if len(raw) != rows * k * dtype.itemsize:
                raise ValueError("truncated recycle-space dump")
            blocks.append(np.frombuffer(raw, dtype=dtype).reshape((rows, k), order="F").copy())
    return RecycleSpace(*blocks, provenance=prov)
