"""Truncated Arnoldi process with sketched basis and image."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .counters import Counters

__all__ = ["KrylovState", "ConvergedAtStart", "init_krylov", "arnoldi_step", "BREAKDOWN_TOL"]

BREAKDOWN_TOL = 1e-14


class ConvergedAtStart(ValueError):
    """Raised when the starting residual is exactly zero."""


@dataclass
class KrylovState:
    """Growing Krylov basis and its sketches.

    Buffers are preallocated for ``m_max`` steps; ``j`` is the number of
    completed steps, so the live blocks are ``V[:, :j+1]``,
    ``H[:j+1, :j]``, ``SV[:, :j+1]`` and ``SAV[:, :j]``.
    """

    V_buf: np.ndarray
    H_buf: np.ndarray
    SV_buf: np.ndarray
    SAV_buf: np.ndarray
    t: int
    m_max: int
    j: int = 0
    beta: float = 0.0
    breakdown: bool = False

    @property
    def V(self):
        return self.V_buf[:, : self.j + 1]

    @property
    def H(self):
        return self.H_buf[: self.j + 1, : self.j]

    @property
    def SV(self):
        return self.SV_buf[:, : self.j + 1]

    @property
    def SAV(self):
        return self.SAV_buf[:, : self.j]


def init_krylov(r0, S, t: int, m_max: int, counters: Counters | None = None, Sr0=None) -> KrylovState:
    """Start a basis at ``r0/‖r0‖``.

    ``Sr0`` may be passed when the sketch of ``r0`` is already known; the
    first basis sketch is then obtained by scaling instead of re-sketching.
    """
    counters = Counters() if counters is None else counters
    r0 = np.asarray(r0)
    if t < 1 or m_max < 1:
        raise ValueError("t and m_max must be positive")
    beta = counters.norm(r0)
    if beta == 0:
        raise ConvergedAtStart("converged at start: initial residual is zero")
    N = r0.shape[0]
    dtype = np.result_type(r0.dtype, np.float64)
    V = np.zeros((N, m_max + 1), dtype=dtype, order="F")
    H = np.zeros((m_max + 1, m_max), dtype=dtype)
    SV = np.zeros((S.s, m_max + 1), dtype=dtype, order="F")
    SAV = np.zeros((S.s, m_max), dtype=dtype, order="F")
    V[:, 0] = r0 / beta
    if Sr0 is None:
        Sr0 = counters.sketch(S, r0)
    SV[:, 0] = np.asarray(Sr0) / beta
    return KrylovState(V, H, SV, SAV, t=int(t), m_max=int(m_max), beta=beta)


def arnoldi_step(state: KrylovState, A, S, counters: Counters | None = None) -> KrylovState:
    """One truncated Arnoldi step (modified Gram-Schmidt over a window of ``t``).

    The new vector is orthogonalized against the last ``t`` basis vectors
    only, sketched once, and the sketched image ``S A v_j`` is assembled
    from the sketched basis and the new Hessenberg column. A relative
    subdiagonal below ``BREAKDOWN_TOL`` sets ``state.breakdown``.
    """
    counters = Counters() if counters is None else counters
    if state.breakdown:
        raise RuntimeError("cannot extend a Krylov basis after breakdown")
    j = state.j
    if j >= state.m_max:
        raise RuntimeError("Krylov basis is full")
    V, H = state.V_buf, state.H_buf
    w = counters.matvec(A, V[:, j])
    w_norm = float(np.linalg.norm(w))
    lo = max(j - state.t + 1, 0)
    for i in range(lo, j + 1):
        h = counters.dot(V[:, i], w)
        H[i, j] = h
        w = w - h * V[:, i]
    h_next = counters.norm(w)
    H[j + 1, j] = h_next
    sw = counters.sketch(S, w)
    if h_next <= BREAKDOWN_TOL * w_norm:
        state.breakdown = True
    if h_next > 0:
        V[:, j + 1] = w / h_next
        state.SV_buf[:, j + 1] = sw / h_next
    state.SAV_buf[:, j] = state.SV_buf[:, lo : j + 2] @ H[lo : j + 2, j]
    state.j = j + 1
    return state
