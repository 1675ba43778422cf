"""Dense diagnostics for checking sketched-GMRES theory at test scale.

Everything here forms explicit dense matrices and is meant for small ``N``.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .lsq import givens_residual_track, whiten_arnoldi
from .sketch import apply_sketch

__all__ = [
    "as_dense",
    "sketched_projectors",
    "projector_check",
    "sketched_gmres_iterate",
    "sketched_fom_iterate",
    "residual_chain",
    "subspace_angle",
    "angle_bound",
    "augmented_subproblem_solution",
]


def as_dense(A):
    if hasattr(A, "toarray"):
        return A.toarray()
    return np.asarray(A)


def sketched_projectors(A, V, S):
    """Residual and error projectors of sketched GMRES over ``range(V)``.

    ``Phi = A V (S A V)^+ S`` acts on residuals, ``Pi = V (S A V)^+ S A``
    on errors. Returns ``(Phi, Pi, SAV)``.
    """
    A = as_dense(A)
    V = np.asarray(V)
    Sd = apply_sketch(S, np.eye(A.shape[0]))
    AV = A @ V
    SAV = Sd @ AV
    P = np.linalg.pinv(SAV)
    return AV @ P @ Sd, V @ P @ Sd @ A, SAV


def projector_check(V, U, A, S):
    """Defects of the sketched projectors on the augmented basis ``[U, V]``.

    Returns a dict with the relative idempotency defects of ``Phi`` and
    ``Pi``, the defect of ``S Phi = Psi S`` (``Psi`` the orthogonal
    projector onto ``range(S A [U, V])``) and the relative distance of
    ``range(Phi)`` from ``range(A [U, V])``.
    """
    W = np.asarray(V) if U is None or np.asarray(U).size == 0 else np.hstack([U, V])
    A_d = as_dense(A)
    Phi, Pi, SAW = sketched_projectors(A_d, W, S)
    Sd = apply_sketch(S, np.eye(A_d.shape[0]))
    Q = scipy.linalg.orth(SAW)
    Psi = Q @ Q.conj().T
    QA = scipy.linalg.orth(A_d @ W)
    nphi = np.linalg.norm(Phi, 2)
    return {
        "phi_idempotency": np.linalg.norm(Phi @ Phi - Phi, 2) / max(nphi, 1.0),
        "pi_idempotency": np.linalg.norm(Pi @ Pi - Pi, 2) / max(np.linalg.norm(Pi, 2), 1.0),
        "sketch_intertwining": np.linalg.norm(Sd @ Phi - Psi @ Sd, 2) / max(np.linalg.norm(Sd, 2) * nphi, 1.0),
        "range_residual": np.linalg.norm(Phi - QA @ (QA.conj().T @ Phi), 2) / max(nphi, 1.0),
    }


def _whitened(state):
    _, R, H_hat = whiten_arnoldi(state.SV, state.H)
    return R, H_hat, state.beta * abs(R[0, 0])


def sketched_gmres_iterate(state):
    """Sketched GMRES correction ``V_m y`` from the whitened Hessenberg matrix.

    Returns ``(x, diag)`` with ``diag`` the Givens diagnostics.
    """
    _, H_hat, beta_s = _whitened(state)
    diag = givens_residual_track(H_hat, beta_s)
    return state.V_buf[:, : state.j] @ diag.solve(), diag


def sketched_fom_iterate(state, H_hat=None, beta_s=None):
    """Sketched FOM correction: solve the square whitened system ``H_m y = ‖S r0‖ e1``.

    Raises ``numpy.linalg.LinAlgError`` when ``H_m`` is singular.
    """
    if H_hat is None:
        _, H_hat, beta_s = _whitened(state)
    m = H_hat.shape[1]
    Hm = np.asarray(H_hat)[:m, :m]
    rhs = np.zeros(m, dtype=Hm.dtype)
    rhs[0] = beta_s
    if m and np.linalg.cond(Hm) > 1 / np.finfo(float).eps:
        raise np.linalg.LinAlgError("square sketched Hessenberg matrix is singular")
    y = np.linalg.solve(Hm, rhs)
    return state.V_buf[:, :m] @ y


def residual_chain(A, r0, V, S):
    """Norms entering the sketched/true GMRES residual chain over ``range(V)``.

    ``r`` is the true minimum-residual residual and ``rt`` the sketched
    one. Returns ``(‖r‖, ‖rt‖, ‖S rt‖, ‖S r‖)``.
    """
    A_d = as_dense(A)
    AV = A_d @ np.asarray(V)
    y = np.linalg.lstsq(AV, r0, rcond=None)[0]
    r = r0 - AV @ y
    yt = np.linalg.lstsq(apply_sketch(S, AV), apply_sketch(S, r0), rcond=None)[0]
    rt = r0 - AV @ yt
    return (
        float(np.linalg.norm(r)),
        float(np.linalg.norm(rt)),
        float(np.linalg.norm(apply_sketch(S, rt))),
        float(np.linalg.norm(apply_sketch(S, r))),
    )


def subspace_angle(v, W):
    """``(sin, cos)`` of the principal angle between vector ``v`` and ``range(W)``."""
    v = np.asarray(v)
    Q = scipy.linalg.orth(np.asarray(W))
    nv = np.linalg.norm(v)
    c = np.linalg.norm(Q.conj().T @ v) / nv
    s = np.linalg.norm(v - Q @ (Q.conj().T @ v)) / nv
    return float(s), float(min(c, 1.0))


def angle_bound(r0_norm, sin_theta, cos_theta, eps, loose=False):
    """Upper bound on the sketched GMRES residual norm from the angle between
    ``r0`` and ``A K_m``.

    The sharp form uses ``2 eps (1 + cos)``; ``loose=True`` replaces it by
    ``4 eps``.
    """
    extra = 4 * eps if loose else 2 * eps * (1 + cos_theta)
    return float(r0_norm * np.sqrt((sin_theta**2 + extra) / (1 - eps**2)))


def augmented_subproblem_solution(A, r0, U, V, S):
    """Correction assembled from the projected sketched subproblem.

    With ``Phi_U = A U (S A U)^+ S`` and ``Pi_U = U (S A U)^+ S A`` this
    solves ``min ‖S (I - Phi_U)(r0 - A V y)‖`` for ``t = V y`` and returns
    ``Pi_U eta0 + (I - Pi_U) t``, where ``Pi_U eta0 = U (S A U)^+ S r0``.
    """
    A_d = as_dense(A)
    U = np.asarray(U)
    V = np.asarray(V)
    SAU = apply_sketch(S, A_d @ U)
    P = np.linalg.pinv(SAU)
    SAV = apply_sketch(S, A_d @ V)
    Sr0 = apply_sketch(S, r0)
    # S (I - Phi_U) z = (I - SAU P) S z
    proj = lambda Z: Z - SAU @ (P @ Z)
    y = np.linalg.lstsq(proj(SAV), proj(Sr0), rcond=None)[0]
    t = V @ y
    Pi_eta0 = U @ (P @ Sr0)
    Pi_t = U @ (P @ apply_sketch(S, A_d @ t))
    return Pi_eta0 + t - Pi_t
