"""GMRES-SDR: sketched GMRES with deflated restarting and recycling."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg

from .arnoldi import ConvergedAtStart, arnoldi_step, init_krylov
from .counters import Counters
from .lsq import IncrementalQR, givens_rotation
from .recycle import (
    DEFAULT_RANK_TOL,
    RecycleSpace,
    harmonic_pairs,
    harmonic_pencil,
    refresh_for_new_matrix,
    update_recycle,
)
from .sketch import SketchOperator, identity_sketch, make_sketch

__all__ = [
    "SolverConfig",
    "SolveReport",
    "CycleResult",
    "solve_cycle",
    "solve",
    "solve_sequence",
    "solve_gmres_baseline",
]

log = logging.getLogger(__name__)

VARIANTS = ("reuse", "exact", "inexact")


@dataclass
class SolverConfig:
    """Parameters of a GMRES-SDR run.

    ``m`` bounds the dimension of the augmented search space ``[U, V]`` in
    a cycle, so each cycle takes at most ``m - dim(U)`` Arnoldi steps.
    ``max_restarts`` is the maximum number of cycles per system. ``s``
    defaults to ``10 (m + k)``.
    """

    m: int = 100
    t: int = 2
    k: int = 20
    s: int | None = None
    tol: float = 1e-6
    safety_init: float = 1.4
    max_restarts: int = 10
    seed: int = 0
    variant: str = "exact"
    rank_tol: float = DEFAULT_RANK_TOL
    stagnation_tol: float = 0.01

    def __post_init__(self):
        if self.s is None:
            self.s = 10 * (self.m + self.k)
        if not 0 <= self.k < self.m:
            raise ValueError("need 0 <= k < m")
        if self.t < 1:
            raise ValueError("t must be positive")
        if self.s < 2 * (self.m + self.k):
            raise ValueError("sketch dimension must satisfy s >= 2 (m + k)")
        if not 0 < self.tol < 1:
            raise ValueError("tol must lie in (0, 1)")
        if self.safety_init < 1:
            raise ValueError("safety_init must be >= 1")
        if self.max_restarts < 1:
            raise ValueError("max_restarts must be >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")

    def to_dict(self):
        return asdict(self)


@dataclass
class SolveReport:
    """Convergence history and work counts of one solve.

    Histories are ``(iteration, relative residual)`` pairs; true residuals
    are only recorded where they were actually computed.
    """

    solver: str = "gmres-sdr"
    label: str = ""
    sres_history: list = field(default_factory=list)
    true_residual_history: list = field(default_factory=list)
    matvecs: int = 0
    inner_products: int = 0
    sketches: int = 0
    cycles: int = 0
    iterations: int = 0
    final_relres: float = float("nan")
    status: str = "max_restarts"
    rhs_norm: float = 0.0
    ranks: list = field(default_factory=list)
    basis_conditions: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    elapsed: float = 0.0
    recycle: RecycleSpace | None = field(default=None, repr=False)

    @property
    def converged(self):
        return self.status == "converged"

    def add_counts(self, c: Counters):
        self.matvecs += c.matvecs
        self.inner_products += c.inner_products
        self.sketches += c.sketches


@dataclass
class CycleResult:
    x: np.ndarray
    r: np.ndarray
    res: float
    space: RecycleSpace
    converged: bool
    safety: float
    iterations: int
    sres: list
    true_res: list
    sres_start: float
    sres_end: float
    breakdown: bool = False
    ell: int | None = None
    basis_cond: float | None = None
    notes: list = field(default_factory=list)


def _load_recycle_columns(space, S_s, capacity, dtype, notes):
    """Factor the ``SAU`` block, dropping columns it cannot support."""
    qr = IncrementalQR(S_s, capacity, dtype=dtype)
    for c in range(space.k):
        qr.append(space.SAU[:, c])
    if qr.deficient:
        notes.append(f"dropped rank-deficient recycle columns {qr.deficient}")
        space = space.drop(qr.deficient)
        qr = IncrementalQR(S_s, capacity, dtype=dtype)
        for c in range(space.k):
            qr.append(space.SAU[:, c])
    return space, qr


def solve_cycle(A, r0, space: RecycleSpace, cfg: SolverConfig, S: SketchOperator, *, tol_abs,
                safety=None, counters=None, Sr0=None, it0=0, scale=1.0, callback=None) -> CycleResult:
    """One cycle of GMRES-SDR for ``A x = r0``.

    Runs truncated Arnoldi on ``r0`` while updating the QR factorization of
    ``[SAU, SAV]`` and the sketched residual ``sres``. The true residual is
    only formed once ``sres < tol_abs / safety`` or at the end of the
    cycle; a failed check raises ``safety`` to ``res / sres`` (never
    lowering it). The recycle space is then refreshed from the sketched
    harmonic Ritz vectors of the augmented space.

    ``callback(j, y, state, space)`` is invoked after every least-squares
    solve. Histories are stamped from ``it0`` and divided by ``scale``.
    """
    counters = Counters() if counters is None else counters
    safety = cfg.safety_init if safety is None else safety
    notes = []
    r0 = np.asarray(r0)
    dtype = np.result_type(r0.dtype, np.float64)
    if Sr0 is None:
        Sr0 = counters.sketch(S, r0)

    steps = max(cfg.m - space.k, 1)
    space, qr = _load_recycle_columns(space, S.s, space.k + steps, dtype, notes)
    steps = max(cfg.m - space.k, 1)
    state = init_krylov(r0, S, cfg.t, steps, counters, Sr0=Sr0)
    sres_start = float(np.linalg.norm(Sr0))
    sres_hist, true_hist = [], []
    x = r = None
    res = sres = np.inf
    converged = False
    while state.j < steps:
        arnoldi_step(state, A, S, counters)
        j = state.j
        qr.append(state.SAV_buf[:, j - 1])
        if qr.deficient and qr.deficient[-1] == space.k + j - 1:
            # the new sketched image adds no direction: stop at the previous step
            qr.deficient.pop()
            qr.p -= 1
            state.j -= 1
            state.breakdown = True
            notes.append(f"sketched Krylov image stagnated at step {j}")
            if state.j == 0:
                break
            j = state.j
        else:
            y, sres = qr.solve(Sr0)
            sres_hist.append((it0 + j, sres / scale))
            if callback is not None:
                callback(j, y, state, space)
        if sres < tol_abs / safety or j == steps or state.breakdown:
            y, sres = qr.solve(Sr0)
            x = space.U @ y[: space.k] + state.V_buf[:, :j] @ y[space.k :]
            r = r0 - counters.matvec(A, x)
            res = counters.norm(r)
            true_hist.append((it0 + j, res / scale))
            if res < tol_abs:
                converged = True
                break
            if state.breakdown:
                break
            if sres > 0:
                safety = max(safety, res / sres)
    if x is None:
        # no usable step at all
        x = np.zeros_like(r0)
        r = r0.copy()
        res = counters.norm(r)
        true_hist.append((it0, res / scale))

    # condition of the whitening factor of S V, reported but not acted on
    basis_cond = float(np.linalg.cond(state.SV_buf[:, : state.j + 1])) if state.j > 0 else None
    ell = None
    if cfg.k > 0 and state.j > 0:
        j = state.j
        SAW = np.hstack([space.SAU, state.SAV_buf[:, :j]])
        SW = np.hstack([space.SU, state.SV_buf[:, :j]])
        pencil = harmonic_pencil(SAW, SW, cfg.rank_tol)
        pairs = harmonic_pairs(pencil, cfg.k)
        ell = pencil.ell
        notes.extend(pairs.notes)
        space = update_recycle(state, space, pairs.coeffs, counters)
    return CycleResult(
        x=x, r=r, res=res, space=space, converged=converged, safety=safety,
        iterations=state.j, sres=sres_hist, true_res=true_hist,
        sres_start=sres_start, sres_end=sres if np.isfinite(sres) else sres_start,
        breakdown=state.breakdown, ell=ell, basis_cond=basis_cond, notes=notes,
    )


def _make_sketch(cfg, N, sketch):
    if sketch is not None:
        if sketch.n != N:
            raise ValueError("sketch dimension does not match the system")
        return sketch
    if cfg.s >= N:
        # nothing to compress: sketched GMRES reduces to the classical method
        return identity_sketch(N)
    return make_sketch(N, cfg.s, cfg.seed)


def solve(A, b, x0=None, cfg: SolverConfig | None = None, *, sketch=None, space=None,
          label="", callback=None, counters=None):
    """Restarted GMRES-SDR for ``A x = b`` to relative residual ``cfg.tol``.

    The recycle space is carried between cycles (deflated restarting) and
    the final one is attached to the report as ``report.recycle``.
    Returns ``(x, report)``.
    """
    cfg = SolverConfig() if cfg is None else cfg
    t_start = time.perf_counter()
    b = np.asarray(b)
    N = b.shape[0]
    if A.shape != (N, N):
        raise ValueError(f"dimension mismatch: A is {A.shape}, b has length {N}")
    S = _make_sketch(cfg, N, sketch)
    counters = Counters() if counters is None else counters
    start = counters.snapshot()
    report = SolveReport(label=label)
    dtype = np.result_type(b.dtype, getattr(A, "dtype", np.float64), np.float64)
    x = np.zeros(N, dtype) if x0 is None else np.array(x0, dtype=dtype)
    space = RecycleSpace.empty(N, S.s, dtype) if space is None else space

    bnorm = counters.norm(b)
    report.rhs_norm = bnorm
    if bnorm == 0:
        report.status, report.final_relres = "converged", 0.0
        report.recycle = space
        x[:] = 0
        report.add_counts(counters - start)
        report.elapsed = time.perf_counter() - t_start
        return x, report
    tol_abs = cfg.tol * bnorm
    if x0 is None or not np.any(x):
        r = b.astype(dtype, copy=True)
    else:
        r = b - counters.matvec(A, x)
    res = counters.norm(r)
    report.true_residual_history.append((0, res / bnorm))
    status = "converged" if res < tol_abs else "max_restarts"
    safety = cfg.safety_init
    it = 0
    while status != "converged" and report.cycles < cfg.max_restarts:
        try:
            cyc = solve_cycle(A, r, space, cfg, S, tol_abs=tol_abs, safety=safety, counters=counters,
                              it0=it, scale=bnorm, callback=callback)
        except ConvergedAtStart:
            status = "converged"
            break
        report.cycles += 1
        it += cyc.iterations
        x += cyc.x
        r, res, space, safety = cyc.r, cyc.res, cyc.space, cyc.safety
        report.sres_history.extend(cyc.sres)
        report.true_residual_history.extend(cyc.true_res)
        report.notes.extend(cyc.notes)
        if cyc.ell is not None:
            report.ranks.append(cyc.ell)
        if cyc.basis_cond is not None:
            report.basis_conditions.append(cyc.basis_cond)
        if cyc.converged:
            status = "converged"
        elif cyc.iterations == 0 or (cyc.breakdown and cyc.sres_end >= cyc.sres_start):
            status = "breakdown"
        elif cfg.stagnation_tol > 0 and cyc.sres_end >= (1 - cfg.stagnation_tol) * cyc.sres_start:
            status = "diverged"
        if status != "max_restarts":
            break
        log.debug("cycle %d: relres %.3e", report.cycles, res / bnorm)
    report.iterations = it
    report.status = status
    report.final_relres = res / bnorm
    report.recycle = space
    report.add_counts(counters - start)
    report.elapsed = time.perf_counter() - t_start
    return x, report


def solve_sequence(seq, cfg: SolverConfig | None = None, *, sketch=None, space=None, callback=None):
    """Solve a sequence of systems, threading the recycle space through it.

    For an unchanged matrix the space is reused as is. When the matrix
    changes, ``cfg.variant == "inexact"`` carries the stale ``S A U``
    forward, any other variant recomputes it (k extra matvecs). A failing
    problem is recorded with ``status="error"`` and the sequence goes on.
    """
    cfg = SolverConfig() if cfg is None else cfg
    problems = list(seq)
    if not problems:
        raise ValueError("empty problem sequence")
    N = problems[0].matrix.shape[0]
    S = _make_sketch(cfg, N, sketch)
    shared = getattr(seq, "shared_matrix_flag", False)
    reports = []
    prev_A = None
    for i, prob in enumerate(problems):
        counters = Counters()
        local_cfg = cfg
        if getattr(prob, "target_tol", None) and prob.target_tol != cfg.tol:
            local_cfg = SolverConfig(**{**cfg.to_dict(), "tol": prob.target_tol})
        t0 = time.perf_counter()
        try:
            if space is not None and space.k and prev_A is not None:
                if shared or prob.matrix is prev_A:
                    space = space.with_provenance("reused")
                else:
                    mode = "inexact" if cfg.variant == "inexact" else "exact"
                    space = refresh_for_new_matrix(space, prob.matrix, S, mode, counters)
            _, rep = solve(prob.matrix, prob.rhs, None, local_cfg, sketch=S, space=space,
                           label=prob.label, callback=callback, counters=counters)
            # include the refresh work done before the solve
            rep.matvecs, rep.inner_products, rep.sketches = counters.matvecs, counters.inner_products, counters.sketches
            rep.elapsed = time.perf_counter() - t0
            space = rep.recycle
        except Exception as exc:  # recorded, sequence continues
            log.exception("problem %d failed", i)
            rep = SolveReport(label=prob.label, status="error", notes=[f"{type(exc).__name__}: {exc}"])
            rep.add_counts(counters)
            rep.elapsed = time.perf_counter() - t0
        reports.append(rep)
        prev_A = prob.matrix
    return reports


def solve_gmres_baseline(A, b, x0=None, m=100, tol=1e-6, max_restarts=10, *, label="", callback=None):
    """Textbook restarted GMRES(m): modified Gram-Schmidt Arnoldi and Givens rotations.

    ``max_restarts`` counts cycles, as in :func:`solve`. ``callback(j, y, V)``
    receives the least-squares coefficients after every step.
    """
    t_start = time.perf_counter()
    b = np.asarray(b)
    N = b.shape[0]
    if A.shape != (N, N):
        raise ValueError(f"dimension mismatch: A is {A.shape}, b has length {N}")
    counters = Counters()
    report = SolveReport(solver="gmres", label=label)
    dtype = np.result_type(b.dtype, getattr(A, "dtype", np.float64), np.float64)
    x = np.zeros(N, dtype) if x0 is None else np.array(x0, dtype=dtype)
    bnorm = counters.norm(b)
    report.rhs_norm = bnorm
    if bnorm == 0:
        x[:] = 0
        report.status, report.final_relres = "converged", 0.0
        report.add_counts(counters)
        return x, report
    tol_abs = tol * bnorm
    r = b.astype(dtype, copy=True) if not np.any(x) else b - counters.matvec(A, x)
    beta = counters.norm(r)
    report.true_residual_history.append((0, beta / bnorm))
    status = "converged" if beta < tol_abs else "max_restarts"
    it = 0
    while status != "converged" and report.cycles < max_restarts:
        report.cycles += 1
        V = np.zeros((N, m + 1), dtype, order="F")
        H = np.zeros((m + 1, m), dtype)
        V[:, 0] = r / beta
        cs = np.zeros(m, dtype)
        sn = np.zeros(m, dtype)
        g = np.zeros(m + 1, dtype)
        g[0] = beta
        j = 0
        lucky = False
        while j < m:
            w = counters.matvec(A, V[:, j])
            for i in range(j + 1):
                H[i, j] = counters.dot(V[:, i], w)
                w -= H[i, j] * V[:, i]
            H[j + 1, j] = counters.norm(w)
            if H[j + 1, j] > 0:
                V[:, j + 1] = w / H[j + 1, j]
            else:
                lucky = True
            for i in range(j):
                H[i, j], H[i + 1, j] = (cs[i] * H[i, j] + sn[i] * H[i + 1, j],
                                        -np.conj(sn[i]) * H[i, j] + cs[i] * H[i + 1, j])
            cs[j], sn[j], H[j, j] = givens_rotation(H[j, j], H[j + 1, j])
            H[j + 1, j] = 0.0
            g[j], g[j + 1] = cs[j] * g[j], -np.conj(sn[j]) * g[j]
            j += 1
            est = abs(g[j])
            report.sres_history.append((it + j, est / bnorm))
            if callback is not None:
                callback(j, scipy.linalg.solve_triangular(H[:j, :j], g[:j]), V[:, :j])
            if est < tol_abs or lucky:
                break
        y = scipy.linalg.solve_triangular(H[:j, :j], g[:j])
        dx = V[:, :j] @ y
        x += dx
        r = r - counters.matvec(A, dx)
        beta = counters.norm(r)
        it += j
        report.true_residual_history.append((it, beta / bnorm))
        if beta < tol_abs:
            status = "converged"
        elif beta == 0 or lucky:
            status = "breakdown"
            break
    report.iterations = it
    report.status = status
    report.final_relres = beta / bnorm
    report.add_counts(counters)
    report.elapsed = time.perf_counter() - t_start
    return x, report
