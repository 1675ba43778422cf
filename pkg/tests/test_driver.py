from types import SimpleNamespace

import numpy as np
import pytest

from gmres_sdr.counters import Counters
from gmres_sdr.driver import SolverConfig, solve, solve_cycle, solve_gmres_baseline, solve_sequence
from gmres_sdr.linop import (
    ProblemInstance,
    ProblemSequence,
    SparseMatrix,
    convdiff_sequence,
    gen_convdiff,
    gen_neumann,
    neumann_sequence,
)
from gmres_sdr.recycle import RecycleSpace
from gmres_sdr.sketch import apply_sketch, identity_sketch, make_sketch

from conftest import dense_gmres_iterates, random_system


def test_config_defaults_and_validation():
    cfg = SolverConfig()
    assert (cfg.m, cfg.t, cfg.k, cfg.s, cfg.safety_init, cfg.max_restarts) == (100, 2, 20, 1200, 1.4, 10)
    assert SolverConfig(m=30, k=5).s == 350
    for bad in [dict(k=100), dict(k=-1), dict(s=100), dict(tol=0.0), dict(tol=1.0), dict(safety_init=0.9),
                dict(variant="sloppy"), dict(t=0), dict(max_restarts=0)]:
        with pytest.raises(ValueError):
            SolverConfig(**bad)
    assert SolverConfig().to_dict()["variant"] == "exact"


def test_identity_system_one_iteration():
    A = SparseMatrix.identity(200)
    b = np.random.default_rng(0).standard_normal(200)
    x, rep = solve(A, b, cfg=SolverConfig(m=10, k=0, s=60), sketch=make_sketch(200, 60))
    assert rep.converged and rep.iterations == 1
    assert np.linalg.norm(b - x) <= 1e-14 * np.linalg.norm(b)


def test_zero_rhs():
    x, rep = solve(gen_convdiff(5, 1.0), np.zeros(25), cfg=SolverConfig(m=10, k=2))
    assert rep.converged and rep.matvecs == 0 and not np.any(x)
    x, rep = solve_gmres_baseline(gen_convdiff(5, 1.0), np.zeros(25))
    assert rep.converged and rep.matvecs == 0


def test_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        solve(SparseMatrix.identity(4), np.ones(5))
    with pytest.raises(ValueError, match="dimension"):
        solve_gmres_baseline(SparseMatrix.identity(4), np.ones(5))
    with pytest.raises(ValueError, match="sketch"):
        solve(SparseMatrix.identity(40), np.ones(40), sketch=make_sketch(50, 10), cfg=SolverConfig(m=3, k=0, s=10))


def test_small_system_uses_identity_sketch():
    # s >= N leaves nothing to compress, so sketched and true residuals coincide
    A, b = random_system(30, np.random.default_rng(0))
    x, rep = solve(SparseMatrix.from_dense(A), b, cfg=SolverConfig(m=20, k=4, tol=1e-10))
    assert rep.converged
    assert np.linalg.norm(b - A @ x) <= 1e-10 * np.linalg.norm(b)
    sres = dict(rep.sres_history)
    for it, true in rep.true_residual_history[1:]:
        assert sres[it] == pytest.approx(true, rel=1e-6)


@pytest.mark.parametrize("seed", range(3))
def test_classical_collapse(seed):
    rng = np.random.default_rng(seed)
    N, m = 60, 15
    A, b = random_system(N, rng, shift=1.5)
    ref = dense_gmres_iterates(A, b, m)
    got = []

    def grab(j, y, state, space):
        got.append(state.V_buf[:, :j] @ y)

    cfg = SolverConfig(m=m, t=m, k=0, tol=1e-15 * 10, max_restarts=1)
    solve(A, b, cfg=cfg, sketch=identity_sketch(N), callback=grab)
    assert len(got) == m
    for x, r in zip(got, ref):
        assert np.linalg.norm(x - r) <= 1e-10 * np.linalg.norm(r)


def test_baseline_matches_classical_oracle():
    rng = np.random.default_rng(4)
    N, m = 50, 12
    A, b = random_system(N, rng, shift=1.5)
    ref = dense_gmres_iterates(A, b, m)
    got = []
    solve_gmres_baseline(A, b, m=m, tol=1e-14, max_restarts=1, callback=lambda j, y, V: got.append(V @ y))
    for x, r in zip(got, ref):
        assert np.linalg.norm(x - r) <= 1e-10 * np.linalg.norm(r)


def test_baseline_identity_and_negative_definite():
    _, rep = solve_gmres_baseline(SparseMatrix.identity(30), np.ones(30))
    assert rep.converged and rep.iterations == 1
    A = gen_convdiff(30, 0.0)  # negative definite
    x, rep = solve_gmres_baseline(A, np.ones(900), m=40, tol=1e-8)
    assert rep.converged
    assert np.linalg.norm(np.ones(900) - A @ x) <= 1e-8 * 30


def test_known_solution_convdiff():
    A = gen_convdiff(50, 5.0)
    N = A.shape[0]
    x, rep = solve(A, A @ np.ones(N), cfg=SolverConfig(tol=1e-6))
    assert rep.converged
    assert np.linalg.norm(x - 1) / np.sqrt(N) <= 1e-5


def test_report_invariants():
    A = gen_neumann(30, 1e-2)
    b = np.random.default_rng(0).standard_normal(900)
    cfg = SolverConfig(m=30, k=5, tol=1e-8, max_restarts=20)
    x, rep = solve(A, b, cfg=cfg)
    assert rep.converged
    # converged means the unsketched residual meets the target
    assert np.linalg.norm(b - A @ x) <= cfg.tol * np.linalg.norm(b)
    assert rep.final_relres == pytest.approx(np.linalg.norm(b - A @ x) / np.linalg.norm(b), rel=1e-6)
    # every true residual check costs one matvec, the first k refresh nothing for a fixed matrix
    assert rep.matvecs == rep.iterations + len(rep.true_residual_history) - 1
    its = [i for i, _ in rep.sres_history]
    assert its == sorted(its) and its[-1] == rep.iterations
    assert len(rep.ranks) == rep.cycles
    assert rep.recycle.k == 5


def test_sres_monotone_within_cycles():
    A = gen_convdiff(20, 5.0)
    cfg = SolverConfig(m=25, k=5, s=300, tol=1e-10, max_restarts=4)
    _, rep = solve(A, np.ones(400), cfg=cfg)
    # every cycle ends with a true residual check
    bounds = [0] + [it for it, _ in rep.true_residual_history[1:]]
    for lo, hi in zip(bounds, bounds[1:]):
        seg = [v for it, v in rep.sres_history if lo < it <= hi]
        assert all(b2 <= b1 * (1 + 1e-12) for b1, b2 in zip(seg, seg[1:]))


def test_nonzero_initial_guess():
    A = gen_convdiff(15, 2.0)
    b = np.ones(225)
    x0 = np.random.default_rng(0).standard_normal(225)
    x, rep = solve(A, b, x0, SolverConfig(m=30, k=5, tol=1e-8))
    assert rep.converged
    assert rep.true_residual_history[0][1] == pytest.approx(np.linalg.norm(b - A @ x0) / 15)
    assert np.linalg.norm(b - A @ x) <= 1e-8 * 15


def test_stagnation_reports_diverged():
    # cyclic shift: GMRES makes no progress before step N
    N = 50
    P = SparseMatrix.from_dense(np.roll(np.eye(N), 1, axis=0))
    b = np.eye(N)[0]
    _, rep = solve(P, b, cfg=SolverConfig(m=5, k=0, s=20, max_restarts=10))
    assert rep.status == "diverged" and rep.cycles < 10


def test_cycle_uses_augmented_solution(rng):
    N = 200
    A = gen_convdiff(int(np.sqrt(N)) + 1, 3.0)
    N = A.shape[0]
    S = make_sketch(N, 150, seed=0)
    U = rng.standard_normal((N, 4))
    space = RecycleSpace(U, apply_sketch(S, U), apply_sketch(S, A @ U))
    r0 = rng.standard_normal(N)
    cfg = SolverConfig(m=16, k=4, s=150, tol=1e-12)
    cyc = solve_cycle(A, r0, space, cfg, S, tol_abs=1e-30, counters=Counters())
    assert cyc.iterations == 12
    # dense oracle: minimize ‖S (r0 - A W y)‖ over W = [U, V]
    V = None

    def keep(j, y, state, sp):
        nonlocal V
        V = state.V_buf[:, :j].copy()

    solve_cycle(A, r0, space, cfg, S, tol_abs=1e-30, callback=keep)
    W = np.hstack([U, V])
    y = np.linalg.lstsq(apply_sketch(S, A @ W), apply_sketch(S, r0), rcond=None)[0]
    assert np.linalg.norm(cyc.x - W @ y) <= 1e-8 * np.linalg.norm(W @ y)


def test_rank_deficient_recycle_columns_dropped(rng):
    A = gen_convdiff(12, 1.0)
    N = A.shape[0]
    S = make_sketch(N, 100, seed=0)
    u = rng.standard_normal(N)
    U = np.column_stack([u, u, rng.standard_normal(N)])
    space = RecycleSpace(U, apply_sketch(S, U), apply_sketch(S, A @ U))
    x, rep = solve(A, np.ones(N), cfg=SolverConfig(m=20, k=3, s=100, tol=1e-8, max_restarts=30), sketch=S, space=space)
    assert rep.converged
    assert any("dropped" in n for n in rep.notes)


def test_sequence_reuse_and_costs():
    seq = neumann_sequence(grid_side=20, systems=4, seed=0, tol=1e-8)
    cfg = SolverConfig(m=30, k=6, s=300, tol=1e-8, max_restarts=30)
    reps = solve_sequence(seq, cfg)
    assert all(r.converged for r in reps)
    assert all(r.recycle.provenance == "fresh" for r in reps)
    # a fixed matrix needs no refresh matvecs
    for r in reps:
        assert r.matvecs == r.iterations + len(r.true_residual_history) - 1


def test_sequence_exact_refresh_costs_k_matvecs():
    seq = convdiff_sequence(n=15, alphas=(0, 2), tol=1e-6)
    k = 5
    reps = solve_sequence(seq, SolverConfig(m=30, k=k, s=200, tol=1e-6, max_restarts=30, variant="exact"))
    assert reps[0].matvecs == reps[0].iterations + len(reps[0].true_residual_history) - 1
    assert reps[1].matvecs == k + reps[1].iterations + len(reps[1].true_residual_history) - 1
    inexact = solve_sequence(seq, SolverConfig(m=30, k=k, s=200, tol=1e-6, max_restarts=30, variant="inexact"))
    assert inexact[1].matvecs == inexact[1].iterations + len(inexact[1].true_residual_history) - 1


def test_sequence_records_errors_and_continues():
    class Broken:
        shape = (25, 25)
        dtype = np.float64

        def __matmul__(self, x):
            raise RuntimeError("device lost")

    good = gen_convdiff(5, 1.0)
    problems = [SimpleNamespace(matrix=good, rhs=np.ones(25), label="a", target_tol=1e-6),
                SimpleNamespace(matrix=Broken(), rhs=np.ones(25), label="b", target_tol=1e-6),
                SimpleNamespace(matrix=good, rhs=np.ones(25), label="c", target_tol=1e-6)]
    reps = solve_sequence(problems, SolverConfig(m=10, k=2))
    assert [r.status for r in reps] == ["converged", "error", "converged"]
    assert "device lost" in reps[1].notes[0]


def test_sequence_empty():
    with pytest.raises(ValueError):
        solve_sequence(ProblemSequence([]))


def test_k_zero_leaves_empty_space():
    _, rep = solve(gen_convdiff(10, 1.0), np.ones(100), cfg=SolverConfig(m=20, k=0, s=60))
    assert rep.recycle.k == 0 and rep.ranks == []


def test_neumann_recycling_beats_plain_restarts():
    A = gen_neumann(103, 1e-4)
    b = np.random.default_rng(0).standard_normal(A.shape[0])
    _, with_k = solve(A, b, cfg=SolverConfig(k=20))
    _, without = solve(A, b, cfg=SolverConfig(k=0))
    assert with_k.converged and with_k.recycle.k == 20
    assert with_k.matvecs < without.matvecs


def test_problem_target_tol_overrides_config():
    A = gen_convdiff(10, 1.0)
    seq = ProblemSequence([ProblemInstance(A, np.ones(100), target_tol=1e-3)], shared_matrix_flag=True)
    rep = solve_sequence(seq, SolverConfig(m=20, k=2, s=60, tol=1e-10))[0]
    assert rep.converged and 1e-10 < rep.final_relres < 1e-3


def test_basis_condition_reported(rng):
    A, b = random_system(60, rng, shift=1.5)
    cfg = SolverConfig(m=10, t=10, k=0, tol=1e-12, max_restarts=3)
    _, rep = solve(A, b, cfg=cfg, sketch=identity_sketch(60))
    # full orthogonalization with S = I gives an orthonormal basis
    assert len(rep.basis_conditions) == rep.cycles
    assert all(c == pytest.approx(1.0, abs=1e-10) for c in rep.basis_conditions)
    _, rep = solve(gen_neumann(20, 1e-4), rng.standard_normal(400), cfg=SolverConfig(m=30, t=1, k=5, s=300, max_restarts=2))
    assert len(rep.basis_conditions) == rep.cycles and min(rep.basis_conditions) > 1
