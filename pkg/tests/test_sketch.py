import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmres_sdr.sketch import (
    apply_sketch,
    identity_sketch,
    make_sketch,
    measure_distortion,
    subspace_distortion,
)

from conftest import dense_arnoldi


def dct_matrix(n):
    """Orthonormal DCT-II written out from its cosine formula."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    C = np.sqrt(2.0 / n) * np.cos(np.pi * k * (2 * i + 1) / (2 * n))
    C[0] /= np.sqrt(2.0)
    return C


def test_matches_explicit_construction():
    S = make_sketch(37, 11, seed=4)
    ref = np.sqrt(37 / 11) * dct_matrix(37)[S.selected_rows] * S.sign_flips
    assert np.allclose(S.toarray(), ref, rtol=0, atol=1e-13)


def test_invariants():
    S = make_sketch(500, 64, seed=9)
    assert S.shape == (64, 500)
    assert len(set(S.selected_rows.tolist())) == 64
    assert set(np.unique(S.sign_flips)) <= {-1.0, 1.0}
    assert S.selected_rows.min() >= 0 and S.selected_rows.max() < 500
    with pytest.raises(ValueError):
        S.sign_flips[0] = 2.0


def test_eight_m_max_rule():
    S = make_sketch(1000, 8 * 100, seed=0)
    assert S.s == 800
    assert apply_sketch(S, np.ones(1000)).shape == (800,)


@pytest.mark.parametrize("s", [0, 10, 11])
def test_s_must_be_below_n(s):
    with pytest.raises(ValueError):
        make_sketch(10, s)


def test_determinism():
    a, b = make_sketch(300, 40, seed=7), make_sketch(300, 40, seed=7)
    assert np.array_equal(a.selected_rows, b.selected_rows)
    assert np.array_equal(a.sign_flips, b.sign_flips)
    v = np.random.default_rng(0).standard_normal(300)
    assert np.array_equal(apply_sketch(a, v), apply_sketch(b, v))


def test_seed_variation():
    rows = {tuple(make_sketch(1000, 100, seed=s).selected_rows) for s in range(100)}
    assert len(rows) == 100


def test_zero_and_length_mismatch():
    S = make_sketch(64, 16, seed=1)
    assert np.array_equal(apply_sketch(S, np.zeros(64)), np.zeros(16))
    with pytest.raises(ValueError, match="length mismatch"):
        apply_sketch(S, np.zeros(63))


def test_blocks_and_complex(rng):
    S = make_sketch(50, 12, seed=2)
    X = rng.standard_normal((50, 4))
    Y = apply_sketch(S, X)
    for j in range(4):
        assert np.allclose(Y[:, j], apply_sketch(S, X[:, j]), rtol=0, atol=1e-14)
    z = X[:, 0] + 1j * X[:, 1]
    assert np.allclose(apply_sketch(S, z), Y[:, 0] + 1j * Y[:, 1], rtol=0, atol=1e-13)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(2, 300), seed=st.integers(0, 2**32 - 1), a=st.floats(-1e3, 1e3), b=st.floats(-1e3, 1e3))
def test_linearity(n, seed, a, b):
    rng = np.random.default_rng(seed)
    S = make_sketch(n, int(rng.integers(1, n)), seed=seed)
    u, v = rng.standard_normal(n), rng.standard_normal(n)
    lhs = apply_sketch(S, a * u + b * v)
    rhs = a * apply_sketch(S, u) + b * apply_sketch(S, v)
    # ‖S‖ <= sqrt(n/s), so this bounds every term involved
    scale = S.scale * (abs(a) * np.linalg.norm(u) + abs(b) * np.linalg.norm(v))
    assert np.linalg.norm(lhs - rhs) <= 1e-13 * scale


@pytest.mark.parametrize("s", [256, 512, 1024])
def test_norm_preserved_in_mean(s):
    n = 4096
    S = make_sketch(n, s, seed=s)
    V = np.random.default_rng(s).standard_normal((n, 200))
    V /= np.linalg.norm(V, axis=0)
    mean = np.mean(np.sum(apply_sketch(S, V) ** 2, axis=0))
    half = 3 / np.sqrt(s) * 5
    assert 1 - half <= mean <= 1 + half


def test_identity_sketch():
    I = identity_sketch(3)
    assert np.array_equal(apply_sketch(I, np.array([1.0, 2.0, 3.0])), [1, 2, 3])
    assert measure_distortion(I, np.eye(3)[:, :1]).epsilon_hat == 0
    B = np.random.default_rng(3).standard_normal((3, 2))
    assert measure_distortion(I, B).epsilon_hat <= 1e-15
    assert subspace_distortion(I, B) <= 1e-15


def test_single_vector_distortion_is_exact(rng):
    S = make_sketch(200, 30, seed=5)
    v = rng.standard_normal(200)
    est = measure_distortion(S, v)
    assert est.samples == 1
    ref = abs(np.linalg.norm(apply_sketch(S, v)) ** 2 / np.linalg.norm(v) ** 2 - 1)
    assert est.epsilon_hat == pytest.approx(ref, rel=1e-14)


def test_sampled_distortion_below_exact(rng):
    S = make_sketch(400, 60, seed=6)
    B = rng.standard_normal((400, 5))
    assert measure_distortion(S, B, samples=500).epsilon_hat <= subspace_distortion(S, B) + 1e-12


def test_subspace_distortion_bracket(rng):
    S = make_sketch(300, 50, seed=8)
    B = rng.standard_normal((300, 4))
    eps = subspace_distortion(S, B)
    for c in rng.standard_normal((4, 50)).T:
        v = B @ c
        ratio = np.linalg.norm(apply_sketch(S, v)) ** 2 / np.linalg.norm(v) ** 2
        assert 1 - eps - 1e-12 <= ratio <= 1 + eps + 1e-12


def test_krylov_basis_distortion_seed_sweep():
    # Krylov basis of dimension 30 of a 2-D Laplacian, s = 600
    g = 40
    T = np.diag([2.0] * g) - np.diag([1.0] * (g - 1), 1) - np.diag([1.0] * (g - 1), -1)
    A = np.kron(T, np.eye(g)) + np.kron(np.eye(g), T)
    V, _ = dense_arnoldi(A, np.random.default_rng(0).standard_normal(g * g), 29)
    passed = sum(measure_distortion(make_sketch(g * g, 600, seed=s), V, seed=s).epsilon_hat < 0.8 for s in range(100))
    assert passed >= 95
