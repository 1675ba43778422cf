"""Subsampled randomized DCT subspace embeddings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft
import scipy.linalg

__all__ = [
    "SketchOperator",
    "DistortionEstimate",
    "make_sketch",
    "identity_sketch",
    "apply_sketch",
    "measure_distortion",
    "subspace_distortion",
]


@dataclass(frozen=True, eq=False)
class SketchOperator:
    """``S = sqrt(n/s) P F E``.

    ``E`` flips signs, ``F`` is the orthonormal type-II DCT and ``P`` keeps
    ``selected_rows``. The identity embedding (``kind="identity"``) has
    ``s == n`` and applies as the exact identity map.
    """

    n: int
    s: int
    sign_flips: np.ndarray
    selected_rows: np.ndarray
    rng_seed: int | None = None
    kind: str = "dct"

    def __post_init__(self):
        for name in ("sign_flips", "selected_rows"):
            getattr(self, name).setflags(write=False)

    @property
    def shape(self):
        return (self.s, self.n)

    @property
    def scale(self):
        return np.sqrt(self.n / self.s)

    def __matmul__(self, v):
        return apply_sketch(self, v)

    def toarray(self):
        """Dense ``s x n`` matrix (test scale only)."""
        return apply_sketch(self, np.eye(self.n))


@dataclass(frozen=True)
class DistortionEstimate:
    epsilon_hat: float
    samples: int


def make_sketch(n: int, s: int, seed: int = 0) -> SketchOperator:
    """Draw a subsampled randomized DCT; fully determined by ``(n, s, seed)``."""
    n, s = int(n), int(s)
    if not 0 < s < n:
        raise ValueError(f"sketch dimension must satisfy 0 < s < n, got s={s}, n={n}")
    rng = np.random.default_rng(seed)
    signs = rng.choice(np.array([-1.0, 1.0]), size=n)
    rows = np.sort(rng.choice(n, size=s, replace=False))
    return SketchOperator(n, s, signs, rows, rng_seed=seed)


def identity_sketch(n: int) -> SketchOperator:
    n = int(n)
    return SketchOperator(n, n, np.ones(n), np.arange(n), rng_seed=None, kind="identity")


def apply_sketch(S: SketchOperator, v) -> np.ndarray:
    """Apply ``S`` to a vector or to the columns of a matrix."""
    v = np.asarray(v)
    if v.shape[0] != S.n:
        raise ValueError(f"length mismatch: sketch expects {S.n}, got {v.shape[0]}")
    if S.kind == "identity":
        return v.copy()
    flipped = v * (S.sign_flips if v.ndim == 1 else S.sign_flips[:, None])
    if np.iscomplexobj(flipped):
        y = scipy.fft.dct(flipped.real, type=2, norm="ortho", axis=0) + 1j * scipy.fft.dct(
            flipped.imag, type=2, norm="ortho", axis=0
        )
    else:
        y = scipy.fft.dct(flipped, type=2, norm="ortho", axis=0)
    return S.scale * y[S.selected_rows]


def measure_distortion(S: SketchOperator, basis, samples: int = 200, seed: int = 0) -> DistortionEstimate:
    """Empirical distortion ``max |‖Sv‖²/‖v‖² - 1|`` over the span of ``basis``.

    Every basis vector is tested, followed by ``samples`` random Gaussian
    combinations of them.
    """
    B = np.asarray(basis)
    if B.ndim == 1:
        B = B[:, None]
    if B.shape[1] == 0:
        raise ValueError("basis must be nonempty")
    rng = np.random.default_rng(seed)
    coeffs = rng.standard_normal((B.shape[1], samples)) if B.shape[1] > 1 else np.zeros((1, 0))
    V = np.hstack([B, B @ coeffs])
    norms2 = np.sum(np.abs(V) ** 2, axis=0)
    keep = norms2 > 0
    SV = apply_sketch(S, V[:, keep])
    ratios = np.sum(np.abs(SV) ** 2, axis=0) / norms2[keep]
    return DistortionEstimate(float(np.max(np.abs(ratios - 1.0))), int(keep.sum()))


def subspace_distortion(S: SketchOperator, basis) -> float:
    """Smallest ``eps`` with ``(1-eps)‖v‖² <= ‖Sv‖² <= (1+eps)‖v‖²`` on span(basis).

    Computed exactly from the extreme singular values of ``S Q`` where ``Q``
    is an orthonormal basis of the span.
    """
    B = np.asarray(basis)
    if B.ndim == 1:
        B = B[:, None]
    Q = scipy.linalg.orth(B)
    sv = np.linalg.svd(apply_sketch(S, Q), compute_uv=False)
    if sv.size < Q.shape[1]:
        # more directions than sketch rows: some vector is annihilated
        return 1.0
    return float(max(abs(sv[0] ** 2 - 1.0), abs(sv[-1] ** 2 - 1.0)))
