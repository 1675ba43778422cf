"""Shared dense oracles and the acceptance summary printer.

The oracles here are written directly from the textbook definitions and do
not call into :mod:`gmres_sdr` so that they can check it independently.
"""

import numpy as np
import pytest
import scipy.linalg

ACCEPTANCE_LINES = []


def record_acceptance(number, title, ok, detail=""):
    line = f"criterion {number:>2} [{'PASS' if ok else 'FAIL'}] {title}"
    if detail:
        line += f": {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


def random_system(N, rng, shift=3.0):
    """Nonsymmetric matrix with spectrum in a disk around ``shift``."""
    A = shift * np.eye(N) + rng.standard_normal((N, N)) / np.sqrt(N)
    return A, rng.standard_normal(N)


def dense_arnoldi(A, r0, m):
    """Full Arnoldi with twice-iterated classical Gram-Schmidt."""
    N = r0.size
    V = np.zeros((N, m + 1))
    H = np.zeros((m + 1, m))
    V[:, 0] = r0 / np.linalg.norm(r0)
    for j in range(m):
        w = A @ V[:, j]
        for _ in range(2):
            h = V[:, : j + 1].T @ w
            w = w - V[:, : j + 1] @ h
            H[: j + 1, j] += h
        H[j + 1, j] = np.linalg.norm(w)
        V[:, j + 1] = w / H[j + 1, j]
    return V, H


def dense_gmres_iterates(A, b, m):
    """``x_j`` minimizing ``‖b - A x‖`` over ``K_j(A, b)`` for ``j = 1..m``."""
    V, _ = dense_arnoldi(A, b, m)
    out = []
    for j in range(1, m + 1):
        y = np.linalg.lstsq(A @ V[:, :j], b, rcond=None)[0]
        out.append(V[:, :j] @ y)
    return out


def dense_fom_iterate(A, b, m):
    """``x_m`` in ``K_m`` with ``b - A x_m`` orthogonal to ``K_m``."""
    V, _ = dense_arnoldi(A, b, m)
    Vm = V[:, :m]
    y = np.linalg.solve(Vm.T @ A @ Vm, Vm.T @ b)
    return Vm @ y


def harmonic_ritz_oracle(A, Q):
    """Harmonic Ritz values of ``A`` on ``range(Q)``: ``(AQ)^T (AQ) y = theta (AQ)^T Q y``."""
    AQ = A @ Q
    return scipy.linalg.eigvals(AQ.T @ AQ, AQ.T @ Q)


def principal_angles(X, Y):
    return scipy.linalg.subspace_angles(X, Y)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
