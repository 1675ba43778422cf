"""Sparse CSR matrices, Matrix Market I/O and synthetic test problems."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

__all__ = [
    "SparseMatrix",
    "ProblemInstance",
    "ProblemSequence",
    "MatrixMarketError",
    "matvec",
    "parse_matrix_market",
    "read_matrix_market",
    "write_matrix_market",
    "gen_neumann",
    "gen_convdiff",
    "neumann_sequence",
    "convdiff_sequence",
]


class MatrixMarketError(ValueError):
    """Malformed Matrix Market input; carries the offending line number."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Immutable CSR matrix.

    Column indices are strictly increasing within every row, so there are
    no duplicate entries. Matrix-vector products are delegated to
    ``scipy.sparse``.
    """

    nrows: int
    ncols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        offsets = np.asarray(self.row_offsets, dtype=np.int64)
        cols = np.asarray(self.col_indices, dtype=np.int64)
        vals = np.asarray(self.values)
        if vals.dtype.kind not in "fc":
            vals = vals.astype(np.float64)
        if offsets.shape != (self.nrows + 1,):
            raise ValueError("row_offsets must have length nrows + 1")
        if offsets[0] != 0 or offsets[-1] != cols.size or cols.size != vals.size:
            raise ValueError("row_offsets inconsistent with col_indices/values")
        if np.any(np.diff(offsets) < 0):
            raise ValueError("row_offsets must be nondecreasing")
        if cols.size and (cols.min() < 0 or cols.max() >= self.ncols):
            raise ValueError("column index out of range")
        # strictly increasing within rows: every in-row step must be positive
        steps = np.diff(cols)
        row_start = np.zeros(cols.size, dtype=bool)
        row_start[offsets[:-1][offsets[:-1] < cols.size]] = True
        if np.any((steps <= 0) & ~row_start[1:]):
            raise ValueError("column indices must be strictly increasing within each row")
        for name, arr in (("row_offsets", offsets), ("col_indices", cols), ("values", vals)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_scipy(cls, A) -> "SparseMatrix":
        A = sp.csr_matrix(A, copy=True)
        A.sum_duplicates()
        A.sort_indices()
        return cls(A.shape[0], A.shape[1], A.indptr, A.indices, A.data)

    @classmethod
    def from_dense(cls, A, drop_zeros=True) -> "SparseMatrix":
        A = sp.csr_matrix(np.atleast_2d(np.asarray(A)))
        if drop_zeros:
            A.eliminate_zeros()
        return cls.from_scipy(A)

    @classmethod
    def identity(cls, n) -> "SparseMatrix":
        return cls.from_scipy(sp.identity(n, format="csr"))

    @cached_property
    def _csr(self):
        return sp.csr_matrix(
            (self.values, self.col_indices, self.row_offsets),
            shape=(self.nrows, self.ncols),
        )

    @property
    def shape(self):
        return (self.nrows, self.ncols)

    @property
    def nnz(self):
        return int(self.values.size)

    @property
    def dtype(self):
        return self.values.dtype

    def to_scipy(self):
        return self._csr.copy()

    def toarray(self):
        return self._csr.toarray()

    @property
    def T(self) -> "SparseMatrix":
        return SparseMatrix.from_scipy(self._csr.T)

    def __matmul__(self, x):
        x = np.asarray(x)
        if x.shape[0] != self.ncols:
            raise ValueError(
                f"dimension mismatch: matrix has {self.ncols} columns, operand has {x.shape[0]} rows"
            )
        return self._csr @ x

    def __repr__(self):
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz}, dtype={self.dtype})"


def matvec(A: SparseMatrix, x) -> np.ndarray:
    """Return ``A @ x``; raises ``ValueError`` on a dimension mismatch."""
    x = np.asarray(x)
    if x.ndim != 1:
        raise ValueError("x must be a 1-D vector")
    return A @ x


@dataclass
class ProblemInstance:
    matrix: SparseMatrix
    rhs: np.ndarray
    label: str = ""
    target_tol: float = 1e-6

    def __post_init__(self):
        self.rhs = np.asarray(self.rhs, dtype=np.result_type(self.matrix.dtype, np.float64))
        if self.rhs.shape != (self.matrix.nrows,):
            raise ValueError("rhs length must equal the number of matrix rows")
        if not 0 < self.target_tol < 1:
            raise ValueError("target_tol must lie in (0, 1)")


@dataclass
class ProblemSequence:
    problems: list = field(default_factory=list)
    shared_matrix_flag: bool = False

    def __post_init__(self):
        if self.problems:
            n = self.problems[0].matrix.nrows
            if any(p.matrix.nrows != n for p in self.problems):
                raise ValueError("all problems in a sequence must share the dimension N")

    def __len__(self):
        return len(self.problems)

    def __iter__(self):
        return iter(self.problems)

    def __getitem__(self, i):
        return self.problems[i]


# --- Matrix Market -----------------------------------------------------------

_FIELDS = {"real", "integer", "complex", "pattern", "double"}
_SYMMETRIES = {"general", "symmetric", "skew-symmetric", "hermitian"}


def _data_lines(lines, start):
    for lineno, line in enumerate(lines, start=start):
        stripped = line.strip()
        if not stripped or stripped.startswith("%"):
            continue
        yield lineno, stripped.split()


def parse_matrix_market(stream) -> SparseMatrix:
    """Parse a Matrix Market ``coordinate`` or ``array`` file.

    ``stream`` may be a text stream or a string holding the file contents.
    Symmetric, skew-symmetric and Hermitian storage is expanded to general
    storage, entries are summed per position and explicit zeros dropped.
    Errors are raised as :class:`MatrixMarketError` naming the line.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    lines = stream.read().splitlines()
    if not lines:
        raise MatrixMarketError("empty input", 1)
    header = lines[0].strip().split()
    if len(header) != 5 or header[0].lower() != "%%matrixmarket":
        raise MatrixMarketError("expected '%%MatrixMarket matrix <format> <field> <symmetry>'", 1)
    obj, fmt, fld, sym = (h.lower() for h in header[1:])
    if obj != "matrix":
        raise MatrixMarketError(f"unsupported object {obj!r}", 1)
    if fmt not in ("coordinate", "array"):
        raise MatrixMarketError(f"unsupported format {fmt!r}", 1)
    if fld not in _FIELDS:
        raise MatrixMarketError(f"unsupported field {fld!r}", 1)
    if sym not in _SYMMETRIES:
        raise MatrixMarketError(f"unsupported symmetry {sym!r}", 1)
    if fmt == "array" and fld == "pattern":
        raise MatrixMarketError("pattern field requires coordinate format", 1)

    body = _data_lines(lines[1:], start=2)
    try:
        size_lineno, size = next(body)
    except StopIteration:
        raise MatrixMarketError("missing size line", len(lines)) from None
    want = 3 if fmt == "coordinate" else 2
    if len(size) != want:
        raise MatrixMarketError(f"size line must have {want} integers", size_lineno)
    try:
        dims = [int(tok) for tok in size]
    except ValueError:
        raise MatrixMarketError("size line must contain integers", size_lineno) from None
    nrows, ncols = dims[0], dims[1]
    if nrows < 0 or ncols < 0:
        raise MatrixMarketError("negative dimension", size_lineno)
    if sym != "general" and nrows != ncols:
        raise MatrixMarketError(f"{sym} matrix must be square", size_lineno)

    is_complex = fld == "complex"
    nvals = 2 if is_complex else (0 if fld == "pattern" else 1)
    dtype = np.complex128 if is_complex else np.float64

    def value(tokens, lineno):
        try:
            if fld == "pattern":
                return 1.0
            if is_complex:
                return complex(float(tokens[0]), float(tokens[1]))
            return float(tokens[0])
        except (ValueError, IndexError):
            raise MatrixMarketError("malformed numeric value", lineno) from None

    rows, cols, vals = [], [], []
    if fmt == "coordinate":
        nnz = dims[2]
        count = 0
        for lineno, tokens in body:
            if count == nnz:
                raise MatrixMarketError("more entries than declared", lineno)
            if len(tokens) != 2 + nvals:
                raise MatrixMarketError(f"expected {2 + nvals} fields per entry", lineno)
            try:
                i, j = int(tokens[0]), int(tokens[1])
            except ValueError:
                raise MatrixMarketError("malformed index", lineno) from None
            if not (1 <= i <= nrows and 1 <= j <= ncols):
                raise MatrixMarketError(f"index ({i}, {j}) out of bounds", lineno)
            rows.append(i - 1)
            cols.append(j - 1)
            vals.append(value(tokens[2:], lineno))
            count += 1
        if count < nnz:
            raise MatrixMarketError(f"truncated body: {count} of {nnz} entries", len(lines))
    else:
        # column-major; symmetric variants store the lower triangle only
        if sym == "general":
            positions = [(i, j) for j in range(ncols) for i in range(nrows)]
        elif sym == "skew-symmetric":
            positions = [(i, j) for j in range(ncols) for i in range(j + 1, nrows)]
        else:
            positions = [(i, j) for j in range(ncols) for i in range(j, nrows)]
        it = iter(positions)
        count = 0
        for lineno, tokens in body:
            if len(tokens) != nvals:
                raise MatrixMarketError(f"expected {nvals} fields per entry", lineno)
            try:
                i, j = next(it)
            except StopIteration:
                raise MatrixMarketError("more entries than declared", lineno) from None
            rows.append(i)
            cols.append(j)
            vals.append(value(tokens, lineno))
            count += 1
        if count < len(positions):
            raise MatrixMarketError(
                f"truncated body: {count} of {len(positions)} entries", len(lines)
            )

    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=dtype)
    if sym != "general":
        off = rows != cols
        mirror = vals[off]
        if sym == "skew-symmetric":
            mirror = -mirror
        elif sym == "hermitian":
            mirror = np.conj(mirror)
        rows, cols, vals = (
            np.concatenate([rows, cols[off]]),
            np.concatenate([cols, rows[off]]),
            np.concatenate([vals, mirror]),
        )
    A = sp.coo_matrix((vals, (rows, cols)), shape=(nrows, ncols)).tocsr()
    A.sum_duplicates()
    A.eliminate_zeros()
    return SparseMatrix.from_scipy(A)


def read_matrix_market(path) -> SparseMatrix:
    with open(path) as fh:
        return parse_matrix_market(fh)


def write_matrix_market(A: SparseMatrix, stream=None, comment=None):
    """Write ``A`` in coordinate/general format with 17 significant digits.

    Returns the text when ``stream`` is None.
    """
    out = io.StringIO() if stream is None else stream
    is_complex = np.iscomplexobj(A.values)
    fld = "complex" if is_complex else "real"
    out.write(f"%%MatrixMarket matrix coordinate {fld} general\n")
    if comment:
        for line in str(comment).splitlines():
            out.write(f"% {line}\n")
    out.write(f"{A.nrows} {A.ncols} {A.nnz}\n")
    rows = np.repeat(np.arange(A.nrows), np.diff(A.row_offsets))
    for i, j, v in zip(rows, A.col_indices, A.values):
        if is_complex:
            out.write(f"{i + 1} {j + 1} {v.real:.17g} {v.imag:.17g}\n")
        else:
            out.write(f"{i + 1} {j + 1} {v:.17g}\n")
    if stream is None:
        return out.getvalue()
    return None


# --- problem generators ------------------------------------------------------


def gen_neumann(grid_side: int, shift: float = 0.0) -> SparseMatrix:
    """Five-point Neumann Laplacian on a ``grid_side`` x ``grid_side`` grid.

    Neighbours falling outside the grid are mirrored back inside, so every
    row of the unshifted matrix sums to zero; the result is ``D + shift*I``
    with ``N = grid_side**2``. Boundary rows are not symmetric.
    """
    g = int(grid_side)
    if g < 2:
        raise ValueError("grid_side must be >= 2")
    idx = np.arange(g * g).reshape(g, g)
    ii, jj = np.divmod(np.arange(g * g), g)
    rows = [idx.ravel()]
    cols = [idx.ravel()]
    vals = [np.full(g * g, 4.0 + shift)]
    for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        ni, nj = ii + di, jj + dj
        # reflect across the boundary: -1 -> 1, g -> g-2
        ni = np.where(ni < 0, 1, np.where(ni >= g, g - 2, ni))
        nj = np.where(nj < 0, 1, np.where(nj >= g, g - 2, nj))
        rows.append(idx.ravel())
        cols.append(idx[ni, nj])
        vals.append(np.full(g * g, -1.0))
    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(g * g, g * g),
    ).tocsr()
    A.sum_duplicates()
    A.eliminate_zeros()
    return SparseMatrix.from_scipy(A)


def _tridiag(n, lower, diag, upper):
    return sp.diags(
        [np.full(n - 1, lower), np.full(n, diag), np.full(n - 1, upper)],
        [-1, 0, 1],
        format="csr",
    )


def gen_convdiff(n: int, alpha: float) -> SparseMatrix:
    """2-D convection-diffusion matrix of order ``n**2``.

    ``(L x I + I x L) + alpha (D x I + I x D)`` with
    ``L = (n+1)^2 tridiag(1, -2, 1)`` and ``D = (n+1)/2 tridiag(-1, 0, 1)``.
    """
    n = int(n)
    if n < 2:
        raise ValueError("n must be >= 2")
    h2 = float(n + 1) ** 2
    L = h2 * _tridiag(n, 1.0, -2.0, 1.0)
    D = 0.5 * (n + 1) * _tridiag(n, -1.0, 0.0, 1.0)
    I = sp.identity(n, format="csr")
    A = sp.kron(L, I) + sp.kron(I, L)
    if alpha != 0:
        A = A + alpha * (sp.kron(D, I) + sp.kron(I, D))
    A = sp.csr_matrix(A)
    A.eliminate_zeros()
    return SparseMatrix.from_scipy(A)


def neumann_sequence(grid_side=103, shift=1e-4, systems=50, seed=0, tol=1e-6) -> ProblemSequence:
    """Fixed Neumann matrix with unit-Gaussian right-hand sides."""
    A = gen_neumann(grid_side, shift)
    rng = np.random.default_rng(seed)
    problems = [
        ProblemInstance(A, rng.standard_normal(A.nrows), label=f"neumann[{i}]", target_tol=tol)
        for i in range(systems)
    ]
    return ProblemSequence(problems, shared_matrix_flag=True)


def convdiff_sequence(n=100, alphas=(0.0, 5.0, 20.0), tol=1e-2) -> ProblemSequence:
    """Convection-diffusion matrices of growing convection, right-hand side all ones."""
    problems = []
    for a in alphas:
        A = gen_convdiff(n, a)
        problems.append(ProblemInstance(A, np.ones(A.nrows), label=f"convdiff[alpha={a:g}]", target_tol=tol))
    return ProblemSequence(problems, shared_matrix_flag=False)
