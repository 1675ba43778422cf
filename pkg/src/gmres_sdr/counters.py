"""Work counters shared by the solver kernels."""

from dataclasses import dataclass

import numpy as np

from .sketch import apply_sketch


@dataclass
class Counters:
    """Running totals of matvecs, length-N inner products and sketches.

    Norms of length-N vectors count as one inner product each.
    """

    matvecs: int = 0
    inner_products: int = 0
    sketches: int = 0

    def matvec(self, A, x):
        x = np.asarray(x)
        self.matvecs += 1 if x.ndim == 1 else x.shape[1]
        return A @ x

    def sketch(self, S, v):
        v = np.asarray(v)
        self.sketches += 1 if v.ndim == 1 else v.shape[1]
        return apply_sketch(S, v)

    def dot(self, u, v):
        self.inner_products += 1
        return np.vdot(u, v)

    def norm(self, v):
        self.inner_products += 1
        return float(np.linalg.norm(v))

    def snapshot(self):
        return Counters(self.matvecs, self.inner_products, self.sketches)

    def __sub__(self, other):
        return Counters(
            self.matvecs - other.matvecs,
            self.inner_products - other.inner_products,
            self.sketches - other.sketches,
        )
