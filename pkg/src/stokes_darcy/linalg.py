"""Block composition and direct sparse solves (SuperLU via scipy)."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolverError(RuntimeError):
    """Raised when a factorization breaks down."""


def axpy_compose(terms: Iterable[tuple[float, sp.spmatrix]]) -> sp.csr_matrix:
    """Linear combination ``sum a_i * A_i`` over the union of sparsity patterns."""
    terms = list(terms)
    if not terms:
        raise ValueError("need at least one term")
    shape = terms[0][1].shape
    out = sp.csr_matrix(shape)
    for a, A in terms:
        if A.shape != shape:
            raise ValueError(f"shape mismatch: {A.shape} vs {shape}")
        out = out + a * sp.csr_matrix(A)
    out.sort_indices()
    return out


def _check_structure(A: sp.csr_matrix) -> None:
    empty_rows = np.flatnonzero(np.diff(A.indptr) == 0)
    if len(empty_rows):
        raise SolverError(f"structurally singular: zero pivot at row {empty_rows[0]} (empty row)")
    empty_cols = np.setdiff1d(np.arange(A.shape[1]), A.indices)
    if len(empty_cols):
        raise SolverError(f"structurally singular: zero pivot in column {empty_cols[0]} (empty column)")


class Factorization:
    """Sparse LU with partial pivoting, reusable across right-hand sides."""

    def __init__(self, A: sp.spmatrix):
        A = sp.csc_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"matrix must be square, got {A.shape}")
        A.eliminate_zeros()
        _check_structure(A.tocsr())
        self.shape = A.shape
        try:
            self._lu = spla.splu(A)
        except RuntimeError as exc:
            raise SolverError(f"singular factorization: {exc}") from exc
        diag = np.abs(self._lu.U.diagonal())
        bad = np.flatnonzero(diag == 0)
        if len(bad):
            raise SolverError(f"singular factorization: zero pivot at row {self._lu.perm_r.argsort()[bad[0]]}")

    def solve(self, b: np.ndarray) -> np.ndarray:
        x = self._lu.solve(np.asarray(b, dtype=float))
        if not np.all(np.isfinite(x)):
            raise SolverError("non-finite solution")
        return x


class EliminatedSystem:
    """``A x = b`` with ``x[fixed]`` prescribed, solved on the free DOFs only.

    Known columns are moved to the right-hand side, so a symmetric ``A`` keeps
    a symmetric reduced operator.
    """

    def __init__(self, A: sp.spmatrix, fixed: np.ndarray):
        A = sp.csr_matrix(A)
        n = A.shape[0]
        self.n = n
        self.fixed = np.unique(np.asarray(fixed, dtype=np.int64))
        mask = np.ones(n, dtype=bool)
        mask[self.fixed] = False
        self.free = np.flatnonzero(mask)
        self.A_ff = A[self.free][:, self.free]
        self.A_fd = A[self.free][:, self.fixed]
        self.lu = Factorization(self.A_ff)

    def solve(self, b: np.ndarray, fixed_values: np.ndarray | float = 0.0) -> np.ndarray:
        x = np.empty(self.n)
        x[self.fixed] = fixed_values
        rhs = np.asarray(b, dtype=float)[self.free]
        if len(self.fixed):
            rhs = rhs - self.A_fd @ x[self.fixed]
        x[self.free] = self.lu.solve(rhs)
        return x


@dataclass
class BlockSystem:
    """Named-group block matrix; missing blocks are zero."""

    sizes: Mapping[str, int]
    blocks: dict = field(default_factory=dict)
    rhs: dict = field(default_factory=dict)

    def __post_init__(self):
        self.sizes = dict(self.sizes)
        for (r, c), blk in self.blocks.items():
            if blk.shape != (self.sizes[r], self.sizes[c]):
                raise ValueError(f"block ({r}, {c}) has shape {blk.shape}")

    @property
    def groups(self) -> list[str]:
        return list(self.sizes)

    def offsets(self) -> dict[str, int]:
        out, pos = {}, 0
        for g in self.groups:
            out[g] = pos
            pos += self.sizes[g]
        return out

    def matrix(self) -> sp.csr_matrix:
        grid = [
            [self.blocks.get((r, c)) for c in self.groups] for r in self.groups
        ]
        for i, r in enumerate(self.groups):
            if grid[i][i] is None:
                grid[i][i] = sp.csr_matrix((self.sizes[r], self.sizes[r]))
        return sp.bmat(grid, format="csr")

    def vector(self) -> np.ndarray:
        return np.concatenate(
            [np.asarray(self.rhs.get(g, np.zeros(self.sizes[g])), dtype=float) for g in self.groups]
        )

    def split(self, x: np.ndarray) -> dict[str, np.ndarray]:
        off = self.offsets()
        return {g: x[off[g] : off[g] + self.sizes[g]] for g in self.groups}


def solve_direct(system: BlockSystem) -> dict[str, np.ndarray]:
    A = system.matrix()
    b = system.vector()
    x = Factorization(A).solve(b)
    return system.split(x)
