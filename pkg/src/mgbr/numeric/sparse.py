"""Constant sparse matrices used for graph propagation."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..errors import StructuralError


class SparseMatrix:
    """Immutable CSR matrix built from coordinate entries.

    ``products`` counts how many times the matrix has been multiplied by a
    dense operand; the GCN cost tests read it.
    """

    def __init__(self, rows: int, cols: int, row_idx, col_idx, values):
        if rows <= 0 or cols <= 0:
            raise StructuralError(f"sparse shape must be positive, got ({rows}, {cols})")
        r = np.asarray(row_idx, dtype=np.int64)
        c = np.asarray(col_idx, dtype=np.int64)
        v = np.asarray(values, dtype=np.float64)
        if not (r.shape == c.shape == v.shape):
            raise StructuralError("row, col and value arrays differ in length")
        if r.size:
            if r.min() < 0 or r.max() >= rows or c.min() < 0 or c.max() >= cols:
                raise StructuralError(f"entry index out of range for shape ({rows}, {cols})")
            keys = r * cols + c
            if np.unique(keys).size != keys.size:
                raise StructuralError("duplicate (row, col) entries")
        self.rows = rows
        self.cols = cols
        self.csr = sp.csr_matrix((v, (r, c)), shape=(rows, cols))
        self.csr.sort_indices()
        self.products = 0

    @classmethod
    def from_dense(cls, dense) -> "SparseMatrix":
        dense = np.asarray(dense, dtype=np.float64)
        r, c = np.nonzero(dense)
        return cls(dense.shape[0], dense.shape[1], r, c, dense[r, c])

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        idx = np.arange(n)
        return cls(n, n, idx, idx, np.ones(n))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def nnz(self) -> int:
        return int(self.csr.nnz)

    def entries(self) -> list[tuple[int, int, float]]:
        coo = self.csr.tocoo()
        return [(int(r), int(c), float(v)) for r, c, v in zip(coo.row, coo.col, coo.data)]

    def to_dense(self) -> np.ndarray:
        return self.csr.toarray()

    def diagonal(self) -> np.ndarray:
        return self.csr.diagonal()

    def is_symmetric(self, atol: float = 0.0) -> bool:
        if self.rows != self.cols:
            return False
        diff = self.csr - self.csr.T
        return diff.nnz == 0 or float(np.abs(diff.data).max()) <= atol
