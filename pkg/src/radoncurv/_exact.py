"""Exact linear algebra over the rationals.

Small, dependency-free routines shared by the symbolic modules: rank,
linear solves, matrix inversion, and an incremental echelon accumulator used
for span bookkeeping.  Everything works on lists of `fractions.Fraction`
(plain ints are accepted and coerced).
"""

from __future__ import annotations

from fractions import Fraction
from typing import Optional, Sequence

__all__ = ["rank", "solve", "invert_matrix", "Echelon"]


def _copy(matrix: Sequence[Sequence]) -> list[list[Fraction]]:
    return [[Fraction(x) for x in row] for row in matrix]


def rank(matrix: Sequence[Sequence]) -> int:
    """Rank of a matrix given as a sequence of rows."""
    rows = _copy(matrix)
    if not rows:
        return 0
    ncols = len(rows[0])
    r = 0
    for col in range(ncols):
        pivot = next((i for i in range(r, len(rows)) if rows[i][col]), None)
        if pivot is None:
            continue
        rows[r], rows[pivot] = rows[pivot], rows[r]
        inv = Fraction(1) / rows[r][col]
        rows[r] = [x * inv for x in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][col]:
                factor = rows[i][col]
                rows[i] = [a - factor * b for a, b in zip(rows[i], rows[r])]
        r += 1
        if r == len(rows):
            break
    return r


def solve(matrix: Sequence[Sequence], rhs: Sequence) -> Optional[list[Fraction]]:
    """One exact solution of A x = b, or None if the system is inconsistent.

    Underdetermined systems get free variables set to zero.
    """
    rows = _copy(matrix)
    b = [Fraction(x) for x in rhs]
    if len(rows) != len(b):
        raise ValueError("matrix/vector size mismatch")
    if not rows:
        return []
    ncols = len(rows[0])
    pivots: list[tuple[int, int]] = []  # (row, col)
    r = 0
    for col in range(ncols):
        pivot = next((i for i in range(r, len(rows)) if rows[i][col]), None)
        if pivot is None:
            continue
        rows[r], rows[pivot] = rows[pivot], rows[r]
        b[r], b[pivot] = b[pivot], b[r]
        inv = Fraction(1) / rows[r][col]
        rows[r] = [x * inv for x in rows[r]]
        b[r] *= inv
        for i in range(len(rows)):
            if i != r and rows[i][col]:
                factor = rows[i][col]
                rows[i] = [a - factor * p for a, p in zip(rows[i], rows[r])]
                b[i] -= factor * b[r]
        pivots.append((r, col))
        r += 1
        if r == len(rows):
            break
    for i in range(r, len(rows)):
        if b[i]:
            return None
    x = [Fraction(0)] * ncols
    for row, col in pivots:
        x[col] = b[row]
    return x


def invert_matrix(matrix: Sequence[Sequence]) -> list[list[Fraction]]:
    """Exact inverse of a square matrix; raises ValueError if singular."""
    n = len(matrix)
    rows = _copy(matrix)
    if any(len(row) != n for row in rows):
        raise ValueError("matrix is not square")
    aug = [row + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(rows)]
    for col in range(n):
        pivot = next((i for i in range(col, n) if aug[i][col]), None)
        if pivot is None:
            raise ValueError("matrix is singular")
        aug[col], aug[pivot] = aug[pivot], aug[col]
        inv = Fraction(1) / aug[col][col]
        aug[col] = [x * inv for x in aug[col]]
        for i in range(n):
            if i != col and aug[i][col]:
                factor = aug[i][col]
                aug[i] = [a - factor * b for a, b in zip(aug[i], aug[col])]
    return [row[n:] for row in aug]


class Echelon:
    """Incremental row-echelon accumulator.

    Feed vectors with :meth:`add`; each reports whether it enlarged the span.
    Used wherever a growing family must be deduplicated by exact linear span.
    """

    def __init__(self, width: int):
        self.width = width
        self._rows: list[tuple[int, list[Fraction]]] = []  # (pivot column, row)

    @property
    def rank(self) -> int:
        return len(self._rows)

    def residual(self, vector: Sequence) -> list[Fraction]:
        """Vector reduced against the accumulated span."""
        v = [Fraction(x) for x in vector]
        if len(v) != self.width:
            raise ValueError("vector width mismatch")
        for col, row in self._rows:
            if v[col]:
                factor = v[col]
                v = [a - factor * b for a, b in zip(v, row)]
        return v

    def contains(self, vector: Sequence) -> bool:
        return not any(self.residual(vector))

    def add(self, vector: Sequence) -> bool:
        """Add a vector to the span; True if it was independent."""
        v = self.residual(vector)
        pivot = next((i for i, x in enumerate(v) if x), None)
        if pivot is None:
            return False
        inv = Fraction(1) / v[pivot]
        self._rows.append((pivot, [x * inv for x in v]))
        return True
