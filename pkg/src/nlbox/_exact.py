"""Small exact linear algebra over Fractions (projection onto affine subspaces)."""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

Vector = list[Fraction]


def _dot(u: Sequence[Fraction], v: Sequence[Fraction]) -> Fraction:
    return sum((a * b for a, b in zip(u, v) if a and b), Fraction(0))


def independent_rows(rows: Sequence[Sequence[Fraction]]) -> list[int]:
    """Indices of a maximal linearly independent subset of ``rows``, greedily in order."""
    basis: list[tuple[int, Vector]] = []  # (pivot column, reduced row)
    keep = []
    for i, row in enumerate(rows):
        r = list(row)
        for col, b in basis:
            if r[col]:
                f = r[col] / b[col]
                r = [x - f * y for x, y in zip(r, b)]
        pivot = next((j for j, x in enumerate(r) if x), None)
        if pivot is not None:
            basis.append((pivot, r))
            keep.append(i)
    return keep


def solve(matrix: Sequence[Sequence[Fraction]], rhs: Sequence[Fraction]) -> Vector:
    """Solve a square nonsingular system exactly by Gauss-Jordan elimination."""
    n = len(matrix)
    aug = [list(row) + [rhs[i]] for i, row in enumerate(matrix)]
    for col in range(n):
        piv = next(r for r in range(col, n) if aug[r][col])
        aug[col], aug[piv] = aug[piv], aug[col]
        inv = 1 / aug[col][col]
        aug[col] = [x * inv for x in aug[col]]
        for r in range(n):
            if r != col and aug[r][col]:
                f = aug[r][col]
                aug[r] = [x - f * y for x, y in zip(aug[r], aug[col])]
    return [aug[r][n] for r in range(n)]


def project_affine(
    point: Sequence[Fraction],
    rows: Sequence[Sequence[Fraction]],
    rhs: Sequence[Fraction],
) -> Vector:
    """Euclidean projection of ``point`` onto ``{v : rows @ v == rhs}``.

    The constraint system must be consistent; redundant rows are dropped.
    """
    keep = independent_rows(rows)
    A = [rows[i] for i in keep]
    c = [rhs[i] for i in keep]
    residual = [_dot(a, point) - ci for a, ci in zip(A, c)]
    if not any(residual):
        return list(point)
    gram = [[_dot(a, b) for b in A] for a in A]
    lam = solve(gram, residual)
    out = list(point)
    for a, l in zip(A, lam):
        if l:
            for j, aj in enumerate(a):
                if aj:
                    out[j] -= l * aj
    return out
