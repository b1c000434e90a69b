"""Dense exact linear algebra over a field (Gaussian rationals or rationals).

Entries only need ``+ - * /`` and an exact comparison with ``0``.
"""

from __future__ import annotations

from typing import List, Sequence, Tuple


class SingularMatrix(ValueError):
    pass


def _copy(rows):
    return [list(r) for r in rows]


def row_reduce(rows: Sequence[Sequence[object]]) -> Tuple[List[List[object]], List[int]]:
    """Reduced row echelon form and pivot columns."""
    a = _copy(rows)
    if not a:
        return a, []
    m, n = len(a), len(a[0])
    pivots: List[int] = []
    r = 0
    for c in range(n):
        p = next((i for i in range(r, m) if not a[i][c] == 0), None)
        if p is None:
            continue
        a[r], a[p] = a[p], a[r]
        inv = 1 / a[r][c]
        a[r] = [x * inv for x in a[r]]
        for i in range(m):
            if i != r and not a[i][c] == 0:
                f = a[i][c]
                a[i] = [x - f * y for x, y in zip(a[i], a[r])]
        pivots.append(c)
        r += 1
        if r == m:
            break
    return a, pivots


def rank(rows) -> int:
    return len(row_reduce(rows)[1])


def inverse(rows) -> List[List[object]]:
    n = len(rows)
    if any(len(r) != n for r in rows):
        raise ValueError("inverse needs a square matrix")
    zero = rows[0][0] * 0
    aug = [list(r) + [zero + (1 if i == j else 0) for j in range(n)] for i, r in enumerate(rows)]
    red, piv = row_reduce(aug)
    if piv[:n] != list(range(n)):
        raise SingularMatrix("matrix is singular")
    return [row[n:] for row in red]


def determinant(rows) -> object:
    a = _copy(rows)
    n = len(a)
    det = a[0][0] * 0 + 1
    for c in range(n):
        p = next((i for i in range(c, n) if not a[i][c] == 0), None)
        if p is None:
            return det * 0
        if p != c:
            a[c], a[p] = a[p], a[c]
            det = -det
        det = det * a[c][c]
        inv = 1 / a[c][c]
        for i in range(c + 1, n):
            if not a[i][c] == 0:
                f = a[i][c] * inv
                a[i] = [x - f * y for x, y in zip(a[i], a[c])]
    return det


def nullspace(rows, ncols: int) -> List[List[object]]:
    """Basis of ``{x : A x = 0}``; ``ncols`` is needed when ``rows`` is empty."""
    from gmpy2 import mpq

    if not rows:
        return [[mpq(1) if i == j else mpq(0) for i in range(ncols)] for j in range(ncols)]
    red, piv = row_reduce(rows)
    zero = rows[0][0] * 0
    free = [c for c in range(ncols) if c not in piv]
    basis = []
    for f in free:
        v = [zero] * ncols
        v[f] = zero + 1
        for r, pc in enumerate(piv):
            v[pc] = -red[r][f]
        basis.append(v)
    return basis


def solve(rows, rhs) -> List[object]:
    """One solution of ``A x = b`` or ``SingularMatrix`` if inconsistent."""
    n = len(rows[0])
    aug = [list(r) + [b] for r, b in zip(rows, rhs)]
    red, piv = row_reduce(aug)
    if n in piv:
        raise SingularMatrix("inconsistent system")
    zero = rows[0][0] * 0
    x = [zero] * n
    for r, pc in enumerate(piv):
        x[pc] = red[r][n]
    return x
