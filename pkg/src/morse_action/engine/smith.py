"""Smith normal form over the integers, in exact Python integer arithmetic."""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import sympy

IntMatrix = List[List[int]]


@dataclass(frozen=True)
class SmithForm:
    """ U * A * V = D with U, V unimodular and d_1 | d_2 | ... on the diagonal of D """

    U: IntMatrix
    D: IntMatrix
    V: IntMatrix
    rank: int
    torsion: Tuple[int, ...]
    shape: Tuple[int, int]

    @property
    def diagonal(self) -> List[int]:
        return [self.D[i][i] for i in range(min(self.shape))]


def as_int_matrix(mat, shape:Tuple[int, int]=None) -> Tuple[IntMatrix, Tuple[int, int]]:
    arr = np.asarray(mat, dtype=object)
    if arr.size == 0:
        if shape is None:
            shape = arr.shape if arr.ndim == 2 else (0, 0)
        return [[] for _ in range(shape[0])], tuple(shape)
    if arr.ndim != 2:
        raise ValueError(f"Error: expected a two-dimensional matrix, got {arr.ndim} dimensions")
    rows = []
    for row in arr:
        out = []
        for x in row:
            if int(x) != x:
                raise ValueError(f"Error: matrix entry {x} is not an integer")
            out.append(int(x))
        rows.append(out)
    return rows, arr.shape


def _identity(n:int) -> IntMatrix:
    return [[1 if i == j else 0 for j in range(n)] for i in range(n)]


def matmul(a:IntMatrix, b:IntMatrix, inner:int=None) -> IntMatrix:
    inner = len(b) if inner is None else inner
    cols = len(b[0]) if b else 0
    return [[sum(a[i][k] * b[k][j] for k in range(inner)) for j in range(cols)] for i in range(len(a))]


def smith_normal_form(mat, shape:Tuple[int, int]=None) -> SmithForm:
    A, (m, n) = as_int_matrix(mat, shape)
    A = [row[:] for row in A]
    U = _identity(m)
    V = _identity(n)

    def swap_rows(i, j):
        A[i], A[j] = A[j], A[i]
        U[i], U[j] = U[j], U[i]

    def swap_cols(i, j):
        for M in (A, V):
            for row in M:
                row[i], row[j] = row[j], row[i]

    def add_row(dst, src, q):
        # row_dst -= q * row_src
        A[dst] = [x - q * y for x, y in zip(A[dst], A[src])]
        U[dst] = [x - q * y for x, y in zip(U[dst], U[src])]

    def add_col(dst, src, q):
        for M in (A, V):
            for row in M:
                row[dst] -= q * row[src]

    def smallest(t):
        best = None
        for i in range(t, m):
            for j in range(t, n):
                if A[i][j] != 0 and (best is None or abs(A[i][j]) < abs(A[best[0]][best[1]])):
                    best = (i, j)
        return best

    for t in range(min(m, n)):
        pivot = smallest(t)
        if pivot is None:
            break
        while True:
            i, j = pivot
            swap_rows(t, i)
            swap_cols(t, j)
            p = A[t][t]
            for i in range(t + 1, m):
                if A[i][t]:
                    add_row(i, t, A[i][t] // p)
            for j in range(t + 1, n):
                if A[t][j]:
                    add_col(j, t, A[t][j] // p)
            rest = [(i, t) for i in range(t + 1, m) if A[i][t]] + [(t, j) for j in range(t + 1, n) if A[t][j]]
            if rest:
                pivot = min(rest, key=lambda ij: abs(A[ij[0]][ij[1]]))
                continue
            bad = next(((i, j) for i in range(t + 1, m) for j in range(t + 1, n) if A[i][j] % p), None)
            if bad is None:
                break
            # pull a non-multiple into row t, the next pass shrinks the pivot
            add_row(t, bad[0], -1)
            pivot = (t, t)
        if A[t][t] < 0:
            A[t] = [-x for x in A[t]]
            U[t] = [-x for x in U[t]]

    diag = [A[i][i] for i in range(min(m, n))]
    rank = sum(1 for d in diag if d != 0)
    torsion = tuple(d for d in diag if d > 1)
    return SmithForm(U=U, D=A, V=V, rank=rank, torsion=torsion, shape=(m, n))


def is_unimodular(M:IntMatrix) -> bool:
    """ exact determinant check, |det M| = 1 """
    if not M:
        return True
    return abs(sympy.Matrix(M).det()) == 1


def verify_smith(mat, form:SmithForm) -> bool:
    """ U * A * V == D exactly, U and V unimodular, diagonal divisibility chain """
    A, (m, n) = as_int_matrix(mat, form.shape)
    if m == 0 or n == 0:
        return True
    if matmul(matmul(form.U, A, m), form.V, n) != form.D:
        return False
    if any(form.D[i][j] for i in range(m) for j in range(n) if i != j):
        return False
    nonzero = [d for d in form.diagonal if d]
    if any(d < 0 for d in nonzero) or any(b % a for a, b in zip(nonzero, nonzero[1:])):
        return False
    if any(nonzero) and form.diagonal[:len(nonzero)] != nonzero:
        return False
    return is_unimodular(form.U) and is_unimodular(form.V)


def rank_mod2(mat:Sequence[Sequence[int]]) -> int:
    rows = [[int(x) % 2 for x in row] for row in mat]
    rank = 0
    cols = len(rows[0]) if rows else 0
    for c in range(cols):
        pivot = next((r for r in range(rank, len(rows)) if rows[r][c]), None)
        if pivot is None:
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        for r in range(len(rows)):
            if r != rank and rows[r][c]:
                rows[r] = [(x + y) % 2 for x, y in zip(rows[r], rows[rank])]
        rank += 1
    return rank
