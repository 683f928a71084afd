"""Small symbolic-matrix helpers (Expr entries, eagerly folding)."""

from __future__ import annotations

from . import expr as E


def zeros(*shape):
    if len(shape) == 1:
        return [E.ZERO] * shape[0]
    return [zeros(*shape[1:]) for _ in range(shape[0])]


def identity(n):
    return [[E.ONE if i == j else E.ZERO for j in range(n)] for i in range(n)]


def transpose(M):
    return [list(col) for col in zip(*M)]


def matmul(A, B):
    rows, inner, cols = len(A), len(B), len(B[0])
    out = zeros(rows, cols)
    for i in range(rows):
        for j in range(cols):
            acc = E.ZERO
            for k in range(inner):
                acc = E.add_(acc, E.mul_(A[i][k], B[k][j]))
            out[i][j] = acc
    return out


def is_diagonal(M):
    return all(E.is_zero(M[i][j]) for i in range(len(M)) for j in range(len(M)) if i != j)


def det(M):
    n = len(M)
    if n == 1:
        return M[0][0]
    if n == 2:
        return E.sub_(E.mul_(M[0][0], M[1][1]), E.mul_(M[0][1], M[1][0]))
    acc = E.ZERO
    for j in range(n):
        if E.is_zero(M[0][j]):
            continue
        minor = [row[:j] + row[j + 1 :] for row in M[1:]]
        term = E.mul_(M[0][j], det(minor))
        acc = E.add_(acc, term) if j % 2 == 0 else E.sub_(acc, term)
    return acc


def sym_inverse(M):
    """Symbolic inverse; diagonal fast path, adjugate otherwise.

    Intended for the small (<= 4) frame-block matrices of this package;
    degenerate inputs surface as division-by-zero at evaluation time.
    """
    n = len(M)
    if is_diagonal(M):
        out = zeros(n, n)
        for i in range(n):
            out[i][i] = E.div_(E.ONE, M[i][i])
        return out
    d = det(M)
    if n == 1:
        return [[E.div_(E.ONE, d)]]
    out = zeros(n, n)
    for i in range(n):
        for j in range(n):
            minor = [row[:j] + row[j + 1 :] for k, row in enumerate(M) if k != i]
            cof = det(minor)
            if (i + j) % 2 == 1:
                cof = E.neg_(cof)
            out[j][i] = E.div_(cof, d)
    return out


def block_diag(A, B):
    na, nb = len(A), len(B)
    out = zeros(na + nb, na + nb)
    for i in range(na):
        for j in range(na):
            out[i][j] = A[i][j]
    for i in range(nb):
        for j in range(nb):
            out[na + i][na + j] = B[i][j]
    return out
