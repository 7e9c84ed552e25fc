"""Exact linear algebra over prime fields and over Z/l^N.

Conventions: matrices are numpy int64 arrays with entries reduced into
[0, modulus).  Row vectors span subgroups; "kernel" always means the right
kernel {x : A x = 0}.  Elimination over F_p batches row reductions through
float64 matmuls (entries stay below 2^53, so products are exact) which keeps
the big bar-resolution matrices in BLAS.
"""

from __future__ import annotations

import numpy as np


def _as2d(a) -> np.ndarray:
    m = np.ascontiguousarray(np.atleast_2d(np.asarray(a, dtype=np.int64)))
    return m


# ---------------------------------------------------------------------------
# prime field
# ---------------------------------------------------------------------------

def fp_echelon(A, p: int):
    """Reduced row echelon form over F_p (unique, so processing order is
    free).  Returns (R, pivcols): one row per pivot, pivots are 1, pivot
    columns cleared above and below.

    Large inputs are consumed in pseudo-shuffled working sets, batch-reduced
    against the current basis through exact float64 matmuls (values stay far
    below 2^53) with short sequential insertion bursts in between.
    """
    A = _as2d(A) % p
    nrows, ncols = A.shape
    R = np.zeros((0, ncols), dtype=np.int64)
    pivcols: list[int] = []
    if nrows == 0 or ncols == 0:
        return R, pivcols
    if nrows > 256:
        # deterministic spread so early working sets already carry full rank
        order = np.argsort((np.arange(nrows, dtype=np.uint64) * np.uint64(2654435761))
                           & np.uint64(0xFFFFFFFF), kind="stable")
    else:
        order = np.arange(nrows)

    def batch_reduce(B):
        if not pivcols or B.shape[0] == 0:
            return B % p
        coef = B[:, pivcols].astype(np.float64)
        return (B - (coef @ R.astype(np.float64)).astype(np.int64)) % p

    setsize = max(256, min(nrows, (1 << 22) // max(ncols, 1)))
    start = 0
    while start < nrows:
        work = A[order[start:start + setsize]]
        start += setsize
        while work.shape[0]:
            work = batch_reduce(work)
            mask = work.any(axis=1)
            work = work[mask]
            if work.shape[0] == 0:
                break
            take = min(64, work.shape[0])
            for i in range(take):
                row = work[i]
                if pivcols:
                    row = (row - row[pivcols] @ R) % p
                nz = np.flatnonzero(row)
                if nz.size == 0:
                    continue
                c = int(nz[0])
                inv = pow(int(row[c]), int(p) - 2, int(p))
                row = (row * inv) % p
                if R.shape[0]:
                    col = R[:, c].copy()
                    if col.any():
                        R = (R - np.outer(col, row)) % p
                pos = int(np.searchsorted(np.asarray(pivcols, dtype=np.int64), c)) \
                    if pivcols else 0
                R = np.insert(R, pos, row % p, axis=0)
                pivcols.insert(pos, c)
            work = work[take:]
    return R, pivcols


def fp_rank(A, p: int) -> int:
    return len(fp_echelon(A, p)[1])


def fp_nullspace(A, p: int) -> np.ndarray:
    """Rows span the right kernel of A over F_p."""
    A = _as2d(A)
    ncols = A.shape[1]
    R, pivcols = fp_echelon(A, p)
    free = [c for c in range(ncols) if c not in pivcols]
    K = np.zeros((len(free), ncols), dtype=np.int64)
    for k, c in enumerate(free):
        K[k, c] = 1
        for r, pc in enumerate(pivcols):
            K[k, pc] = (-R[r, c]) % p
    return K


def fp_solve(A, b, p: int):
    """One solution of A x = b over F_p, or None."""
    A = _as2d(A) % p
    b = np.asarray(b, dtype=np.int64) % p
    R, piv = fp_echelon(np.hstack([A, b.reshape(-1, 1)]), p)
    ncols = A.shape[1]
    if ncols in piv:
        return None
    x = np.zeros(ncols, dtype=np.int64)
    for r, c in enumerate(piv):
        x[c] = R[r, ncols] % p
    return x


def fp_in_rowspan(R, pivcols, v, p: int) -> bool:
    v = np.asarray(v, dtype=np.int64) % p
    if len(pivcols):
        v = (v - v[list(pivcols)] @ np.asarray(R)) % p
    return not v.any()


# ---------------------------------------------------------------------------
# Z / l^N  (chain ring; pivots are l^v times a unit)
# ---------------------------------------------------------------------------

def _val(x: int, l: int, N: int) -> int:
    if x == 0:
        return N
    v = 0
    while x % l == 0:
        x //= l
        v += 1
    return v


class ZnHowell:
    """Row Howell form of a subgroup of (Z/l^N)^m given by generator rows.

    Pivot entries are normalized to l^v; pivot columns are cleared above and
    reduced below modulo the pivot.  The Howell property (every element of the
    row span with leading zeros is spanned by the later rows) is maintained by
    also absorbing l^(N-v) multiples of each pivot row.
    """

    def __init__(self, rows, l: int, N: int):
        self.l = int(l)
        self.N = int(N)
        self.mod = self.l ** self.N
        rows = _as2d(rows) % self.mod if np.size(rows) else np.zeros((0, 0), dtype=np.int64)
        self.ncols = rows.shape[1] if rows.size else (rows.shape[1] if rows.ndim == 2 else 0)
        self.rows = np.zeros((0, self.ncols), dtype=np.int64)
        self.pivots: list[tuple[int, int]] = []  # (column, valuation)
        for r in rows:
            self._insert(r.copy())

    def _reduce(self, v: np.ndarray) -> np.ndarray:
        """Reduce v against current rows as far as divisibility allows."""
        mod = self.mod
        for i, (c, val) in enumerate(self.pivots):
            a = int(v[c])
            if a == 0:
                continue
            q = (a // (self.l ** val))
            if q:
                v = (v - q * self.rows[i]) % mod
        return v

    def _insert(self, v: np.ndarray) -> None:
        mod, l, N = self.mod, self.l, self.N
        v = v % mod
        while True:
            v = self._reduce(v)
            nz = np.flatnonzero(v)
            if nz.size == 0:
                return
            c = int(nz[0])
            val = min(_val(int(x), l, N) for x in v[nz])
            # pivot column must realize the minimal valuation for a clean form;
            # if not, move a better column's entry forward by scaling: instead
            # just use leading column, splitting off its l-power.
            vc = _val(int(v[c]), l, N)
            unit = int(v[c]) // (l ** vc)
            inv = pow(unit, -1, mod)
            v = (v * inv) % mod
            # now v[c] == l^vc
            idx = None
            for i, (pc, pval) in enumerate(self.pivots):
                if pc == c:
                    idx = i
                    break
            if idx is not None and self.pivots[idx][1] <= vc:
                # _reduce left a residue only because of divisibility; since
                # pivot val <= vc it would have cleared it. defensive:
                raise AssertionError("howell reduce invariant broken")
            pos = 0
            for i, (pc, _) in enumerate(self.pivots):
                if pc < c:
                    pos = i + 1
            if idx is not None:
                # replace the worse pivot in this column, re-insert it after
                old = self.rows[idx].copy()
                self.rows = np.delete(self.rows, idx, axis=0)
                del self.pivots[idx]
                self._insert_row_at(v, c, vc)
                self._insert(old)
            else:
                self._insert_row_at(v, c, vc)
            # Howell completeness: the l^(N-vc) multiple may have a tail
            tail = (v * (l ** (N - vc))) % mod
            tail[c] = 0
            if tail.any():
                self._insert(tail % mod)
            return

    def _insert_row_at(self, v: np.ndarray, c: int, vc: int) -> None:
        pos = 0
        for i, (pc, _) in enumerate(self.pivots):
            if pc < c:
                pos = i + 1
        # clear this column in the other rows where divisibility allows
        self.rows = np.insert(self.rows, pos, v, axis=0)
        self.pivots.insert(pos, (c, vc))
        mod = self.mod
        for i in range(len(self.pivots)):
            if i == pos:
                continue
            a = int(self.rows[i, c])
            if a:
                q = a // (self.l ** vc)
                if q:
                    self.rows[i] = (self.rows[i] - q * v) % mod

    def reduce_vector(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.int64) % self.mod
        return self._reduce(v.copy())

    def contains(self, v) -> bool:
        return not self.reduce_vector(v).any()

    def coords(self, v) -> np.ndarray | None:
        """x with sum_i x_i rows_i = v, entries in [0, mod); None if not in span."""
        v = np.asarray(v, dtype=np.int64) % self.mod
        x = np.zeros(len(self.pivots), dtype=np.int64)
        w = v.copy()
        for i, (c, val) in enumerate(self.pivots):
            a = int(w[c])
            if a == 0:
                continue
            q = a // (self.l ** val)
            x[i] = q % self.mod
            w = (w - q * self.rows[i]) % self.mod
        if w.any():
            return None
        return x

    def order_relations(self) -> np.ndarray:
        """Rows r with r . rows == 0 expressing the additive orders of the basis."""
        rels = []
        k = len(self.pivots)
        for i, (c, val) in enumerate(self.pivots):
            mult = self.l ** (self.N - val)
            tail = (mult * self.rows[i]) % self.mod
            coords = self.coords(tail)
            if coords is None:
                raise AssertionError("howell span not closed under own multiples")
            rel = np.zeros(k, dtype=np.int64)
            rel[i] = mult
            rel = rel - coords
            rels.append(rel)
        return np.asarray(rels, dtype=np.int64).reshape(len(rels), k)


def zn_kernel(M, l: int, N: int) -> np.ndarray:
    """Generator rows of {x : M x = 0 over Z/l^N}."""
    M = _as2d(M) % (l ** N)
    r, c = M.shape
    aug = np.hstack([M.T % (l ** N), np.eye(c, dtype=np.int64)])
    H = ZnHowell(aug, l, N)
    out = [row[r:] for row, (pc, _) in zip(H.rows, H.pivots) if pc >= r]
    if not out:
        return np.zeros((0, c), dtype=np.int64)
    return np.asarray(out, dtype=np.int64)


# ---------------------------------------------------------------------------
# integer Smith form (small matrices, exact python ints)
# ---------------------------------------------------------------------------

def integer_smith(A):
    """Smith normal form over Z for a small matrix given as list of lists.

    Returns (divisors, Uinv) where U A V = D and Uinv is the inverse of the
    row transform: columns of Uinv are coordinates (in the original row space)
    of the generators aligned with the divisors.  Only the row transform is
    tracked; it is what cokernel bases need.
    """
    A = [list(map(int, row)) for row in A]
    n = len(A)
    m = len(A[0]) if n else 0
    Uinv = [[1 if i == j else 0 for j in range(n)] for i in range(n)]  # columns track

    def row_op(i, j, q):  # R_i -= q R_j ; Uinv: C_j += q C_i
        A[i] = [a - q * b for a, b in zip(A[i], A[j])]
        for r in range(n):
            Uinv[r][j] += q * Uinv[r][i]

    def row_swap(i, j):
        A[i], A[j] = A[j], A[i]
        for r in range(n):
            Uinv[r][i], Uinv[r][j] = Uinv[r][j], Uinv[r][i]

    def row_neg(i):
        A[i] = [-a for a in A[i]]
        for r in range(n):
            Uinv[r][i] = -Uinv[r][i]

    def col_op(i, j, q):  # C_i -= q C_j
        for r in range(n):
            A[r][i] -= q * A[r][j]

    def col_swap(i, j):
        for r in range(n):
            A[r][i], A[r][j] = A[r][j], A[r][i]

    t = 0
    while t < min(n, m):
        # find nonzero pivot with minimal |value|
        best = None
        for i in range(t, n):
            for j in range(t, m):
                if A[i][j] != 0 and (best is None or abs(A[i][j]) < abs(A[best[0]][best[1]])):
                    best = (i, j)
        if best is None:
            break
        i, j = best
        if i != t:
            row_swap(i, t)
        if j != t:
            col_swap(j, t)
        if A[t][t] < 0:
            row_neg(t)
        dirty = False
        for i in range(t + 1, n):
            if A[i][t]:
                q = A[i][t] // A[t][t]
                row_op(i, t, q)
                if A[i][t]:
                    dirty = True
        for j in range(t + 1, m):
            if A[t][j]:
                q = A[t][j] // A[t][t]
                col_op(j, t, q)
                if A[t][j]:
                    dirty = True
        if dirty:
            continue
        # divisibility fix: fold any entry not divisible by pivot back in
        bad = None
        for i in range(t + 1, n):
            for j in range(t + 1, m):
                if A[i][j] % A[t][t]:
                    bad = i
                    break
            if bad is not None:
                break
        if bad is not None:
            row_op(t, bad, -1)  # R_t += R_bad
            continue
        t += 1
    divisors = [A[i][i] for i in range(min(n, m)) if A[i][i] != 0]
    return divisors, Uinv


def cokernel_structure(rel_rows, ngens: int):
    """Structure of Z^ngens / <rel_rows>.

    Returns (orders, gens) with orders the invariant factors > 1 (0 denotes an
    infinite factor) and gens integer coordinate vectors in Z^ngens projecting
    to generators of the corresponding cyclic factors.
    """
    rel = [list(map(int, r)) for r in rel_rows]
    if not rel:
        rel = [[0] * ngens]
    # transpose: relations become columns, cokernel of the map
    A = [[rel[r][c] for r in range(len(rel))] for c in range(ngens)]
    divisors, Uinv = integer_smith(A)
    orders = []
    gens = []
    for i in range(ngens):
        d = divisors[i] if i < len(divisors) else 0
        if d == 1:
            continue
        orders.append(d)
        gens.append([Uinv[r][i] for r in range(ngens)])
    return orders, gens
