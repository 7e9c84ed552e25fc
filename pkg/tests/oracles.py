"""Independent brute-force oracles used by the test suite.

The multiplier oracle works on the full normalized bar cochain spaces: the
coboundary matrices are materialized over the integers, kernels are counted
through an l-adic rank profile (validated below against exact Smith forms),
and the multiplier is read off Hom-counts by universal coefficients.  Nothing
here shares logic with the production path beyond the prime-field echelon.
"""

from __future__ import annotations

from math import gcd

import numpy as np

from cll.groups import FiniteGroup, abelian_invariants, abelianization
from cll.linalg import fp_echelon


def bar_d2_matrix(G: FiniteGroup) -> np.ndarray:
    """Rows: normalized cocycle identities indexed by non-identity triples;
    columns: normalized 2-cochain values on non-identity pairs."""
    n = G.order
    e = G.identity
    elems = [x for x in range(n) if x != e]
    pos = {x: i for i, x in enumerate(elems)}
    m = len(elems)

    def col(a, b):
        if a == e or b == e:
            return -1
        return pos[a] * m + pos[b]

    rows = np.zeros((m ** 3, m * m), dtype=np.int64)
    r = 0
    for x in elems:
        for y in elems:
            xy = G.mul(x, y)
            for z in elems:
                # a(y,z) + a(x,yz) - a(xy,z) - a(x,y)
                for c, s in ((col(y, z), 1), (col(x, G.mul(y, z)), 1),
                             (col(xy, z), -1), (col(x, y), -1)):
                    if c >= 0:
                        rows[r, c] += s
                r += 1
    return rows


def _nullspace_from_rref(R, piv, ncols: int, p: int) -> np.ndarray:
    free = [c for c in range(ncols) if c not in piv]
    K = np.zeros((len(free), ncols), dtype=np.int64)
    for k, c in enumerate(free):
        K[k, c] = 1
        for r, pc in enumerate(piv):
            K[k, pc] = (-R[r, c]) % p
    return K


class LadicProfile:
    """Lazy l-valuation profile of the elementary divisors of an integer
    matrix: mu(j) = number of divisors with valuation exactly j.

    Saturation iteration: append (S K)/l for K spanning the mod-l kernel; the
    rank growth at step j counts the valuation-j divisors.  Each step costs
    one echelon whose nullspace is reused for the next.
    """

    def __init__(self, A: np.ndarray, l: int):
        self.l = l
        self.S = np.asarray(A, dtype=np.int64)
        self.cols = self.S.shape[1]
        self.mu: list[int] = []
        self._rank_prev = 0
        self._exhausted = False

    def extend(self, j: int) -> None:
        while len(self.mu) <= j and not self._exhausted:
            R, piv = fp_echelon(self.S % self.l, self.l)
            r = len(piv)
            self.mu.append(r - self._rank_prev)
            self._rank_prev = r
            K = _nullspace_from_rref(R, piv, self.S.shape[1], self.l)
            if K.shape[0] == 0:
                self._exhausted = True
                break
            B = self.S @ K.T
            if (B % self.l).any():
                raise AssertionError("kernel lift is not divisible; bug")
            self.S = np.hstack([self.S, B // self.l])

    def kernel_size_log(self, k: int) -> int:
        """log_l |{x over Z/l^k : A x = 0}|."""
        self.extend(k - 1)
        total = 0
        finite = 0
        for j, cnt in enumerate(self.mu):
            total += cnt * min(j, k)
            finite += cnt
        total += (self.cols - finite) * k
        return total


def ladic_kernel_profile(A: np.ndarray, l: int, kmax: int) -> list[int]:
    prof = LadicProfile(A, l)
    prof.extend(kmax - 1)
    mu = list(prof.mu)
    while len(mu) < kmax:
        mu.append(0)
    return mu[:kmax]


def hom_count_log(G: FiniteGroup, l: int, k: int) -> int:
    """log_l |Hom(G, Z/l^k)| from the abelianization's invariant factors."""
    ab, _ = abelianization(G)
    out = 0
    for d in abelian_invariants(ab):
        g = gcd(d, l ** k)
        while g > 1:
            g //= l
            out += 1
    return out


def oracle_multiplier_factors(G: FiniteGroup, l: int) -> list[int]:
    """Invariant factors of H_2(G, Z)(l) from full bar-resolution counting."""
    if G.order == 1 or G.order % l:
        return []  # the multiplier is |G|-torsion
    m = G.order - 1
    kmax = 0
    o = G.order
    while o % l == 0:
        o //= l
        kmax += 1
    d2 = bar_d2_matrix(G)
    prof = LadicProfile(d2, l)
    ext_log = {k: hom_count_log(G, l, k) for k in range(kmax + 2)}
    c = [0]
    for k in range(1, kmax + 2):
        z2 = prof.kernel_size_log(k)
        b2 = k * m - ext_log[k]          # |C^1| / |Hom(G, Z/l^k)|
        h2 = z2 - b2
        hom_h2 = h2 - ext_log[k]         # strip Ext^1(G^ab, Z/l^k)
        c.append(hom_h2)
        if k >= 2 and c[k] - c[k - 1] == 0:
            break
    factors = []
    for k in range(1, len(c)):
        geq_k = c[k] - c[k - 1]
        geq_k1 = c[k + 1] - c[k] if k + 1 < len(c) else 0
        for _ in range(geq_k - geq_k1):
            factors.append(l ** k)
    factors.sort()
    return factors


def brute_force_lift_products(ext, elements) -> set[int]:
    """All products of same-order lifts over every lift choice (tiny fibers)."""
    import itertools
    T, base = ext.total, ext.base
    fibers = []
    for g in elements:
        og = int(base.element_orders[g])
        fibers.append([e for e in range(T.order)
                       if ext.proj(e) == g and int(T.element_orders[e]) == og])
    out = set()
    for combo in itertools.product(*fibers):
        prod = T.identity
        for e in combo:
            prod = T.mul(prod, e)
        out.add(prod)
    return out
