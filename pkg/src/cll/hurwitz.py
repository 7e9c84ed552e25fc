"""Lifting-invariant combinatorics: conjugation-closed sets, unit-powering
actions on kernel/vector pairs, orbit-collapsed vector enumeration, and the
component-count formulas with and without a prescribed invariant."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import gcd

import numpy as np

from .cohomology import CentralExtension, reduced_schur_cover, unique_same_order_lift
from .errors import AlphaNotCoprimeError, QNotCoprimeError, UsageError
from .groups import FiniteGroup, GroupHom, abelianization


def validate_cset(G: FiniteGroup, members) -> frozenset[int]:
    """Closed under conjugation and under invertible powering."""
    members = frozenset(members)
    for x in members:
        for g in range(G.order):
            if G.conj(x, g) not in members:
                raise UsageError(f"set not closed under conjugation at {x}")
        o = int(G.element_orders[x])
        for k in range(1, o):
            if gcd(k, o) == 1 and G.power(x, k) not in members:
                raise UsageError(f"set not closed under invertible powering at {x}")
    return members


def unit_power_exponent(alpha: int, order: int) -> int:
    """Exponent by which alpha acts on an element of the given order: alpha on
    the prime parts it is invertible on, identity on the rest (the unit part
    of alpha; the only consistent extension when gcd(alpha, order) > 1)."""
    if order == 1:
        return 0
    beta = 0
    mod = 1
    m = order
    p = 2
    while p * p <= m or (m > 1 and p > m):
        if m % p == 0:
            pk = 1
            while m % p == 0:
                m //= p
                pk *= p
            res = alpha % pk if alpha % p else 1 % pk
            # CRT combine
            g, x = _crt(beta, mod, res, pk)
            beta, mod = g, x
        p += 1
    if m > 1:
        pk = m
        res = alpha % pk if alpha % (m if m > 1 else 1) else 1 % pk
        beta, mod = _crt(beta, mod, res, pk)
    return beta % order


def _crt(a1: int, m1: int, a2: int, m2: int) -> tuple[int, int]:
    m = m1 * m2
    inv = pow(m1, -1, m2)
    x = (a1 + m1 * ((a2 - a1) * inv % m2)) % m
    return x, m


@dataclass(frozen=True)
class KElement:
    """A kernel element of the reduced covering paired with a class vector."""
    h: int
    m: tuple[int, ...]


class CSetData:
    """Conjugacy data of a conjugation-closed set plus its reduced covering:
    classes, canonical representatives, same-order representative lifts, and
    conjugator-transported lifts for every member."""

    def __init__(self, G: FiniteGroup, cset, cover: CentralExtension | None = None):
        self.G = G
        self.cset = validate_cset(G, cset)
        if cover is None:
            cover = reduced_schur_cover(G, self.cset)
        self.cover = cover
        classes = []
        seen = set()
        for x in sorted(self.cset):
            if x in seen:
                continue
            cls = frozenset(G.conj(x, g) for g in range(G.order))
            classes.append(cls)
            seen |= cls
        self.classes = classes
        self.class_reps = [min(c) for c in classes]
        self.class_of = {x: i for i, c in enumerate(classes) for x in c}
        # conjugator from the class rep to each member
        self.conjugator = {}
        for i, rep in enumerate(self.class_reps):
            for g in range(G.order):
                y = G.conj(rep, g)
                if y not in self.conjugator:
                    self.conjugator[y] = g
        self.rep_lifts = [unique_same_order_lift(cover, rep) for rep in self.class_reps]
        for rep, lift in zip(self.class_reps, self.rep_lifts):
            if cover.total.element_orders[lift] != G.element_orders[rep]:
                raise AssertionError("representative lift has the wrong order")

    @property
    def nclasses(self) -> int:
        return len(self.classes)

    def hat(self, x: int, alt_conjugator: int | None = None) -> int:
        """Canonical lift of a member: the conjugator-transport of the
        representative's same-order lift (independent of the conjugator)."""
        i = self.class_of[x]
        g = self.conjugator[x] if alt_conjugator is None else alt_conjugator
        T, sec = self.cover.total, self.cover.section()
        glift = int(sec[g])
        return T.conj(self.rep_lifts[i], glift)

    def power_class(self, i: int, alpha: int) -> int:
        rep = self.class_reps[i]
        beta = unit_power_exponent(alpha, int(self.G.element_orders[rep]))
        return self.class_of[self.G.power(rep, beta)]

    def q_orbits(self, q: int) -> list[list[int]]:
        seen = set()
        orbits = []
        for i in range(self.nclasses):
            if i in seen:
                continue
            orb = [i]
            seen.add(i)
            j = self.power_class(i, q)
            while j not in seen:
                orb.append(j)
                seen.add(j)
                j = self.power_class(j, q)
            orbits.append(orb)
        return orbits

    @cached_property
    def kernel(self) -> list[int]:
        return list(self.cover.kernel)

    @cached_property
    def kernel_exponent(self) -> int:
        out = 1
        for e in self.kernel:
            o = int(self.cover.total.element_orders[e])
            out = out * o // gcd(out, o)
        return out

    @cached_property
    def abelianized(self) -> tuple[FiniteGroup, GroupHom]:
        return abelianization(self.G)


def d_gcq(data: CSetData, q: int) -> int:
    """Number of unit-powering orbits of q on the classes."""
    _require_q(data, q)
    return len(data.q_orbits(q))


def _require_q(data: CSetData, q: int) -> None:
    if gcd(q, data.kernel_exponent) != 1:
        raise QNotCoprimeError(
            f"q={q} shares a factor with the covering kernel exponent")
    if q <= 0:
        raise QNotCoprimeError("q must be positive")


def w_alpha(data: CSetData, alpha: int, class_idx: int,
            alt_lift_check: bool = True) -> int:
    """x_hat^(-alpha) * hat(x^alpha) for the class representative: a kernel
    element of the reduced covering, independent of the lift choices."""
    G, T = data.G, data.cover.total
    rep = data.class_reps[class_idx]
    o = int(G.element_orders[rep])
    beta = unit_power_exponent(alpha, o)
    xhat = data.rep_lifts[class_idx]
    target = G.power(rep, beta)
    yhat = data.hat(target)
    w = T.mul(T.power(xhat, -beta), yhat)
    if data.cover.proj(w) != G.identity:
        raise AssertionError("powering defect escaped the kernel")
    if alt_lift_check:
        # recompute the transported lift through a different conjugator
        cands = [g for g in range(G.order) if G.conj(data.class_reps[data.class_of[target]], g) == target]
        for g in cands[1:2]:
            y2 = data.hat(target, alt_conjugator=g)
            if y2 != yhat:
                raise AssertionError("lift transport depends on the conjugator")
    return w


def W_alpha(data: CSetData, alpha: int, mvec) -> int:
    """The kernel-group value of the powering homomorphism on a class vector."""
    T = data.cover.total
    out = T.identity
    for i, m in enumerate(mvec):
        if m % 1:
            raise UsageError("class vector must be integral")
        if m:
            out = T.mul(out, T.power(w_alpha(data, alpha, i, alt_lift_check=False),
                                     int(m)))
    return out


def alpha_star(data: CSetData, alpha: int, z: KElement) -> KElement:
    """(h, m) -> (h^alpha W_alpha(m), m permuted by class powering)."""
    if gcd(alpha, data.kernel_exponent) != 1:
        raise AlphaNotCoprimeError(
            f"alpha={alpha} is not invertible on the covering kernel")
    T = data.cover.total
    h2 = T.mul(T.power(z.h, alpha), W_alpha(data, alpha, z.m))
    m2 = [0] * data.nclasses
    for i, m in enumerate(z.m):
        m2[data.power_class(i, alpha)] += m
    return KElement(h2, tuple(m2))


def enumerate_vectors(data: CSetData, q: int, n: int, M: int) -> list[tuple[int, ...]]:
    """All class vectors constant on q-powering orbits, coordinates >= M,
    summing to n (enumerated one value per orbit)."""
    _require_q(data, q)
    orbits = data.q_orbits(q)
    sizes = [len(o) for o in orbits]
    out = []

    def rec(i: int, left: int, acc: list[int]):
        if i == len(orbits):
            if left == 0:
                v = [0] * data.nclasses
                for orb, val in zip(orbits, acc):
                    for c in orb:
                        v[c] = val
                out.append(tuple(v))
            return
        v = M
        while v * sizes[i] <= left - M * sum(sizes[i + 1:]):
            rec(i + 1, left - v * sizes[i], acc + [v])
            v += 1

    if n >= 0:
        rec(0, n, [])
    return out


def _ab_kernel_ok(data: CSetData, mvec) -> bool:
    ab, proj = data.abelianized
    out = ab.identity
    for i, m in enumerate(mvec):
        out = ab.mul(out, ab.power(proj(data.class_reps[i]), int(m)))
    return out == ab.identity


def b_count(data: CSetData, q: int, n: int,
            fiber: tuple[GroupHom, int] | None = None) -> int:
    """Sum over kernel elements h (optionally restricted to a fiber of a map
    out of the kernel) of the number of admissible class vectors with
    W_{q^-1}(m)^q = h^(q-1)."""
    _require_q(data, q)
    T = data.cover.total
    qinv = pow(q, -1, data.kernel_exponent) if data.kernel_exponent > 1 else 1
    vectors = [m for m in enumerate_vectors(data, q, n, 0) if _ab_kernel_ok(data, m)]
    kernel = data.kernel
    if fiber is not None:
        phi, eta = fiber
        kernel = [h for h in kernel if phi(h) == eta]
    total = 0
    for m in vectors:
        lhs = T.power(W_alpha(data, qinv, m), q)
        for h in kernel:
            if lhs == T.power(h, q - 1):
                total += 1
    return total


def count_frobenius_fixed(data: CSetData, q: int, n: int, M: int) -> int:
    """Exact number of kernel/vector pairs with coordinates >= M summing to n,
    compatible with surjectivity (vector kills the abelianization), fixed by
    z -> q^{-1} * z.  Independent path from b_count: applies the set action
    directly."""
    _require_q(data, q)
    qinv = pow(q, -1, data.kernel_exponent) if data.kernel_exponent > 1 else 1
    count = 0
    for m in enumerate_vectors(data, q, n, M):
        if not _ab_kernel_ok(data, m):
            continue
        for h in data.kernel:
            z = KElement(h, m)
            if alpha_star(data, qinv, z) == z:
                count += 1
    return count


# ---------------------------------------------------------------------------
# the compatible-coverings fiber product
# ---------------------------------------------------------------------------

@dataclass
class FiberedCovers:
    """S1 = S' x_Gamma S2 materialized as a table, with the projections the
    component-count formulas evaluate."""
    group: FiniteGroup                  # G = H x| Gamma
    gamma: FiniteGroup
    rho: GroupHom                       # G ->> Gamma
    sprime: CentralExtension            # prime-to-(q|Gamma|) cover of G
    s2: CentralExtension                # reduced cover of Gamma
    s1_total: FiniteGroup
    s1_proj: GroupHom                   # S1 ->> G
    phi: GroupHom                       # S1 ->> S'
    rho_tilde: GroupHom                 # S1 ->> S2
    data: CSetData                      # c1-data computed on the S1 cover


def gamma_order_cset(G: FiniteGroup, rho: GroupHom) -> frozenset[int]:
    """Elements whose order equals the order of their image in Gamma, minus 1."""
    Gamma = rho.target
    out = set()
    for x in range(G.order):
        if x == G.identity:
            continue
        if int(G.element_orders[x]) == int(Gamma.element_orders[rho(x)]):
            out.add(x)
    return frozenset(out)


def build_fibered_covers(G: FiniteGroup, rho: GroupHom, q: int) -> FiberedCovers:
    """Materialize the compatible coverings over G ->> Gamma for the
    delta-refined counts: S' the prime-to-(q|Gamma|) stem cover of G, S2 the
    reduced cover of (Gamma, Gamma-minus-1), S1 their fiber product."""
    from .cohomology import _build_stem_cover

    Gamma = rho.target
    primes = []
    m = G.order
    p = 2
    while p * p <= m:
        if m % p == 0:
            if q % p and Gamma.order % p:
                primes.append(p)
            while m % p == 0:
                m //= p
        p += 1
    if m > 1 and q % m and Gamma.order % m:
        primes.append(m)
    sprime = _build_stem_cover(G, primes)
    c2 = frozenset(x for x in range(Gamma.order) if x != Gamma.identity)
    s2 = reduced_schur_cover(Gamma, c2)
    # fiber product over Gamma
    Sp, S2t = sprime.total, s2.total
    to_gamma_1 = rho.map[sprime.proj.map]          # S' -> Gamma
    to_gamma_2 = s2.proj.map                        # S2 -> Gamma
    pairs = [(a, b) for a in range(Sp.order) for b in range(S2t.order)
             if to_gamma_1[a] == to_gamma_2[b]]
    index = {ab: i for i, ab in enumerate(pairs)}
    ntot = len(pairs)
    table = np.zeros((ntot, ntot), dtype=np.int64)
    for i, (a, b) in enumerate(pairs):
        for j, (c, d) in enumerate(pairs):
            table[i, j] = index[(Sp.mul(a, c), S2t.mul(b, d))]
    total = FiniteGroup(table, identity=index[(Sp.identity, S2t.identity)])
    proj = GroupHom(total, G, np.asarray([sprime.proj(a) for a, _ in pairs]))
    phi = GroupHom(total, Sp, np.asarray([a for a, _ in pairs]))
    rho_t = GroupHom(total, S2t, np.asarray([b for _, b in pairs]))
    cover = CentralExtension(total, proj)
    c1 = gamma_order_cset(G, rho)
    data = CSetData(G, c1, cover=cover)
    return FiberedCovers(G, Gamma, rho, sprime, s2, total, proj, phi, rho_t, data)


def b_count_with_delta(fc: FiberedCovers, q: int, n: int, eta: int) -> int:
    """The delta-refined count: kernel elements restricted to the eta-fiber of
    the projection onto the prime-to-(q|Gamma|) cover."""
    if eta not in fc.sprime.kernel:
        raise UsageError("eta must be an element of the S' kernel")
    return b_count(fc.data, q, n, fiber=(fc.phi, eta))
