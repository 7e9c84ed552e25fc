"""Dense multiplication-table groups and the maps between them.

Elements are integer indices 0..order-1.  Tables are numpy int64.  Everything
is validated at construction and immutable afterwards; subgroups are plain
frozensets of element indices.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from math import gcd

import numpy as np

from .errors import (
    CapExceededError,
    InvalidActionError,
    NoInverseError,
    NoIdentityError,
    NotAssociativeError,
    NotGeneratingError,
    NotHomomorphismError,
    NotNormalError,
    OrdersNotCoprimeError,
)

TABLE_CAP = 2048          # largest order stored as a dense table
ENUM_CAP = 256            # largest order for surjection/automorphism enumeration
ASSOC_EXHAUSTIVE_CAP = 512
ASSOC_RANDOM_TRIPLES = 100_000


class FiniteGroup:
    """Immutable finite group backed by a dense multiplication table."""

    def __init__(self, mult, identity: int | None = None, labels=None, gens=None,
                 name: str = "", _validated: bool = False):
        mult = np.ascontiguousarray(np.asarray(mult, dtype=np.int64))
        if mult.ndim != 2 or mult.shape[0] != mult.shape[1]:
            raise NoIdentityError("multiplication table must be square")
        n = mult.shape[0]
        if n > TABLE_CAP:
            raise CapExceededError(f"group order {n} exceeds table cap {TABLE_CAP}")
        if mult.min(initial=0) < 0 or mult.max(initial=0) >= n:
            raise NotAssociativeError("table entries out of range")
        self.order = n
        self.mult = mult
        self.mult.setflags(write=False)
        self.labels = list(labels) if labels is not None else None
        self.gens = list(gens) if gens is not None else None
        self.name = name
        if identity is None:
            identity = self._find_identity()
        self.identity = int(identity)
        if not _validated:
            self._validate()
        self.inv = self._invert_table()
        if self.gens is not None:
            if subgroup_closure(self, self.gens) != frozenset(range(n)):
                raise NotGeneratingError("declared generators do not generate")

    # -- construction checks ------------------------------------------------

    def _find_identity(self) -> int:
        n = self.order
        idx = np.arange(n)
        for e in range(n):
            if np.array_equal(self.mult[e], idx) and np.array_equal(self.mult[:, e], idx):
                return e
        raise NoIdentityError("no two-sided identity element")

    def _validate(self) -> None:
        n = self.order
        e = self.identity
        idx = np.arange(n)
        if not (np.array_equal(self.mult[e], idx) and np.array_equal(self.mult[:, e], idx)):
            raise NoIdentityError(f"element {e} is not a two-sided identity")
        if n <= ASSOC_EXHAUSTIVE_CAP:
            for a in range(n):
                left = self.mult[self.mult[a]]          # (ab)c
                right = self.mult[a][self.mult]         # a(bc)
                if not np.array_equal(left, right):
                    bad = np.argwhere(left != right)[0]
                    raise NotAssociativeError(
                        f"associativity fails at triple ({a},{int(bad[0])},{int(bad[1])})")
        else:
            rng = np.random.default_rng(0)
            a = rng.integers(0, n, ASSOC_RANDOM_TRIPLES)
            b = rng.integers(0, n, ASSOC_RANDOM_TRIPLES)
            c = rng.integers(0, n, ASSOC_RANDOM_TRIPLES)
            left = self.mult[self.mult[a, b], c]
            right = self.mult[a, self.mult[b, c]]
            if not np.array_equal(left, right):
                i = int(np.flatnonzero(left != right)[0])
                raise NotAssociativeError(
                    f"associativity fails at triple ({a[i]},{b[i]},{c[i]})")

    def _invert_table(self) -> np.ndarray:
        n, e = self.order, self.identity
        inv = np.full(n, -1, dtype=np.int64)
        rows, cols = np.nonzero(self.mult == e)
        for a, b in zip(rows, cols):
            inv[a] = b
        for a in range(n):
            b = int(inv[a])
            if b < 0 or self.mult[a, b] != e or self.mult[b, a] != e:
                raise NoInverseError(f"element {a} has no two-sided inverse")
        inv.setflags(write=False)
        return inv

    # -- basic arithmetic -----------------------------------------------------

    def mul(self, a: int, b: int) -> int:
        return int(self.mult[a, b])

    def inv_el(self, a: int) -> int:
        return int(self.inv[a])

    def conj(self, a: int, g: int) -> int:
        """g^-1 a g."""
        return int(self.mult[self.mult[self.inv[g], a], g])

    def comm(self, a: int, b: int) -> int:
        """[a,b] = a^-1 b^-1 a b."""
        return int(self.mult[self.mult[self.mult[self.inv[a], self.inv[b]], a], b])

    def power(self, a: int, k: int) -> int:
        k = int(k)
        if k < 0:
            a, k = self.inv_el(a), -k
        out, base = self.identity, a
        while k:
            if k & 1:
                out = self.mul(out, base)
            base = self.mul(base, base)
            k >>= 1
        return out

    @cached_property
    def element_orders(self) -> np.ndarray:
        n = self.order
        orders = np.ones(n, dtype=np.int64)
        for a in range(n):
            x, k = a, 1
            while x != self.identity:
                x = self.mul(x, a)
                k += 1
            orders[a] = k
        orders.setflags(write=False)
        return orders

    @cached_property
    def exponent(self) -> int:
        out = 1
        for o in self.element_orders:
            out = out * int(o) // gcd(out, int(o))
        return out

    @cached_property
    def conjugacy_classes(self) -> list[frozenset[int]]:
        seen = set()
        classes = []
        for a in range(self.order):
            if a in seen:
                continue
            cls = frozenset(self.conj(a, g) for g in range(self.order))
            seen |= cls
            classes.append(cls)
        return classes

    @cached_property
    def center(self) -> frozenset[int]:
        n = self.order
        return frozenset(a for a in range(n)
                         if np.array_equal(self.mult[a], self.mult[:, a]))

    def generating_set(self) -> list[int]:
        """A small (greedy) generating set; declared gens win if present."""
        if self.gens:
            return list(self.gens)
        chosen: list[int] = []
        span = frozenset([self.identity])
        orders = self.element_orders
        while len(span) < self.order:
            cands = [a for a in range(self.order) if a not in span]
            best, best_span = None, span
            # prefer high-order elements; first maximal enlargement wins
            cands.sort(key=lambda a: -int(orders[a]))
            for a in cands:
                trial = subgroup_closure(self, list(chosen) + [a])
                if len(trial) > len(best_span):
                    best, best_span = a, trial
                if len(trial) == self.order:
                    break
            chosen.append(best)
            span = best_span
        return chosen

    @cached_property
    def canonical_hash(self) -> str:
        h = hashlib.sha256()
        h.update(str(self.order).encode())
        h.update(self.mult.tobytes())
        return h.hexdigest()[:16]

    def fingerprint(self) -> dict:
        """Isomorphism-invariant summary (not a certificate)."""
        orders = sorted(int(o) for o in self.element_orders)
        classes = sorted(len(c) for c in self.conjugacy_classes)
        return {"order": self.order, "element_orders": orders, "class_sizes": classes}

    def __repr__(self) -> str:
        return f"FiniteGroup({self.name or 'order=%d' % self.order})"


def from_mult_table(table, identity: int | None = None, labels=None,
                    name: str = "") -> FiniteGroup:
    return FiniteGroup(table, identity=identity, labels=labels, name=name)


def group_to_json(G: FiniteGroup) -> str:
    data = {"order": G.order, "mult": G.mult.tolist()}
    if G.labels is not None:
        data["labels"] = G.labels
    return json.dumps(data)


def group_from_json(text: str, name: str = "") -> FiniteGroup:
    data = json.loads(text)
    return FiniteGroup(data["mult"], labels=data.get("labels"), name=name)


# ---------------------------------------------------------------------------
# homomorphisms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GroupHom:
    source: FiniteGroup
    target: FiniteGroup
    map: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.map, dtype=np.int64)
        object.__setattr__(self, "map", m)
        if m.shape != (self.source.order,):
            raise NotHomomorphismError("map table has wrong length")
        if m[self.source.identity] != self.target.identity:
            raise NotHomomorphismError("identity not preserved")
        S, T = self.source, self.target
        lhs = m[S.mult]                       # phi(xy)
        rhs = T.mult[np.ix_(m, m)]            # phi(x)phi(y)
        if not np.array_equal(lhs, rhs):
            raise NotHomomorphismError("map does not respect multiplication")

    def __call__(self, a: int) -> int:
        return int(self.map[a])

    def compose(self, other: "GroupHom") -> "GroupHom":
        """self o other."""
        if other.target is not self.source and other.target.order != self.source.order:
            raise NotHomomorphismError("composition mismatch")
        return GroupHom(other.source, self.target, self.map[other.map])

    @cached_property
    def kernel(self) -> frozenset[int]:
        e = self.target.identity
        return frozenset(int(i) for i in np.flatnonzero(self.map == e))

    @cached_property
    def image(self) -> frozenset[int]:
        return frozenset(int(i) for i in np.unique(self.map))

    def is_surjective(self) -> bool:
        return len(self.image) == self.target.order


def identity_hom(G: FiniteGroup) -> GroupHom:
    return GroupHom(G, G, np.arange(G.order))


def hom_from_gen_images(G: FiniteGroup, H: FiniteGroup, gens, images):
    """Extend gens->images to a full map by left-multiplication BFS.

    Returns the image table or None when no homomorphism exists.  Checking
    every Cayley edge (x, g) suffices: multiplicativity on words follows by
    induction on word length.
    """
    n = G.order
    table = np.full(n, -1, dtype=np.int64)
    table[G.identity] = H.identity
    frontier = [G.identity]
    while frontier:
        nxt = []
        for x in frontier:
            fx = int(table[x])
            for g, h in zip(gens, images):
                y = G.mul(x, g)
                fy = H.mul(fx, h)
                if table[y] < 0:
                    table[y] = fy
                    nxt.append(y)
                elif table[y] != fy:
                    return None
        frontier = nxt
    if (table < 0).any():
        return None  # gens do not generate G
    # cross edges were all checked during BFS except those from non-tree
    # discovery order; verify the full edge set once, vectorized
    for g, h in zip(gens, images):
        if not np.array_equal(table[G.mult[:, g]], H.mult[table, h]):
            return None
    return table


# ---------------------------------------------------------------------------
# subgroups, quotients, series
# ---------------------------------------------------------------------------

def subgroup_closure(G: FiniteGroup, seed) -> frozenset[int]:
    members = {G.identity}
    frontier = [s for s in set(seed) if s != G.identity]
    members.update(frontier)
    while frontier:
        new = []
        for s in frontier:
            for m in list(members):
                for p in (G.mul(m, s), G.mul(s, m)):
                    if p not in members:
                        members.add(p)
                        new.append(p)
        frontier = new
    return frozenset(members)


def normal_closure(G: FiniteGroup, seed, gamma: "GammaGroup | None" = None) -> frozenset[int]:
    """Smallest subgroup containing seed, closed under G-conjugation (and the
    Gamma action when given)."""
    members = set(subgroup_closure(G, seed))
    pending = list(members)
    while pending:
        s = pending.pop()
        extra = [G.conj(s, g) for g in range(G.order)]
        if gamma is not None:
            extra.extend(int(gamma.action[t, s]) for t in range(gamma.gamma.order))
        fresh = [x for x in extra if x not in members]
        if fresh:
            members = set(subgroup_closure_from(G, members, fresh))
            pending.extend(fresh)
    return frozenset(members)


def subgroup_closure_from(G: FiniteGroup, members: set[int], new) -> frozenset[int]:
    out = set(members)
    frontier = [x for x in new if x not in out]
    out.update(frontier)
    while frontier:
        nxt = []
        for s in frontier:
            for m in list(out):
                for p in (G.mul(m, s), G.mul(s, m)):
                    if p not in out:
                        out.add(p)
                        nxt.append(p)
        frontier = nxt
    return frozenset(out)


def is_normal(G: FiniteGroup, N) -> bool:
    N = frozenset(N)
    return all(G.conj(a, g) in N for a in N for g in range(G.order))


def quotient(G: FiniteGroup, N) -> tuple[FiniteGroup, GroupHom]:
    N = frozenset(N)
    if not is_normal(G, N):
        raise NotNormalError("subgroup is not normal")
    n = G.order
    rep = np.full(n, -1, dtype=np.int64)
    cosets = []
    for a in range(n):
        if rep[a] >= 0:
            continue
        coset = sorted(G.mul(a, h) for h in N)
        for x in coset:
            rep[x] = len(cosets)
        cosets.append(coset[0])
    k = len(cosets)
    table = np.zeros((k, k), dtype=np.int64)
    for i, a in enumerate(cosets):
        table[i] = rep[G.mult[a, cosets]]
    Q = FiniteGroup(table, identity=int(rep[G.identity]), name=f"{G.name}/N" if G.name else "")
    proj = GroupHom(G, Q, rep)
    return Q, proj


def commutator_subgroup(G: FiniteGroup) -> frozenset[int]:
    comms = {G.comm(a, b) for a in range(G.order) for b in range(G.order)}
    return subgroup_closure(G, comms)


def commutator_of_subgroups(G: FiniteGroup, A, B) -> frozenset[int]:
    comms = {G.comm(a, b) for a in A for b in B}
    return subgroup_closure(G, comms)


def lower_central_series(G: FiniteGroup) -> list[frozenset[int]]:
    series = [frozenset(range(G.order))]
    while True:
        nxt = commutator_of_subgroups(G, series[-1], range(G.order))
        if nxt == series[-1]:
            break
        series.append(nxt)
        if nxt == {G.identity}:
            break
    return series


def abelianization(G: FiniteGroup) -> tuple[FiniteGroup, GroupHom]:
    return quotient(G, commutator_subgroup(G))


def abelian_invariants(G: FiniteGroup) -> list[int]:
    """Invariant factors d_1 | d_2 | ... of an abelian group, by order counting."""
    if commutator_subgroup(G) != {G.identity}:
        raise NotNormalError("abelian_invariants needs an abelian group")
    n = G.order
    if n == 1:
        return []
    # count elements of order dividing d for divisors d of the exponent;
    # the counts determine the invariant factors uniquely
    orders = [int(o) for o in G.element_orders]

    def count_dividing(d):
        return sum(1 for o in orders if d % o == 0)

    # factor into prime parts and rebuild
    from collections import defaultdict
    primes = []
    m = n
    p = 2
    while p * p <= m:
        if m % p == 0:
            primes.append(p)
            while m % p == 0:
                m //= p
        p += 1
    if m > 1:
        primes.append(m)
    parts = defaultdict(list)  # prime -> sorted prime-power factor list
    for p in primes:
        # ranks: r_k = log_p #{x : x^{p^k} = 1}
        ks = []
        k = 1
        prev = 1
        while True:
            cnt = count_dividing(p ** k)
            if cnt == prev:
                break
            ks.append(cnt)
            prev = cnt
            k += 1
        # number of cyclic factors of order >= p^k is log_p(ks[k-1]/ks[k-2])
        logs = []
        last = 0
        for cnt in ks:
            e = 0
            c = cnt
            while c > 1:
                c //= p
                e += 1
            logs.append(e)
        mults = []
        for i, e in enumerate(logs):
            mults.append(e - (logs[i - 1] if i else 0))
        # mults[i] = number of factors with exponent > i
        for i, cnt in enumerate(mults):
            nxt = mults[i + 1] if i + 1 < len(mults) else 0
            for _ in range(cnt - nxt):
                parts[p].append(p ** (i + 1))
    for p in parts:
        parts[p].sort()
    # merge into invariant factors, largest last
    factors = []
    while any(parts[p] for p in parts):
        d = 1
        for p in parts:
            if parts[p]:
                d *= parts[p].pop()
        factors.append(d)
    factors.reverse()
    return factors


# ---------------------------------------------------------------------------
# Gamma-groups
# ---------------------------------------------------------------------------

class GammaGroup:
    """A finite group with an action of a finite group Gamma by automorphisms.

    action[t, a] = image of element a under the automorphism attached to the
    Gamma-element t.
    """

    def __init__(self, group: FiniteGroup, gamma: FiniteGroup, action):
        self.group = group
        self.gamma = gamma
        act = np.asarray(action, dtype=np.int64)
        if act.shape != (gamma.order, group.order):
            raise InvalidActionError("action table has wrong shape")
        idx = np.arange(group.order)
        if not np.array_equal(act[gamma.identity], idx):
            raise InvalidActionError("identity of Gamma must act trivially")
        for t in range(gamma.order):
            row = act[t]
            if sorted(map(int, row)) != list(range(group.order)):
                raise InvalidActionError(f"gamma element {t} does not act bijectively")
            if not np.array_equal(row[group.mult], group.mult[np.ix_(row, row)]):
                raise InvalidActionError(f"gamma element {t} is not an automorphism")
        comp = act[:, act]  # comp[s, t, a] = act_s(act_t(a))
        want = act[gamma.mult]
        if not np.array_equal(comp, want):
            raise InvalidActionError("action is not a homomorphism from Gamma")
        self.action = act
        self.action.setflags(write=False)

    def act(self, t: int, a: int) -> int:
        return int(self.action[t, a])

    def orbit(self, a: int) -> frozenset[int]:
        return frozenset(int(self.action[t, a]) for t in range(self.gamma.order))


def semidirect_product(H: FiniteGroup, Gamma: FiniteGroup, action):
    """Group on pairs (h, t) with (h,t)(h',t') = (h * t(h'), t t').

    Elements are indexed h * |Gamma| + t.  Returns (G, embed_H, embed_Gamma,
    proj_Gamma).
    """
    gg = GammaGroup(H, Gamma, action)
    nh, ng = H.order, Gamma.order
    n = nh * ng
    if n > TABLE_CAP:
        raise CapExceededError(f"semidirect product order {n} exceeds cap")
    act = gg.action
    table = np.zeros((n, n), dtype=np.int64)
    for h in range(nh):
        for t in range(ng):
            a = h * ng + t
            hh = H.mult[h, act[t]]          # h * t(h') indexed by h'
            tt = Gamma.mult[t]              # t t' indexed by t'
            table[a] = (hh[:, None] * ng + tt[None, :]).reshape(-1)
    G = FiniteGroup(table, identity=H.identity * ng + Gamma.identity,
                    name=f"{H.name}:{Gamma.name}" if H.name else "")
    embed_H = GroupHom(H, G, np.arange(nh) * ng + Gamma.identity)
    embed_G = GroupHom(Gamma, G, H.identity * ng + np.arange(ng))
    proj = GroupHom(G, Gamma, np.tile(np.arange(ng), nh))
    return G, embed_H, embed_G, proj


def is_admissible(gg: GammaGroup) -> bool:
    """True iff the Gamma-closed subgroup generated by {g^-1 t(g)} is everything."""
    H, Gamma = gg.group, gg.gamma
    if gcd(H.order, Gamma.order) != 1:
        raise OrdersNotCoprimeError(
            f"gcd(|H|,|Gamma|) = {gcd(H.order, Gamma.order)} != 1")
    seed = {H.mul(H.inv_el(g), gg.act(t, g))
            for g in range(H.order) for t in range(Gamma.order)}
    members = set(subgroup_closure(H, seed))
    pending = list(members)
    while pending:
        s = pending.pop()
        fresh = [gg.act(t, s) for t in range(Gamma.order) if gg.act(t, s) not in members]
        if fresh:
            members = set(subgroup_closure_from(H, members, fresh))
            pending.extend(fresh)
    return len(members) == H.order


def fixed_subgroup(gg: GammaGroup) -> tuple[frozenset[int], int]:
    """(H^Gamma, [H : H^Gamma])."""
    H = gg.group
    fixed = frozenset(a for a in range(H.order)
                      if all(gg.act(t, a) == a for t in range(gg.gamma.order)))
    return fixed, H.order // len(fixed)


# ---------------------------------------------------------------------------
# surjection enumeration
# ---------------------------------------------------------------------------

def enumerate_surjections(G: FiniteGroup, H: FiniteGroup,
                          gamma: tuple[GammaGroup, GammaGroup] | None = None,
                          cap: int = ENUM_CAP) -> list[GroupHom]:
    """All surjective homomorphisms G -> H, by generator-image backtracking.

    With gamma = (action on G, action on H) only Gamma-equivariant surjections
    are returned; the two actions must share the same Gamma table.
    """
    if G.order > cap or H.order > cap:
        raise CapExceededError(f"surjection enumeration capped at order {cap}")
    if H.order > G.order or G.order % H.order:
        return []
    gens = G.generating_set()
    g_orders = [int(G.element_orders[g]) for g in gens]
    cands = [[h for h in range(H.order) if g_orders[i] % int(H.element_orders[h]) == 0]
             for i in range(len(gens))]
    out = []
    seen_tables = set()
    images = [0] * len(gens)

    def rec(i):
        if i == len(gens):
            table = hom_from_gen_images(G, H, gens, images)
            if table is None:
                return
            key = table.tobytes()
            if key in seen_tables:
                return
            seen_tables.add(key)
            if len(np.unique(table)) != H.order:
                return
            if gamma is not None:
                actG, actH = gamma
                for t in range(actG.gamma.order):
                    if not np.array_equal(table[actG.action[t]], actH.action[t][table]):
                        return
            out.append(GroupHom(G, H, table))
            return
        for h in cands[i]:
            images[i] = h
            rec(i + 1)

    rec(0)
    return out


def enumerate_automorphisms(G: FiniteGroup, cap: int = ENUM_CAP) -> list[np.ndarray]:
    """All automorphism tables of G (bijective self-surjections)."""
    return [h.map for h in enumerate_surjections(G, G, cap=cap)]
