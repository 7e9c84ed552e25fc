"""Second cohomology, Schur multipliers, coverings, lifts and coinflation.

Strategy: a normalized 2-cocycle is determined by its rows on a generating set
S via the cocycle recursion along a left-multiplication spanning tree, and the
cocycle identities with first slot in S imply all of them (induction on tree
depth).  That keeps the solve at |S|*(|G|-1) unknowns.  Homology enters
through evaluation: closed generator words with vanishing total exponent
pair with cohomology classes by evaluating the word in the extension the
cocycle defines, and this pairing is exactly the multiplier on its l-part.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from math import gcd

import numpy as np

from .errors import (
    CapExceededError,
    NoSuchLiftError,
    NotCentralError,
    NotCocycleError,
    NotGeneratingError,
    NotUniqueError,
    SearchExhaustedError,
)
from .groups import (
    FiniteGroup,
    GroupHom,
    abelian_invariants,
    commutator_subgroup,
    identity_hom,
    normal_closure,
    quotient,
    subgroup_closure,
)
from .linalg import ZnHowell, cokernel_structure, zn_kernel

H2_CAP = 128


# ---------------------------------------------------------------------------
# basic types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AbelianStructure:
    """Invariant factors in ascending divisibility order, with optional basis."""
    factors: tuple[int, ...]
    basis: tuple = ()

    @property
    def order(self) -> int:
        out = 1
        for f in self.factors:
            out *= f
        return out

    def __str__(self) -> str:
        if not self.factors:
            return "1"
        return " x ".join(f"Z/{f}" for f in self.factors)


@dataclass(frozen=True)
class Cocycle2:
    """Normalized 2-cocycle on G with values in Z/modulus (trivial action)."""
    group: FiniteGroup
    modulus: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.int64) % self.modulus
        object.__setattr__(self, "values", v)
        G = self.group
        n = G.order
        if v.shape != (n, n):
            raise NotCocycleError("cocycle table has wrong shape")
        e = G.identity
        if v[e].any() or v[:, e].any():
            raise NotCocycleError("cocycle is not normalized")
        # a(x,y) + a(xy,z) == a(y,z) + a(x,yz) for all triples, vectorized in x
        for x in range(n):
            lhs = (v[x][:, None] + v[G.mult[x]]) % self.modulus
            rhs = (v + v[x][G.mult]) % self.modulus
            if not np.array_equal(lhs, rhs):
                raise NotCocycleError(f"cocycle identity fails with first slot {x}")

    def tobytes(self) -> bytes:
        return self.values.tobytes()


class CentralExtension:
    """A surjection total -> base with identified central kernel."""

    def __init__(self, total: FiniteGroup, proj: GroupHom,
                 kernel_structure: AbelianStructure | None = None):
        self.total = total
        self.proj = proj
        self.base = proj.target
        self.kernel = tuple(sorted(proj.kernel))
        for k in self.kernel:
            if k not in total.center:
                raise NotCentralError(f"kernel element {k} is not central")
        self.central_verified = True
        comm = commutator_subgroup(total)
        self.stem_verified = all(k in comm for k in self.kernel)
        if kernel_structure is None:
            kernel_structure = abelian_subgroup_structure(total, self.kernel)
        self.kernel_structure = kernel_structure
        self._section = None
        self._coords = None

    def section(self) -> np.ndarray:
        """Canonical set-section: minimal preimage index per base element."""
        if self._section is None:
            sec = np.full(self.base.order, -1, dtype=np.int64)
            for e in range(self.total.order - 1, -1, -1):
                sec[self.proj(e)] = e
            self._section = sec
        return self._section

    def kernel_coords(self, e: int) -> tuple[int, ...]:
        """Coordinates of a kernel element in the kernel basis."""
        if self._coords is None:
            self._coords = _kernel_coordinate_map(self.total, self.kernel_structure)
        try:
            return self._coords[e]
        except KeyError:
            raise NoSuchLiftError(f"element {e} is not in the kernel") from None

    def kernel_element(self, coords) -> int:
        T = self.total
        out = T.identity
        for c, b in zip(coords, self.kernel_structure.basis):
            out = T.mul(out, T.power(b, int(c)))
        return out

    def __repr__(self):
        return (f"CentralExtension(|total|={self.total.order}, base={self.base.order}, "
                f"kernel={self.kernel_structure}, stem={self.stem_verified})")


def abelian_subgroup_structure(G: FiniteGroup, subset) -> AbelianStructure:
    """Invariant factors + basis of an abelian subgroup of G."""
    elems = sorted(subset)
    if elems == [G.identity]:
        return AbelianStructure(())
    for a in elems:
        for b in elems:
            if G.mul(a, b) != G.mul(b, a):
                raise NotCentralError("subset is not abelian")
    orders = {a: int(G.element_orders[a]) for a in elems}
    basis: list[int] = []
    span = {G.identity}
    factors: list[int] = []
    remaining = set(elems)
    while span != set(elems):
        best = max((a for a in remaining if a not in span),
                   key=lambda a: _order_in_quotient(G, a, span))
        d = _order_in_quotient(G, best, span)
        basis.append(best)
        factors.append(d)
        span = set(subgroup_closure(G, list(span) + [best]))
        remaining -= span
    # ascending divisibility: greedy picks the largest factor first
    factors.reverse()
    basis.reverse()
    return AbelianStructure(tuple(factors), tuple(basis))


def _order_in_quotient(G: FiniteGroup, a: int, span: set[int]) -> int:
    k, x = 1, a
    while x not in span:
        x = G.mul(x, a)
        k += 1
    return k


def _kernel_coordinate_map(G: FiniteGroup, st: AbelianStructure) -> dict:
    import itertools
    out = {G.identity: tuple(0 for _ in st.factors)}
    for coords in itertools.product(*(range(f) for f in st.factors)):
        e = G.identity
        for c, b in zip(coords, st.basis):
            e = G.mul(e, G.power(b, c))
        out.setdefault(e, coords)
    return out


# ---------------------------------------------------------------------------
# the generator-row cocycle solver
# ---------------------------------------------------------------------------

class _CocycleSolver:
    """Normalized 2-cocycles of G with Z/l^k coefficients, all moduli at once.

    Unknowns are the rows alpha(g, -) for g in the generating set; the tensor
    P expresses every full row as an integer combination of unknowns.
    """

    def __init__(self, G: FiniteGroup):
        if G.order > H2_CAP:
            raise CapExceededError(f"h2 capped at order {H2_CAP}")
        self.G = G
        n = G.order
        self.gens = G.generating_set() if n > 1 else []
        s = len(self.gens)
        self.nunk = s * (n - 1)
        # column index for unknown alpha(gens[i], y), y != identity
        self.colof = np.full((s, n), -1, dtype=np.int64)
        pos = np.array([y for y in range(n) if y != G.identity], dtype=np.int64)
        for i in range(s):
            self.colof[i, pos] = i * (n - 1) + np.arange(n - 1)
        # spanning tree by left multiplication, P[x] in build order
        self.parent_gen = np.full(n, -1, dtype=np.int64)
        self.parent = np.full(n, -1, dtype=np.int64)
        order = [G.identity]
        seen = {G.identity}
        P = np.zeros((n, n, self.nunk), dtype=np.int64)
        qi = 0
        while qi < len(order):
            x = order[qi]
            qi += 1
            for i, g in enumerate(self.gens):
                y = G.mul(g, x)
                if y in seen:
                    continue
                seen.add(y)
                self.parent_gen[y] = i
                self.parent[y] = x
                # row_y(z) = row_x(z) + E(g, x z) - E(g, x)
                P[y] = P[x]
                cols = self.colof[i, G.mult[x]]
                mask = cols >= 0
                P[y][np.arange(n)[mask], cols[mask]] += 1
                cx = self.colof[i, x]
                if cx >= 0:
                    P[y][:, cx] -= 1
                order.append(y)
        if len(seen) != n:
            raise NotGeneratingError("generating set failed to span the group")
        self.P = P
        self.constraints = self._build_constraints()

    def _build_constraints(self) -> np.ndarray:
        """Rows of the system: identity (g, y, z) for g in gens, y,z != e."""
        G, n = self.G, self.G.order
        e = G.identity
        ys = np.array([y for y in range(n) if y != e], dtype=np.int64)
        zs = ys
        rows = []
        for i, g in enumerate(self.gens):
            gy = G.mult[g]
            # C[(y,z)] = E(g,y) + P[gy][z] - P[y][z] - E(g, yz)
            block = self.P[gy[ys]][:, zs, :] - self.P[ys][:, zs, :]
            cg = self.colof[i]
            add1 = cg[ys]
            yz = G.mult[np.ix_(ys, zs)]
            sub2 = cg[yz]
            b = block.reshape(-1, self.nunk).copy()
            idx = np.arange(b.shape[0])
            a1 = np.repeat(add1, len(zs))
            m1 = a1 >= 0
            b[idx[m1], a1[m1]] += 1
            s2 = sub2.reshape(-1)
            m2 = s2 >= 0
            b[idx[m2], s2[m2]] -= 1
            rows.append(b)
        if not rows:
            return np.zeros((0, self.nunk), dtype=np.int64)
        return np.vstack(rows)

    def cocycle_table(self, beta, modulus: int) -> np.ndarray:
        beta = np.asarray(beta, dtype=np.int64)
        n = self.G.order
        tab = (self.P.reshape(n * n, self.nunk) @ beta).reshape(n, n) % modulus
        return tab

    def coboundary_rows(self) -> np.ndarray:
        """Generators of B^2 in unknown coordinates: d(e_w) for w != identity."""
        G, n = self.G, self.G.order
        e = G.identity
        ws = [w for w in range(n) if w != e]
        out = np.zeros((len(ws), self.nunk), dtype=np.int64)
        for r, w in enumerate(ws):
            for i, g in enumerate(self.gens):
                # d f (g, y) = f(g) + f(y) - f(gy)
                cols = self.colof[i]
                for y in range(n):
                    c = cols[y]
                    if c < 0:
                        continue
                    val = (1 if g == w else 0) + (1 if y == w else 0) \
                        - (1 if G.mul(g, y) == w else 0)
                    out[r, c] += val
        return out

    def h2_classes(self, l: int, k: int):
        """(AbelianStructure, list of unknown-vectors representing a basis)."""
        mod = l ** k
        if self.nunk == 0:
            return AbelianStructure(()), []
        Z = zn_kernel(self.constraints % mod, l, k)
        B = self.coboundary_rows() % mod
        HZ = ZnHowell(Z, l, k)
        rels = []
        for b in B:
            c = HZ.coords(b)
            if c is None:
                raise AssertionError("coboundary outside cocycle span")
            rels.append(c)
        rels = np.asarray(rels, dtype=np.int64).reshape(len(rels), len(HZ.pivots))
        orel = HZ.order_relations()
        stack = np.vstack([rels, orel]) if len(rels) else orel
        orders, gens = cokernel_structure(stack.tolist(), len(HZ.pivots))
        reps = []
        facs = []
        for o, gvec in zip(orders, gens):
            if o == 1:
                continue
            gvec = np.asarray([int(x) % mod for x in gvec], dtype=np.int64)
            beta = (gvec @ HZ.rows) % mod
            reps.append(beta)
            facs.append(int(o) if o != 0 else mod)
        pairs = sorted(zip(facs, reps), key=lambda t: t[0])
        facs = tuple(p[0] for p in pairs)
        reps = [p[1] for p in pairs]
        return AbelianStructure(facs), reps


_solver_cache: dict[str, _CocycleSolver] = {}
_cache_lock = threading.Lock()


def _solver(G: FiniteGroup) -> _CocycleSolver:
    key = G.canonical_hash
    sol = _solver_cache.get(key)
    if sol is None:
        sol = _CocycleSolver(G)
        with _cache_lock:
            _solver_cache[key] = sol
    return sol


def h2(G: FiniteGroup, l: int, k: int):
    """H^2(G, Z/l^k) as (AbelianStructure, [Cocycle2 basis representatives])."""
    sol = _solver(G)
    st, reps = sol.h2_classes(l, k)
    mod = l ** k
    cocycles = [Cocycle2(G, mod, sol.cocycle_table(b, mod)) for b in reps]
    return st, cocycles


# ---------------------------------------------------------------------------
# relator words, evaluation, multiplier data
# ---------------------------------------------------------------------------

def _tree_word(sol: _CocycleSolver, x: int) -> list[tuple[int, int]]:
    """Word w with x = prod of gens (left-mult chain), letters (gen_idx, +1)."""
    out = []
    while x != sol.G.identity:
        i = int(sol.parent_gen[x])
        out.append((i, 1))
        x = int(sol.parent[x])
    return out


def _schreier_relators(sol: _CocycleSolver) -> list[list[tuple[int, int]]]:
    """Closed words r = w_{g y}^-1 g w_y for the non-tree Cayley edges."""
    G = sol.G
    rels = []
    for y in range(G.order):
        for i, g in enumerate(sol.gens):
            z = G.mul(g, y)
            if sol.parent[z] == y and sol.parent_gen[z] == i:
                continue  # tree edge
            w_y = _tree_word(sol, y)
            w_z = _tree_word(sol, z)
            word = [(j, -s) for (j, s) in reversed(w_z)] + [(i, 1)] + w_y
            rels.append(word)
    return rels


def _word_ab_vector(word, ngens: int) -> np.ndarray:
    v = np.zeros(ngens, dtype=np.int64)
    for i, s in word:
        v[i] += s
    return v


def _eval_word_in_cocycle(sol: _CocycleSolver, word, table: np.ndarray,
                          modulus: int) -> int:
    """Evaluate a closed generator word in the pair-extension of the cocycle."""
    G = sol.G
    a, g = 0, G.identity
    for i, s in word:
        x = sol.gens[i]
        if s == 1:
            b, h = 0, x
        else:
            xi = G.inv_el(x)
            b, h = (-int(table[x, xi])) % modulus, xi
        a = (a + b + int(table[g, h])) % modulus
        g = G.mul(g, h)
    if g != G.identity:
        raise AssertionError("word is not closed")
    return a


def evaluate_closed_word(ext: CentralExtension, letters) -> int:
    """Product of canonical-section lifts of (element, sign) letters; must land
    in the kernel."""
    T, sec = ext.total, ext.section()
    out = T.identity
    for g, s in letters:
        lift = int(sec[g])
        if s < 0:
            lift = T.inv_el(lift)
        out = T.mul(out, lift)
    if ext.proj(out) != ext.base.identity:
        raise AssertionError("word is not closed in the base group")
    return out


class MultiplierData:
    """H_2(G)(l) with explicit homology generator words and a pairing."""

    def __init__(self, G: FiniteGroup, l: int):
        self.G = G
        self.l = l
        self.sol = _solver(G)
        exp = G.exponent
        k = 1
        while l ** k < exp * G.order:
            k += 1
        self.k = k
        self.mod = l ** k
        self.relators = _schreier_relators(self.sol)
        ab = [_word_ab_vector(w, len(self.sol.gens)) for w in self.relators]
        ab = np.asarray(ab, dtype=np.int64).reshape(len(self.relators),
                                                    len(self.sol.gens))
        self.combos = _integer_row_nullspace(ab)
        self.cls_structure, self.cls_reps = self.sol.h2_classes(l, k)
        ev = self._pairing_matrix(self.cls_reps, self.mod)
        facs, wcombos = _pairing_invariants(ev, self.combos, l, k)
        self.factors = facs                     # ascending divisibility
        self.word_combos = wcombos              # integer combos of relators

    def _pairing_matrix(self, reps, modulus) -> np.ndarray:
        tables = [self.sol.cocycle_table(b, modulus) if b.ndim == 1 else b
                  for b in reps]
        out = np.zeros((len(self.combos), len(tables)), dtype=np.int64)
        for j, tab in enumerate(tables):
            base = [_eval_word_in_cocycle(self.sol, w, tab, modulus)
                    for w in self.relators]
            base = np.asarray(base, dtype=np.int64)
            for i, c in enumerate(self.combos):
                out[i, j] = int(np.dot(c, base)) % modulus
        return out

    def structure(self) -> AbelianStructure:
        return AbelianStructure(tuple(self.factors))

    def word_for_basis(self, i: int):
        """Integer relator-combination whose class is the i-th basis element."""
        return self.word_combos[i]

    def evaluate_combo_in_extension(self, combo, ext: CentralExtension) -> int:
        """Pair a homology combo with an extension: value in ext.kernel."""
        T = ext.total
        vals = [evaluate_closed_word(ext, [(self.sol.gens[i], s) for i, s in w])
                for w in self.relators]
        out = T.identity
        for c, v in zip(combo, vals):
            out = T.mul(out, T.power(v, int(c)))
        if ext.proj(out) != ext.base.identity:
            raise AssertionError("pairing value escaped the kernel")
        return out

    def differential_map(self, ext: CentralExtension) -> list[int]:
        """Images in ext.kernel of the multiplier basis elements."""
        return [self.evaluate_combo_in_extension(w, ext) for w in self.word_combos]


def _integer_row_nullspace(A: np.ndarray) -> list[np.ndarray]:
    """Basis of {c : c A = 0} over Z, via row HNF with transform tracking."""
    A = [list(map(int, r)) for r in A]
    n = len(A)
    m = len(A[0]) if n else 0
    U = [[1 if i == j else 0 for j in range(n)] for i in range(n)]
    r = 0
    for c in range(m):
        # find pivot row with minimal nonzero |entry|
        while True:
            cand = [i for i in range(r, n) if A[i][c] != 0]
            if not cand:
                break
            i0 = min(cand, key=lambda i: abs(A[i][c]))
            if i0 != r:
                A[r], A[i0] = A[i0], A[r]
                U[r], U[i0] = U[i0], U[r]
            if A[r][c] < 0:
                A[r] = [-x for x in A[r]]
                U[r] = [-x for x in U[r]]
            done = True
            for i in range(r + 1, n):
                q = A[i][c] // A[r][c]
                if q:
                    A[i] = [a - q * b for a, b in zip(A[i], A[r])]
                    U[i] = [a - q * b for a, b in zip(U[i], U[r])]
                if A[i][c]:
                    done = False
            if done:
                r += 1
                break
    return [np.asarray(U[i], dtype=np.int64) for i in range(r, n)]


def _pairing_invariants(ev: np.ndarray, combos, l: int, k: int):
    """Invariant factors of the subgroup generated by rows of ev in (Z/l^k)^s,
    with matched integer combos of the original rows."""
    mod = l ** k
    vals, U = _zn_smith_rows(ev % mod, l, k)
    facs = []
    wcombos = []
    for i, v in enumerate(vals):
        if v >= k:
            continue
        facs.append(l ** (k - v))
        c = np.zeros(len(combos[0]) if combos else 0, dtype=np.int64)
        for j, u in enumerate(U[i]):
            if u and j < len(combos):
                c = c + int(u) * combos[j]
        wcombos.append(c)
    pairs = sorted(zip(facs, wcombos), key=lambda t: t[0])
    return [p[0] for p in pairs], [p[1] for p in pairs]


def _zn_smith(A, l: int, k: int):
    """Smith form over Z/l^k: returns (vals, U, V) with U A V = diag(l^vals).

    U and V are invertible mod l^k; entries are canonical representatives.
    """
    mod = l ** k
    A = [[int(x) % mod for x in row] for row in np.atleast_2d(np.asarray(A))]
    n = len(A)
    m = len(A[0]) if n else 0
    U = [[1 if i == j else 0 for j in range(n)] for i in range(n)]
    V = [[1 if i == j else 0 for j in range(m)] for i in range(m)]

    def val(x):
        if x % mod == 0:
            return k
        v = 0
        while x % l == 0:
            x //= l
            v += 1
        return v

    t = 0
    vals = []
    while t < min(n, m):
        best = None
        bv = k
        for i in range(t, n):
            for j in range(t, m):
                v = val(A[i][j])
                if v < bv:
                    best, bv = (i, j), v
        if best is None:
            break
        i0, j0 = best
        A[t], A[i0] = A[i0], A[t]
        U[t], U[i0] = U[i0], U[t]
        if j0 != t:
            for row in A:
                row[t], row[j0] = row[j0], row[t]
            for row in V:
                row[t], row[j0] = row[j0], row[t]
        unit = A[t][t] // (l ** bv)
        inv = pow(unit, -1, mod)
        if inv != 1:
            A[t] = [(x * inv) % mod for x in A[t]]
            U[t] = [(x * inv) % mod for x in U[t]]
        for i in range(n):
            if i == t:
                continue
            q = A[i][t] // (l ** bv)
            if q:
                A[i] = [(a - q * b) % mod for a, b in zip(A[i], A[t])]
                U[i] = [(a - q * b) % mod for a, b in zip(U[i], U[t])]
        for j in range(t + 1, m):
            q = A[t][j] // (l ** bv)
            if q:
                for i in range(n):
                    A[i][j] = (A[i][j] - q * A[i][t]) % mod
                for i in range(m):
                    V[i][j] = (V[i][j] - q * V[i][t]) % mod
        vals.append(bv)
        t += 1
    return vals, U, V


def _zn_smith_rows(A: np.ndarray, l: int, k: int):
    """Diagonal valuations + integer row transform with U A V = diag."""
    vals, U, _ = _zn_smith(A, l, k)
    return vals, [np.asarray(u, dtype=np.int64) for u in U]


_multiplier_cache: dict[tuple[str, int], MultiplierData] = {}


def multiplier_data(G: FiniteGroup, l: int) -> MultiplierData:
    key = (G.canonical_hash, l)
    md = _multiplier_cache.get(key)
    if md is None:
        md = MultiplierData(G, l)
        with _cache_lock:
            _multiplier_cache[key] = md
    return md


def schur_multiplier_l(G: FiniteGroup, l: int) -> AbelianStructure:
    """Invariant factors of H_2(G, Z)(l)."""
    return multiplier_data(G, l).structure()


# ---------------------------------------------------------------------------
# building extensions
# ---------------------------------------------------------------------------

def extension_from_cocycle(G: FiniteGroup, factors, cocycles) -> CentralExtension:
    """Total group on A x G for A = prod Z/factors[i], cocycle per component."""
    if isinstance(cocycles, Cocycle2):
        cocycles = [cocycles]
    factors = [int(f) for f in factors]
    if len(factors) != len(cocycles):
        raise NotCocycleError("one cocycle component per kernel factor required")
    for f, c in zip(factors, cocycles):
        if c.modulus % f:
            raise NotCocycleError("cocycle modulus incompatible with factor")
    n = G.order
    asize = 1
    for f in factors:
        asize *= f
    total_order = asize * n
    if total_order > 2048:
        raise CapExceededError(f"extension of order {total_order} exceeds table cap")
    strides = []
    s = 1
    for f in factors:
        strides.append(s)
        s *= f
    # element index = a_lin * n + g
    avals = np.stack([c.values % f for f, c in zip(factors, cocycles)], axis=0) \
        if factors else np.zeros((0, n, n), dtype=np.int64)
    digits = []
    for i, f in enumerate(factors):
        digits.append((np.arange(asize) // strides[i]) % f)
    digits = np.asarray(digits, dtype=np.int64).reshape(len(factors), asize)
    table = np.zeros((total_order, total_order), dtype=np.int64)
    gh = G.mult
    for a in range(asize):
        for b in range(asize):
            csum = [(digits[i, a] + digits[i, b]) % factors[i] for i in range(len(factors))]
            # entry per (g,h): a+b+alpha(g,h)
            alin = np.zeros((n, n), dtype=np.int64)
            for i, f in enumerate(factors):
                comp = (csum[i] + avals[i]) % f
                alin += comp * strides[i]
            table[a * n:(a + 1) * n, b * n:(b + 1) * n] = alin * n + gh
    # reorder rows/cols to (a,g) index = a*n+g : already in that layout
    idx = np.arange(total_order)
    T = FiniteGroup(table[np.ix_(idx, idx)], identity=G.identity,
                    name=f"ext({G.name})" if G.name else "")
    proj = GroupHom(T, G, np.tile(np.arange(n), asize))
    basis = [int(strides[i] * n + G.identity) for i in range(len(factors))]
    st = AbelianStructure(tuple(factors), tuple(basis))
    # basis order: ensure ascending divisibility holds for the declared factors
    return CentralExtension(T, proj, kernel_structure=st)


def identity_extension(G: FiniteGroup) -> CentralExtension:
    return CentralExtension(G, identity_hom(G), AbelianStructure(()))


_cover_cache: dict[tuple[str, int], CentralExtension] = {}


def l_schur_cover(G: FiniteGroup, l: int) -> CentralExtension:
    """A stem extension with kernel H_2(G)(l); cached per (G, l) per session."""
    key = (G.canonical_hash, l)
    ext = _cover_cache.get(key)
    if ext is not None:
        return ext
    ext = _build_stem_cover(G, [l])
    with _cache_lock:
        _cover_cache[key] = ext
    return ext


_full_cover_cache: dict[str, CentralExtension] = {}


def schur_cover(G: FiniteGroup) -> CentralExtension:
    """A full Schur covering: kernel = H_2(G, Z), all primes dividing |G|."""
    key = G.canonical_hash
    ext = _full_cover_cache.get(key)
    if ext is not None:
        return ext
    primes = []
    m = G.order
    p = 2
    while p * p <= m:
        if m % p == 0:
            primes.append(p)
            while m % p == 0:
                m //= p
        p += 1
    if m > 1:
        primes.append(m)
    ext = _build_stem_cover(G, primes)
    with _cache_lock:
        _full_cover_cache[key] = ext
    return ext


def _build_stem_cover(G: FiniteGroup, primes) -> CentralExtension:
    factors: list[int] = []
    cocycles: list[Cocycle2] = []
    for l in primes:
        md = multiplier_data(G, l)
        for j, f in enumerate(md.factors):
            e = 0
            ff = f
            while ff > 1:
                ff //= l
                e += 1
            coc = _component_cocycle(md, j, e)
            factors.append(f)
            cocycles.append(coc)
    if not factors:
        ext = identity_extension(G)
        return ext
    ext = extension_from_cocycle(G, factors, cocycles)
    if not ext.stem_verified:
        raise SearchExhaustedError("constructed cover is not stem; bug")
    # verify the differential map hits the kernel basis on the nose
    pos = 0
    for l in primes:
        md = multiplier_data(G, l)
        for j in range(len(md.factors)):
            v = md.evaluate_combo_in_extension(md.word_combos[j], ext)
            want = ext.kernel_structure.basis[pos]
            if v != want:
                raise SearchExhaustedError("differential map misaligned; bug")
            pos += 1
    return ext


def _component_cocycle(md: MultiplierData, j: int, e: int) -> Cocycle2:
    """A Z/l^e cocycle pairing to delta_ij with the multiplier basis words."""
    l = md.l
    mod = l ** e
    st, reps = md.sol.h2_classes(l, e)
    tables = [md.sol.cocycle_table(b, mod) for b in reps]
    ev = np.zeros((len(md.word_combos), len(tables)), dtype=np.int64)
    for s, tab in enumerate(tables):
        base = np.asarray([_eval_word_in_cocycle(md.sol, w, tab, mod)
                           for w in md.relators], dtype=np.int64)
        for i, c in enumerate(md.word_combos):
            ev[i, s] = int(np.dot(c, base)) % mod
    b = np.zeros(len(md.word_combos), dtype=np.int64)
    b[j] = 1
    x = _zn_solve(ev, b, l, e)
    if x is None:
        raise SearchExhaustedError("no class with the required differential; bug")
    tab = np.zeros((md.G.order, md.G.order), dtype=np.int64)
    for coef, t in zip(x, tables):
        tab = (tab + int(coef) * t) % mod
    return Cocycle2(md.G, mod, tab)


def _zn_solve(A: np.ndarray, b: np.ndarray, l: int, k: int):
    """One solution of A x = b over Z/l^k, or None."""
    mod = l ** k
    A = np.atleast_2d(np.asarray(A, dtype=np.int64)) % mod
    n, m = A.shape
    vals, U, V = _zn_smith(A, l, k)
    ub = [sum(U[i][j] * int(b[j]) for j in range(n)) % mod for i in range(n)]
    y = [0] * m
    for i in range(n):
        if i < len(vals):
            d = l ** vals[i]
            if ub[i] % d:
                return None
            y[i] = (ub[i] // d) % mod
        elif ub[i] % mod:
            return None
    x = np.asarray([sum(V[i][j] * y[j] for j in range(m)) % mod for i in range(m)],
                   dtype=np.int64)
    return x


# ---------------------------------------------------------------------------
# reduced coverings, lifts, lifting invariants, coinflation
# ---------------------------------------------------------------------------

def reduced_schur_cover(G: FiniteGroup, cset) -> CentralExtension:
    """Quotient of a Schur covering by commutators of lifts of commuting pairs
    with first entry over the conjugation-closed set cset."""
    S = schur_cover(G)
    T, proj = S.total, S.proj
    cset = frozenset(cset)
    kill = set()
    for x in range(T.order):
        px = proj(x)
        if px not in cset:
            continue
        for y in range(T.order):
            if G.comm(px, proj(y)) == G.identity:
                kill.add(T.comm(x, y))
    N = normal_closure(T, kill)
    Q, qproj = quotient(T, N)
    # induced projection Q -> G
    table = np.full(Q.order, -1, dtype=np.int64)
    for e in range(T.order):
        table[qproj(e)] = proj(e)
    red = GroupHom(Q, G, table)
    return CentralExtension(Q, red)


def unique_same_order_lift(ext: CentralExtension, g: int) -> int:
    """The unique preimage of g with the same order; kernel order must be
    coprime to ord(g)."""
    base, T = ext.base, ext.total
    og = int(base.element_orders[g])
    ksize = len(ext.kernel)
    if gcd(og, ksize) != 1:
        raise NoSuchLiftError(
            f"ord(g)={og} shares a factor with the kernel order {ksize}")
    found = [e for e in range(T.order)
             if ext.proj(e) == g and int(T.element_orders[e]) == og]
    if not found:
        raise NoSuchLiftError(f"no same-order lift of element {g}")
    if len(found) > 1:
        raise NotUniqueError(f"multiple same-order lifts of element {g}")
    return found[0]


def lifting_invariant(ext: CentralExtension, elements) -> int:
    """Product of the unique same-order lifts of a product-one generating
    tuple; lands in ext.kernel."""
    base, T = ext.base, ext.total
    prod = base.identity
    for g in elements:
        prod = base.mul(prod, g)
    if prod != base.identity:
        raise NotGeneratingError("tuple does not have product one")
    if subgroup_closure(base, elements) != frozenset(range(base.order)):
        raise NotGeneratingError("tuple does not generate the group")
    out = T.identity
    for g in elements:
        out = T.mul(out, unique_same_order_lift(ext, g))
    if ext.proj(out) != base.identity:
        raise AssertionError("lift product escaped the kernel")
    return out


@dataclass(frozen=True)
class CoinflationMap:
    """H_2(source)(l) -> H_2(target)(l) on the session multiplier bases."""
    source: FiniteGroup
    target: FiniteGroup
    l: int
    source_structure: AbelianStructure
    target_structure: AbelianStructure
    matrix: np.ndarray  # shape (len(target factors), len(source factors))

    def apply(self, coords) -> np.ndarray:
        coords = np.asarray(coords, dtype=np.int64)
        out = self.matrix @ coords
        return np.asarray([int(o) % f for o, f in
                           zip(out, self.target_structure.factors)], dtype=np.int64)

    def compose(self, other: "CoinflationMap") -> "CoinflationMap":
        """self o other (other first)."""
        mat = self.matrix @ other.matrix
        mat = np.stack([row % f for row, f in
                        zip(mat, self.target_structure.factors)]) \
            if len(self.target_structure.factors) else mat
        return CoinflationMap(other.source, self.target, self.l,
                              other.source_structure, self.target_structure, mat)


def coinflation(alpha: GroupHom, l: int) -> CoinflationMap:
    """The map induced on l-multipliers by a surjection, computed by pushing
    homology generator words into the session cover of the target."""
    if not alpha.is_surjective():
        raise NotGeneratingError("coinflation needs a surjection")
    G, Q = alpha.source, alpha.target
    mdG = multiplier_data(G, l)
    mdQ = multiplier_data(Q, l)
    covQ = l_schur_cover(Q, l)
    rows = len(mdQ.factors)
    cols = len(mdG.factors)
    mat = np.zeros((rows, cols), dtype=np.int64)
    for j in range(cols):
        combo = mdG.word_combos[j]
        val = covQ.total.identity
        for c, word in zip(combo, mdG.relators):
            letters = [(alpha(mdG.sol.gens[i]), s) for i, s in word]
            v = evaluate_closed_word(covQ, letters)
            val = covQ.total.mul(val, covQ.total.power(v, int(c)))
        coords = covQ.kernel_coords(val)
        for i in range(rows):
            mat[i, j] = coords[i]
    return CoinflationMap(G, Q, l, mdG.structure(), mdQ.structure(), mat)


def identity_coinflation(G: FiniteGroup, l: int) -> CoinflationMap:
    return coinflation(identity_hom(G), l)
