"""Random group models and seeded Monte Carlo moment estimators.

Both models sample a verified constrained automorphism phi of the truncated
one-relator group, form the phi-fixed (or handle-killing) quotient as a Lie
ideal (class < l, so Lazard applies and normal subgroups are ideals), and
count surjections onto the target by enumerating Lie maps on the quotient's
free degree-1 coordinates.  Everything downstream of the master seed is
deterministic: sample blocks draw from counter-based Philox streams indexed
by block number, and aggregation is exact integer sums.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from math import gcd

import numpy as np

from .catalog import cyclic, gamma_group_from_spec
from .cohomology import CentralExtension, l_schur_cover
from .errors import (
    CapExceededError,
    DeltaOrderViolation,
    RelatorNotKilledError,
    UsageError,
)
from .groups import FiniteGroup, GammaGroup, semidirect_product
from .linalg import fp_echelon
from .nilpotent import (
    ConstrainedAut,
    DemushkinTrunc,
    sample_constrained_aut,
    sample_trivial_action_aut,
)

BLOCK_SIZE = 1024
ENUM_COORDS_CAP = 24        # largest k * dim enumerated (l^24 in chunks)


# ---------------------------------------------------------------------------
# targets
# ---------------------------------------------------------------------------

class LieTarget:
    """A finite l-group target of class <= 2 in Lie coordinates.

    Provides the bracket, the involution eigen-data, the encoding of Lie
    coordinates as element indices of the group table, and the semidirect
    product with Gamma = Z/2 together with its session l-cover.
    """

    def __init__(self, spec: str, l: int):
        self.spec = spec
        self.l = l
        gg = gamma_group_from_spec(spec)
        self.gamma_group = gg
        self.H = gg.group
        kind = spec.split(":", 1)[0]
        if kind in ("cyclic", "elem_abelian"):
            r = 0
            m = self.H.order
            while m > 1:
                if m % l:
                    raise UsageError(f"target {spec} is not an l-group for l={l}")
                m //= l
                r += 1
            if any(int(o) > l for o in self.H.element_orders):
                raise UsageError(f"target {spec} is not exponent {l}")
            self.dim = r
            self.abelian = True
        elif kind == "heisenberg":
            if self.H.order != l ** 3:
                raise UsageError(f"target {spec} does not match l={l}")
            self.dim = 3
            self.abelian = False
        else:
            raise UsageError(f"unsupported moment target {spec!r}")
        self.rank = self.dim if self.abelian else 2  # minimal generator count
        self.inv2 = pow(2, -1, l)
        prod = semidirect_product(self.H, gg.gamma, gg.action)
        self.HG, self.embed_H, self.embed_G, self.proj_G = prod
        self._cover = None
        self._H_cover = None

    @property
    def cover(self) -> CentralExtension:
        """Session cover of H x| Gamma (built on first use)."""
        if self._cover is None:
            self._cover = l_schur_cover(self.HG, self.l)
        return self._cover

    @property
    def cover_section(self):
        return self.cover.section()

    @property
    def H_cover(self) -> CentralExtension:
        if self._H_cover is None:
            self._H_cover = l_schur_cover(self.H, self.l)
        return self._H_cover

    def encode(self, coords) -> int:
        """Element index of exp(coords) in the group table."""
        l = self.l
        c = [int(x) % l for x in coords]
        if self.abelian:
            return sum(c[k] * l ** k for k in range(self.dim))
        a, b, z = c
        return (a * l + b) * l + ((z + a * b * self.inv2) % l)

    def log(self, h: int) -> np.ndarray:
        l = self.l
        if self.abelian:
            out = []
            for _ in range(self.dim):
                out.append(h % l)
                h //= l
            return np.asarray(out, dtype=np.int64)
        a, b = h // (l * l), (h // l) % l
        c = h % l
        return np.asarray([a, b, (c - a * b * self.inv2) % l], dtype=np.int64)


_target_cache: dict[tuple[str, int], LieTarget] = {}


def lie_target(spec: str, l: int) -> LieTarget:
    key = (spec, l)
    t = _target_cache.get(key)
    if t is None:
        t = LieTarget(spec, l)
        _target_cache[key] = t
    return t


@dataclass
class DeltaTarget:
    """A prescribed value in the kernel of the session cover of H x| Gamma."""
    target: LieTarget
    coords: tuple[int, ...]
    value: int = field(init=False)
    order: int = field(init=False)

    def __post_init__(self):
        cov = self.target.cover
        facs = cov.kernel_structure.factors
        if len(self.coords) != len(facs):
            raise UsageError(
                f"delta needs {len(facs)} coordinates for kernel {cov.kernel_structure}")
        self.value = cov.kernel_element(self.coords)
        self.order = int(cov.total.element_orders[self.value])


# ---------------------------------------------------------------------------
# ideal closure and quotients
# ---------------------------------------------------------------------------

class _Echelon:
    """Incremental RREF over F_l."""

    def __init__(self, dim: int, l: int):
        self.dim = dim
        self.l = l
        self.rows = np.zeros((0, dim), dtype=np.int64)
        self.piv: list[int] = []

    def reduce(self, v: np.ndarray) -> np.ndarray:
        v = v % self.l
        if self.piv:
            v = (v - v[self.piv] @ self.rows) % self.l
        return v

    def reduce_block(self, M: np.ndarray) -> np.ndarray:
        M = M % self.l
        if self.piv:
            M = (M - M[:, self.piv] @ self.rows) % self.l
        return M

    def insert_reduced(self, v: np.ndarray) -> bool:
        nz = np.flatnonzero(v)
        if nz.size == 0:
            return False
        c = int(nz[0])
        v = (v * pow(int(v[c]), self.l - 2, self.l)) % self.l
        if self.piv:
            col = self.rows[:, c].copy()
            if col.any():
                self.rows = (self.rows - np.outer(col, v)) % self.l
        pos = int(np.searchsorted(np.asarray(self.piv), c))
        self.rows = np.insert(self.rows, pos, v, axis=0)
        self.piv.insert(pos, c)
        return True


def _candidate_block(D: DemushkinTrunc, v: np.ndarray, aut: ConstrainedAut | None,
                     use_sigma: bool) -> np.ndarray:
    """Brackets with every degree-1 generator, plus map images, reduced later."""
    F, l = D.F, D.l
    n2 = F.dim1
    rows = np.zeros((n2 + (1 if aut is not None else 0) + (1 if use_sigma else 0),
                     F.dim), dtype=np.int64)
    v1 = v[:n2]
    # [e_i, v] degree-2 parts, all generators at once
    block2 = np.zeros((n2, F.dim2), dtype=np.int64)
    ar = np.arange(F.dim2)
    block2[F.iu, ar] = v1[F.ju]
    block2[F.ju, ar] = (block2[F.ju, ar] - v1[F.iu]) % l
    rows[:n2, n2:n2 + F.dim2] = block2 % l
    if F.cls == 3:
        v2 = v[n2:n2 + F.dim2]
        if v2.any():
            # [e_c, v2-part] = -[v2, e_c]
            block3 = -np.einsum("p,pcd->cd", v2 % l, F._bracket21)
            rows[:n2, n2 + F.dim2:] = block3 % l
    j = n2
    if aut is not None:
        rows[j] = aut.apply(v)
        j += 1
    if use_sigma:
        rows[j] = D.sigma(v)
    return rows


def ideal_closure(D: DemushkinTrunc, gens, aut: ConstrainedAut | None = None,
                  use_sigma: bool = False) -> _Echelon:
    """Smallest ideal containing gens (and the ambient relator ideal), closed
    under the automorphism and the involution when given."""
    F, l = D.F, D.l
    E = _Echelon(F.dim, l)
    stack = [D.reduce(np.asarray(g, dtype=np.int64) % l) for g in gens]
    stack.extend(D.ideal_rows)
    while stack:
        v = E.reduce(stack.pop())
        if not E.insert_reduced(v):
            continue
        cand = E.reduce_block(D.reduce_block(_candidate_block(D, v, aut, use_sigma)))
        for r in cand:
            if r.any():
                stack.append(r)
    return E


@dataclass
class NilQuotient:
    """Quotient of the truncation by an ideal, with its free coordinates."""
    D: DemushkinTrunc
    E: _Echelon
    free_deg1: list[int]
    k: int

    @classmethod
    def from_ideal(cls, D: DemushkinTrunc, E: _Echelon) -> "NilQuotient":
        free1 = [c for c in range(D.F.dim1) if c not in E.piv]
        return cls(D, E, free1, len(free1))

    def order(self) -> int:
        return self.D.l ** (self.D.F.dim - len(self.E.piv))

    def gamma_group(self, cap: int = 2048) -> GammaGroup:
        """Materialize with the involution action (small instances only)."""
        l = self.D.l
        free_cols = [c for c in range(self.D.F.dim) if c not in self.E.piv]
        order = l ** len(free_cols)
        if order > cap:
            raise CapExceededError(f"quotient order {order} exceeds cap {cap}")

        def decode(idx):
            v = np.zeros(self.D.F.dim, dtype=np.int64)
            for c in free_cols:
                v[c] = idx % l
                idx //= l
            return v

        def encode(v):
            v = self.E.reduce(self.D.reduce(v))
            out = 0
            for c in reversed(free_cols):
                out = out * l + int(v[c])
            return out

        elems = [decode(i) for i in range(order)]
        table = np.zeros((order, order), dtype=np.int64)
        for i, x in enumerate(elems):
            for j, y in enumerate(elems):
                table[i, j] = encode(self.D.F.mult(x, y))
        G = FiniteGroup(table, identity=0)
        sig = np.asarray([encode(self.D.F.sigma(x)) for x in elems], dtype=np.int64)
        act = np.stack([np.arange(order), sig])
        return GammaGroup(G, cyclic(2), act)


def build_fixed_quotient(D: DemushkinTrunc, aut: ConstrainedAut) -> NilQuotient:
    """The maximal quotient on which the sampled automorphism acts trivially,
    modulo the image of the relator line: the degree-wise data of Y.

    The ideal is the saturation (normal closure alternating with phi- and
    sigma-images) of the generator differences and the twist difference, plus
    the relator line.
    """
    F = D.F
    gens = []
    for i in range(F.dim1):
        x = F.generator(i)
        gens.append(D.mult(D.inv(x), aut.gen_images[i]))
    gens.append(D.sigma(aut.twist))
    gens.append(D.xi)
    E = ideal_closure(D, gens, aut=aut, use_sigma=True)
    return NilQuotient.from_ideal(D, E)


_lagrangian_cache: dict[tuple[int, int, int], list[np.ndarray]] = {}


def lagrangian_generators(D: DemushkinTrunc) -> list[np.ndarray]:
    """Generator tuple (g_1..g_{2n}) adapted to the relator: the product
    [g_1,g_2][g_3,g_4]... equals the relator element exactly, so the odd slots
    play the role of the handle generators that the 3-manifold model kills."""
    key = (D.n, D.l, D.cls)
    out = _lagrangian_cache.get(key)
    if out is not None:
        return out
    F, l = D.F, D.l
    S = D.basis_change

    def product(gens):
        acc = F.identity
        for i in range(0, F.dim1 - 1, 2):
            acc = D.mult(acc, D.comm(gens[i], gens[i + 1]))
        return acc

    base = []
    for i in range(F.dim1):
        v = F.identity
        v[: F.dim1] = S[:, i] % l
        base.append(v)
    if F.cls == 2:
        gens = base
    else:
        # solve degree-2 corrections c_i so the product hits xi exactly
        r0 = (product(base) - D.xi) % l
        unknowns = []
        cols = []
        for i in range(F.dim1):
            for p in range(F.dim2):
                pert = [b.copy() for b in base]
                pert[i][F.dim1 + p] = (pert[i][F.dim1 + p] + 1) % l
                delta = (product(pert) - product(base)) % l
                unknowns.append((i, p))
                cols.append(delta)
        A = np.asarray(cols, dtype=np.int64).T
        from .linalg import fp_solve
        x = fp_solve(A, (-r0) % l, l)
        if x is None:
            raise CapExceededError("no handle-generator correction; bug")
        gens = [b.copy() for b in base]
        for (i, p), v in zip(unknowns, x):
            gens[i][F.dim1 + p] = (gens[i][F.dim1 + p] + int(v)) % l
        check = (product(gens) - D.xi) % l
        if check.any():
            raise CapExceededError("handle-generator correction failed; bug")
    _lagrangian_cache[key] = gens
    return gens


def build_handle_quotient(D: DemushkinTrunc, aut: ConstrainedAut) -> NilQuotient:
    """The 3-manifold-style quotient: kill the odd handle generators and their
    images under the sampled relator-fixing automorphism."""
    gens = lagrangian_generators(D)
    seed = []
    for i in range(0, D.F.dim1 - 1, 2):
        seed.append(gens[i])
        seed.append(aut.apply(gens[i]))
    E = ideal_closure(D, seed, aut=None, use_sigma=False)
    return NilQuotient.from_ideal(D, E)


# ---------------------------------------------------------------------------
# surjection counting
# ---------------------------------------------------------------------------

def _linear_sur_count(k: int, r: int, l: int) -> int:
    out = 1
    for i in range(r):
        out *= l ** k - l ** i
        if out <= 0:
            return 0
    return out


def _assign_chunks(total_coords: int, l: int, chunk_bits: int = 12):
    """Yield (batch, total_coords) digit arrays covering l^total_coords."""
    total = l ** total_coords
    step = min(total, l ** min(total_coords, chunk_bits))
    powers = l ** np.arange(total_coords, dtype=np.int64)
    start = 0
    while start < total:
        idx = np.arange(start, min(start + step, total), dtype=np.int64)
        yield (idx[:, None] // powers[None, :]) % l
        start += step


def _generator_images(Q: NilQuotient, assign: np.ndarray, tgt: LieTarget) -> np.ndarray:
    """Images of all ambient generators from free-coordinate images.

    assign: (batch, k, dim) -> (batch, 2n, dim); degree-1 pivot rows determine
    the rest (two passes: linear, then bracket corrections on the center)."""
    D, l = Q.D, Q.D.l
    n2 = D.F.dim1
    batch = assign.shape[0]
    H1 = np.zeros((batch, n2, tgt.dim), dtype=np.int64)
    for j, c in enumerate(Q.free_deg1):
        H1[:, c, :] = assign[:, j, :]
    deg1_rows = [(p, Q.E.rows[i]) for i, p in enumerate(Q.E.piv) if p < n2]
    for p, row in deg1_rows:
        lin = row[:n2].copy()
        lin[p] = 0
        if lin.any():
            H1[:, p, :] = (-np.einsum("c,bcd->bd", lin, H1)) % l
    if not tgt.abelian:
        iu, ju = D.F.iu, D.F.ju
        zpair = (H1[:, iu, 0] * H1[:, ju, 1] - H1[:, ju, 0] * H1[:, iu, 1]) % l
        for p, row in deg1_rows:
            tail2 = row[n2: n2 + D.F.dim2]
            if tail2.any():
                H1[:, p, 2] = (H1[:, p, 2] - zpair @ tail2) % l
    return H1


def _relation_mask(Q: NilQuotient, H1: np.ndarray, tgt: LieTarget) -> np.ndarray:
    """Assignments killing the rows whose pivot is in degree >= 2."""
    D = Q.D
    l, n2 = D.l, D.F.dim1
    batch = H1.shape[0]
    mask = np.ones(batch, dtype=bool)
    if tgt.abelian:
        return mask
    rel = [Q.E.rows[i] for i, p in enumerate(Q.E.piv) if p >= n2]
    if not rel:
        return mask
    iu, ju = D.F.iu, D.F.ju
    zpair = (H1[:, iu, 0] * H1[:, ju, 1] - H1[:, ju, 0] * H1[:, iu, 1]) % l
    for row in rel:
        tail2 = row[n2: n2 + D.F.dim2]
        if tail2.any():
            mask &= ((zpair @ tail2) % l) == 0
    return mask


def _surjective_mask(H1: np.ndarray, tgt: LieTarget) -> np.ndarray:
    l = tgt.l
    P = H1 if tgt.abelian else H1[:, :, :2]
    r = tgt.rank
    if r == 1:
        return (P % l).any(axis=(1, 2))
    if r == 2:
        a, b = P[:, :, 0], P[:, :, 1]
        minors = (a[:, :, None] * b[:, None, :] - a[:, None, :] * b[:, :, None]) % l
        return minors.any(axis=(1, 2))
    out = np.zeros(P.shape[0], dtype=bool)
    for i in range(P.shape[0]):
        out[i] = len(fp_echelon(P[i].T % l, l)[1]) == r
    return out


def _equivariance_mask(H1: np.ndarray, tgt: LieTarget,
                       twist: np.ndarray | None) -> np.ndarray:
    """Images compatible with generator inversion: psi(-x) = dsigma(psi(x)),
    conjugated by exp(twist) for the twisted (X-statistic) count."""
    l = tgt.l
    if tgt.abelian:
        return np.ones(H1.shape[0], dtype=bool)
    z = H1[:, :, 2]
    if twist is None:
        return ~((z % l).any(axis=1))
    a0, a1 = int(twist[0]), int(twist[1])
    # -h = Ad_a(dsigma h): degree-1 parts agree automatically;
    # center: -z = z + [a, dsigma(h)]_z with dsigma(h)_1 = -h_1
    brk = (a0 * (-H1[:, :, 1]) - a1 * (-H1[:, :, 0])) % l
    return ~(((2 * z + brk) % l).any(axis=1))


def pi_dagger(tgt: LieTarget, images_h: list[int]) -> int:
    """Evaluate the relator word at arbitrary lifts of generator images into
    the session cover of H x| Gamma; the value is a kernel element and does
    not depend on the lift choices."""
    cov = tgt.cover
    T = cov.total
    sec = tgt.cover_section
    lifts = [int(sec[tgt.embed_H.map[h]]) for h in images_h]
    out = T.identity
    for e in lifts:
        out = T.mul(out, T.inv_el(e))
    for e in lifts:
        out = T.mul(out, e)
    if cov.proj(out) != cov.base.identity:
        raise RelatorNotKilledError("relator image is nontrivial in the base")
    return out


def lifted_invariant(tgt: LieTarget, images_h: list[int]) -> int:
    """The relator word evaluated at lifts into the cover of H alone (no
    Gamma): lift-independent because every letter has zero exponent sum.  The
    value classifies automorphism orbits of surjections; it lies in the cover
    kernel exactly when the images kill the relator in H."""
    cov = tgt.H_cover
    T = cov.total
    sec = cov.section()
    lifts = [int(sec[h]) for h in images_h]
    out = T.identity
    for e in lifts:
        out = T.mul(out, T.inv_el(e))
    for e in lifts:
        out = T.mul(out, e)
    return out


@dataclass
class CountRequest:
    target: LieTarget
    mode: str                    # 'y', 'x', or 'plain'
    delta: DeltaTarget | None = None

    @property
    def needs_values(self) -> bool:
        return self.delta is not None and len(self.target.cover.kernel) > 1


def count_on_quotient(Q: NilQuotient, req: CountRequest) -> dict:
    """Count (refined) surjections from the sampled quotient.

    'y': Gamma-equivariant surjections onto H, optionally with the relator
    invariant prescribed; 'x': surjections of the split extension onto
    H x| Gamma via (rho, involution) pairs; 'plain': surjections onto H.
    """
    tgt = req.target
    l = tgt.l
    k = Q.k
    if k < tgt.rank:
        return {"count": 0, "total": 0}
    if tgt.abelian and not req.needs_values:
        total = _linear_sur_count(k, tgt.dim, l)
        if req.mode == "x":
            total *= tgt.H.order
        return {"count": total, "total": total}
    if k * tgt.dim > ENUM_COORDS_CAP:
        raise CapExceededError(
            f"enumeration over l^{k * tgt.dim} assignments refused")
    taus: list[np.ndarray | None] = []
    if req.mode == "x":
        HG = tgt.HG
        gid = tgt.gamma_group.gamma.identity
        taus = [_twist_log(tgt, e) for e in range(HG.order)
                if int(HG.element_orders[e]) == 2 and tgt.proj_G(e) != gid]
    count = 0
    total = 0
    for digits in _assign_chunks(k * tgt.dim, l):
        assign = digits.reshape(-1, k, tgt.dim)
        H1 = _generator_images(Q, assign, tgt)
        mask = _relation_mask(Q, H1, tgt) & _surjective_mask(H1, tgt)
        if req.mode == "y":
            mask &= _equivariance_mask(H1, tgt, None)
            idxs = np.flatnonzero(mask)
            total += len(idxs)
            if req.needs_values:
                for b in idxs:
                    imgs = [tgt.encode(H1[b, i]) for i in range(H1.shape[1])]
                    if pi_dagger(tgt, imgs) == req.delta.value:
                        count += 1
            else:
                count += len(idxs)
        elif req.mode == "x":
            for tw in taus:
                tmask = mask & _equivariance_mask(H1, tgt, tw)
                idxs = np.flatnonzero(tmask)
                total += len(idxs)
                if req.needs_values:
                    for b in idxs:
                        imgs = [tgt.encode(H1[b, i]) for i in range(H1.shape[1])]
                        if pi_dagger(tgt, imgs) == req.delta.value:
                            count += 1
                else:
                    count += len(idxs)
        else:
            idxs = np.flatnonzero(mask)
            total += len(idxs)
            count += len(idxs)
    return {"count": count, "total": total}


def _twist_log(tgt: LieTarget, e: int):
    h = e // tgt.gamma_group.gamma.order
    if tgt.abelian:
        return None
    return tgt.log(h)


# ---------------------------------------------------------------------------
# fast degree-1-only quotient for abelian targets
# ---------------------------------------------------------------------------

def deg1_fixed_quotient(D: DemushkinTrunc, aut: ConstrainedAut) -> NilQuotient:
    """Degree-1 data of the fixed quotient: the span of (T-1)-columns and the
    twist is already T-stable, so no saturation loop is needed.  Sufficient
    for every count that only sees images modulo commutators."""
    F, l = D.F, D.l
    n2 = F.dim1
    T = aut.T % l
    rows = np.vstack([(T - np.eye(n2, dtype=np.int64)).T % l,
                      F.deg1(aut.twist).reshape(1, -1) % l])
    R, piv = fp_echelon(rows, l)
    E = _Echelon(F.dim, l)
    for i in range(R.shape[0]):
        v = np.zeros(F.dim, dtype=np.int64)
        v[:n2] = R[i]
        E.insert_reduced(v)
    return NilQuotient.from_ideal(D, E)


def deg1_handle_quotient(D: DemushkinTrunc, aut: ConstrainedAut) -> NilQuotient:
    """Degree-1 data of the handle-killing quotient."""
    F, l = D.F, D.l
    n2 = F.dim1
    gens = lagrangian_generators(D)
    rows = []
    for i in range(0, n2 - 1, 2):
        a1 = F.deg1(gens[i]) % l
        rows.append(a1)
        rows.append((aut.T @ a1) % l)
    R, piv = fp_echelon(np.asarray(rows), l)
    E = _Echelon(F.dim, l)
    for i in range(R.shape[0]):
        v = np.zeros(F.dim, dtype=np.int64)
        v[:n2] = R[i]
        E.insert_reduced(v)
    return NilQuotient.from_ideal(D, E)


# ---------------------------------------------------------------------------
# moment estimation
# ---------------------------------------------------------------------------

@dataclass
class MomentEstimate:
    mean: float
    stderr: float
    samples: int
    seed: int
    total_sum: int = 0
    total_sumsq: int = 0

    @staticmethod
    def from_sums(s: int, sq: int, n: int, seed: int) -> "MomentEstimate":
        mean = s / n
        var = max(sq / n - mean * mean, 0.0)
        stderr = (var / n) ** 0.5 if n > 1 else float("inf")
        return MomentEstimate(mean, stderr, n, seed, s, sq)

    def sigmas_off(self, target: float) -> float:
        if self.stderr == 0:
            return 0.0 if self.mean == target else float("inf")
        return abs(self.mean - target) / self.stderr

    def as_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "samples": self.samples,
                "seed": self.seed}


def _block_rng(seed: int, block: int) -> np.random.Generator:
    """Counter-based per-block stream: Philox keyed by (seed, block)."""
    ss = np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF,
                                spawn_key=(int(block),))
    return np.random.Generator(np.random.Philox(ss))


def _blocks(samples: int):
    out = []
    b = 0
    left = samples
    while left > 0:
        size = min(BLOCK_SIZE, left)
        out.append((b, size))
        left -= size
        b += 1
    return out


def _y_block_worker(args):
    (n, l, q, cls, spec, delta_coords, seed, block, size) = args
    D = DemushkinTrunc(n, l, cls)
    tgt = lie_target(spec, l)
    delta = DeltaTarget(tgt, tuple(delta_coords))
    reqy = CountRequest(tgt, "y", delta)
    reqx = CountRequest(tgt, "x", delta)
    ratio = tgt.H.order  # [H : H^Gamma] equals |H| for our inversion targets
    rng = _block_rng(seed, block)
    fast = tgt.abelian
    sums = {"y": 0, "ysq": 0, "x": 0, "xsq": 0, "pair": 0, "pairsq": 0}
    for _ in range(size):
        aut = sample_constrained_aut(D, q, rng)
        Q = deg1_fixed_quotient(D, aut) if fast else build_fixed_quotient(D, aut)
        cy = count_on_quotient(Q, reqy)["count"]
        cx = count_on_quotient(Q, reqx)["count"]
        d = cx - ratio * cy
        sums["y"] += cy
        sums["ysq"] += cy * cy
        sums["x"] += cx
        sums["xsq"] += cx * cx
        sums["pair"] += d
        sums["pairsq"] += d * d
    return sums


def _z_block_worker(args):
    (n, l, cls, specs, seed, block, size) = args
    D = DemushkinTrunc(n, l, cls)
    tgts = [lie_target(s, l) for s in specs]
    reqs = [CountRequest(t, "plain") for t in tgts]
    rng = _block_rng(seed, block)
    sums = {s: [0, 0] for s in specs}
    for _ in range(size):
        aut = sample_trivial_action_aut(D, rng)
        Qfull = None
        Qfast = None
        for spec, tgt, req in zip(specs, tgts, reqs):
            if tgt.abelian:
                if Qfast is None:
                    Qfast = deg1_handle_quotient(D, aut)
                c = count_on_quotient(Qfast, req)["count"]
            else:
                if Qfast is None:
                    Qfast = deg1_handle_quotient(D, aut)
                if Qfast.k < tgt.rank:
                    c = 0
                else:
                    if Qfull is None:
                        Qfull = build_handle_quotient(D, aut)
                    c = count_on_quotient(Qfull, req)["count"]
            sums[spec][0] += c
            sums[spec][1] += c * c
    return sums


def _matrix_block_worker(args):
    """Abelianized shadow of the fixed-quotient model: pure matrix ranks over
    the same sample stream, no group machinery."""
    (n, l, q, cls, r, seed, block, size) = args
    D = DemushkinTrunc(n, l, cls)
    rng = _block_rng(seed, block)
    s = sq = 0
    n2 = 2 * n
    for _ in range(size):
        aut = sample_constrained_aut(D, q, rng)
        M = np.hstack([(aut.T - np.eye(n2, dtype=np.int64)) % l,
                       D.F.deg1(aut.twist).reshape(-1, 1) % l])
        rank = len(fp_echelon(M.T, l)[1])
        d = n2 - rank
        c = _linear_sur_count(d, r, l)
        s += c
        sq += c * c
    return {"sum": s, "sumsq": sq}


def _run_blocks(worker, static_args: tuple, samples: int, seed: int, threads: int):
    jobs = [static_args + (seed, b, size) for (b, size) in _blocks(samples)]
    if threads and threads > 1:
        import multiprocessing as mp
        with mp.get_context("fork").Pool(threads) as pool:
            results = pool.map(worker, jobs)
    else:
        results = [worker(j) for j in jobs]
    return results


def estimate_moment_y(n: int, l: int, q: int, target_spec: str,
                      delta_coords=(), samples: int = 100_000, seed: int = 0,
                      threads: int = 1, cls: int = 2) -> dict:
    """Monte Carlo estimates of the fixed-quotient moments.

    Returns {'y': MomentEstimate, 'x': MomentEstimate, 'paired': MomentEstimate,
    'delta_order_ok': bool}; 'paired' tracks the per-sample difference
    x - [H:H^Gamma] * y, whose mean is 0 in expectation.
    """
    if gcd(q, l) != 1:
        raise UsageError(f"q={q} must be invertible mod l={l}")
    tgt = lie_target(target_spec, l)
    delta_coords = tuple(delta_coords) if delta_coords else \
        tuple(0 for _ in tgt.cover.kernel_structure.factors)
    delta = DeltaTarget(tgt, delta_coords)
    ok = (q - 1) % delta.order == 0
    if not ok:
        warnings.warn(
            f"ord(delta)={delta.order} does not divide q-1={q - 1}; "
            "the refined moment is provably zero", DeltaOrderViolation)
    results = _run_blocks(_y_block_worker,
                          (n, l, q, cls, target_spec, delta_coords),
                          samples, seed, threads)
    agg = {k: sum(r[k] for r in results) for k in results[0]}
    return {
        "y": MomentEstimate.from_sums(agg["y"], agg["ysq"], samples, seed),
        "x": MomentEstimate.from_sums(agg["x"], agg["xsq"], samples, seed),
        "paired": MomentEstimate.from_sums(agg["pair"], agg["pairsq"], samples, seed),
        "delta_order_ok": ok,
    }


def estimate_moment_z(n: int, l: int, target_specs, samples: int = 100_000,
                      seed: int = 0, threads: int = 1, cls: int = 2) -> dict:
    """Monte Carlo estimates of the handle-quotient (3-manifold) moments for
    one or several targets over a shared sample stream."""
    if isinstance(target_specs, str):
        target_specs = [target_specs]
    results = _run_blocks(_z_block_worker, (n, l, cls, tuple(target_specs)),
                          samples, seed, threads)
    out = {}
    for spec in target_specs:
        s = sum(r[spec][0] for r in results)
        sq = sum(r[spec][1] for r in results)
        out[spec] = MomentEstimate.from_sums(s, sq, samples, seed)
    return out


def matrix_moment_estimate(n: int, l: int, q: int, r: int, samples: int,
                           seed: int, threads: int = 1, cls: int = 2) -> MomentEstimate:
    """Independent abelianized estimator: #Sur(coker[(1-T) | u], F_l^r) over
    the same (T, twist) stream as the group-machinery estimator."""
    results = _run_blocks(_matrix_block_worker, (n, l, q, cls, r),
                          samples, seed, threads)
    s = sum(x["sum"] for x in results)
    sq = sum(x["sumsq"] for x in results)
    return MomentEstimate.from_sums(s, sq, samples, seed)


def prop_target_z(target_spec: str, l: int) -> int:
    """|[H,H]| * |H_2(H)| for the handle model's limiting moment."""
    from .cohomology import schur_multiplier_l
    from .groups import commutator_subgroup
    tgt = lie_target(target_spec, l)
    comm = len(commutator_subgroup(tgt.H))
    return comm * schur_multiplier_l(tgt.H, l).order


# ---------------------------------------------------------------------------
# orbit transitivity
# ---------------------------------------------------------------------------

def _gamma_surjections(D: DemushkinTrunc, tgt: LieTarget) -> list[np.ndarray]:
    """All Gamma-equivariant surjections from the relator quotient onto an
    elementary abelian target, as (r x 2n) degree-1 matrices."""
    if not tgt.abelian:
        raise CapExceededError("surjections enumerated only for abelian targets")
    l = tgt.l
    n2 = D.F.dim1
    r = tgt.dim
    out = []
    for digits in _assign_chunks(n2 * r, l):
        for row in digits:
            A = row.reshape(r, n2) % l
            if len(fp_echelon(A, l)[1]) == r:
                out.append(A)
    return out


def _surjection_invariant(D: DemushkinTrunc, tgt: LieTarget, A: np.ndarray) -> int:
    imgs = [tgt.encode(A[:, i]) for i in range(D.F.dim1)]
    return lifted_invariant(tgt, imgs)


def orbit_transitivity_check(n: int, l: int, q: int, target_spec: str,
                             mode: str = "auto", pairs: int = 100,
                             seed: int = 0, cls: int = 2) -> dict:
    """Check that surjections with equal lifted invariant are connected by a
    constrained automorphism.

    mode 'exhaustive': enumerate the full constrained automorphism set (n = 1
    sized instances) and count orbits per invariant value.  mode
    'constructive': for random pairs with equal invariant, build a witness by
    basis completion and verify rho1 = rho2 o phi.  'auto' picks by size.
    """
    D = DemushkinTrunc(n, l, cls)
    tgt = lie_target(target_spec, l)
    surs = _gamma_surjections(D, tgt)
    invs = [_surjection_invariant(D, tgt, A) for A in surs]
    report = {"n": n, "l": l, "q": q, "target": target_spec,
              "surjections": len(surs), "mode": mode}
    if mode == "auto":
        mode = "exhaustive" if n == 1 else "constructive"
        report["mode"] = mode
    if mode == "exhaustive":
        auts = _enumerate_constrained_T(D, q)
        report["automorphisms"] = len(auts) * l ** D.F.dim1
        # the twist only affects degree >= 2; on abelian targets orbits are
        # determined by the T-action A -> A T
        key = {}
        for i, A in enumerate(surs):
            key[A.tobytes()] = i
        parent = list(range(len(surs)))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for T in auts:
            for i, A in enumerate(surs):
                j = key[((A @ T) % l).tobytes()]
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[ri] = rj
        orbit_ids = {}
        for i in range(len(surs)):
            orbit_ids.setdefault(find(i), []).append(i)
        by_inv: dict[int, set] = {}
        for root, members in orbit_ids.items():
            for m in members:
                by_inv.setdefault(invs[m], set()).add(root)
        report["orbits_per_invariant"] = {int(k): len(v) for k, v in by_inv.items()}
        report["single_orbit_per_invariant"] = all(
            len(v) == 1 for v in by_inv.values())
        return report
    # constructive witnesses
    rng = np.random.default_rng(seed)
    by_inv: dict[int, list[int]] = {}
    for i, h in enumerate(invs):
        by_inv.setdefault(h, []).append(i)
    ordq = None
    checked = 0
    found = 0
    failures = []
    eligible = {h: idx for h, idx in by_inv.items()
                if len(idx) >= 2 and
                (q - 1) % int(tgt.H_cover.total.element_orders[h]) == 0}
    keys = sorted(eligible)
    while checked < pairs and keys:
        h = keys[int(rng.integers(0, len(keys)))]
        idx = eligible[h]
        i, j = rng.choice(len(idx), size=2, replace=True)
        A1, A2 = surs[idx[int(i)]], surs[idx[int(j)]]
        checked += 1
        T = _connecting_similitude(D, A1, A2, q)
        if T is None:
            failures.append((int(idx[int(i)]), int(idx[int(j)])))
            continue
        if np.array_equal((A2 @ T) % l, A1 % l) and \
                np.array_equal((T @ D.bivector @ T.T) % l, (q % l) * D.bivector % l):
            found += 1
        else:
            failures.append((int(idx[int(i)]), int(idx[int(j)])))
    report.update({"pairs_checked": checked, "witnesses_found": found,
                   "failures": failures})
    if failures:
        # reported, never silently ignored: callers decide whether to raise
        report["error"] = "witness search failed for some pairs"
    return report


def _enumerate_constrained_T(D: DemushkinTrunc, q: int) -> list[np.ndarray]:
    """All degree-1 similitude matrices with multiplier q (tiny instances)."""
    l = D.l
    n2 = D.F.dim1
    if l ** (n2 * n2) > 100_000:
        raise CapExceededError("similitude enumeration only for tiny instances")
    B = D.bivector
    out = []
    for digits in _assign_chunks(n2 * n2, l):
        for row in digits:
            T = row.reshape(n2, n2) % l
            if np.array_equal((T @ B @ T.T) % l, ((q % l) * B) % l):
                if len(fp_echelon(T, l)[1]) == n2:
                    out.append(T)
    return out


def _connecting_similitude(D: DemushkinTrunc, A1: np.ndarray, A2: np.ndarray,
                           q: int) -> np.ndarray | None:
    """T with A2 T = A1 and T B T^t = q B, by completing pullback bases on
    both sides (the degree-2 base case of the successive approximation)."""
    l = D.l
    n2 = D.F.dim1
    B = D.bivector
    M = (-B) % l                      # pairing matrix on functionals
    r = A1.shape[0]
    G1 = (A1 @ M @ A1.T) % l
    G2 = (A2 @ M @ A2.T) % l
    if not np.array_equal(G1, G2):
        return None
    if not np.array_equal((q * G1) % l, G1):
        return None
    # adapted basis of the target functional space: radical split
    C = _radical_split(G1, l)
    rows1 = (C @ A1) % l
    rows2 = (C @ A2) % l
    Gp = (C @ G1 @ C.T) % l
    a = _hyperbolic_rank(Gp, l)
    b = r - 2 * a
    target = _arranged_target_gram(Gp, a, b, n2, l)
    try:
        F1 = _complete_with_form(list(rows1), target, M, l)
        F2 = _complete_with_form(list(rows2), (q * target) % l, M, l)
    except Exception:
        return None
    F1 = np.asarray(F1) % l
    F2 = np.asarray(F2) % l
    from .nilpotent import _fp_matrix_inverse
    for X, Y in ((F1, F2), (F2, F1)):
        P = (_fp_matrix_inverse(X, l) @ Y) % l
        T = _fp_matrix_inverse(P, l)
        if np.array_equal((A2 @ T) % l, A1 % l) and \
                np.array_equal((T @ B @ T.T) % l, ((q % l) * B) % l):
            return T
    return None


def _radical_split(G: np.ndarray, l: int) -> np.ndarray:
    """Basis change C with C G C^T = hyperbolic pairs first, radical last."""
    r = G.shape[0]
    rows = [np.eye(r, dtype=np.int64)[i] for i in range(r)]
    out: list[np.ndarray] = []
    rad: list[np.ndarray] = []
    while rows:
        Bm = np.asarray(rows)
        found = None
        for i, e in enumerate(rows):
            pair = (Bm @ G @ e) % l
            nz = np.flatnonzero(pair)
            if nz.size:
                found = (i, int(nz[0]), pair)
                break
        if found is None:
            rad.extend(rows)
            break
        i, nz, pair = found
        e = rows[i]
        f = (rows[nz] * pow(int(pair[nz]) % l, -1, l)) % l  # f G e = 1 -> e G f = -1
        # normalize to e G f = 1
        f = (-f) % l
        out.append(e)
        out.append(f)
        newb = []
        for bvec in rows:
            wbe = int(bvec @ G @ e) % l
            wbf = int(bvec @ G @ f) % l
            bb = (bvec + wbe * f - wbf * e) % l
            if bb.any():
                newb.append(bb)
        R, piv = fp_echelon(np.asarray(newb) if newb else np.zeros((0, r)), l)
        rows = [R[t] for t in range(R.shape[0])]
    return np.asarray(out + rad, dtype=np.int64).reshape(r, r)


def _hyperbolic_rank(Gp: np.ndarray, l: int) -> int:
    return len(fp_echelon(Gp, l)[1]) // 2


def _arranged_target_gram(Gp: np.ndarray, a: int, b: int, n2: int, l: int) -> np.ndarray:
    """Full 2n x 2n antisymmetric target whose leading block is Gp: pair the
    radical vectors and the fresh vectors into standard hyperbolic pairs."""
    r = Gp.shape[0]
    T = np.zeros((n2, n2), dtype=np.int64)
    T[:r, :r] = Gp % l
    # radical slots r-b..r-1 pair with fresh slots r..r+b-1
    for j in range(b):
        T[r - b + j, r + j] = 1
        T[r + j, r - b + j] = l - 1
    # remaining fresh slots pair among themselves
    pos = r + b
    while pos < n2:
        T[pos, pos + 1] = 1
        T[pos + 1, pos] = l - 1
        pos += 2
    return T


def _complete_with_form(vectors: list[np.ndarray], target: np.ndarray,
                        form: np.ndarray, l: int) -> list[np.ndarray]:
    """Greedy completion to a basis with prescribed Gram under an arbitrary
    nondegenerate alternating form."""
    from .errors import InconsistentPrescriptionError
    from .linalg import fp_nullspace, fp_solve
    n2 = form.shape[0]
    out = [np.asarray(v, dtype=np.int64) % l for v in vectors]
    for t in range(len(out), n2):
        if out:
            A = (np.asarray(out) @ form) % l
            bvec = np.asarray([int(target[i, t]) for i in range(len(out))]) % l
            x0 = fp_solve(A, bvec, l)
            if x0 is None:
                raise InconsistentPrescriptionError("no completion")
            K = fp_nullspace(A, l)
        else:
            x0 = np.zeros(n2, dtype=np.int64)
            K = np.eye(n2, dtype=np.int64)
        R, piv = fp_echelon(np.asarray(out) if out else np.zeros((0, n2)), l)
        choice = None
        trials = [np.zeros(K.shape[0], dtype=np.int64)] if K.shape[0] else [None]
        if K.shape[0]:
            trials = [np.eye(K.shape[0], dtype=np.int64)[i] for i in range(K.shape[0])] + trials
        for tr in trials:
            x = x0 if tr is None else (x0 + tr @ K) % l
            test = np.vstack([np.asarray(out), x.reshape(1, -1)]) if out else x.reshape(1, -1)
            if len(fp_echelon(test, l)[1]) == len(out) + 1:
                choice = x
                break
        if choice is None:
            raise InconsistentPrescriptionError("completion failed independence")
        out.append(choice)
    M = (np.asarray(out) @ form @ np.asarray(out).T) % l
    if not np.array_equal(M, target % l):
        raise InconsistentPrescriptionError("completed Gram mismatch")
    return out


# ---------------------------------------------------------------------------
# conjugated-involution A/B sampler (class 2)
# ---------------------------------------------------------------------------

def estimate_moment_y_conjugated(n: int, l: int, q: int, target_spec: str,
                                 t_vector, delta_coords=(), samples: int = 10_000,
                                 seed: int = 0) -> dict:
    """The Y/X estimate with the involution replaced by its conjugate under a
    degree-1 element t: transports each sampled automorphism through the inner
    identification, so the estimates must match the standard run's
    expectations (A/B invariance check)."""
    if gcd(q, l) != 1:
        raise UsageError("q must be invertible mod l")
    D = DemushkinTrunc(n, l, 2)
    tgt = lie_target(target_spec, l)
    delta_coords = tuple(delta_coords) if delta_coords else \
        tuple(0 for _ in tgt.cover.kernel_structure.factors)
    delta = DeltaTarget(tgt, delta_coords)
    reqy = CountRequest(tgt, "y", delta)
    reqx = CountRequest(tgt, "x", delta)
    tvec = D.F.identity
    tvec[: D.F.dim1] = np.asarray(t_vector, dtype=np.int64) % l
    tinv = D.inv(tvec)

    def conj(v):
        return D.mult(tvec, D.mult(v, tinv))

    sums = {"y": 0, "ysq": 0, "x": 0, "xsq": 0}
    for (b, size) in _blocks(samples):
        rng = _block_rng(seed, b)
        for _ in range(size):
            aut = sample_constrained_aut(D, q, rng)
            # transport: conjugated model's quotient ideal is the conj-image
            F = D.F
            gens = []
            for i in range(F.dim1):
                x = F.generator(i)
                gens.append(conj(D.mult(D.inv(x), aut.gen_images[i])))
            gens.append(conj(D.sigma(aut.twist)))
            gens.append(D.xi)
            E = ideal_closure(D, gens, aut=None, use_sigma=True)
            Q = NilQuotient.from_ideal(D, E)
            cy = count_on_quotient(Q, reqy)["count"]
            cx = count_on_quotient(Q, reqx)["count"]
            sums["y"] += cy
            sums["ysq"] += cy * cy
            sums["x"] += cx
            sums["xsq"] += cx * cx
    return {
        "y": MomentEstimate.from_sums(sums["y"], sums["ysq"], samples, seed),
        "x": MomentEstimate.from_sums(sums["x"], sums["xsq"], samples, seed),
    }


def materialize_fixed_quotient(D: DemushkinTrunc, aut: ConstrainedAut,
                               cap: int = 2048):
    """(X, Y, proj) as tables for small instances: Y with its involution
    action, X the semidirect product, proj the quotient onto the order-2
    part."""
    Q = build_fixed_quotient(D, aut)
    gg = Q.gamma_group(cap=cap)
    X, eH, eG, proj = semidirect_product(gg.group, gg.gamma, gg.action)
    return X, gg, proj
