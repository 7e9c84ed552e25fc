"""Free nilpotent exponent-l groups of class <= 3 over F_l, via graded
coordinates and truncated Baker-Campbell-Hausdorff.

Since the class is always < l (class 2 needs l >= 3, class 3 is gated behind
l >= 5), the Lazard correspondence applies: elements are Lie-algebra
coordinate vectors, multiplication is BCH, subgroups are subalgebras and
normal subgroups are ideals.  The group commutator of two degree-1 elements
has degree-2 part exactly the wedge, so relator coefficients are read off
coordinates directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    BadIndexError,
    BadPrimeForClassError,
    InconsistentPrescriptionError,
    LayerSingularError,
    NotCentralError,
    NotGeneratingError,
    NotInCommutatorPartError,
    VerificationFailedError,
    WordSyntaxError,
)
from .linalg import fp_echelon, fp_nullspace, fp_solve


class FreeNilGroup:
    """Free nilpotent group of exponent l and class cls on m generators."""

    def __init__(self, m: int, cls: int, l: int):
        if cls not in (2, 3):
            raise BadPrimeForClassError("class must be 2 or 3")
        if l < 3 or (cls == 3 and l < 5):
            raise BadPrimeForClassError(
                f"prime {l} too small for class {cls} (needs 2 and 3 invertible)")
        self.m = m
        self.cls = cls
        self.l = l
        self.pairs = [(i, j) for i in range(m) for j in range(i + 1, m)]
        self.pair_idx = {p: k for k, p in enumerate(self.pairs)}
        self.dim1 = m
        self.dim2 = len(self.pairs)
        if cls == 3:
            self.triples = [(a, b, c) for a in range(m) for b in range(a + 1, m)
                            for c in range(a, m)]
            self.triple_idx = {t: k for k, t in enumerate(self.triples)}
            self.dim3 = len(self.triples)
        else:
            self.triples = []
            self.triple_idx = {}
            self.dim3 = 0
        self.dim = self.dim1 + self.dim2 + self.dim3
        self.inv2 = pow(2, -1, l)
        self.inv12 = pow(12, -1, l) if cls == 3 else 0
        self.iu = np.asarray([p[0] for p in self.pairs], dtype=np.int64)
        self.ju = np.asarray([p[1] for p in self.pairs], dtype=np.int64)
        if cls == 3:
            self._bracket21 = self._build_bracket21()
        self._check_lie_axioms()

    # coordinate slices
    def deg1(self, v):
        return v[: self.dim1]

    def deg2(self, v):
        return v[self.dim1: self.dim1 + self.dim2]

    def deg3(self, v):
        return v[self.dim1 + self.dim2:]

    @property
    def identity(self) -> np.ndarray:
        return np.zeros(self.dim, dtype=np.int64)

    def generator(self, i: int) -> np.ndarray:
        if not 0 <= i < self.m:
            raise BadIndexError(f"generator index {i} out of range")
        v = self.identity
        v[i] = 1
        return v

    def order(self) -> int:
        return self.l ** self.dim

    # -- Lie structure -------------------------------------------------------

    def _triple_coords(self, a: int, b: int, c: int) -> list[tuple[int, int]]:
        """[[e_a,e_b],e_c] as basis combination (index, coeff); a<b assumed."""
        if c >= a:
            return [(self.triple_idx[(a, b, c)], 1)]
        # c < a < b: [[a,b],c] = [[c,b],a] - [[c,a],b]
        return [(self.triple_idx[(c, b, a)], 1), (self.triple_idx[(c, a, b)], -1)]

    def _build_bracket21(self) -> np.ndarray:
        """S[p, c] = coords of [P_p, e_c] in the degree-3 basis."""
        S = np.zeros((self.dim2, self.m, self.dim3), dtype=np.int64)
        for p, (a, b) in enumerate(self.pairs):
            for c in range(self.m):
                for idx, coef in self._triple_coords(a, b, c):
                    S[p, c, idx] += coef
        return S % self.l

    def bracket(self, u, v) -> np.ndarray:
        l = self.l
        out = np.zeros(self.dim, dtype=np.int64)
        u1, v1 = self.deg1(u), self.deg1(v)
        iu, ju = self.iu, self.ju
        out[self.dim1: self.dim1 + self.dim2] = (u1[iu] * v1[ju] - u1[ju] * v1[iu]) % l
        if self.cls == 3:
            u2, v2 = self.deg2(u), self.deg2(v)
            w3 = np.einsum("p,c,pcd->d", u2 % l, v1 % l, self._bracket21) \
                - np.einsum("p,c,pcd->d", v2 % l, u1 % l, self._bracket21)
            out[self.dim1 + self.dim2:] = w3 % l
        return out

    def wedge_of_columns(self, T: np.ndarray) -> np.ndarray:
        """Lambda^2 T on the degree-2 basis: column p=(a,b) is T_a wedge T_b."""
        U = T[:, self.iu]   # columns indexed by pairs, first member
        V = T[:, self.ju]
        return (U[self.iu] * V[self.ju] - U[self.ju] * V[self.iu]) % self.l

    def wedge_with(self, u1: np.ndarray, T: np.ndarray) -> np.ndarray:
        """Matrix of v |-> u1 ^ (T v) from degree 1 to degree 2."""
        return (u1[self.iu][:, None] * T[self.ju]
                - u1[self.ju][:, None] * T[self.iu]) % self.l

    def _check_lie_axioms(self) -> None:
        l = self.l
        rng = np.random.default_rng(12345)
        for _ in range(20):
            a = rng.integers(0, l, self.dim)
            b = rng.integers(0, l, self.dim)
            c = rng.integers(0, l, self.dim)
            if ((self.bracket(a, b) + self.bracket(b, a)) % l).any():
                raise AssertionError("bracket not antisymmetric")
            jac = (self.bracket(self.bracket(a, b), c)
                   + self.bracket(self.bracket(b, c), a)
                   + self.bracket(self.bracket(c, a), b)) % l
            if jac.any():
                raise AssertionError("Jacobi identity fails")

    # -- group structure -------------------------------------------------------

    def mult(self, x, y) -> np.ndarray:
        l = self.l
        b = self.bracket(x, y)
        z = x + y + self.inv2 * b
        if self.cls == 3:
            z = z + self.inv12 * (self.bracket(x, b) + self.bracket(y, self.bracket(y, x)))
        return z % l

    def inv(self, x) -> np.ndarray:
        return (-np.asarray(x)) % self.l

    def comm(self, x, y) -> np.ndarray:
        return self.mult(self.mult(self.inv(x), self.inv(y)), self.mult(x, y))

    def power(self, x, k: int) -> np.ndarray:
        # exponent-l class < l: power is scalar multiplication in Lie coords
        return (np.asarray(x) * (k % self.l)) % self.l

    def sigma(self, x) -> np.ndarray:
        """Generator inversion: (-1)^degree on coordinates."""
        out = np.asarray(x).copy() % self.l
        out[: self.dim1] = (-out[: self.dim1]) % self.l
        if self.cls == 3:
            out[self.dim1 + self.dim2:] = (-out[self.dim1 + self.dim2:]) % self.l
        return out


# ---------------------------------------------------------------------------
# words
# ---------------------------------------------------------------------------

def parse_word(spec: str):
    """Grammar: sequence of factors; factor = atom ['^' int] ['~'];
    atom = xK | '[' word ',' word ']'.  Returns a nested structure."""
    pos = 0
    s = spec.replace(" ", "")

    def parse_seq(stop: set[str]):
        nonlocal pos
        out = []
        while pos < len(s) and s[pos] not in stop:
            out.append(parse_factor())
        return ("seq", out)

    def parse_factor():
        nonlocal pos
        if s[pos] == "x":
            pos += 1
            start = pos
            while pos < len(s) and s[pos].isdigit():
                pos += 1
            if start == pos:
                raise WordSyntaxError(f"expected generator index at {start} in {spec!r}")
            atom = ("gen", int(s[start:pos]) - 1)
        elif s[pos] == "[":
            pos += 1
            a = parse_seq({","})
            if pos >= len(s) or s[pos] != ",":
                raise WordSyntaxError(f"expected ',' in commutator in {spec!r}")
            pos += 1
            b = parse_seq({"]"})
            if pos >= len(s) or s[pos] != "]":
                raise WordSyntaxError(f"unclosed commutator in {spec!r}")
            pos += 1
            atom = ("comm", a, b)
        else:
            raise WordSyntaxError(f"unexpected {s[pos]!r} in {spec!r}")
        exp = 1
        if pos < len(s) and s[pos] == "^":
            pos += 1
            start = pos
            if pos < len(s) and s[pos] == "-":
                pos += 1
            while pos < len(s) and s[pos].isdigit():
                pos += 1
            exp = int(s[start:pos])
        if pos < len(s) and s[pos] == "~":
            pos += 1
            exp = -exp
        return ("pow", atom, exp)

    tree = parse_seq(set())
    if pos != len(s):
        raise WordSyntaxError(f"trailing input at {pos} in {spec!r}")
    return tree


def evaluate_word(F: FreeNilGroup, word) -> np.ndarray:
    """Evaluate a parsed word tree (or spec string) to coordinates."""
    if isinstance(word, str):
        word = parse_word(word)

    def ev(node) -> np.ndarray:
        kind = node[0]
        if kind == "seq":
            out = F.identity
            for child in node[1]:
                out = F.mult(out, ev(child))
            return out
        if kind == "pow":
            # exponent-l class < l: powering is scalar multiplication
            return F.power(ev(node[1]), node[2])
        if kind == "gen":
            return F.generator(node[1])
        if kind == "comm":
            return F.comm(ev(node[1]), ev(node[2]))
        raise WordSyntaxError(f"bad node {kind}")

    return ev(word)


def standard_relator(F: FreeNilGroup) -> np.ndarray:
    """[x1,x2][x3,x4]...[x_{m-1},x_m] (m even)."""
    out = F.identity
    for i in range(0, F.m - 1, 2):
        out = F.mult(out, F.comm(F.generator(i), F.generator(i + 1)))
    return out


def inversion_relator(F: FreeNilGroup) -> np.ndarray:
    """x1^-1 x2^-1 ... xm^-1 x1 x2 ... xm; the presentation on which generator
    inversion permutes the relator's conjugates."""
    out = F.identity
    for i in range(F.m):
        out = F.mult(out, F.inv(F.generator(i)))
    for i in range(F.m):
        out = F.mult(out, F.generator(i))
    return out


def relator_matrix(F: FreeNilGroup, central) -> np.ndarray:
    """The antisymmetric matrix M with M[i,j] = -a_ij (i<j), a_ji (i>j) read
    from the degree-2 coordinates of a commutator-part element."""
    central = np.asarray(central) % F.l
    if F.deg1(central).any():
        raise NotInCommutatorPartError("element has nonzero degree-1 part")
    M = np.zeros((F.m, F.m), dtype=np.int64)
    a = F.deg2(central)
    for k, (i, j) in enumerate(F.pairs):
        M[i, j] = (-a[k]) % F.l
        M[j, i] = a[k] % F.l
    return M


# ---------------------------------------------------------------------------
# symplectic similitudes
# ---------------------------------------------------------------------------

def standard_form_matrix(n2: int) -> np.ndarray:
    """Block-diagonal symplectic form: w(e_{2i-1}, e_{2i}) = 1."""
    J = np.zeros((n2, n2), dtype=np.int64)
    for i in range(0, n2 - 1, 2):
        J[i, i + 1] = 1
        J[i + 1, i] = -1
    return J


def gsp_sample(n2: int, l: int, q: int, rng) -> np.ndarray:
    """Exact-uniform element of the multiplier-q symplectic similitude coset
    (columns pair in the standard block pattern scaled by q).

    A uniform symplectic basis is built sequentially: uniform nonzero e, then
    f uniform on the affine set {w(e, f) = 1} within the maintained span,
    recurse on the perpendicular space; the fixed multiplier-q twist scales
    the f-vectors.  Plain-int arithmetic: dimensions stay tiny.
    """
    def form(a, b):  # standard block form
        s = 0
        for i in range(0, n2 - 1, 2):
            s += a[i] * b[i + 1] - a[i + 1] * b[i]
        return s % l

    basis = [[1 if i == j else 0 for j in range(n2)] for i in range(n2)]
    cols: list[list[int]] = []
    while basis:
        d = len(basis)
        while True:
            co = [int(x) for x in rng.integers(0, l, d)]
            if any(co):
                break
        e = [sum(c * b[j] for c, b in zip(co, basis)) % l for j in range(n2)]
        pair = [form(b, e) for b in basis]          # w(basis_i, e)
        nz = next((i for i, x in enumerate(pair) if x), -1)
        if nz < 0:
            raise AssertionError("form degenerate on maintained span")
        scale = pow((-pair[nz]) % l, -1, l)
        f = [(x * scale) % l for x in basis[nz]]    # w(e, f) = 1
        # uniform offset in span ∩ e-perp: coefficients c with sum c_i pair_i = 0
        co = [int(x) for x in rng.integers(0, l, d)]
        acc = sum(c * p for c, p in zip(co, pair)) % l
        co[nz] = (co[nz] - acc * pow(pair[nz], -1, l)) % l
        for c, b in zip(co, basis):
            if c:
                for j in range(n2):
                    f[j] = (f[j] + c * b[j]) % l
        cols.append(e)
        cols.append(f)
        # perpendicular space: adjust each b, drop two dependent rows by a
        # tiny Gaussian elimination
        newb = []
        for b in basis:
            wbe = form(b, e)
            wbf = form(b, f)
            bb = [(b[j] + wbe * f[j] - wbf * e[j]) % l for j in range(n2)]
            newb.append(bb)
        reduced = []
        pivots = []
        for row in newb:
            row = row[:]
            for (pc, prow) in zip(pivots, reduced):
                c = row[pc]
                if c:
                    for j in range(n2):
                        row[j] = (row[j] - c * prow[j]) % l
            pc = next((j for j, x in enumerate(row) if x), -1)
            if pc < 0:
                continue
            inv = pow(row[pc], -1, l)
            row = [(x * inv) % l for x in row]
            pivots.append(pc)
            reduced.append(row)
        if len(reduced) != d - 2:
            raise AssertionError("perpendicular space has wrong dimension")
        basis = reduced
    T = np.zeros((n2, n2), dtype=np.int64)
    for i in range(0, n2, 2):
        T[:, i] = cols[i]
        T[:, i + 1] = [(q * x) % l for x in cols[i + 1]]
    return T % l


def similitude_multiplier(T: np.ndarray, l: int) -> int | None:
    """q with T^t J T = q J, or None."""
    n2 = T.shape[0]
    J = standard_form_matrix(n2) % l
    M = (T.T @ J @ T) % l
    q = int(M[0, 1])
    if not np.array_equal(M % l, (q * J) % l):
        return None
    return q


def q_symplectic_completion(vectors, gram, l: int, n2: int,
                            target_gram: np.ndarray | None = None,
                            rng=None) -> list[np.ndarray]:
    """Complete prescribed vectors to a full basis of F_l^{2n} whose Gram
    matrix (under the standard form) extends the prescription.

    `gram` is the required k x k Gram of the input vectors (checked), and
    `target_gram` the full 2n x 2n target; defaults to the standard form.
    """
    J = standard_form_matrix(n2) % l
    if target_gram is None:
        target_gram = J
    target_gram = np.asarray(target_gram, dtype=np.int64) % l
    vecs = [np.asarray(v, dtype=np.int64) % l for v in vectors]
    k = len(vecs)
    for i in range(k):
        for j in range(k):
            got = int(vecs[i] @ J @ vecs[j]) % l
            if got != int(gram[i][j]) % l:
                raise InconsistentPrescriptionError(
                    f"prescribed pairing ({i},{j}) is {int(gram[i][j]) % l}, got {got}")
            if int(target_gram[i, j]) % l != got:
                raise InconsistentPrescriptionError(
                    f"target Gram disagrees with prescription at ({i},{j})")
    out = list(vecs)
    for t in range(k, n2):
        # solve w(out[i], x) = target_gram[i, t] for all i, keep x independent
        if out:
            A = (np.asarray(out) @ J) % l
            b = np.asarray([int(target_gram[i, t]) for i in range(len(out))]) % l
            x0 = fp_solve(A, b, l)
            if x0 is None:
                raise InconsistentPrescriptionError("no completion for the next vector")
            K = fp_nullspace(A, l)
        else:
            x0 = np.zeros(n2, dtype=np.int64)
            K = np.eye(n2, dtype=np.int64)
        # choose a kernel offset making x independent of current span
        R, piv = fp_echelon(np.asarray(out) if out else np.zeros((0, n2)), l)
        choice = None
        cands = [np.zeros(K.shape[0], dtype=np.int64)] if not K.shape[0] else None
        trials = []
        if rng is not None and K.shape[0]:
            trials = [rng.integers(0, l, K.shape[0]) for _ in range(8)]
        if K.shape[0]:
            trials += [np.eye(K.shape[0], dtype=np.int64)[i] for i in range(K.shape[0])]
            trials += [np.zeros(K.shape[0], dtype=np.int64)]
        else:
            trials = [None]
        for tr in trials:
            x = x0 if tr is None else (x0 + tr @ K) % l
            test = np.vstack([np.asarray(out), x.reshape(1, -1)]) if out else x.reshape(1, -1)
            if fp_echelon(test, l)[0].shape[0] == len(out) + 1:
                choice = x
                break
        if choice is None:
            raise InconsistentPrescriptionError("completion failed to stay independent")
        out.append(choice)
    # final verification
    M = (np.asarray(out) @ J @ np.asarray(out).T) % l
    if not np.array_equal(M, target_gram % l):
        raise InconsistentPrescriptionError("completed basis fails the Gram check")
    return out


# ---------------------------------------------------------------------------
# Demushkin truncations and constrained automorphisms
# ---------------------------------------------------------------------------

class DemushkinTrunc:
    """Truncated one-relator surface-type data: the free object on 2n
    generators, the central relator element xi, the induced quotient, and the
    generator-inversion involution sigma."""

    def __init__(self, n: int, l: int, cls: int = 2):
        self.n = n
        self.l = l
        self.cls = cls
        self.F = FreeNilGroup(2 * n, cls, l)
        F = self.F
        # the relator whose conjugacy class is preserved by generator
        # inversion; at n=1 it coincides with the single commutator
        lam = inversion_relator(F)
        if cls == 3:
            rows = [F.bracket(lam, F.generator(i)) for i in range(F.m)]
            R, piv = fp_echelon(np.asarray(rows), l)
            self.ideal_rows = R
            self.ideal_pivots = list(piv)
        else:
            self.ideal_rows = np.zeros((0, F.dim), dtype=np.int64)
            self.ideal_pivots = []
        self.xi = self.reduce(lam)
        # sigma must fix xi in the quotient and be an automorphism of it
        if not np.array_equal(self.reduce(F.sigma(self.xi)), self.xi):
            raise AssertionError("sigma does not fix the relator in the truncation")
        if self.F.deg1(self.xi).any():
            raise AssertionError("relator has degree-1 part")
        # bivector of the relator and the basis change S with S J S^T = B,
        # so that similitudes of B are S-conjugates of standard similitudes
        B = np.zeros((F.m, F.m), dtype=np.int64)
        for k, (i, j) in enumerate(F.pairs):
            B[i, j] = self.xi[F.dim1 + k] % l
            B[j, i] = (-self.xi[F.dim1 + k]) % l
        self.bivector = B
        self.basis_change = _bivector_basis_change(B, l)
        self.basis_change_inv = _fp_matrix_inverse(self.basis_change, l)

    # gtilde arithmetic: ambient ops followed by ideal reduction
    def reduce(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.int64) % self.l
        if self.ideal_rows.shape[0]:
            v = (v - v[self.ideal_pivots] @ self.ideal_rows) % self.l
        return v

    def reduce_block(self, M) -> np.ndarray:
        M = np.asarray(M, dtype=np.int64) % self.l
        if self.ideal_rows.shape[0]:
            M = (M - M[:, self.ideal_pivots] @ self.ideal_rows) % self.l
        return M

    def mult(self, x, y) -> np.ndarray:
        return self.reduce(self.F.mult(x, y))

    def inv(self, x) -> np.ndarray:
        return self.reduce(self.F.inv(x))

    def comm(self, x, y) -> np.ndarray:
        return self.reduce(self.F.comm(x, y))

    def sigma(self, x) -> np.ndarray:
        return self.reduce(self.F.sigma(x))

    def generator(self, i: int) -> np.ndarray:
        return self.F.generator(i)

    def gtilde_order(self) -> int:
        return self.l ** (self.F.dim - self.ideal_rows.shape[0])

    def xi_coord_row(self) -> np.ndarray:
        return self.xi.copy()


@dataclass
class ConstrainedAut:
    """Automorphism of the truncation given by generator images, with the
    abelianized similitude T, the Gamma-twist u, and free higher corrections.

    The full action matrix is the unique Lie-map extension of the generator
    images, reduced modulo the relator ideal.
    """
    D: DemushkinTrunc
    T: np.ndarray
    twist: np.ndarray          # full coordinate vector of the Gamma-twist
    gen_images: list[np.ndarray]
    q: int
    matrix: np.ndarray         # dim x dim action on coordinates

    def apply(self, v) -> np.ndarray:
        return self.D.reduce(self.matrix @ (np.asarray(v) % self.D.l))


def _lie_extension_matrix(D: DemushkinTrunc, gen_images) -> np.ndarray:
    """Matrix of the Lie-map extension of generator images (reduced)."""
    F, l = D.F, D.l
    if F.cls == 2:
        G = np.stack(gen_images, axis=1) % l
        T = G[: F.dim1]
        M = np.zeros((F.dim, F.dim), dtype=np.int64)
        M[: F.dim1, : F.dim1] = T
        M[F.dim1:, : F.dim1] = G[F.dim1:]
        M[F.dim1:, F.dim1:] = F.wedge_of_columns(T)
        return M
    cols = [D.reduce(img) for img in gen_images]
    img2 = {}
    for p, (a, b) in enumerate(F.pairs):
        img2[p] = D.reduce(F.bracket(cols[a], cols[b]))
    img3 = {}
    for t, (a, b, c) in enumerate(F.triples):
        img3[t] = D.reduce(F.bracket(F.bracket(cols[a], cols[b]), cols[c]))
    M = np.zeros((F.dim, F.dim), dtype=np.int64)
    for i in range(F.dim1):
        M[:, i] = cols[i]
    for p in range(F.dim2):
        M[:, F.dim1 + p] = img2[p]
    for t in range(F.dim3):
        M[:, F.dim1 + F.dim2 + t] = img3[t]
    return M % l


def _plain_rank(rows, l: int) -> int:
    """Gaussian elimination on a small list-of-lists matrix."""
    rows = [[int(x) % l for x in r] for r in rows]
    rank = 0
    width = len(rows[0]) if rows else 0
    pivots = []
    red = []
    for row in rows:
        for pc, prow in zip(pivots, red):
            c = row[pc]
            if c:
                row = [(x - c * y) % l for x, y in zip(row, prow)]
        pc = next((j for j in range(width) if row[j]), -1)
        if pc < 0:
            continue
        inv = pow(row[pc], -1, l)
        red.append([(x * inv) % l for x in row])
        pivots.append(pc)
        rank += 1
    return rank


def _verify_constrained(D: DemushkinTrunc, aut: ConstrainedAut, rng,
                        gamma_equivariant: bool) -> None:
    F, l = D.F, D.l
    # homomorphism property on generator pairs and random pairs
    for _ in range(3):
        x = rng.integers(0, l, F.dim)
        y = rng.integers(0, l, F.dim)
        lhs = aut.apply(D.mult(x, y))
        rhs = D.mult(aut.apply(x), aut.apply(y))
        if not np.array_equal(lhs, rhs):
            raise VerificationFailedError("sampled map is not a homomorphism")
    # xi -> xi^q
    want = (aut.q * D.xi) % l
    if not np.array_equal(aut.apply(D.xi), D.reduce(want)):
        raise VerificationFailedError("sampled map moves the relator incorrectly")
    # images generate: abelianized matrix invertible
    if _plain_rank(aut.T.tolist(), l) != F.dim1:
        raise VerificationFailedError("sampled map is not surjective")
    if gamma_equivariant:
        u = aut.twist
        uinv = D.inv(u)
        for i in range(F.dim1):
            x = F.generator(i)
            lhs = aut.apply(D.sigma(x))
            rhs = D.mult(u, D.mult(D.sigma(aut.apply(x)), uinv))
            if not np.array_equal(lhs, rhs):
                raise VerificationFailedError("Gamma-compatibility fails")
        # the twist must extend to an involution of the semidirect product
        if np.asarray(F.deg2(u)).any():
            raise VerificationFailedError("twist has a degree-2 part")


def _fp_matrix_inverse(A: np.ndarray, l: int) -> np.ndarray:
    n = A.shape[0]
    R, piv = fp_echelon(np.hstack([A % l, np.eye(n, dtype=np.int64)]), l)
    if piv != list(range(n)):
        raise InconsistentPrescriptionError("matrix not invertible")
    return R[:, n:] % l


def _bivector_basis_change(B: np.ndarray, l: int) -> np.ndarray:
    """S with S J S^T = B for the standard block bivector J."""
    n2 = B.shape[0]
    basis = [np.eye(n2, dtype=np.int64)[i] for i in range(n2)]
    cols = []
    while basis:
        Bm = np.asarray(basis)
        e = None
        for cand in basis:
            if ((Bm @ B @ cand) % l).any():
                e = cand
                break
        if e is None:
            raise InconsistentPrescriptionError("relator bivector is degenerate")
        pair = (Bm @ B @ e) % l
        nz = int(np.flatnonzero(pair)[0])
        f = (basis[nz] * pow(int((-pair[nz]) % l), -1, l)) % l  # e^T B f = 1
        cols.append(e)
        cols.append(f)
        newb = []
        for b in basis:
            wbe = int(b @ B @ e) % l
            wbf = int(b @ B @ f) % l
            bb = (b + wbe * f - wbf * e) % l
            if bb.any():
                newb.append(bb)
        R, piv = fp_echelon(np.asarray(newb) if newb else np.zeros((0, n2)), l)
        basis = [R[i] for i in range(R.shape[0])]
    V = np.stack(cols, axis=1) % l          # V^T B V = J
    return _fp_matrix_inverse(V, l).T % l   # S = V^{-T}


def _similitude_for_relator(D: DemushkinTrunc, q: int, rng) -> np.ndarray:
    """Uniform T with T B T^T = q B for the relator bivector B."""
    T0 = gsp_sample(D.F.dim1, D.l, q % D.l, rng)
    return (D.basis_change @ T0 @ D.basis_change_inv) % D.l


def _gamma_images(D: DemushkinTrunc, T: np.ndarray, u1: np.ndarray,
                  c3rows=None) -> list[np.ndarray]:
    """Generator images for the Gamma-compatible correction (1/2) u ^ T v."""
    F, l = D.F, D.l
    C2 = (F.inv2 * F.wedge_with(u1, T)) % l
    out = []
    for i in range(F.dim1):
        img = F.identity
        img[: F.dim1] = T[:, i] % l
        img[F.dim1: F.dim1 + F.dim2] = C2[:, i]
        if c3rows is not None:
            img[F.dim1 + F.dim2:] = (img[F.dim1 + F.dim2:] + c3rows[i]) % l
        out.append(D.reduce(img))
    return out


def sample_constrained_aut(D: DemushkinTrunc, q: int, rng,
                           max_attempts: int = 512) -> ConstrainedAut:
    """Uniform element of Aut(gtilde x| Gamma, ker(proj); q).

    T is exact-uniform over the multiplier-q similitude coset of the relator
    bivector, the twist's degree-1 part is uniform, the degree-2 correction is
    forced by Gamma-compatibility to (1/2) u ^ T v, and the free degree-3 data
    is uniform.  At class 3 the relator condition cuts the (T, u) space, so
    draws are rejected until the condition holds (still exact-uniform: the
    degree-3 fibers all have equal size).
    """
    F, l = D.F, D.l
    if q % l == 0:
        raise BadPrimeForClassError("q must be invertible mod l")
    for _ in range(max_attempts):
        T = _similitude_for_relator(D, q, rng)
        u = F.identity
        u[: F.dim1] = rng.integers(0, l, F.dim1)
        u1 = F.deg1(u).copy()
        gen_images = _gamma_images(D, T, u1)
        M = _lie_extension_matrix(D, gen_images)
        if not np.array_equal(D.reduce(M @ D.xi), D.reduce((q * D.xi) % l)):
            if F.cls == 2:
                raise VerificationFailedError("relator condition failed at class 2")
            continue
        if F.cls == 3:
            u3 = rng.integers(0, l, F.dim3)
            u[F.dim1 + F.dim2:] = u3
            u = D.reduce(u)
            c3 = rng.integers(0, l, (F.dim1, F.dim3))
            gen_images = _gamma_images(D, T, u1, c3rows=c3)
            M = _lie_extension_matrix(D, gen_images)
            if not np.array_equal(D.reduce(M @ D.xi), D.reduce((q * D.xi) % l)):
                raise VerificationFailedError("degree-3 data moved the relator")
        aut = ConstrainedAut(D, T, u, gen_images, q % l, M)
        _verify_constrained(D, aut, rng, gamma_equivariant=True)
        return aut
    raise VerificationFailedError(
        f"no admissible (T, twist) draw in {max_attempts} attempts")


def sample_trivial_action_aut(D: DemushkinTrunc, rng) -> ConstrainedAut:
    """Uniform element of Aut(gtilde, ker(proj); 1): no Gamma structure.

    Degree-2 corrections are uniform over the affine space keeping the relator
    fixed (all of them at class 2); degree-3 corrections are free.
    """
    F, l = D.F, D.l
    T = _similitude_for_relator(D, 1, rng)

    def images(c2, c3):
        out = []
        for i in range(F.dim1):
            img = F.identity
            img[: F.dim1] = T[:, i] % l
            img[F.dim1: F.dim1 + F.dim2] = c2[i]
            if F.cls == 3:
                img[F.dim1 + F.dim2:] = c3[i]
            out.append(D.reduce(img))
        return out

    zero2 = np.zeros((F.dim1, F.dim2), dtype=np.int64)
    zero3 = np.zeros((F.dim1, F.dim3), dtype=np.int64)
    if F.cls == 2:
        c2 = rng.integers(0, l, (F.dim1, F.dim2))
        gen_images = images(c2, zero3)
    else:
        # solve the affine relator condition for the degree-2 corrections:
        # the unit correction C2[e_i] += P_p shifts phi(xi)_3 by
        # sum_k xi2[k] ([T a_k, P_p] delta_{b_k = i} - [T b_k, P_p] delta_{a_k = i})
        M0 = _lie_extension_matrix(D, images(zero2, zero3))
        base = D.reduce(M0 @ D.xi)
        r0 = (base - D.reduce(D.xi)) % l
        xi2 = F.deg2(D.xi) % l
        # W[c, p] = [T e_c, P_p] in degree 3 = -sum_a T[a, c] bracket21[p, a]
        W = -np.einsum("pad,ac->cpd", F._bracket21, T % l)
        A = np.zeros((F.dim, F.dim1 * F.dim2), dtype=np.int64)
        deg3 = slice(F.dim1 + F.dim2, F.dim)
        for k, (a, b) in enumerate(F.pairs):
            if not xi2[k]:
                continue
            for p in range(F.dim2):
                A[deg3, b * F.dim2 + p] += xi2[k] * W[a, p]
                A[deg3, a * F.dim2 + p] -= xi2[k] * W[b, p]
        A = D.reduce_block((A % l).T).T
        x0 = fp_solve(A, (-r0) % l, l)
        if x0 is None:
            raise VerificationFailedError("relator condition unsolvable; bug")
        K = fp_nullspace(A, l)
        x = x0 if not K.shape[0] else (x0 + rng.integers(0, l, K.shape[0]) @ K) % l
        c2 = x.reshape(F.dim1, F.dim2) % l
        c3 = rng.integers(0, l, (F.dim1, F.dim3))
        gen_images = images(c2, c3)
    M = _lie_extension_matrix(D, gen_images)
    aut = ConstrainedAut(D, T, F.identity, gen_images, 1, M)
    _verify_constrained(D, aut, rng, gamma_equivariant=False)
    return aut


def materialize_gtilde(D: DemushkinTrunc, cap: int = 2048):
    """The truncation as a FiniteGroup plus the coordinate encoding, for small
    instances; the sigma action comes along as a permutation."""
    from .groups import FiniteGroup

    l = D.l
    order = D.gtilde_order()
    if order > cap:
        from .errors import CapExceededError
        raise CapExceededError(f"truncation order {order} exceeds cap {cap}")
    free_cols = [c for c in range(D.F.dim) if c not in D.ideal_pivots]
    k = len(free_cols)

    def decode(idx: int) -> np.ndarray:
        v = np.zeros(D.F.dim, dtype=np.int64)
        for c in free_cols:
            v[c] = idx % l
            idx //= l
        return v

    def encode(v) -> int:
        v = D.reduce(v)
        out = 0
        for c in reversed(free_cols):
            out = out * l + int(v[c])
        return out

    table = np.zeros((order, order), dtype=np.int64)
    elements = [decode(i) for i in range(order)]
    for i, x in enumerate(elements):
        for j, y in enumerate(elements):
            table[i, j] = encode(D.mult(x, y))
    G = FiniteGroup(table, identity=0, name=f"gtilde(n={D.n},l={l},c={D.cls})")
    sigma_perm = np.asarray([encode(D.sigma(x)) for x in elements], dtype=np.int64)
    return G, encode, decode, sigma_perm


# ---------------------------------------------------------------------------
# commutator-layer pairing on stem-extension tables
# ---------------------------------------------------------------------------

def pairing_image(T, gens, lam: int, l: int, n_exp: int):
    """Solve lam = prod [y_i, y_j]^{b_ij} modulo the layer
    [T2,T]*(T2)^l (T2 the commutator subgroup), and assemble the induced
    pairing values as zeta-exponents mod l^n_exp.

    Returns (B, pairing) with B upper-triangular coefficients mod l and
    pairing[i][j] the exponent of the primitive l^n_exp-th root.
    """
    from .groups import (abelianization, commutator_of_subgroups,
                         commutator_subgroup, quotient, subgroup_closure)
    from .cohomology import abelian_subgroup_structure, _kernel_coordinate_map

    if lam not in T.center:
        raise NotCentralError("relator element is not central")
    if subgroup_closure(T, gens) != frozenset(range(T.order)):
        raise NotGeneratingError("the given elements do not generate")
    T2 = commutator_subgroup(T)
    killers = set(commutator_of_subgroups(T, T2, range(T.order)))
    killers |= {T.power(a, l) for a in T2}
    M = subgroup_closure(T, killers)
    Q, pr = quotient(T, M)
    layer = sorted({pr(a) for a in T2})
    st = abelian_subgroup_structure(Q, layer)
    if any(f != l for f in st.factors):
        raise LayerSingularError("layer is not elementary abelian; bad modulus")
    coords = _kernel_coordinate_map(Q, st)

    def layer_coords(qe):
        c = coords.get(qe)
        if c is None:
            raise LayerSingularError("element escapes the commutator layer")
        return np.asarray(c, dtype=np.int64)

    m = len(gens)
    cols = []
    pairs = [(i, j) for i in range(m) for j in range(i + 1, m)]
    for (i, j) in pairs:
        cols.append(layer_coords(pr(T.comm(gens[i], gens[j]))))
    target = layer_coords(pr(lam))
    A = np.asarray(cols, dtype=np.int64).T if cols else np.zeros((len(target), 0),
                                                                 dtype=np.int64)
    x = fp_solve(A, target, l)
    if x is None:
        raise LayerSingularError("relator not expressible in the pair layer")
    B = np.zeros((m, m), dtype=np.int64)
    for k, (i, j) in enumerate(pairs):
        B[i, j] = int(x[k]) % l
    # dual-basis values: y_i^vee(y_i) = zeta^(l^(n-e_i)) for ord l^{e_i} in T^ab
    ab, abproj = abelianization(T)
    mod = l ** n_exp
    s = []
    for g in gens:
        o = int(ab.element_orders[abproj(g)])
        e = 0
        while o > 1:
            o //= l
            e += 1
        if e > n_exp:
            raise LayerSingularError("generator order exceeds the requested modulus")
        s.append(l ** (n_exp - e))
    pairing = np.zeros((m, m), dtype=np.int64)
    for i in range(m):
        for j in range(m):
            if i < j:
                pairing[i, j] = (-int(B[i, j]) * (s[i] + s[j])) % mod
            elif i > j:
                pairing[i, j] = (int(B[j, i]) * (s[i] + s[j])) % mod
    return B, pairing
