"""Named group constructors and spec-string resolution.

Specs: ``cyclic:m``, ``elem_abelian:l^r``, ``heisenberg:l``, ``dihedral:m``,
``semidirect_inversion:l^r``, ``file:PATH`` (JSON ``{"order":n,"mult":[[..]],
"labels":[..]}``).  Gamma-group specs reuse the same names and attach the
standard order-2 inversion action.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import UsageError
from .groups import (
    FiniteGroup,
    GammaGroup,
    GroupHom,
    group_from_json,
    semidirect_product,
)


def cyclic(m: int) -> FiniteGroup:
    idx = np.arange(m)
    table = (idx[:, None] + idx[None, :]) % m
    return FiniteGroup(table, identity=0, name=f"cyclic:{m}",
                       labels=[str(i) for i in range(m)])


def elem_abelian(l: int, r: int) -> FiniteGroup:
    n = l ** r
    idx = np.arange(n)
    digits = np.stack([(idx // l**k) % l for k in range(r)], axis=1)
    table = np.zeros((n, n), dtype=np.int64)
    for a in range(n):
        s = (digits[a] + digits) % l
        table[a] = s @ (l ** np.arange(r))
    return FiniteGroup(table, identity=0, name=f"elem_abelian:{l}^{r}")


def heisenberg(l: int) -> FiniteGroup:
    """Order l^3, exponent l for odd l: triples (a,b,c), (a,b,c)(a',b',c') =
    (a+a', b+b', c+c'+a*b')."""
    n = l ** 3

    def enc(a, b, c):
        return (a % l) * l * l + (b % l) * l + (c % l)

    table = np.zeros((n, n), dtype=np.int64)
    for a in range(l):
        for b in range(l):
            for c in range(l):
                i = enc(a, b, c)
                for a2 in range(l):
                    for b2 in range(l):
                        for c2 in range(l):
                            table[i, enc(a2, b2, c2)] = enc(a + a2, b + b2, c + c2 + a * b2)
    return FiniteGroup(table, identity=0, name=f"heisenberg:{l}")


def dihedral(m: int) -> FiniteGroup:
    """Order 2m: elements r^a s^e indexed a*2+e."""
    n = 2 * m
    table = np.zeros((n, n), dtype=np.int64)
    for a in range(m):
        for e in range(2):
            i = a * 2 + e
            for a2 in range(m):
                for e2 in range(2):
                    if e == 0:
                        na, ne = (a + a2) % m, e2
                    else:
                        na, ne = (a - a2) % m, 1 - e2
                    table[i, a2 * 2 + e2] = na * 2 + ne
    return FiniteGroup(table, identity=0, name=f"dihedral:{m}")


def inversion_action(H: FiniteGroup) -> GammaGroup:
    """The order-2 action sending each element to its inverse (abelian H)."""
    c2 = cyclic(2)
    act = np.stack([np.arange(H.order), H.inv])
    return GammaGroup(H, c2, act)


def heisenberg_inversion_action(l: int) -> GammaGroup:
    """(a,b,c) -> (-a,-b,c): inverts both generators, fixes the center."""
    H = heisenberg(l)
    n = H.order
    img = np.zeros(n, dtype=np.int64)
    for a in range(l):
        for b in range(l):
            for c in range(l):
                img[(a * l + b) * l + c] = (((-a) % l) * l + ((-b) % l)) * l + c
    act = np.stack([np.arange(n), img])
    return GammaGroup(H, cyclic(2), act)


def semidirect_inversion(l: int, r: int):
    """(Z/l)^r x| Z/2 with inversion; returns (G, embed_H, embed_Gamma, proj)."""
    gg = inversion_action(elem_abelian(l, r))
    G, eH, eG, proj = semidirect_product(gg.group, gg.gamma, gg.action)
    G.name = f"semidirect_inversion:{l}^{r}"
    return G, eH, eG, proj


def _parse_power(arg: str) -> tuple[int, int]:
    if "^" in arg:
        l, r = arg.split("^", 1)
        return int(l), int(r)
    return int(arg), 1


def group_from_spec(spec: str) -> FiniteGroup:
    if ":" not in spec:
        raise UsageError(f"bad group spec {spec!r}")
    kind, arg = spec.split(":", 1)
    if kind == "cyclic":
        return cyclic(int(arg))
    if kind == "elem_abelian":
        l, r = _parse_power(arg)
        return elem_abelian(l, r)
    if kind == "heisenberg":
        return heisenberg(int(arg))
    if kind == "dihedral":
        return dihedral(int(arg))
    if kind == "semidirect_inversion":
        l, r = _parse_power(arg)
        return semidirect_inversion(l, r)[0]
    if kind == "file":
        return group_from_json(Path(arg).read_text(), name=spec)
    raise UsageError(f"unknown group family {kind!r}")


def gamma_group_from_spec(spec: str) -> GammaGroup:
    """Gamma = Z/2 inversion-type actions for the catalog families."""
    kind, arg = spec.split(":", 1) if ":" in spec else (spec, "")
    if kind == "cyclic":
        return inversion_action(cyclic(int(arg)))
    if kind == "elem_abelian":
        l, r = _parse_power(arg)
        return inversion_action(elem_abelian(l, r))
    if kind == "heisenberg":
        return heisenberg_inversion_action(int(arg))
    raise UsageError(f"no standard Gamma-action for spec {spec!r}")


def catalog_groups(max_order: int | None = None) -> list[FiniteGroup]:
    """The reference list exercised by the test suite."""
    groups = [
        cyclic(2), cyclic(3), cyclic(4), cyclic(5), cyclic(9),
        elem_abelian(2, 2), elem_abelian(3, 2), elem_abelian(3, 3), elem_abelian(5, 2),
        heisenberg(3),
        dihedral(3), dihedral(4), dihedral(6),
        semidirect_inversion(3, 1)[0], semidirect_inversion(3, 2)[0],
    ]
    if max_order is not None:
        groups = [G for G in groups if G.order <= max_order]
    return groups


def catalog_gamma_groups() -> list[GammaGroup]:
    return [
        inversion_action(cyclic(3)),
        inversion_action(cyclic(9)),
        inversion_action(elem_abelian(3, 2)),
        inversion_action(elem_abelian(5, 2)),
        heisenberg_inversion_action(3),
    ]
