"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -s` to see the per-criterion lines.
Tolerances are pinned here, not deferred: exact criteria assert equality,
statistical criteria assert within 3 standard errors at the pinned sample
counts and seeds.
"""

import time

import numpy as np
import pytest

from cll.catalog import catalog_groups, cyclic, semidirect_inversion
from cll.cohomology import schur_multiplier_l
from cll.hurwitz import (CSetData, b_count, b_count_with_delta,
                         build_fibered_covers, count_frobenius_fixed)
from cll.models import (estimate_moment_y, estimate_moment_z, lie_target,
                        matrix_moment_estimate, orbit_transitivity_check,
                        pi_dagger, prop_target_z)
from cll.nilpotent import (FreeNilGroup, evaluate_word, inversion_relator,
                           relator_matrix, standard_form_matrix,
                           standard_relator)

from oracles import oracle_multiplier_factors

SEED = 20260810
SAMPLES = 100_000


def report(num: int, name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {num} {name}: {status} {detail}")


def test_criterion_1_multiplier_oracle_equivalence():
    t0 = time.time()
    anchors = {
        "cyclic:3": (), "cyclic:9": (), "elem_abelian:3^2": (3,),
        "heisenberg:3": (3, 3), "semidirect_inversion:3^2": (3,),
    }
    ok = True
    details = []
    for G in catalog_groups(81):
        for l in (3, 5):
            got = tuple(schur_multiplier_l(G, l).factors)
            want = tuple(oracle_multiplier_factors(G, l))
            if got != want:
                ok = False
                details.append(f"{G.name} l={l}: {got} != oracle {want}")
            if l == 3 and G.name in anchors and got != anchors[G.name]:
                ok = False
                details.append(f"anchor {G.name}: {got}")
    elapsed = time.time() - t0
    ok = ok and elapsed < 60
    report(1, "multiplier oracle equivalence", ok,
           f"({len(catalog_groups(81))} groups x l in {{3,5}}, {elapsed:.1f}s)"
           + ("; ".join(details) if details else ""))
    assert ok, details


def test_criterion_2_refined_count_equality():
    t0 = time.time()
    data2 = CSetData(cyclic(2), [1])
    ok = True
    for j in (1, 2):
        G, eH, eG, proj = semidirect_inversion(3, j)
        for q in (4, 7):
            fc = build_fibered_covers(G, proj, q)
            for eta in fc.sprime.kernel:
                for n in range(0, 13):
                    lhs = b_count_with_delta(fc, q, n, eta)
                    rhs = b_count(data2, q, n)
                    if lhs != rhs:
                        ok = False
    elapsed = time.time() - t0
    ok = ok and elapsed < 30
    report(2, "refined count equality (both code paths)", ok,
           f"(j=1,2; q=4,7; n<=12; all delta; {elapsed:.1f}s)")
    assert ok


def test_criterion_3_frobenius_fixed_consistency():
    data2 = CSetData(cyclic(2), [1])
    ok = True
    for q in (4, 7):
        for n in range(0, 21):
            ff = count_frobenius_fixed(data2, q, n, 0)
            b = b_count(data2, q, n)
            if ff != b or ff != (1 if n % 2 == 0 else 0):
                ok = False
    report(3, "fixed-count equals parity count for the order-2 base", ok,
           "(q=4,7; 0<=n<=20)")
    assert ok


def test_criterion_4_moment_x_and_y():
    t0 = time.time()
    ok = True
    details = []
    for n in (2, 3, 4):
        res = estimate_moment_y(n, 3, 7, "cyclic:3", samples=SAMPLES, seed=SEED)
        sx = res["x"].sigmas_off(1.0)
        sy = res["y"].sigmas_off(1 / 3)
        details.append(f"n={n}: X={res['x'].mean:.4f}({sx:.1f}s.e.) "
                       f"Y={res['y'].mean:.4f}({sy:.1f}s.e.)")
        if sx > 3 or sy > 3:
            ok = False
    elapsed = time.time() - t0
    ok = ok and elapsed < 600
    report(4, "fixed-quotient moments (X->1, Y->1/3)", ok,
           f"({'; '.join(details)}; {elapsed:.0f}s)")
    assert ok, details


def test_criterion_5_vanishing_case():
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = estimate_moment_y(2, 3, 2, "elem_abelian:3^2", delta_coords=(1,),
                                samples=10_000, seed=SEED)
    ok = res["y"].total_sum == 0 and res["x"].total_sum == 0
    report(5, "vanishing when the invariant order does not divide q-1", ok,
           "(10^4 consecutive samples, every per-sample count zero)")
    assert ok


def _z_run(n, specs):
    return estimate_moment_z(n, 3, specs, samples=SAMPLES, seed=SEED)


@pytest.fixture(scope="module")
def z_estimates():
    t0 = time.time()
    specs = ["cyclic:3", "elem_abelian:3^2", "heisenberg:3"]
    out = {n: _z_run(n, specs) for n in (3, 4, 5)}
    out["elapsed"] = time.time() - t0
    return out


def test_criterion_6a_handle_moment_cyclic(z_estimates):
    spec, target = "cyclic:3", 1
    means = [z_estimates[n][spec].mean for n in (3, 4, 5)]
    est5 = z_estimates[5][spec]
    monotone = means[0] < means[1] < means[2] <= target + 3 * est5.stderr
    off = est5.sigmas_off(target)
    ok = monotone and off <= 3
    report(6, f"handle moments {spec} -> {target}", ok,
           f"(trend {means[0]:.4f} -> {means[1]:.4f} -> {means[2]:.4f}, "
           f"n=5 off {off:.1f}s.e.)")
    assert ok


def test_criterion_6b_handle_moment_elem_abelian(z_estimates):
    spec, target = "elem_abelian:3^2", 3
    means = [z_estimates[n][spec].mean for n in (3, 4, 5)]
    est5 = z_estimates[5][spec]
    monotone = means[0] < means[1] < means[2] <= target + 3 * est5.stderr
    off = est5.sigmas_off(target)
    ok = monotone and off <= 3
    report(6, f"handle moments {spec} -> {target}", ok,
           f"(trend {means[0]:.4f} -> {means[1]:.4f} -> {means[2]:.4f}, "
           f"n=5 off {off:.1f}s.e.)")
    assert ok


def test_criterion_6c_handle_moment_heisenberg(z_estimates):
    """Faithful to the stated target 27.  At l=3 the engine is class-2 by the
    size gating of the truncation (1/12 is not invertible mod 3), and the
    class-2 truncation provably cannot see H_2 of a target whose covering has
    class 3: the truncated limit is |[H,H]| * (class-2-visible part) = 3.
    The criterion is therefore expected to fail honestly; see the decisions
    ledger for the full analysis and the l=5 class-3 sensitivity run."""
    spec, target = "heisenberg:3", 27
    means = [z_estimates[n][spec].mean for n in (3, 4, 5)]
    est5 = z_estimates[5][spec]
    off = est5.sigmas_off(target)
    trunc_limit = 3
    ok = off <= 3
    report(6, f"handle moments {spec} -> {target}", ok,
           f"(trend {means[0]:.3f} -> {means[1]:.3f} -> {means[2]:.3f}; n=5 off "
           f"{off:.0f}s.e.; class-2 truncation limit is {trunc_limit}, "
           f"elapsed total {z_estimates['elapsed']:.0f}s)")
    assert ok, (
        f"expected red: class-2 truncation converges to {trunc_limit}, not "
        f"{target}; measured n-trend {means} (see decisions ledger)")


def test_criterion_7_matrix_cross_check():
    t0 = time.time()
    ok = True
    details = []
    # r = 1: the refined and unrefined counts coincide (trivial kernel)
    g1 = estimate_moment_y(2, 3, 7, "cyclic:3", samples=20_000, seed=SEED)
    m1 = matrix_moment_estimate(2, 3, 7, 1, samples=20_000, seed=SEED)
    diff1 = abs(g1["y"].mean - m1.mean)
    tol1 = 3 * (g1["y"].stderr ** 2 + m1.stderr ** 2) ** 0.5
    exact1 = g1["y"].total_sum == m1.total_sum
    ok &= diff1 <= max(tol1, 1e-12) and exact1
    details.append(f"r=1 diff={diff1:.2e} exact={exact1}")
    # r = 2: sum the refined counts over the three invariant values
    m2 = matrix_moment_estimate(2, 3, 7, 2, samples=20_000, seed=SEED)
    tot = 0
    for c in range(3):
        tot += estimate_moment_y(2, 3, 7, "elem_abelian:3^2", delta_coords=(c,),
                                 samples=20_000, seed=SEED)["y"].total_sum
    exact2 = tot == m2.total_sum
    ok &= exact2
    details.append(f"r=2 exact={exact2}")
    report(7, "group vs matrix estimator on a shared stream", ok,
           f"({'; '.join(details)}; {time.time()-t0:.0f}s)")
    assert ok, details


def test_criterion_8_relator_value_lift_independent():
    tgt = lie_target("elem_abelian:3^2", 3)
    cov = tgt.cover
    T = cov.total
    rng = np.random.default_rng(SEED)
    kernel = list(cov.kernel)
    from cll.linalg import fp_echelon
    ok = True
    count = 0
    while count < 100:
        A = rng.integers(0, 3, (2, 4))
        if len(fp_echelon(A, 3)[1]) != 2:
            continue
        count += 1
        imgs = [tgt.encode(A[:, i]) for i in range(4)]
        want = pi_dagger(tgt, imgs)
        base = [int(cov.section()[tgt.embed_H.map[h]]) for h in imgs]
        for _ in range(100):
            lifts = [T.mul(e, kernel[int(rng.integers(0, len(kernel)))])
                     for e in base]
            out = T.identity
            for e in lifts:
                out = T.mul(out, T.inv_el(e))
            for e in lifts:
                out = T.mul(out, e)
            if out != want:
                ok = False
    report(8, "relator value independent of lift choices", ok,
           "(100 surjections x 100 random lifts, exact)")
    assert ok


def test_criterion_9_relator_matrix_anchors():
    F = FreeNilGroup(8, 2, 3)
    M = relator_matrix(F, standard_relator(F))
    ok = bool(np.array_equal(M, (-standard_form_matrix(8)) % 3))
    Mall = relator_matrix(F, inversion_relator(F))
    for i in range(8):
        for j in range(8):
            want = 0 if i == j else (2 if i < j else 1)
            ok = ok and Mall[i, j] == want
    # coefficient extraction: a_ij = 1 for all i < j on the all-inverses word
    v = evaluate_word(F, "x1~x2~x3~x4~x5~x6~x7~x8~x1x2x3x4x5x6x7x8")
    ok = ok and bool((F.deg2(v) == 1).all())
    report(9, "relator matrix anchors", ok, "(block form and all-ones form)")
    assert ok


def test_criterion_10_orbit_transitivity_exhaustive():
    rep = orbit_transitivity_check(1, 3, 7, "cyclic:3", mode="exhaustive")
    ok = rep["single_orbit_per_invariant"] and rep["surjections"] == 8
    report(10, "single automorphism orbit at the smallest truncation", ok,
           f"({rep['surjections']} surjections, {rep['automorphisms']} "
           f"automorphisms, orbits {rep['orbits_per_invariant']})")
    assert ok
