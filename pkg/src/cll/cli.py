"""Command-line batch driver: group resolution, deterministic seeding, result
persistence (JSON lines with CSV projection), and regression comparison
against stored targets."""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
import time
from pathlib import Path

from . import catalog
from .errors import CllError, UsageError
from .groups import FiniteGroup


def _group(spec: str) -> FiniteGroup:
    return catalog.group_from_spec(spec)


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def append_jsonl(path: Path | None, record: dict) -> None:
    if path is None:
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    line = json.dumps(record, sort_keys=True) + "\n"
    # single write call keeps the append atomic for practical line sizes
    with open(path, "a") as f:
        f.write(line)
        f.flush()
        os.fsync(f.fileno())


def make_record(command: str, cfg: dict, result: dict, target=None,
                provenance: str | None = None) -> dict:
    rec = {
        "command": command,
        "config": cfg,
        "config_hash": config_hash({"command": command, **cfg}),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "result": result,
    }
    if target is not None:
        rec["target"] = target
        rec["provenance"] = provenance or ""
        if "mean" in result and "stderr" in result and result["stderr"]:
            rec["sigmas_off"] = abs(result["mean"] - target) / result["stderr"]
        elif "count" in result:
            rec["sigmas_off"] = 0.0 if result["count"] == target else float("inf")
    return rec


def _threads(args) -> int:
    env = os.environ.get("CLL_THREADS")
    if args.threads is not None:
        return args.threads
    if env:
        return int(env)
    return 1


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_schur(args) -> dict:
    from .cohomology import h2, schur_multiplier_l
    G = _group(args.group)
    st = schur_multiplier_l(G, args.ell)
    out = {"group": args.group, "group_hash": G.canonical_hash,
           "factors": list(st.factors), "order": st.order}
    if args.cocycles:
        stc, reps = h2(G, args.ell, args.h2_power)
        payload = {"modulus": args.ell ** args.h2_power,
                   "class_orders": list(stc.factors),
                   "tables": [c.values.tolist() for c in reps]}
        atomic_write_text(Path(args.cocycles), json.dumps(payload))
        out["cocycles_file"] = args.cocycles
    return out


def _cset(G: FiniteGroup, spec: str):
    if spec == "nontrivial":
        return frozenset(x for x in range(G.order) if x != G.identity)
    if spec.startswith("order:"):
        k = int(spec.split(":", 1)[1])
        return frozenset(x for x in range(G.order) if int(G.element_orders[x]) == k)
    if spec == "involutions":
        return frozenset(x for x in range(G.order) if int(G.element_orders[x]) == 2)
    raise UsageError(f"unknown conjugation-set spec {spec!r}")


def cmd_cover(args) -> dict:
    from .cohomology import l_schur_cover, reduced_schur_cover
    G = _group(args.group)
    if args.reduced_c:
        ext = reduced_schur_cover(G, _cset(G, args.reduced_c))
    else:
        ext = l_schur_cover(G, args.ell)
    return {"group": args.group, "total_order": ext.total.order,
            "kernel": list(ext.kernel_structure.factors),
            "stem": ext.stem_verified, "central": ext.central_verified,
            "total_hash": ext.total.canonical_hash}


def cmd_lifting_invariant(args) -> dict:
    from .cohomology import l_schur_cover, lifting_invariant
    G = _group(args.group)
    ext = l_schur_cover(G, args.ell)
    tup = [int(x) for x in args.tuple.split(",")]
    val = lifting_invariant(ext, tup)
    return {"group": args.group, "tuple": tup, "value": int(val),
            "kernel_coords": list(map(int, ext.kernel_coords(val)))}


def cmd_hurwitz_b(args) -> dict:
    from .hurwitz import CSetData, b_count, b_count_with_delta, build_fibered_covers, d_gcq
    if args.delta is not None:
        gammaspec = args.gamma or "cyclic:2"
        if gammaspec != "cyclic:2":
            raise UsageError("delta-refined counts assume Gamma = cyclic:2")
        if not args.group.startswith("semidirect_inversion:"):
            raise UsageError("delta-refined counts need a semidirect_inversion group")
        l, r = args.group.split(":")[1].split("^") if "^" in args.group.split(":")[1] \
            else (args.group.split(":")[1], "1")
        G, eH, eG, proj = catalog.semidirect_inversion(int(l), int(r))
        fc = build_fibered_covers(G, proj, args.q)
        coords = [int(x) for x in args.delta.split(",")] if args.delta else []
        eta = fc.sprime.kernel_element(coords) if coords else fc.sprime.total.identity
        count = b_count_with_delta(fc, args.q, args.n, eta)
        return {"count": count, "d": d_gcq(fc.data, args.q),
                "orbit_data": [len(o) for o in fc.data.q_orbits(args.q)],
                "seed_free": True}
    G = _group(args.group)
    data = CSetData(G, _cset(G, args.cset))
    return {"count": b_count(data, args.q, args.n), "d": d_gcq(data, args.q),
            "orbit_data": [len(o) for o in data.q_orbits(args.q)],
            "seed_free": True}


def cmd_hurwitz_fixed(args) -> dict:
    from .hurwitz import CSetData, count_frobenius_fixed, d_gcq
    G = _group(args.group)
    data = CSetData(G, _cset(G, args.cset))
    return {"count": count_frobenius_fixed(data, args.q, args.n, args.min),
            "d": d_gcq(data, args.q),
            "orbit_data": [len(o) for o in data.q_orbits(args.q)],
            "seed_free": True}


def cmd_relator_matrix(args) -> dict:
    from .nilpotent import FreeNilGroup, evaluate_word, relator_matrix
    F = FreeNilGroup(2 * args.n, args.cls, args.ell)
    word = args.word or "".join(f"[x{2*i+1},x{2*i+2}]" for i in range(args.n))
    v = evaluate_word(F, word)
    M = relator_matrix(F, v)
    return {"word": word, "matrix": M.tolist()}


def cmd_pairing_image(args) -> dict:
    from .nilpotent import pairing_image
    G = _group(args.group)
    gens = [int(x) for x in args.gens.split(",")]
    B, pairing = pairing_image(G, gens, int(args.lam), args.ell, args.n_exp)
    return {"b_matrix": B.tolist(), "pairing_exponents": pairing.tolist()}


def lie_target_ratio(spec: str, l: int) -> int:
    """[H : H^Gamma] for the catalog inversion targets."""
    from .models import lie_target
    from .groups import fixed_subgroup
    return fixed_subgroup(lie_target(spec, l).gamma_group)[1]


def cmd_moment_y(args) -> dict:
    from .models import estimate_moment_y
    coords = tuple(int(x) for x in args.delta.split(",")) if args.delta else ()
    res = estimate_moment_y(args.n, args.ell, args.q, args.H, coords,
                            samples=args.samples, seed=args.seed,
                            threads=_threads(args), cls=args.cls)
    tgt = lie_target_ratio(args.H, args.ell)
    target = (1.0 / tgt) if res["delta_order_ok"] else 0.0
    return {"y": res["y"].as_dict(), "x": res["x"].as_dict(),
            "paired_mean": res["paired"].mean,
            "delta_order_ok": res["delta_order_ok"],
            "mean": res["y"].mean, "stderr": res["y"].stderr,
            "samples": args.samples, "seed": args.seed,
            "target": target,
            "sigmas_off": res["y"].sigmas_off(target)}


def cmd_moment_z(args) -> dict:
    from .models import estimate_moment_z, prop_target_z
    res = estimate_moment_z(args.n, args.ell, args.H, samples=args.samples,
                            seed=args.seed, threads=_threads(args), cls=args.cls)
    est = res[args.H]
    target = prop_target_z(args.H, args.ell)
    return {"mean": est.mean, "stderr": est.stderr, "samples": args.samples,
            "seed": args.seed, "limit_target": target, "target": target,
            "sigmas_off": est.sigmas_off(target)}


def cmd_orbit_check(args) -> dict:
    from .models import orbit_transitivity_check
    return orbit_transitivity_check(args.n, args.ell, args.q, args.H,
                                    mode=args.mode, pairs=args.pairs,
                                    seed=args.seed)


def _provenance_target(rec: dict):
    return rec.get("target"), rec.get("provenance")


def cmd_regress(args) -> dict:
    manifest = json.loads(Path(args.manifest).read_text())
    report = []
    failures = 0
    parser = build_parser()
    for entry in manifest.get("entries", []):
        argv = entry["argv"]
        ns = parser.parse_args(argv)
        result = ns.func(ns)
        row = {"argv": argv, "result": result}
        if "target_count" in entry:
            ok = result.get("count") == entry["target_count"]
            row.update({"target": entry["target_count"], "pass": ok,
                        "kind": "exact"})
        elif "target_mean" in entry:
            sig = entry.get("sigmas", 3.0)
            mean, err = result["mean"], result["stderr"]
            ok = abs(mean - entry["target_mean"]) <= sig * err
            row.update({"target": entry["target_mean"], "pass": bool(ok),
                        "kind": "estimate",
                        "sigmas_off": abs(mean - entry["target_mean"]) / err if err else 0.0})
        else:
            row.update({"pass": True, "kind": "run-only"})
        row["provenance"] = entry.get("provenance", "")
        if not row["pass"]:
            failures += 1
        report.append(row)
    out = {"entries": report, "failures": failures, "total": len(report)}
    if args.out:
        atomic_write_text(Path(args.out), json.dumps(out, indent=2, sort_keys=True))
        csv_path = Path(args.out).with_suffix(".csv")
        lines = ["kind,pass,target,value,provenance"]
        for row in report:
            val = row["result"].get("count", row["result"].get("mean", ""))
            lines.append(f"{row['kind']},{row['pass']},{row.get('target','')},{val},"
                         f"\"{row['provenance']}\"")
        atomic_write_text(csv_path, "\n".join(lines) + "\n")
        if args.figures:
            from .report import render_regression_figures
            render_regression_figures(out, Path(args.out).parent)
    return out


def cmd_report(args) -> dict:
    from .report import render_results_report
    records = []
    for line in Path(args.results).read_text().splitlines():
        if line.strip():
            records.append(json.loads(line))
    outdir = Path(args.outdir)
    files = render_results_report(records, outdir)
    return {"records": len(records), "figures": [str(f) for f in files]}


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cll", description=__doc__)
    p.add_argument("--out", help="append the result record to this JSONL file")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, **kw):
        sp = sub.add_parser(name, **kw)
        sp.set_defaults(func=fn)
        return sp

    sp = add("schur", cmd_schur, help="l-part of the Schur multiplier")
    sp.add_argument("--group", required=True)
    sp.add_argument("--ell", type=int, required=True)
    sp.add_argument("--cocycles", help="export basis cocycle tables as JSON here")
    sp.add_argument("--h2-power", dest="h2_power", type=int, default=1,
                    help="coefficient modulus exponent for the export")

    sp = add("cover", cmd_cover, help="stem covering (l-part or reduced)")
    sp.add_argument("--group", required=True)
    sp.add_argument("--ell", type=int, default=3)
    sp.add_argument("--reduced-c", dest="reduced_c",
                    help="conjugation-set spec: involutions | order:k | nontrivial")

    sp = add("lifting-invariant", cmd_lifting_invariant,
             help="product of unique same-order lifts of a product-one tuple")
    sp.add_argument("--group", required=True)
    sp.add_argument("--ell", type=int, required=True)
    sp.add_argument("--tuple", required=True, help="comma-separated element indices")

    sp = add("hurwitz-b", cmd_hurwitz_b, help="component-count formula")
    sp.add_argument("--group", required=True)
    sp.add_argument("--gamma")
    sp.add_argument("--cset", default="involutions")
    sp.add_argument("--q", type=int, required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--delta", help="kernel coordinates for the refined count")

    sp = add("hurwitz-fixed", cmd_hurwitz_fixed, help="fixed kernel/vector pairs")
    sp.add_argument("--group", required=True)
    sp.add_argument("--cset", default="involutions")
    sp.add_argument("--q", type=int, required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--min", type=int, default=0)

    sp = add("relator-matrix", cmd_relator_matrix, help="antisymmetric relator matrix")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--ell", type=int, required=True)
    sp.add_argument("--cls", type=int, default=2)
    sp.add_argument("--word", help="word spec, e.g. [x1,x2][x3,x4]")

    sp = add("pairing-image", cmd_pairing_image, help="commutator-layer pairing")
    sp.add_argument("--group", required=True)
    sp.add_argument("--gens", required=True)
    sp.add_argument("--lam", required=True)
    sp.add_argument("--ell", type=int, required=True)
    sp.add_argument("--n-exp", dest="n_exp", type=int, default=1)

    sp = add("moment-y", cmd_moment_y, help="fixed-quotient moment estimate")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--ell", type=int, required=True)
    sp.add_argument("--q", type=int, required=True)
    sp.add_argument("--H", required=True)
    sp.add_argument("--delta")
    sp.add_argument("--samples", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", type=int)
    sp.add_argument("--cls", type=int, default=2)

    sp = add("moment-z", cmd_moment_z, help="handle-quotient moment estimate")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--ell", type=int, required=True)
    sp.add_argument("--H", required=True)
    sp.add_argument("--samples", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", type=int)
    sp.add_argument("--cls", type=int, default=2)

    sp = add("orbit-check", cmd_orbit_check, help="orbit transitivity report")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--ell", type=int, required=True)
    sp.add_argument("--q", type=int, required=True)
    sp.add_argument("--H", required=True)
    sp.add_argument("--mode", default="auto",
                    choices=["auto", "exhaustive", "constructive"])
    sp.add_argument("--pairs", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)

    sp = add("regress", cmd_regress, help="rerun a manifest and compare targets")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", dest="out", help="write report JSON (+ CSV) here")
    sp.add_argument("--figures", action="store_true",
                    help="render figures next to the report")

    sp = add("report", cmd_report, help="render figures from a JSONL result file")
    sp.add_argument("--results", required=True)
    sp.add_argument("--outdir", required=True)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    try:
        result = args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except CllError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    cfg = {k: v for k, v in vars(args).items()
           if k not in ("func", "out") and v is not None}
    record = make_record(args.command, cfg, result)
    print(json.dumps(record, sort_keys=True))
    if getattr(args, "out", None) and args.command != "regress":
        append_jsonl(Path(args.out), record)
    if args.command == "regress" and result.get("failures", 0) > 0:
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
