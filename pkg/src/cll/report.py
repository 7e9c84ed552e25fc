"""Figure rendering for result records: estimates with error bands against
their targets, and count tables.  Files land next to the delimited output."""

from __future__ import annotations

from pathlib import Path


def _plt():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def render_results_report(records: list[dict], outdir: Path) -> list[Path]:
    """PNG figures + a CSV projection for a list of JSONL records."""
    outdir.mkdir(parents=True, exist_ok=True)
    out: list[Path] = []
    moments = [r for r in records if r.get("command") in ("moment-y", "moment-z")]
    counts = [r for r in records if r.get("command") in ("hurwitz-b", "hurwitz-fixed")]
    csv = outdir / "results.csv"
    lines = ["command,n,ell,q,H,mean_or_count,stderr,target"]
    for r in records:
        cfg = r.get("config", {})
        res = r.get("result", {})
        lines.append(",".join(str(x) for x in [
            r.get("command", ""), cfg.get("n", ""), cfg.get("ell", ""),
            cfg.get("q", ""), cfg.get("H", cfg.get("group", "")),
            res.get("mean", res.get("count", "")), res.get("stderr", ""),
            r.get("target", res.get("limit_target", "")),
        ]))
    csv.write_text("\n".join(lines) + "\n")
    out.append(csv)
    if moments:
        plt = _plt()
        fig, ax = plt.subplots(figsize=(7, 4.5))
        xs, ys, es, labels, targets = [], [], [], [], []
        for i, r in enumerate(moments):
            cfg, res = r["config"], r["result"]
            xs.append(i)
            ys.append(res["mean"])
            es.append(3 * res.get("stderr", 0.0))
            labels.append(f"{r['command']}\nn={cfg.get('n')} H={cfg.get('H')}")
            targets.append(r.get("target", res.get("limit_target")))
        ax.errorbar(xs, ys, yerr=es, fmt="o", capsize=4, label="estimate (3 s.e.)")
        tx = [i for i, t in enumerate(targets) if t is not None]
        if tx:
            ax.plot(tx, [targets[i] for i in tx], "kx", markersize=9, label="target")
        ax.set_xticks(xs)
        ax.set_xticklabels(labels, fontsize=7)
        ax.set_ylabel("moment")
        ax.legend()
        fig.tight_layout()
        f = outdir / "moments.png"
        fig.savefig(f, dpi=150)
        plt.close(fig)
        out.append(f)
    if counts:
        plt = _plt()
        fig, ax = plt.subplots(figsize=(7, 4))
        ns = [r["config"].get("n", 0) for r in counts]
        cs = [r["result"]["count"] for r in counts]
        kinds = [r["command"] for r in counts]
        for kind in sorted(set(kinds)):
            sel = [(n, c) for n, c, k in zip(ns, cs, kinds) if k == kind]
            sel.sort()
            ax.plot([s[0] for s in sel], [s[1] for s in sel], "o-", label=kind)
        ax.set_xlabel("n")
        ax.set_ylabel("count")
        ax.legend()
        fig.tight_layout()
        f = outdir / "counts.png"
        fig.savefig(f, dpi=150)
        plt.close(fig)
        out.append(f)
    return out


def render_regression_figures(report: dict, outdir: Path) -> list[Path]:
    """Pass/fail summary and estimate offsets for a regression report."""
    outdir.mkdir(parents=True, exist_ok=True)
    plt = _plt()
    entries = report["entries"]
    fig, ax = plt.subplots(figsize=(7, 3.5))
    idx = list(range(len(entries)))
    offs = [e.get("sigmas_off", 0.0) for e in entries]
    colors = ["tab:green" if e["pass"] else "tab:red" for e in entries]
    ax.bar(idx, offs, color=colors)
    ax.axhline(3.0, color="k", linestyle="--", linewidth=1, label="3 s.e. gate")
    ax.set_xlabel("manifest entry")
    ax.set_ylabel("standard errors off target")
    ax.legend()
    fig.tight_layout()
    f = outdir / "regression.png"
    fig.savefig(f, dpi=150)
    plt.close(fig)
    return [f]
