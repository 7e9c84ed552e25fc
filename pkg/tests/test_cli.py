import json

from cll.cli import config_hash, main


def run_cli(argv, capsys):
    code = main(argv)
    out = capsys.readouterr().out.strip().splitlines()
    rec = json.loads(out[-1]) if out else {}
    return code, rec


def test_schur_command(capsys):
    code, rec = run_cli(["schur", "--group", "heisenberg:3", "--ell", "3"], capsys)
    assert code == 0
    assert rec["result"]["factors"] == [3, 3]


def test_cover_and_reduced(capsys):
    code, rec = run_cli(["cover", "--group", "semidirect_inversion:3^2",
                         "--ell", "3"], capsys)
    assert code == 0 and rec["result"]["total_order"] == 54
    code, rec = run_cli(["cover", "--group", "semidirect_inversion:3^2",
                         "--reduced-c", "involutions"], capsys)
    assert code == 0 and rec["result"]["kernel"] == [3]


def test_hurwitz_commands(capsys):
    code, rec = run_cli(["hurwitz-b", "--group", "cyclic:2", "--cset",
                         "nontrivial", "--q", "7", "--n", "5"], capsys)
    assert code == 0 and rec["result"]["count"] == 0
    code, rec = run_cli(["hurwitz-b", "--group", "semidirect_inversion:3^2",
                         "--q", "7", "--n", "6", "--delta", "1"], capsys)
    assert code == 0 and rec["result"]["count"] == 1
    code, rec = run_cli(["hurwitz-fixed", "--group", "cyclic:2", "--cset",
                         "nontrivial", "--q", "7", "--n", "8", "--min", "0"],
                        capsys)
    assert code == 0 and rec["result"]["count"] == 1


def test_relator_and_moment(tmp_path, capsys):
    out = tmp_path / "results.jsonl"
    code, rec = run_cli(["--out", str(out), "relator-matrix", "--n", "2",
                         "--ell", "3"], capsys)
    assert code == 0
    assert rec["result"]["matrix"][0][1] == 2
    code, rec = run_cli(["--out", str(out), "moment-z", "--n", "2", "--ell", "3",
                         "--H", "cyclic:3", "--samples", "500", "--seed", "4"],
                        capsys)
    assert code == 0 and rec["result"]["limit_target"] == 1
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 2
    for line in lines:
        json.loads(line)


def test_usage_and_compute_errors(capsys):
    code, _ = run_cli(["schur", "--group", "nonsense:1", "--ell", "3"], capsys)
    assert code == 1
    code, _ = run_cli(["schur", "--group", "cyclic:3"], capsys)
    assert code == 1  # missing --ell
    code, _ = run_cli(["moment-y", "--n", "2", "--ell", "3", "--q", "3",
                       "--H", "cyclic:3", "--samples", "10"], capsys)
    assert code == 1  # q not invertible mod l -> usage error


def test_regress_manifest(tmp_path, capsys):
    manifest = {
        "entries": [
            {"argv": ["hurwitz-b", "--group", "cyclic:2", "--cset", "nontrivial",
                      "--q", "7", "--n", "4"],
             "target_count": 1, "provenance": "parity"},
            {"argv": ["schur", "--group", "elem_abelian:3^2", "--ell", "3"]},
        ]
    }
    mpath = tmp_path / "manifest.json"
    mpath.write_text(json.dumps(manifest))
    rpath = tmp_path / "report.json"
    code, rec = run_cli(["regress", "--manifest", str(mpath), "--out", str(rpath)],
                        capsys)
    assert code == 0
    report = json.loads(rpath.read_text())
    assert report["failures"] == 0 and report["total"] == 2
    assert rpath.with_suffix(".csv").exists()
    # a deliberately wrong target fails only its own entry, exit code 3
    manifest["entries"][0]["target_count"] = 5
    mpath.write_text(json.dumps(manifest))
    code, rec = run_cli(["regress", "--manifest", str(mpath), "--out", str(rpath)],
                        capsys)
    assert code == 3
    report = json.loads(rpath.read_text())
    assert report["failures"] == 1
    # empty manifest passes
    mpath.write_text(json.dumps({"entries": []}))
    code, rec = run_cli(["regress", "--manifest", str(mpath)], capsys)
    assert code == 0


def test_report_figures(tmp_path, capsys):
    out = tmp_path / "r.jsonl"
    run_cli(["--out", str(out), "moment-z", "--n", "2", "--ell", "3",
             "--H", "cyclic:3", "--samples", "300", "--seed", "1"], capsys)
    run_cli(["--out", str(out), "hurwitz-b", "--group", "cyclic:2", "--cset",
             "nontrivial", "--q", "7", "--n", "4"], capsys)
    figdir = tmp_path / "figs"
    code, rec = run_cli(["report", "--results", str(out), "--outdir",
                         str(figdir)], capsys)
    assert code == 0
    assert (figdir / "moments.png").exists()
    assert (figdir / "counts.png").exists()
    assert (figdir / "results.csv").exists()


def test_config_hash_stable():
    a = config_hash({"x": 1, "y": [1, 2]})
    b = config_hash({"y": [1, 2], "x": 1})
    assert a == b


def test_determinism_across_invocations(capsys):
    args = ["moment-y", "--n", "1", "--ell", "3", "--q", "7", "--H", "cyclic:3",
            "--samples", "400", "--seed", "9"]
    _, rec1 = run_cli(args, capsys)
    _, rec2 = run_cli(args, capsys)
    r1 = dict(rec1["result"])
    r2 = dict(rec2["result"])
    assert r1 == r2
