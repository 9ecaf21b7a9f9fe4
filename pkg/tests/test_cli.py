import csv
import hashlib
import json

import pytest

from hodgelab import cli, verify


def write(tmp_path, name, **cfg):
    cfg.setdefault("version", 1)
    p = tmp_path / name
    p.write_text(json.dumps(cfg, indent=2))
    return str(p)


def run(*argv):
    return cli.main(list(argv))


@pytest.fixture
def spectrum_cfg(tmp_path):
    return write(tmp_path, "s.json", experiment="spectrum", n=2, N=16, metric={"kind": "flat"}, seed=1)


def test_spectrum_flat_t2(tmp_path, spectrum_cfg):
    out = tmp_path / "out"
    assert run("spectrum", "--config", spectrum_cfg, "--out", str(out)) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["kernel_dim"] == 2
    rows = list(csv.reader((out / "spectrum.csv").open()))
    assert rows[0] == ["j", "mu_j"] and len(rows) > 100


def test_spectrum_deterministic(tmp_path, spectrum_cfg):
    blobs = []
    for d in ("a", "b"):
        assert run("spectrum", "--config", spectrum_cfg, "--out", str(tmp_path / d)) == 0
        blobs.append((tmp_path / d / "spectrum.csv").read_bytes())
    assert blobs[0] == blobs[1]
    assert b"\r" not in blobs[0]


def test_manifest_lists_artifacts(tmp_path, spectrum_cfg):
    out = tmp_path / "out"
    run("spectrum", "--config", spectrum_cfg, "--out", str(out))
    man = json.loads((out / "manifest.json").read_text())
    assert {a["path"] for a in man["artifacts"]} == {"report.json", "spectrum.csv"}
    for a in man["artifacts"]:
        assert hashlib.sha256((out / a["path"]).read_bytes()).hexdigest() == a["sha256"]
    assert man["config_hash"] == hashlib.sha256(man["config"].encode()).hexdigest()
    assert man["status"] == "complete" and man["verdicts"]["kernel_dim"] == "PASS"


def test_malformed_config_leaves_nothing(tmp_path, capsys):
    cfg = write(tmp_path, "bad.json", experiment="spectrum", N=8)
    out = tmp_path / "out"
    assert run("spectrum", "--config", cfg, "--out", str(out)) == 1
    assert not out.exists()
    assert "missing required key 'n'" in capsys.readouterr().err


def test_missing_config_is_error(tmp_path):
    assert run("spectrum", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")) == 1
    assert run("spectrum", "--out", str(tmp_path / "o")) == 1


def test_command_must_match_config(tmp_path, spectrum_cfg):
    assert run("decay", "--config", spectrum_cfg, "--out", str(tmp_path / "o")) == 1


def test_decay_flat(tmp_path):
    cfg = write(tmp_path, "d.json", experiment="decay", n=2, N=[16, 32], metric={"kind": "flat"})
    out = tmp_path / "out"
    assert run("decay", "--config", cfg, "--out", str(out)) == 0
    summ = json.loads((out / "summary.json").read_text())
    for row in summ["rows"]:
        assert abs(row["slope"] + 0.5) <= 0.15
    assert (out / "decay_N16.csv").exists() and (out / "decay_N32.csv").exists()
    assert len(summ["refinement"]) == 1


def test_decay_threads_do_not_change_bytes(tmp_path, monkeypatch):
    cfg = write(tmp_path, "d.json", experiment="decay", n=2, N=[16, 24], metric={"kind": "random", "p_int": 3})
    run("decay", "--config", cfg, "--out", str(tmp_path / "a"))
    monkeypatch.setenv("LAB_THREADS", "2")
    run("decay", "--config", cfg, "--out", str(tmp_path / "b"))
    for name in ("decay_N16.csv", "decay_N24.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_decay_verdict_failure_exits_2(tmp_path):
    cfg = write(tmp_path, "d.json", experiment="decay", n=2, N=[16, 32], metric={"kind": "flat"}, tolerance=0.0)
    assert run("decay", "--config", cfg, "--out", str(tmp_path / "o")) == 2


def test_decay_synthetic_oracle(tmp_path):
    cfg = write(tmp_path, "o.json", experiment="decay", n=3, N=[8], metric={"kind": "flat"},
                ledger={"source": "quasiconformal", "p": 6}, synthetic_oracle=True, count=1000)
    out = tmp_path / "out"
    assert run("decay", "--config", cfg, "--out", str(out)) == 0
    row = json.loads((out / "summary.json").read_text())["rows"][0]
    assert row["oracle_error"] < 1e-6


def test_decay_rough_carries_ledger(tmp_path):
    cfg = write(tmp_path, "r.json", experiment="decay", n=3, N=[6, 8],
                metric={"kind": "conformal", "beta": 0.4, "p_int": 7}, ledger={"source": "lp_derivable", "p": 7})
    out = tmp_path / "out"
    assert run("decay", "--config", cfg, "--out", str(out)) in (0, 2)
    summ = json.loads((out / "summary.json").read_text())
    assert summ["n_g"] == pytest.approx(21.0) and summ["ledger"]["source"] == "lp_derivable"
    assert set(summ["verdicts"].values()) <= {"PASS", "FAIL"}


def test_decay_solver_failure_leaves_partial_manifest(tmp_path, monkeypatch):
    cfg = write(tmp_path, "d.json", experiment="decay", n=2, N=[8, 16], metric={"kind": "flat"}, count=60)
    real = cli.singular_values

    def flaky(asm, **kw):
        if asm.grid.N == 16:
            raise cli.LabError("solver blew up")
        return real(asm, **kw)

    monkeypatch.setattr(cli, "singular_values", flaky)
    out = tmp_path / "out"
    assert run("decay", "--config", cfg, "--out", str(out)) == 1
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "aborted" and [a["path"] for a in man["artifacts"]] == ["decay_N8.csv"]


def test_exponents_lp(tmp_path, capsys):
    assert run("exponents", "--kind", "lp", "--n", "3", "--p", "7", "--out", str(tmp_path)) == 0
    table = capsys.readouterr().out
    assert "2.8" in table and "1.55556" in table and "admissible                       True" in table
    d = json.loads((tmp_path / "exponents.json").read_text())
    assert d["p_m"] == pytest.approx(2.8) and d["q_m1"] == pytest.approx(14 / 9)


def test_exponents_threshold_violation(tmp_path, capsys):
    assert run("exponents", "--kind", "lp", "--n", "3", "--p", "6", "--out", str(tmp_path)) == 2
    assert "p > n(n+1)/2 violated: 6 ≤ 6" in capsys.readouterr().out


def test_exponents_qc_json(tmp_path, capsys):
    assert run("exponents", "--kind", "qc", "--n", "3", "--p", "6", "--json", "--out", str(tmp_path)) == 0
    assert json.loads(capsys.readouterr().out)["n_g"] == pytest.approx(6.0)


def test_exponents_from_config(tmp_path):
    cfg = write(tmp_path, "e.json", experiment="exponents", n=3, ledger={"source": "lp_derivable", "p": 7})
    assert run("exponents", "--config", cfg, "--out", str(tmp_path / "o")) == 0


def test_homotopy_constant_rows(tmp_path):
    cfg = write(tmp_path, "h.json", experiment="homotopy", n=2, N=8, metric={"kind": "flat"},
                homotopy={"steps": 3, "metric1": {"kind": "flat"}})
    out = tmp_path / "out"
    assert run("homotopy", "--config", cfg, "--out", str(out)) == 0
    rows = list(csv.reader((out / "path.csv").open()))[1:]
    assert all(r[1:] == rows[0][1:] for r in rows)


def test_homotopy_flat_to_conformal(tmp_path):
    cfg = write(tmp_path, "h.json", experiment="homotopy", n=2, N=8, metric={"kind": "flat"},
                homotopy={"steps": 5, "metric1": {"kind": "conformal", "beta": 0.4}})
    out = tmp_path / "out"
    assert run("homotopy", "--config", cfg, "--out", str(out)) == 0
    rows = list(csv.reader((out / "path.csv").open()))
    assert rows[0][:3] == ["t", "n_g_t", "kernel_dim"]
    assert {r[2] for r in rows[1:]} == {"2"}
    assert json.loads((out / "verdict.json").read_text())["verdict"] == "PASS"


def test_verify_perturb_star(tmp_path, capsys, monkeypatch):
    small = lambda perturb_star=False: verify.run_suite(perturb_star, resolutions=(8,), dims=(2,))
    monkeypatch.setattr(cli, "run_suite", small)
    assert run("verify", "--out", str(tmp_path / "ok")) == 0
    capsys.readouterr()
    assert run("verify", "--perturb-star", "--json", "--out", str(tmp_path / "bad")) == 2
    summ = json.loads(capsys.readouterr().out)
    failed = {c["name"] for c in summ["checks"] if not c["passed"]}
    assert "tau o tau = id (n=2, N=8)" in failed


def test_seed_must_be_u64(tmp_path, spectrum_cfg):
    assert run("spectrum", "--config", spectrum_cfg, "--seed", "-1", "--out", str(tmp_path / "o")) == 1
