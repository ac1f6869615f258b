import csv
import subprocess
import sys

import pytest

from qfidsus import cli
from qfidsus.config import ConfigError, RunConfig, apply, from_env, load, parse_text


def rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# config ------------------------------------------------------------------


def test_defaults():
    cfg = RunConfig()
    assert cfg.r_values == tuple(round(0.5 + 0.1 * k, 10) for k in range(10))
    assert cfg.n_trials == 20 and cfg.n_max == 4
    assert RunConfig(estimator="mitigated").n_trials == 100
    assert RunConfig(L=6).n_max == 3


def test_round_trip():
    cfg = RunConfig(L=6, estimator="mitigated", scale_factors=(1, 3, 5), folding="cnot", p2=0.01, r_step=0.3)
    again = apply(RunConfig(), parse_text(cfg.to_text()))
    assert again == cfg and again.hash == cfg.hash


def test_hash_ignores_out_only():
    assert RunConfig(out="a").hash == RunConfig(out="b").hash
    assert RunConfig(master_seed=1).hash != RunConfig().hash


@pytest.mark.parametrize("text", ["bogus = 1", "L = 5", "estimator = magic", "shots = x", "L 4",
                                  "scale_factors = 1,2", "folding = global", "r_step = -1"])
def test_rejects(text):
    with pytest.raises(ConfigError):
        apply(RunConfig(), parse_text(text))


def test_comments_and_blank_lines():
    assert parse_text("# hi\n\nL = 6  # six\n") == {"L": "6"}


def test_env_and_precedence(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("L = 6\nshots = 100\ntrials = 3\n")
    env = {"QFIDSUS_SHOTS": "200", "QFIDSUS_DISABLE_NUMBA": "1", "HOME": "/x"}
    cfg = load(str(f), {"trials": "4"}, env)
    assert (cfg.L, cfg.shots, cfg.trials) == (6, 200, 4)
    with pytest.raises(ConfigError):
        from_env({"QFIDSUS_NOPE": "1"})
    with pytest.raises(ConfigError):
        load(str(tmp_path / "missing.cfg"))


# commands ----------------------------------------------------------------


def test_print_config(capsys):
    assert cli.main(["--print-config", "--set", "L=6"]) == 0
    out = capsys.readouterr().out
    assert "L = 6\n" in out and "master_seed = 1234\n" in out


def test_config_errors_exit_2(tmp_path):
    assert cli.main(["sweep", "--set", "nope=1", "--out", str(tmp_path)]) == 2
    assert cli.main(["sweep", "--L", "5", "--out", str(tmp_path)]) == 2
    assert cli.main(["reduce", "--L", "3", "--out", str(tmp_path)]) == 2
    assert cli.main(["sweep", "--jobs", "0", "--out", str(tmp_path)]) == 2


def test_reduce(tmp_path, capsys):
    assert cli.main(["reduce", "--L", "6", "--out", str(tmp_path)]) == 0
    assert "8 composite states" in capsys.readouterr().out
    assert cli.main(["reduce", "--L", "4", "--out", str(tmp_path)]) == 0
    got = {(r["part"], r["pauli"]): float(r["coefficient"]) for r in rows(tmp_path / "reduce_L4.csv")}
    assert got[("H1", "ZI")] == -2.0 and len(got) == 8


def test_oracle_and_vqe(tmp_path):
    assert cli.main(["oracle", "--out", str(tmp_path)]) == 0
    assert cli.main(["vqe", "--out", str(tmp_path)]) == 0
    o = rows(tmp_path / "oracle_L4.csv")
    v = rows(tmp_path / "vqe_L4.csv")
    assert len(o) == len(v) == 10
    assert all(float(r["abs_err"]) < 1e-8 for r in v)


def test_sweep_exact(tmp_path):
    assert cli.main(["sweep", "--out", str(tmp_path)]) == 0
    summary = rows(tmp_path / "sweep_L4_exact.csv")
    assert list(summary[0]) == list(cli.SUMMARY_COLUMNS)
    assert len(summary) == 30
    for r in summary:
        assert r["std"] == "0.0" and r["n_trials"] == "1" and r["seed"] == "1234"
        assert abs(float(r["mean"]) - float(r["exact"])) < 1e-3
        assert float(r["mean_per_site"]) == float(r["mean"]) / 4
    assert (tmp_path / "resolved_config_sweep.txt").exists()


def test_sweep_noisy_l6_mitigated_columns(tmp_path):
    args = ["sweep", "--out", str(tmp_path), "--L", "6", "--estimator", "mitigated", "--trials", "3",
            "--set", "scale_factors=1,3", "--set", "r_start=0.9", "--set", "r_stop=1.0"]
    assert cli.main(args) == 0
    summary = rows(tmp_path / "sweep_L6_mitigated.csv")
    assert {r["scale_factors"] for r in summary} == {"1;3"}
    assert all(r["folding"] == "unitary" for r in summary)
    for r in summary:
        assert float(r["abs_err_per_trial_mean"]) >= float(r["abs_err_of_mean"]) >= 0
    long = rows(tmp_path / "sweep_L6_mitigated_trials.csv")
    assert len(long) == 2 * 3 * 3


def test_partial_failure_exit_3(tmp_path, monkeypatch):
    from qfidsus import pipeline

    real = pipeline.prepare_point

    def flaky(L, r):
        if r > 1.3:
            raise RuntimeError("boom")
        return real(L, r)

    monkeypatch.setattr(pipeline, "prepare_point", flaky)
    assert cli.main(["sweep", "--out", str(tmp_path)]) == 3
    bad = [r for r in rows(tmp_path / "sweep_L4_exact.csv") if r["r"] == "1.4"]
    assert all(r["n_failed"] == "1" and "failed" in r["flags"] and r["mean"] == "nan" for r in bad)


def test_mitigate_small(tmp_path):
    args = ["mitigate", "--out", str(tmp_path), "--trials", "2", "--set", "r_start=1.0", "--set", "r_stop=1.0",
            "--set", "max_order=2"]
    assert cli.main(args) == 0
    plans = rows(tmp_path / "mitigation_L4_plans.csv")
    keys = [(r["scale_factors"], r["folding"]) for r in plans if r["quantity"] == "energy"]
    assert keys == [("1", "none"), ("1;3", "unitary"), ("1;3;5", "unitary"), ("1;3", "cnot"), ("1;3;5", "cnot")]
    noisy = rows(tmp_path / "mitigation_L4.csv")[0]
    assert noisy["method"] == "noisy"


def test_overlap_bench(tmp_path):
    args = ["overlap-bench", "--out", str(tmp_path), "--trials", "3", "--set", "r_start=1.0", "--set", "r_stop=1.0"]
    assert cli.main(args) == 0
    out = rows(tmp_path / "overlap_bench_L4.csv")
    ok = [r for r in out if r["status"] == "ok"]
    assert len(ok) == 3 * 3
    assert {r["status"] for r in out} == {"ok", "not_implemented"}
    assert all(r["config_hash"] and r["seed"] == "1234" for r in out)


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "qfidsus", "reduce", "--L", "2", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "2 composite states" in res.stdout
