import json

import pytest

from pamlab import cli


def _cfg(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text("[run]\nschema_version = 1\n" + text, encoding="utf-8")
    return str(p)


def _run(*argv):
    return cli.main(list(argv))


def test_schedule_report_defaults(tmp_path, capsys):
    cfg = _cfg(tmp_path, "epsilon = 0.05\n")
    out = tmp_path / "out"
    assert _run("schedule-report", "--config", cfg, "--out", str(out)) == 0
    text = capsys.readouterr().out
    assert "A = " in text and "delta_R" in text
    blob = json.loads((out / "schedule.json").read_text())
    assert blob["schema_version"] == 1
    assert len(blob["config"]) == 16
    assert blob["A"] > 3.0
    assert len(blob["rows"]) == 6


def test_schedule_report_refuses_small_ratio(tmp_path, capsys):
    cfg = _cfg(tmp_path, "epsilon = 1/14\n")
    assert _run("schedule-report", "--config", cfg, "--out", str(tmp_path / "o")) == 2
    assert "must exceed 3" in capsys.readouterr().err


def test_config_file_errors(tmp_path, capsys):
    out = str(tmp_path / "o")
    assert _run("schedule-report", "--config", str(tmp_path / "nope.ini"),
                "--out", out) == 2
    bad_key = _cfg(tmp_path, "bogus_knob = 1\n", "a.ini")
    assert _run("schedule-report", "--config", bad_key, "--out", out) == 2
    assert "bogus_knob" in capsys.readouterr().err
    v2 = tmp_path / "b.ini"
    v2.write_text("[run]\nschema_version = 2\n", encoding="utf-8")
    assert _run("schedule-report", "--config", str(v2), "--out", out) == 2
    no_ver = tmp_path / "c.ini"
    no_ver.write_text("[run]\nepsilon = 0.05\n", encoding="utf-8")
    assert _run("schedule-report", "--config", str(no_ver), "--out", out) == 2
    no_sec = tmp_path / "d.ini"
    no_sec.write_text("[other]\nschema_version = 1\n", encoding="utf-8")
    assert _run("schedule-report", "--config", str(no_sec), "--out", out) == 2


def test_threads_must_be_positive(tmp_path):
    cfg = _cfg(tmp_path, "epsilon = 0.05\n")
    assert _run("schedule-report", "--config", cfg, "--threads", "0",
                "--out", str(tmp_path / "o")) == 2


def test_env_sample_artifacts_and_seed_flag(tmp_path):
    cfg = _cfg(tmp_path, "kind = spin-markov\nd = 1\nl = 4\nt = 2.0\nseed = 0\n")
    out = tmp_path / "out"
    assert _run("env-sample", "--config", cfg, "--seed", "5",
                "--out", str(out)) == 0
    assert (out / "env.txt").is_file()
    blob = json.loads((out / "env_sample.json").read_text())
    assert blob["seed"] == 5 and blob["kind"] == "spin-markov"
    assert blob["env_mean"] == 0.0
    assert blob["n_events"] >= 9


def test_env_budget_override(tmp_path, monkeypatch):
    cfg = _cfg(tmp_path, "kind = spin-markov\nd = 1\nl = 8\nt = 2.0\n")
    out = str(tmp_path / "o")
    monkeypatch.setenv("PAMLAB_MAX_EVENTS", "10")
    assert _run("env-sample", "--config", cfg, "--out", out) == 3
    monkeypatch.setenv("PAMLAB_MAX_EVENTS", "banana")
    assert _run("env-sample", "--config", cfg, "--out", out) == 2


def test_rearrange_verify_small(tmp_path):
    cfg = _cfg(tmp_path, "n_functions = 150\nn_riesz = 150\nn_multisum = 40\n")
    out = tmp_path / "out"
    assert _run("rearrange-verify", "--config", cfg, "--out", str(out)) == 0
    lines = (out / "rearrange.jsonl").read_text().splitlines()
    meta = json.loads(lines[0])
    assert meta["record"] == "meta" and "config" in meta
    summary = json.loads(lines[1])
    assert summary["holds"] and summary["violations"] == []


def test_rearrange_verify_violation_exit(tmp_path, monkeypatch):
    import pamlab.rearrangement as rearr

    def fake(n_functions, n_riesz, n_multisum, seed):
        return {"n_functions": n_functions, "n_riesz": n_riesz,
                "n_multisum": n_multisum,
                "violations": [{"check": "riesz", "index": 0}], "holds": False}

    monkeypatch.setattr(rearr, "rearrangement_corpus", fake)
    cfg = _cfg(tmp_path, "")
    assert _run("rearrange-verify", "--config", cfg,
                "--out", str(tmp_path / "o")) == 5


def test_byte_identical_reruns(tmp_path):
    cfg = _cfg(tmp_path, "n_instances = 2\nl = 3\nt = 0.5\nreplicas = 2000\n"
                         "kappas = [0.5]\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run("mc-vs-oracle", "--config", cfg, "--out", str(a)) == 0
    assert _run("mc-vs-oracle", "--config", cfg, "--out", str(b)) == 0
    assert (a / "mc_vs_oracle.jsonl").read_bytes() == \
        (b / "mc_vs_oracle.jsonl").read_bytes()
    lines = (a / "mc_vs_oracle.jsonl").read_text().splitlines()
    assert json.loads(lines[0])["record"] == "meta"
    for line in lines[1:]:
        rec = json.loads(line)
        assert rec["u_exact"] > 0 and abs(rec["z"]) < 6


def test_spectral_verify_thread_determinism(tmp_path):
    cfg = _cfg(tmp_path, "shapes = [[4], [3, 3]]\nn_fields = 20\n"
                         "n_partitions = 4\nn_instances = 1\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run("spectral-verify", "--config", cfg, "--threads", "1",
                "--out", str(a)) == 0
    assert _run("spectral-verify", "--config", cfg, "--threads", "3",
                "--out", str(b)) == 0
    assert (a / "spectral.jsonl").read_bytes() == (b / "spectral.jsonl").read_bytes()


def test_sweep_then_report_pipeline(tmp_path):
    cfg = _cfg(tmp_path, "kind = spin-markov\nd = 1\nl = 1\nt = 1.0\nseed = 3\n"
                         "kappas = [0.0, 0.5]\nreplicas = 300\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run("lyapunov-sweep", "--config", cfg, "--out", str(a)) == 0
    assert _run("lyapunov-sweep", "--config", cfg, "--out", str(b)) == 0
    assert (a / "sweep.csv").read_bytes() == (b / "sweep.csv").read_bytes()
    head = (a / "sweep.csv").read_text().splitlines()
    assert head[0].startswith("# pamlab-sweep schema_version=1 config=")
    assert head[1].startswith("# env_mean=")
    assert head[2] == "kappa,t,replicas,lambda_hat,stderr,env_seed,walk_seed"
    assert _run("report", "--config", cfg, "--out", str(a)) == 0
    svg = (a / "report.svg").read_text()
    assert svg.startswith("<?xml") and "<svg" in svg
    assert "mean field value" in svg
    assert _run("report", "--config", cfg, "--out", str(tmp_path / "empty")) == 2


def test_blocks_census_artifact(tmp_path):
    cfg = _cfg(tmp_path, "kind = frozen\nd = 1\nl = 8\nt = 4.0\nr_max = 1\n"
                         "kappa = 1.0\nb = 0\nc = 0\ndelta = 0.3\n"
                         "frozen_values = [[[1], 1.0]]\n")
    out = tmp_path / "out"
    assert _run("blocks-census", "--config", cfg, "--out", str(out)) == 0
    lines = (out / "census.jsonl").read_text().splitlines()
    assert json.loads(lines[0])["record"] == "meta"
    rec = json.loads(lines[1])
    assert rec["R"] == 1 and "xi_count" in rec and "psi_count" in rec


def test_mixing_probe_artifact(tmp_path):
    cfg = _cfg(tmp_path, "kind = spin-markov\nd = 1\nl = 1\nt = 2.0\n"
                         "r = 1\nreps = 120\ndelta = 0.9\nb = 0\nc = 0\n")
    out = tmp_path / "out"
    code = _run("mixing-probe", "--config", cfg, "--out", str(out))
    assert code in (0, 5)
    blob = json.loads((out / "mixing.json").read_text())
    assert blob["verdict"] in ("consistent", "inconclusive", "violated")
    assert (code == 5) == (blob["verdict"] == "violated")


def test_localtime_verify_small(tmp_path):
    cfg = _cfg(tmp_path, "n_instances = 2\nkappas = [0.5]\nt = 1.5\n"
                         "n_nested = 1\nn_trials = 200\n")
    out = tmp_path / "out"
    assert _run("localtime-verify", "--config", cfg, "--out", str(out)) == 0
    lines = (out / "localtime.jsonl").read_text().splitlines()
    kinds = [json.loads(ln).get("record") for ln in lines]
    assert kinds[0] == "meta"
    assert kinds.count("localtime") == 2 and kinds.count("nested") == 1


def test_config_required_without_file(tmp_path, capsys):
    # lyapunov-sweep needs t and kappas; with no config at all that is a
    # config error, not a crash
    assert _run("lyapunov-sweep", "--out", str(tmp_path / "o")) == 2
    assert "missing required config key" in capsys.readouterr().err
