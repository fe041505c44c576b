import json

import pytest

from quickdetect.cli import main
from quickdetect.ingest import parse_counts
from quickdetect.multicyclic import parse_alarm_ndjson

PRE = "gaussian:1669.09,113.884"
POST = "gaussian:1887.56,218.107"
SCORE = ["--q0", "0.52", "--delta0", "1.5"]


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    rc = main(["simulate", "--pre", PRE, "--post", POST, "--nu", "5000", "--total", "8000",
               "--seed", "1", "-o", str(d / "counts.csv"), "--truth", str(d / "truth.json")])
    assert rc == 0
    rc = main(["baseline", str(d / "counts.csv"), "--start", "0", "--end", "4999", "-o", str(d / "base.json")])
    assert rc == 0
    return d


def read_json(path):
    return json.loads(path.read_text())


def test_simulate_example(sim):
    bins = parse_counts((sim / "counts.csv").read_text())
    assert len(bins) == 8000 and all(b.count >= 0 for b in bins)
    truth = read_json(sim / "truth.json")
    assert truth["nu"] == 5000 and truth["total"] == 8000
    assert set(truth["provenance"]) == {"config_digest", "seed"}
    assert (sim / "counts.csv").read_text().startswith("# config_digest=")


def test_baseline_output(sim):
    b = read_json(sim / "base.json")
    assert (b["window_start"], b["window_end"], b["n_samples"]) == (0, 4999, 5000)
    assert abs(b["mu_inf"] - 1669.09) < 4 * 113.884 / 5000 ** 0.5
    assert "provenance" in b


def test_bin_command(tmp_path):
    (tmp_path / "ev.txt").write_text("1000\n5000\n25000\n41000\n")
    assert main(["bin", str(tmp_path / "ev.txt"), "-o", str(tmp_path / "c.csv")]) == 0
    assert [b.count for b in parse_counts((tmp_path / "c.csv").read_text())] == [2, 1, 1]


def test_run_example_threshold_1900(sim, tmp_path):
    rc = main(["run", str(sim / "counts.csv"), "--detector", "sr", *SCORE, "--threshold", "1900",
               "--baseline", str(sim / "base.json"), "--truth", str(sim / "truth.json"),
               "--alarms", str(tmp_path / "a.ndjson"), "--metrics", str(tmp_path / "m.json"),
               "--trajectory", str(tmp_path / "t.csv")])
    assert rc == 0
    text = (tmp_path / "a.ndjson").read_text()
    records = [json.loads(line) for line in text.splitlines()]
    assert records and all({"j", "T_global", "cycle_len", "stat", "config_digest", "seed"} <= set(r) for r in records)
    alarms = parse_alarm_ndjson(text)
    assert any(t > 5000 for t in alarms.alarm_times)
    m = read_json(tmp_path / "m.json")
    assert m["delays"] and 0 < m["delays"][0] < 50
    assert m["detector"]["threshold"] == 1900.0 and "provenance" in m
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0].startswith("# config_digest=") and len(lines) == 2 + 8000


def test_run_and_report_agree(sim, tmp_path):
    args = ["run", str(sim / "counts.csv"), "--detector", "cusum", *SCORE, "--threshold", "4",
            "--baseline", str(sim / "base.json"), "--truth", str(sim / "truth.json"),
            "--alarms", str(tmp_path / "a.ndjson"), "--metrics", str(tmp_path / "m.json")]
    assert main(args) == 0
    assert main(["report", "--alarms", str(tmp_path / "a.ndjson"), "--truth", str(sim / "truth.json"),
                 "-o", str(tmp_path / "r.json")]) == 0
    run_m, rep_m = read_json(tmp_path / "m.json"), read_json(tmp_path / "r.json")
    for key in ("delays", "false_alarms", "false_alarm_rate_per_1000", "n_alarms"):
        assert run_m[key] == rep_m[key]


@pytest.mark.slow
def test_calibrate_cusum_example(sim, tmp_path):
    out = tmp_path / "cal.json"
    rc = main(["calibrate", "--detector", "cusum", "--gamma", "500", *SCORE, "--counts", str(sim / "counts.csv"),
               "--baseline", str(sim / "base.json"), "--seed", "3", "-o", str(out)])
    assert rc == 0
    cal = read_json(out)
    assert cal["converged"] and 475 <= cal["measured_arl"] <= 525
    assert cal["sampler"]["kind"] == "empirical" and cal["sampler"]["window_size"] == 5000
    assert cal["seed"] == 3 and cal["provenance"]["seed"] == 3
    # the calibration file can drive a run
    rc = main(["run", str(sim / "counts.csv"), "--detector", "cusum", *SCORE, "--calibration", str(out),
               "--baseline", str(sim / "base.json"), "--alarms", str(tmp_path / "a.ndjson")])
    assert rc == 0


def test_config_file_and_flag_override(sim, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"pre": PRE, "post": POST, "nu": 10, "total": 20, "seed": 4, "output": "x.csv"}))
    assert main(["simulate", "--config", str(cfg)]) == 0
    assert len(parse_counts((tmp_path / "x.csv").read_text())) == 20
    assert main(["--config", str(cfg), "simulate", "--total", "30", "-o", str(tmp_path / "y.csv")]) == 0
    assert len(parse_counts((tmp_path / "y.csv").read_text())) == 30
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["simulate", "--config", str(cfg)]) == 2


def test_seed_env_fallback(tmp_path, monkeypatch):
    def sim_text(name, *extra):
        path = tmp_path / name
        assert main(["simulate", "--pre", PRE, "--post", POST, "--nu", "5", "--total", "10",
                     "-o", str(path), *extra]) == 0
        return path.read_text()

    monkeypatch.setenv("QD_SEED", "9")
    from_env = sim_text("a.csv")
    assert from_env == sim_text("b.csv", "--seed", "9")
    assert from_env != sim_text("c.csv", "--seed", "8")
    monkeypatch.setenv("QD_SEED", "nope")
    assert main(["simulate", "--pre", PRE, "--post", POST, "--nu", "5", "--total", "10"]) == 2


def test_exit_codes(sim, tmp_path, capsys):
    base = ["run", str(sim / "counts.csv"), "--detector", "sr", *SCORE, "--baseline", str(sim / "base.json")]
    assert main([]) == 2
    assert main(["frobnicate"]) == 2
    assert main(base) == 2  # no threshold source
    assert main(base + ["--threshold", "10", "--gamma", "100"]) == 2
    assert main(base + ["--threshold", "0"]) == 2
    assert main(["run", str(tmp_path / "missing.csv"), "--detector", "sr", *SCORE, "--threshold", "9",
                 "--baseline", str(sim / "base.json")]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("bin_index,count\n0,1\n2,1\n")
    assert main(["baseline", str(bad)]) == 3
    flat = tmp_path / "flat.csv"
    flat.write_text("0,5\n1,5\n2,5\n")
    assert main(["baseline", str(flat)]) == 3
    # integer-valued ARL cannot land within 1e-4 of 3.5
    (tmp_path / "one.csv").write_text("0,1\n1,1\n")
    rc = main(["calibrate", "--detector", "cusum", "--c1", "1", "--c2", "0", "--c3", "0", "--gamma", "3.5",
               "--rel-tol", "0.0001", "--replications", "100", "--pre", f"empirical:{tmp_path / 'one.csv'}",
               "--baseline", str(sim / "base.json"), "-o", str(tmp_path / "nc.json")])
    assert rc == 4
    assert read_json(tmp_path / "nc.json")["converged"] is False
    capsys.readouterr()


def test_outputs_are_deterministic(sim, tmp_path):
    outs = []
    for tag in ("a", "b"):
        rc = main(["calibrate", "--detector", "sr", *SCORE, "--gamma", "50", "--replications", "300",
                   "--counts", str(sim / "counts.csv"), "--baseline", str(sim / "base.json"), "--seed", "2",
                   "-o", str(tmp_path / f"{tag}.json")])
        assert rc == 0
        outs.append((tmp_path / f"{tag}.json").read_bytes())
    assert outs[0] == outs[1]
