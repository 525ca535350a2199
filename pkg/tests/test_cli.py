import json
import subprocess
import sys

import numpy as np
import pytest

from iterqpe.cli import EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_OK, OUT_DIR_ENV, histogram_csv, main
from iterqpe.config import RunConfig, locate_lines, parse_document, sweep_axis
from iterqpe.errors import ConfigError
from iterqpe.sampler import AdaptivePlan, RepetitiveScheme

BASE = {
    "model": {"kind": "spin_star", "couplings": [2.6, 5.2]},
    "scheme": {"kind": "repetitive", "m": 200, "tau": 0.2},
    "sampling": {"n_samples": 2000, "seed": 5},
}


def write(tmp_path, doc, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc, indent=2))
    return str(path)


def run(args, tmp_path):
    return main(args + ["--out-dir", str(tmp_path / "out"), "--workers", "1"])


# ------------------------------------------------------------------ config


def test_config_builds_objects():
    cfg = RunConfig.from_dict(BASE)
    v = cfg.operator()
    assert np.allclose(v.eigenvalues, [0, 1.3, 2.6, 3.9])
    scheme = cfg.scheme(v)
    assert isinstance(scheme, RepetitiveScheme) and scheme.m == 200
    assert np.isclose(scheme.settings.phi, np.pi / 2)
    assert cfg.noise(v) is None and cfg.n_samples == 2000 and cfg.seed == 5
    adaptive = cfg.scheme(v, {"kind": "adaptive", "m": 6, "tau0_factor": 1.25})
    assert isinstance(adaptive, AdaptivePlan) and np.isclose(adaptive.tau0, 1.25 * 3.9)
    signed = cfg.scheme(v, {"kind": "adaptive", "m": 6, "tau0_factor": 1.25, "signed": True})
    assert np.isclose(signed.tau0, 2.5 * 3.9)
    by_time = cfg.scheme(v, {"kind": "repetitive", "t": 16.0, "tau": 0.2})
    assert by_time.m == 80


def test_config_noise_sections():
    doc = dict(BASE, noise={"gamma": 0.05, "lindblad": [{"kind": "z", "relative_rate": 0.04}]})
    cfg = RunConfig.from_dict(doc)
    v = cfg.operator()
    noise = cfg.noise(v)
    assert np.isclose(noise.relative_strength(v), 0.05)
    assert [r for _, r in noise.lindblad] == pytest.approx([0.104, 0.208])
    with pytest.raises(ConfigError):
        RunConfig.from_dict(dict(BASE, noise={"omegas": [0.1]})).noise(v)


def test_config_dense_and_cpmg(tmp_path):
    mat = np.diag([0.0, 0.5, 1.0])
    np.save(tmp_path / "v.npy", mat)
    cfg = RunConfig.from_dict(dict(BASE, model={"kind": "dense", "file": "v.npy"}), tmp_path)
    assert np.allclose(cfg.operator().eigenvalues, [0, 0.5, 1])
    inline = RunConfig.from_dict(dict(BASE, model={"kind": "dense", "matrix": [[0, 1], [1, 0]]}))
    assert np.allclose(inline.operator().eigenvalues, [-1, 1])
    missing = RunConfig.from_dict(dict(BASE, model={"kind": "dense", "file": "nope.npy"}), tmp_path)
    with pytest.raises(ConfigError):
        missing.operator()
    cpmg = RunConfig.from_dict(dict(BASE, model={"kind": "cpmg", "couplings": [0.05], "axes": [[1, 0, 0]], "omega": 1.0}))
    assert np.allclose(cpmg.operator().eigenvalues, [-0.1, 0.1])


def test_schema_errors_point_at_lines():
    text = '{\n  "model": {"kind": "spin_star", "couplings": [1.0]},\n  "scheme": {"kind": "repetitive",\n    "m": -3}\n}\n'
    with pytest.raises(ConfigError, match=r"run.json:4: scheme"):
        parse_document(text, "run.json")
    extra = '{\n  "model": {"kind": "spin_star", "couplings": [1.0]},\n  "scheme": {"kind": "repetitive"},\n  "bogus": 1\n}\n'
    with pytest.raises(ConfigError, match=r":4: "):
        parse_document(extra, "x")
    with pytest.raises(ConfigError, match=r"x:2:"):
        parse_document('{\n  "model": ,\n}', "x")
    lines = locate_lines('{\n "a": [1,\n  2]\n}')
    assert lines[("a", 1)] == 3


def test_sweep_axis_advances_markers():
    doc = dict(BASE, scheme=[
        {"kind": "repetitive", "m": {"sweep": [10, 20]}},
        {"kind": "adaptive", "m": {"sweep": [3, 4]}},
    ])
    axis, values, points = sweep_axis(parse_document(json.dumps(doc)))
    assert axis == "m" and values == [10, 20]
    assert [p["scheme"][1]["m"] for p in points] == [3, 4]
    bad = dict(BASE, scheme={"kind": "repetitive", "m": {"sweep": [1, 2]}, "t": {"sweep": [1.0]}})
    with pytest.raises(ConfigError):
        sweep_axis(parse_document(json.dumps(bad)))


# --------------------------------------------------------------------- cli


def test_simulate_is_deterministic(tmp_path, capsys):
    cfg = write(tmp_path, BASE)
    assert main([ "simulate", cfg, "--out-dir", str(tmp_path / "a"), "--workers", "1"]) == EXIT_OK
    assert main(["simulate", cfg, "--out-dir", str(tmp_path / "b"), "--workers", "2"]) == EXIT_OK
    a = (tmp_path / "a" / "run_hist.csv").read_bytes()
    assert a == (tmp_path / "b" / "run_hist.csv").read_bytes()
    assert a.startswith(b"xi,count\n") and b"\r" not in a
    doc = json.loads((tmp_path / "a" / "run.json").read_text())
    assert doc["config"]["sampling"]["seed"] == 5
    assert len(doc["estimates"]["values"]) == 4
    # the echoed config re-parses and reproduces the histogram
    echo = write(tmp_path, doc["config"], "echo.json")
    assert main(["simulate", echo, "--out-dir", str(tmp_path / "c"), "--workers", "1"]) == EXIT_OK
    assert (tmp_path / "c" / "echo_hist.csv").read_bytes() == a
    assert "delta" in capsys.readouterr().out


def test_simulate_seed_flag_and_plots(tmp_path):
    cfg = write(tmp_path, BASE)
    assert run(["simulate", cfg, "--seed", "9", "--emit-plots"], tmp_path) == EXIT_OK
    doc = json.loads((tmp_path / "out" / "run.json").read_text())
    assert doc["metadata"]["seed"] == 9 and doc["config"]["sampling"]["seed"] == 9
    assert (tmp_path / "out" / "run.gp").read_text().startswith("set datafile")


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_DIR_ENV, str(tmp_path / "env"))
    assert main(["simulate", write(tmp_path, BASE), "--workers", "1"]) == EXIT_OK
    assert (tmp_path / "env" / "run_hist.csv").exists()


def test_zero_samples_warns(tmp_path, caplog):
    doc = dict(BASE, sampling={"n_samples": 0})
    assert run(["simulate", write(tmp_path, doc)], tmp_path) == EXIT_OK
    out = json.loads((tmp_path / "out" / "run.json").read_text())
    assert out["estimates"] is None and out["warnings"]
    rows = (tmp_path / "out" / "run_hist.csv").read_text().splitlines()
    assert len(rows) == 202 and all(r.endswith(",0") for r in rows[1:])
    assert "n_samples is 0" in caplog.text


def test_exit_codes(tmp_path, capsys):
    bad = write(tmp_path, dict(BASE, scheme={"kind": "repetitive", "m": 0}), "bad.json")
    assert run(["simulate", bad], tmp_path) == EXIT_CONFIG
    assert "bad.json:" in capsys.readouterr().err
    # v tau leaves the arccos branch: numeric failure during estimation
    alias = write(tmp_path, dict(BASE, scheme={"kind": "repetitive", "m": 20, "tau": 0.5}), "alias.json")
    assert run(["simulate", alias], tmp_path) == EXIT_NUMERIC
    assert run(["simulate", str(tmp_path / "missing.json")], tmp_path) == EXIT_IO
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert main(["simulate", write(tmp_path, BASE), "--out-dir", str(blocker / "x"), "--workers", "1"]) == EXIT_IO


def test_spectrum_command(tmp_path, capsys):
    doc = dict(BASE, model={"kind": "spin_star", "couplings": [2.6, 5.2],
                            "axes": [[0.07, 0.07, 0.99508793]] * 2}, noise={"gamma": 0.02})
    assert run(["spectrum", write(tmp_path, doc)], tmp_path) == EXIT_OK
    out = capsys.readouterr().out
    assert "window 292." in out and "(empty)" not in out
    rows = (tmp_path / "out" / "run_spectrum.csv").read_text().splitlines()
    assert rows[0] == "index,real,imag,modulus,class" and len(rows) == 17
    assert run(["spectrum", write(tmp_path, BASE)], tmp_path) == EXIT_OK
    assert "fixed=4" in capsys.readouterr().out


def test_spectrum_rejects_defective_superop(tmp_path, capsys):
    np.save(tmp_path / "jordan.npy", np.array([[1.0, 1.0], [0.0, 1.0]]))
    doc = dict(BASE, analysis={"superop_file": "jordan.npy", "s_hint": 1})
    assert run(["spectrum", write(tmp_path, doc)], tmp_path) == EXIT_NUMERIC
    assert "NearDefectiveError" in capsys.readouterr().err


def test_sweep_command(tmp_path, capsys):
    doc = dict(BASE, scheme=[
        {"kind": "repetitive", "m": {"sweep": [20, 40, 80]}, "tau": 0.2},
        {"kind": "adaptive", "m": {"sweep": [4, 5, 6]}, "tau0_factor": 1.25},
    ], analysis={"fit": True}, output={"name": "sw"})
    assert run(["sweep", write(tmp_path, doc)], tmp_path) == EXIT_OK
    summary = json.loads((tmp_path / "out" / "sw_summary.json").read_text())
    assert [r["value"] for r in summary["rows"]] == [20, 4, 40, 5, 80, 6]
    assert set(summary["fits"]) == {"repetitive", "adaptive"}
    assert summary["metadata"]["smooth_window"] == 5
    assert (tmp_path / "out" / "sw_p2_adaptive_r0_hist.csv").exists()
    assert "slope adaptive" in capsys.readouterr().out


def test_single_point_sweep_equals_simulate(tmp_path):
    cfg = write(tmp_path, dict(BASE, output={"name": "one"}))
    assert run(["sweep", cfg], tmp_path) == EXIT_OK
    assert main(["simulate", cfg, "--out-dir", str(tmp_path / "sim"), "--workers", "1"]) == EXIT_OK
    swept = (tmp_path / "out" / "one_p0_repetitive_r0_hist.csv").read_bytes()
    assert swept == (tmp_path / "sim" / "one_hist.csv").read_bytes()


def test_samplesize_command(capsys):
    assert main(["samplesize", "--delta", "0.01", "--eps", "0.05"]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "hoeffding 18445"
    counts = {}
    for scheme, extra in (("adaptive", ["--tau0", "3.9"]), ("repetitive", ["--tau", "0.2"])):
        for t in ("100", "200"):
            assert main(["samplesize", "--eta", "1e-4", "--scheme", scheme, "--t", t] + extra) == EXIT_OK
            counts[scheme, t] = int(capsys.readouterr().out.split()[-1])
    assert counts["adaptive", "100"] / counts["adaptive", "200"] == pytest.approx(16, rel=1e-5)
    assert counts["repetitive", "100"] / counts["repetitive", "200"] == pytest.approx(8, rel=1e-5)
    assert main(["samplesize", "--delta", "0.01", "--eps", "2"]) == EXIT_NUMERIC
    assert main(["samplesize", "--eta", "1e-3"]) == EXIT_CONFIG


def test_histogram_csv_format():
    text = histogram_csv(np.array([0.0, 0.1]), np.array([3, 0.25]))
    assert text == "xi,count\n0.0,3\n0.1,0.25\n"


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "iterqpe", "samplesize", "--delta", "0.01"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip() == "hoeffding 18445"
