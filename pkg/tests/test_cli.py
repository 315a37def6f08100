import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from levent import cli


def _manifest(out):
    return json.loads((out / "manifest.json").read_text())


def _cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_steady_writes_manifest(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["steady", "--out", str(out)]) == 0
    man = _manifest(out)
    assert man["exit_code"] == 0
    assert man["backend"] in ("cython", "python")
    assert {"levent", "numpy", "scipy", "python"} <= set(man["versions"])
    assert man["wall_time_s"] > 0
    assert man["summary"]["EN_conditional"] == pytest.approx(0.6945, abs=1e-3)


def test_manifest_lists_every_file_with_hash(tmp_path):
    out = tmp_path / "o"
    cli.main(["reproduce", "fig4b", "--resolution", "3", "--out", str(out)])
    man = _manifest(out)
    listed = {f["path"]: f["sha256"] for f in man["files"]}
    on_disk = {p.name for p in out.iterdir()} - {"manifest.json"}
    assert set(listed) == on_disk
    for name, digest in listed.items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest


def test_fig1c_series_positive_and_periodic(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["reproduce", "fig1c", "--out", str(out)]) == 0
    meta, cols = cli.read_table(out / "fig1c.csv")
    en, t = cols["EN"], cols["t"]
    n = int(round(meta["period"] / (t[1] - t[0])))
    assert np.all(en > 0)
    np.testing.assert_array_equal(en[:n], en[n:2 * n])
    assert np.ptp(en[:n]) > 1e-3


def test_instability_exit_code(tmp_path):
    cfg = _cfg(tmp_path, "alpha = 0\neta = 0\ngamma_over_omega_m = 1e-10\n")
    out = tmp_path / "o"
    assert cli.main(["steady", "--config", cfg, "--out", str(out)]) == cli.EXIT_INSTABILITY
    assert _manifest(out)["error"]["type"] == "InstabilityError"


def test_config_error_exit_code(tmp_path, capsys):
    cfg = _cfg(tmp_path, "alpha = -1\n")
    assert cli.main(["steady", "--config", cfg, "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert "alpha" in err and "line 1" in err


def test_nonconvergence_exit_code(tmp_path):
    cfg = _cfg(tmp_path, "max_periods = 3\n")
    assert cli.main(["steady", "--config", cfg, "--out", str(tmp_path / "o")]) == cli.EXIT_CONVERGENCE


def test_unwritable_output_exit_code(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["steady", "--out", str(blocker / "sub")]) == cli.EXIT_IO


def test_missing_config_file_exit_code(tmp_path):
    assert cli.main(["steady", "--config", str(tmp_path / "none.cfg")]) == cli.EXIT_IO


def test_bad_dt_is_config_error(tmp_path):
    cfg = _cfg(tmp_path, "t_end_periods = 1\n")
    code = cli.main(["trajectory", "--config", cfg, "--dt", "0.1", "--out", str(tmp_path / "o")])
    assert code == cli.EXIT_CONFIG


def test_scan_counts_failures(tmp_path):
    cfg = _cfg(tmp_path, "steps_per_period = 500\nmetric = conditional_EN\n"
                         "scan_x = g_over_omega_m:0.1:0.2:2\nscan_y = eta:0:1:2\n")
    out = tmp_path / "o"
    assert cli.main(["scan", "--config", cfg, "--out", str(out)]) == 0
    counts = _manifest(out)["failure_counts"]
    assert counts["computed"] == 2 and counts["failed"] == 2
    assert counts["by_class"] == {"instability": 2}


def test_json_format(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["reproduce", "fig1d", "--format", "json", "--out", str(out)]) == 0
    meta, cols = cli.read_table(out / "fig1d.json")
    assert meta["target"] == "fig1d"
    assert np.all(cols["EN"] >= 0)


def _trajectory_files(tmp_path, name, threads):
    cfg = _cfg(tmp_path, "n_trajectories = 6\nt_end_periods = 1\nstride = 50\ndump_trajectories = true\n",
               name + ".cfg")
    out = tmp_path / name
    assert cli.main(["ensemble", "--config", cfg, "--seed", "42", "--threads", str(threads),
                     "--out", str(out)]) == 0
    return {p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))}


def test_outputs_bit_identical_across_runs_and_threads(tmp_path):
    a = _trajectory_files(tmp_path, "a", 1)
    b = _trajectory_files(tmp_path, "b", 1)
    c = _trajectory_files(tmp_path, "c", 4)
    assert len(a) == 7
    assert a == b == c


def test_console_entry_point(tmp_path):
    out = tmp_path / "o"
    res = subprocess.run([sys.executable, "-m", "levent.cli", "reproduce", "fig1c", "--out", str(out)],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert (out / "manifest.json").exists()
