import json
import subprocess
import sys

import pytest

from pqglab.cli import main
from pqglab.frames import DIAGNOSTIC_COLUMNS, read_diagnostics_csv, read_frame

RUN_CFG = """\
grid: {nx: 16, ny: 16, nz: 8}
background: {qvs_profile: none}
dynamics: {dt: 1800, t_end: 5400, output_every: 1, seed: 42}
"""


def write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def summary(out):
    return json.loads((out / "summary.json").read_text())


def test_run_writes_frames_and_diagnostics(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", "--config", str(write(tmp_path, RUN_CFG)), "--out", str(out)]) == 0
    s = summary(out)
    assert s["all_passed"] and s["steps"] == 3 and len(s["frames"]) == 4
    rows = read_diagnostics_csv(out / "diagnostics.csv")
    assert len(rows) == 4 and tuple(rows[0]) == DIAGNOSTIC_COLUMNS
    fr = read_frame(out / s["frames"][-1])
    assert fr.t == 5400.0 and {"pv_anomaly", "M", "phi", "w"} <= set(fr.fields)
    assert "PASS run.pv_mean_drift" in capsys.readouterr().out
    assert (out / "config.yaml").exists()


def test_run_overrides(tmp_path):
    out = tmp_path / "run"
    args = ["run", "--config", str(write(tmp_path, RUN_CFG)), "--out", str(out), "--seed", "9",
            "--variant", "fast", "--t-end", "0"]
    assert main(args) == 0
    assert len(read_diagnostics_csv(out / "diagnostics.csv")) == 1
    assert "seed: 9" in (out / "config.yaml").read_text()
    assert "variant: fast" in (out / "config.yaml").read_text()


def test_same_seed_gives_identical_frames(tmp_path):
    cfg = write(tmp_path, RUN_CFG)
    for name in ("a", "b"):
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / name)]) == 0
    frames = sorted((tmp_path / "a" / "frames").iterdir())
    for f in frames:
        assert f.read_bytes() == (tmp_path / "b" / "frames" / f.name).read_bytes()


@pytest.mark.parametrize("text, key", [
    ("regime: {alpha: 2}\n" + RUN_CFG, "regime.alpha"),
    ("background: {dtheta_e_dz: -1.0}\ngrid: {nx: 16, ny: 16, nz: 8}\n", "background.dtheta_e_dz"),
])
def test_config_error_exit_code(tmp_path, capsys, text, key):
    out = tmp_path / "o"
    assert main(["run", "--config", str(write(tmp_path, text)), "--out", str(out)]) == 2
    rec = summary(out)
    assert rec["status"] == "failed" and rec["kind"] == "config" and rec["key"] == key
    assert key in capsys.readouterr().err


def test_numerical_failure_exit_code(tmp_path):
    text = ("grid: {nx: 16, ny: 16, nz: 8}\n"
            "dynamics:\n  dt: 1.0e6\n  t_end: 2.0e6\n  initial: {amplitude: 1.0e-3}\n")
    out = tmp_path / "o"
    assert main(["run", "--config", str(write(tmp_path, text)), "--out", str(out)]) == 3
    rec = summary(out)
    assert rec["error_type"] == "CFLError" and rec["courant"] > 0.5


def test_cc_tables(tmp_path, capsys):
    out = tmp_path / "cc"
    assert main(["cc-tables", "--out", str(out)]) == 0
    for name in ("derived_quantities.csv", "regime_report.csv", "saturation_vapor_pressure.csv",
                 "dry_limit_demo.csv"):
        assert (out / name).exists()
    checks = {c["name"]: c for c in summary(out)["checks"]}
    assert checks["cc.closed_form_vs_quadrature"]["pass"]
    assert checks["derived.rho_ref"]["pass"] and checks["derived.h_sc"]["pass"]
    printed = capsys.readouterr().out
    assert printed.count("PASS") + printed.count("FAIL") == len(checks)


def test_relaxation_study(tmp_path):
    out = tmp_path / "rel"
    assert main(["relaxation-study", "--out", str(out), "--n", "1,2,3"]) == 0
    s = summary(out)
    assert len(s["errors"]) == 3 and (out / "relaxation_n3.csv").exists()
    assert s["checks"][0]["pass"]


def test_inversion_verify(tmp_path):
    out = tmp_path / "inv"
    assert main(["inversion-verify", "--out", str(out), "--resolutions", "8,16"]) == 0
    s = summary(out)
    names = {c["name"]: c["pass"] for c in s["checks"]}
    assert names["inversion.matched_modes"] and names["inversion.dry_reduction_identity"]
    assert all(names[f"inversion.fast_seed{k}"] for k in (1, 2, 3))


def test_bad_arguments_rejected():
    with pytest.raises(SystemExit) as err:
        main(["run", "--out", "x"])
    assert err.value.code == 2
    with pytest.raises(SystemExit):
        main(["run", "--config", "c", "--out", "x", "--seed", "-1"])


def test_missing_config_file(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.yaml"), "--out", str(tmp_path / "o")]) == 2


def test_console_entry_point(tmp_path):
    out = tmp_path / "cc"
    proc = subprocess.run([sys.executable, "-m", "pqglab.cli", "cc-tables", "--out", str(out)],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "cc.closed_form_vs_quadrature" in proc.stdout
