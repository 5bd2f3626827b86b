import json

import pytest

from zknf.cli import dispatch, load_config
from zknf.errors import ValidationError

RUN = {"epsilon": 0.04, "Lx": 50.0, "Nx": 256, "Ny": 16, "dt": 0.0025, "t_end": 2.0,
       "output_every": 200, "frame_speed": 1 / 3, "sponge_width": 12.0, "sponge_strength": 3.0}


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def test_config_sections(tmp_path):
    run, stages = load_config(write(tmp_path / "c.json", {**RUN, "track": {"stop_factor": 2.0}}))
    assert run.Nx == 256
    assert stages["track"]["stop_factor"] == 2.0
    assert stages["coeffs"]["k"] == 2
    with pytest.raises(ValidationError):
        load_config(write(tmp_path / "d.json", {"track": {"bogus": 1}}))
    with pytest.raises(ValidationError):
        load_config(str(tmp_path / "missing.json"))


def test_coeffs_and_manifest(tmp_path):
    assert dispatch(["coeffs", "--out", str(tmp_path)]) == 0
    cset = json.loads((tmp_path / "coefficients.json").read_text())
    assert cset["beta"] < 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["command"] == "coeffs" and man["version"]
    assert man["run"]["Nx"] == 512


def test_exit_codes(tmp_path, capsys):
    bad = write(tmp_path / "bad.json", {"nope": 1})
    assert dispatch(["coeffs", "--config", bad, "--out", str(tmp_path)]) == 2
    assert "invalid input" in capsys.readouterr().err
    assert dispatch(["stationary", "--delta", "0.2", "--out", str(tmp_path)]) == 2
    assert dispatch(["track", "--out", str(tmp_path / "empty")]) == 2
    capsys.readouterr()
    # soliton too wide for the spectral grid: numerical failure
    assert dispatch(["spectrum", "--c", "0.001", "--out", str(tmp_path)]) == 3
    assert capsys.readouterr().err.count("\n") == 1
    with pytest.raises(SystemExit) as info:
        dispatch(["frobnicate"])
    assert info.value.code == 2


def test_spectrum_and_stationary(tmp_path):
    assert dispatch(["spectrum", "--c", "0.4", "--n", "1", "--mu", "0", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "spectrum.json").read_text())
    assert rep["real_pair"] and rep["mu"] == 0.0
    cfg = write(tmp_path / "s.json", {"stationary": {"num_points": 256, "modes": 6, "ny": 16}})
    assert dispatch(["stationary", "--config", cfg, "--delta", "2e-3", "--out", str(tmp_path)]) == 0
    rows = json.loads((tmp_path / "stationary.json").read_text())["rows"]
    assert 0.9 < rows[0]["ratio"] < 1.1


def test_pipeline_is_deterministic(tmp_path):
    cfg = write(tmp_path / "run.json", RUN)
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert dispatch(["all", "--config", cfg, "--out", str(out)]) == 0
        outs.append(out)
    for fname in ("trace.csv", "normalform.csv", "compare.json", "invariants.csv", "manifest.json"):
        assert (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes()
    rep = json.loads((outs[0] / "compare.json").read_text())
    assert set(rep) >= {"c_plus", "gamma_used", "max_rel_dev", "window_end", "blowup_time_ode"}
    assert rep["checks"]["b0_within_1e-6"]


def test_stages_separately(tmp_path):
    cfg = write(tmp_path / "run.json", {**RUN, "t_end": 1.0})
    out = str(tmp_path / "o")
    for stage in ("simulate", "track", "normalform", "compare"):
        assert dispatch([stage, "--config", cfg, "--out", out]) == 0
    trace = (tmp_path / "o" / "trace.csv").read_text().splitlines()
    assert trace[0].startswith("t,a,c,h,delta,re_b,im_b")
    assert len(trace) == 1 + 1 + 2  # header, t=0, two outputs
