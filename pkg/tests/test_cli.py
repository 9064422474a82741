import json

import numpy as np
import pytest

from fourier_scattering.cli import main
from fourier_scattering.io import read_manifest, write_pgm, write_signal


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_verify_frame_ok(capsys):
    code, out, _ = run(capsys, "verify-frame", "--N", "64", "--a", "4", "--d", "2",
                       "--window", "tent")
    assert code == 0
    assert json.loads(out)["max_deviation"] <= 1e-12


def test_verify_frame_truncated(capsys):
    code, out, _ = run(capsys, "verify-frame", "--N", "64", "--a", "4", "--M", "2")
    assert code == 0 and json.loads(out)["M"] == 2


def test_bad_flags_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["verify-frame", "--N", "64"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["scatter", "--input", "x", "--a", "4", "--M", "wide", "--out", "y"])
    assert exc.value.code == 2


def test_precondition_exit_1(capsys):
    code, _, err = run(capsys, "verify-frame", "--N", "63", "--a", "4")
    assert code == 1
    assert json.loads(err)["error"] == "ConfigurationError"


def test_missing_input_exit_1(tmp_path, capsys):
    code, _, err = run(capsys, "scatter", "--input", str(tmp_path / "nope.pgm"), "--a", "4",
                       "--out", str(tmp_path / "run"))
    assert code == 1 and "error" in json.loads(err)


def test_dims_mismatch_exit_1(tmp_path, capsys):
    write_pgm(tmp_path / "img.pgm", np.zeros((32, 32)))
    code, _, err = run(capsys, "scatter", "--input", str(tmp_path / "img.pgm"), "--N", "64",
                       "--a", "4", "--out", str(tmp_path / "run"))
    assert code == 1 and json.loads(err)["error"] == "FormatError"


def test_pipeline_constant_image(tmp_path, capsys):
    write_pgm(tmp_path / "flat.pgm", np.full((64, 64), 0.4))
    run_dir = tmp_path / "run"
    code, out, _ = run(capsys, "scatter", "--input", str(tmp_path / "flat.pgm"), "--N", "64",
                       "--a", "8", "--M", "2", "--depth", "2", "--out", str(run_dir))
    assert code == 0
    depths = {len(r["path"]) for r in read_manifest(run_dir)["nodes"]}
    assert depths == {0, 1, 2}
    code, out, _ = run(capsys, "census", "--run", str(run_dir), "--threshold", "0.005")
    assert code == 0 and out.strip() == "1,0,0"


def test_scatter_is_deterministic(tmp_path, capsys, rng):
    write_pgm(tmp_path / "img.pgm", rng.random((32, 32)))
    for name, threads in (("a", "1"), ("b", "2")):
        assert run(capsys, "scatter", "--input", str(tmp_path / "img.pgm"), "--a", "8",
                   "--depth", "2", "--threads", threads, "--out", str(tmp_path / name))[0] == 0
    ma = read_manifest(tmp_path / "a")
    mb = read_manifest(tmp_path / "b")
    ma["input"]["source"] = mb["input"]["source"] = None
    assert ma == mb
    for rec in ma["nodes"]:
        assert (tmp_path / "a" / rec["file"]).read_bytes() == \
            (tmp_path / "b" / rec["file"]).read_bytes()


def test_energy_report(tmp_path, capsys, rng):
    write_signal(tmp_path / "s.f64", rng.standard_normal(64))
    assert run(capsys, "scatter", "--input", str(tmp_path / "s.f64"), "--a", "4",
               "--depth", "3", "--mirror-halving", "--out", str(tmp_path / "run"))[0] == 0
    code, out, _ = run(capsys, "energy", "--run", str(tmp_path / "run"))
    rep = json.loads(out)
    assert code == 0
    assert rep["ledger"]["relative_residual"] <= 1e-8
    assert rep["decay"]["proof_bound"] >= rep["decay"]["rate"]


def test_census_csv(tmp_path, capsys, rng):
    write_signal(tmp_path / "s.f64", rng.standard_normal(64))
    run(capsys, "scatter", "--input", str(tmp_path / "s.f64"), "--a", "4", "--M", "3",
        "--out", str(tmp_path / "run"))
    code, out, _ = run(capsys, "census", "--run", str(tmp_path / "run"), "--csv",
                       str(tmp_path / "c.csv"))
    assert code == 0
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "layer,survivors,total" and len(lines) == 4
    assert out.strip() == ",".join(l.split(",")[1] for l in lines[1:])


def test_stability_report(tmp_path, capsys, rng):
    write_signal(tmp_path / "s.f64", rng.standard_normal(64))
    code, out, _ = run(capsys, "stability", "--input", str(tmp_path / "s.f64"), "--a", "4",
                       "--M", "3", "--shift", "0,1", "--warp-amplitude", "1.0")
    rep = json.loads(out)
    assert code == 0
    assert rep["translation"][0]["distance"] == 0.0
    assert rep["translation"][1]["passed"]
    assert len(rep["warp"]["distances"]) == 4


def test_stability_gradient_cap_exit_1(tmp_path, capsys, rng):
    write_signal(tmp_path / "s.f64", rng.standard_normal(64))
    code, _, err = run(capsys, "stability", "--input", str(tmp_path / "s.f64"), "--a", "4",
                       "--M", "3", "--warp-amplitude", "20")
    assert code == 1 and json.loads(err)["error"] == "PreconditionError"
