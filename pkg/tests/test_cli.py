import json

import numpy as np
import pytest

from hihomog.cli import build_parser, main
from hihomog.spectral import SpectralField


@pytest.fixture(scope="module")
def cell_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "cell"
    assert main(["cell-solve", "--builtin", "skew:m=2", "--out", str(out)]) == 0
    return out


def test_cell_structure_and_potentials(cell_dir, tmp_path, capsys):
    assert (cell_dir / "manifest.json").exists()
    assert main(["structure", "--cell", str(cell_dir), "--out", str(tmp_path / "s.json")]) == 0
    assert json.loads((tmp_path / "s.json").read_text())["passed"]
    assert main(["potential-check", "--cell", str(cell_dir), "--out", str(tmp_path / "p.json")]) == 0
    data = json.loads((tmp_path / "p.json").read_text())
    assert data["passed"] and len(data["potentials"]) == 2 * 3


def test_field_commands(cell_dir, tmp_path):
    f = SpectralField(SpectralField.mode((1, 1), 2).coeffs[None], 2)
    f.save(tmp_path / "f.field")
    assert main(["solve-hom", "--cell", str(cell_dir), "--f", str(tmp_path / "f.field"),
                 "--out", str(tmp_path / "u.field")]) == 0
    assert main(["k1-apply", "--cell", str(cell_dir), "--out", str(tmp_path / "k.field")]) == 0
    assert main(["solve-fine", "--builtin", "skew", "--K", "4", "--f", str(tmp_path / "f.field"),
                 "--out", str(tmp_path / "ue.field")]) == 0
    u, ue = SpectralField.load(tmp_path / "u.field"), SpectralField.load(tmp_path / "ue.field")
    assert u.comp_shape == (1,) and np.isfinite(ue.l2())
    assert SpectralField.load(tmp_path / "k.field").l2() > 0


def test_convergence_command(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("HIHOMOG_THREADS", "2")
    cfg = {"schema": "hihomog-experiment/1", "coefficients": {"builtin": "harmonic", "params": {"m": 2}},
           "K": [8, 16, 32, 64]}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    rc = main(["convergence", "--config", str(tmp_path / "cfg.json"), "--out", str(tmp_path / "r.json"),
               "--csv", str(tmp_path / "r.csv")])
    assert rc == 0
    assert "PASS  zeroth_l2" in capsys.readouterr().out
    assert json.loads((tmp_path / "r.json").read_text())["valid"]
    assert (tmp_path / "r.csv").read_text().startswith("eps,K,kind,error")


def test_invalid_run_exit_code(tmp_path):
    # a coset cutoff smaller than the corrector band aborts the study
    cfg = {"coefficients": {"builtin": "skew"}, "K": [8, 16, 32], "coset_cutoff": 3}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    assert main(["convergence", "--config", str(tmp_path / "cfg.json")]) == 1


def test_bad_input_exit_code(tmp_path, capsys):
    assert main(["solve-fine", "--builtin", "nope", "--K", "4", "--out", str(tmp_path / "x")]) == 2
    assert "unknown builtin" in capsys.readouterr().err
    (tmp_path / "cfg.json").write_text(json.dumps({"coefficients": {"builtin": "skew"}, "eps": [0.3, 0.2, 0.1]}))
    assert main(["convergence", "--config", str(tmp_path / "cfg.json")]) == 2
    with pytest.raises(SystemExit):
        build_parser().parse_args(["cell-solve", "--out", "x"])


def test_smoothing_command(tmp_path):
    assert main(["smoothing", "--seed", "1", "--samples", "3", "--out", str(tmp_path / "sm.json")]) == 0
    assert json.loads((tmp_path / "sm.json").read_text())["suite"] == "smoothing"
