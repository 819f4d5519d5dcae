import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import write_phantom_manifest
from tumorsynth.cli import main
from tumorsynth.volume_io import Volume, label_volume, load_volume, save_volume


@pytest.fixture(scope="module")
def small_manifest(tmp_path_factory):
    return write_phantom_manifest(tmp_path_factory.mktemp("cli"), n_cases=2, size=40)


def test_synth_writes_outputs(tmp_path, small_manifest, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("target_diameter_mm: [6.0, 12.0]\n")
    out = tmp_path / "out"
    code = main(["synth", "--manifest", str(small_manifest), "--config", str(cfg), "--epoch", "0",
                 "--out", str(out), "--seed", "5"])
    assert code == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == sorted(f"case00{k}_{s}" for k in (0, 1) for s in ("img.rvol", "msk.rvol", "recipe.json"))
    echo = json.loads((out / "case000_recipe.json").read_text())
    assert echo["recipe"]["backend"] == "cellular_automata"
    assert load_volume(out / "case000_msk.rvol").data.any()
    assert "wrote 2/2" in capsys.readouterr().out


def test_synth_handcrafted_and_jobs_match_serial(tmp_path, small_manifest):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("target_diameter_mm: [5.0, 8.0]\n")
    a, b = tmp_path / "a", tmp_path / "b"
    base = ["synth", "--manifest", str(small_manifest), "--config", str(cfg), "--epoch", "1", "--backend", "handcrafted"]
    assert main(base + ["--out", str(a)]) == 0
    assert main(base + ["--out", str(b), "--jobs", "2"]) == 0
    for p in a.iterdir():
        assert p.read_bytes() == (b / p.name).read_bytes()


def _masks(tmp_path):
    x = np.zeros((12, 8, 8), np.uint8)
    y = np.zeros_like(x)
    x[2] = 1
    y[7] = 1
    save_volume(label_volume(x), tmp_path / "a.rvol")
    save_volume(label_volume(y), tmp_path / "b.rvol")
    return str(tmp_path / "a.rvol"), str(tmp_path / "b.rvol")


def test_eval_metrics(tmp_path, capsys):
    a, b = _masks(tmp_path)
    assert main(["eval", "nsd", "--pred", a, "--gt", b, "--tau", "5"]) == 0
    assert capsys.readouterr().out.splitlines() == ["case_id,metric,value", "a,nsd,1.0"]
    assert main(["eval", "dsc", "--pred", a, "--gt", a]) == 0
    assert capsys.readouterr().out.splitlines()[1] == "a,dsc,1.0"


def test_features_command(tmp_path, capsys):
    img = tmp_path / "img.rvol"
    save_volume(Volume(np.full((5, 5, 5), 106, np.int16)), img)
    m = np.zeros((5, 5, 5), np.uint8)
    m[1:3, 1:3, 1:3] = 1
    save_volume(label_volume(m), tmp_path / "m.rvol")
    assert main(["features", "--image", str(img), "--mask", str(tmp_path / "m.rvol")]) == 0
    rows = dict(line.split(",")[1:] for line in capsys.readouterr().out.splitlines()[1:])
    assert float(rows["mean"]) == 106.0 and float(rows["volume_mm3"]) == 8.0


def test_reader_metrics_command(tmp_path, capsys):
    f = tmp_path / "r.csv"
    f.write_text("truth,call\n" + "real,real\n" * 19 + "real,synthetic\n" + "synthetic,synthetic\n" * 9
                 + "synthetic,real\n" * 11)
    assert main(["reader-metrics", "--csv", str(f)]) == 0
    rows = {line.split(",")[1]: float(line.split(",")[2]) for line in capsys.readouterr().out.splitlines()[1:]}
    assert rows["sensitivity"] == 0.95 and rows["specificity"] == 0.45
    assert rows["accuracy"] == pytest.approx(0.70)


def test_phantom_command(tmp_path):
    assert main(["phantom", "--out", str(tmp_path), "--cases", "1", "--size", "16"]) == 0
    assert (tmp_path / "manifest.csv").read_text().startswith("case000,")


def test_exit_codes(tmp_path, small_manifest):
    with pytest.raises(SystemExit) as exc:
        main(["eval", "hausdorff", "--pred", "a", "--gt", "b"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1
    assert main(["eval", "dsc", "--pred", str(tmp_path / "none.rvol"), "--gt", str(tmp_path / "none.rvol")]) == 2
    bad = tmp_path / "bad.rvol"
    bad.write_bytes(b"garbage" * 10)
    assert main(["features", "--image", str(bad), "--mask", str(bad)]) == 2
    empty = tmp_path / "empty.csv"
    empty.write_text("# nothing here\n")
    assert main(["synth", "--manifest", str(empty), "--epoch", "0", "--out", str(tmp_path / "o")]) == 2


def test_console_entry_point(tmp_path):
    a, b = _masks(tmp_path)
    proc = subprocess.run([sys.executable, "-m", "tumorsynth.cli", "eval", "dsc", "--pred", a, "--gt", b],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[1] == "a,dsc,0.0"
