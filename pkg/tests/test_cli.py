import os
import subprocess
import sys

import numpy as np
import pytest

from viewsynth import cli, config, fileio

SMALL = ["--set", "width=64", "--set", "height=48"]


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def rendered(tmp_path_factory):
    out = tmp_path_factory.mktemp("render")
    assert run_cli("run", "--mode", "render", "--scene", "two_plane", "--out", out, *SMALL) == 0
    return out


def test_render_outputs(rendered):
    names = set(os.listdir(rendered))
    for name in ("left.pgm", "right.pgm", "left_prev.pgm", "left_next.pgm", "depth.vsd", "valid.pgm", "poses.txt", "scene.cfg"):
        assert name in names
    assert fileio.read_depth(rendered / "depth.vsd").shape == (48, 64)
    assert len(fileio.read_poses(rendered / "poses.txt")) == 2


def test_pipeline_from_files(rendered, tmp_path, capsys):
    out = tmp_path / "joint"
    code = run_cli(
        "run", "--mode", "joint", "--config", rendered / "scene.cfg", "--out", out,
        "--iterations", 30, "--scales", 2,
    )
    assert code == 0
    for name in ("depth.vsd", "disp_left.vsd", "disp_right.vsd", "poses.txt", "mask_0.pgm", "history.csv", "metrics.txt"):
        assert (out / name).exists()
    history = (out / "history.csv").read_text().splitlines()
    assert history[0].split(",")[:2] == ["iteration", "lr"]
    assert len(history) == 32
    assert "abs_rel = " in capsys.readouterr().out

    ev = tmp_path / "eval"
    code = run_cli(
        "run", "--mode", "evaluate", "--out", ev,
        "--input", out / "depth.vsd", "--input", rendered / "depth.vsd", "--input", rendered / "valid.pgm",
    )
    assert code == 0
    values = fileio.read_config(ev / "metrics.txt")
    assert 0 <= float(values["delta1"]) <= float(values["delta2"]) <= float(values["delta3"]) <= 1


def test_postprocess(tmp_path, rng):
    a, b = rng.uniform(1, 5, (2, 6, 40))
    fileio.write_depth(a, tmp_path / "a.vsd")
    fileio.write_depth(b, tmp_path / "b.vsd")
    assert run_cli("run", "--mode", "postprocess", "--out", tmp_path, "--input", tmp_path / "a.vsd", "--input", tmp_path / "b.vsd") == 0
    out = fileio.read_depth(tmp_path / "disp_pp.vsd")
    np.testing.assert_allclose(out[:, 2:38], 0.5 * (a + b)[:, 2:38], rtol=1e-6)


def test_missing_file_names_path(tmp_path, capsys):
    missing = tmp_path / "nope.pgm"
    code = run_cli("run", "--mode", "stereo", "--out", tmp_path, "--input", missing, "--input", missing)
    assert code == 2
    err = capsys.readouterr().err.strip()
    assert err.startswith("viewsynth: error kind=missing-file")
    assert str(missing) in err
    assert len(err.splitlines()) == 1


def test_unknown_key_and_bad_value(tmp_path, capsys):
    assert run_cli("run", "--mode", "stereo", "--out", tmp_path, "--set", "bogus=1") == 2
    assert run_cli("run", "--mode", "stereo", "--out", tmp_path, "--set", "lr=fast") == 2
    assert "kind=config" in capsys.readouterr().err


def test_corrupt_input_reports_parse_error(tmp_path, capsys):
    (tmp_path / "bad.vsd").write_bytes(b"NOTDEPTH" + bytes(20))
    (tmp_path / "gt.vsd").write_bytes(fileio.encode_depth(np.ones((2, 2))))
    code = run_cli("run", "--mode", "evaluate", "--out", tmp_path, "--input", tmp_path / "bad.vsd", "--input", tmp_path / "gt.vsd")
    assert code == 1
    assert "kind=parse" in capsys.readouterr().err


def test_precedence(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("mode = stereo\nlr = 0.2\niterations = 7\nleft = img.pgm\n")
    cfg = config.load(str(cfg_file), {"lr": "0.3"})
    assert cfg.lr == 0.3
    assert cfg.iterations == 7
    assert cfg.scales == config.RunConfig().scales
    assert cfg.left == str(tmp_path / "img.pgm")
    assert config.load(None, {"median_scale": "auto"}).median_scale is None
    assert config.load(None, {"use_masks": "false"}).use_masks is False


def test_outputs_are_deterministic(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert run_cli("run", "--mode", "stereo", "--scene", "stereo_d4", "--out", out, "--iterations", 20, *SMALL) == 0
        outs.append(out)
    for name in sorted(os.listdir(outs[0])):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "viewsynth", "run", "--mode", "render", "--scene", "plane_z10", "--out", str(tmp_path), *SMALL],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "left.pgm").exists()
