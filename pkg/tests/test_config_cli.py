import json

import numpy as np
import pytest

from difflab import config as cfgmod
from difflab.cli import main

SMALL = {
    "name": "small",
    "generator": {"kind": "lattice", "dim": 2},
    "model": {"variant": "iid", "dist": {"law": "gaussian", "sigma": 0.1}, "seed": 1},
    "frequencies": {"kind": "explicit", "values": [[1.0, 0.0], [0.3, 0.4], [3.0, 3.0]]},
    "R_schedule": [10, 20],
    "seeds": [1, 2],
    "analyses": ["spectrum", "recover"],
}


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.json"
    p.write_text(json.dumps(SMALL, indent=2))
    return p


def test_missing_generator_named(tmp_path):
    bad = dict(SMALL)
    del bad["generator"]
    with pytest.raises(cfgmod.ConfigError, match="generator"):
        cfgmod.validate(bad)


def test_error_points_at_field_and_line(tmp_path):
    bad = json.loads(json.dumps(SMALL))
    bad["model"]["dist"]["law"] = "cauchy"
    text = json.dumps(bad, indent=2)
    with pytest.raises(cfgmod.ConfigError, match=r"model/dist/law.*line 10"):
        cfgmod.validate(bad, text)


def test_unknown_key_rejected():
    with pytest.raises(cfgmod.ConfigError):
        cfgmod.validate(dict(SMALL, servce_mode=True))


def test_hash_ignores_key_order():
    shuffled = dict(reversed(list(SMALL.items())))
    assert cfgmod.config_hash(shuffled) == cfgmod.config_hash(SMALL)
    assert cfgmod.config_hash(dict(SMALL, seeds=[3])) != cfgmod.config_hash(SMALL)


@pytest.mark.parametrize("name", cfgmod.preset_names())
def test_presets_validate(name):
    cfgmod.validate(cfgmod.load(name))


def test_cli_generate_spectrum_recover(small_cfg, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["generate", "--config", str(small_cfg), "--out", str(out)]) == 0
    assert (out / "points.csv").exists()
    assert main(["spectrum", "--config", str(small_cfg), "--out", str(out), "--threads", "2"]) == 0
    assert (out / "spectrum_seed2_R20.csv").exists()
    assert main(["recover", "--config", str(small_cfg), "--out", str(out), "--seed", "7",
                 "--cloak-threshold", "0.2"]) == 0
    rep = json.loads((out / "recovery_seed7.json").read_text())
    assert rep["metadata"]["tau"] == 0.2
    assert [r["cloaked"] for r in rep["records"]] == [False, False, True]
    man = json.loads((out / "manifest.json").read_text())
    assert man["seeds"] == {"seed7": "ok"}


def test_cli_threads_from_environment(small_cfg, tmp_path, monkeypatch):
    monkeypatch.setenv("DIFFLAB_THREADS", "1")
    assert main(["spectrum", "--config", str(small_cfg), "--out", str(tmp_path / "a")]) == 0
    monkeypatch.setenv("DIFFLAB_THREADS", "4")
    assert main(["spectrum", "--config", str(small_cfg), "--out", str(tmp_path / "b")]) == 0
    f = "spectrum_seed1_R20.csv"
    assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_cli_plot_and_empty_csv(small_cfg, tmp_path):
    out = tmp_path / "out"
    assert main(["spectrum", "--config", str(small_cfg), "--out", str(out), "--plot"]) == 0
    assert (out / "spectrum_seed1_R10.svg").exists()
    empty = tmp_path / "empty.csv"
    empty.write_text("lambda_1,lambda_2,re,im,R,kind\n")
    assert main(["plot", "--config", str(empty)]) == 0
    assert empty.with_suffix(".svg").exists()


def test_svg_reproducible(small_cfg, tmp_path):
    for d in ("a", "b"):
        main(["spectrum", "--config", str(small_cfg), "--out", str(tmp_path / d), "--plot"])
    f = "spectrum_seed1_R20.svg"
    assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["spectrum", "--config", str(tmp_path / "nope.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"generator": {"kind": "lattice"},\n "R_schedule": [5, 3], "analyses": ["spectrum"]}')
    assert main(["spectrum", "--config", str(bad)]) == 2
    assert "R_schedule" in capsys.readouterr().err
    capped = dict(SMALL, generator={"kind": "lattice", "dim": 2, "cap": 100})
    p = tmp_path / "cap.json"
    p.write_text(json.dumps(capped))
    assert main(["generate", "--config", str(p), "--out", str(tmp_path / "o")]) == 3


def test_verify_criterion_preset(tmp_path, capsys):
    assert main(["verify", "--config", "criterion_03", "--out", str(tmp_path)]) == 0
    assert "[PASS] criterion 03" in capsys.readouterr().out
    assert json.loads((tmp_path / "criterion_03.json").read_text())["passed"] is True


def test_build_frequencies_dual_module():
    cfg = cfgmod.load("criterion_04")
    fs = cfgmod.build_frequencies(cfg["frequencies"], cfg["generator"])
    assert len(fs) > 0 and np.all(np.abs(fs.amplitudes) > 0)
