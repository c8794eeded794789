import json

import numpy as np
import pytest

from vocdev import model_store
from vocdev.audio_features import read_frames
from vocdev.cli import RunConfig, load_config, main
from vocdev.errors import ConfigError

TINY = {
    "som": {"n_neurons": 120, "iterations": 3000, "sigma0": 12},
    "cl": {"steps_per_frame": 10, "epochs": 2},
    "bootstrap": 200,
    "l2": ["B"],
    "corpus_seconds": {"l1": 10, "l2": 5, "test": 5},
}


@pytest.fixture
def tiny(tmp_path):
    p = tmp_path / "tiny.json"
    p.write_text(json.dumps({**TINY, "output_dir": str(tmp_path / "runs")}))
    return str(p)


@pytest.fixture
def data(tmp_path, tiny):
    m = tmp_path / "data" / "manifest.json"
    for role, secs, seed in (("train", 10, 0), ("test", 5, 3)):
        rc = main(["features", "--synth", "A", "--seconds", str(secs), "--seed", str(seed),
                   "--out", str(tmp_path / "data" / f"a_{role}.mfc"), "--manifest", str(m), "--role", role])
        assert rc == 0
    return m


@pytest.fixture
def model(tmp_path, tiny, data):
    out = tmp_path / "model" / "m.vdm"
    assert main(["train", "--manifest", str(data), "--config", tiny, "--out", str(out)]) == 0
    return out


class TestConfig:
    def test_defaults(self):
        cfg = RunConfig.from_dict({})
        assert cfg.som.n_neurons == 2000 and cfg.som.iterations == 100000
        assert cfg.co.n_constituents == 10

    def test_unknown_keys(self):
        for bad in ({"bogus": 1}, {"som": {"neurons": 5}}, {"corpus_seconds": {"x": 1}}, {"cl": {"epochs": 0}}):
            with pytest.raises(ConfigError):
                RunConfig.from_dict(bad)

    def test_seed_precedence(self, tmp_path, monkeypatch):
        p = tmp_path / "c.json"
        p.write_text('{"seed": 3}')
        assert load_config(p).seed == 3
        monkeypatch.setenv("VOCDEV_SEED", "11")
        assert load_config(p).seed == 11
        assert load_config(p, seed=5).seed == 5
        monkeypatch.setenv("VOCDEV_SEED", "x")
        with pytest.raises(ConfigError):
            load_config(p)

    def test_bad_config_exit_code(self, tmp_path, capsys):
        p = tmp_path / "c.json"
        p.write_text('{"bogus": 1}')
        assert main(["features", "--synth", "A", "--seconds", "1", "--out", str(tmp_path / "x.mfc"), "--config", str(p)]) == 2
        assert "bogus" in capsys.readouterr().err


class TestFeatures:
    def test_wav_one_second(self, tmp_path, capsys):
        from vocdev.audio_features import AudioClip, write_wav

        write_wav(tmp_path / "a.wav", AudioClip(np.zeros(16000) + 0.01, 16000))
        assert main(["features", "--wav", str(tmp_path / "a.wav"), "--out", str(tmp_path / "a.mfc")]) == 0
        assert "30 frames" in capsys.readouterr().out
        assert read_frames(tmp_path / "a.mfc").shape == (30, 20)

    def test_synth_deterministic(self, tmp_path):
        for name in ("x", "y"):
            main(["features", "--synth", "profileA", "--seconds", "3", "--seed", "7", "--out", str(tmp_path / f"{name}.mfc")])
        assert (tmp_path / "x.mfc").read_bytes() == (tmp_path / "y.mfc").read_bytes()

    def test_missing_input(self, tmp_path):
        with pytest.raises(SystemExit) as e:
            main(["features", "--out", str(tmp_path / "x.mfc")])
        assert e.value.code == 2
        with pytest.raises(SystemExit) as e:
            main(["features", "--wav", str(tmp_path / "none.wav"), "--out", str(tmp_path / "x.mfc")])
        assert e.value.code == 2

    def test_unknown_profile(self, tmp_path):
        assert main(["features", "--synth", "Q", "--out", str(tmp_path / "x.mfc")]) == 4

    def test_echo(self, tmp_path):
        main(["features", "--synth", "A", "--seconds", "1", "--seed", "4", "--out", str(tmp_path / "o" / "x.mfc")])
        echo = json.loads((tmp_path / "o" / "run_config.json").read_text())
        assert echo["seed"] == 4 and echo["config"]["features"]["n_fft"] == 1024


class TestTrainImitate:
    def test_train_prints_censuses(self, tmp_path, tiny, data, capsys):
        out = tmp_path / "m1.vdm"
        main(["train", "--manifest", str(data), "--config", tiny, "--out", str(out)])
        text = capsys.readouterr().out
        winners = int(text.split("SOM winner count: ")[1].split()[0])
        z = int(text.split("Z neuron count: ")[1].split()[0])
        assert winners >= 1 and z >= 1
        fp = text.split("fingerprint: ")[1].split()[0]
        main(["train", "--manifest", str(data), "--config", tiny, "--out", str(tmp_path / "m2.vdm")])
        assert fp in capsys.readouterr().out
        assert model_store.load(out).fingerprint() == fp

    def test_co_keeps_fingerprint(self, tmp_path, model, data):
        out = tmp_path / "co"
        assert main(["imitate", "--model", str(model), "--mode", "co", "--manifest", str(data), "--language", "A", "--out", str(out)]) == 0
        s = json.loads((out / "summary.json").read_text())
        assert s["fingerprint_before"] == s["fingerprint_after"]
        assert (out / "co_results.csv").exists() and (out / "co_constituents.json").exists()

    def test_cl_learns(self, tmp_path, tiny, model, data):
        out = tmp_path / "cl"
        saved = tmp_path / "after.vdm"
        rc = main(["imitate", "--model", str(model), "--mode", "cl", "--frames", str(tmp_path / "data" / "a_test.mfc"),
                   "--out", str(out), "--config", tiny, "--save-model", str(saved)])
        assert rc == 0
        s = json.loads((out / "summary.json").read_text())
        assert s["fingerprint_before"] != s["fingerprint_after"]
        assert model_store.load(saved).fingerprint() == s["fingerprint_after"]
        assert (out / "cl_trace.csv").read_text().startswith("iteration,")

    def test_unknown_mode(self, tmp_path, model):
        with pytest.raises(SystemExit) as e:
            main(["imitate", "--model", str(model), "--mode", "xx", "--out", str(tmp_path)])
        assert e.value.code == 2

    def test_inspect(self, model, capsys):
        assert main(["inspect", str(model)]) == 0
        d = json.loads(capsys.readouterr().out)
        assert d["fingerprint"] == model_store.load(model).fingerprint()

    def test_missing_model(self, tmp_path):
        assert main(["inspect", str(tmp_path / "none.vdm")]) == 4


class TestExperiment:
    def test_pca(self, tiny, tmp_path):
        assert main(["experiment", "pca", "--config", tiny]) == 0
        run = next((tmp_path / "runs").iterdir())
        for name in ("pca_neurons.svg", "pca_inputs.svg", "pca_neurons.csv", "pca_inputs.csv", "pca.json", "run_config.json"):
            assert (run / name).exists()

    def test_mode_comparison_outputs(self, tiny, tmp_path):
        rc = main(["experiment", "mode-comparison", "--config", tiny, "--no-assert"])
        assert rc == 0
        run = next((tmp_path / "runs").iterdir())
        rows = (run / "mode_comparison_conditions.csv").read_text().splitlines()
        assert rows[0].startswith("condition,mode") and len(rows) == 7
        report = json.loads((run / "mode_comparison.json").read_text())
        failed = [k for k, c in report["checks"].items() if not c["passed"]]
        assert main(["experiment", "mode-comparison", "--config", tiny]) == (3 if failed else 0)

    def test_missing_language(self, tmp_path, data):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({**TINY, "output_dir": str(tmp_path / "r")}))
        assert main(["experiment", "mode-comparison", "--config", str(p), "--manifest", str(data)]) == 4
