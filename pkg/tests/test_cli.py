"""End-to-end CLI pipeline at micro scale, exit codes, determinism."""
import os

import pytest

from embaug.cli import main

TINY_CFG = """\
seeds = 0
augset = hflip
scenarios = pixel-pixel, pixel-none, pixel-embed, none-none

[data]
base_per_class = 8
base_eval_per_class = 6
target_per_class = 6
target_eval_per_class = 6
image_size = 1, 8, 8
pos_jitter = 1.0
scale_range = 1.5, 2.5
intensity_range = 0.6, 1.0
noise_std = 0.05

[base]
epochs = 2

[transfer]
epochs = 2
hidden = 8, 8

[omega]
epochs = 2

[optim]
batch_size = 16
"""


@pytest.fixture()
def cfg_path(tmp_path):
    p = tmp_path / "tiny.cfg"
    p.write_text(TINY_CFG)
    return str(p)


def run(*argv):
    return main(list(argv))


class TestExitCodes:
    def test_missing_config_file(self, tmp_path):
        assert run("cost", "--config", str(tmp_path / "absent.cfg")) == 2

    def test_bad_config_key(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text("sedd = 1\n")
        assert run("cost", "--config", str(p), "--out", str(tmp_path)) == 2

    def test_transfer_without_checkpoints(self, cfg_path, tmp_path, capsys):
        out = str(tmp_path / "out")
        assert run("transfer", "--config", cfg_path, "--out", out) == 2
        assert "missing phi checkpoint" in capsys.readouterr().err

    def test_omega_without_base(self, cfg_path, tmp_path, capsys):
        out = str(tmp_path / "out")
        assert run("train-omega", "--config", cfg_path, "--out", out) == 2
        assert "missing phi checkpoint" in capsys.readouterr().err


class TestStandaloneCommands:
    def test_gen_data(self, cfg_path, tmp_path):
        out = str(tmp_path / "data")
        assert run("gen-data", "--config", cfg_path, "--out", out,
                   "--set", "data.image_size=3,32,32") == 0
        names = sorted(os.listdir(out))
        assert names == ["base-eval.bin", "base-train.bin",
                         "target-eval.bin", "target-train.bin"]

    def test_gen_data_rejects_nonstandard_size(self, cfg_path, tmp_path, capsys):
        assert run("gen-data", "--config", cfg_path,
                   "--out", str(tmp_path / "d")) == 2
        assert "3x32x32" in capsys.readouterr().err

    def test_cost_writes_json(self, cfg_path, tmp_path):
        out = str(tmp_path / "out")
        assert run("cost", "--config", cfg_path, "--out", out) == 0
        import json
        payload = json.loads((tmp_path / "out" / "cost.json").read_text())
        assert payload["n_variants"] == 2
        assert payload["predicted_ratio"] > 0

    def test_gradcheck_passes(self, cfg_path, tmp_path, capsys):
        assert run("gradcheck", "--config", cfg_path,
                   "--out", str(tmp_path)) == 0
        assert "max relative error" in capsys.readouterr().out

    def test_report_without_metrics(self, cfg_path, tmp_path, capsys):
        out = str(tmp_path / "empty")
        os.makedirs(out)
        assert run("report", "--config", cfg_path, "--out", out) == 2
        assert "no metrics CSVs" in capsys.readouterr().err


class TestPipeline:
    def test_full_pipeline(self, cfg_path, tmp_path, capsys):
        out = str(tmp_path / "out")
        assert run("train-base", "--config", cfg_path, "--out", out) == 0
        assert run("train-base", "--config", cfg_path, "--out", out,
                   "--set", "augset=none") == 0
        assert os.path.exists(os.path.join(out, "phi-hflip-seed0.ckpt"))
        assert os.path.exists(os.path.join(out, "phi-none-seed0.ckpt"))

        assert run("train-omega", "--config", cfg_path, "--out", out) == 0
        assert os.path.exists(os.path.join(out, "omega-hflip-hflip-seed0.ckpt"))
        assert os.path.exists(os.path.join(out, "omega-loss-hflip-seed0.svg"))

        assert run("transfer", "--config", cfg_path, "--out", out) == 0
        assert os.path.exists(os.path.join(out, "metrics-transfer.csv"))
        assert os.path.exists(os.path.join(out, "curves-transfer.csv"))
        assert os.path.exists(os.path.join(out, "accuracy-transfer.svg"))
        import json
        payload = json.loads(open(os.path.join(out, "summary.json")).read())
        assert set(payload["desk_scale"]) == {"pixel-pixel", "pixel-none",
                                              "pixel-embed", "none-none"}
        assert payload["cost"]["measured_ratio"] == \
            payload["cost"]["predicted_ratio"]
        assert payload["reference_full_scale_percent"]["transfer"][
            "pixel-embed"]["vgg16"] == 63.68

        svg = open(os.path.join(out, "accuracy-transfer.svg")).read()
        assert svg.count("<polyline") == 4

        assert run("report", "--config", cfg_path, "--out", out) == 0
        assert os.path.exists(os.path.join(out, "curves.csv"))

    def test_omega_noop_for_none_setup(self, cfg_path, tmp_path, capsys):
        out = str(tmp_path / "out")
        assert run("train-omega", "--config", cfg_path, "--out", out,
                   "--set", "augset=none") == 0
        assert "nothing to train" in capsys.readouterr().out


class TestDeterminism:
    def test_repeat_run_bitwise_identical_artifacts(self, cfg_path, tmp_path,
                                                    monkeypatch):
        monkeypatch.setenv("EMBAUG_THREADS", "1")
        outs = []
        for name in ("a", "b"):
            out = str(tmp_path / name)
            assert run("train-base", "--config", cfg_path, "--out", out) == 0
            assert run("train-omega", "--config", cfg_path, "--out", out) == 0
            assert run("transfer", "--config", cfg_path, "--out", out,
                       "--set", "scenarios=pixel-embed,pixel-none") == 0
            outs.append(out)
        for fname in ("phi-hflip-seed0.ckpt", "omega-hflip-hflip-seed0.ckpt",
                      "metrics-transfer.csv", "summary.json",
                      "curves-transfer.csv"):
            a = open(os.path.join(outs[0], fname), "rb").read()
            b = open(os.path.join(outs[1], fname), "rb").read()
            assert a == b, fname

    def test_thread_pool_matches_serial(self, cfg_path, tmp_path, monkeypatch):
        serial = str(tmp_path / "serial")
        pooled = str(tmp_path / "pooled")
        for out in (serial, pooled):
            assert run("train-base", "--config", cfg_path, "--out", out) == 0
        monkeypatch.setenv("EMBAUG_THREADS", "1")
        assert run("transfer", "--config", cfg_path, "--out", serial,
                   "--set", "scenarios=pixel-none,pixel-pixel") == 0
        monkeypatch.setenv("EMBAUG_THREADS", "2")
        assert run("transfer", "--config", cfg_path, "--out", pooled,
                   "--set", "scenarios=pixel-none,pixel-pixel") == 0
        a = open(os.path.join(serial, "metrics-transfer.csv")).read()
        b = open(os.path.join(pooled, "metrics-transfer.csv")).read()
        assert a == b


class TestEnvSeed:
    def test_embaug_seed_used_when_config_silent(self, tmp_path, monkeypatch):
        text = TINY_CFG.replace("seeds = 0\n", "")
        p = tmp_path / "noseed.cfg"
        p.write_text(text)
        monkeypatch.setenv("EMBAUG_SEED", "5")
        out = str(tmp_path / "out")
        assert run("train-base", "--config", str(p), "--out", out) == 0
        assert os.path.exists(os.path.join(out, "phi-hflip-seed5.ckpt"))
