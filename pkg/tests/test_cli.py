import csv
import json
import logging
import shutil

import numpy as np
import pytest

from symvae.cli import (FORMAT_VERSION, ConfigError, RunConfig, build_report, load_checkpoint, parse_config,
                        run_command, save_checkpoint, sweep_jobs)
from symvae.data import read_points
from symvae.models import build_triple
from symvae.training import LOG_COLUMNS

TINY = {"train": {"total_generator_steps": 4, "batch_size": 16, "eval_every": 2, "eval_generated": 200,
                  "eval_real": 200},
        "data": {"n_samples": 400},
        "model": {"encoder_hidden": [8], "decoder_hidden": [8], "discriminator_hidden": [8]}}


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(TINY))
    return str(path)


def test_empty_config_is_default():
    cfg = parse_config("{}")
    assert cfg == RunConfig()
    assert cfg.objective.variant.value == "SVAE" and cfg.train.learning_rate == 1e-4


def test_wgan_config_resolves_decoder_only_and_disc_steps():
    cfg = parse_config('{"objective": {"variant": "WGAN"}}')
    resolved = cfg.to_dict()
    assert resolved["objective"]["decoder_only"] is True
    assert resolved["train"]["disc_steps_per_gen_step"] == 5


def test_svae_with_lambda_rejected():
    with pytest.raises(ConfigError, match="SVAE_R"):
        parse_config('{"objective": {"variant": "SVAE", "lambda": 0.5}}')


@pytest.mark.parametrize("text,path", [
    ('{"objectve": {}}', "$.objectve"),
    ('{"train": {"learning_rte": 0.1}}', "$.train.learning_rte"),
    ('{"train": {"batch_size": "big"}}', "$.train.batch_size"),
    ('{"train": {"batch_size": 1.5}}', "$.train.batch_size"),
    ('{"model": {"encoder_hidden": [8, "x"]}}', "$.model.encoder_hidden"),
    ('{"objective": {"variant": "GAN", "decoder_only": false}}', "$.objective.decoder_only"),
    ('{"train": {"learning_rate": -1}}', "$.train"),
    ('[1, 2]', "$"),
    ('{bad json', "$"),
])
def test_config_errors_name_path(text, path):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.path == path


def test_resolved_config_roundtrips():
    cfg = parse_config('{"objective": {"variant": "SVAE_R", "lambda": 0.1}, "train": {"seed": 4}}')
    again = parse_config(json.dumps(cfg.to_dict()))
    assert again.objective == cfg.objective and again.train.seed == 4


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    triple = build_triple(2, 2, 3)
    path = tmp_path / "ck.npz"
    save_checkpoint(path, triple, RunConfig(), 17)
    back, header = load_checkpoint(path)
    assert header["format_version"] == FORMAT_VERSION and header["step"] == 17
    for group, params in triple.named_params().items():
        for k, v in params.items():
            np.testing.assert_array_equal(back.named_params()[group][k], v)
    dec_only = build_triple(2, 2, 3, decoder_only=True)
    save_checkpoint(path, dec_only, RunConfig(), 0)
    assert load_checkpoint(path)[0].encoder is None


def test_unknown_command_and_flag_exit_2(capsys):
    assert run_command(["fly"]) == 2
    assert run_command(["train", "--bogus"]) == 2
    assert "usage" in capsys.readouterr().err


def test_config_error_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"train": {"learning_rte": 1}}')
    assert run_command(["train", "--config", str(bad), "--output", str(tmp_path / "o")]) == 2
    assert "$.train.learning_rte" in capsys.readouterr().err
    assert run_command(["train", "--variant", "SVAE", "--lambda", "0.5", "--output", str(tmp_path / "o")]) == 2


def test_generate_data(tmp_path, tiny_config):
    out = tmp_path / "data"
    assert run_command(["generate-data", "--config", tiny_config, "--output", str(out)]) == 0
    ps = read_points(out / "data.csv")
    assert ps.points.shape == (400, 2)
    assert json.loads((out / "data_spec.json").read_text())["n_samples"] == 400


def test_train_then_eval(tmp_path, tiny_config, capsys):
    out = tmp_path / "run"
    code = run_command(["train", "--config", tiny_config, "--variant", "svae-r", "--lambda", "0.1",
                        "--seed", "7", "--output", str(out)])
    assert code == 0
    for name in ("metrics.csv", "summary.json", "checkpoint.npz", "config.json"):
        assert (out / name).exists()
    config = json.loads((out / "config.json").read_text())
    assert config["format_version"] == FORMAT_VERSION and config["train"]["seed"] == 7
    assert config["objective"] == {"variant": "SVAE_R", "lambda": 0.1, "generator_transform": "raw-f",
                                   "decoder_only": False}
    with open(out / "metrics.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == list(LOG_COLUMNS) and len(rows) == 2
    capsys.readouterr()
    assert run_command(["eval", "--output", str(out)]) == 0
    record = json.loads(capsys.readouterr().out)
    assert record["step"] == 4 and 1.0 <= record["is_analog"] <= 5.0
    # re-executable from the directory alone
    assert run_command(["train", "--config", str(out / "config.json"), "--output", str(tmp_path / "again")]) == 0
    with open(tmp_path / "again" / "metrics.csv", newline="") as fh:
        assert list(csv.DictReader(fh)) == rows


def test_sweep_plan_seeds_and_counts(tmp_path):
    jobs = sweep_jobs(RunConfig(), ["SVAE_R", "ALI"], [0.0, 0.01, 0.1], 3, tmp_path)
    assert len(jobs) == 12
    assert [cfg.train.seed for cfg, _ in jobs] == list(range(12))
    assert sum(cfg.objective.variant.value == "SVAE_R" for cfg, _ in jobs) == 9
    assert len({d for _, d in jobs}) == 12


def test_sweep_and_report(tmp_path, tiny_config, caplog):
    root = tmp_path / "sweep"
    code = run_command(["sweep", "--config", tiny_config, "--lambda", "0,0.1", "--seeds", "2", "--output", str(root)])
    assert code == 0
    runs = json.loads((root / "sweep.json").read_text())["runs"]
    assert len(runs) == 4
    with open(root / "sweep_summary.csv", newline="") as fh:
        assert len(list(csv.DictReader(fh))) == 4
    shutil.rmtree(root / runs[0])
    with caplog.at_level(logging.WARNING, logger="symvae"):
        table = build_report(root)
    assert runs[0] in caplog.text
    assert {(r["variant"], r["lambda"]): r["n_runs"] for r in table} == {("SVAE_R", 0.0): 1, ("SVAE_R", 0.1): 2}
    assert run_command(["report", str(root)]) == 0
    assert (root / "report.csv").exists()


def test_report_without_runs(tmp_path):
    assert run_command(["report", str(tmp_path)]) == 1
