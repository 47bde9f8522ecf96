import json
import textwrap

import numpy as np
import pytest

from modelgnn import cli, gnn, metrics
from modelgnn.scenario import read_dataset


def write_config(path, body):
    path.write_text(textwrap.dedent(body))
    return str(path)


@pytest.fixture
def small_config(tmp_path):
    return write_config(tmp_path / "run.ini", """
        [scenario]
        antennas = 4
        users = 2
        samples = 20
        snr_db = 10
        seed = 1

        [arch]
        widths = 2, 4, 2

        [train]
        epochs = 2
        batch_size = 10

        [eval]
        samples = 6
    """)


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_gen_writes_dataset_and_manifest(tmp_path, small_config):
    out = tmp_path / "gen"
    assert run("gen", "--config", small_config, "--out", out) == 0
    ds = read_dataset(out / "dataset.pgnn")
    assert ds.tensor.shape == (20, 1, 1, 4, 2)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "gen" and manifest["seed"] == 1
    assert manifest["config"]["scenario"]["antennas"] == "4"


def test_gen_empty_dataset(tmp_path):
    cfg = write_config(tmp_path / "c.ini", "[scenario]\nantennas = 8\nusers = 4\nsamples = 0\n")
    assert run("gen", "--config", cfg, "--out", tmp_path / "o") == 0
    assert read_dataset(tmp_path / "o" / "dataset.pgnn").tensor.shape[0] == 0


def test_gen_is_reproducible_from_manifest(tmp_path, small_config):
    run("gen", "--config", small_config, "--out", tmp_path / "a")
    snap = json.loads((tmp_path / "a" / "manifest.json").read_text())["config"]
    replay = cli.RunConfig.from_snapshot(snap)
    with open(tmp_path / "replay.ini", "w") as fh:
        replay.parser.write(fh)
    run("gen", "--config", tmp_path / "replay.ini", "--out", tmp_path / "b")
    assert (tmp_path / "a" / "dataset.pgnn").read_bytes() == (tmp_path / "b" / "dataset.pgnn").read_bytes()


def test_missing_field_names_it(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.ini", "[scenario]\nusers = 4\n")
    assert run("gen", "--config", cfg, "--out", tmp_path / "o") == 2
    assert "[scenario] antennas" in capsys.readouterr().err


def test_parse_error_reports_line(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.ini", "[scenario]\nantennas = 4\nthis line is broken\n")
    assert run("gen", "--config", cfg, "--out", tmp_path / "o") == 2
    assert "line 3" in capsys.readouterr().err


def test_bad_value_names_field(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.ini", "[scenario]\nantennas = eight\nusers = 4\n")
    assert run("gen", "--config", cfg, "--out", tmp_path / "o") == 2
    assert "[scenario] antennas" in capsys.readouterr().err


def test_unknown_arch(tmp_path, small_config):
    assert run("train", "--config", small_config, "--arch", "resnet", "--out", tmp_path / "o") == 2


def test_unknown_subcommand_is_usage_error():
    assert run("frobnicate") == 2


@pytest.mark.parametrize("loss,lr,widths", [("se", 0.01, [2, 32, 32, 8, 2]),
                                            ("ee", 0.001, [2, 32, 32, 32, 8, 2])])
def test_model_defaults(tmp_path, loss, lr, widths):
    cfg = cli.RunConfig.load(write_config(tmp_path / "c.ini", "[scenario]\nantennas = 4\nusers = 2\n"))
    assert cli.train_config_from(cfg, loss, 0).learning_rate == lr
    assert cli.build_params(cfg, "model", loss, 0).widths == widths


def test_train_then_eval(tmp_path, small_config):
    out = tmp_path / "t"
    assert run("train", "--config", small_config, "--arch", "model", "--out", out) == 0
    for name in ("checkpoint.pgnp", "checkpoint.json", "history.csv", "manifest.json"):
        assert (out / name).exists()
    assert len((out / "history.csv").read_text().splitlines()) == 3
    ev = tmp_path / "e"
    assert run("eval", "--config", small_config, "--arch", "model",
               "--checkpoint", out / "checkpoint.pgnp", "--out", ev) == 0
    rec = metrics.read_jsonl(ev / "metrics.jsonl")[0]
    assert 0 < rec["se_ratio"] < 150
    assert len(rec["per_user_rates"]) == 12
    assert rec["flops"] == metrics.flop_count("model", 4, 2, [2, 4, 2])


def test_eval_other_user_count(tmp_path, small_config):
    out = tmp_path / "t"
    run("train", "--config", small_config, "--out", out)
    other = write_config(tmp_path / "k3.ini", open(small_config).read().replace("users = 2", "users = 3"))
    assert run("eval", "--config", other, "--checkpoint", out / "checkpoint.pgnp", "--out", tmp_path / "e") == 0
    rec = metrics.read_jsonl(tmp_path / "e" / "metrics.jsonl")[0]
    assert len(rec["per_user_rates"]) == 18


def test_eval_mrt_correlation_and_cache(tmp_path, small_config):
    out = tmp_path / "e"
    assert run("eval", "--config", small_config, "--arch", "mrt", "--out", out) == 0
    first = metrics.read_jsonl(out / "metrics.jsonl")[0]
    assert np.allclose(first["extra"]["normalized_correlation"], 1.0, atol=1e-12)
    assert first["extra"]["oracle_cached"] is False
    assert run("eval", "--config", small_config, "--arch", "mrt", "--out", out) == 0
    second = metrics.read_jsonl(out / "metrics.jsonl")[0]
    assert second["extra"]["oracle_cached"] is True
    assert second["se_ratio"] == first["se_ratio"]
    assert second["per_user_rates"] == first["per_user_rates"]


def test_eval_multicell_checkpoint_on_single_cell_data(tmp_path, small_config):
    path = tmp_path / "mc.pgnp"
    gnn.save_params(path, gnn.init_params("model-multicell", [2, 4, 2]))
    code = run("eval", "--config", small_config, "--arch", "model-multicell",
               "--checkpoint", path, "--out", tmp_path / "e")
    assert code == 2


@pytest.mark.parametrize("arch", ["tgnn", "zfbf", "rzf", "bnn-structured"])
def test_eval_baselines(tmp_path, small_config, arch):
    assert run("eval", "--config", small_config, "--arch", arch, "--oracle", "none", "--out", tmp_path / arch) == 0


def test_ee_train_and_eval(tmp_path, small_config):
    text = open(small_config).read().replace("[train]\n", "[train]\nloss = ee\nr_min = 1.0\n")
    cfg = write_config(tmp_path / "ee.ini", text)
    assert run("train", "--config", cfg, "--out", tmp_path / "t") == 0
    meta = json.loads((tmp_path / "t" / "checkpoint.json").read_text())
    assert meta["adam_steps"] == 4 and meta["multiplier"] >= 0
    assert run("eval", "--config", cfg, "--checkpoint", tmp_path / "t" / "checkpoint.pgnp",
               "--out", tmp_path / "e") == 0
    rec = metrics.read_jsonl(tmp_path / "e" / "metrics.jsonl")[0]
    assert rec["ee_ratio"] > 0 and "ee_zfbf_full_power" in rec["extra"]


@pytest.mark.parametrize("kind,grid,rows", [("snr", "0,10,20", 3), ("users", "2,3", 2)])
def test_sweep_rows(tmp_path, small_config, kind, grid, rows):
    text = open(small_config).read().replace("[eval]\n", f"[eval]\ngrid = {grid}\nseeds = 1\n")
    cfg = write_config(tmp_path / "s.ini", text)
    assert run("sweep", "--config", cfg, "--kind", kind, "--arch", "zfbf", "--out", tmp_path / "s") == 0
    lines = (tmp_path / "s" / f"sweep-{kind}.csv").read_text().splitlines()
    assert len(lines) == rows + 1


def test_sweep_users_default_grid():
    assert len(cli.SWEEP_DEFAULTS["users"].split(",")) == 15


def test_sweep_trains_per_seed(tmp_path, small_config):
    text = open(small_config).read().replace("[eval]\n", "[eval]\ngrid = 10\nseeds = 2\n")
    cfg = write_config(tmp_path / "s.ini", text)
    assert run("sweep", "--config", cfg, "--kind", "snr", "--out", tmp_path / "s") == 0
    row = (tmp_path / "s" / "sweep-snr.csv").read_text().splitlines()[1].split(",")
    assert row[0] == "10" and row[2] == "2"


@pytest.mark.parametrize("argv,expected", [
    (["--arch", "vanilla", "--N", "1", "--K", "1", "--widths", "1,1"], "8"),
    (["--arch", "model", "--N", "1", "--K", "1", "--widths", "1,1"], "16"),
    (["--arch", "vanilla", "--N", "8", "--K", "4", "--widths", "2,64,2"],
     str((6 * 32 * 128 + 2 * 32 * 2) + (6 * 32 * 128 + 2 * 32 * 64))),
])
def test_flops_command(capsys, argv, expected):
    assert run("flops", *argv) == 0
    assert capsys.readouterr().out.strip() == expected


def test_flops_bad_arch():
    assert run("flops", "--arch", "tgnn", "--N", "2", "--K", "2") == 2


def test_variable_user_gen(tmp_path):
    cfg = write_config(tmp_path / "c.ini", "[scenario]\nantennas = 8\nusers = uniform:2:4\nsamples = 30\n")
    assert run("gen", "--config", cfg, "--out", tmp_path / "o") == 0
    files = sorted(p.name for p in (tmp_path / "o").glob("dataset-K*.pgnn"))
    assert files and all(read_dataset(tmp_path / "o" / f).config.K in (2, 3, 4) for f in files)
    total = sum(read_dataset(tmp_path / "o" / f).tensor.shape[0] for f in files)
    assert total == 30


def test_parse_users():
    assert cli.parse_users("4").kind == "fixed"
    with pytest.raises(cli.ConfigError):
        cli.parse_users("poisson:3")
