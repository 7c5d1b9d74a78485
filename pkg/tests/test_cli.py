import json

import pytest

from prlpid.cli import EXIT_CONFIG, EXIT_DIVERGED, EXIT_OK, main


def test_dump_config_precedence(tmp_path, capsys):
    cfg_file = tmp_path / "c.json"
    cfg_file.write_text(json.dumps({"scenario": "eq24_two_tank", "seed": 4, "ppo": {"lr": 1e-4}}))
    assert main(["dump-config", "--config", str(cfg_file), "--seed", "7", "--set", "ppo.epochs=3",
                 "--no-forecast", "--smoothing", "lwma"]) == EXIT_OK
    data = json.loads(capsys.readouterr().out)
    assert data["scenario"] == "eq24_two_tank"
    assert data["seed"] == 7 and data["ppo"]["lr"] == 1e-4 and data["ppo"]["epochs"] == 3
    assert data["forecast"]["enabled"] is False and data["smoothing"]["strategy"] == "lwma"


@pytest.mark.parametrize("argv", [
    ["dump-config", "--scenario", "nope"],
    ["dump-config", "--set", "ppo.bogus=1"],
    ["dump-config", "--set", "noequals"],
    ["dump-config", "--config", "/nonexistent/c.json"],
    ["eval", "--scenario", "eq16_first_order"],
    ["eval", "--scenario", "eq16_first_order", "--fixed-gains", "99", "1", "0"],
])
def test_config_errors_exit_2(argv, capsys):
    assert main(argv) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_eval_fixed_gains_and_metrics(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["eval", "--scenario", "eq16_first_order", "--fixed-gains", "2", "2", "0.05",
                 "--output-dir", str(out)]) == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    capsys.readouterr()
    assert main(["metrics", str(out / "trace_0.csv"), "--interval", "0:300", "--interval", "0:100"]) == EXIT_OK
    data = json.loads(capsys.readouterr().out)
    assert data["metrics"][0]["iae"] == pytest.approx(report["evaluations"][0]["metrics"][0]["iae"], rel=1e-12)
    assert data["metrics"][1]["k_hi"] == 100 and data["ts"] == pytest.approx(0.1)
    assert main(["metrics", str(out / "trace_0.csv"), "--interval", "0:999"]) == EXIT_CONFIG


def test_divergent_eval_exits_3(tmp_path):
    assert main(["eval", "--scenario", "eq16_first_order", "--fixed-gains", "0.01", "100", "0",
                 "--output-dir", str(tmp_path)]) == EXIT_DIVERGED
    assert json.loads((tmp_path / "report.json").read_text())["diverged"] is True


def test_eval_checkpoint_dimension_mismatch_exits_2(tmp_path):
    import numpy as np

    from prlpid.neuralnet import init_params, save_checkpoint

    path = tmp_path / "ck.json"
    save_checkpoint(path, init_params(12, 15, np.random.default_rng(0)), None, 0)
    assert main(["eval", "--scenario", "eq16_first_order", "--checkpoint", str(path)]) == EXIT_CONFIG


def test_train_then_eval_checkpoint(tmp_path):
    run = tmp_path / "train"
    assert main(["train", "--scenario", "eq16_first_order", "--total-steps", "256",
                 "--set", "ppo.rollout_length=128", "--output-dir", str(run)]) in (EXIT_OK, EXIT_DIVERGED)
    assert (run / "checkpoint.json").exists() and (run / "training_log.csv").exists()
    code = main(["eval", "--scenario", "eq16_first_order", "--checkpoint", str(run / "checkpoint.json"),
                 "--output-dir", str(tmp_path / "eval")])
    assert code in (EXIT_OK, EXIT_DIVERGED)
    assert (tmp_path / "eval" / "trace_0.csv").exists()


def test_unknown_verb_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
