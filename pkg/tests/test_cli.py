import json

import pytest

from strata_lab.cli import main

FILES = ["ledger.csv", "params.json", "report.json", "selection.json", "stratification.json", "trajectory.csv",
         "trajectory.svg"]


def run_cli(args, tmp_path, capsys):
    code = main(args + ["--out", str(tmp_path)] if args and args[0] != "verify" else args)
    out = capsys.readouterr()
    return code, out.out.strip(), out.err


def test_run_writes_all_outputs(tmp_path, capsys):
    code, out, _ = run_cli(["run", "--function", "appendix_fig1", "--K", "800"], tmp_path, capsys)
    assert code == 0
    d = tmp_path / out.split("/")[-1]
    assert sorted(p.name for p in d.iterdir()) == FILES
    params = json.loads((d / "params.json").read_text())
    assert params["beta"] == pytest.approx(0.25) and params["alpha"] == pytest.approx(1 / 12)
    report = json.loads((d / "report.json").read_text())
    assert report["pass"] and report["valid"] and report["good"]
    assert (d / "trajectory.svg").read_text().startswith("<svg")


def test_outputs_are_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["run", "--function", "two_lines_demo", "--K", "500"]
    _, out_a, _ = run_cli(args, a, capsys)
    _, out_b, _ = run_cli(args, b, capsys)
    da, db = a / out_a.split("/")[-1], b / out_b.split("/")[-1]
    assert da.name == db.name
    for name in FILES:
        assert (da / name).read_bytes() == (db / name).read_bytes(), name


def test_env_var_sets_output_root(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("STRATA_LAB_OUT", str(tmp_path / "env"))
    assert main(["run", "--function", "abs_power", "--K", "50"]) == 0
    assert (tmp_path / "env").is_dir()
    capsys.readouterr()


def test_config_file_and_flag_override(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"function": "abs_power(0.5)", "K": 40, "gamma": 0.02, "x1": [1.0]}))
    code, out, _ = run_cli(["run", "--config", str(cfg), "--K", "30"], tmp_path, capsys)
    assert code == 0
    report = json.loads((tmp_path / out.split("/")[-1] / "report.json").read_text())
    assert report["config"]["K"] == 30 and report["config"]["x1"] == [1.0]


def test_random_start_uses_seed(tmp_path, capsys):
    args = ["run", "--function", "abs_diff_sq", "--K", "30", "--x1", "random", "--seed", "4"]
    _, out1, _ = run_cli(args, tmp_path, capsys)
    _, out2, _ = run_cli(args, tmp_path, capsys)
    _, out3, _ = run_cli(args[:-1] + ["5"], tmp_path, capsys)
    assert out1 == out2 != out3


@pytest.mark.parametrize("args, msg", [
    (["run", "--function", "rosenbrock"], "appendix_fig1"),
    (["rate-sweep", "--function", "abs_power", "--K", ""], "empty"),
    (["run", "--function", "appendix_fig1", "--alpha", "0.5", "--beta", "0.25"], "alpha"),
    (["run", "--function", "appendix_fig1", "--gamma", "2.0"], "gamma"),
    (["run", "--function", "appendix_fig1", "--x1", "9,9"], "box"),
    (["run"], "available"),
])
def test_usage_errors_exit_2(args, msg, tmp_path, capsys):
    code, _, err = run_cli(args, tmp_path, capsys)
    assert code == 2
    assert msg in err


def test_bad_flag_exit_2(capsys):
    assert main(["run", "--no-such-flag"]) == 2
    capsys.readouterr()


def test_verify_round_trip_and_tampering(tmp_path, capsys):
    _, out, _ = run_cli(["run", "--function", "appendix_fig1", "--K", "600"], tmp_path, capsys)
    d = tmp_path / out.split("/")[-1]
    args = ["verify", "--trajectory", str(d / "trajectory.csv"), "--selection", str(d / "selection.json"),
            "--stratification", str(d / "stratification.json"), "--params", str(d / "params.json")]
    code, out, _ = run_cli(args, tmp_path, capsys)
    assert code == 0 and json.loads(out)["valid"]
    sel = json.loads((d / "selection.json").read_text())
    sel["assignments"] = [0] * sel["K"]  # the origin everywhere
    (d / "selection.json").write_text(json.dumps(sel))
    code, out, _ = run_cli(args, tmp_path, capsys)
    assert code == 1 and not json.loads(out)["valid"]


def test_kl_and_varying_and_rate_sweep(tmp_path, capsys):
    code, out, _ = run_cli(["varying", "--function", "abs_power", "--K", "400", "--schedule", "inverse_k:0.3",
                            "--x1", "1.5"], tmp_path, capsys)
    assert code == 0
    assert (tmp_path / out.split("/")[-1] / "ledger.csv").exists()
    code, out, _ = run_cli(["kl", "--function", "abs_power", "--K", "2000", "--tail", "200", "--x1", "1.5"],
                           tmp_path, capsys)
    assert code in (0, 1)
    rep = json.loads((tmp_path / out.split("/")[-1] / "kl.json").read_text())
    assert rep["pass"] == (code == 0)
    code, out, _ = run_cli(["rate-sweep", "--function", "abs_power", "--K", "200,800", "--x1", "1.5"],
                           tmp_path, capsys)
    d = tmp_path / out.split("/")[-1]
    assert (d / "rates.csv").read_text().startswith("K,gamma,mean_grad_sq")
    assert (d / "rates.svg").exists()
    assert json.loads((d / "report.json").read_text())["pass"] == (code == 0)
