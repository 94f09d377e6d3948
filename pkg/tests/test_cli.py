"""Command-line behaviour: CSV output, determinism, validation, exit codes."""
import numpy as np
import pytest

from fedbft import latency
from fedbft.cli import (SweepSpec, format_value, main, parse_config,
                        run_training, sweep_values)
from fedbft.data import two_class_gaussian, split_dataset, write_samples
from fedbft.domain import ALL_FIELDS, DEFAULT_PARAMS, SystemParams
from fedbft.sim import RandomStreams


def run_cli(args, capsys):
    code = main(args)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# --- formatting ---

def test_format_value():
    assert format_value(0.596025) == "0.596025"
    assert format_value(1 / 3) == "0.333333333333"  # 12 significant digits
    assert format_value(None) == ""
    assert format_value(float("nan")) == ""
    assert format_value(42) == "42"
    assert format_value("lambda=100") == "lambda=100"


# --- config loading ---

def test_parse_config_defaults_when_no_path():
    assert parse_config(None) == DEFAULT_PARAMS


def test_parse_config_reads_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# tuned run\nlambda=150\nn_block=50\n")
    p = parse_config(str(cfg))
    assert p.lam == 150.0 and p.n_block == 50


def test_parse_config_errors_carry_the_path(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("lambda=150\nwhat=1\n")
    with pytest.raises(ValueError, match=r"bad\.cfg: unknown key 'what' on line 2"):
        parse_config(str(cfg))
    with pytest.raises(ValueError, match="cannot read config"):
        parse_config(str(tmp_path / "missing.cfg"))


# --- model ---

def test_model_prints_the_pinned_breakdown(capsys):
    code, out, err = run_cli(["model"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "b," + ",".join(ALL_FIELDS)
    cells = lines[1].split(",")
    assert cells[0] == "100"
    assert cells[-1] == "0.596025"


def test_model_batch_override(capsys):
    code, out, _ = run_cli(["model", "--batch", "10"], capsys)
    assert code == 0
    row = dict(zip(("b",) + ALL_FIELDS, out.splitlines()[1].split(",")))
    bd = latency.t_total(DEFAULT_PARAMS, 500, 10)
    assert row["b"] == "10"
    assert float(row["t_preprepare"]) == pytest.approx(bd.t_preprepare)
    assert float(row["t_dn"]) == pytest.approx(bd.t_dn)


# --- simulate ---

def test_simulate_emits_all_components(capsys):
    code, out, _ = run_cli(["simulate", "--reps", "5", "--warmup", "10"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == ("config_id,replications,component,mean,std_err,"
                        "analytic,rel_error")
    assert len(lines) == 1 + len(ALL_FIELDS)
    components = [l.split(",")[2] for l in lines[1:]]
    assert components == list(ALL_FIELDS)
    assert all(l.split(",")[1] == "5" for l in lines[1:])


def test_simulate_same_seed_is_byte_identical(tmp_path, capsys):
    out1 = tmp_path / "a.csv"
    out2 = tmp_path / "b.csv"
    for path in (out1, out2):
        code, _, _ = run_cli(["simulate", "--reps", "8", "--warmup", "10",
                              "--seed", "5", "--out", str(path)], capsys)
        assert code == 0
    assert out1.read_bytes() == out2.read_bytes()
    assert b"\r" not in out1.read_bytes()


def test_simulate_different_seed_differs(tmp_path, capsys):
    out1 = tmp_path / "a.csv"
    out2 = tmp_path / "b.csv"
    run_cli(["simulate", "--reps", "8", "--warmup", "10", "--seed", "5",
             "--out", str(out1)], capsys)
    run_cli(["simulate", "--reps", "8", "--warmup", "10", "--seed", "6",
             "--out", str(out2)], capsys)
    assert out1.read_bytes() != out2.read_bytes()


# --- sweep ---

def test_sweep_values_inclusive_grid():
    spec = SweepSpec("lambda", 50.0, 150.0, 50.0)
    assert sweep_values(spec) == [50.0, 100.0, 150.0]


def test_sweep_spec_validation():
    with pytest.raises(ValueError, match="param must be one of"):
        SweepSpec("tau", 1.0, 2.0, 1.0)
    with pytest.raises(ValueError, match="start must be < stop"):
        SweepSpec("lambda", 5.0, 5.0, 1.0)
    with pytest.raises(ValueError, match="step must be positive"):
        SweepSpec("lambda", 1.0, 2.0, 0.0)
    with pytest.raises(ValueError, match="integer values"):
        sweep_values(SweepSpec("f", 1.0, 2.0, 0.5))
    with pytest.raises(ValueError, match="replications must be >= 1"):
        SweepSpec("lambda", 1.0, 2.0, 1.0, reps=0)


def test_sweep_over_lambda(capsys):
    code, out, _ = run_cli(["sweep", "--param", "lambda", "--from", "50",
                            "--to", "150", "--step", "50", "--reps", "5",
                            "--warmup", "10"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert len(lines) == 4
    assert [l.split(",")[1] for l in lines[1:]] == ["50", "100", "150"]


def test_sweep_over_f_adjusts_peer_count(capsys):
    # would fail parameter validation if n_peers stayed at 4
    code, out, _ = run_cli(["sweep", "--param", "f", "--from", "1", "--to",
                            "3", "--step", "1", "--reps", "3", "--warmup",
                            "5"], capsys)
    assert code == 0
    assert len(out.splitlines()) == 4


def test_sweep_fails_fast_before_any_output(capsys):
    # the last lambda grid point saturates the queue
    code, out, err = run_cli(["sweep", "--param", "lambda", "--from", "100",
                              "--to", "300", "--step", "100", "--reps", "3"],
                             capsys)
    assert code == 1
    assert out == ""
    assert "error: lambda must be < mu" in err


# --- optimal-lambda ---

def test_optimal_lambda_agrees_with_grid(capsys):
    code, out, err = run_cli(["optimal-lambda"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "lambda_star,grid_argmin,grid_step"
    star, argmin, step = (float(v) for v in lines[1].split(","))
    assert star == 50.0
    assert abs(argmin - star) <= step


# --- fl-run ---

def test_fl_run_reports_cycles(capsys):
    code, out, err = run_cli(["fl-run", "--samples", "40", "--cycle-cap", "2",
                              "--holdout", "50"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("cycle,weight_delta,holdout_accuracy,"
                               "train_loss,block_txs,")
    assert len(lines) == 3  # header + 2 cycles
    assert "result=cycle-cap cycles=2" in err


def test_fl_run_infinite_epsilon_stops_after_one_cycle(tmp_path, capsys):
    # any weight change is within an infinite tolerance
    cfg = tmp_path / "inf.cfg"
    cfg.write_text("epsilon=inf\n")
    code, out, err = run_cli(["fl-run", "--config", str(cfg), "--samples",
                              "40", "--holdout", "50"], capsys)
    assert code == 0
    assert len(out.splitlines()) == 2  # header + exactly one cycle
    assert "result=converged cycles=1" in err


def test_simulate_rejects_zero_reps(capsys):
    code, out, err = run_cli(["simulate", "--reps", "0"], capsys)
    assert code == 1
    assert out == ""
    assert "error: replications must be >= 1" in err


def test_fl_run_converged_summary(tmp_path, capsys):
    # a huge epsilon converges after the very first cycle
    cfg = tmp_path / "loose.cfg"
    cfg.write_text("epsilon=1000\n")
    out_csv = tmp_path / "run.csv"
    code, out, _ = run_cli(["fl-run", "--config", str(cfg), "--samples", "40",
                            "--holdout", "50", "--out", str(out_csv)], capsys)
    assert code == 0
    assert "result=converged cycles=1" in out  # summary goes to stdout here
    assert len(out_csv.read_text().splitlines()) == 2


def test_fl_run_reads_sample_files(tmp_path, capsys):
    rng = np.random.default_rng(0)
    paths = []
    for i in range(2):
        ds = two_class_gaussian(50, 2, 4.0, rng, owner=i)
        path = tmp_path / f"ent{i}.txt"
        write_samples(str(path), ds)
        paths.append(str(path))
    code, out, err = run_cli(["fl-run", "--data", ",".join(paths),
                              "--cycle-cap", "2", "--holdout", "50"], capsys)
    assert code == 0
    assert len(out.splitlines()) == 3


def test_fl_run_rejects_bad_adversary_id(capsys):
    code, _, err = run_cli(["fl-run", "--samples", "40", "--adversaries", "9",
                            "--cycle-cap", "1"], capsys)
    assert code == 1
    assert "error: adversary id 9 out of range" in err


def test_fl_run_rejects_mismatched_data_files(tmp_path, capsys):
    rng = np.random.default_rng(1)
    a = tmp_path / "a.txt"
    b = tmp_path / "b.txt"
    write_samples(str(a), two_class_gaussian(30, 2, 2.0, rng))
    write_samples(str(b), two_class_gaussian(30, 3, 2.0, rng))
    code, _, err = run_cli(["fl-run", "--data", f"{a},{b}"], capsys)
    assert code == 1
    assert "disagree on feature count" in err


# --- training orchestration ---

def test_run_training_row_shape():
    streams = RandomStreams.from_seed(3)
    ents = [split_dataset(two_class_gaussian(40, 2, 4.0, streams.data, owner=i))
            for i in range(3)]
    holdout = two_class_gaussian(60, 2, 4.0, streams.data)
    run = run_training(SystemParams(t_max=30), ents, holdout, streams,
                       cycle_cap=2)
    assert len(run.rows) == 2
    assert len(run.rows[0]) == 5 + len(ALL_FIELDS)
    assert run.rows[0][0] == 1 and run.rows[1][0] == 2
    assert len(run.blocks) == 2
    assert len(run.weights_per_cycle) == 3  # initial plus one per cycle
    assert not run.converged


def test_run_training_loss_decreases_initially():
    streams = RandomStreams.from_seed(4)
    ents = [split_dataset(two_class_gaussian(100, 2, 4.0, streams.data, owner=i))
            for i in range(4)]
    holdout = two_class_gaussian(200, 2, 4.0, streams.data)
    run = run_training(SystemParams(t_max=200), ents, holdout, streams,
                       cycle_cap=5)
    losses = [row[3] for row in run.rows]
    assert losses[-1] < losses[0]


# --- top-level behaviour ---

def test_unknown_subcommand_exits_two(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_missing_config_file_is_an_error(capsys):
    code, _, err = run_cli(["model", "--config", "/no/such/file.cfg"], capsys)
    assert code == 1
    assert err.startswith("error: cannot read config")
