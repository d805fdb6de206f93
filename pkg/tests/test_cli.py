"""Config format, artifact layout, summaries, exit codes."""

import json

import pytest

from dqsim.cli import (
    ConfigError,
    EXIT_DIVERGED,
    EXIT_OK,
    EXIT_USAGE,
    EXIT_VERIFY_FAILED,
    defaults_table,
    emit_summary,
    format_config,
    main,
    parse_config,
    run_comparison,
    run_experiment,
)
from dqsim.sim import ObjectiveSpec, OracleSpec, RunConfig, ScheduleSpec, run

MINIMAL = """
[objective]
kind = quadratic-isotropic

[schedule]
kind = dynamic
"""

FULL = """
# exercise every section
[experiment]
kind = compare
seeds = [0, 3]
compare_fixed_bits = 5
calibration = dynamic-to-fixed
formats = [json]

[objective]
kind = quadratic-isotropic
d = 3
lam = 2.0

[oracle]
kind = gaussian
sigma = 0.25

[run]
W = 2
T = 30
eta = 0.05
seed = 4
p = 2.0
b_pre = 32

[schedule]
kind = dynamic
epsilon = 0.2
gamma = 0.25
tau = 5
b0 = 6
alpha_source = closed_form
"""


def test_minimal_config_gets_documented_defaults():
    spec = parse_config(MINIMAL)
    assert spec.kind == "single"
    assert spec.run.schedule.kind == "dynamic"
    assert spec.run.schedule.tau == 100
    assert spec.run.schedule.b0 == 8
    assert spec.run.b_pre == 32
    assert spec.run.p == 2.0
    assert spec.run.objective.kind == "quadratic-isotropic"


def test_constraint_violation_reported_with_line():
    bad = "[schedule]\ngamma = 1.5\n"
    with pytest.raises(ConfigError) as err:
        parse_config(bad)
    assert any("gamma" in e and "line 2" in e for e in err.value.errors)


def test_duplicate_key_names_both_occurrences():
    bad = "[run]\nW = 2\nW = 3\n"
    with pytest.raises(ConfigError) as err:
        parse_config(bad)
    msg = err.value.errors[0]
    assert "duplicate" in msg and "line 3" in msg and "line 2" in msg


def test_all_errors_collected_not_fail_fast():
    bad = "[schedule]\ngamma = 2.0\nbogus = 1\n[nope]\nx = 1\n[run]\nW = zero\n"
    with pytest.raises(ConfigError) as err:
        parse_config(bad)
    assert len(err.value.errors) >= 4


def test_unknown_key_and_section():
    with pytest.raises(ConfigError) as err:
        parse_config("[objective]\nwat = 1\n")
    assert "unknown key" in err.value.errors[0]
    with pytest.raises(ConfigError) as err:
        parse_config("[mystery]\nx = 1\n")
    assert "unknown section" in err.value.errors[0]


def test_config_round_trip_is_identity():
    spec = parse_config(FULL)
    assert parse_config(format_config(spec)) == spec
    # and again through another cycle
    text = format_config(spec)
    assert format_config(parse_config(text)) == text


def test_defaults_table_lists_every_key():
    table = defaults_table()
    for key in ("tau = 100", "b_pre = 32", "b0 = 8", "p = 2.0", "gamma = 0.5"):
        assert key in table


def test_emit_summary_ratios():
    base = RunConfig(
        objective=ObjectiveSpec(kind="quadratic-isotropic", d=4, lam=1.0),
        oracle=OracleSpec(kind="gaussian", sigma=0.2),
        schedule=ScheduleSpec(kind="fixed", bits=32),
        W=2,
        T=10,
        eta=0.1,
    )
    d, b_pre = 4, 32
    t32 = run(base)
    t4 = run(
        RunConfig(
            objective=base.objective,
            oracle=base.oracle,
            schedule=ScheduleSpec(kind="fixed", bits=4),
            W=2,
            T=10,
            eta=0.1,
        )
    )
    tsign = run(
        RunConfig(
            objective=base.objective,
            oracle=base.oracle,
            schedule=ScheduleSpec(kind="sign"),
            W=2,
            T=10,
            eta=0.1,
        )
    )
    tdyn = run(
        RunConfig(
            objective=base.objective,
            oracle=base.oracle,
            schedule=ScheduleSpec(kind="dynamic", epsilon=0.1, tau=2, b0=8),
            W=2,
            T=10,
            eta=0.1,
        )
    )
    text = emit_summary([t32, t4, tsign, tdyn], ["b32", "b4", "sign", "dynamic"])
    lines = text.strip().split("\n")
    assert lines[0] == "schedule,final_loss,final_gap,cum_bits,bits_vs_32bit_ratio"
    ratios = {ln.split(",")[0]: float(ln.split(",")[4]) for ln in lines[1:]}
    assert ratios["b32"] == 1.0
    assert ratios["b4"] == pytest.approx((4 * d + b_pre) / (32 * d + b_pre), rel=1e-12)
    assert ratios["sign"] < ratios["dynamic"] < ratios["b32"]


def test_run_experiment_writes_reproducible_artifacts(tmp_path):
    spec = parse_config(MINIMAL)
    code = run_experiment(spec, tmp_path / "out", config_text=MINIMAL, command="test")
    assert code == EXIT_OK
    out = tmp_path / "out"
    assert (out / "config.cfg").read_text() == MINIMAL
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["tool"] == "dqsim" and "version" in manifest
    assert manifest["seed"] == spec.run.seed
    trace = json.loads((out / "trace.json").read_text())
    assert trace["config"]["seed"] == spec.run.seed
    csv_text = (out / "trace.csv").read_text()
    assert csv_text.startswith("t,loss,grad_norm,gbar,bits,round_bits,cum_bits\n")
    # artifacts alone are enough to replay bit-identically
    cfg = RunConfig.from_dict(trace["config"])
    again = run(cfg)
    assert [float(v) for v in again.loss] == trace["trace"]["loss"]


def test_comparison_dynamic_to_fixed(tmp_path):
    spec = parse_config(FULL)
    summary = run_comparison(spec)
    assert summary.n == 4
    assert summary.fixed_bits == [5, 5, 5, 5]
    stats = summary.to_dict()
    assert 0 < stats["win_fraction"] <= 1
    code = run_experiment(spec, tmp_path / "cmp", config_text=FULL, command="t")
    assert code == EXIT_OK
    assert (tmp_path / "cmp" / "compare.json").is_file()
    assert (tmp_path / "cmp" / "summary.csv").read_text().startswith("schedule,")


def test_sweep_writes_per_entry_traces(tmp_path):
    text = MINIMAL + "\n[experiment]\nkind = sweep\nsweep_bits = [2, 3]\n"
    spec = parse_config(text)
    code = run_experiment(spec, tmp_path / "sweep", config_text=text, command="t")
    assert code == EXIT_OK
    assert (tmp_path / "sweep" / "b2" / "trace.csv").is_file()
    assert (tmp_path / "sweep" / "b3" / "trace.csv").is_file()
    summary = (tmp_path / "sweep" / "summary.csv").read_text()
    assert summary.count("\n") == 3


def test_main_exit_codes(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(MINIMAL)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(["run", "--config", str(tmp_path / "nope.cfg"), "--out", "x"]) == EXIT_USAGE
    bad = tmp_path / "bad.cfg"
    bad.write_text("[schedule]\ngamma = 7\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "b")]) == EXIT_USAGE
    div = tmp_path / "div.cfg"
    div.write_text("[run]\neta = 3.0\nT = 50\n[schedule]\nkind = fixed\nbits = 32\n")
    assert (
        main(["run", "--config", str(div), "--out", str(tmp_path / "d")])
        == EXIT_DIVERGED
    )
    assert (tmp_path / "d" / "diverged.csv").is_file()


def test_main_verify_exit_codes(monkeypatch, tmp_path):
    assert main(["verify", "schedule", "--out", str(tmp_path / "v")]) == EXIT_OK
    assert (tmp_path / "v" / "verify.json").is_file()

    import dqsim.verify as verify_mod
    from dqsim.verify import VerifyResult

    def failing(seed=0):
        return VerifyResult("schedule", passed=False, lines=["[FAIL] forced"])

    monkeypatch.setitem(verify_mod.VERIFIERS, "schedule", failing)
    monkeypatch.setattr("dqsim.cli.VERIFIERS", verify_mod.VERIFIERS)
    assert main(["verify", "schedule"]) == EXIT_VERIFY_FAILED


def test_main_seed_and_format_overrides(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(MINIMAL)
    out = tmp_path / "o"
    assert (
        main(
            [
                "run",
                "--config",
                str(cfg),
                "--out",
                str(out),
                "--seed",
                "9",
                "--format",
                "json",
            ]
        )
        == EXIT_OK
    )
    assert not (out / "trace.csv").exists()
    trace = json.loads((out / "trace.json").read_text())
    assert trace["config"]["seed"] == 9
    assert main(["run", "--config", str(cfg), "--out", str(out), "--format", "tsv"]) == 1


def test_verb_kind_mismatch_rejected(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(MINIMAL + "\n[experiment]\nkind = sweep\n")
    assert main(["compare", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 1


def test_seed_range_flag(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(
        MINIMAL + "\n[experiment]\nkind = compare\n\n[run]\nT = 10\nW = 2\n"
    )
    out = tmp_path / "cc"
    assert (
        main(["compare", "--config", str(cfg), "--out", str(out), "--seeds", "0..2"])
        == EXIT_OK
    )
    stats = json.loads((out / "compare.json").read_text())
    assert stats["n_seeds"] == 3
