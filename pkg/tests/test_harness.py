import math
import os

import numpy as np
import pytest

from hbirl.errors import ConfigurationError, InvalidInputError
from hbirl.harness import cli
from hbirl.harness.config import ExperimentConfig, config_from_dict, dump_config, load_config
from hbirl.harness.experiment import (
    ResultRow,
    build_scenario,
    load_scenario,
    read_results,
    run_experiment,
    run_one,
    run_seed,
    save_scenario,
    write_results,
)
from hbirl.harness.summary import aggregate, emit_plot_data, lookup, mean_ci, read_plot_data

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

TINY = {
    "domain": "gridworld",
    "variants": ["true_trajectories"],
    "sweep": [0, 2],
    "runs": 2,
    "domain_options": {"num_trajectories": 5},
    "em": {"restarts": 1, "max_em_iters": 2},
    "inference": {"samples": 200, "burn_in": 100, "max_outer_iters": 2},
}


def _write(path, text):
    path.write_text(text)
    return str(path)


@pytest.mark.parametrize("name", sorted(os.listdir(os.path.join(ROOT, "configs"))))
def test_shipped_configs_load(name):
    cfg = load_config(os.path.join(ROOT, "configs", name))
    assert cfg.runs >= 1 and cfg.sweep


def test_config_defaults_and_sweeps():
    cfg = ExperimentConfig()
    assert cfg.sweep == [0, 2, 4, 6] and cfg.runs == 10
    assert ExperimentConfig(full_sweep=True).sweep == list(range(14))
    assert ExperimentConfig(domain="onion", variants=["plausible_eta"]).sweep == list(range(1, 11))


def test_config_rejects_bad_values():
    with pytest.raises(ConfigurationError):
        config_from_dict({"domain": "maze"})
    with pytest.raises(ConfigurationError):
        config_from_dict({"domain": "onion", "variants": ["true_obs_fn"]})
    with pytest.raises(ConfigurationError):
        config_from_dict({"runs": 0})
    with pytest.raises(ConfigurationError):
        config_from_dict({"em": {"restartz": 2}})
    with pytest.raises(ConfigurationError):
        config_from_dict({"colour": "blue"})
    with pytest.raises(ConfigurationError):
        config_from_dict({"controlled": True})
    with pytest.raises(ConfigurationError):
        config_from_dict({"calibration": "oracle"})


def test_config_round_trip(tmp_path):
    cfg = config_from_dict(TINY)
    path = _write(tmp_path / "c.yaml", dump_config(cfg))
    again = load_config(path)
    assert dump_config(again) == dump_config(cfg)
    assert again.em.inference.samples == 200 and again.em.restarts == 1


def test_load_config_rejects_non_mapping(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(_write(tmp_path / "c.yaml", "- 1\n- 2\n"))


def _rows(values, variant="v", point=0):
    return [ResultRow("gridworld", variant, point, i, float(x), 1, 0.0) for i, x in enumerate(values)]


def test_aggregate_identical_rows():
    (row,) = aggregate(_rows([3.0] * 5))
    assert row.mean == 3.0 and row.ci_low == row.ci_high == 3.0 and row.n == 5


def test_aggregate_two_rows():
    (row,) = aggregate(_rows([0.0, 2.0]))
    assert row.mean == 1.0
    assert row.ci_high - row.mean == pytest.approx(1.96)


def test_aggregate_single_row_flagged():
    (row,) = aggregate(_rows([4.0]))
    assert row.ci_flag == "single_run" and math.isnan(row.ci_low)
    with pytest.raises(InvalidInputError):
        mean_ci([])


def test_ci_coverage():
    rng = np.random.default_rng(0)
    trials = 2000
    hits = 0
    for _ in range(trials):
        _, lo, hi = mean_ci(rng.normal(3.0, 2.0, size=100))
        hits += lo <= 3.0 <= hi
    assert 0.93 <= hits / trials <= 0.97


def test_aggregate_groups_and_lookup():
    rows = _rows([1.0, 3.0], "a", 0) + _rows([5.0, 7.0], "b", 0) + _rows([2.0, 2.0], "a", 4)
    summary = aggregate(rows)
    assert [(r.variant, r.sweep_value) for r in summary] == [("a", 0), ("b", 0), ("a", 4)]
    assert lookup(summary, "b", 0).mean == 6.0
    with pytest.raises(KeyError):
        lookup(summary, "c", 0)


def test_plot_data_round_trip(tmp_path):
    summary = aggregate(_rows([1.0, 3.0], "a", 0) + _rows([0.5], "b", 2))
    (path,) = emit_plot_data(summary, tmp_path)
    back = read_plot_data(path)
    assert len(back) == 2
    assert back[0] == summary[0]
    assert back[1].variant == "b" and math.isnan(back[1].ci_low)


def test_plot_variant_filter_and_svg(tmp_path):
    variants = ["true_trajectories", "true_obs_fn", "plausible_eta", "uniform_eta", "ignore_ce"]
    rows = [r for i, v in enumerate(variants) for x in (0, 2) for r in _rows([i, i + 1.0], v, x)]
    summary = aggregate(rows)
    paths = emit_plot_data(summary, tmp_path, formats=("csv", "svg"))
    svg = open(paths[1]).read()
    for v in variants:
        assert v.replace("_", " ") in svg
    only = emit_plot_data(summary, tmp_path, variants=["ignore_ce"], stem="one")
    assert {r.variant for r in read_plot_data(only[0])} == {"ignore_ce"}
    with pytest.raises(InvalidInputError):
        emit_plot_data(summary, tmp_path, variants=["nothing"])


def test_results_round_trip(tmp_path):
    rows = _rows([0.1, 1 / 3])
    write_results(rows, tmp_path / "r.csv")
    assert read_results(tmp_path / "r.csv") == rows


def test_run_seed_distinct():
    seeds = {run_seed(0, v, r) for v in range(4) for r in range(10)}
    assert len(seeds) == 40
    assert run_seed(0, 2, 3) == run_seed(0, 2, 3)


def test_experiment_byte_identical_and_rows_reproducible(tmp_path):
    cfg = config_from_dict(TINY)
    a = run_experiment(cfg)
    b = run_experiment(cfg)
    write_results(a, tmp_path / "a.csv")
    write_results(b, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert all(r.ile <= 1e-6 for r in a)
    # each row stands alone
    assert run_one(cfg, "true_trajectories", 2, 1) == a[3]


def test_parallel_matches_serial():
    cfg = config_from_dict(TINY)
    assert run_experiment(cfg, jobs=2) == run_experiment(cfg)


def test_errors_carry_run_context():
    cfg = config_from_dict({**TINY, "domain_options": {"num_trajectories": 5, "horizon": 0}})
    with pytest.raises(Exception, match="run=0"):
        run_one(cfg, "true_trajectories", 0, 0)


def test_scenario_round_trip(tmp_path):
    cfg = config_from_dict({**TINY, "variants": ["plausible_eta"]})
    scn = build_scenario(cfg, 2, 17)
    save_scenario(scn, tmp_path)
    back = load_scenario(cfg, tmp_path)
    assert all(np.array_equal(x.states, y.states) for x, y in zip(scn.trajectories, back.trajectories))
    assert np.allclose(back.prior.subject_alpha, scn.prior.subject_alpha)
    assert np.allclose(back.true_obs.confounder_alpha, scn.true_obs.confounder_alpha)
    for x, y in zip(scn.log.trajectories, back.log.trajectories):
        assert np.array_equal(x.omega, y.omega) and np.array_equal(x.eta, y.eta)


# ----------------------------------------------------------------------- CLI


def _config_file(tmp_path, **extra):
    return _write(tmp_path / "cfg.yaml", dump_config(config_from_dict({**TINY, **extra})))


def test_cli_simulate_and_learn(tmp_path, capsys):
    cfg = _config_file(tmp_path)
    data = str(tmp_path / "data")
    assert cli.main(["simulate", "--config", cfg, "--value", "2", "--out", data, "--seed", "3"]) == 0
    assert sorted(os.listdir(data)) == ["calibration_log.jsonl", "log.jsonl", "truth.json"]
    assert cli.main(["learn", "--config", cfg, "--data", data, "--variant", "true_trajectories",
                     "--out", data]) == 0
    assert "ILE 0" in capsys.readouterr().out
    assert os.path.exists(os.path.join(data, "learned_true_trajectories.json"))


def test_cli_experiment_and_plot(tmp_path, monkeypatch, capsys):
    cfg = _config_file(tmp_path)
    out = tmp_path / "env_out"
    monkeypatch.setenv("HBIRL_OUT", str(out))
    assert cli.main(["experiment", "--config", cfg]) == 0
    assert {"config.yaml", "results.csv", "summary.csv"} <= set(os.listdir(out))
    assert "mean ILE" in capsys.readouterr().out
    plots = tmp_path / "plots"
    assert cli.main(["plot", str(out / "results.csv"), "--out", str(plots), "--format", "csv,svg"]) == 0
    assert sorted(os.listdir(plots)) == ["summary.csv", "summary.svg"]


def test_cli_oracle(tmp_path):
    assert cli.main(["oracle", "--out", str(tmp_path), "--samples", "2000", "--burn-in", "200"]) == 0
    import json

    report = json.load(open(tmp_path / "oracle.json"))
    assert set(report) == {"sampler_stochastic", "sampler_deterministic", "feature_enumeration", "dual_gradient"}
    assert report["dual_gradient"]["max_relative_error"] < 1e-4


def test_cli_bad_input_exit_code(tmp_path, capsys):
    bad = _write(tmp_path / "bad.yaml", "domain: maze\n")
    assert cli.main(["experiment", "--config", bad, "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        cli.main(["learn"])
