"""Experiment harness: configs, generators, runners, artifacts, CLI."""

import json

import numpy as np
import pytest

from capmdp import (
    ConfigError,
    ExperimentConfig,
    GeneratorRanges,
    certify_instance,
    default_config,
    determinism_hash,
    emit_results,
    generate_linear_pair,
    replay_violations,
    run_experiment,
    run_output_dir,
    sample_polynomial_spec,
)
from capmdp.cli import EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, main
from capmdp.harness import (
    CORE_COLUMNS,
    run_fruit_forage,
    run_predator_prey,
    run_sweep,
    run_verify_bounds,
    rows_to_csv_text,
)

BOUND_NAMES = {
    "team_generalization",
    "policy_transfer",
    "population_decrease",
    "population_increase",
    "capability_estimation",
    "out_of_distribution",
    "approx_dynamics",
    "lipschitz",
    "polynomial_deviation",
}

SMALL_RANGES_DOC = {
    "num_states": [3, 5],
    "num_agents": [2, 2],
    "actions_per_agent": [2, 2],
    "capability_dim": [2, 2],
    "feature_dim": [2, 3],
}


def small_config(**overrides) -> ExperimentConfig:
    doc = {"kind": "verify-bounds", "num_instances": 2, "ranges": SMALL_RANGES_DOC}
    doc.update(overrides)
    return ExperimentConfig.from_doc(doc)


# ---- generator ranges ---------------------------------------------------------------


def test_ranges_round_trip_and_validation():
    ranges = GeneratorRanges(num_states=(2, 9), gamma=0.8)
    assert GeneratorRanges.from_doc(ranges.to_doc()) == ranges
    with pytest.raises(ConfigError, match="unknown ranges field"):
        GeneratorRanges.from_doc({"num_state": [2, 3]})
    with pytest.raises(ConfigError, match="num_states"):
        GeneratorRanges(num_states=(5, 2))
    with pytest.raises(ConfigError, match="actions_per_agent"):
        GeneratorRanges(actions_per_agent=(1, 2))
    with pytest.raises(ConfigError, match="max_joint_actions"):
        GeneratorRanges(num_agents=(2, 8), actions_per_agent=(3, 3))
    with pytest.raises(ConfigError, match="gamma"):
        GeneratorRanges(gamma=1.0)


def test_generated_pairs_share_a_frame_and_respect_ranges():
    ranges = GeneratorRanges(
        num_states=(3, 7), num_agents=(2, 3), actions_per_agent=(2, 3),
        capability_dim=(2, 4), feature_dim=(2, 5), max_joint_actions=27,
    )
    for seed in range(30):
        spec_x, spec_y = generate_linear_pair(ranges, np.random.default_rng(seed))
        assert 3 <= spec_x.states.num_states <= 7
        assert 2 <= spec_x.team.num_agents <= 3
        assert 2 <= spec_x.capability_dim <= 4
        assert spec_x.actions_per_agent ** spec_x.num_agents <= 27
        assert spec_x.states.equals(spec_y.states)
        assert np.array_equal(spec_x.reward_kernel.w, spec_y.reward_kernel.w)
        assert np.array_equal(spec_x.rho, spec_y.rho)
        assert spec_x.team.all_simplex() and spec_y.team.all_simplex()


def test_generation_is_deterministic_per_seed():
    ranges = GeneratorRanges()
    a = generate_linear_pair(ranges, np.random.default_rng(123))
    b = generate_linear_pair(ranges, np.random.default_rng(123))
    assert a[0].to_json() == b[0].to_json()
    assert a[1].to_json() == b[1].to_json()


def test_single_state_instances_still_certify():
    config = small_config(ranges={**SMALL_RANGES_DOC, "num_states": [1, 1]}, num_instances=1)
    rows, violations = run_verify_bounds(config)
    assert violations == []
    assert all(row["satisfied"] for row in rows)


def test_sampled_polynomials_respect_the_term_budget():
    rng = np.random.default_rng(0)
    for degree in (1, 2, 3):
        for _ in range(20):
            poly = sample_polynomial_spec(rng, num_agents=3, degree=degree, alpha=0.7)
            assert poly.degree == degree
            assert poly.alpha == 0.7
            assert len(poly.terms) <= 1 + sum(2 ** (j - 1) for j in range(1, degree + 1))
            assert all(abs(c) <= 0.7 for c in poly.terms.values())
            assert all(sum(idx) <= degree for idx in poly.terms)


# ---- experiment config ----------------------------------------------------------------


def test_config_parsing_and_errors():
    config = small_config()
    assert config.name == "verify-bounds"  # defaults to the kind
    assert ExperimentConfig.from_doc(config.to_doc()) == config
    with pytest.raises(ConfigError, match="not valid JSON"):
        ExperimentConfig.from_json("{nope")
    with pytest.raises(ConfigError, match="unknown config field"):
        ExperimentConfig.from_doc({"kind": "verify-bounds", "workers": 2})
    with pytest.raises(ConfigError, match="missing the required field 'kind'"):
        ExperimentConfig.from_doc({"seed": 1})
    with pytest.raises(ConfigError, match="unknown experiment kind"):
        ExperimentConfig.from_doc({"kind": "bench"})
    with pytest.raises(ConfigError, match="unknown fruit_forage field"):
        ExperimentConfig.from_doc({"kind": "fruit-forage", "fruit_forage": {"speed": 1}})
    with pytest.raises(ConfigError, match="unknown predator_prey field"):
        ExperimentConfig.from_doc({"kind": "predator-prey", "predator_prey": {"lr": 0.1}})
    with pytest.raises(ConfigError, match="num_instances"):
        small_config(num_instances=0)
    with pytest.raises(ConfigError, match="eps_p"):
        small_config(eps_p=1.0)
    with pytest.raises(ConfigError, match="output format"):
        small_config(output_format="yaml")
    with pytest.raises(ConfigError, match="schema_version"):
        small_config(schema_version=99)
    with pytest.raises(ConfigError, match="at least one cell"):
        ExperimentConfig.from_doc({"kind": "sweep"})
    with pytest.raises(ConfigError, match="num_agents and capability_dim"):
        ExperimentConfig.from_doc({"kind": "sweep", "sweep_cells": [{"num_agents": 2}]})
    with pytest.raises(ConfigError, match="unknown sweep cell field"):
        ExperimentConfig.from_doc(
            {"kind": "sweep", "sweep_cells": [{"num_agents": 2, "capability_dim": 2, "x": 1}]}
        )


def test_config_hash_tracks_content():
    a = small_config()
    b = small_config()
    c = small_config(seed=1)
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != c.config_hash()
    assert len(a.config_hash()) == 12


def test_default_configs_exist_for_every_kind():
    for kind in ("verify-bounds", "fruit-forage", "predator-prey", "sweep"):
        config = default_config(kind, seed=3)
        assert config.kind == kind and config.seed == 3
    assert default_config("sweep").sweep_cells
    with pytest.raises(ConfigError):
        default_config("nope")


# ---- certification runs ---------------------------------------------------------------


def test_certify_instance_emits_every_bound_kind():
    config = small_config()
    rows, violations = certify_instance(config, 0)
    assert violations == []
    assert {row["bound_name"] for row in rows} == BOUND_NAMES
    assert len(rows) == len(BOUND_NAMES)
    assert all(row["instance"] == 0 for row in rows)
    assert all(row["wall_time"] >= 0.0 for row in rows)
    again, _ = certify_instance(config, 0)
    assert determinism_hash(rows) == determinism_hash(again)
    other, _ = certify_instance(config, 1)
    assert determinism_hash(rows) != determinism_hash(other)


def test_parallel_and_serial_certification_agree():
    config = small_config(num_instances=6)
    serial_rows, _ = run_verify_bounds(config, jobs=1)
    parallel_rows, _ = run_verify_bounds(config, jobs=3)
    assert determinism_hash(serial_rows) == determinism_hash(parallel_rows)
    assert [r["instance"] for r in serial_rows] == [r["instance"] for r in parallel_rows]


def test_sweep_pins_cell_dimensions():
    config = ExperimentConfig.from_doc(
        {
            "kind": "sweep",
            "num_instances": 1,
            "ranges": SMALL_RANGES_DOC,
            "sweep_cells": [
                {"num_agents": 2, "capability_dim": 2},
                {"num_agents": 3, "capability_dim": 3, "num_instances": 2},
            ],
        }
    )
    rows, violations = run_sweep(config)
    assert violations == []
    assert len(rows) == (1 + 2) * len(BOUND_NAMES)
    for row in rows:
        assert (row["cell_num_agents"], row["cell_capability_dim"]) in ((2, 2), (3, 3))
        if row["bound_name"] == "team_generalization":
            assert row["capability_dim"] == row["cell_capability_dim"]


def test_fruit_forage_runner_on_a_small_grid():
    config = ExperimentConfig.from_doc(
        {"kind": "fruit-forage", "fruit_forage": {"grid_size": 3, "num_agents": 2}}
    )
    rows, violations = run_fruit_forage(config)
    assert violations == []
    assert [row["bound_name"] for row in rows] == [
        "team_generalization", "policy_transfer", "population_decrease",
    ]
    assert all(row["satisfied"] for row in rows)


def test_predator_prey_runner_produces_learning_rows():
    config = ExperimentConfig.from_doc(
        {
            "kind": "predator-prey",
            "seed": 0,
            "predator_prey": {
                "suite": "unseen_team", "mode": "blind", "grid_size": 4,
                "episode_limit": 20, "total_steps": 300, "epsilon_decay_steps": 100,
                "eval_interval": 100, "eval_episodes": 2,
            },
        }
    )
    rows, violations = run_predator_prey(config)
    assert violations == []
    assert len(rows) == 4 + 4 + 1  # train tasks, test tasks, gap row
    assert {row["phase"] for row in rows} == {"train", "test", "gap"}
    gap_row = [row for row in rows if row["phase"] == "gap"]
    assert len(gap_row) == 1
    assert gap_row[0]["team"] == "1-2-1-2_vs_1-1-1-3"
    with pytest.raises(ConfigError, match="unknown task suite"):
        run_predator_prey(
            ExperimentConfig.from_doc(
                {"kind": "predator-prey", "predator_prey": {"suite": "zebra"}}
            )
        )


# ---- results files ----------------------------------------------------------------


def test_empty_results_render_the_core_header():
    assert rows_to_csv_text([]) == ",".join(CORE_COLUMNS) + "\n"


def test_emit_results_sorts_and_orders_columns(tmp_path):
    rows = [
        {"experiment": "b", "seed": 1, "instance": 2, "bound_name": "x", "zeta": 1.0},
        {"experiment": "a", "seed": 2, "instance": 0, "bound_name": "y"},
        {"experiment": "a", "seed": 1, "instance": 5, "bound_name": "z"},
    ]
    path = tmp_path / "results.csv"
    emit_results(rows, "csv", path)
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    assert header[:2] == ["experiment", "seed"]
    assert header[-1] == "zeta"  # extras follow the core columns
    assert [line.split(",")[0] for line in lines[1:]] == ["a", "a", "b"]
    assert lines[1].split(",")[2] == "5"  # (a, seed 1) before (a, seed 2)

    json_path = tmp_path / "results.json"
    emit_results(rows, "json", json_path)
    loaded = json.loads(json_path.read_text())
    assert [row["experiment"] for row in loaded] == ["a", "a", "b"]
    assert loaded[0]["instance"] == 5

    with pytest.raises(ConfigError, match="unknown output format"):
        emit_results(rows, "xml", tmp_path / "results.xml")
    with pytest.raises(OSError, match="writing results to"):
        emit_results(rows, "csv", tmp_path / "missing" / "results.csv")


def test_determinism_hash_ignores_wall_time_only():
    rows = [{"instance": 0, "bound_value": 1.0, "wall_time": 0.5}]
    slower = [{"instance": 0, "bound_value": 1.0, "wall_time": 9.9}]
    changed = [{"instance": 0, "bound_value": 2.0, "wall_time": 0.5}]
    assert determinism_hash(rows) == determinism_hash(slower)
    assert determinism_hash(rows) != determinism_hash(changed)
    assert determinism_hash(rows * 2) != determinism_hash(rows)


def test_run_experiment_writes_artifacts_and_stamps_rows(tmp_path):
    config = small_config()
    rows = run_experiment(config, tmp_path)
    out_dir = run_output_dir(config, tmp_path)
    assert (out_dir / "config.json").is_file()
    assert (out_dir / "results.csv").is_file()
    assert not (out_dir / "violations.json").exists()
    summary = json.loads((out_dir / "summary.json").read_text())
    assert summary["num_rows"] == len(rows) == 2 * len(BOUND_NAMES)
    assert summary["num_violations"] == 0
    assert summary["config_hash"] == config.config_hash()
    for row in rows:
        assert row["experiment"] == config.name
        assert row["seed"] == config.seed
        assert row["config_hash"] == config.config_hash()

    rerun = run_experiment(config, tmp_path)
    resummary = json.loads((out_dir / "summary.json").read_text())
    assert resummary["determinism_hash"] == summary["determinism_hash"]
    assert determinism_hash(rerun) == determinism_hash(rows)


def test_run_experiment_honors_json_output(tmp_path):
    config = small_config(num_instances=1, output_format="json")
    run_experiment(config, tmp_path)
    out_dir = run_output_dir(config, tmp_path)
    loaded = json.loads((out_dir / "results.json").read_text())
    assert len(loaded) == len(BOUND_NAMES)


# ---- replay ------------------------------------------------------------------------


def test_replay_recomputes_archived_entries(tmp_path):
    ranges = GeneratorRanges.from_doc(SMALL_RANGES_DOC)
    spec_x, spec_y = generate_linear_pair(ranges, np.random.default_rng(5))
    entries = [
        {
            "instance_index": 0,
            "bound_name": "team_generalization",
            "spec_x": json.loads(spec_x.to_json()),
            "spec_y": json.loads(spec_y.to_json()),
        },
        {
            "instance_index": 0,
            "bound_name": "population_increase",
            "spec_x": json.loads(spec_x.to_json()),
            "new_capability": [0.5, 0.5],
            "new_weight": 0.25,
        },
        {
            "instance_index": 0,
            "bound_name": "population_decrease",
            "rebuild": {
                "env": "fruit_forage", "grid_size": 3, "num_agents": 2,
                "team_labels": ["z"],
            },
        },
    ]
    path = tmp_path / "violations.json"
    path.write_text(json.dumps(entries))
    reports = replay_violations(path)
    assert [r.bound_name for r in reports] == [
        "team_generalization", "population_increase", "population_decrease",
    ]
    assert all(r.satisfied for r in reports)


def test_replay_error_paths(tmp_path):
    with pytest.raises(ConfigError, match="cannot read violations file"):
        replay_violations(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    with pytest.raises(ConfigError, match="JSON list"):
        replay_violations(bad)
    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps([{"bound_name": "mystery", "spec_x": {}}]))
    with pytest.raises(ConfigError, match="unknown report kind"):
        replay_violations(unknown)
    alien = tmp_path / "alien.json"
    alien.write_text(
        json.dumps([{"bound_name": "team_generalization", "rebuild": {"env": "mars"}}])
    )
    with pytest.raises(ConfigError, match="cannot rebuild environment"):
        replay_violations(alien)


# ---- command line -------------------------------------------------------------------


def write_config(tmp_path, **overrides):
    doc = {"kind": "verify-bounds", "num_instances": 2, "ranges": SMALL_RANGES_DOC}
    doc.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return path


def test_cli_verify_bounds_run(tmp_path, capsys):
    config_path = write_config(tmp_path)
    code = main(
        ["verify-bounds", "--config", str(config_path), "--out", str(tmp_path / "runs"),
         "--jobs", "2", "--seed", "4"]
    )
    captured = capsys.readouterr()
    assert code == EXIT_OK
    assert "verify-bounds: 18 rows, 0 violations" in captured.out
    assert "determinism hash:" in captured.out
    runs = list((tmp_path / "runs" / "verify-bounds").iterdir())
    assert len(runs) == 1


def test_cli_format_override_writes_json(tmp_path):
    config_path = write_config(tmp_path, num_instances=1)
    code = main(
        ["verify-bounds", "--config", str(config_path), "--out", str(tmp_path / "runs"),
         "--format", "json"]
    )
    assert code == EXIT_OK
    results = list((tmp_path / "runs").rglob("results.json"))
    assert len(results) == 1


def test_cli_config_errors(tmp_path, capsys):
    assert main(["verify-bounds", "--config", str(tmp_path / "nope.json")]) == EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{broken")
    assert main(["verify-bounds", "--config", str(bad)]) == EXIT_CONFIG
    mismatched = write_config(tmp_path)
    assert main(["sweep", "--config", str(mismatched)]) == EXIT_CONFIG
    config_path = write_config(tmp_path)
    assert main(["verify-bounds", "--config", str(config_path), "--jobs", "0"]) == EXIT_CONFIG
    assert main(["replay", str(tmp_path / "absent.json")]) == EXIT_CONFIG
    assert main(["unknown-command"]) == EXIT_CONFIG
    assert main([]) == EXIT_CONFIG
    capsys.readouterr()


def test_cli_replay_clean_file(tmp_path, capsys):
    ranges = GeneratorRanges.from_doc(SMALL_RANGES_DOC)
    spec_x, spec_y = generate_linear_pair(ranges, np.random.default_rng(2))
    path = tmp_path / "violations.json"
    path.write_text(
        json.dumps(
            [
                {
                    "bound_name": "policy_transfer",
                    "spec_x": json.loads(spec_x.to_json()),
                    "spec_y": json.loads(spec_y.to_json()),
                }
            ]
        )
    )
    code = main(["replay", str(path)])
    captured = capsys.readouterr()
    assert code == EXIT_OK
    assert "replayed 1 reports, 0 still violated" in captured.out


def test_cli_surfaces_solver_failures(tmp_path, monkeypatch):
    from capmdp.mdp import SolverConvergenceError

    def explode(config, out_root, jobs=1):
        raise SolverConvergenceError("did not converge", residual=1.0, iterations=5)

    monkeypatch.setattr("capmdp.cli.run_experiment", explode)
    config_path = write_config(tmp_path)
    code = main(["verify-bounds", "--config", str(config_path), "--out", str(tmp_path / "runs")])
    assert code == EXIT_SOLVER
