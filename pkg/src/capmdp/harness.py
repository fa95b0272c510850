"""Experiment runner: random certification sweeps, environments, archives.

Experiments are described by a small JSON config, run deterministically from a
master seed (each instance derives its own generator so serial and parallel
runs produce identical rows), and written atomically under
<out>/<name>/<config-hash>/ as results.csv (or .json), config.json,
summary.json, and violations.json when any bound report comes back
unsatisfied. A determinism hash over all rows except wall-clock columns lets
re-runs be compared byte-for-byte.
"""

import csv
import hashlib
import io
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bounds import (
    BoundReport,
    SolveSettings,
    TaskDistribution,
    bound_approx_dynamics,
    bound_capability_estimation,
    bound_lipschitz,
    bound_out_of_distribution,
    bound_policy_transfer,
    bound_polynomial_deviation,
    bound_population_change,
    bound_team_generalization,
    s_max,
)
from .envs.fruit_forage import build_fruit_forage, desk_config
from .envs.predator_prey import PredatorPreyEnv, pp_task_suites
from .linear import (
    CapabilityVector,
    InfluenceWeights,
    LinearMMDPSpec,
    LipschitzRewardSpec,
    PolynomialRewardSpec,
    RewardKernel,
    TeamComposition,
    TransitionKernel,
    assemble_linear_mmdp,
    assemble_lipschitz_mmdp,
    perturb_dynamics,
    polynomial_reward,
)
from .mdp import StateSpace
from .qlearning import (
    TrainSchedule,
    evaluate_policy_empirical,
    generalization_gap,
    q_learning_train,
)

SCHEMA_VERSION = 1
EXPERIMENT_KINDS = ("verify-bounds", "fruit-forage", "predator-prey", "sweep")
CORE_COLUMNS = (
    "experiment",
    "seed",
    "instance",
    "bound_name",
    "bound_value",
    "actual_value",
    "satisfied",
    "slack",
    "config_hash",
    "wall_time",
)


class ConfigError(ValueError):
    """A malformed or inconsistent experiment configuration."""


@dataclass(frozen=True)
class GeneratorRanges:
    """Inclusive sampling ranges for random certification instances."""

    num_states: tuple = (4, 20)
    num_agents: tuple = (2, 4)
    actions_per_agent: tuple = (2, 3)
    capability_dim: tuple = (2, 4)
    feature_dim: tuple = (2, 5)
    max_joint_actions: int = 81
    gamma: float = 0.9

    def __post_init__(self):
        pairs = {
            "num_states": (self.num_states, 1),
            "num_agents": (self.num_agents, 1),
            "actions_per_agent": (self.actions_per_agent, 2),
            "capability_dim": (self.capability_dim, 1),
            "feature_dim": (self.feature_dim, 1),
        }
        for name, (pair, minimum) in pairs.items():
            if len(pair) != 2 or pair[0] > pair[1] or pair[0] < minimum:
                raise ConfigError(
                    f"range '{name}' must be (lo, hi) with {minimum} <= lo <= hi, got {pair}"
                )
        if self.actions_per_agent[0] ** self.num_agents[1] > self.max_joint_actions:
            raise ConfigError(
                "no actions_per_agent choice fits under max_joint_actions at the largest team"
            )
        if not (0.0 < self.gamma < 1.0):
            raise ConfigError(f"gamma must lie strictly inside (0, 1), got {self.gamma}")

    def to_doc(self) -> dict:
        return {
            "num_states": list(self.num_states),
            "num_agents": list(self.num_agents),
            "actions_per_agent": list(self.actions_per_agent),
            "capability_dim": list(self.capability_dim),
            "feature_dim": list(self.feature_dim),
            "max_joint_actions": self.max_joint_actions,
            "gamma": self.gamma,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "GeneratorRanges":
        known = set(cls().to_doc())
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown ranges field(s) {sorted(unknown)}")
        kwargs = {}
        for name, value in doc.items():
            if name in ("max_joint_actions",):
                kwargs[name] = int(value)
            elif name == "gamma":
                kwargs[name] = float(value)
            else:
                kwargs[name] = tuple(int(v) for v in value)
        return cls(**kwargs)


_PP_DEFAULTS = {
    "suite": "unseen_team",
    "mode": "both",
    "grid_size": 8,
    "episode_limit": 100,
    "prey_move_prob": 0.7,
    "total_steps": 200_000,
    "alpha": 0.1,
    "epsilon_start": 1.0,
    "epsilon_end": 0.05,
    "epsilon_decay_steps": 50_000,
    "gamma": 0.99,
    "eval_interval": 10_000,
    "eval_episodes": 10,
}

_FF_DEFAULTS = {"grid_size": 4, "num_agents": 2}


@dataclass(frozen=True)
class ExperimentConfig:
    """Parsed, validated experiment description."""

    kind: str
    name: str = ""
    seed: int = 0
    schema_version: int = SCHEMA_VERSION
    num_instances: int = 50
    tol: float = 1e-9
    eps_r: float = 0.01
    eps_p: float = 0.005
    ranges: GeneratorRanges = field(default_factory=GeneratorRanges)
    fruit_forage: dict = field(default_factory=dict)
    predator_prey: dict = field(default_factory=dict)
    sweep_cells: tuple = ()
    output_format: str = "csv"

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(
                f"schema_version must be {SCHEMA_VERSION}, got {self.schema_version}"
            )
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if not self.name:
            object.__setattr__(self, "name", self.kind)
        if self.num_instances < 1:
            raise ConfigError("num_instances must be positive")
        if self.tol <= 0:
            raise ConfigError("tol must be positive")
        if self.eps_r < 0 or not (0.0 <= self.eps_p < 1.0):
            raise ConfigError("eps_r must be >= 0 and eps_p inside [0, 1)")
        if self.output_format not in ("csv", "json"):
            raise ConfigError(f"output format must be csv or json, got {self.output_format!r}")
        object.__setattr__(
            self, "fruit_forage", _merge_params("fruit_forage", _FF_DEFAULTS, self.fruit_forage)
        )
        object.__setattr__(
            self,
            "predator_prey",
            _merge_params("predator_prey", _PP_DEFAULTS, self.predator_prey),
        )
        if self.kind == "sweep" and not self.sweep_cells:
            raise ConfigError("a sweep needs at least one cell")
        cells = []
        for cell in self.sweep_cells:
            unknown = set(cell) - {"num_agents", "capability_dim", "num_states", "num_instances"}
            if unknown:
                raise ConfigError(f"unknown sweep cell field(s) {sorted(unknown)}")
            if "num_agents" not in cell or "capability_dim" not in cell:
                raise ConfigError("each sweep cell needs num_agents and capability_dim")
            cells.append({k: int(v) for k, v in cell.items()})
        object.__setattr__(self, "sweep_cells", tuple(cells))

    def to_doc(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "kind": self.kind,
            "name": self.name,
            "seed": self.seed,
            "num_instances": self.num_instances,
            "tol": self.tol,
            "eps_r": self.eps_r,
            "eps_p": self.eps_p,
            "ranges": self.ranges.to_doc(),
            "fruit_forage": dict(self.fruit_forage),
            "predator_prey": dict(self.predator_prey),
            "sweep_cells": [dict(c) for c in self.sweep_cells],
            "output_format": self.output_format,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("the experiment config must be a JSON object")
        known = {
            "schema_version",
            "kind",
            "name",
            "seed",
            "num_instances",
            "tol",
            "eps_r",
            "eps_p",
            "ranges",
            "fruit_forage",
            "predator_prey",
            "sweep_cells",
            "output_format",
        }
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config field(s) {sorted(unknown)}")
        if "kind" not in doc:
            raise ConfigError("the config is missing the required field 'kind'")
        try:
            ranges = GeneratorRanges.from_doc(doc.get("ranges", {}))
            return cls(
                kind=str(doc["kind"]),
                name=str(doc.get("name", "")),
                seed=int(doc.get("seed", 0)),
                schema_version=int(doc.get("schema_version", SCHEMA_VERSION)),
                num_instances=int(doc.get("num_instances", 50)),
                tol=float(doc.get("tol", 1e-9)),
                eps_r=float(doc.get("eps_r", 0.01)),
                eps_p=float(doc.get("eps_p", 0.005)),
                ranges=ranges,
                fruit_forage=dict(doc.get("fruit_forage", {})),
                predator_prey=dict(doc.get("predator_prey", {})),
                sweep_cells=tuple(doc.get("sweep_cells", [])),
                output_format=str(doc.get("output_format", "csv")),
            )
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_doc(doc)

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_doc(), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()[:12]


def _merge_params(section: str, defaults: dict, overrides: dict) -> dict:
    unknown = set(overrides) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown {section} field(s) {sorted(unknown)}")
    merged = dict(defaults)
    merged.update(overrides)
    return merged


def default_config(kind: str, seed: int = 0) -> ExperimentConfig:
    """A runnable configuration for each experiment kind."""
    if kind == "sweep":
        cells = [
            {"num_agents": n, "capability_dim": d, "num_instances": 10}
            for n in (2, 3)
            for d in (2, 4)
        ]
        return ExperimentConfig(kind=kind, seed=seed, sweep_cells=tuple(cells))
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    return ExperimentConfig(kind=kind, seed=seed)


# ---- random instance generation ---------------------------------------------------


def generate_linear_pair(ranges: GeneratorRanges, rng: np.random.Generator):
    """Two teams over one randomly drawn shared frame (kernels, states, rho)."""
    lo, hi = ranges.num_states
    num_states = int(rng.integers(lo, hi + 1))
    lo, hi = ranges.feature_dim
    feature_dim = int(rng.integers(lo, hi + 1))
    lo, hi = ranges.capability_dim
    dim = int(rng.integers(lo, hi + 1))
    lo, hi = ranges.num_agents
    num_agents = int(rng.integers(lo, hi + 1))
    candidates = [
        m
        for m in range(ranges.actions_per_agent[0], ranges.actions_per_agent[1] + 1)
        if m**num_agents <= ranges.max_joint_actions
    ]
    actions = int(candidates[rng.integers(len(candidates))])
    num_joint = actions**num_agents

    states = StateSpace(rng.uniform(0.0, 1.0, (num_states, feature_dim)))
    reward_kernel = RewardKernel(rng.uniform(0.0, 1.0, (dim, feature_dim)))
    transition_kernel = TransitionKernel(
        rng.dirichlet(np.ones(num_states), size=(dim, num_states, num_joint))
    )
    rho = rng.dirichlet(np.ones(num_states))

    def sample_task():
        team = TeamComposition(
            tuple(rng.dirichlet(np.ones(dim)) for _ in range(num_agents))
        )
        weights = InfluenceWeights(rng.dirichlet(np.ones(num_agents)))
        return team, weights

    team_x, weights_x = sample_task()
    team_y, weights_y = sample_task()
    common = dict(
        reward_kernel=reward_kernel,
        transition_kernel=transition_kernel,
        states=states,
        num_agents=num_agents,
        actions_per_agent=actions,
        gamma=ranges.gamma,
        rho=rho,
    )
    spec_x = LinearMMDPSpec(team=team_x, weights=weights_x, **common)
    spec_y = LinearMMDPSpec(team=team_y, weights=weights_y, **common)
    return spec_x, spec_y


def generate_linear_instance(ranges: GeneratorRanges, rng: np.random.Generator) -> LinearMMDPSpec:
    """One random task: simplex capabilities and weights on a random frame."""
    spec, _ = generate_linear_pair(ranges, rng)
    return spec


def sample_simplex_team(rng: np.random.Generator, num_agents: int, dim: int) -> TeamComposition:
    return TeamComposition(tuple(rng.dirichlet(np.ones(dim)) for _ in range(num_agents)))


def sample_polynomial_spec(
    rng: np.random.Generator, num_agents: int, degree: int, alpha: float = 1.0
) -> PolynomialRewardSpec:
    """Random polynomial with at most 2^(j-1) terms of each total degree j.

    Under that term budget the closed-form deviation bound applies to any
    single member's capabilities moving by at most delta inside [0, 1].
    """
    terms = {(0,) * num_agents: float(rng.uniform(-alpha, alpha))}
    for j in range(1, degree + 1):
        for _ in range(2 ** (j - 1)):
            idx = tuple(int(v) for v in rng.multinomial(j, np.ones(num_agents) / num_agents))
            terms.setdefault(idx, float(rng.uniform(-alpha, alpha)))
    return PolynomialRewardSpec(terms=terms, alpha=alpha, degree=degree)


def polynomial_deviation_report(
    poly: PolynomialRewardSpec,
    team: TeamComposition,
    team_perturbed: TeamComposition,
    member_index: int,
    delta: float,
    reward_kernel: RewardKernel,
    states: StateSpace,
) -> BoundReport:
    """Measured reward shift from one member's move vs the closed-form bound."""
    gap = float(
        np.max(
            np.abs(
                team.matrix()[member_index] - team_perturbed.matrix()[member_index]
            )
        )
    )
    if gap > delta + 1e-12:
        raise ValueError(f"the perturbed member moved by {gap}, more than delta={delta}")
    smax = s_max(reward_kernel, states)
    bound = bound_polynomial_deviation(poly.alpha, poly.degree, smax, delta)
    measured = max(
        abs(
            polynomial_reward(poly, team, reward_kernel, phi)
            - polynomial_reward(poly, team_perturbed, reward_kernel, phi)
        )
        for phi in states.features
    )
    parts = {
        "alpha": poly.alpha,
        "degree": float(poly.degree),
        "delta": float(delta),
        "s_max": smax,
        "member_index": float(member_index),
        "num_terms": float(len(poly.terms)),
    }
    return BoundReport.build("polynomial_deviation", parts, bound, measured)


# ---- per-instance certification ---------------------------------------------------


def _timed(fn, *args, **kwargs):
    start = time.perf_counter()
    report = fn(*args, **kwargs)
    return report, time.perf_counter() - start


def _spec_doc(spec: LinearMMDPSpec) -> dict:
    return json.loads(spec.to_json())


def certify_instance(config: ExperimentConfig, index: int):
    """All bound reports for one randomly generated instance.

    Returns (rows, violations); every random draw flows from a generator
    seeded by (config.seed, index), so results are order-independent.
    """
    rng = np.random.default_rng([config.seed, index])
    settings = SolveSettings(tol=config.tol)
    spec_x, spec_y = generate_linear_pair(config.ranges, rng)
    num_agents = spec_x.team.num_agents
    dim = spec_x.capability_dim

    rows = []
    violations = []

    def record(report, wall_time, extras):
        row = {"instance": index, "wall_time": float(wall_time)}
        row.update(report.to_csv_row())
        rows.append(row)
        if not report.satisfied:
            violations.append(
                {
                    "instance_index": index,
                    "bound_name": report.bound_name,
                    "report": json.loads(report.to_json()),
                    **extras,
                }
            )

    pair_extras = {"spec_x": _spec_doc(spec_x), "spec_y": _spec_doc(spec_y)}

    report, wt = _timed(bound_team_generalization, spec_x, spec_y, settings)
    record(report, wt, pair_extras)
    report, wt = _timed(bound_policy_transfer, spec_x, spec_y, settings)
    record(report, wt, pair_extras)

    report, wt = _timed(bound_population_change, spec_x, "remove-last", settings=settings)
    record(report, wt, {"spec_x": pair_extras["spec_x"]})

    new_capability = rng.dirichlet(np.ones(dim))
    new_weight = float(rng.uniform(0.05, 0.5))
    report, wt = _timed(
        bound_population_change,
        spec_x,
        "add-member",
        new_capability=new_capability,
        new_weight=new_weight,
        settings=settings,
    )
    record(
        report,
        wt,
        {
            "spec_x": pair_extras["spec_x"],
            "new_capability": new_capability.tolist(),
            "new_weight": new_weight,
        },
    )

    # estimation error: blend each member toward a random simplex point
    blend = rng.uniform(0.0, 0.1)
    inferred_members = tuple(
        (1.0 - blend) * m.c + blend * rng.dirichlet(np.ones(dim))
        for m in spec_x.team.members
    )
    spec_inferred = spec_x.with_team(TeamComposition(inferred_members), spec_x.weights)
    report, wt = _timed(bound_capability_estimation, spec_x, spec_inferred, settings)
    record(
        report,
        wt,
        {"spec_x": pair_extras["spec_x"], "spec_y": _spec_doc(spec_inferred)},
    )

    support_teams = [spec_y.team] + [
        sample_simplex_team(rng, num_agents, dim) for _ in range(2)
    ]
    distribution = TaskDistribution(
        support=tuple((team, spec_x.weights) for team in support_teams),
        probabilities=np.full(len(support_teams), 1.0 / len(support_teams)),
    )
    report, wt = _timed(bound_out_of_distribution, distribution, spec_x, settings)
    record(
        report,
        wt,
        {
            "spec_x": pair_extras["spec_x"],
            "support_teams": [t.matrix().tolist() for t in support_teams],
        },
    )

    seed_x = int(rng.integers(2**31))
    seed_y = int(rng.integers(2**31))
    actual_x = perturb_dynamics(
        assemble_linear_mmdp(spec_x), config.eps_r, config.eps_p, seed_x
    )
    actual_y = perturb_dynamics(
        assemble_linear_mmdp(spec_y), config.eps_r, config.eps_p, seed_y
    )
    report, wt = _timed(
        bound_approx_dynamics, spec_x, spec_y, actual_x, actual_y, settings
    )
    record(
        report,
        wt,
        {
            **pair_extras,
            "eps_r": config.eps_r,
            "eps_p": config.eps_p,
            "seed_x": seed_x,
            "seed_y": seed_y,
        },
    )

    # reward-only variation: both teams share the x mixture's dynamics
    reward_map = LipschitzRewardSpec(
        f=lambda team, a=spec_x.weights.a: a @ team.matrix(),
        lipschitz_constants=spec_x.weights.a,
    )
    shared = assemble_linear_mmdp(spec_x).transitions
    lip_args = dict(
        reward_kernel=spec_x.reward_kernel,
        transitions=shared,
        states=spec_x.states,
        num_agents=spec_x.num_agents,
        actions_per_agent=spec_x.actions_per_agent,
        gamma=spec_x.gamma,
        rho=spec_x.rho,
    )
    mmdp_lx = assemble_lipschitz_mmdp(reward_map, spec_x.team, **lip_args)
    mmdp_ly = assemble_lipschitz_mmdp(reward_map, spec_y.team, **lip_args)
    report, wt = _timed(
        bound_lipschitz,
        reward_map,
        spec_x.team,
        spec_y.team,
        mmdp_lx,
        mmdp_ly,
        spec_x.reward_kernel,
        settings,
    )
    record(report, wt, pair_extras)

    degree = int(rng.integers(1, 4))
    poly = sample_polynomial_spec(rng, num_agents, degree)
    delta = float(rng.choice([0.01, 0.1]))
    member_index = int(rng.integers(num_agents))
    moved = np.clip(
        spec_x.team.matrix()[member_index]
        + rng.uniform(-delta, delta, dim),
        0.0,
        1.0,
    )
    team_perturbed = spec_x.team.replace_member(member_index, CapabilityVector(moved))
    report, wt = _timed(
        polynomial_deviation_report,
        poly,
        spec_x.team,
        team_perturbed,
        member_index,
        delta,
        spec_x.reward_kernel,
        spec_x.states,
    )
    record(
        report,
        wt,
        {
            "spec_x": pair_extras["spec_x"],
            "poly": json.loads(poly.to_json()),
            "delta": delta,
            "member_index": member_index,
            "team_perturbed": team_perturbed.matrix().tolist(),
        },
    )

    return rows, violations


def _certify_worker(payload):
    config, index = payload
    return index, certify_instance(config, index)


# ---- experiment runners --------------------------------------------------------


def run_verify_bounds(config: ExperimentConfig, jobs: int = 1):
    """Certify every generated instance; rows merge in instance-index order.

    Each worker derives its own generator from (master seed, instance index),
    so parallel and serial runs produce identical row sets.
    """
    rows = []
    violations = []
    indices = range(config.num_instances)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = dict(
                pool.map(_certify_worker, [(config, i) for i in indices])
            )
        ordered = [results[i] for i in indices]
    else:
        ordered = [certify_instance(config, i) for i in indices]
    for instance_rows, instance_violations in ordered:
        rows.extend(instance_rows)
        violations.extend(instance_violations)
    return rows, violations


def run_fruit_forage(config: ExperimentConfig):
    """Desk-scale foraging certification: two team comparisons plus a removal."""
    params = config.fruit_forage
    grid_size = int(params["grid_size"])
    num_agents = int(params["num_agents"])
    settings = SolveSettings(tol=config.tol)
    rows = []
    violations = []

    def record(report, wall_time, team_labels):
        row = {"instance": 0, "wall_time": float(wall_time)}
        row.update(report.to_csv_row())
        rows.append(row)
        if not report.satisfied:
            violations.append(
                {
                    "instance_index": 0,
                    "bound_name": report.bound_name,
                    "report": json.loads(report.to_json()),
                    "rebuild": {
                        "env": "fruit_forage",
                        "grid_size": grid_size,
                        "num_agents": num_agents,
                        "team_labels": list(team_labels),
                    },
                }
            )

    spec_x = build_fruit_forage(desk_config("x", grid_size, num_agents))
    spec_y = build_fruit_forage(desk_config("y", grid_size, num_agents))
    report, wt = _timed(bound_team_generalization, spec_x, spec_y, settings)
    record(report, wt, ("x", "y"))
    report, wt = _timed(bound_policy_transfer, spec_x, spec_y, settings)
    record(report, wt, ("x", "y"))
    del spec_x, spec_y

    spec_z = build_fruit_forage(desk_config("z", grid_size, num_agents))
    report, wt = _timed(bound_population_change, spec_z, "remove-last", settings=settings)
    record(report, wt, ("z",))
    return rows, violations


def _pp_env_builder(params: dict):
    def build(task, capability_observable, seed):
        cfg = task.to_config(
            grid_size=int(params["grid_size"]),
            capability_observable=capability_observable,
            episode_limit=int(params["episode_limit"]),
            prey_move_prob=float(params["prey_move_prob"]),
        )
        return PredatorPreyEnv(cfg, seed)

    return build


def run_predator_prey(config: ExperimentConfig):
    """Train the shared learner on a task suite, blind and capability-aware."""
    params = config.predator_prey
    suites = pp_task_suites()
    suite_name = str(params["suite"])
    if suite_name not in suites:
        raise ConfigError(f"unknown task suite {suite_name!r}; known: {sorted(suites)}")
    suite = suites[suite_name]
    mode = str(params["mode"])
    if mode not in ("aware", "blind", "both"):
        raise ConfigError(f"predator_prey mode must be aware, blind, or both, got {mode!r}")
    modes = ("blind", "aware") if mode == "both" else (mode,)
    schedule = TrainSchedule(
        total_steps=int(params["total_steps"]),
        alpha=float(params["alpha"]),
        epsilon_start=float(params["epsilon_start"]),
        epsilon_end=float(params["epsilon_end"]),
        epsilon_decay_steps=int(params["epsilon_decay_steps"]),
        gamma=float(params["gamma"]),
        eval_interval=int(params["eval_interval"]),
    )
    episodes = int(params["eval_episodes"])
    builder = _pp_env_builder(params)
    rows = []

    def task_label(task):
        return "-".join(str(c) for c in task.predator_capabilities)

    for mode_name in modes:
        observable = mode_name == "aware"
        start = time.perf_counter()
        table = q_learning_train(
            builder, suite.train, schedule, seed=config.seed, capability_observable=observable
        )
        train_time = time.perf_counter() - start
        for phase, tasks in (("train", suite.train), ("test", suite.test)):
            outcome = evaluate_policy_empirical(
                table, builder, tasks, episodes, seed=config.seed,
                capability_observable=observable,
            )
            for task_index, (task, stats) in enumerate(zip(tasks, outcome["per_task"])):
                rows.append(
                    {
                        "mode": mode_name,
                        "phase": phase,
                        "task_index": task_index,
                        "team": task_label(task),
                        "penalty": float(task.penalty),
                        "mean": stats["mean"],
                        "std": stats["std"],
                        "episodes": episodes,
                        "steps_trained": schedule.total_steps,
                        "wall_time": train_time if phase == "train" and task_index == 0 else 0.0,
                    }
                )
        gap_train = next(
            t for t in suite.train if t.predator_capabilities == suite.gap_train_team
        )
        gap_test = next(
            t for t in suite.test if t.predator_capabilities == suite.gap_test_team
        )
        gap = generalization_gap(
            table, builder, gap_train, gap_test, episodes, seed=config.seed,
            capability_observable=observable,
        )
        rows.append(
            {
                "mode": mode_name,
                "phase": "gap",
                "task_index": -1,
                "team": f"{task_label(gap_train)}_vs_{task_label(gap_test)}",
                "penalty": float(gap_train.penalty),
                "mean": gap["gap"],
                "std": 0.0,
                "episodes": episodes,
                "steps_trained": schedule.total_steps,
                "wall_time": 0.0,
            }
        )
    return rows, []


def run_sweep(config: ExperimentConfig, jobs: int = 1):
    rows = []
    violations = []
    for cell_index, cell in enumerate(config.sweep_cells):
        n = cell["num_agents"]
        d = cell["capability_dim"]
        overrides = {"num_agents": (n, n), "capability_dim": (d, d)}
        if "num_states" in cell:
            overrides["num_states"] = (cell["num_states"], cell["num_states"])
        ranges_doc = config.ranges.to_doc()
        ranges_doc.update({k: list(v) for k, v in overrides.items()})
        cell_config = ExperimentConfig(
            kind="verify-bounds",
            name=config.name,
            seed=config.seed + cell_index,
            num_instances=cell.get("num_instances", config.num_instances),
            tol=config.tol,
            eps_r=config.eps_r,
            eps_p=config.eps_p,
            ranges=GeneratorRanges.from_doc(ranges_doc),
        )
        cell_rows, cell_violations = run_verify_bounds(cell_config, jobs=jobs)
        for row in cell_rows:
            row = dict(row)
            row["cell_num_agents"] = n
            row["cell_capability_dim"] = d
            rows.append(row)
        violations.extend(cell_violations)
    return rows, violations


# ---- output: atomic files, canonical hashing -------------------------------------


def _atomic_write_text(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _canonical_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def determinism_hash(rows, exclude=("wall_time",)) -> str:
    """Order-sensitive content hash of result rows, minus wall-clock columns."""
    digest = hashlib.sha256()
    for row in rows:
        line = ",".join(
            f"{key}={_canonical_value(row[key])}"
            for key in sorted(row)
            if key not in exclude
        )
        digest.update(line.encode())
        digest.update(b"\n")
    return digest.hexdigest()


def _column_order(rows) -> list:
    extras = set()
    for row in rows:
        extras.update(row)
    if not extras:
        return list(CORE_COLUMNS)
    leading = [c for c in CORE_COLUMNS if c in extras]
    trailing = sorted(extras - set(CORE_COLUMNS))
    return leading + trailing


def rows_to_csv_text(rows) -> str:
    buffer = io.StringIO()
    columns = _column_order(rows)
    writer = csv.DictWriter(buffer, fieldnames=columns, restval="", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buffer.getvalue()


def _row_order_key(row):
    def ordinal(value):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return -1.0
        return float(value)

    return (
        str(row.get("experiment", "")),
        ordinal(row.get("seed")),
        ordinal(row.get("instance")),
    )


def emit_results(rows, format: str, path) -> None:
    """Write result rows to one file, sorted by (experiment, seed, instance).

    CSV puts the core columns first and the remaining columns in sorted
    order; an empty row sequence still yields the header line. JSON is a
    plain array of row objects. Both formats write through a temp file
    and rename so readers never see a partial file.
    """
    if format not in ("csv", "json"):
        raise ConfigError(f"unknown output format {format!r}")
    target = Path(path)
    ordered = sorted(rows, key=_row_order_key)
    try:
        if format == "json":
            _atomic_write_text(target, json.dumps(ordered, indent=2))
        else:
            _atomic_write_text(target, rows_to_csv_text(ordered))
    except OSError as exc:
        raise OSError(f"writing results to {target}: {exc}") from exc


def run_output_dir(config: ExperimentConfig, out_root) -> Path:
    return Path(out_root) / config.name / config.config_hash()


def write_run_artifacts(config: ExperimentConfig, rows, violations, out_root, total_wall_time: float):
    """Write config/results/summary (and violations) under a content-hash dir."""
    out_dir = run_output_dir(config, out_root)
    out_dir.mkdir(parents=True, exist_ok=True)
    _atomic_write_text(out_dir / "config.json", json.dumps(config.to_doc(), indent=2, sort_keys=True))
    suffix = "json" if config.output_format == "json" else "csv"
    emit_results(rows, config.output_format, out_dir / f"results.{suffix}")
    summary = {
        "schema_version": SCHEMA_VERSION,
        "kind": config.kind,
        "name": config.name,
        "config_hash": config.config_hash(),
        "num_rows": len(rows),
        "num_violations": len(violations),
        "determinism_hash": determinism_hash(rows),
        "total_wall_time": float(total_wall_time),
    }
    _atomic_write_text(out_dir / "summary.json", json.dumps(summary, indent=2, sort_keys=True))
    if violations:
        _atomic_write_text(out_dir / "violations.json", json.dumps(violations, indent=2))
    return out_dir, summary


def _stamp_rows(config: ExperimentConfig, rows) -> list:
    stamp = {
        "experiment": config.name,
        "seed": config.seed,
        "config_hash": config.config_hash(),
    }
    for row in rows:
        for key, value in stamp.items():
            row.setdefault(key, value)
    return rows


def run_experiment(config: ExperimentConfig, out_root, jobs: int = 1) -> list:
    """Run one configured experiment, write its artifacts, and return the rows."""
    start = time.perf_counter()
    if config.kind == "verify-bounds":
        rows, violations = run_verify_bounds(config, jobs=jobs)
    elif config.kind == "fruit-forage":
        rows, violations = run_fruit_forage(config)
    elif config.kind == "predator-prey":
        rows, violations = run_predator_prey(config)
    elif config.kind == "sweep":
        rows, violations = run_sweep(config, jobs=jobs)
    else:
        raise ConfigError(f"unknown experiment kind {config.kind!r}")
    total = time.perf_counter() - start
    _stamp_rows(config, rows)
    write_run_artifacts(config, rows, violations, out_root, total)
    return rows


# ---- violation replay ---------------------------------------------------------


_REPLAYABLE = (
    "team_generalization",
    "policy_transfer",
    "population_decrease",
    "population_increase",
    "capability_estimation",
    "out_of_distribution",
    "approx_dynamics",
    "lipschitz",
    "polynomial_deviation",
)


def _replay_one(entry: dict) -> BoundReport:
    name = entry.get("bound_name")
    if name not in _REPLAYABLE:
        raise ConfigError(f"cannot replay unknown report kind {name!r}")
    settings = SolveSettings()
    rebuild = entry.get("rebuild")
    if rebuild is not None:
        if rebuild.get("env") != "fruit_forage":
            raise ConfigError(f"cannot rebuild environment {rebuild.get('env')!r}")
        labels = rebuild["team_labels"]
        specs = [
            build_fruit_forage(
                desk_config(label, int(rebuild["grid_size"]), int(rebuild["num_agents"]))
            )
            for label in labels
        ]
        if name == "team_generalization":
            return bound_team_generalization(specs[0], specs[1], settings)
        if name == "policy_transfer":
            return bound_policy_transfer(specs[0], specs[1], settings)
        if name == "population_decrease":
            return bound_population_change(specs[0], "remove-last", settings=settings)
        raise ConfigError(f"cannot replay report {name!r} for a rebuilt environment")

    spec_x = LinearMMDPSpec.from_json(json.dumps(entry["spec_x"]))
    spec_y = (
        LinearMMDPSpec.from_json(json.dumps(entry["spec_y"]))
        if "spec_y" in entry
        else None
    )
    if name == "team_generalization":
        return bound_team_generalization(spec_x, spec_y, settings)
    if name == "policy_transfer":
        return bound_policy_transfer(spec_x, spec_y, settings)
    if name == "population_decrease":
        return bound_population_change(spec_x, "remove-last", settings=settings)
    if name == "population_increase":
        return bound_population_change(
            spec_x,
            "add-member",
            new_capability=np.asarray(entry["new_capability"], dtype=float),
            new_weight=float(entry["new_weight"]),
            settings=settings,
        )
    if name == "capability_estimation":
        return bound_capability_estimation(spec_x, spec_y, settings)
    if name == "out_of_distribution":
        teams = [
            TeamComposition(tuple(np.asarray(m, dtype=float) for m in team))
            for team in entry["support_teams"]
        ]
        distribution = TaskDistribution(
            support=tuple((team, spec_x.weights) for team in teams),
            probabilities=np.full(len(teams), 1.0 / len(teams)),
        )
        return bound_out_of_distribution(distribution, spec_x, settings)
    if name == "approx_dynamics":
        actual_x = perturb_dynamics(
            assemble_linear_mmdp(spec_x), entry["eps_r"], entry["eps_p"], entry["seed_x"]
        )
        actual_y = perturb_dynamics(
            assemble_linear_mmdp(spec_y), entry["eps_r"], entry["eps_p"], entry["seed_y"]
        )
        return bound_approx_dynamics(spec_x, spec_y, actual_x, actual_y, settings)
    if name == "lipschitz":
        reward_map = LipschitzRewardSpec(
            f=lambda team, a=spec_x.weights.a: a @ team.matrix(),
            lipschitz_constants=spec_x.weights.a,
        )
        shared = assemble_linear_mmdp(spec_x).transitions
        args = dict(
            reward_kernel=spec_x.reward_kernel,
            transitions=shared,
            states=spec_x.states,
            num_agents=spec_x.num_agents,
            actions_per_agent=spec_x.actions_per_agent,
            gamma=spec_x.gamma,
            rho=spec_x.rho,
        )
        mmdp_x = assemble_lipschitz_mmdp(reward_map, spec_x.team, **args)
        mmdp_y = assemble_lipschitz_mmdp(reward_map, spec_y.team, **args)
        return bound_lipschitz(
            reward_map, spec_x.team, spec_y.team, mmdp_x, mmdp_y,
            spec_x.reward_kernel, settings,
        )
    if name == "polynomial_deviation":
        poly = PolynomialRewardSpec.from_json(json.dumps(entry["poly"]))
        team_perturbed = TeamComposition(
            tuple(np.asarray(m, dtype=float) for m in entry["team_perturbed"])
        )
        return polynomial_deviation_report(
            poly,
            spec_x.team,
            team_perturbed,
            int(entry["member_index"]),
            float(entry["delta"]),
            spec_x.reward_kernel,
            spec_x.states,
        )
    raise ConfigError(f"cannot replay report kind {name!r}")


def replay_violations(path) -> list:
    """Recompute every archived violation; returns the fresh reports in order."""
    path = Path(path)
    try:
        entries = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read violations file {path}: {exc}") from exc
    if not isinstance(entries, list):
        raise ConfigError("a violations file must hold a JSON list")
    return [_replay_one(entry) for entry in entries]
