"""Certified value-difference bounds between capability-parameterized teams.

Every calculator assembles and exactly solves the tasks it compares, computes
a closed-form bound from team-level quantities, and returns a BoundReport
pairing the bound with the measured value difference. A report is satisfied
when the measurement does not exceed the bound beyond a fixed additive
tolerance; the certification harness treats any unsatisfied report as a
violation worth archiving.
"""

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .linear import (
    CapabilityVector,
    InfluenceWeights,
    LinearMMDPSpec,
    LipschitzRewardSpec,
    RewardKernel,
    TeamComposition,
    assemble_linear_mmdp,
)
from .mdp import (
    StateSpace,
    TabularMMDP,
    ValueTable,
    check_distribution,
    policy_evaluation,
    value_iteration,
)

BOUND_TOLERANCE = 1e-7
PERMUTATION_GUARD = 8
GAMMA_CROSSOVER = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class SolveSettings:
    """Solver and reporting knobs shared by all bound calculators."""

    tol: float = 1e-9
    max_iters: int = 10**6
    psi_over_permutations: bool = False

    def __post_init__(self):
        if self.tol <= 0 or self.max_iters < 1:
            raise ValueError("tol must be positive and max_iters at least 1")


@dataclass(frozen=True)
class BoundReport:
    """One certified comparison: bound, measurement, and their ingredients."""

    bound_name: str
    constituents: dict
    bound_value: float
    actual_value: float
    satisfied: bool
    slack: float

    @classmethod
    def build(cls, name: str, constituents: dict, bound_value: float, actual_value: float):
        bound_value = float(bound_value)
        actual_value = float(actual_value)
        return cls(
            bound_name=name,
            constituents={k: float(v) for k, v in constituents.items()},
            bound_value=bound_value,
            actual_value=actual_value,
            satisfied=bool(actual_value <= bound_value + BOUND_TOLERANCE),
            slack=bound_value - actual_value,
        )

    def to_csv_row(self) -> dict:
        row = {
            "bound_name": self.bound_name,
            "bound_value": self.bound_value,
            "actual_value": self.actual_value,
            "satisfied": self.satisfied,
            "slack": self.slack,
        }
        row.update(self.constituents)
        return row

    def to_json(self) -> str:
        return json.dumps(
            {
                "bound_name": self.bound_name,
                "constituents": self.constituents,
                "bound_value": self.bound_value,
                "actual_value": self.actual_value,
                "satisfied": self.satisfied,
                "slack": self.slack,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "BoundReport":
        doc = json.loads(text)
        return cls(
            bound_name=doc["bound_name"],
            constituents=dict(doc["constituents"]),
            bound_value=doc["bound_value"],
            actual_value=doc["actual_value"],
            satisfied=doc["satisfied"],
            slack=doc["slack"],
        )


@dataclass(frozen=True, eq=False)
class TaskDistribution:
    """Finite distribution over (team, influence weights) tasks."""

    support: tuple
    probabilities: np.ndarray

    def __post_init__(self):
        support = tuple(self.support)
        if not support:
            raise ValueError("a task distribution needs a non-empty support")
        for team, weights in support:
            if not isinstance(team, TeamComposition) or not isinstance(weights, InfluenceWeights):
                raise ValueError("support entries must be (TeamComposition, InfluenceWeights)")
        probs = check_distribution(self.probabilities, "task probabilities")
        if probs.shape[0] != len(support):
            raise ValueError("one probability per support entry is required")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probabilities", probs)

    @property
    def size(self) -> int:
        return len(self.support)


def psi(
    team_x: TeamComposition,
    weights_x: InfluenceWeights,
    team_y: TeamComposition,
    weights_y: InfluenceWeights,
    minimize_over_permutations: bool = False,
) -> float:
    """Two-term capability discrepancy between weighted teams.

    First term: sup-norm of the x-weighted member-by-member capability
    difference. Second term: sup-norm of the weight-difference mixture of the
    y capabilities. Optionally minimized over relabelings of team y, which
    leaves y's assembled dynamics unchanged.
    """
    value, _ = psi_with_permutation(
        team_x, weights_x, team_y, weights_y, minimize_over_permutations
    )
    return value


def psi_with_permutation(
    team_x: TeamComposition,
    weights_x: InfluenceWeights,
    team_y: TeamComposition,
    weights_y: InfluenceWeights,
    minimize_over_permutations: bool = False,
) -> tuple:
    """psi plus the member order of team y that attained it."""
    n = team_x.num_agents
    if team_y.num_agents != n or weights_x.num_agents != n or weights_y.num_agents != n:
        raise ValueError("both teams and weight vectors must have the same size")
    if team_x.dim != team_y.dim:
        raise ValueError("both teams must share one capability dimension")
    identity = tuple(range(n))
    if not minimize_over_permutations:
        return _psi_fixed(team_x, weights_x.a, team_y, weights_y.a), identity
    if n > PERMUTATION_GUARD:
        raise ValueError(
            f"permutation search over {n} members exceeds the guard of {PERMUTATION_GUARD}"
        )
    mat_y = team_y.matrix()
    best = np.inf
    best_perm = identity
    for perm in itertools.permutations(range(n)):
        value = _psi_arrays(
            team_x.matrix(), weights_x.a, mat_y[list(perm)], weights_y.a[list(perm)]
        )
        if value < best:
            best = value
            best_perm = perm
    return float(best), best_perm


def _psi_fixed(team_x, a_x, team_y, a_y) -> float:
    return _psi_arrays(team_x.matrix(), a_x, team_y.matrix(), a_y)


def _psi_arrays(mat_x, a_x, mat_y, a_y) -> float:
    term_members = float(np.max(np.abs(a_x @ (mat_x - mat_y))))
    term_weights = float(np.max(np.abs((a_x - a_y) @ mat_y)))
    return term_members + term_weights


def s_max(reward_kernel: RewardKernel, states: StateSpace) -> float:
    """Largest L1 norm of the kernel-mapped state features."""
    if reward_kernel.feature_dim != states.feature_dim:
        raise ValueError("reward kernel and state space disagree on the feature dimension")
    return float(np.abs(states.features @ reward_kernel.w.T).sum(axis=1).max())


def v_mid(values: ValueTable) -> float:
    """Half the largest per-state value, the centering constant of the bounds."""
    return 0.5 * float(values.v.max())


def gamma_factor(gamma: float) -> float:
    """Discount multiplier turning per-step gaps into value gaps.

    Two expressions are valid; below the golden-ratio crossover the
    (1 + gamma) / (1 - gamma) form is tighter, above it 1 / (gamma (1 - gamma))
    is. Returns the smaller applicable one; continuous at the crossover.
    """
    if not (0.0 < gamma < 1.0):
        raise ValueError(f"gamma must lie strictly inside (0, 1), got {gamma}")
    dummy_start = 1.0 / (gamma * (1.0 - gamma))
    direct = (1.0 + gamma) / (1.0 - gamma)
    if gamma >= GAMMA_CROSSOVER:
        return dummy_start
    return min(dummy_start, direct)


def d_a_metric(
    team_x: TeamComposition, team_y: TeamComposition, weights: InfluenceWeights
) -> float:
    """Pseudometric between teams: sup-norm of the weighted member differences."""
    n = weights.num_agents
    if team_x.num_agents != n or team_y.num_agents != n:
        raise ValueError("teams must match the weight vector's size")
    if team_x.dim != team_y.dim:
        raise ValueError("teams must share one capability dimension")
    return float(np.max(np.abs(weights.a @ (team_x.matrix() - team_y.matrix()))))


def d_a_set_distance(
    team: TeamComposition, support_teams, weights: InfluenceWeights
) -> float:
    """Distance from a team to the closest member of a finite task set."""
    support_teams = list(support_teams)
    if not support_teams:
        raise ValueError("the support set must be non-empty")
    return min(d_a_metric(team, other, weights) for other in support_teams)


def oracle_policy_select(
    distribution: TaskDistribution, query: TeamComposition, weights: InfluenceWeights
) -> int:
    """Index of the support task closest to the query (lowest index on ties)."""
    distances = [
        d_a_metric(query, team, weights) for team, _ in distribution.support
    ]
    return int(np.argmin(distances))


def _require_shared_frame(spec_x: LinearMMDPSpec, spec_y: LinearMMDPSpec):
    if not spec_x.states.equals(spec_y.states):
        raise ValueError("the two specs must share one state space")
    if not np.array_equal(spec_x.reward_kernel.w, spec_y.reward_kernel.w):
        raise ValueError("the two specs must share one reward kernel")
    if not spec_x.transition_kernel.equals(spec_y.transition_kernel):
        raise ValueError("the two specs must share one transition kernel")
    if spec_x.gamma != spec_y.gamma:
        raise ValueError("the two specs must share one discount factor")
    if not np.array_equal(spec_x.rho, spec_y.rho):
        raise ValueError("the two specs must share one initial distribution")
    if (
        spec_x.num_agents != spec_y.num_agents
        or spec_x.actions_per_agent != spec_y.actions_per_agent
    ):
        raise ValueError("the two specs must share one joint action space")


def _solve(mmdp: TabularMMDP, settings: SolveSettings):
    return value_iteration(mmdp, tol=settings.tol, max_iters=settings.max_iters)


def _permutation_code(perm) -> float:
    code = 0
    for digit in perm:
        code = code * 10 + int(digit)
    return float(code)


def _base_constituents(spec, psi_value, smax, vmid, perm):
    gf = gamma_factor(spec.gamma)
    parts = {
        "psi": psi_value,
        "s_max": smax,
        "v_mid": vmid,
        "gamma_factor": gf,
        "gamma": spec.gamma,
        "capability_dim": float(spec.capability_dim),
        "psi_permutation_code": _permutation_code(perm),
    }
    return gf, parts


def bound_team_generalization(
    spec_x: LinearMMDPSpec, spec_y: LinearMMDPSpec, settings: SolveSettings = SolveSettings()
) -> BoundReport:
    """Bound |V*_x - V*_y| for two teams sharing every kernel.

    The bound is gamma_factor * (s_max + gamma * d * v_mid) * psi with v_mid
    taken from the second (reference) task's optimal values. The measurement
    is the absolute difference of rho-weighted optimal values; the per-state
    max difference is reported alongside.
    """
    _require_shared_frame(spec_x, spec_y)
    vt_x, _ = _solve(assemble_linear_mmdp(spec_x), settings)
    vt_y, _ = _solve(assemble_linear_mmdp(spec_y), settings)
    psi_value, perm = psi_with_permutation(
        spec_x.team, spec_x.weights, spec_y.team, spec_y.weights,
        settings.psi_over_permutations,
    )
    smax = s_max(spec_x.reward_kernel, spec_x.states)
    vmid = v_mid(vt_y)
    gf, parts = _base_constituents(spec_x, psi_value, smax, vmid, perm)
    bound = gf * (smax + spec_x.gamma * spec_x.capability_dim * vmid) * psi_value
    value_x = vt_x.scalar(spec_x.rho)
    value_y = vt_y.scalar(spec_y.rho)
    parts.update(
        {
            "value_x": value_x,
            "value_y": value_y,
            "actual_state_max": float(np.max(np.abs(vt_x.v - vt_y.v))),
        }
    )
    return BoundReport.build("team_generalization", parts, bound, abs(value_x - value_y))


def bound_policy_transfer(
    spec_x: LinearMMDPSpec, spec_y: LinearMMDPSpec, settings: SolveSettings = SolveSettings()
) -> BoundReport:
    """Bound the regret of running the second team's optimal policy on the first.

    Exactly twice the team-generalization bound. The measurement is
    V*_x - V^{pi*_y}_x, which can never fall below -2 * tol.
    """
    _require_shared_frame(spec_x, spec_y)
    mmdp_x = assemble_linear_mmdp(spec_x)
    vt_x, _ = _solve(mmdp_x, settings)
    vt_y, policy_y = _solve(assemble_linear_mmdp(spec_y), settings)
    transferred = policy_evaluation(
        mmdp_x, policy_y, tol=settings.tol, max_iters=settings.max_iters
    )
    psi_value, perm = psi_with_permutation(
        spec_x.team, spec_x.weights, spec_y.team, spec_y.weights,
        settings.psi_over_permutations,
    )
    smax = s_max(spec_x.reward_kernel, spec_x.states)
    vmid = v_mid(vt_y)
    gf, parts = _base_constituents(spec_x, psi_value, smax, vmid, perm)
    bound = 2.0 * gf * (smax + spec_x.gamma * spec_x.capability_dim * vmid) * psi_value
    value_optimal = vt_x.scalar(spec_x.rho)
    value_transferred = transferred.scalar(spec_x.rho)
    actual = value_optimal - value_transferred
    if actual < -2.0 * settings.tol:
        raise RuntimeError(
            f"transferred policy beat the optimal value by {-actual:.3e}; solver inconsistency"
        )
    parts.update(
        {
            "value_optimal": value_optimal,
            "value_transferred": value_transferred,
            "actual_state_max": float(np.max(vt_x.v - transferred.v)),
        }
    )
    return BoundReport.build("policy_transfer", parts, bound, actual)


def bound_out_of_distribution(
    distribution: TaskDistribution,
    query_spec: LinearMMDPSpec,
    settings: SolveSettings = SolveSettings(),
) -> BoundReport:
    """Bound the regret of the closest-task policy on an unseen team.

    Requires identical influence weights across the support and the query.
    The selected task is the d_a-closest support member; the bound is the
    policy-transfer bound at distance d_a(query, support).
    """
    a = query_spec.weights.a
    for team, weights in distribution.support:
        if weights.a.shape != a.shape or not np.allclose(weights.a, a, atol=1e-12):
            raise ValueError("out-of-distribution bound needs fixed influence weights")
        if team.dim != query_spec.team.dim:
            raise ValueError("support teams must share the query's capability dimension")
    selected = oracle_policy_select(distribution, query_spec.team, query_spec.weights)
    selected_team, selected_weights = distribution.support[selected]
    spec_sel = query_spec.with_team(selected_team, selected_weights)
    mmdp_query = assemble_linear_mmdp(query_spec)
    vt_query, _ = _solve(mmdp_query, settings)
    vt_sel, policy_sel = _solve(assemble_linear_mmdp(spec_sel), settings)
    transferred = policy_evaluation(
        mmdp_query, policy_sel, tol=settings.tol, max_iters=settings.max_iters
    )
    distance = d_a_set_distance(
        query_spec.team, [team for team, _ in distribution.support], query_spec.weights
    )
    smax = s_max(query_spec.reward_kernel, query_spec.states)
    vmid = v_mid(vt_sel)
    gf = gamma_factor(query_spec.gamma)
    bound = 2.0 * gf * (smax + query_spec.gamma * query_spec.capability_dim * vmid) * distance
    value_optimal = vt_query.scalar(query_spec.rho)
    value_transferred = transferred.scalar(query_spec.rho)
    actual = value_optimal - value_transferred
    if actual < -2.0 * settings.tol:
        raise RuntimeError(
            f"selected policy beat the optimal value by {-actual:.3e}; solver inconsistency"
        )
    parts = {
        "d_a": distance,
        "selected_index": float(selected),
        "s_max": smax,
        "v_mid": vmid,
        "gamma_factor": gf,
        "gamma": query_spec.gamma,
        "capability_dim": float(query_spec.capability_dim),
        "value_optimal": value_optimal,
        "value_transferred": value_transferred,
        "actual_state_max": float(np.max(vt_query.v - transferred.v)),
    }
    return BoundReport.build("out_of_distribution", parts, bound, actual)


def bound_population_change(
    spec: LinearMMDPSpec,
    mode: str,
    new_capability=None,
    new_weight: float | None = None,
    settings: SolveSettings = SolveSettings(),
) -> BoundReport:
    """Bound the optimal-value shift when the team loses or gains a member.

    remove-last drops the final member and renormalizes the remaining
    influence weights; add-member appends a capability with a given weight
    and scales the old weights down. Either way the bound is the changed
    weight times the sup-norm gap between the unchanged mixture and the
    changed member's capabilities.
    """
    if mode == "remove-last":
        if spec.team.num_agents < 2:
            raise ValueError("removing a member needs at least two members")
        a = spec.weights.a
        last_weight = float(a[-1])
        if last_weight >= 1.0 - 1e-12:
            raise ValueError("the last member carries all influence; removal is degenerate")
        reduced_weights = a[:-1] / (1.0 - last_weight)
        reduced_team = spec.team.drop_last()
        mixture_gap = float(
            np.max(np.abs(reduced_weights @ reduced_team.matrix() - spec.team.members[-1].c))
        )
        changed = spec.with_team(reduced_team, InfluenceWeights(reduced_weights))
        changed_weight = last_weight
        name = "population_decrease"
    elif mode == "add-member":
        if new_capability is None or new_weight is None:
            raise ValueError("add-member needs new_capability and new_weight")
        new_weight = float(new_weight)
        if not (0.0 <= new_weight < 1.0):
            raise ValueError("the new member's weight must lie in [0, 1)")
        if not isinstance(new_capability, CapabilityVector):
            new_capability = CapabilityVector(np.asarray(new_capability, dtype=float))
        enlarged_team = spec.team.append_member(new_capability)
        if enlarged_team.members[-1].dim != spec.team.dim:
            raise ValueError("the new capability must match the team's dimension")
        mixture_gap = float(
            np.max(np.abs(spec.weights.a @ spec.team.matrix() - enlarged_team.members[-1].c))
        )
        enlarged_weights = np.concatenate(
            [spec.weights.a * (1.0 - new_weight), [new_weight]]
        )
        changed = spec.with_team(enlarged_team, InfluenceWeights(enlarged_weights))
        changed_weight = new_weight
        name = "population_increase"
    else:
        raise ValueError(f"unknown population-change mode {mode!r}")

    vt_before, _ = _solve(assemble_linear_mmdp(spec), settings)
    vt_after, _ = _solve(assemble_linear_mmdp(changed), settings)
    smax = s_max(spec.reward_kernel, spec.states)
    vmid = v_mid(vt_after)
    gf = gamma_factor(spec.gamma)
    bound = (
        gf
        * (smax + spec.gamma * spec.capability_dim * vmid)
        * changed_weight
        * mixture_gap
    )
    value_before = vt_before.scalar(spec.rho)
    value_after = vt_after.scalar(spec.rho)
    parts = {
        "changed_weight": changed_weight,
        "mixture_gap": mixture_gap,
        "s_max": smax,
        "v_mid": vmid,
        "gamma_factor": gf,
        "gamma": spec.gamma,
        "capability_dim": float(spec.capability_dim),
        "value_before": value_before,
        "value_after": value_after,
        "actual_state_max": float(np.max(np.abs(vt_before.v - vt_after.v))),
    }
    return BoundReport.build(name, parts, bound, abs(value_before - value_after))


def bound_approx_dynamics(
    spec_x: LinearMMDPSpec,
    spec_y: LinearMMDPSpec,
    mmdp_x_actual: TabularMMDP,
    mmdp_y_actual: TabularMMDP,
    settings: SolveSettings = SolveSettings(),
) -> BoundReport:
    """Team-generalization bound when the real dynamics are only nearly linear.

    Measures the worst reward deviation eps_hat_r and transition-entry
    deviation eps_hat_p between each actual MDP and its assembled linear
    form, then adds 2 * gamma_factor * (eps_hat_r + gamma * eps_hat_p * v_mid)
    to the exact-linear bound. With zero deviations it reduces to the
    team-generalization report exactly.
    """
    _require_shared_frame(spec_x, spec_y)
    linear_x = assemble_linear_mmdp(spec_x)
    linear_y = assemble_linear_mmdp(spec_y)
    for actual, linear, label in (
        (mmdp_x_actual, linear_x, "x"),
        (mmdp_y_actual, linear_y, "y"),
    ):
        if not actual.states.equals(linear.states):
            raise ValueError(f"actual MDP {label} does not share the spec's state space")
        if actual.transitions.shape != linear.transitions.shape:
            raise ValueError(f"actual MDP {label} does not share the spec's action space")
        if actual.gamma != linear.gamma:
            raise ValueError(f"actual MDP {label} does not share the spec's discount")
    eps_hat_r = max(
        float(np.max(np.abs(mmdp_x_actual.rewards - linear_x.rewards))),
        float(np.max(np.abs(mmdp_y_actual.rewards - linear_y.rewards))),
    )
    eps_hat_p = max(
        float(np.max(np.abs(mmdp_x_actual.transitions - linear_x.transitions))),
        float(np.max(np.abs(mmdp_y_actual.transitions - linear_y.transitions))),
    )
    vt_x, _ = _solve(mmdp_x_actual, settings)
    vt_y, _ = _solve(mmdp_y_actual, settings)
    psi_value, perm = psi_with_permutation(
        spec_x.team, spec_x.weights, spec_y.team, spec_y.weights,
        settings.psi_over_permutations,
    )
    smax = s_max(spec_x.reward_kernel, spec_x.states)
    vmid = v_mid(vt_y)
    gf, parts = _base_constituents(spec_x, psi_value, smax, vmid, perm)
    bound = gf * (smax + spec_x.gamma * spec_x.capability_dim * vmid) * psi_value + (
        2.0 * gf * (eps_hat_r + spec_x.gamma * eps_hat_p * vmid)
    )
    value_x = vt_x.scalar(spec_x.rho)
    value_y = vt_y.scalar(spec_y.rho)
    parts.update(
        {
            "eps_hat_r": eps_hat_r,
            "eps_hat_p": eps_hat_p,
            "value_x": value_x,
            "value_y": value_y,
            "actual_state_max": float(np.max(np.abs(vt_x.v - vt_y.v))),
        }
    )
    return BoundReport.build("approx_dynamics", parts, bound, abs(value_x - value_y))


def bound_capability_estimation(
    spec_true: LinearMMDPSpec,
    spec_inferred: LinearMMDPSpec,
    settings: SolveSettings = SolveSettings(),
) -> BoundReport:
    """Bound the regret of planning with estimated capabilities.

    Both specs must carry identical influence weights. eps_t is the largest
    member-wise sup-norm estimation error; the bound is the policy-transfer
    bound with psi replaced by eps_t, using v_mid from the inferred task.
    """
    _require_shared_frame(spec_true, spec_inferred)
    if spec_true.team.num_agents != spec_inferred.team.num_agents:
        raise ValueError("true and inferred teams must have the same size")
    if not np.allclose(spec_true.weights.a, spec_inferred.weights.a, atol=1e-12):
        raise ValueError("capability estimation assumes identical influence weights")
    eps_t = float(
        np.max(np.abs(spec_true.team.matrix() - spec_inferred.team.matrix()))
    )
    mmdp_true = assemble_linear_mmdp(spec_true)
    vt_true, _ = _solve(mmdp_true, settings)
    vt_inferred, policy_inferred = _solve(assemble_linear_mmdp(spec_inferred), settings)
    executed = policy_evaluation(
        mmdp_true, policy_inferred, tol=settings.tol, max_iters=settings.max_iters
    )
    smax = s_max(spec_true.reward_kernel, spec_true.states)
    vmid = v_mid(vt_inferred)
    gf = gamma_factor(spec_true.gamma)
    bound = 2.0 * gf * (smax + spec_true.gamma * spec_true.capability_dim * vmid) * eps_t
    value_optimal = vt_true.scalar(spec_true.rho)
    value_executed = executed.scalar(spec_true.rho)
    actual = value_optimal - value_executed
    if actual < -2.0 * settings.tol:
        raise RuntimeError(
            f"inferred policy beat the optimal value by {-actual:.3e}; solver inconsistency"
        )
    parts = {
        "eps_t": eps_t,
        "s_max": smax,
        "v_mid": vmid,
        "gamma_factor": gf,
        "gamma": spec_true.gamma,
        "capability_dim": float(spec_true.capability_dim),
        "value_optimal": value_optimal,
        "value_executed": value_executed,
        "actual_state_max": float(np.max(vt_true.v - executed.v)),
    }
    return BoundReport.build("capability_estimation", parts, bound, actual)


def bound_lipschitz(
    reward_map: LipschitzRewardSpec,
    team_x: TeamComposition,
    team_y: TeamComposition,
    mmdp_x: TabularMMDP,
    mmdp_y: TabularMMDP,
    reward_kernel: RewardKernel,
    settings: SolveSettings = SolveSettings(),
) -> BoundReport:
    """Bound |V*_x - V*_y| when rewards come from a Lipschitz capability map.

    Transitions must be identical between the two tasks (reward-only
    variation); the bound is gamma_factor * s_max times the Lipschitz-weighted
    sum of member capability differences.
    """
    if team_x.num_agents != team_y.num_agents or team_x.dim != team_y.dim:
        raise ValueError("the two teams must have matching shapes")
    if reward_map.lipschitz_constants.shape[0] != team_x.num_agents:
        raise ValueError("one Lipschitz constant per member is required")
    if not np.array_equal(mmdp_x.transitions, mmdp_y.transitions):
        raise ValueError("the Lipschitz bound requires identical transition dynamics")
    if mmdp_x.gamma != mmdp_y.gamma or not mmdp_x.states.equals(mmdp_y.states):
        raise ValueError("the two tasks must share discount and state space")
    member_gaps = np.abs(team_x.matrix() - team_y.matrix()).max(axis=1)
    weighted_diff = float(reward_map.lipschitz_constants @ member_gaps)
    vt_x, _ = _solve(mmdp_x, settings)
    vt_y, _ = _solve(mmdp_y, settings)
    smax = s_max(reward_kernel, mmdp_x.states)
    gf = gamma_factor(mmdp_x.gamma)
    bound = gf * smax * weighted_diff
    value_x = vt_x.scalar(mmdp_x.rho)
    value_y = vt_y.scalar(mmdp_y.rho)
    parts = {
        "lipschitz_weighted_diff": weighted_diff,
        "s_max": smax,
        "gamma_factor": gf,
        "gamma": mmdp_x.gamma,
        "value_x": value_x,
        "value_y": value_y,
        "actual_state_max": float(np.max(np.abs(vt_x.v - vt_y.v))),
    }
    return BoundReport.build("lipschitz", parts, bound, abs(value_x - value_y))


def bound_polynomial_deviation(alpha: float, degree: int, smax: float, delta: float) -> float:
    """Worst reward shift when one member's capabilities move by at most delta.

    Applies to polynomial reward specs with coefficients bounded by alpha and
    capabilities inside [0, 1]: alpha * delta * s_max * sum_j j * 2^(j-1)
    over degrees j up to the spec's degree.
    """
    if alpha < 0 or degree < 0 or smax < 0 or delta < 0:
        raise ValueError("all inputs must be non-negative")
    series = sum(j * 2 ** (j - 1) for j in range(degree + 1))
    return float(alpha * delta * smax * series)
