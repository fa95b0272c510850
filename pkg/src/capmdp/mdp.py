"""Finite cooperative multi-agent MDPs and exact dynamic-programming solvers.

States are feature vectors in [0, 1]^k. All agents act simultaneously and
share one team reward, so planning reduces to a single-agent MDP over the
joint action space. Joint actions are indexed row-major over the per-agent
action digits with agent 0 as the slowest-varying digit. Everything is dense
numpy; these are desk-scale exact solvers, not large-scale ones.
"""

import json
from dataclasses import dataclass

import numpy as np

DISTRIBUTION_ATOL = 1e-9
VALUE_TABLE_ATOL = 1e-6


class SolverConvergenceError(RuntimeError):
    """A fixed-point solve stopped before reaching its tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(
            f"{message}: residual {residual:.6e} after {iterations} iterations"
        )
        self.residual = float(residual)
        self.iterations = int(iterations)


def check_distribution(vec, name: str, atol: float = DISTRIBUTION_ATOL) -> np.ndarray:
    """Validate a 1-d probability vector and return it as float64."""
    arr = np.asarray(vec, dtype=float)
    if arr.ndim != 1 or arr.shape[0] == 0:
        raise ValueError(f"{name} must be a non-empty 1-d vector")
    if np.any(arr < 0):
        raise ValueError(f"{name} has negative entries")
    total = float(arr.sum())
    if abs(total - 1.0) > atol:
        raise ValueError(f"{name} sums to {total!r}, expected 1 within {atol}")
    return arr


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Finite state set, one k-dimensional feature vector per state."""

    features: np.ndarray  # (num_states, feature_dim), components in [0, 1]

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        if feats.ndim != 2 or feats.shape[0] == 0 or feats.shape[1] == 0:
            raise ValueError("features must be a non-empty (num_states, feature_dim) matrix")
        if np.any(feats < -1e-12) or np.any(feats > 1.0 + 1e-12):
            raise ValueError("state feature components must lie in [0, 1]")
        object.__setattr__(self, "features", feats)

    @property
    def num_states(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def equals(self, other: "StateSpace") -> bool:
        return np.array_equal(self.features, other.features)


@dataclass(frozen=True, eq=False)
class TabularMMDP:
    """Dense cooperative MDP: shared team reward, joint-action transitions.

    transitions[s, u, s'] is the probability of moving from state s to s'
    under joint action index u. The reward depends on the state only.
    """

    states: StateSpace
    num_agents: int
    actions_per_agent: int
    rewards: np.ndarray      # (num_states,)
    transitions: np.ndarray  # (num_states, num_joint_actions, num_states)
    gamma: float
    rho: np.ndarray          # initial state distribution, (num_states,)

    def __post_init__(self):
        if self.num_agents < 1 or self.actions_per_agent < 1:
            raise ValueError("need at least one agent and one action per agent")
        s = self.states.num_states
        a = self.actions_per_agent ** self.num_agents
        rewards = np.asarray(self.rewards, dtype=float)
        if rewards.shape != (s,):
            raise ValueError(f"rewards must have shape ({s},), got {rewards.shape}")
        if not np.all(np.isfinite(rewards)):
            raise ValueError("rewards must be finite")
        trans = np.asarray(self.transitions, dtype=float)
        if trans.shape != (s, a, s):
            raise ValueError(
                f"transitions must have shape ({s}, {a}, {s}), got {trans.shape}"
            )
        _check_transition_rows(trans)
        if not (0.0 <= self.gamma < 1.0):
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        rho = check_distribution(self.rho, "rho")
        if rho.shape != (s,):
            raise ValueError(f"rho must have shape ({s},), got {rho.shape}")
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "transitions", trans)
        object.__setattr__(self, "rho", rho)

    @property
    def num_states(self) -> int:
        return self.states.num_states

    @property
    def num_joint_actions(self) -> int:
        return self.actions_per_agent ** self.num_agents

    def joint_action_index(self, actions) -> int:
        """Row-major joint index of a per-agent action tuple (agent 0 slowest)."""
        dims = (self.actions_per_agent,) * self.num_agents
        return int(np.ravel_multi_index(tuple(int(a) for a in actions), dims))

    def joint_action_tuple(self, index: int) -> tuple:
        dims = (self.actions_per_agent,) * self.num_agents
        return tuple(int(x) for x in np.unravel_index(int(index), dims))

    def to_json(self) -> str:
        doc = {
            "features": self.states.features.tolist(),
            "num_agents": self.num_agents,
            "actions_per_agent": self.actions_per_agent,
            "rewards": self.rewards.tolist(),
            "transitions": self.transitions.tolist(),
            "gamma": self.gamma,
            "rho": self.rho.tolist(),
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "TabularMMDP":
        doc = json.loads(text)
        return cls(
            states=StateSpace(np.asarray(doc["features"], dtype=float)),
            num_agents=int(doc["num_agents"]),
            actions_per_agent=int(doc["actions_per_agent"]),
            rewards=np.asarray(doc["rewards"], dtype=float),
            transitions=np.asarray(doc["transitions"], dtype=float),
            gamma=float(doc["gamma"]),
            rho=np.asarray(doc["rho"], dtype=float),
        )

    def equals(self, other: "TabularMMDP") -> bool:
        return (
            self.states.equals(other.states)
            and self.num_agents == other.num_agents
            and self.actions_per_agent == other.actions_per_agent
            and np.array_equal(self.rewards, other.rewards)
            and np.array_equal(self.transitions, other.transitions)
            and self.gamma == other.gamma
            and np.array_equal(self.rho, other.rho)
        )


def _check_transition_rows(trans: np.ndarray, atol: float = DISTRIBUTION_ATOL):
    """Reject a transition tensor whose rows are not distributions, naming (s, u)."""
    neg = trans < 0
    if np.any(neg):
        s, u = np.argwhere(neg.any(axis=2))[0]
        raise ValueError(f"transition row (s={s}, u={u}) has a negative entry")
    sums = trans.sum(axis=2)
    bad = np.abs(sums - 1.0) > atol
    if np.any(bad):
        s, u = np.argwhere(bad)[0]
        raise ValueError(
            f"transition row (s={s}, u={u}) sums to {sums[s, u]!r}, expected 1 within {atol}"
        )


@dataclass(frozen=True, eq=False)
class JointPolicy:
    """Deterministic map from state index to joint action index."""

    actions: np.ndarray  # (num_states,), int

    def __post_init__(self):
        acts = np.asarray(self.actions)
        if acts.ndim != 1 or not np.issubdtype(acts.dtype, np.integer):
            raise ValueError("policy actions must be a 1-d integer array")
        if np.any(acts < 0):
            raise ValueError("policy actions must be non-negative")
        object.__setattr__(self, "actions", acts.astype(np.int64))

    def validate_for(self, mmdp: TabularMMDP):
        if self.actions.shape != (mmdp.num_states,):
            raise ValueError("policy length does not match the state space")
        if np.any(self.actions >= mmdp.num_joint_actions):
            raise ValueError("policy selects an out-of-range joint action")


@dataclass(frozen=True, eq=False)
class ValueTable:
    """Per-state values, optionally with the joint-action value table.

    When q is present, v must equal the per-state max of q (the greedy
    consistency the optimal solver guarantees by construction).
    """

    v: np.ndarray                # (num_states,)
    q: np.ndarray | None = None  # (num_states, num_joint_actions)

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        if v.ndim != 1:
            raise ValueError("v must be a 1-d vector")
        object.__setattr__(self, "v", v)
        if self.q is not None:
            q = np.asarray(self.q, dtype=float)
            if q.ndim != 2 or q.shape[0] != v.shape[0]:
                raise ValueError("q must be (num_states, num_joint_actions)")
            if np.max(np.abs(q.max(axis=1) - v)) > VALUE_TABLE_ATOL:
                raise ValueError("v is not the per-state max of q")
            object.__setattr__(self, "q", q)

    def scalar(self, rho: np.ndarray) -> float:
        """Expected value under an initial state distribution."""
        return float(np.asarray(rho, dtype=float) @ self.v)


@dataclass(frozen=True, eq=False)
class SuccessorFeatures:
    """Discounted feature occupancies of a fixed policy.

    mu_per_state[s] = E[sum_t gamma^t phi(s_t) | s_0 = s]; mu_scalar is the
    rho-weighted average of the per-state rows.
    """

    mu_per_state: np.ndarray  # (num_states, feature_dim)
    mu_scalar: np.ndarray     # (feature_dim,)

    def __post_init__(self):
        m = np.asarray(self.mu_per_state, dtype=float)
        s = np.asarray(self.mu_scalar, dtype=float)
        if m.ndim != 2 or s.shape != (m.shape[1],):
            raise ValueError("mu_scalar must match the feature dimension of mu_per_state")
        object.__setattr__(self, "mu_per_state", m)
        object.__setattr__(self, "mu_scalar", s)


def value_iteration(
    mmdp: TabularMMDP, tol: float = 1e-9, max_iters: int = 10**6
) -> tuple[ValueTable, JointPolicy]:
    """Solve for the optimal value function by Bellman backups.

    Stops once the sup-norm change between sweeps is <= tol, which bounds the
    Bellman residual of the returned values by gamma * tol. Greedy ties break
    toward the lowest joint action index.

    Returns:
        (ValueTable with v and q, greedy JointPolicy).

    Raises:
        SolverConvergenceError: if max_iters sweeps do not reach tol.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    r = mmdp.rewards
    p = mmdp.transitions
    g = mmdp.gamma
    v = np.zeros(mmdp.num_states)
    residual = np.inf
    for _ in range(max_iters):
        v_new = (r[:, None] + g * (p @ v)).max(axis=1)
        residual = float(np.max(np.abs(v_new - v)))
        v = v_new
        if residual <= tol:
            # one more backup keeps v, q, and the greedy policy exactly consistent
            q = r[:, None] + g * (p @ v)
            v = q.max(axis=1)
            policy = JointPolicy(actions=q.argmax(axis=1))
            return ValueTable(v=v, q=q), policy
    raise SolverConvergenceError("value iteration did not converge", residual, max_iters)


def policy_evaluation(
    mmdp: TabularMMDP, policy: JointPolicy, tol: float = 1e-9, max_iters: int = 10**6
) -> ValueTable:
    """Fixed-point evaluation of a deterministic joint policy.

    Returns a ValueTable whose scalar(rho) gives the policy's expected value
    from the initial distribution.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    policy.validate_for(mmdp)
    p_pi = mmdp.transitions[np.arange(mmdp.num_states), policy.actions]
    r = mmdp.rewards
    g = mmdp.gamma
    v = np.zeros(mmdp.num_states)
    residual = np.inf
    for _ in range(max_iters):
        v_new = r + g * (p_pi @ v)
        residual = float(np.max(np.abs(v_new - v)))
        v = v_new
        if residual <= tol:
            return ValueTable(v=v)
    raise SolverConvergenceError("policy evaluation did not converge", residual, max_iters)


def successor_features(
    mmdp: TabularMMDP, policy: JointPolicy, tol: float = 1e-9, max_iters: int = 10**6
) -> SuccessorFeatures:
    """Discounted feature occupancies of a policy by fixed-point iteration.

    Satisfies mu(s) = phi(s) + gamma * sum_s' P_pi(s'|s) mu(s'), so any reward
    that is linear in phi has value <w, mu(s)> for the matching weight vector.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    policy.validate_for(mmdp)
    p_pi = mmdp.transitions[np.arange(mmdp.num_states), policy.actions]
    phi = mmdp.states.features
    g = mmdp.gamma
    mu = np.zeros_like(phi)
    residual = np.inf
    for _ in range(max_iters):
        mu_new = phi + g * (p_pi @ mu)
        residual = float(np.max(np.abs(mu_new - mu)))
        mu = mu_new
        if residual <= tol:
            return SuccessorFeatures(mu_per_state=mu, mu_scalar=mmdp.rho @ mu)
    raise SolverConvergenceError("successor features did not converge", residual, max_iters)
