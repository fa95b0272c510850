"""
Build a capability-mixed team MDP by hand, solve it exactly, and show how
the start value splits into one term per team member.

Every object here is plain data: state features, one reward row and one
transition tensor per capability component, a team of capability vectors,
and influence weights saying how much each member shapes the joint task.
"""

import numpy as np

import capmdp

# ---------------------------------------------------------------------------
# 1. describe the world: 3 states, features in R^2, two capability components
# ---------------------------------------------------------------------------

phi = np.array(
    [
        [1.0, 0.0],
        [0.0, 1.0],
        [0.5, 0.5],
    ]
)

# component j contributes phi(s) @ w[j] reward per step
w = np.array(
    [
        [1.0, 0.0],
        [0.2, 0.8],
    ]
)

# one row-stochastic tensor per component, shape (d, S, A_joint, S)
rng = np.random.default_rng(0)
base = rng.random((2, 3, 4, 3))
base /= base.sum(axis=-1, keepdims=True)

# ---------------------------------------------------------------------------
# 2. describe the team: two agents with different capability mixtures
# ---------------------------------------------------------------------------

team = capmdp.TeamComposition(
    (
        capmdp.CapabilityVector(np.array([0.7, 0.3])),
        capmdp.CapabilityVector(np.array([0.2, 0.8])),
    )
)
weights = capmdp.InfluenceWeights(np.array([0.5, 0.5]))

spec = capmdp.LinearMMDPSpec(
    team=team,
    weights=weights,
    reward_kernel=capmdp.RewardKernel(w),
    transition_kernel=capmdp.TransitionKernel(base),
    states=capmdp.StateSpace(phi),
    num_agents=2,
    actions_per_agent=2,
    gamma=0.9,
    rho=np.full(3, 1.0 / 3.0),
)

mmdp = capmdp.assemble_linear_mmdp(spec)
print("assembled MDP:", mmdp.transitions.shape[0], "states,",
      mmdp.transitions.shape[1], "joint actions, gamma", mmdp.gamma)

# ---------------------------------------------------------------------------
# 3. solve exactly
# ---------------------------------------------------------------------------

values, policy = capmdp.value_iteration(mmdp)
print("optimal state values:", np.round(values.v, 4))
print("greedy joint actions:", policy.actions)

start_value = float(spec.rho @ values.v)
print("value at the start distribution:", round(start_value, 6))

# ---------------------------------------------------------------------------
# 4. decompose that value through successor features
# ---------------------------------------------------------------------------
# mu_scalar is the discounted feature visitation of the solved policy from
# rho. Each member's share is weight * (capability @ w) @ mu_scalar, and the
# shares add back up to the start value exactly.

mu = capmdp.successor_features(mmdp, policy)
print("discounted feature visitation:", np.round(mu.mu_scalar, 4))

total = 0.0
for i, member in enumerate(team.members):
    share = float(weights.a[i] * (member.c @ w @ mu.mu_scalar))
    total += share
    print(f"  member {i} capabilities {member.c} -> share {share:.6f}")

print("sum of member shares:", round(total, 6))
print("difference from the solved value:", abs(total - start_value))
