# Why a demonstrator's data misleads a learner that cannot see the context,
# and what causal bounds recover. Run: python demos/confounded_demonstrator.py
import numpy as np

from causal_transfer.causal_bounds import reward_do_bounds
from causal_transfer.demonstrator import naive_estimates
from causal_transfer.experiments import Pipeline, load_config

pipe = Pipeline(load_config("reward"))
env, mdp = pipe.env, pipe.mdp
grid = pipe.cfg.grid
print("contexts:", env.n_contexts, "with P(u) =", env.context_dist)

# The demonstrator goes left at [1,4] towards red when u = 0 (red pays well)
# and up into the wall when u = 1, so "left at [1,4]" is mostly seen when red pays.
obs = pipe.observations()
s = grid.index((1, 4))
LEFT = 3
r_hat, _ = naive_estimates(obs)
print("E[r | [1,4], left]      (naive) =", round(r_hat[s, LEFT], 4))
print("E[r | [1,4], do(left)]  (truth) =", round(mdp.expected_reward[s, LEFT], 4))

# The joint P(r, a | s) alone only brackets the do-effect.
joint = obs.reward_joint[s]
support = joint.sum(axis=1) > 0
iv = reward_do_bounds(joint[support], obs.reward_values[support], LEFT)
print(f"causal bounds on E[r | do(left)] = [{iv.lo:.4f}, {iv.hi:.4f}]")

# The same numbers follow from the response-function view: mass not spent
# on "left" can be assigned any observed reward.
pa = joint[support, LEFT].sum()
vals = obs.reward_values[support]
known = vals @ joint[support, LEFT]
print("natural bounds            =", [round(float(known + (1 - pa) * vals.min()), 4),
                                      round(float(known + (1 - pa) * vals.max()), 4)])

# Every context-sensitive pair, as in the reproduction table.
for row in pipe.cfg.table:
    print(grid.cell(row.state), row.action + 1,
          "model:", round(pipe.model().r_lo[row.state, row.action], 4),
          round(pipe.model().r_hi[row.state, row.action], 4))
