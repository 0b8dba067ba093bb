# From per-pair causal intervals to value and action-value bounds.
# Run: python demos/value_bounds_walkthrough.py
import numpy as np

from causal_transfer.experiments import Pipeline, load_config
from causal_transfer.value_bounds import robust_value_bounds, weighted_relaxation_bounds

pipe = Pipeline(load_config("transition"))
model = pipe.model()
s0 = pipe.start

# Interval value iteration: best case and worst case over the ambiguity set.
v_hi = robust_value_bounds(model, optimistic=True)
v_lo = robust_value_bounds(model, optimistic=False)
v_star, q_star = pipe.q_star()
print(f"V*([2,0]) = {v_star[s0]:.4f} lies in [{v_lo[s0]:.4f}, {v_hi[s0]:.4f}]")

# Action-value bounds are what the learners use.
_, _, qb = pipe.value_bounds()
print("Q bounds at [2,0] (up, right, down, left):")
print("  lo ", np.round(qb.lo[s0], 3))
print("  Q* ", np.round(q_star[s0], 3))
print("  hi ", np.round(qb.hi[s0], 3))
print("Q* inside the bounds everywhere:", qb.contains(q_star))

# The weighted program gives per-state bounds that tighten as the weight of
# the queried state grows.
for w in (1.0, 10.0, 1e3, 1e6):
    c = np.ones(model.n_states)
    c[s0] = w
    up, down = weighted_relaxation_bounds(model, c, s0, v_opt=v_hi, v_pes=v_lo)
    print(f"c(s) = {w:>9g}: [{down:10.3f}, {up:10.3f}]")
