# Plain versus causally bounded learners on the reward grid, with a small
# seed sweep. Run: python demos/learning_comparison.py [out_dir]
# The full sweep is `causal-transfer run-learning`.
import sys
from pathlib import Path

import numpy as np

from causal_transfer.experiments import Pipeline, load_config, reference_values, run_learning
from causal_transfer.reporting import learning_checks, plot_learning_svg, summarize

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output")
out.mkdir(parents=True, exist_ok=True)

pipe = Pipeline(load_config("reward"))
ref = reference_values(pipe, episodes=5000)
print(f"optimum {ref['v_star']:.4f}, naive plan {ref['naive_plan_value']:.4f} "
      f"(its true value is {ref['naive_policy_value']:.4f})")

results = run_learning(pipe, seed_base=0, seeds=4, episodes=2000)
for alg, runs in results.items():
    last = summarize(runs, ref["v_star"])[-1]
    print(f"{alg:>9}: median V-hat after {last['episode']} episodes = {last['median']:.3f}")

for c in learning_checks(results, ref["v_star"]):
    print(f"  [{c.status}] {c.name}: {c.detail}")

plot_learning_svg(out / "reward_learning.svg", results, ref["v_star"], ref["naive_plan_value"])
print("plot written to", out / "reward_learning.svg")
