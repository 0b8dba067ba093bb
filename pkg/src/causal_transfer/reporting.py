"""Aggregation, embedded checks and plots for learner sweeps."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .experiments import episodes_to_tolerance
from .learners import LearnerResult

__all__ = [
    "Check",
    "ALGORITHM_LABELS",
    "value_matrix",
    "summarize",
    "write_summary_csv",
    "write_checks_csv",
    "write_table_csv",
    "naive_checks",
    "learning_checks",
    "plot_learning_svg",
]

ALGORITHM_LABELS = {"q": "Q", "cbc_q": "CBC-Q", "ucb_q": "UCB-Q", "cb_ucb_q": "CB-UCB-Q"}


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool | None      # None: not applicable to this run
    detail: str

    @property
    def status(self) -> str:
        return "SKIP" if self.passed is None else ("PASS" if self.passed else "FAIL")


def value_matrix(results: list[LearnerResult], metric: str = "v_hat"
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Checkpoint episodes and a (seeds, checkpoints) matrix of ``metric``."""
    if not results:
        return np.zeros(0, int), np.zeros((0, 0))
    episodes = np.asarray(results[0].curve.episodes, int)
    for r in results[1:]:
        if r.curve.episodes != results[0].curve.episodes:
            raise ValueError("runs use different checkpoints")
    return episodes, np.array([r.curve.series(metric) for r in results]).reshape(len(results), -1)


def summarize(results: list[LearnerResult], v_star: float) -> list[dict]:
    """Per-checkpoint mean, median, quartiles and median absolute error."""
    episodes, vals = value_matrix(results)
    rows = []
    for j, ep in enumerate(episodes):
        col = vals[:, j]
        q25, q50, q75 = np.percentile(col, [25, 50, 75])
        rows.append({
            "episode": int(ep),
            "mean": float(col.mean()),
            "median": float(q50),
            "q25": float(q25),
            "q75": float(q75),
            "median_abs_error": float(np.median(np.abs(col - v_star))),
        })
    return rows


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def write_summary_csv(path: str | Path, summaries: dict[str, list[dict]]) -> None:
    header = ["algorithm", "episode", "mean", "median", "q25", "q75", "median_abs_error"]
    _write_rows(Path(path), header,
                ([alg] + [r[k] for k in header[1:]] for alg, rows in summaries.items() for r in rows))


def write_checks_csv(path: str | Path, checks: list[Check]) -> None:
    _write_rows(Path(path), ["check", "status", "detail"],
                ([c.name, c.status, c.detail] for c in checks))


def write_table_csv(path: str | Path, rows: list[dict]) -> None:
    header = list(rows[0]) if rows else ["state", "action", "next_state"]
    _write_rows(Path(path), header, ([r[k] for k in header] for r in rows))


def naive_checks(ref: dict, n_se: float = 5.0) -> list[Check]:
    """The naive plan is over-optimistic yet its true return falls short."""
    gap = ref["v_star"] - ref["naive_mc_return"]
    return [
        Check("naive_plan_over_optimistic", ref["naive_plan_value"] > ref["v_star"],
              f"naive plan {ref['naive_plan_value']:.4f} vs optimum {ref['v_star']:.4f}"),
        Check("naive_policy_underperforms", gap >= n_se * ref["naive_mc_stderr"],
              f"Monte-Carlo return {ref['naive_mc_return']:.4f} +- {ref['naive_mc_stderr']:.4f}, "
              f"{gap / ref['naive_mc_stderr']:.1f} standard errors below the optimum"),
    ]


def learning_checks(results: dict[str, list[LearnerResult]], v_star: float,
                    tolerance_fraction: float = 0.1, final_tol: float = 0.05,
                    warmup: float = 0.05) -> list[Check]:
    """Qualitative comparisons between learners over a seed sweep.

    Convergence speed is the median over seeds of the first checkpoint after
    which the estimate stays within ``tolerance_fraction * |V*|`` of ``V*``.
    Final convergence compares the seed-mean estimate with ``V*``.
    """
    checks = []
    band = tolerance_fraction * abs(v_star)
    for alg in ("cbc_q", "cb_ucb_q"):
        if alg in results:
            n = sum(r.bound_violations for r in results[alg])
            checks.append(Check(f"{alg}_within_bounds", n == 0, f"{n} bound violations"))
    if "q" in results and "cbc_q" in results:
        ep_q, vq = value_matrix(results["q"])
        ep_c, vc = value_matrix(results["cbc_q"])
        if ep_q.size < 2:
            checks.append(Check("cbc_q_faster_than_q", None, "no learning episodes"))
            checks.append(Check("q_and_cbc_q_converge", None, "no learning episodes"))
        else:
            tq = np.median([episodes_to_tolerance(ep_q, row, v_star, band) for row in vq])
            tc = np.median([episodes_to_tolerance(ep_c, row, v_star, band) for row in vc])
            checks.append(Check("cbc_q_faster_than_q", bool(tc < tq),
                                f"median episodes to stay within {band:.4f}: "
                                f"CBC-Q {tc:g}, Q {tq:g}"))
            eq = abs(vq[:, -1].mean() - v_star)
            ec = abs(vc[:, -1].mean() - v_star)
            checks.append(Check("q_and_cbc_q_converge", bool(max(eq, ec) <= final_tol),
                                f"final |mean - V*|: Q {eq:.4f}, CBC-Q {ec:.4f} (tol {final_tol})"))
    if "ucb_q" in results and "cb_ucb_q" in results:
        ep_u, vu = value_matrix(results["ucb_q"])
        _, vb = value_matrix(results["cb_ucb_q"])
        after = ep_u >= warmup * ep_u.max() if ep_u.size else ep_u.astype(bool)
        if not after.any() or ep_u.size < 2:
            checks.append(Check("cb_ucb_q_error_le_ucb_q", None, "no learning episodes"))
        else:
            eu = np.median(np.abs(vu - v_star), axis=0)[after]
            eb = np.median(np.abs(vb - v_star), axis=0)[after]
            worse = int(np.sum(eb > eu))
            checks.append(Check("cb_ucb_q_error_le_ucb_q", worse == 0,
                                f"{worse} of {after.sum()} checkpoints after warm-up with larger "
                                f"median error; final CB-UCB-Q {eb[-1]:.4f}, UCB-Q {eu[-1]:.4f}"))
    return checks


def plot_learning_svg(path: str | Path, results: dict[str, list[LearnerResult]],
                      v_star: float, naive_value: float, title: str = "") -> None:
    """Median and interquartile band of V-hat per algorithm, with reference lines.

    Output is byte-stable: the SVG hash salt is fixed and no date is written.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    groups = [[a for a in ("q", "cbc_q") if a in results],
              [a for a in ("ucb_q", "cb_ucb_q") if a in results]]
    groups = [g for g in groups if g]
    with matplotlib.rc_context({"svg.hashsalt": "causal-transfer", "svg.fonttype": "path"}):
        fig, axes = plt.subplots(1, max(len(groups), 1), figsize=(5.5 * max(len(groups), 1), 4),
                                 squeeze=False)
        for ax, group in zip(axes[0], groups):
            lo_y, hi_y = min(v_star, naive_value), max(v_star, naive_value)
            for alg in group:
                ep, vals = value_matrix(results[alg])
                if ep.size == 0:
                    continue
                q25, q50, q75 = np.percentile(vals, [25, 50, 75], axis=0)
                ax.plot(ep, q50, label=ALGORITHM_LABELS[alg], linewidth=1.2)
                ax.fill_between(ep, q25, q75, alpha=0.25, linewidth=0)
                late = ep >= 0.05 * ep.max()
                lo_y = min(lo_y, q25[late].min())
                hi_y = max(hi_y, q75[late].max())
            ax.axhline(v_star, color="black", linewidth=1.0, label="optimum")
            ax.axhline(naive_value, color="grey", linestyle="--", linewidth=1.0, label="naive model")
            pad = 0.1 * (hi_y - lo_y) + 0.1
            ax.set_ylim(lo_y - pad, hi_y + pad)
            ax.set_xlabel("episode")
            ax.set_ylabel("estimated value at start")
            ax.legend(loc="best", fontsize=8)
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
