"""Build two stages and watch the ratio dip, recover, then dip again.

Stage 1 is fixed by hand at desk scale.  Stage 2's block length is found by
growing N until the stage-1 process looks iid-like (ratio near beta_hat) over
the whole window [N/2, 4N]; its eps then follows from the smallness rule.
"""
from twincities import experiments as ex
from twincities.experiments import ExperimentConfig
from twincities.process import Schedule, Stage

beta = ex.estimate_beta(ExperimentConfig(n_values=[5000], reps=10))["beta_hat"]
print(f"beta_hat (iid, heuristic, n = 5000): {beta:.4f}")

schedule = Schedule(etas=[0.1, 0.05], base_multiple=100)
spec = ex.build_schedule(Stage(0.01, 50, 0), schedule, 2, beta, ex.make_ratio_estimator(),
                         log=lambda s: print("  " + s))
for j, st in enumerate(spec.stages, start=1):
    print(f"stage {j}: N = {st.block_len:6d}  eps = {st.epsilon:.3e}")

recs = ex.oscillation_experiment(ExperimentConfig(spec=spec, reps=10), randomized=False)
print()
print(f"{'checkpoint':<12s}{'n':>8s}{'ratio':>9s}{'/ beta_hat':>12s}")
for r in recs:
    print(f"{r.checkpoint_kind:<12s}{r.n:>8d}{r.mean_ratio:>9.4f}{r.mean_ratio / beta:>12.3f}")

gap = ex.limit_gap_report([spec.stages[1].block_len], n=2 * spec.stages[0].block_len, j=1)
print(f"\nbound on the stage-1 dip's distance to the limit process: {gap['bound']:.3f}")
