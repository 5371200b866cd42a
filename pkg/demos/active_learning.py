"""Active learning: choose new initial conditions where the ensemble disagrees.

Run with ``python demos/active_learning.py``.  The variance-driven loop is
compared with random selection at the same data budget; the mean
coefficient standard deviation measures remaining model uncertainty.
"""

from esindy import ActiveConfig, RegressionConfig, active_loop

for selection in ("variance", "random"):
    cfg = ActiveConfig(selection=selection, n_iterations=20, seed=0)
    history = active_loop(cfg=cfg, reg=RegressionConfig(lambda1=0.2))
    first, last = history[0], history[-1]
    print(f"\n{selection} selection after {last.iteration} iterations ({last.n_samples} samples)")
    print(f"  mean coefficient std: {first.mean_std:.4f} -> {last.mean_std:.4f}")
    print(f"  support correct: {last.report.success}, coefficient error {last.report.coefficient_error:.4f}")
