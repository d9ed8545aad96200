"""
MSE against SNR
===============

A small Monte-Carlo sweep.  Noise draws are shared across SNR points so
the curves are smooth even with few trials.
"""
from moac.metrics import SweepSpec, aggregate, aggregate_csv, run_sweep
from moac.model import ChannelConfig

cfg = ChannelConfig.random(4, 32, seed=1)
spec = SweepSpec(snr_grid=[-20, -10, 0, 10, 20],
                 estimators=["aligned", "ls", "lmmse", "wiener"],
                 trials=100, channel=cfg, seed=1)
rows = run_sweep(spec)

# %%
# One line per (estimator, SNR) cell, ready for plotting elsewhere.
print(aggregate_csv(aggregate(rows)))
