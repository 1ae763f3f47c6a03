"""Recompute the spectral thresholds frozen in tests/test_acceptance.py.

Pilot seeds (1000+) never overlap the acceptance seeds (0..99).  Each
threshold is 0.75 x the 5th percentile of the pilot distribution, rounded
down to two decimals.

    python scripts/pilot_thresholds.py
"""

import math

import numpy as np

from draes.harness import ExperimentConfig, derive_streams, run_experiment
from draes.metrics import lambda2
from draes.protocol import ProtocolParams, run_bootstrap


def freeze(values):
    return math.floor(0.75 * float(np.percentile(values, 5)) * 100) / 100


def bootstrap_pilot(seeds=range(1000, 1100)):
    params = ProtocolParams(256, 3, 2, 2)
    vals = []
    for s in seeds:
        res = run_bootstrap(params, derive_streams(s).protocol)
        if res.converged:
            vals.append(lambda2(res.graph.snapshot()))
    return vals


def churn_pilot(seeds=range(1000, 1004), rounds=300):
    vals = []
    for s in seeds:
        cfg = ExperimentConfig(n=1024, d=3, c=2, k=2, rounds=rounds, seed=s, metrics_flags=("core",))
        tr = run_experiment(cfg, write=False)
        vals += [r.metrics.core_lambda2 for r in tr.reports]
    return vals


if __name__ == "__main__":
    boot = bootstrap_pilot()
    print(f"bootstrap n=256: min={min(boot):.4f} p5={np.percentile(boot, 5):.4f} -> tau={freeze(boot)}")
    churn = churn_pilot()
    print(f"churn n=1024: min={min(churn):.4f} p5={np.percentile(churn, 5):.4f} -> tau'={freeze(churn)}")
