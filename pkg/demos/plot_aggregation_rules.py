"""
Robust aggregation rules
========================

FedAvg weights updates by dataset size. The trimmed mean drops the
extremes of each coordinate. Krum keeps the single update closest to its
neighbours.
"""

import numpy as np

from embedauth import AggregationRule, ModelUpdate, aggregate

rng = np.random.default_rng(3)
honest = [ModelUpdate(f"c{i:02d}", 1.0 + 0.1 * rng.standard_normal(4), 100) for i in range(8)]
byzantine = [ModelUpdate(f"c{i:02d}", np.full(4, -20.0), 100) for i in range(8, 10)]

for rule in (AggregationRule("fedavg"), AggregationRule("trimmed_mean", beta=0.2),
             AggregationRule("krum", f=2)):
    print(f"{rule.label:<24}", np.round(aggregate(honest + byzantine, rule), 3))
