"""
Scoring a single client
=======================

Three signals are combined into one suspicion score: the share of samples
beyond their class radius (F), the drift of the class means (M) and the
weight of tight, far-away pockets found by 2-means (C).
"""

import numpy as np

from embedauth import ClientSubmission, build_reference_model, evaluate_client

rng = np.random.default_rng(1)
ref_y = np.repeat([0, 1], 500)
ref_X = rng.standard_normal((1000, 8)) + np.where(ref_y[:, None] == 1, 1.8, 0.0)
model = build_reference_model(ref_X, ref_y)
ref_data = {c: ref_X[ref_y == c] for c in model.class_ids}

# an honest client draws from the same distribution
y = rng.integers(0, 2, 200)
honest = rng.standard_normal((200, 8)) + np.where(y[:, None] == 1, 1.8, 0.0)

# a compromised client adds the same displacement to half its samples
trigger = np.zeros(8)
trigger[3] = 8.0
poisoned = honest.copy()
poisoned[::2] += trigger

for name, X in [("honest", honest), ("poisoned", poisoned)]:
    r = evaluate_client(ClientSubmission(name, X, y), model, ref_data, seed=0)
    print(f"{name:>9}: F={r.F:.3f}  M={r.M:.3f}  C={r.C:.3f}  S={r.S:.3f}")

# The trigger pocket is pure and far from the class centre, but a plain
# translation keeps the class spread, so its radius lands right at the
# reference radius and the compactness test decides whether C fires.
r = evaluate_client(ClientSubmission("poisoned", poisoned, y), model, ref_data, seed=0)
for c, diag in sorted(r.per_class.items()):
    for cluster in diag.cluster_diagnostics["clusters"]:
        if cluster["size"] and cluster["purity"] >= 0.9:
            ratio = cluster["rms_radius"] / cluster["reference_rms_radius"]
            print(f"class {c} pocket: n={cluster['size']}  radius ratio={ratio:.3f}  {cluster['conditions']}")
