"""Standardize feature vectors, then smooth them through the weighted buffer.

The buffer blends the newest entry (half the total weight) with the previous
four entries (an eighth each), which damps single-entry noise while keeping
the output responsive.  Training multiplies the data by emitting one merged
vector per distinct window drawn from the history.
"""

import numpy as np

from keydyn import (
    SampleBuffer,
    augment,
    buffer_weights,
    extract_features_matrix,
    fit_standardizer,
    generate_cohort,
)

cohort = generate_cohort(n_users=1, genuine_per_user=30, seed=21)
rows, layout = extract_features_matrix(cohort.genuine["user00"])
print(f"raw matrix: {rows.shape[0]} entries x {rows.shape[1]} features")

scaler = fit_standardizer(rows)
normed = scaler.transform(rows)
col = layout.index("hold_0")
print(f"hold_0 raw      mean={rows[:, col].mean():8.3f}  "
      f"std={rows[:, col].std():7.3f}")
print(f"hold_0 scaled   mean={normed[:, col].mean():8.3f}  "
      f"std={normed[:, col].std():7.3f}")

print(f"\nbuffer weights (size 5): {buffer_weights(5)}")

buffer = SampleBuffer(capacity=5)
for t, row in enumerate(normed[:8]):
    merged = buffer.push(row)
    state = "warming up" if merged is None else f"emit, |v|={np.linalg.norm(merged):.3f}"
    print(f"  entry {t}: {state}")

# Augmentation: every distinct 5-subset of the history can act as a window,
# with the newest member taking the half weight.  30 entries give far more
# subsets than we need, so a seeded sample of 200 is drawn.
windows = augment(normed, count=200, capacity=5, seed=0)
print(f"\naugmented training matrix: {windows.shape[0]} x {windows.shape[1]}")
unique = len({tuple(np.round(w, 12)) for w in windows})
print(f"distinct merged vectors: {unique}")
