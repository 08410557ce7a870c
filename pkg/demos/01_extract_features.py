"""One PIN entry, from raw touch events to a fixed-length feature vector."""

import numpy as np

from keydyn import extract_features, feature_layout
from keydyn.synthdata import make_profile, sample_entry

# A synthetic user profile stands in for a phone capture.  Every entry of the
# ten-key PIN (nine digits plus ENTER) produces one press/release event with
# a touch position, pressure, and contact area.
profile = make_profile("demo", user_index=0, separation=2.0, seed=7)
rng = np.random.default_rng(123)
sample = sample_entry(profile, rng)

print(f"user={sample.user_id}  label={sample.label}  "
      f"events={len(sample.events)}  pin={profile.pin}")
for event in sample.events[:3]:
    hold = event.release_time - event.press_time
    print(f"  key={event.key_id:>5}  press={event.press_time:8.1f} ms  "
          f"hold={hold:5.1f} ms  pos=({event.x:.3f}, {event.y:.3f})  "
          f"force={event.pressure * event.area:.3f}")
print("  ...")

fv = extract_features(sample)
layout = feature_layout(len(sample.events))
print(f"\nfeature vector dimension: {layout.dim}")
print(f"  = 4 monograph groups x {len(sample.events)} keys "
      f"+ 4 digraph groups x {len(sample.events) - 1} pairs")

# Named lookup: the layout maps every value to a readable slot.
for name in ("hold_0", "x_0", "y_0", "force_0", "DD_0", "UD_0", "UU_0", "DU_0"):
    print(f"  {name:>8} = {fv.values[layout.index(name)]:10.4f}")

# The four digraph timings are linked by the hold times of the pair, so the
# vector is internally consistent by construction.
h0 = fv.values[layout.index("hold_0")]
h1 = fv.values[layout.index("hold_1")]
dd = fv.values[layout.index("DD_0")]
uu = fv.values[layout.index("UU_0")]
assert np.isclose(uu, dd + (h1 - h0))
print("\ndigraph identity holds: UU_0 == DD_0 + (hold_1 - hold_0)")
