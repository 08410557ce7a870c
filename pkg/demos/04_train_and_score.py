"""Train the one-class detector for a single user and score attempts.

Everything the detector sees is genuine: augmented training windows become
marker images, the network embeds them, and the embedding center plus a
validation-calibrated radius define the accept region.  f(x) = score - radius
is negative for accepts.
"""

from pathlib import Path

import numpy as np

from keydyn import (
    PipelineConfig,
    SvddModel,
    SvddNetwork,
    compute_eer,
    extract_features_matrix,
    fit_pipeline,
    generate_cohort,
    load_model,
    save_model,
    train_svdd,
)
from keydyn.evaluation import buffer_positions, buffer_with_history
from keydyn.neural import decide, score_batch

cohort = generate_cohort(n_users=2, genuine_per_user=80, imposter_per_user=30,
                         separation=4.0, seed=13)
rows, layout = extract_features_matrix(cohort.genuine["user00"])
imp_rows, _ = extract_features_matrix(cohort.imposter["user00"][:30])

n_train = 50
pipeline, train_windows = fit_pipeline(
    rows[:n_train], layout, PipelineConfig(augment_count=200), seed=0)
train_images = pipeline.encode_all(train_windows)
print(f"training on {len(train_images)} marker images")

model = SvddModel(network=SvddNetwork(seed=0))
model.initialize_center(train_images)
result = train_svdd(model, train_images, epochs=15, batch_size=32, seed=0)
print(f"objective {result.epoch_losses[0]:.4f} -> {result.final_loss:.4f} "
      f"after {result.epochs_run} epochs")

# Calibrate the radius where false accepts and false rejects balance on
# held-out genuine entries versus imposter attempts.
stream = pipeline.transform(rows)
imp_stream = pipeline.transform(imp_rows)
val_pos = list(range(n_train, len(rows)))
genuine_windows = buffer_positions(stream, val_pos, 5)
imposter_windows = buffer_with_history(
    stream, imp_stream, [val_pos[i % len(val_pos)] for i in range(len(imp_stream))], 5)

gen_scores = score_batch(model, pipeline.encode_all(genuine_windows))
imp_scores = score_batch(model, pipeline.encode_all(imposter_windows))
eer, threshold = compute_eer(gen_scores, imp_scores)
model.threshold = threshold
print(f"validation EER {eer:.3f}, radius {threshold:.4f}")
print(f"genuine scores  {gen_scores.min():.3f} .. {gen_scores.max():.3f}")
print(f"imposter scores {imp_scores.min():.3f} .. {imp_scores.max():.3f}")

for name, window in (("genuine", genuine_windows[0]),
                     ("imposter", imposter_windows[0])):
    verdict = decide(model, pipeline.encode(window))
    print(f"  {name:>8}: f(x) = {verdict.decision_value:+.4f} -> {verdict.verdict}")

path = Path(__file__).parent / "output" / "user00.svdd"
path.parent.mkdir(exist_ok=True)
save_model(model, path)
reloaded = load_model(path)
assert np.allclose(score_batch(reloaded, pipeline.encode_all(genuine_windows[:3])),
                   gen_scores[:3])
print(f"model round-trips through {path}")
