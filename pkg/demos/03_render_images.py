"""Draw one buffered PIN entry as an image, five different ways.

The marker encoding places an asterisk per keystroke at its standardized
touch position; with a fitted PCA attribute map the remaining features drive
marker size, opacity, and color.  The three classical series-to-image
encodings are rendered from the same vector for comparison.
"""

from pathlib import Path

from keydyn import (
    PipelineConfig,
    encode_gaf,
    encode_mtf,
    encode_rp,
    extract_features_matrix,
    fit_pipeline,
    generate_cohort,
)
from keydyn.encoding import render
from keydyn.events import FeatureVector

out_dir = Path(__file__).parent / "output"
out_dir.mkdir(exist_ok=True)

cohort = generate_cohort(n_users=1, genuine_per_user=40, separation=2.0, seed=3)
rows, layout = extract_features_matrix(cohort.genuine["user00"])

pipeline, train_windows = fit_pipeline(
    rows, layout, PipelineConfig(augment_count=100), seed=0)
pca = pipeline.pca_map
print(f"PCA keeps {pca.n_components} of 6 per-keystroke attributes "
      f"(coverage target {pca.coverage:.0%})")

window = train_windows[0]
fv = FeatureVector(values=window, layout=layout)

images = {
    "ours_pca": render(fv, pca),
    "ours_xy": render(fv, None),
    "rp": encode_rp(window),
    "gaf": encode_gaf(window),
    "mtf": encode_mtf(window),
}
for name, image in images.items():
    path = out_dir / f"{name}.png"
    image.save_png(path)
    lit = (image.pixels.sum(axis=2) > 0).mean()
    print(f"  {name:>8}: {image.pixels.shape[0]}x{image.pixels.shape[1]} png, "
          f"{lit:.0%} of pixels lit -> {path}")
