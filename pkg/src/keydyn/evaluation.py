"""Biometric evaluation: error rates, EER calibration, cohort experiments.

Scores are anomaly scores: lower means more genuine, and a claim is accepted
when its score is at or below the decision threshold.  The equal error rate
is found by sweeping candidate thresholds over the observed scores and
linearly interpolating where the false-accept and false-reject curves cross.

``run_experiment`` drives the whole pipeline per user over a synthetic
cohort: feature extraction, normalization fitted on training data only,
weighted buffering with combinatorial augmentation, image encoding, detector
training, threshold calibration on validation scores, and test metrics.
Reports carry no timestamps so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import importlib.resources
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
import jsonschema

from .errors import ConfigError, InsufficientDataError, KeydynError
from .events import FeatureLayout, FeatureVector, extract_features_matrix, feature_layout
from .encoding import (
    DEFAULT_COVERAGE,
    CanvasConfig,
    EncodedImage,
    PcaAttributeMap,
    encode_gaf,
    encode_mtf,
    encode_rp,
    fit_pca,
    keystroke_slices,
    render,
)
from .neural import (
    AutoencoderModel,
    SvddModel,
    SvddNetwork,
    ae_score_batch,
    score_batch,
    train_autoencoder,
    train_svdd,
)
from .preprocess import (
    DEFAULT_BUFFER_SIZE,
    MinMaxNormalizer,
    Standardizer,
    augment,
    fit_minmax,
    fit_standardizer,
    weighted_merge,
)
from .synthdata import Cohort, cohort_from_samples, generate_cohort

ENCODERS = ("ours-pca", "ours-xy", "rp", "gaf", "mtf")
DETECTORS = ("svdd", "autoencoder")
ABLATIONS = ("full", "-location", "-timing", "-force")
METRIC_COLUMNS = ("eer", "far", "frr", "tar", "acc")


# ---------------------------------------------------------------------------
# Threshold metrics and the equal error rate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Metrics:
    far: float
    frr: float
    tar: float
    acc: float
    n_genuine: int
    n_imposter: int


def compute_metrics(genuine_scores: np.ndarray, imposter_scores: np.ndarray,
                    threshold: float) -> Metrics:
    """Error rates at a fixed threshold; accept means score <= threshold."""
    gen = np.asarray(genuine_scores, dtype=np.float64)
    imp = np.asarray(imposter_scores, dtype=np.float64)
    if gen.size == 0 or imp.size == 0:
        raise InsufficientDataError(
            f"need scores from both classes, got {gen.size} genuine "
            f"and {imp.size} imposter"
        )
    ta = int(np.count_nonzero(gen <= threshold))
    fr = gen.size - ta
    fa = int(np.count_nonzero(imp <= threshold))
    tr = imp.size - fa
    return Metrics(
        far=fa / imp.size,
        frr=fr / gen.size,
        tar=ta / gen.size,
        acc=(ta + tr) / (gen.size + imp.size),
        n_genuine=int(gen.size),
        n_imposter=int(imp.size),
    )


def compute_eer(genuine_scores: np.ndarray,
                imposter_scores: np.ndarray) -> tuple[float, float]:
    """Equal error rate and the threshold where FAR and FRR cross.

    FAR(t) counts imposter scores <= t and FRR(t) genuine scores > t, both
    evaluated at every distinct observed score; the crossing is resolved by
    linear interpolation between the two bracketing candidates.
    """
    gen = np.asarray(genuine_scores, dtype=np.float64)
    imp = np.asarray(imposter_scores, dtype=np.float64)
    if gen.size == 0 or imp.size == 0:
        raise InsufficientDataError(
            f"need scores from both classes, got {gen.size} genuine "
            f"and {imp.size} imposter"
        )
    all_scores = np.unique(np.concatenate([gen, imp]))
    candidates = np.concatenate([[all_scores[0] - 1.0], all_scores])
    far = np.array([np.mean(imp <= t) for t in candidates])
    frr = np.array([np.mean(gen > t) for t in candidates])
    diff = far - frr
    # diff starts at -1 and ends at +1; find the first non-negative point.
    idx = int(np.argmax(diff >= 0.0))
    if diff[idx] == 0.0:
        return float(far[idx]), float(candidates[idx])
    a, b = idx - 1, idx
    denom = (far[b] - far[a]) - (frr[b] - frr[a])
    t = (frr[a] - far[a]) / denom
    eer = far[a] + t * (far[b] - far[a])
    threshold = candidates[a] + t * (candidates[b] - candidates[a])
    return float(eer), float(threshold)


# ---------------------------------------------------------------------------
# Reusable per-user pipeline (also used by the HTTP service)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PipelineConfig:
    normalization: str = "standardize"
    buffer_size: int = DEFAULT_BUFFER_SIZE
    augment_count: int = 600
    coverage: float = DEFAULT_COVERAGE
    encoder: str = "ours-pca"
    ablation: str = "full"

    def __post_init__(self):
        if self.encoder not in ENCODERS:
            raise ConfigError(f"unknown encoder {self.encoder!r}")
        if self.normalization not in ("standardize", "minmax"):
            raise ConfigError(f"unknown normalization {self.normalization!r}")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"unknown ablation {self.ablation!r}")


@dataclass
class FittedPipeline:
    """Everything fitted on one user's training data."""

    config: PipelineConfig
    layout: FeatureLayout
    transformer: Standardizer | MinMaxNormalizer
    pca_map: PcaAttributeMap | None = None
    canvas: CanvasConfig = field(default_factory=CanvasConfig)

    def transform(self, rows: np.ndarray) -> np.ndarray:
        """Normalize, then blank any ablated feature group."""
        out = self.transformer.transform(rows)
        if self.config.ablation != "full":
            group = self.config.ablation.lstrip("-")
            out = np.array(out)
            out[..., self.layout.group_indices(group)] = 0.0
        return out

    def encode(self, buffered: np.ndarray) -> EncodedImage:
        name = self.config.encoder
        if name in ("ours-pca", "ours-xy"):
            fv = FeatureVector(values=np.asarray(buffered), layout=self.layout)
            pca = self.pca_map if name == "ours-pca" else None
            return render(fv, pca, self.canvas)
        if name == "rp":
            return encode_rp(buffered, config=self.canvas)
        if name == "gaf":
            return encode_gaf(buffered, config=self.canvas)
        return encode_mtf(buffered, config=self.canvas)

    def encode_all(self, buffered_rows: np.ndarray) -> list[EncodedImage]:
        return [self.encode(row) for row in buffered_rows]

    def to_dict(self) -> dict:
        return {
            "config": {
                "normalization": self.config.normalization,
                "buffer_size": self.config.buffer_size,
                "augment_count": self.config.augment_count,
                "coverage": self.config.coverage,
                "encoder": self.config.encoder,
                "ablation": self.config.ablation,
            },
            "pin_length": self.layout.pin_length,
            "transformer": self.transformer.to_dict(),
            "pca_map": None if self.pca_map is None else self.pca_map.to_dict(),
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "FittedPipeline":
        cfg = payload["config"]
        config = PipelineConfig(
            normalization=cfg["normalization"],
            buffer_size=int(cfg["buffer_size"]),
            augment_count=int(cfg["augment_count"]),
            coverage=float(cfg["coverage"]),
            encoder=cfg["encoder"],
            ablation=cfg.get("ablation", "full"),
        )
        raw = payload["transformer"]
        transformer: Standardizer | MinMaxNormalizer
        if config.normalization == "standardize":
            transformer = Standardizer.from_dict(raw)
        else:
            transformer = MinMaxNormalizer.from_dict(raw)
        pca = payload.get("pca_map")
        return cls(
            config=config,
            layout=feature_layout(int(payload["pin_length"])),
            transformer=transformer,
            pca_map=None if pca is None else PcaAttributeMap.from_dict(pca),
        )


def fit_pipeline(train_rows: np.ndarray, layout: FeatureLayout,
                 config: PipelineConfig, seed: int = 0
                 ) -> tuple[FittedPipeline, np.ndarray]:
    """Fit normalization and the attribute map; return augmented training rows.

    ``train_rows`` are raw feature vectors in temporal order.  The returned
    matrix holds ``augment_count`` buffered vectors (or every sliding window
    when the count is 0).
    """
    train_rows = np.asarray(train_rows, dtype=np.float64)
    if config.normalization == "standardize":
        transformer = fit_standardizer(train_rows)
    else:
        transformer = fit_minmax(train_rows)
    pipeline = FittedPipeline(config=config, layout=layout, transformer=transformer)
    transformed = pipeline.transform(train_rows)

    b = config.buffer_size
    if transformed.shape[0] < b:
        raise InsufficientDataError(
            f"need at least {b} training vectors, got {transformed.shape[0]}"
        )
    if config.augment_count > 0:
        buffered = augment(transformed, capacity=b, count=config.augment_count,
                           seed=seed)
    else:
        windows = np.lib.stride_tricks.sliding_window_view(
            transformed, b, axis=0).transpose(0, 2, 1)
        buffered = np.stack([
            weighted_merge(w[:-1], w[-1]) for w in windows
        ])

    if config.encoder == "ours-pca":
        pooled = np.concatenate([
            keystroke_slices(FeatureVector(values=row, layout=layout))
            for row in buffered
        ])
        pipeline.pca_map = fit_pca(pooled, coverage=config.coverage)
    return pipeline, buffered


def buffer_positions(stream: np.ndarray, positions: Sequence[int],
                     capacity: int) -> np.ndarray:
    """Buffered vector at each stream position (window ends there)."""
    out = []
    for t in positions:
        if t < capacity - 1:
            raise ValueError(f"position {t} has fewer than {capacity - 1} predecessors")
        window = stream[t - capacity + 1:t + 1]
        out.append(weighted_merge(window[:-1], window[-1]))
    return np.stack(out)


def buffer_with_history(stream: np.ndarray, latest_rows: np.ndarray,
                        positions: Sequence[int], capacity: int) -> np.ndarray:
    """Merge each foreign vector over the genuine history ending before its
    paired stream position."""
    out = []
    for row, t in zip(latest_rows, positions):
        if t < capacity - 1:
            raise ValueError(f"position {t} has fewer than {capacity - 1} predecessors")
        history = stream[t - capacity + 1:t]
        out.append(weighted_merge(history, row))
    return np.stack(out)


# ---------------------------------------------------------------------------
# Configuration loading
# ---------------------------------------------------------------------------

def config_schema() -> dict:
    text = importlib.resources.files("keydyn").joinpath(
        "schemas/config.schema.json").read_text("utf-8")
    return json.loads(text)


def validate_config(config: Mapping) -> dict:
    try:
        jsonschema.validate(instance=config, schema=config_schema())
    except jsonschema.ValidationError as exc:
        path = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid configuration at {path}: {exc.message}") from exc
    return dict(config)


def load_config(path: str | Path) -> dict:
    if sys.version_info >= (3, 11):
        import tomllib
    else:
        import tomli as tomllib
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return validate_config(raw)


_COHORT_DEFAULTS = {
    "source": "synthetic", "path": None, "users": None,
    "imposters_val": None, "imposters_test": None, "pin_length": 10,
    "sessions": 1, "separation": 2.0, "separation_overrides": None,
    "outlier_rate": 0.0, "outlier_scale": 300.0, "seed": 0,
}
_PIPELINE_DEFAULTS = {
    "normalization": "standardize", "buffer_size": DEFAULT_BUFFER_SIZE,
    "augment": 600, "coverage": DEFAULT_COVERAGE, "encoder": "ours-pca",
    "ablation": "full",
}
_DETECTOR_DEFAULTS = {
    "kind": "svdd", "epochs": 40, "lr": 0.001, "batch_size": 64,
    "weight_decay": 1e-6, "latent": 30, "seed": 0,
}


def _section(config: Mapping, name: str, defaults: Mapping) -> dict:
    merged = dict(defaults)
    merged.update(config.get(name, {}))
    return merged


# ---------------------------------------------------------------------------
# The experiment harness
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    rows: list[dict]
    failures: list[dict] = field(default_factory=list)

    def aggregates(self) -> dict[str, dict[str, float]]:
        if not self.rows:
            return {}
        out = {}
        for name, fn in (("Average", np.mean), ("Min", np.min), ("Max", np.max)):
            out[name] = {
                col: float(fn([r[col] for r in self.rows]))
                for col in METRIC_COLUMNS
            }
        return out

    def mean_eer(self) -> float:
        if not self.rows:
            raise InsufficientDataError("report has no successful users")
        return float(np.mean([r["eer"] for r in self.rows]))

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["user", *METRIC_COLUMNS])
            for row in self.rows:
                writer.writerow([row["user"]] +
                                [f"{row[c]:.6f}" for c in METRIC_COLUMNS])
            for name, agg in self.aggregates().items():
                writer.writerow([name] +
                                [f"{agg[c]:.6f}" for c in METRIC_COLUMNS])

    def write_json(self, path: str | Path) -> None:
        payload = {
            "users": self.rows,
            "aggregate": self.aggregates(),
            "failures": self.failures,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def evaluate_user(cohort: Cohort, user_id: str, counts: Mapping[str, int],
                  pipeline_cfg: PipelineConfig, detector_cfg: Mapping,
                  seed: int) -> dict:
    """Train and evaluate one user; returns the report row."""
    genuine = cohort.genuine[user_id]
    imposters = cohort.imposter[user_id]
    n_train, n_val, n_test = counts["train"], counts["val"], counts["test"]
    n_iv, n_it = counts["imposters_val"], counts["imposters_test"]
    if len(genuine) < n_train + n_val + n_test:
        raise InsufficientDataError(
            f"{user_id}: need {n_train + n_val + n_test} genuine entries, "
            f"have {len(genuine)}"
        )
    if len(imposters) < n_iv + n_it:
        raise InsufficientDataError(
            f"{user_id}: need {n_iv + n_it} imposter entries, have {len(imposters)}"
        )

    rows, layout = extract_features_matrix(genuine[:n_train + n_val + n_test])
    imp_rows, _ = extract_features_matrix(imposters[:n_iv + n_it])

    pipeline, train_buffered = fit_pipeline(
        rows[:n_train], layout, pipeline_cfg, seed=seed)
    stream = pipeline.transform(rows)
    imp_stream = pipeline.transform(imp_rows)

    b = pipeline_cfg.buffer_size
    val_pos = list(range(n_train, n_train + n_val))
    test_pos = list(range(n_train + n_val, n_train + n_val + n_test))
    val_gen = buffer_positions(stream, val_pos, b)
    test_gen = buffer_positions(stream, test_pos, b)
    iv_pos = [val_pos[i % n_val] for i in range(n_iv)]
    it_pos = [test_pos[i % n_test] for i in range(n_it)]
    val_imp = buffer_with_history(stream, imp_stream[:n_iv], iv_pos, b)
    test_imp = buffer_with_history(stream, imp_stream[n_iv:n_iv + n_it], it_pos, b)

    kind = detector_cfg["kind"]
    if kind == "svdd":
        train_imgs = pipeline.encode_all(train_buffered)
        model = SvddModel(network=SvddNetwork(seed=detector_cfg["seed"]),
                          weight_decay=detector_cfg["weight_decay"])
        model.initialize_center(train_imgs)
        train_svdd(model, train_imgs, epochs=detector_cfg["epochs"],
                   lr=detector_cfg["lr"], batch_size=detector_cfg["batch_size"],
                   seed=detector_cfg["seed"])
        scorer: Callable[[np.ndarray], np.ndarray] = lambda rows_: score_batch(
            model, pipeline.encode_all(rows_))
    elif kind == "autoencoder":
        model_ae = AutoencoderModel(input_dim=layout.dim,
                                    latent_dim=detector_cfg["latent"],
                                    seed=detector_cfg["seed"])
        train_autoencoder(model_ae, train_buffered, epochs=detector_cfg["epochs"],
                          lr=detector_cfg["lr"],
                          batch_size=detector_cfg["batch_size"],
                          seed=detector_cfg["seed"])
        scorer = lambda rows_: ae_score_batch(model_ae, rows_)
    else:
        raise ConfigError(f"unknown detector {kind!r}")

    val_eer, threshold = compute_eer(scorer(val_gen), scorer(val_imp))
    test_gen_scores = scorer(test_gen)
    test_imp_scores = scorer(test_imp)
    test_eer, _ = compute_eer(test_gen_scores, test_imp_scores)
    metrics = compute_metrics(test_gen_scores, test_imp_scores, threshold)
    return {
        "user": user_id,
        "eer": float(test_eer),
        "far": metrics.far,
        "frr": metrics.frr,
        "tar": metrics.tar,
        "acc": metrics.acc,
        "val_eer": float(val_eer),
        "threshold": float(threshold),
    }


def run_experiment(config: Mapping, progress: Callable[[str], None] | None = None
                   ) -> EvalReport:
    """Run the configured cohort experiment; per-user failures are recorded
    in the report and do not abort the remaining users."""
    config = validate_config(config)
    cohort_cfg = _section(config, "cohort", _COHORT_DEFAULTS)
    pipe_raw = _section(config, "pipeline", _PIPELINE_DEFAULTS)
    detector_cfg = _section(config, "detector", _DETECTOR_DEFAULTS)

    counts = {
        "train": cohort_cfg["train"],
        "val": cohort_cfg["val"],
        "test": cohort_cfg["test"],
        "imposters_val": cohort_cfg["imposters_val"] or cohort_cfg["val"],
        "imposters_test": cohort_cfg["imposters_test"] or cohort_cfg["test"],
    }
    pipeline_cfg = PipelineConfig(
        normalization=pipe_raw["normalization"],
        buffer_size=pipe_raw["buffer_size"],
        augment_count=pipe_raw["augment"],
        coverage=pipe_raw["coverage"],
        encoder=pipe_raw["encoder"],
        ablation=pipe_raw["ablation"],
    )
    genuine_total = counts["train"] + counts["val"] + counts["test"]
    imposter_total = counts["imposters_val"] + counts["imposters_test"]
    if cohort_cfg["source"] == "jsonl":
        if not cohort_cfg["path"]:
            raise ConfigError("cohort.source = 'jsonl' requires cohort.path")
        from .events import read_samples_jsonl
        cohort = cohort_from_samples(read_samples_jsonl(cohort_cfg["path"]))
    else:
        if not cohort_cfg["users"]:
            raise ConfigError("synthetic cohorts require cohort.users")
        cohort = generate_cohort(
            cohort_cfg["users"], genuine_total, imposter_total,
            pin_length=cohort_cfg["pin_length"], sessions=cohort_cfg["sessions"],
            separation=cohort_cfg["separation"],
            separation_overrides=cohort_cfg["separation_overrides"],
            outlier_rate=cohort_cfg["outlier_rate"],
            outlier_scale=cohort_cfg["outlier_scale"],
            seed=cohort_cfg["seed"],
        )

    report = EvalReport(rows=[])
    for idx, user_id in enumerate(cohort.user_ids):
        if progress:
            progress(f"user {user_id} ({idx + 1}/{len(cohort.user_ids)})")
        try:
            row = evaluate_user(cohort, user_id, counts, pipeline_cfg,
                                detector_cfg, seed=cohort_cfg["seed"] ^ (idx + 101))
            report.rows.append(row)
        except KeydynError as exc:
            report.failures.append({"user": user_id, "error": str(exc)})
    return report
