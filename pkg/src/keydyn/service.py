"""HTTP authentication service over the keystroke pipeline.

State is file-backed under a store root: each user has an append-only
``samples.jsonl``, plus ``pipeline.json`` and ``model.kdnn`` artifacts that
are written to a temp file and atomically renamed.  Every request outcome is
appended to ``audit.jsonl`` before the response is returned.  Training holds
a per-user lock; a second train request for the same user gets 409 instead
of waiting.

Threshold calibration needs imposter scores.  When other enrolled users have
compatible samples those are used as negatives; otherwise validation vectors
perturbed by Gaussian offsets stand in, and the response says which source
was used.
"""

from __future__ import annotations

import json
import logging
import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
from fastapi import Body, FastAPI, HTTPException, Response

from .errors import (
    DegeneratePcaError,
    InsufficientDataError,
    SampleInvariantError,
    SampleSchemaError,
)
from .events import (
    KeystrokeSample,
    extract_features_matrix,
    sample_from_dict,
    validate_sample,
)
from .evaluation import (
    PipelineConfig,
    FittedPipeline,
    buffer_positions,
    buffer_with_history,
    compute_eer,
    fit_pipeline,
)
from .neural import (
    SvddModel,
    SvddNetwork,
    decide,
    load_model,
    save_model,
    score_batch,
    train_svdd,
)
from .preprocess import weighted_merge

logger = logging.getLogger("keydyn.service")

DEFAULT_PREVIEW_TTL = 3600.0


@dataclass(frozen=True)
class ServiceConfig:
    pin_length: int = 10
    min_samples: int = 50
    val_fraction: float = 0.25
    buffer_size: int = 5
    augment: int = 300
    encoder: str = "ours-pca"
    normalization: str = "standardize"
    coverage: float = 0.90
    epochs: int = 30
    lr: float = 0.001
    batch_size: int = 64
    weight_decay: float = 1e-6
    seed: int = 0
    offset_scale: float = 2.0
    preview_ttl: float = DEFAULT_PREVIEW_TTL


class EnrollmentStore:
    """Per-user sample log and trained artifacts on disk.

    samples.jsonl is append-only; a partial trailing line (interrupted write)
    is skipped with a warning instead of failing the whole read.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._audit_lock = threading.Lock()

    def user_dir(self, user_id: str) -> Path:
        if not user_id or "/" in user_id or user_id.startswith("."):
            raise ValueError(f"invalid user id {user_id!r}")
        return self.root / "users" / user_id

    def users(self) -> list[str]:
        base = self.root / "users"
        if not base.is_dir():
            return []
        return sorted(p.name for p in base.iterdir() if p.is_dir())

    def append_samples(self, user_id: str, samples: list[KeystrokeSample]) -> int:
        from .events import sample_to_dict
        d = self.user_dir(user_id)
        d.mkdir(parents=True, exist_ok=True)
        path = d / "samples.jsonl"
        with open(path, "a") as fh:
            for sample in samples:
                fh.write(json.dumps(sample_to_dict(sample), sort_keys=True) + "\n")
            fh.flush()
        return self.count_samples(user_id)

    def load_samples(self, user_id: str) -> list[KeystrokeSample]:
        path = self.user_dir(user_id) / "samples.jsonl"
        if not path.is_file():
            return []
        out = []
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                stripped = line.strip()
                if not stripped:
                    continue
                try:
                    out.append(sample_from_dict(json.loads(stripped)))
                except (json.JSONDecodeError, SampleSchemaError) as exc:
                    logger.warning("%s line %d unreadable, skipping: %s",
                                   path, lineno, exc)
        return out

    def count_samples(self, user_id: str) -> int:
        return len(self.load_samples(user_id))

    def save_artifacts(self, user_id: str, pipeline: FittedPipeline,
                       model: SvddModel) -> None:
        d = self.user_dir(user_id)
        d.mkdir(parents=True, exist_ok=True)
        tmp = d / "pipeline.json.tmp"
        tmp.write_text(json.dumps(pipeline.to_dict(), sort_keys=True))
        tmp.replace(d / "pipeline.json")
        tmp_model = d / "model.kdnn.tmp"
        save_model(model, tmp_model)
        tmp_model.replace(d / "model.kdnn")

    def load_artifacts(self, user_id: str) -> tuple[FittedPipeline, SvddModel] | None:
        d = self.user_dir(user_id)
        pipeline_path = d / "pipeline.json"
        model_path = d / "model.kdnn"
        if not (pipeline_path.is_file() and model_path.is_file()):
            return None
        pipeline = FittedPipeline.from_dict(json.loads(pipeline_path.read_text()))
        model = load_model(model_path)
        if not isinstance(model, SvddModel):
            raise ValueError(f"{model_path}: not a one-class model")
        return pipeline, model

    def append_audit(self, record: Mapping) -> None:
        path = self.root / "audit.jsonl"
        with self._audit_lock:
            with open(path, "a") as fh:
                fh.write(json.dumps(dict(record), sort_keys=True) + "\n")
                fh.flush()

    def read_audit(self) -> list[dict]:
        path = self.root / "audit.jsonl"
        if not path.is_file():
            return []
        out = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line:
                    out.append(json.loads(line))
        return out


class _PreviewCache:
    def __init__(self, ttl: float):
        self.ttl = ttl
        self._lock = threading.Lock()
        self._items: dict[str, tuple[float, bytes]] = {}

    def put(self, png: bytes) -> str:
        image_id = uuid.uuid4().hex
        now = time.monotonic()
        with self._lock:
            self._items = {k: v for k, v in self._items.items() if v[0] > now}
            self._items[image_id] = (now + self.ttl, png)
        return image_id

    def get(self, image_id: str) -> bytes | None:
        now = time.monotonic()
        with self._lock:
            item = self._items.get(image_id)
            if item is None or item[0] <= now:
                self._items.pop(image_id, None)
                return None
            return item[1]


def _parse_samples(payload, pin_length: int) -> list[KeystrokeSample]:
    """Body may be one sample object or {"samples": [...]}."""
    if isinstance(payload, Mapping) and "samples" in payload:
        raw_list = payload["samples"]
        if not isinstance(raw_list, list):
            raise SampleSchemaError("'samples' must be a list")
    elif isinstance(payload, list):
        raw_list = payload
    else:
        raw_list = [payload]
    if not raw_list:
        raise SampleSchemaError("no samples in request body")
    samples = [sample_from_dict(item) for item in raw_list]
    for sample in samples:
        validate_sample(sample, pin_length=pin_length)
    return samples


def create_app(store_root: str | Path,
               config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig()
    store = EnrollmentStore(store_root)
    previews = _PreviewCache(config.preview_ttl)
    app = FastAPI(title="keydyn", version="1")
    app.state.store = store
    app.state.config = config

    train_locks: dict[str, threading.Lock] = {}
    locks_guard = threading.Lock()
    # Rolling context per user: the B-1 most recent accepted feature vectors,
    # in transformed units.  Rebuilt from the sample log when absent.
    windows: dict[str, list[np.ndarray]] = {}
    windows_guard = threading.Lock()

    # live mutable state, exposed for tests and diagnostics
    app.state.train_locks = train_locks
    app.state.windows = windows
    app.state.previews = previews

    def _lock_for(user_id: str) -> threading.Lock:
        with locks_guard:
            return train_locks.setdefault(user_id, threading.Lock())

    def _audit(user_id: str, action: str, outcome: str, **extra) -> None:
        record = {"ts": time.time(), "user": user_id, "action": action,
                  "outcome": outcome}
        record.update(extra)
        store.append_audit(record)

    def _window_for(user_id: str, pipeline: FittedPipeline) -> list[np.ndarray]:
        with windows_guard:
            window = windows.get(user_id)
        if window is not None:
            return window
        samples = store.load_samples(user_id)
        b = pipeline.config.buffer_size
        tail = samples[-(b - 1):]
        rows, _ = extract_features_matrix(tail)
        window = list(pipeline.transform(rows))
        with windows_guard:
            windows[user_id] = window
        return window

    @app.get("/api/v1/health")
    def health():
        return {"status": "ok", "users": len(store.users())}

    @app.post("/api/v1/users/{user_id}/samples")
    def post_samples(user_id: str, payload=Body(...)):
        try:
            samples = _parse_samples(payload, config.pin_length)
        except SampleSchemaError as exc:
            _audit(user_id, "samples", "schema_error", error=str(exc))
            raise HTTPException(status_code=400, detail=str(exc))
        except SampleInvariantError as exc:
            _audit(user_id, "samples", "invariant_error", error=str(exc),
                   event_index=exc.event_index, field=exc.field)
            raise HTTPException(status_code=422, detail={
                "message": str(exc),
                "event_index": exc.event_index,
                "field": exc.field,
            })
        total = store.append_samples(user_id, samples)
        _audit(user_id, "samples", "stored", count=len(samples), total=total)
        return {"accepted": True, "sample_count": total}

    @app.post("/api/v1/users/{user_id}/train")
    def post_train(user_id: str, payload: dict | None = Body(default=None)):
        overrides = payload or {}
        unknown = set(overrides) - {"epochs", "lr", "batch_size", "augment"}
        if unknown:
            raise HTTPException(status_code=400,
                                detail=f"unknown hyperparameters: {sorted(unknown)}")
        lock = _lock_for(user_id)
        if not lock.acquire(blocking=False):
            _audit(user_id, "train", "busy")
            raise HTTPException(status_code=409,
                                detail=f"training already in progress for {user_id}")
        try:
            samples = store.load_samples(user_id)
            if len(samples) < config.min_samples:
                _audit(user_id, "train", "insufficient", have=len(samples),
                       need=config.min_samples)
                raise HTTPException(status_code=412, detail=(
                    f"need at least {config.min_samples} samples to train, "
                    f"have {len(samples)}"
                ))
            try:
                summary = _train_user(user_id, samples, overrides)
            except (InsufficientDataError, DegeneratePcaError) as exc:
                _audit(user_id, "train", "failed", error=str(exc))
                raise HTTPException(status_code=412, detail=str(exc))
            _audit(user_id, "train", "trained", **summary)
            return summary
        finally:
            lock.release()

    def _train_user(user_id: str, samples: list[KeystrokeSample],
                    overrides: Mapping | None = None) -> dict:
        overrides = overrides or {}
        rows, layout = extract_features_matrix(samples)
        n = rows.shape[0]
        n_val = max(int(n * config.val_fraction), 2)
        n_train = n - n_val
        pipeline_cfg = PipelineConfig(
            normalization=config.normalization,
            buffer_size=config.buffer_size,
            augment_count=int(overrides.get("augment", config.augment)),
            coverage=config.coverage,
            encoder=config.encoder,
        )
        pipeline, train_buffered = fit_pipeline(
            rows[:n_train], layout, pipeline_cfg, seed=config.seed)
        stream = pipeline.transform(rows)
        b = config.buffer_size
        val_pos = list(range(n_train, n))
        val_gen = buffer_positions(stream, val_pos, b)

        imp_rows = _negative_rows(user_id, layout, n_val * 2)
        if imp_rows is not None:
            imposter_source = "cross-user"
            imp_stream = pipeline.transform(imp_rows)
        else:
            imposter_source = "synthetic-offset"
            rng = np.random.default_rng(config.seed)
            imp_stream = stream[val_pos] + rng.normal(
                0.0, config.offset_scale, size=(n_val, layout.dim))
        positions = [val_pos[i % n_val] for i in range(imp_stream.shape[0])]
        val_imp = buffer_with_history(stream, imp_stream, positions, b)

        model = SvddModel(network=SvddNetwork(seed=config.seed),
                          weight_decay=config.weight_decay)
        train_imgs = pipeline.encode_all(train_buffered)
        model.initialize_center(train_imgs)
        result = train_svdd(model, train_imgs,
                            epochs=int(overrides.get("epochs", config.epochs)),
                            lr=float(overrides.get("lr", config.lr)),
                            batch_size=int(overrides.get("batch_size",
                                                         config.batch_size)),
                            seed=config.seed)
        val_eer, threshold = compute_eer(
            score_batch(model, pipeline.encode_all(val_gen)),
            score_batch(model, pipeline.encode_all(val_imp)),
        )
        model.threshold = float(threshold)
        model.metadata = {
            "user": user_id, "samples_used": n, "epochs": result.epochs_run,
            "seed": config.seed, "weight_decay": config.weight_decay,
            "val_eer": float(val_eer), "imposter_source": imposter_source,
        }
        store.save_artifacts(user_id, pipeline, model)
        with windows_guard:
            windows[user_id] = [stream[i] for i in range(n - (b - 1), n)]
        return {
            "user": user_id,
            "samples_used": n,
            "epochs": result.epochs_run,
            "final_loss": result.final_loss,
            "val_eer": float(val_eer),
            "threshold": float(threshold),
            "imposter_source": imposter_source,
        }

    def _negative_rows(user_id: str, layout, limit: int) -> np.ndarray | None:
        rows = []
        for other in store.users():
            if other == user_id:
                continue
            for sample in store.load_samples(other):
                if len(sample.events) != layout.pin_length:
                    continue
                matrix, _ = extract_features_matrix([sample])
                rows.append(matrix[0])
                if len(rows) >= limit:
                    break
            if len(rows) >= limit:
                break
        if not rows:
            return None
        return np.stack(rows)

    @app.post("/api/v1/users/{user_id}/authenticate")
    def post_authenticate(user_id: str, payload=Body(...)):
        artifacts = store.load_artifacts(user_id)
        if artifacts is None:
            _audit(user_id, "authenticate", "no_model")
            raise HTTPException(status_code=404,
                                detail=f"no trained model for {user_id}")
        pipeline, model = artifacts
        try:
            samples = _parse_samples(payload, config.pin_length)
        except SampleSchemaError as exc:
            _audit(user_id, "authenticate", "schema_error", error=str(exc))
            raise HTTPException(status_code=400, detail=str(exc))
        except SampleInvariantError as exc:
            _audit(user_id, "authenticate", "invariant_error", error=str(exc))
            raise HTTPException(status_code=422, detail={
                "message": str(exc),
                "event_index": exc.event_index,
                "field": exc.field,
            })
        if len(samples) != 1:
            _audit(user_id, "authenticate", "schema_error",
                   error="expected exactly one sample")
            raise HTTPException(status_code=400,
                                detail="authenticate takes exactly one sample")

        rows, _ = extract_features_matrix(samples)
        vec = pipeline.transform(rows)[0]
        window = _window_for(user_id, pipeline)
        b = pipeline.config.buffer_size
        history = np.stack(window[-(b - 1):])
        buffered = weighted_merge(history, vec)
        image = pipeline.encode(buffered)
        decision = decide(model, image)
        if decision.accepted:
            with windows_guard:
                current = windows.setdefault(user_id, list(window))
                current.append(vec)
                del current[:-(b - 1)]
        image_id = previews.put(image.to_png_bytes())
        _audit(user_id, "authenticate",
               "accept" if decision.accepted else "reject",
               severity="info" if decision.accepted else "warning",
               score=decision.score, decision_value=decision.decision_value,
               image_id=image_id)
        return {
            "user": user_id,
            "verdict": decision.verdict,
            "score": decision.score,
            "decision_value": decision.decision_value,
            "threshold": model.threshold,
            "image_id": image_id,
        }

    @app.get("/api/v1/users/{user_id}/preview/{image_id}")
    def get_preview(user_id: str, image_id: str):
        png = previews.get(image_id)
        if png is None:
            raise HTTPException(status_code=404,
                                detail="unknown or expired image id")
        return Response(content=png, media_type="image/png")

    return app
