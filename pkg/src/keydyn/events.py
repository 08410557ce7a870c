"""Raw PIN keystroke types, the fixed feature-vector layout, and JSONL ingestion.

A sample is one PIN entry: an ordered list of per-key events carrying press and
release times (ms since sample start), the within-key touch offset, pressure,
and finger-contact area.  From each sample we derive a fixed-layout vector of
monograph features (hold time, touch position, force) followed by digraph
timing intervals (DD/UD/UU/DU) for each consecutive key pair.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import SampleInvariantError, SampleSchemaError

SCHEMA_VERSION = 1

#: Nine PIN digits plus the terminating ENTER key.
DEFAULT_PIN_LENGTH = 10

GENUINE = "genuine"
IMPOSTER = "imposter"
UNLABELED = "unlabeled"
_LABELS = (GENUINE, IMPOSTER, UNLABELED)

_EVENT_FIELDS = ("key_id", "press_time", "release_time", "x", "y", "pressure", "area")


@dataclass(frozen=True)
class KeyEvent:
    """One key press within a PIN entry.

    Times are milliseconds since the start of the sample; ``x``/``y`` are the
    touch offset normalized to the pressed key's bounding box.
    """

    key_id: str
    press_time: float
    release_time: float
    x: float
    y: float
    pressure: float
    area: float


@dataclass(frozen=True)
class KeystrokeSample:
    """One complete PIN entry by one user in one session."""

    user_id: str
    session_id: str
    events: tuple[KeyEvent, ...]
    label: str = UNLABELED

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))


def validate_sample(sample: KeystrokeSample, pin_length: int | None = None) -> None:
    """Check all sample invariants; raise SampleInvariantError naming the offender.

    If ``pin_length`` is None the sample's own event count is accepted as long
    as it is at least 2 (digraphs are undefined below that).
    """
    events = sample.events
    if not events:
        raise SampleInvariantError("sample has no events", field="events")
    if pin_length is not None and len(events) != pin_length:
        raise SampleInvariantError(
            f"expected {pin_length} events, got {len(events)}", field="events"
        )
    if len(events) < 2:
        raise SampleInvariantError(
            f"need at least 2 events for digraph features, got {len(events)}",
            field="events",
        )
    if sample.label not in _LABELS:
        raise SampleInvariantError(f"unknown label {sample.label!r}", field="label")
    for i, ev in enumerate(events):
        if ev.release_time < ev.press_time:
            raise SampleInvariantError(
                f"event {i}: release_time {ev.release_time} < press_time {ev.press_time}",
                event_index=i, field="release_time",
            )
        if not (0.0 <= ev.x <= 1.0):
            raise SampleInvariantError(
                f"event {i}: x={ev.x} outside [0, 1]", event_index=i, field="x"
            )
        if not (0.0 <= ev.y <= 1.0):
            raise SampleInvariantError(
                f"event {i}: y={ev.y} outside [0, 1]", event_index=i, field="y"
            )
        if ev.pressure < 0.0:
            raise SampleInvariantError(
                f"event {i}: pressure={ev.pressure} < 0", event_index=i, field="pressure"
            )
        if ev.area < 0.0:
            raise SampleInvariantError(
                f"event {i}: area={ev.area} < 0", event_index=i, field="area"
            )
        if i > 0 and ev.press_time <= events[i - 1].press_time:
            raise SampleInvariantError(
                f"event {i}: press_time {ev.press_time} not after previous "
                f"{events[i - 1].press_time}",
                event_index=i, field="press_time",
            )


@dataclass(frozen=True)
class FeatureLayout:
    """Named slot order of a feature vector for PIN length ``pin_length``.

    Slots are laid out as all monograph features first, keystroke by keystroke
    (hold_k, x_k, y_k, force_k), then all digraph features transition by
    transition (DD_j, UD_j, UU_j, DU_j).  Digraph j spans keystrokes j and j+1.
    """

    pin_length: int
    names: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        if self.pin_length < 2:
            raise ValueError(f"pin_length must be >= 2, got {self.pin_length}")
        mono = []
        for k in range(self.pin_length):
            mono += [f"hold_{k}", f"x_{k}", f"y_{k}", f"force_{k}"]
        di = []
        for j in range(self.pin_length - 1):
            di += [f"DD_{j}", f"UD_{j}", f"UU_{j}", f"DU_{j}"]
        object.__setattr__(self, "names", tuple(mono + di))

    @property
    def dim(self) -> int:
        return 4 * self.pin_length + 4 * (self.pin_length - 1)

    def index(self, name: str) -> int:
        return self.names.index(name)

    # Slot positions are arithmetic so bulk code can slice without lookups.
    def hold(self, k: int) -> int:
        return 4 * k

    def x(self, k: int) -> int:
        return 4 * k + 1

    def y(self, k: int) -> int:
        return 4 * k + 2

    def force(self, k: int) -> int:
        return 4 * k + 3

    def dd(self, j: int) -> int:
        return 4 * self.pin_length + 4 * j

    def ud(self, j: int) -> int:
        return 4 * self.pin_length + 4 * j + 1

    def uu(self, j: int) -> int:
        return 4 * self.pin_length + 4 * j + 2

    def du(self, j: int) -> int:
        return 4 * self.pin_length + 4 * j + 3

    def group_indices(self, group: str) -> list[int]:
        """Slot indices for an ablation group: 'timing', 'location', or 'force'."""
        L = self.pin_length
        if group == "location":
            return sorted([self.x(k) for k in range(L)] + [self.y(k) for k in range(L)])
        if group == "force":
            return [self.force(k) for k in range(L)]
        if group == "timing":
            idx = [self.hold(k) for k in range(L)]
            idx += list(range(4 * L, self.dim))
            return sorted(idx)
        raise ValueError(f"unknown feature group {group!r}")


def feature_layout(pin_length: int) -> FeatureLayout:
    """Stable slot schema for a given PIN length; requires ``pin_length >= 2``."""
    return FeatureLayout(pin_length)


@dataclass(frozen=True)
class FeatureVector:
    """A feature vector plus the layout naming each slot."""

    values: np.ndarray
    layout: FeatureLayout

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.layout.dim,):
            raise ValueError(
                f"values shape {values.shape} does not match layout dim {self.layout.dim}"
            )
        object.__setattr__(self, "values", values)

    def with_values(self, values: np.ndarray) -> "FeatureVector":
        return FeatureVector(values=values, layout=self.layout)


def extract_features(
    sample: KeystrokeSample, pin_length: int | None = None
) -> FeatureVector:
    """Deterministically extract the monograph/digraph feature vector.

    hold_k = release_k - press_k, force_k = pressure_k * area_k, and for every
    consecutive pair j: DD = press-to-press, UD = release-to-next-press,
    UU = release-to-release, DU = press-to-next-release.
    """
    validate_sample(sample, pin_length)
    L = len(sample.events)
    layout = feature_layout(L)
    out = np.empty(layout.dim, dtype=np.float64)

    press = np.array([e.press_time for e in sample.events], dtype=np.float64)
    release = np.array([e.release_time for e in sample.events], dtype=np.float64)
    for k, ev in enumerate(sample.events):
        out[layout.hold(k)] = release[k] - press[k]
        out[layout.x(k)] = ev.x
        out[layout.y(k)] = ev.y
        out[layout.force(k)] = ev.pressure * ev.area
    for j in range(L - 1):
        out[layout.dd(j)] = press[j + 1] - press[j]
        out[layout.ud(j)] = press[j + 1] - release[j]
        out[layout.uu(j)] = release[j + 1] - release[j]
        out[layout.du(j)] = release[j + 1] - press[j]
    return FeatureVector(values=out, layout=layout)


def extract_features_matrix(
    samples: Sequence[KeystrokeSample], pin_length: int | None = None
) -> tuple[np.ndarray, FeatureLayout]:
    """Stack feature vectors of same-length samples into an (n, D) matrix."""
    if not samples:
        raise ValueError("no samples given")
    vectors = [extract_features(s, pin_length) for s in samples]
    layout = vectors[0].layout
    for v in vectors[1:]:
        if v.layout.pin_length != layout.pin_length:
            raise ValueError("samples have inconsistent PIN lengths")
    return np.stack([v.values for v in vectors]), layout


# ---------------------------------------------------------------------------
# JSONL ingestion (schema v1): one sample object per line.
# ---------------------------------------------------------------------------

def sample_to_dict(sample: KeystrokeSample) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "user_id": sample.user_id,
        "session_id": sample.session_id,
        "label": sample.label,
        "events": [
            {f: getattr(ev, f) for f in _EVENT_FIELDS} for ev in sample.events
        ],
    }


def sample_from_dict(record: dict) -> KeystrokeSample:
    """Parse one schema-v1 record; shape errors raise SampleSchemaError."""
    if not isinstance(record, dict):
        raise SampleSchemaError(f"expected a JSON object, got {type(record).__name__}")
    if record.get("schema") != SCHEMA_VERSION:
        raise SampleSchemaError(
            f"missing or unsupported schema version: {record.get('schema')!r}"
        )
    for key in ("user_id", "session_id", "events"):
        if key not in record:
            raise SampleSchemaError(f"missing required field {key!r}")
    if not isinstance(record["events"], list):
        raise SampleSchemaError("'events' must be a list")
    events = []
    for i, raw in enumerate(record["events"]):
        if not isinstance(raw, dict):
            raise SampleSchemaError(f"event {i} is not an object")
        missing = [f for f in _EVENT_FIELDS if f not in raw]
        if missing:
            raise SampleSchemaError(f"event {i} missing fields {missing}")
        try:
            events.append(
                KeyEvent(
                    key_id=str(raw["key_id"]),
                    press_time=float(raw["press_time"]),
                    release_time=float(raw["release_time"]),
                    x=float(raw["x"]),
                    y=float(raw["y"]),
                    pressure=float(raw["pressure"]),
                    area=float(raw["area"]),
                )
            )
        except (TypeError, ValueError) as exc:
            raise SampleSchemaError(f"event {i} has a non-numeric field: {exc}") from exc
    return KeystrokeSample(
        user_id=str(record["user_id"]),
        session_id=str(record["session_id"]),
        events=tuple(events),
        label=str(record.get("label", UNLABELED)),
    )


def iter_samples_jsonl(path: str | Path) -> Iterator[KeystrokeSample]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SampleSchemaError(f"line {lineno}: invalid JSON: {exc}") from exc
            try:
                yield sample_from_dict(record)
            except SampleSchemaError as exc:
                raise SampleSchemaError(f"line {lineno}: {exc}") from exc


def read_samples_jsonl(path: str | Path) -> list[KeystrokeSample]:
    return list(iter_samples_jsonl(path))


def write_samples_jsonl(samples: Iterable[KeystrokeSample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(sample_to_dict(sample), sort_keys=True))
            fh.write("\n")
