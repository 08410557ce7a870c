"""Synthetic keystroke cohorts with controllable user separability.

Each user gets a Gaussian typing profile: positional hold/flight means, a
habitual touch offset per key slot, and pressure/area levels.  The spread of
profile means across users is ``separation`` times the within-user noise, so
separation 0 produces statistically identical users (a null cohort) and
larger values produce increasingly distinguishable ones.  Imposter attempts
against a user are drawn from other users' profiles applied to the victim's
key sequence.

All draws are keyed off ``seed ^ user_index`` so a user's data does not
change when the cohort grows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .events import (
    DEFAULT_PIN_LENGTH,
    GENUINE,
    IMPOSTER,
    KeyEvent,
    KeystrokeSample,
    write_samples_jsonl,
)

# Normalized 3x4 keypad; ENTER sits bottom-right.
KEY_CENTERS: dict[str, tuple[float, float]] = {
    "1": (1 / 6, 0.125), "2": (0.5, 0.125), "3": (5 / 6, 0.125),
    "4": (1 / 6, 0.375), "5": (0.5, 0.375), "6": (5 / 6, 0.375),
    "7": (1 / 6, 0.625), "8": (0.5, 0.625), "9": (5 / 6, 0.625),
    "0": (0.5, 0.875), "ENTER": (5 / 6, 0.875),
}

# Population-level typing statistics (milliseconds / normalized units).
BASE_HOLD = 85.0
BASE_FLIGHT = 220.0
BASE_PRESSURE = 0.5
BASE_AREA = 0.35

# Within-user noise, shared by every user so separation alone controls
# how distinguishable users are.
HOLD_STD = 15.0
FLIGHT_STD = 45.0
OFFSET_STD = 0.018
PRESSURE_STD = 0.045
AREA_STD = 0.03

GROUPS = ("timing", "location", "force")

_MIN_HOLD = 10.0
_MIN_PRESS_GAP = 5.0


@dataclass(frozen=True)
class UserProfile:
    """Positional Gaussian means for one user's way of typing their PIN."""

    user_id: str
    pin: str                      # digits; ENTER is appended when typing
    hold_mean: np.ndarray         # (L,)
    flight_mean: np.ndarray       # (L-1,) release -> next press gap
    dx_mean: np.ndarray           # (L,) habitual offset from key center
    dy_mean: np.ndarray
    pressure_mean: np.ndarray     # (L,)
    area_mean: np.ndarray

    @property
    def keys(self) -> tuple[str, ...]:
        return tuple(self.pin) + ("ENTER",)


def _group_separation(separation: float,
                      overrides: Mapping[str, float] | None,
                      group: str) -> float:
    if overrides and group in overrides:
        return float(overrides[group])
    return separation


def make_profile(user_id: str, user_index: int, *, pin_length: int = DEFAULT_PIN_LENGTH,
                 separation: float = 2.0,
                 separation_overrides: Mapping[str, float] | None = None,
                 seed: int = 0) -> UserProfile:
    """Draw one user's profile; spread of means scales with separation."""
    if pin_length < 2:
        raise ValueError(f"pin_length must be >= 2, got {pin_length}")
    for group, value in (separation_overrides or {}).items():
        if group not in GROUPS:
            raise ValueError(f"unknown separation group {group!r}")
        if value < 0:
            raise ValueError(f"separation for {group!r} must be >= 0, got {value}")
    rng = np.random.default_rng(seed ^ user_index)
    n = pin_length
    pin = "".join(str(d) for d in rng.integers(0, 10, size=n - 1))

    sep_t = _group_separation(separation, separation_overrides, "timing")
    sep_l = _group_separation(separation, separation_overrides, "location")
    sep_f = _group_separation(separation, separation_overrides, "force")

    hold = BASE_HOLD + rng.normal(0.0, sep_t * HOLD_STD, size=n)
    flight = BASE_FLIGHT + rng.normal(0.0, sep_t * FLIGHT_STD, size=n - 1)
    dx = rng.normal(0.0, sep_l * OFFSET_STD, size=n)
    dy = rng.normal(0.0, sep_l * OFFSET_STD, size=n)
    pressure = BASE_PRESSURE + rng.normal(0.0, sep_f * PRESSURE_STD, size=n)
    area = BASE_AREA + rng.normal(0.0, sep_f * AREA_STD, size=n)

    return UserProfile(
        user_id=user_id, pin=pin,
        hold_mean=np.maximum(hold, _MIN_HOLD),
        flight_mean=flight,
        dx_mean=dx, dy_mean=dy,
        pressure_mean=np.maximum(pressure, 0.05),
        area_mean=np.maximum(area, 0.05),
    )


def sample_entry(profile: UserProfile, rng: np.random.Generator, *,
                 keys: Sequence[str] | None = None,
                 claimed_user: str | None = None,
                 session_id: str = "s0",
                 label: str = GENUINE,
                 outlier_rate: float = 0.0,
                 outlier_scale: float = 300.0) -> KeystrokeSample:
    """One PIN entry typed with ``profile``'s habits.

    ``keys`` defaults to the profile's own PIN; pass another user's key
    sequence (and their id as ``claimed_user``) to fabricate an imposter
    attempt.  Timing outliers, when injected, only ever lengthen one gap.
    """
    keys = tuple(keys) if keys is not None else profile.keys
    n = len(keys)
    if n != len(profile.hold_mean):
        raise ValueError(
            f"profile covers {len(profile.hold_mean)} keystrokes, got {n} keys"
        )
    holds = np.maximum(rng.normal(profile.hold_mean, HOLD_STD), _MIN_HOLD)
    flights = rng.normal(profile.flight_mean, FLIGHT_STD)
    if outlier_rate > 0 and rng.random() < outlier_rate:
        j = int(rng.integers(0, n - 1))
        flights[j] += abs(rng.normal(0.0, outlier_scale))
    xs = np.empty(n)
    ys = np.empty(n)
    for k, key in enumerate(keys):
        try:
            cx, cy = KEY_CENTERS[key]
        except KeyError:
            raise ValueError(f"no keypad position for key {key!r}") from None
        xs[k] = cx + rng.normal(profile.dx_mean[k], OFFSET_STD)
        ys[k] = cy + rng.normal(profile.dy_mean[k], OFFSET_STD)
    xs = np.clip(xs, 0.0, 1.0)
    ys = np.clip(ys, 0.0, 1.0)
    pressures = np.maximum(rng.normal(profile.pressure_mean, PRESSURE_STD), 0.01)
    areas = np.maximum(rng.normal(profile.area_mean, AREA_STD), 0.01)

    events = []
    press = 100.0
    for k in range(n):
        release = press + holds[k]
        events.append(KeyEvent(
            key_id=keys[k],
            press_time=float(press), release_time=float(release),
            x=float(xs[k]), y=float(ys[k]),
            pressure=float(pressures[k]), area=float(areas[k]),
        ))
        if k + 1 < n:
            press = max(release + flights[k], press + _MIN_PRESS_GAP)
    return KeystrokeSample(
        user_id=claimed_user or profile.user_id,
        session_id=session_id,
        events=tuple(events),
        label=label,
    )


@dataclass
class Cohort:
    """Profiles plus per-user genuine entries and imposter attempts."""

    profiles: list[UserProfile] = field(default_factory=list)
    genuine: dict[str, list[KeystrokeSample]] = field(default_factory=dict)
    imposter: dict[str, list[KeystrokeSample]] = field(default_factory=dict)

    @property
    def user_ids(self) -> list[str]:
        if self.profiles:
            return [p.user_id for p in self.profiles]
        return sorted(self.genuine)

    def all_samples(self) -> list[KeystrokeSample]:
        out: list[KeystrokeSample] = []
        for uid in self.user_ids:
            out.extend(self.genuine.get(uid, ()))
        for uid in self.user_ids:
            out.extend(self.imposter.get(uid, ()))
        return out


def generate_cohort(n_users: int, genuine_per_user: int, imposter_per_user: int = 0,
                    *, pin_length: int = DEFAULT_PIN_LENGTH, sessions: int = 1,
                    separation: float = 2.0,
                    separation_overrides: Mapping[str, float] | None = None,
                    outlier_rate: float = 0.0, outlier_scale: float = 300.0,
                    seed: int = 0) -> Cohort:
    """Build a full cohort: profiles, genuine streams, imposter attempts.

    Imposter attempts against user u cycle through the other users' profiles,
    each typing u's key sequence.  With a fixed seed the output is
    byte-for-byte reproducible.
    """
    if n_users < 1:
        raise ValueError("n_users must be >= 1")
    if imposter_per_user > 0 and n_users < 2:
        raise ValueError("imposter attempts require at least two users")
    if sessions < 1:
        raise ValueError("sessions must be >= 1")

    profiles = [
        make_profile(f"user{idx:02d}", idx, pin_length=pin_length,
                     separation=separation,
                     separation_overrides=separation_overrides, seed=seed)
        for idx in range(n_users)
    ]

    cohort = Cohort(profiles=profiles)
    for idx, profile in enumerate(profiles):
        rng = np.random.default_rng((seed ^ idx) + 0x5EED)
        entries = []
        for i in range(genuine_per_user):
            session = f"s{i * sessions // max(genuine_per_user, 1)}"
            entries.append(sample_entry(
                profile, rng, session_id=session,
                outlier_rate=outlier_rate, outlier_scale=outlier_scale,
            ))
        cohort.genuine[profile.user_id] = entries

    for idx, victim in enumerate(profiles):
        rng = np.random.default_rng((seed ^ idx) + 0x1A7ACC)
        attempts = []
        for i in range(imposter_per_user):
            attacker = profiles[(idx + 1 + i % (n_users - 1)) % n_users]
            attempts.append(sample_entry(
                attacker, rng,
                keys=victim.keys, claimed_user=victim.user_id,
                session_id=f"attacker-{attacker.user_id}",
                label=IMPOSTER,
            ))
        cohort.imposter[victim.user_id] = attempts
    return cohort


def split_counts(samples: Sequence, counts: Iterable[int]):
    """Split a sequence into consecutive chunks of the given sizes."""
    counts = list(counts)
    if sum(counts) > len(samples):
        raise ValueError(
            f"cannot split {len(samples)} samples into chunks totaling {sum(counts)}"
        )
    out = []
    start = 0
    for c in counts:
        out.append(list(samples[start:start + c]))
        start += c
    return out


def export_cohort(cohort: Cohort, path: str | Path) -> int:
    """Write every sample (genuine first, then imposters) as JSONL."""
    samples = cohort.all_samples()
    write_samples_jsonl(samples, path)
    return len(samples)


def cohort_from_samples(samples: Iterable[KeystrokeSample]) -> Cohort:
    """Regroup a flat labeled sample stream (for example an exported file or
    externally collected data) by claimed user.  Samples keep file order;
    anything not labeled imposter counts as genuine."""
    cohort = Cohort()
    for sample in samples:
        target = cohort.imposter if sample.label == IMPOSTER else cohort.genuine
        target.setdefault(sample.user_id, []).append(sample)
    for uid in cohort.genuine:
        cohort.imposter.setdefault(uid, [])
    return cohort
