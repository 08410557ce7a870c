from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from keydyn.events import KeyEvent, KeystrokeSample
from keydyn.synthdata import generate_cohort


def make_sample(n_keys: int = 10, seed: int = 0, user: str = "alice",
                label: str = "genuine") -> KeystrokeSample:
    rng = np.random.default_rng(seed)
    events = []
    t = 100.0
    keys = [str(rng.integers(0, 10)) for _ in range(n_keys - 1)] + ["ENTER"]
    for key in keys:
        hold = 60.0 + 40.0 * rng.random()
        events.append(KeyEvent(
            key_id=key,
            press_time=t,
            release_time=t + hold,
            x=float(rng.random()),
            y=float(rng.random()),
            pressure=0.3 + 0.4 * rng.random(),
            area=0.2 + 0.3 * rng.random(),
        ))
        t += hold + 120.0 + 80.0 * rng.random()
    return KeystrokeSample(user_id=user, session_id="s0", events=tuple(events), label=label)


@pytest.fixture
def sample():
    return make_sample()


@pytest.fixture
def rows():
    rng = np.random.default_rng(7)
    return rng.normal(size=(30, 76)) * rng.uniform(0.5, 3.0, size=76) + rng.normal(size=76)


@pytest.fixture(scope="session")
def small_cohort():
    return generate_cohort(
        n_users=3,
        genuine_per_user=40,
        imposter_per_user=12,
        pin_length=10,
        separation=2.0,
        seed=11,
    )
