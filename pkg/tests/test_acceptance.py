"""Release gate: one test per promised behavior.

Each test here states a measurable claim about the package (oracle
equivalence, directional cohort results, runtime budgets, service
behavior) and fails loudly when the claim stops holding.  The cohort
tests share module-scoped fixtures because training is the expensive
part; everything is seeded, so reruns are bit-stable.
"""

from __future__ import annotations

import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from fastapi.testclient import TestClient

from keydyn.encoding import fit_pca, gaf_matrix, mtf_matrix, recurrence_matrix
from keydyn.evaluation import compute_eer, run_experiment
from keydyn.events import sample_to_dict
from keydyn.neural import AutoencoderModel, LeakyReLU, SvddNetwork
from keydyn.preprocess import weighted_merge
from keydyn.service import EnrollmentStore, ServiceConfig, create_app
from keydyn.synthdata import generate_cohort
from oracles import (
    coverage_k_oracle,
    eer_oracle,
    gaf_oracle,
    jacobi_eigh,
    mtf_oracle,
    numeric_gradient,
    rp_oracle,
    weighted_buffer_oracle,
)

# ---------------------------------------------------------------------------
# Numerical core against independent oracles
# ---------------------------------------------------------------------------

def _kink_free_indices(arr: np.ndarray, masks_fn, rng, count: int,
                       h: float = 1e-5) -> list[int]:
    """Sample weight indices whose +-h window keeps every activation sign
    fixed.  Two-sided differences are only valid there; across a sign flip
    the piecewise-linear activations make the window non-smooth."""
    chosen: list[int] = []
    for i in rng.permutation(arr.size):
        orig = arr.flat[i]
        arr.flat[i] = orig + h
        plus = masks_fn()
        arr.flat[i] = orig - h
        minus = masks_fn()
        arr.flat[i] = orig
        if all(np.array_equal(p, m) for p, m in zip(plus, minus)):
            chosen.append(int(i))
            if len(chosen) == count:
                return chosen
    raise AssertionError(f"found only {len(chosen)} usable weights")


def test_gradients_match_finite_differences_within_a_minute():
    """Both trainable models: 20 sampled weights per parameter array agree
    with central finite differences (h=1e-5) to relative error < 1e-4,
    and the whole check stays under one minute."""
    started = time.monotonic()
    rng = np.random.default_rng(3)

    net = SvddNetwork(seed=3)
    batch = rng.uniform(0.0, 1.0, size=(2, 3, 64, 64))
    center = rng.normal(size=64)
    lam = 1e-6

    def svdd_loss():
        emb = net.forward(batch)
        diff = emb - center
        return float(np.sum(diff * diff) / batch.shape[0]
                     + lam * net.frobenius_penalty())

    def svdd_masks():
        net.forward(batch)
        return [net.act1._mask.copy(), net.act2._mask.copy()]

    emb = net.forward(batch)
    net.backward(2.0 * (emb - center) / batch.shape[0])
    params = [p for _, p in net.parameters()]
    analytic = [g + 2.0 * lam * p for g, p in zip(net.gradients(), params)]
    for name_param, grad in zip(net.parameters(), analytic):
        name, arr = name_param
        idx = _kink_free_indices(arr, svdd_masks, rng, min(20, arr.size))
        flat = grad.reshape(-1)
        for i, ref in numeric_gradient(svdd_loss, arr, idx).items():
            denom = max(abs(flat[i]), abs(ref), 1e-6)
            assert abs(flat[i] - ref) / denom < 1e-4, f"svdd {name}[{i}]"

    ae = AutoencoderModel(input_dim=76, seed=3)
    vectors = rng.normal(size=(6, 76))
    ae_acts = [layer for layer in ae.layers if isinstance(layer, LeakyReLU)]

    def ae_loss():
        err = ae.forward(vectors) - vectors
        return float(np.mean(err * err))

    def ae_masks():
        ae.forward(vectors)
        return [act._mask.copy() for act in ae_acts]

    err = ae.forward(vectors) - vectors
    ae.backward(2.0 * err / err.size)
    for (name, arr), grad in zip(ae.parameters(), ae.gradients()):
        idx = _kink_free_indices(arr, ae_masks, rng, min(20, arr.size))
        flat = grad.reshape(-1)
        for i, ref in numeric_gradient(ae_loss, arr, idx).items():
            denom = max(abs(flat[i]), abs(ref), 1e-6)
            assert abs(flat[i] - ref) / denom < 1e-4, f"ae {name}[{i}]"

    assert time.monotonic() - started < 60.0


def test_weighted_merge_matches_explicit_oracle():
    """1,000 random (capacity, window) cases agree with the literal
    weighted sum to 1e-12."""
    rng = np.random.default_rng(11)
    for _ in range(1000):
        b = int(rng.integers(2, 9))
        dim = int(rng.integers(1, 81))
        window = rng.normal(scale=rng.uniform(0.1, 50.0), size=(b, dim))
        merged = weighted_merge(window[:-1], window[-1])
        np.testing.assert_allclose(merged, weighted_buffer_oracle(window),
                                   atol=1e-12, rtol=0)


def test_pca_matches_jacobi_oracle():
    """100 random 6-dim covariances: eigenvalues and sign-normalized
    eigenvectors agree with a cyclic Jacobi solver to 1e-8; the coverage
    component count matches the cumulative-sum oracle exactly."""
    rng = np.random.default_rng(13)
    for _ in range(100):
        mixing = rng.normal(size=(6, 6)) * rng.uniform(0.2, 5.0, size=6)
        rows = rng.normal(size=(30, 6)) @ mixing + rng.normal(size=6)
        model = fit_pca(rows, coverage=1.0)

        centered = rows - rows.mean(axis=0)
        cov = centered.T @ centered / rows.shape[0]
        ref_vals, ref_vecs = jacobi_eigh(cov)
        np.testing.assert_allclose(model.eigenvalues, ref_vals, atol=1e-8)
        np.testing.assert_allclose(model.components, ref_vecs, atol=1e-8)

        coverage = float(rng.uniform(0.5, 0.999))
        assert (fit_pca(rows, coverage=coverage).n_components
                == coverage_k_oracle(ref_vals, coverage))


def test_eer_matches_sweep_and_bisection_oracle():
    """100 random score sets: EER agrees with an exhaustive threshold sweep
    plus bisection refinement to 1e-9."""
    rng = np.random.default_rng(29)
    for trial in range(100):
        n_gen = int(rng.integers(5, 200))
        n_imp = int(rng.integers(5, 200))
        shift = float(rng.uniform(-0.5, 3.0))
        genuine = rng.normal(0.0, 1.0, size=n_gen)
        imposter = rng.normal(shift, rng.uniform(0.5, 2.0), size=n_imp)
        if trial % 3 == 0:   # force ties
            genuine = np.round(genuine, 1)
            imposter = np.round(imposter, 1)
        eer, threshold = compute_eer(genuine, imposter)
        ref_eer, ref_thr = eer_oracle(genuine, imposter)
        assert abs(eer - ref_eer) <= 1e-9, f"trial {trial}"
        assert abs(threshold - ref_thr) <= 1e-7, f"trial {trial}"


def test_series_encoders_match_reference_oracles():
    """50 random series per encoder, bit-exact against double-loop oracles,
    plus the structural properties each image must satisfy."""
    rng = np.random.default_rng(31)
    for _ in range(50):
        n = int(rng.integers(10, 77))
        series = rng.normal(size=n) * rng.uniform(0.5, 20.0) + rng.normal()

        q = float(rng.choice([0.05, 0.1, 0.25, 0.5]))
        rp = recurrence_matrix(series, q)
        np.testing.assert_array_equal(rp, rp_oracle(series, q))
        np.testing.assert_array_equal(np.diag(rp), np.ones(n))

        gaf = gaf_matrix(series)
        np.testing.assert_array_equal(gaf, gaf_oracle(series))
        np.testing.assert_array_equal(gaf, gaf.T)

        mtf = mtf_matrix(series, n_bins=8)
        np.testing.assert_array_equal(mtf, mtf_oracle(series, 8))
        assert mtf.min() >= 0.0 and mtf.max() <= 1.0


# ---------------------------------------------------------------------------
# End-to-end determinism
# ---------------------------------------------------------------------------

def _run_chain(workdir: Path) -> dict[str, bytes]:
    """synth -> eval in fresh subprocesses; returns produced file bytes."""
    workdir.mkdir()
    cohort_path = workdir / "cohort.jsonl"
    subprocess.run(
        [sys.executable, "-m", "keydyn.cli", "synth", "--users", "2",
         "--per-session", "28", "--imposters", "16", "--separation", "3.0",
         "--seed", "9", "--out", str(cohort_path)],
        check=True, capture_output=True)

    config = workdir / "eval.toml"
    config.write_text(
        "[cohort]\n"
        'source = "jsonl"\n'
        f'path = "{cohort_path}"\n'
        "train = 12\nval = 8\ntest = 8\n"
        "imposters_val = 8\nimposters_test = 8\nseed = 9\n"
        "[pipeline]\naugment = 60\n"
        '[detector]\nkind = "svdd"\nepochs = 6\nbatch_size = 16\n'
    )
    csv_path = workdir / "report.csv"
    json_path = workdir / "report.json"
    subprocess.run(
        [sys.executable, "-m", "keydyn.cli", "eval", "--config", str(config),
         "--csv", str(csv_path), "--json", str(json_path)],
        check=True, capture_output=True)
    return {
        "cohort": cohort_path.read_bytes(),
        "csv": csv_path.read_bytes(),
        "json": json_path.read_bytes(),
    }


def test_fixed_seed_chain_reproduces_report_bytes(tmp_path):
    """Two independent synth -> train -> eval executions write identical
    cohort and report files."""
    first = _run_chain(tmp_path / "a")
    second = _run_chain(tmp_path / "b")
    assert first["cohort"] == second["cohort"]
    assert first["csv"] == second["csv"]
    assert first["json"] == second["json"]
    report = json.loads(first["json"])
    assert [row["user"] for row in report["users"]] == ["user00", "user01"]


# ---------------------------------------------------------------------------
# Directional cohort results
# ---------------------------------------------------------------------------

SWEEP_COHORT = {"users": 6, "train": 300, "val": 100, "test": 100,
                "separation": 2.0, "seed": 5}
# 8 epochs on 400 augmented windows: past saturation the position-only
# encoder catches up and the attribute comparison stops discriminating
SWEEP_DETECTOR = {"kind": "svdd", "epochs": 8, "batch_size": 64, "seed": 0}
SWEEP_AUGMENT = 400


def _mean_eer(cohort: dict, pipeline: dict, detector: dict) -> float:
    report = run_experiment(
        {"cohort": cohort, "pipeline": pipeline, "detector": detector})
    assert not report.failures, report.failures
    return report.mean_eer()


@pytest.fixture(scope="module")
def sweep():
    """Mean test EER per encoder on the separated six-user cohort, plus the
    two normalization presets on the same cohort with outliers injected."""
    started = time.monotonic()
    eers: dict[str, float] = {}
    for encoder in ("ours-pca", "ours-xy", "rp", "gaf", "mtf"):
        eers[encoder] = _mean_eer(
            dict(SWEEP_COHORT), {"augment": SWEEP_AUGMENT, "encoder": encoder},
            dict(SWEEP_DETECTOR))
    outlier_cohort = dict(SWEEP_COHORT, outlier_rate=0.1)
    for preset in ("standardize", "minmax"):
        eers[preset] = _mean_eer(
            outlier_cohort,
            {"augment": SWEEP_AUGMENT, "encoder": "ours-pca",
             "normalization": preset},
            dict(SWEEP_DETECTOR))
    eers["elapsed"] = time.monotonic() - started
    return eers


def test_separated_cohort_reaches_target_eer(sweep):
    """Marker encoding with PCA attributes plus the one-class conv detector
    averages test EER <= 0.15 over six separated users, within the half-hour
    compute budget."""
    assert sweep["ours-pca"] <= 0.15, sweep
    assert sweep["elapsed"] < 1800.0, sweep


def test_marker_encoding_beats_series_image_baselines(sweep):
    assert sweep["ours-pca"] < sweep["rp"], sweep
    assert sweep["ours-pca"] < sweep["gaf"], sweep
    assert sweep["ours-pca"] < sweep["mtf"], sweep


def test_standardize_no_worse_than_minmax_under_outliers(sweep):
    assert sweep["standardize"] <= sweep["minmax"], sweep


def test_pca_attributes_no_worse_than_bare_positions(sweep):
    assert sweep["ours-pca"] <= sweep["ours-xy"], sweep


def test_zero_separation_cohort_scores_at_chance():
    """With no behavioral separation every detector/encoder pairing lands at
    EER 0.5 within +-0.05: nothing in the pipeline manufactures signal."""
    cohort = {"users": 3, "train": 60, "val": 200, "test": 200,
              "separation": 0.0, "seed": 17}
    detectors = {
        "svdd": {"kind": "svdd", "epochs": 8, "batch_size": 32, "seed": 0},
        "autoencoder": {"kind": "autoencoder", "epochs": 30,
                        "batch_size": 32, "seed": 0},
    }
    for det_name, detector in detectors.items():
        for encoder in ("ours-pca", "ours-xy", "rp", "gaf", "mtf"):
            mean = _mean_eer(dict(cohort),
                             {"augment": 160, "encoder": encoder},
                             dict(detector))
            assert abs(mean - 0.5) <= 0.05, (det_name, encoder, mean)


@pytest.fixture(scope="module")
def ablation_eers():
    """EER with and without a feature group, on cohorts where only that
    group separates users."""
    out = {}
    for signal_group, ablation in (("location", "-location"),
                                   ("timing", "-timing")):
        overrides = {g: 0.0 for g in ("location", "timing", "force")
                     if g != signal_group}
        cohort = {"users": 4, "train": 50, "val": 40, "test": 60,
                  "separation": 5.0, "separation_overrides": overrides,
                  "seed": 23}
        detector = {"kind": "autoencoder", "epochs": 60, "batch_size": 32,
                    "seed": 0}
        for mode in ("full", ablation):
            out[(signal_group, mode)] = _mean_eer(
                dict(cohort), {"augment": 120, "ablation": mode},
                dict(detector))
    return out


def test_removing_location_hurts_when_location_carries_signal(ablation_eers):
    full = ablation_eers[("location", "full")]
    without = ablation_eers[("location", "-location")]
    assert without - full >= 0.05, ablation_eers


def test_removing_timing_hurts_when_timing_carries_signal(ablation_eers):
    full = ablation_eers[("timing", "full")]
    without = ablation_eers[("timing", "-timing")]
    assert without - full >= 0.05, ablation_eers


# ---------------------------------------------------------------------------
# Service contract
# ---------------------------------------------------------------------------

def test_service_enroll_train_authenticate_contract(tmp_path):
    """Enroll 60 samples, train, then authenticate 100 genuine and 100
    foreign attempts: training reports a validation EER, at least 90% of
    each class gets the right verdict, and the audit log holds exactly one
    authenticate row per call."""
    cohort = generate_cohort(n_users=2, genuine_per_user=160,
                             imposter_per_user=100, pin_length=10,
                             separation=5.0, seed=41)
    config = ServiceConfig(min_samples=50, augment=240, epochs=10,
                           batch_size=32, seed=1)
    app = create_app(tmp_path / "store", config=config)
    with TestClient(app) as client:
        # second enrolled user supplies real cross-user negatives for
        # threshold calibration
        for name, source in (("alice", "user00"), ("bob", "user01")):
            body = {"samples": [sample_to_dict(s)
                                for s in cohort.genuine[source][:60]]}
            resp = client.post(f"/api/v1/users/{name}/samples", json=body)
            assert resp.status_code == 200
            assert resp.json()["sample_count"] == 60

        resp = client.post("/api/v1/users/alice/train")
        assert resp.status_code == 200, resp.text
        summary = resp.json()
        assert 0.0 <= summary["val_eer"] <= 1.0

        accepts = rejects = calls = 0
        for sample in cohort.genuine["user00"][60:160]:
            resp = client.post("/api/v1/users/alice/authenticate",
                               json=sample_to_dict(sample))
            assert resp.status_code == 200
            calls += 1
            accepts += resp.json()["verdict"] == "accept"
        for sample in cohort.imposter["user00"][:100]:
            resp = client.post("/api/v1/users/alice/authenticate",
                               json=sample_to_dict(sample))
            assert resp.status_code == 200
            calls += 1
            rejects += resp.json()["verdict"] == "reject"

        assert accepts >= 90, f"only {accepts}/100 genuine accepted"
        assert rejects >= 90, f"only {rejects}/100 foreign rejected"

        store: EnrollmentStore = client.app.state.store
        audit = [r for r in store.read_audit() if r["action"] == "authenticate"]
        assert len(audit) == calls
