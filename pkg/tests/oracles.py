"""Independent reference implementations used to cross-check the package.

Everything here is written the slow, obvious way (explicit loops, textbook
algorithms) and deliberately avoids the vectorized code paths under test.
"""

from __future__ import annotations

import math

import numpy as np


# ---------------------------------------------------------------------------
# Feature extraction
# ---------------------------------------------------------------------------

def features_oracle(sample) -> dict[str, float]:
    """Name -> value map computed straight off the event list."""
    out: dict[str, float] = {}
    events = sample.events
    for k, ev in enumerate(events):
        out[f"hold_{k}"] = ev.release_time - ev.press_time
        out[f"x_{k}"] = ev.x
        out[f"y_{k}"] = ev.y
        out[f"force_{k}"] = ev.pressure * ev.area
    for j in range(len(events) - 1):
        a, b = events[j], events[j + 1]
        out[f"DD_{j}"] = b.press_time - a.press_time
        out[f"UD_{j}"] = b.press_time - a.release_time
        out[f"UU_{j}"] = b.release_time - a.release_time
        out[f"DU_{j}"] = b.release_time - a.press_time
    return out


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

def mean_std_oracle(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two-pass mean and population (N-denominator) standard deviation."""
    rows = np.asarray(rows, dtype=np.float64)
    n, d = rows.shape
    mean = np.zeros(d)
    for i in range(n):
        mean += rows[i]
    mean /= n
    var = np.zeros(d)
    for i in range(n):
        var += (rows[i] - mean) ** 2
    var /= n
    return mean, np.sqrt(var)


def weighted_buffer_oracle(window: np.ndarray) -> np.ndarray:
    """Literal weighted sum: older entries at 1/(2(B-1)) each, last at 1/2."""
    window = np.asarray(window, dtype=np.float64)
    b = window.shape[0]
    acc = np.zeros(window.shape[1])
    for i in range(b - 1):
        acc += window[i] / (2.0 * (b - 1))
    return acc + 0.5 * window[-1]


# ---------------------------------------------------------------------------
# Eigendecomposition: cyclic Jacobi for symmetric matrices
# ---------------------------------------------------------------------------

def jacobi_eigh(matrix: np.ndarray, tol: float = 1e-14,
                max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and eigenvectors (rows) of a symmetric matrix."""
    a = np.array(matrix, dtype=np.float64)
    n = a.shape[0]
    v = np.eye(n)
    for _ in range(max_sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off += a[p, q] ** 2
        if math.sqrt(2.0 * off) < tol * max(1.0, float(np.abs(np.diag(a)).max())):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = c
                rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                v = v @ rot
    eigvals = np.diag(a).copy()
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    vectors = v[:, order].T
    for i in range(vectors.shape[0]):
        pivot = int(np.argmax(np.abs(vectors[i])))
        if vectors[i, pivot] < 0:
            vectors[i] = -vectors[i]
    return eigvals, vectors


def coverage_k_oracle(eigenvalues: np.ndarray, coverage: float) -> int:
    """Smallest k whose cumulative explained-variance ratio reaches coverage."""
    vals = np.asarray(eigenvalues, dtype=np.float64)
    total = vals.sum()
    acc = 0.0
    for k in range(1, len(vals) + 1):
        acc += vals[k - 1]
        if acc / total >= coverage:
            return k
    return len(vals)


# ---------------------------------------------------------------------------
# Convolution and finite differences
# ---------------------------------------------------------------------------

def conv2d_oracle(x: np.ndarray, weight: np.ndarray, stride: int) -> np.ndarray:
    """Quadruple-loop valid convolution (cross-correlation), NCHW."""
    n, c, h, w = x.shape
    f, _, kh, kw = weight.shape
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1
    out = np.zeros((n, f, oh, ow))
    for img in range(n):
        for fo in range(f):
            for i in range(oh):
                for j in range(ow):
                    acc = 0.0
                    for ci in range(c):
                        for ki in range(kh):
                            for kj in range(kw):
                                acc += (x[img, ci, i * stride + ki, j * stride + kj]
                                        * weight[fo, ci, ki, kj])
                    out[img, fo, i, j] = acc
    return out


def numeric_gradient(fn, array: np.ndarray, indices, h: float = 1e-5) -> dict:
    """Central finite differences of scalar fn at the given flat indices."""
    flat = array.reshape(-1)
    grads = {}
    for idx in indices:
        orig = flat[idx]
        flat[idx] = orig + h
        up = fn()
        flat[idx] = orig - h
        down = fn()
        flat[idx] = orig
        grads[idx] = (up - down) / (2.0 * h)
    return grads


# ---------------------------------------------------------------------------
# Baseline encoder oracles
# ---------------------------------------------------------------------------

def quantile_oracle(values: np.ndarray, q: float) -> float:
    """Linear-interpolation quantile of a flat array, computed by hand."""
    s = np.sort(np.asarray(values, dtype=np.float64).ravel())
    pos = q * (s.size - 1)
    lo = int(math.floor(pos))
    hi = min(lo + 1, s.size - 1)
    frac = pos - lo
    return float(s[lo] * (1.0 - frac) + s[hi] * frac)


def rp_oracle(series: np.ndarray, threshold_quantile: float) -> np.ndarray:
    s = np.asarray(series, dtype=np.float64).ravel()
    n = s.size
    dists = [abs(s[i] - s[j]) for i in range(n) for j in range(n)]
    theta = quantile_oracle(np.array(dists), threshold_quantile)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = 1.0 if abs(s[i] - s[j]) <= theta else 0.0
    return out


def gaf_oracle(series: np.ndarray) -> np.ndarray:
    s = np.asarray(series, dtype=np.float64).ravel()
    lo, hi = s.min(), s.max()
    if hi == lo:
        scaled = np.zeros_like(s)
    else:
        scaled = 2.0 * (s - lo) / (hi - lo) - 1.0
    phi = np.arccos(np.clip(scaled, -1.0, 1.0))
    n = s.size
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = math.cos(phi[i] + phi[j])
    return out


def mtf_oracle(series: np.ndarray, n_bins: int) -> np.ndarray:
    s = np.asarray(series, dtype=np.float64).ravel()
    n = s.size
    edges = [quantile_oracle(s, k / n_bins) for k in range(1, n_bins)]
    bins = np.zeros(n, dtype=int)
    for i in range(n):
        b = 0
        for e in edges:
            if s[i] >= e:
                b += 1
        bins[i] = b
    counts = np.zeros((n_bins, n_bins))
    for i in range(n - 1):
        counts[bins[i], bins[i + 1]] += 1.0
    trans = np.zeros_like(counts)
    for r in range(n_bins):
        row_sum = counts[r].sum()
        if row_sum > 0:
            trans[r] = counts[r] / row_sum
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = trans[bins[i], bins[j]]
    return out


# ---------------------------------------------------------------------------
# Equal error rate
# ---------------------------------------------------------------------------

def _far_frr(gen: np.ndarray, imp: np.ndarray, t: float) -> tuple[float, float]:
    far = sum(1 for s in imp if s <= t) / len(imp)
    frr = sum(1 for s in gen if s > t) / len(gen)
    return far, frr


def eer_oracle(genuine: np.ndarray, imposter: np.ndarray,
               refine_iters: int = 200) -> tuple[float, float]:
    """Exhaustive sweep over observed scores plus bisection on |FAR - FRR|.

    FAR - FRR is a non-decreasing step function of the threshold; the oracle
    brackets its sign change and bisects, evaluating the piecewise-linear
    interpolant between the bracketing candidate points.
    """
    gen = np.asarray(genuine, dtype=np.float64)
    imp = np.asarray(imposter, dtype=np.float64)
    candidates = sorted(set(gen.tolist()) | set(imp.tolist()))
    candidates = [candidates[0] - 1.0] + candidates
    diffs = []
    for t in candidates:
        far, frr = _far_frr(gen, imp, t)
        diffs.append(far - frr)
    # first candidate with FAR >= FRR closes the bracket
    hi_idx = next(i for i, d in enumerate(diffs) if d >= 0.0)
    if diffs[hi_idx] == 0.0:
        far, frr = _far_frr(gen, imp, candidates[hi_idx])
        return far, candidates[hi_idx]
    lo_idx = hi_idx - 1
    t_lo, t_hi = candidates[lo_idx], candidates[hi_idx]
    far_lo, frr_lo = _far_frr(gen, imp, t_lo)
    far_hi, frr_hi = _far_frr(gen, imp, t_hi)

    # bisection in the interpolation parameter u over [0, 1]
    def interp(u):
        far = far_lo + u * (far_hi - far_lo)
        frr = frr_lo + u * (frr_hi - frr_lo)
        return far, frr

    lo_u, hi_u = 0.0, 1.0
    for _ in range(refine_iters):
        mid = 0.5 * (lo_u + hi_u)
        far, frr = interp(mid)
        if far - frr < 0.0:
            lo_u = mid
        else:
            hi_u = mid
    u = 0.5 * (lo_u + hi_u)
    far, frr = interp(u)
    return 0.5 * (far + frr), t_lo + u * (t_hi - t_lo)
