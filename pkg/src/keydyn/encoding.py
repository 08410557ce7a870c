"""Keystroke-to-image encoding and the baseline time-series-to-image encoders.

The marker encoder draws every keystroke of one PIN entry as an asterisk
marker on a single upscaled key: the standardized touch position places the
marker, and the remaining per-keystroke features (hold, force, and the timing
intervals of the transition into the keystroke), projected onto the leading
principal components, drive marker radius, opacity, and RGB color in order of
explained variance.  Genuine inputs cluster near the canvas center; imposter
inputs land and look elsewhere.

RP / GAF / MTF baselines encode the flat standardized vector as a generic
"time series" and render the resulting matrix as grayscale.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import DegeneratePcaError, InsufficientDataError
from .events import FeatureLayout, FeatureVector

DEFAULT_COVERAGE = 0.90

#: Per-keystroke non-position feature order used for the PCA attribute map.
NONPOSITION_COLUMNS = ("hold", "force", "DD", "UD", "UU", "DU")


def _half_up(v: float) -> int:
    # round-half-up keeps pixel placement platform-stable (no banker's rounding)
    return int(math.floor(v + 0.5))


@dataclass(frozen=True)
class CanvasConfig:
    """Fixed rendering configuration for one deployment."""

    height: int = 64
    width: int = 64
    coord_range: float = 3.0  # standardized units mapped to the canvas edge
    radius_range: tuple[float, float] = (2.0, 8.0)
    opacity_range: tuple[float, float] = (0.2, 1.0)


@dataclass(frozen=True)
class MarkerSpec:
    """One marker: standardized position plus PCA-derived appearance."""

    position: tuple[float, float]
    size: float
    opacity: float
    color: tuple[float, float, float]

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError(f"marker size must be > 0, got {self.size}")
        if not (0.0 <= self.opacity <= 1.0):
            raise ValueError(f"opacity {self.opacity} outside [0, 1]")
        if any(not (0.0 <= c <= 1.0) for c in self.color):
            raise ValueError(f"color {self.color} outside [0, 1]")


@dataclass(frozen=True)
class EncodedImage:
    """An 8-bit RGB raster; content is a pure function of input and config."""

    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        if pixels.ndim != 3 or pixels.shape[2] != 3 or pixels.dtype != np.uint8:
            raise ValueError(
                f"pixels must be H x W x 3 uint8, got {pixels.shape} {pixels.dtype}"
            )
        object.__setattr__(self, "pixels", pixels)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def to_png_bytes(self) -> bytes:
        buf = io.BytesIO()
        Image.fromarray(self.pixels, mode="RGB").save(buf, format="PNG")
        return buf.getvalue()

    def save_png(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_png_bytes())


def keystroke_slices(fv: FeatureVector) -> np.ndarray:
    """Per-keystroke non-position rows: [hold, force, DD, UD, UU, DU].

    The digraph columns hold the transition INTO the keystroke; the first
    keystroke has no incoming transition and gets zeros there.
    """
    layout = fv.layout
    v = fv.values
    rows = np.zeros((layout.pin_length, len(NONPOSITION_COLUMNS)), dtype=np.float64)
    for k in range(layout.pin_length):
        rows[k, 0] = v[layout.hold(k)]
        rows[k, 1] = v[layout.force(k)]
        if k > 0:
            j = k - 1
            rows[k, 2] = v[layout.dd(j)]
            rows[k, 3] = v[layout.ud(j)]
            rows[k, 4] = v[layout.uu(j)]
            rows[k, 5] = v[layout.du(j)]
    return rows


def positions(fv: FeatureVector) -> np.ndarray:
    """Standardized (x, y) per keystroke, shape (L, 2)."""
    layout = fv.layout
    out = np.empty((layout.pin_length, 2), dtype=np.float64)
    for k in range(layout.pin_length):
        out[k, 0] = fv.values[layout.x(k)]
        out[k, 1] = fv.values[layout.y(k)]
    return out


@dataclass(frozen=True)
class PcaAttributeMap:
    """Orthonormal component basis over non-position features, plus the
    training projection ranges used to min-max the attribute channels."""

    mean: np.ndarray
    components: np.ndarray      # (n_components, d), rows orthonormal
    eigenvalues: np.ndarray     # all d eigenvalues, descending
    n_components: int
    per_component_minmax: np.ndarray  # (n_components, 2)
    coverage: float = DEFAULT_COVERAGE

    @property
    def input_dim(self) -> int:
        return self.components.shape[1]

    def project(self, vec: np.ndarray) -> np.ndarray:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.input_dim,):
            raise ValueError(f"expected shape ({self.input_dim},), got {vec.shape}")
        return self.components @ (vec - self.mean)

    def normalized_projection(self, vec: np.ndarray) -> np.ndarray:
        """Projections min-max scaled to [0, 1] by training ranges, clipped."""
        proj = self.project(vec)
        lo = self.per_component_minmax[:, 0]
        hi = self.per_component_minmax[:, 1]
        span = hi - lo
        out = np.full(proj.shape, 0.5)
        ok = span > 0
        out[ok] = np.clip((proj[ok] - lo[ok]) / span[ok], 0.0, 1.0)
        return out

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "n_components": self.n_components,
            "per_component_minmax": self.per_component_minmax.tolist(),
            "coverage": self.coverage,
        }

    @staticmethod
    def from_dict(d: dict) -> "PcaAttributeMap":
        return PcaAttributeMap(
            mean=np.array(d["mean"]),
            components=np.array(d["components"]),
            eigenvalues=np.array(d["eigenvalues"]),
            n_components=d["n_components"],
            per_component_minmax=np.array(d["per_component_minmax"]),
            coverage=d["coverage"],
        )


def fit_pca(rows: np.ndarray, coverage: float = DEFAULT_COVERAGE) -> PcaAttributeMap:
    """Eigendecompose the population covariance of ``rows`` and keep the
    smallest component count whose cumulative explained variance reaches
    ``coverage``.

    Raises DegeneratePcaError when the covariance is identically zero.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise InsufficientDataError(
            f"need a 2-D matrix with at least 2 rows, got shape {rows.shape}"
        )
    mean = rows.mean(axis=0)
    centered = rows - mean
    cov = centered.T @ centered / rows.shape[0]
    total = float(np.trace(cov))
    if total <= 0.0:
        raise DegeneratePcaError("all training rows identical: zero covariance")

    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    basis = eigvecs[:, order].T  # rows are eigenvectors
    # sign convention: largest-magnitude entry of each component is positive
    for i in range(basis.shape[0]):
        pivot = int(np.argmax(np.abs(basis[i])))
        if basis[i, pivot] < 0:
            basis[i] = -basis[i]

    ratios = np.cumsum(eigvals) / eigvals.sum()
    n_components = int(np.searchsorted(ratios, coverage) + 1)
    n_components = min(n_components, len(eigvals))

    proj = centered @ basis[:n_components].T
    minmax = np.stack([proj.min(axis=0), proj.max(axis=0)], axis=1)
    return PcaAttributeMap(
        mean=mean,
        components=basis[:n_components],
        eigenvalues=eigvals,
        n_components=n_components,
        per_component_minmax=minmax,
        coverage=coverage,
    )


def map_attributes(
    pca_map: PcaAttributeMap | None,
    keystroke_nonpos: np.ndarray | None = None,
    config: CanvasConfig = CanvasConfig(),
) -> tuple[float, float, tuple[float, float, float]]:
    """Marker (size, opacity, color) from the PCA projection of one keystroke.

    The largest-variance component drives radius, the next opacity, the next
    three the RGB channels.  Components beyond the retained count fall back to
    the 0.5 midpoint; with no map at all (position-only encoding) every
    attribute takes its midpoint default.
    """
    attrs = np.full(5, 0.5)
    if pca_map is not None:
        norm = pca_map.normalized_projection(keystroke_nonpos)
        take = min(5, norm.shape[0])
        attrs[:take] = norm[:take]
    r_lo, r_hi = config.radius_range
    o_lo, o_hi = config.opacity_range
    size = r_lo + attrs[0] * (r_hi - r_lo)
    opacity = o_lo + attrs[1] * (o_hi - o_lo)
    color = (float(attrs[2]), float(attrs[3]), float(attrs[4]))
    return float(size), float(opacity), color


_RAY_ANGLES = tuple(m * math.pi / 3.0 for m in range(6))


def _marker_pixels(row: int, col: int, radius: float,
                   height: int, width: int) -> list[tuple[int, int]]:
    """Unique in-bounds pixels of a 6-ray asterisk, 1 px stroke, no AA."""
    pts = {(row, col)}
    steps = _half_up(radius)
    for theta in _RAY_ANGLES:
        dc, dr = math.cos(theta), math.sin(theta)
        for s in range(1, steps + 1):
            pts.add((row + _half_up(s * dr), col + _half_up(s * dc)))
    return [(r, c) for r, c in sorted(pts) if 0 <= r < height and 0 <= c < width]


def position_to_pixel(x: float, y: float, config: CanvasConfig) -> tuple[int, int]:
    """Map standardized coordinates (clipped to the coord range) to (row, col)."""
    r = config.coord_range
    cx = min(max(x, -r), r)
    cy = min(max(y, -r), r)
    col = _half_up((cx + r) / (2.0 * r) * (config.width - 1))
    row = _half_up((cy + r) / (2.0 * r) * (config.height - 1))
    return row, col


def marker_specs(
    fv: FeatureVector,
    pca_map: PcaAttributeMap | None = None,
    config: CanvasConfig = CanvasConfig(),
) -> list[MarkerSpec]:
    """One MarkerSpec per keystroke, in keystroke order."""
    pos = positions(fv)
    nonpos = keystroke_slices(fv)
    specs = []
    for k in range(fv.layout.pin_length):
        size, opacity, color = map_attributes(
            pca_map, nonpos[k] if pca_map is not None else None, config
        )
        specs.append(MarkerSpec(position=(pos[k, 0], pos[k, 1]), size=size,
                                opacity=opacity, color=color))
    return specs


def render(
    fv: FeatureVector,
    pca_map: PcaAttributeMap | None = None,
    config: CanvasConfig = CanvasConfig(),
) -> EncodedImage:
    """Draw all keystroke markers of one standardized vector on a black canvas.

    Markers are composited source-over in keystroke order; each marker's pixel
    set is composited once (rays overlap at the center).  Output is bit-stable
    for a fixed input and config.
    """
    canvas = np.zeros((config.height, config.width, 3), dtype=np.float64)
    for spec in marker_specs(fv, pca_map, config):
        row, col = position_to_pixel(spec.position[0], spec.position[1], config)
        color = np.array(spec.color, dtype=np.float64)
        for r, c in _marker_pixels(row, col, spec.size, config.height, config.width):
            canvas[r, c] = color * spec.opacity + canvas[r, c] * (1.0 - spec.opacity)
    return EncodedImage(pixels=np.rint(canvas * 255.0).astype(np.uint8))


# ---------------------------------------------------------------------------
# Baseline encoders.  Each exposes its matrix for direct verification plus an
# EncodedImage wrapper resampled to the canvas.
# ---------------------------------------------------------------------------

def recurrence_matrix(series: np.ndarray, threshold_quantile: float = 0.1) -> np.ndarray:
    """Binary n x n matrix: 1 where |s_i - s_j| is within the distance quantile.

    The threshold is the given quantile of all n^2 pairwise distances
    (self-distances included, so quantile 0 keeps only exact matches).
    """
    s = np.asarray(series, dtype=np.float64).ravel()
    if s.size < 2:
        raise ValueError(f"series must have length >= 2, got {s.size}")
    dist = np.abs(s[:, None] - s[None, :])
    theta = np.quantile(dist, threshold_quantile)
    return (dist <= theta).astype(np.float64)


def gaf_matrix(series: np.ndarray) -> np.ndarray:
    """Gramian angular summation field of the min-max rescaled series.

    A constant series rescales to all zeros (angle pi/2), giving a field of
    all -1.
    """
    s = np.asarray(series, dtype=np.float64).ravel()
    if s.size < 1:
        raise ValueError("series must be nonempty")
    lo, hi = s.min(), s.max()
    if hi == lo:
        scaled = np.zeros_like(s)
    else:
        scaled = 2.0 * (s - lo) / (hi - lo) - 1.0
    phi = np.arccos(np.clip(scaled, -1.0, 1.0))
    return np.cos(phi[:, None] + phi[None, :])


def mtf_matrix(series: np.ndarray, n_bins: int = 8) -> np.ndarray:
    """Markov transition field over quantile bins of the series.

    Bin transition probabilities are estimated from consecutive pairs; rows
    of the transition matrix with no outgoing observations stay all-zero.
    """
    s = np.asarray(series, dtype=np.float64).ravel()
    if s.size < 2:
        raise ValueError(f"series must have length >= 2, got {s.size}")
    if n_bins < 2:
        raise ValueError(f"n_bins must be >= 2, got {n_bins}")
    edges = np.quantile(s, np.arange(1, n_bins) / n_bins)
    bins = np.searchsorted(edges, s, side="right")
    counts = np.zeros((n_bins, n_bins), dtype=np.float64)
    for a, b in zip(bins[:-1], bins[1:]):
        counts[a, b] += 1.0
    row_sums = counts.sum(axis=1, keepdims=True)
    transition = np.divide(counts, row_sums, out=np.zeros_like(counts),
                           where=row_sums > 0)
    return transition[np.ix_(bins, bins)]


def _matrix_to_image(matrix: np.ndarray, low: float, high: float,
                     config: CanvasConfig) -> EncodedImage:
    """Grayscale-map a matrix from [low, high] and nearest-neighbor resample."""
    gray = np.rint((matrix - low) / (high - low) * 255.0).astype(np.uint8)
    n_r, n_c = gray.shape
    rows = (np.arange(config.height) * n_r) // config.height
    cols = (np.arange(config.width) * n_c) // config.width
    resized = gray[np.ix_(rows, cols)]
    return EncodedImage(pixels=np.repeat(resized[:, :, None], 3, axis=2))


def encode_rp(series: np.ndarray, threshold_quantile: float = 0.1,
              config: CanvasConfig = CanvasConfig()) -> EncodedImage:
    return _matrix_to_image(recurrence_matrix(series, threshold_quantile),
                            0.0, 1.0, config)


def encode_gaf(series: np.ndarray, config: CanvasConfig = CanvasConfig()) -> EncodedImage:
    return _matrix_to_image(gaf_matrix(series), -1.0, 1.0, config)


def encode_mtf(series: np.ndarray, n_bins: int = 8,
               config: CanvasConfig = CanvasConfig()) -> EncodedImage:
    return _matrix_to_image(mtf_matrix(series, n_bins), 0.0, 1.0, config)
