"""Lightweight per-configuration gaze estimators.

Two families so hardware-trend conclusions can be cross-checked: an
appearance-based ridge regressor on downsampled pixels, and an interpretable
geometric baseline mapping pupil-centroid (optionally pupil-glint) features
through a quadratic polynomial. Frames an estimator cannot process score the
180 degree penalty so harder configurations cannot look better by failing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.ndimage

from .core import QuantizedImage, angular_error, gaze_to_pitch_yaw, percentile, pitch_yaw_to_gaze
from .errors import (
    ContaminatedSplitError,
    DegeneratePredictionError,
    EstimationError,
    IllConditionedFitError,
    NoPupilError,
    ValidationError,
)

DEFAULT_GRID = (30, 40)
DEFAULT_LAMBDA = 10.0
DEFAULT_DARK_THRESHOLD = 0.05
_GLINT_CODE = 250
_CONNECT8 = np.ones((3, 3), dtype=int)


def _block_means(values: np.ndarray, grid: tuple[int, int]) -> np.ndarray:
    """Box-average downsample to grid (h, w), returned flat as float64."""
    h, w = grid
    height, width = values.shape
    if height < h or width < w:
        raise ValidationError("image smaller than the feature grid")
    v = values.astype(np.float64)
    if height % h == 0 and width % w == 0:
        return v.reshape(h, height // h, w, width // w).mean(axis=(1, 3)).ravel()
    redges = (np.arange(h) * height) // h
    cedges = (np.arange(w) * width) // w
    rows = np.add.reduceat(v, redges, axis=0)
    cells = np.add.reduceat(rows, cedges, axis=1)
    rcount = np.diff(np.append(redges, height)).astype(np.float64)
    ccount = np.diff(np.append(cedges, width)).astype(np.float64)
    return (cells / (rcount[:, None] * ccount[None, :])).ravel()


def featurize_raw(img: QuantizedImage, grid: tuple[int, int] = DEFAULT_GRID) -> np.ndarray:
    """Pre-standardization features: block means scaled to [0, 1]."""
    return _block_means(img.values, grid) / 255.0


def featurize(img: QuantizedImage, grid: tuple[int, int] = DEFAULT_GRID,
              mean: np.ndarray | None = None,
              std: np.ndarray | None = None) -> np.ndarray:
    """Feature vector with bias: standardized block means plus trailing 1.

    Before train stats exist the standardization is the identity transform.
    """
    raw = featurize_raw(img, grid)
    if mean is not None:
        raw = (raw - mean) / std
    return np.append(raw, 1.0)


def fit_ridge(features: np.ndarray, gazes: np.ndarray, lam: float) -> np.ndarray:
    """Closed-form ridge solve; the trailing bias column is unpenalized.

    Returns the (D+1, 3) weight matrix. A singular system at lam == 0 raises
    IllConditionedFitError.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(gazes, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValidationError("features and gazes must be matching 2-D arrays")
    if x.shape[0] < 2:
        raise ValidationError("need at least 2 rows to fit")
    if lam < 0:
        raise ValidationError("lambda must be >= 0")
    a = x.T @ x
    d = x.shape[1] - 1
    a[np.arange(d), np.arange(d)] += lam
    b = x.T @ y
    try:
        w = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedFitError(
            "ill-conditioned fit: normal matrix singular; use lambda > 0"
        ) from exc
    if not np.isfinite(w).all():
        raise IllConditionedFitError("ill-conditioned fit: non-finite weights")
    return w


@dataclass
class RidgeGazeModel:
    """Appearance-based linear gaze model on standardized block-mean features."""

    weights: np.ndarray                  # (D+1, 3), bias row last
    feature_height: int = DEFAULT_GRID[0]
    feature_width: int = DEFAULT_GRID[1]
    lam: float = DEFAULT_LAMBDA
    train_feature_mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    train_feature_std: np.ndarray = field(default_factory=lambda: np.zeros(0))
    train_identity_ids: frozenset = frozenset()

    @property
    def grid(self) -> tuple[int, int]:
        return (self.feature_height, self.feature_width)

    def predict_from_raw(self, raw: np.ndarray) -> np.ndarray:
        f = (raw - self.train_feature_mean) / self.train_feature_std
        out = np.append(f, 1.0) @ self.weights
        norm = float(np.linalg.norm(out))
        if norm < 1e-9:
            raise DegeneratePredictionError("degenerate zero-length prediction")
        return out / norm

    def predict(self, img: QuantizedImage) -> np.ndarray:
        return self.predict_from_raw(featurize_raw(img, self.grid))

    def to_dict(self) -> dict:
        return {
            "kind": "ridge",
            "weights": self.weights.tolist(),
            "feature_height": self.feature_height,
            "feature_width": self.feature_width,
            "lambda": self.lam,
            "train_feature_mean": self.train_feature_mean.tolist(),
            "train_feature_std": self.train_feature_std.tolist(),
            "train_identity_ids": sorted(self.train_identity_ids),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RidgeGazeModel":
        return cls(
            weights=np.array(d["weights"], dtype=np.float64),
            feature_height=d["feature_height"],
            feature_width=d["feature_width"],
            lam=d["lambda"],
            train_feature_mean=np.array(d["train_feature_mean"], dtype=np.float64),
            train_feature_std=np.array(d["train_feature_std"], dtype=np.float64),
            train_identity_ids=frozenset(d["train_identity_ids"]),
        )


def train_ridge(raw_features: np.ndarray, gazes: np.ndarray, identity_ids,
                grid: tuple[int, int] = DEFAULT_GRID,
                lam: float = DEFAULT_LAMBDA) -> RidgeGazeModel:
    """Standardize raw features on the training set and solve the ridge system.

    Constant (zero-variance) features are kept with unit std; centering sends
    them to exact zero so any lam > 0 zeroes their weights.
    """
    raw = np.asarray(raw_features, dtype=np.float64)
    mean = raw.mean(axis=0)
    std = raw.std(axis=0)
    std = np.where(std > 0.0, std, 1.0)
    x = np.empty((raw.shape[0], raw.shape[1] + 1), dtype=np.float64)
    x[:, :-1] = (raw - mean) / std
    x[:, -1] = 1.0
    weights = fit_ridge(x, gazes, lam)
    return RidgeGazeModel(
        weights=weights,
        feature_height=grid[0],
        feature_width=grid[1],
        lam=lam,
        train_feature_mean=mean,
        train_feature_std=std,
        train_identity_ids=frozenset(identity_ids),
    )


def pupil_centroid(img: QuantizedImage,
                   dark_threshold: float = DEFAULT_DARK_THRESHOLD) -> np.ndarray:
    """Centroid (x, y) of the largest dark connected component.

    Thresholds at the given intensity quantile; raises NoPupilError when no
    meaningful dark region exists (constant or fully saturated images).
    """
    if not 0.0 < dark_threshold < 1.0:
        raise ValidationError("dark_threshold must be in (0, 1)")
    v = img.values
    vmax = int(v.max())
    if vmax == int(v.min()):
        raise NoPupilError("no pupil found: constant image")
    thr = int(np.percentile(v, dark_threshold * 100.0, method="lower"))
    if thr >= vmax:
        raise NoPupilError("no pupil found: no dark region below the quantile")
    mask = v <= thr
    labels, count = scipy.ndimage.label(mask, structure=_CONNECT8)
    if count == 0:
        raise NoPupilError("no pupil found")
    sizes = scipy.ndimage.sum_labels(mask, labels, index=np.arange(1, count + 1))
    best = int(np.argmax(sizes)) + 1
    ys, xs = np.nonzero(labels == best)
    return np.array([xs.mean(), ys.mean()])


def _glint_centroid(img: QuantizedImage) -> np.ndarray | None:
    """Centroid of the largest near-saturated blob, or None."""
    mask = img.values >= _GLINT_CODE
    if not mask.any():
        return None
    labels, count = scipy.ndimage.label(mask, structure=_CONNECT8)
    sizes = scipy.ndimage.sum_labels(mask, labels, index=np.arange(1, count + 1))
    best = int(np.argmax(sizes)) + 1
    ys, xs = np.nonzero(labels == best)
    return np.array([xs.mean(), ys.mean()])


def geometric_features(img: QuantizedImage, use_glints: bool = False,
                       dark_threshold: float = DEFAULT_DARK_THRESHOLD) -> np.ndarray:
    """(x, y) pupil centroid, plus pupil-glint offset when enabled.

    A missing glint falls back to a zero offset rather than failing the frame.
    """
    c = pupil_centroid(img, dark_threshold)
    if not use_glints:
        return c
    g = _glint_centroid(img)
    if g is None:
        return np.concatenate([c, np.zeros(2)])
    return np.concatenate([c, c - g])


def _poly_terms(xy: np.ndarray) -> np.ndarray:
    x = xy[:, 0]
    y = xy[:, 1]
    return np.stack([np.ones_like(x), x, y, x * x, x * y, y * y], axis=1)


@dataclass
class GeometricGazeModel:
    """Quadratic map from pupil(-glint) image features to (pitch, yaw)."""

    coefficients: np.ndarray            # (n_terms, 2)
    use_glints: bool = False
    dark_threshold: float = DEFAULT_DARK_THRESHOLD
    image_width: int = 320
    image_height: int = 240
    degree: int = 2
    train_identity_ids: frozenset = frozenset()

    def _design_row(self, feats: np.ndarray) -> np.ndarray:
        return _geo_design(feats[None, :], self.image_width, self.image_height)[0]

    def predict(self, img: QuantizedImage) -> np.ndarray:
        feats = geometric_features(img, self.use_glints, self.dark_threshold)
        return self.predict_from_features(feats)

    def predict_from_features(self, feats: np.ndarray) -> np.ndarray:
        row = self._design_row(np.asarray(feats, dtype=np.float64))
        pitch, yaw = row @ self.coefficients
        if not (math.isfinite(pitch) and math.isfinite(yaw)):
            raise DegeneratePredictionError("non-finite geometric prediction")
        return pitch_yaw_to_gaze(pitch, yaw)

    def to_dict(self) -> dict:
        return {
            "kind": "geometric",
            "coefficients": self.coefficients.tolist(),
            "use_glints": self.use_glints,
            "dark_threshold": self.dark_threshold,
            "image_width": self.image_width,
            "image_height": self.image_height,
            "degree": self.degree,
            "train_identity_ids": sorted(self.train_identity_ids),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GeometricGazeModel":
        return cls(
            coefficients=np.array(d["coefficients"], dtype=np.float64),
            use_glints=d["use_glints"],
            dark_threshold=d["dark_threshold"],
            image_width=d["image_width"],
            image_height=d["image_height"],
            degree=d.get("degree", 2),
            train_identity_ids=frozenset(d["train_identity_ids"]),
        )


def _geo_design(feats: np.ndarray, width: int, height: int) -> np.ndarray:
    """Design matrix: quadratic monomials per (x, y) feature pair.

    Pixel coordinates are mapped to [-1, 1] for conditioning.
    """
    f = np.asarray(feats, dtype=np.float64)
    sx = 2.0 / width
    sy = 2.0 / height
    norm = f.copy()
    norm[:, 0] = f[:, 0] * sx - 1.0
    norm[:, 1] = f[:, 1] * sy - 1.0
    blocks = [_poly_terms(norm[:, 0:2])]
    if f.shape[1] == 4:
        norm[:, 2] = f[:, 2] * sx
        norm[:, 3] = f[:, 3] * sy
        blocks.append(_poly_terms(norm[:, 2:4]))
    return np.hstack(blocks)


def fit_geometric(feats: np.ndarray, pitch_yaw: np.ndarray, identity_ids=(),
                  use_glints: bool = False,
                  dark_threshold: float = DEFAULT_DARK_THRESHOLD,
                  image_width: int = 320, image_height: int = 240) -> GeometricGazeModel:
    """Least-squares quadratic regression per output channel."""
    f = np.asarray(feats, dtype=np.float64)
    y = np.asarray(pitch_yaw, dtype=np.float64)
    if f.shape[0] != y.shape[0]:
        raise ValidationError("feature and label counts differ")
    if f.shape[0] < 12:
        raise ValidationError("need at least 12 frames to fit the geometric model")
    a = _geo_design(f, image_width, image_height)
    coeffs, _, rank, _ = np.linalg.lstsq(a, y, rcond=None)
    # the two glint-block designs share a constant term, costing one rank
    expected = 11 if f.shape[1] == 4 else 6
    if rank < expected:
        raise IllConditionedFitError(
            f"ill-conditioned fit: design rank {rank} < {expected}"
        )
    return GeometricGazeModel(
        coefficients=coeffs,
        use_glints=use_glints,
        dark_threshold=dark_threshold,
        image_width=image_width,
        image_height=image_height,
        train_identity_ids=frozenset(identity_ids),
    )


@dataclass
class EvalResult:
    """Per-frame angular errors and their percentile summary for one trial."""

    errors: np.ndarray
    p50: float
    p75: float
    p95: float
    trial_id: int
    n_frames: int
    n_failures: int

    @classmethod
    def from_errors(cls, errors, trial_id: int, n_failures: int) -> "EvalResult":
        e = np.asarray(errors, dtype=np.float64)
        return cls(
            errors=e,
            p50=percentile(e, 50),
            p75=percentile(e, 75),
            p95=percentile(e, 95),
            trial_id=trial_id,
            n_frames=e.size,
            n_failures=n_failures,
        )


FAILURE_PENALTY_DEG = 180.0


def evaluate(model, frames, trial_id: int = 0) -> EvalResult:
    """Score a model on labelled test frames; estimator failures count 180 deg.

    Refuses any overlap between the model's training identities and the test
    identities (unseen-identity protocol).
    """
    frames = list(frames)
    if not frames:
        raise ValidationError("evaluate needs a non-empty test set")
    test_ids = {sample.identity_id for _, sample in frames}
    overlap = test_ids & set(model.train_identity_ids)
    if overlap:
        raise ContaminatedSplitError(f"contaminated split: {sorted(overlap)[:5]}")
    errors = np.empty(len(frames), dtype=np.float64)
    failures = 0
    for i, (img, sample) in enumerate(frames):
        try:
            pred = model.predict(img)
            errors[i] = angular_error(pred, sample.gaze)
        except EstimationError:
            errors[i] = FAILURE_PENALTY_DEG
            failures += 1
    return EvalResult.from_errors(errors, trial_id, failures)
