"""Experimental protocol: dataset builds, identity splits, hardware sweeps.

Seed discipline (all via rng.derive_seed, so any frame is regenerable in
isolation):
    identity model   derive_seed(identity_seed_base, "identity", id_index)
    trial split      derive_seed(master_seed, "trial", trial)
    slippage draw    derive_seed(master_seed, "slip", id_index, target, slip)
    sensor noise     derive_seed(master_seed, "noise", id_index, target, slip)

Frames are independent jobs; a worker pool computes them in any order and
results are assembled by frame index, so output never depends on scheduling.
"""

from __future__ import annotations

import dataclasses
import json
import math
import multiprocessing
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import estimator as est
from .core import CameraPose, GazeSample, percentile, pearson_r
from .errors import ValidationError
from .eyescene import (
    RigConfig,
    apply_gaze,
    default_rig,
    gaze_targets,
    generate_identity,
    render,
    sample_slippage,
)
from .imageio import write_pgm
from .optics import OpticsConfig, apply_pipeline
from .rng import derive_seed, shuffled

CAMERA_AXES = ("camera_offset_vertical", "camera_line_to_onaxis", "focal_length")
OPTICS_AXES = ("blur_radius", "brightness", "noise_psnr")
SWEEP_AXES = OPTICS_AXES + CAMERA_AXES

DEFAULT_LINE_STEPS = 6
DEFAULT_VERTICAL_OFFSETS = tuple(float(v) for v in range(-4, 5))
DEFAULT_FOCALS = (200.0, 270.0, 300.0, 400.0, 500.0, 600.0)


@dataclass
class DatasetSpec:
    """Everything needed to synthesize one labelled dataset deterministically."""

    identity_count: int = 50
    identity_seed_base: int = 1000
    target_count: int = 114
    half_fov_deg: float = 35.0
    slippage_per_gaze: int = 24
    slippage_ranges: tuple = (3.0, 3.0, 6.0)
    rig: RigConfig = field(default_factory=default_rig)
    camera_index: int = 0
    optics: OpticsConfig = field(default_factory=OpticsConfig)
    master_seed: int = 0

    def validate(self) -> "DatasetSpec":
        if self.identity_count < 5:
            raise ValidationError("identity_count must be >= 5")
        if self.slippage_per_gaze < 1:
            raise ValidationError("slippage_per_gaze must be >= 1")
        if not 0 <= self.camera_index < len(self.rig.cameras):
            raise ValidationError("camera_index outside the rig")
        self.rig.validate()
        self.optics.validate()
        return self

    def identity_ids(self) -> list[str]:
        return [f"id{k:04d}" for k in range(self.identity_count)]

    def identity_seed(self, id_index: int) -> int:
        return derive_seed(self.identity_seed_base, "identity", id_index)

    def to_dict(self) -> dict:
        return {
            "identity_count": self.identity_count,
            "identity_seed_base": self.identity_seed_base,
            "target_count": self.target_count,
            "half_fov_deg": self.half_fov_deg,
            "slippage_per_gaze": self.slippage_per_gaze,
            "slippage_ranges": list(self.slippage_ranges),
            "rig": self.rig.to_dict(),
            "camera_index": self.camera_index,
            "optics": self.optics.to_dict(),
            "master_seed": self.master_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSpec":
        return cls(
            identity_count=d.get("identity_count", 50),
            identity_seed_base=d.get("identity_seed_base", 1000),
            target_count=d.get("target_count", 114),
            half_fov_deg=d.get("half_fov_deg", 35.0),
            slippage_per_gaze=d.get("slippage_per_gaze", 24),
            slippage_ranges=tuple(d.get("slippage_ranges", (3.0, 3.0, 6.0))),
            rig=RigConfig.from_dict(d["rig"]) if "rig" in d else default_rig(),
            camera_index=d.get("camera_index", 0),
            optics=OpticsConfig.from_dict(d.get("optics", {})),
            master_seed=d.get("master_seed", 0),
        ).validate()


def split_identities(ids, ratio=(4, 1), trial_seed: int = 0):
    """Deterministic shuffle, then the first ceil(n*a/(a+b)) ids train."""
    ids = list(ids)
    if len(ids) < 5:
        raise ValidationError("need at least 5 identities to split")
    a, b = ratio
    order = shuffled(ids, trial_seed)
    n_train = math.ceil(len(ids) * a / (a + b))
    return order[:n_train], order[n_train:]


# ---------------------------------------------------------------------------
# frame computation (worker side)

_CTX = None


@dataclass
class _FrameContext:
    spec: DatasetSpec
    targets: list
    grid: tuple
    geo_use_glints: bool
    write_dir: str | None


def _set_ctx(ctx):
    global _CTX
    _CTX = ctx
    # fitting happens in the parent; keep worker BLAS single-threaded
    os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")


_POSED_CACHE = {}


def _posed_for(spec: DatasetSpec, id_index: int, t_idx: int):
    key = (id(spec), id_index, t_idx)
    hit = _POSED_CACHE.get(key)
    if hit is not None:
        return hit
    eye = generate_identity(spec.identity_seed(id_index))
    eye = replace(eye, eyeball_center=spec.rig.nominal_eye_center.copy())
    posed = apply_gaze(eye, _CTX.targets[t_idx])
    if len(_POSED_CACHE) > 8:
        _POSED_CACHE.clear()
    _POSED_CACHE[key] = posed
    return posed


def _frame_job(job):
    """Render + optics + featurize one frame; optionally write PGM/sidecar."""
    frame_idx, id_index, identity_id, t_idx, s_idx = job
    ctx = _CTX
    spec = ctx.spec
    posed = _posed_for(spec, id_index, t_idx)
    slip_seed = derive_seed(spec.master_seed, "slip", id_index, t_idx, s_idx)
    slip = sample_slippage(slip_seed, spec.slippage_ranges)
    intr, pose = spec.rig.cameras[spec.camera_index]
    clean = render(posed, intr, pose, spec.rig.leds, slip)
    noise_seed = derive_seed(spec.master_seed, "noise", id_index, t_idx, s_idx)
    frame = apply_pipeline(clean, spec.optics, noise_seed)
    ridge_raw = est.featurize_raw(frame, ctx.grid)
    try:
        geo = est.geometric_features(frame, ctx.geo_use_glints)
    except est.EstimationError:
        geo = np.full(4 if ctx.geo_use_glints else 2, np.nan)
    fname = None
    if ctx.write_dir is not None:
        fname = f"{identity_id}_t{t_idx:03d}_s{s_idx:02d}"
        write_pgm(os.path.join(ctx.write_dir, fname + ".pgm"), frame)
        sidecar = {
            "identity_id": identity_id,
            "target_index": t_idx,
            "gaze": [float(v) for v in ctx.targets[t_idx]],
            "slippage": [slip.dx, slip.dy, slip.dz],
            "camera_id": spec.camera_index,
        }
        with open(os.path.join(ctx.write_dir, fname + ".json"), "w") as f:
            json.dump(sidecar, f, sort_keys=True, indent=1)
    return frame_idx, ridge_raw, geo, fname, (slip.dx, slip.dy, slip.dz), slip_seed, noise_seed


def _run_jobs(jobs, ctx: _FrameContext, workers: int):
    global _CTX
    if workers <= 1:
        _set_ctx(ctx)
        results = [_frame_job(j) for j in jobs]
        _POSED_CACHE.clear()
        return results
    with multiprocessing.get_context("fork").Pool(
        workers, initializer=_set_ctx, initargs=(ctx,)
    ) as pool:
        chunk = max(1, len(jobs) // (workers * 8))
        return pool.map(_frame_job, jobs, chunksize=chunk)


@dataclass
class FrameSet:
    """In-memory dataset: features and labels aligned by frame index."""

    spec: DatasetSpec
    identity_ids: list
    id_index: np.ndarray        # (N,) global identity index per frame
    frame_identity: list        # (N,) identity id per frame
    target_index: np.ndarray
    gazes: np.ndarray           # (N, 3)
    ridge_raw: np.ndarray       # (N, D)
    geo: np.ndarray             # (N, 2 or 4); NaN rows are failed frames
    files: list
    slips: list
    seeds: list                 # (slip_seed, noise_seed) per frame


def compute_frames(spec: DatasetSpec, ids, workers: int = 1,
                   grid=est.DEFAULT_GRID, geo_use_glints: bool = False,
                   write_dir: str | None = None) -> FrameSet:
    """Synthesize all frames for the given identities (features in memory)."""
    spec.validate()
    all_ids = spec.identity_ids()
    index_of = {iid: k for k, iid in enumerate(all_ids)}
    targets = gaze_targets(spec.target_count, spec.half_fov_deg)
    jobs = []
    n = 0
    for iid in ids:
        if iid not in index_of:
            raise ValidationError(f"unknown identity id {iid!r}")
        k = index_of[iid]
        for t in range(spec.target_count):
            for s in range(spec.slippage_per_gaze):
                jobs.append((n, k, iid, t, s))
                n += 1
    if write_dir is not None:
        os.makedirs(write_dir, exist_ok=True)
    ctx = _FrameContext(spec=spec, targets=targets, grid=tuple(grid),
                        geo_use_glints=geo_use_glints, write_dir=write_dir)
    results = _run_jobs(jobs, ctx, workers)
    results.sort(key=lambda r: r[0])
    d = len(results[0][1])
    gdim = 4 if geo_use_glints else 2
    ridge_raw = np.empty((n, d), dtype=np.float64)
    geo = np.empty((n, gdim), dtype=np.float64)
    gazes = np.empty((n, 3), dtype=np.float64)
    id_idx = np.empty(n, dtype=np.int64)
    t_idx = np.empty(n, dtype=np.int64)
    frame_identity = []
    files = []
    slips = []
    seeds = []
    for (fi, raw, g, fname, slip, slip_seed, noise_seed), job in zip(results, jobs):
        ridge_raw[fi] = raw
        geo[fi] = g
        gazes[fi] = targets[job[3]]
        id_idx[fi] = job[1]
        t_idx[fi] = job[3]
        frame_identity.append(job[2])
        files.append(fname)
        slips.append(slip)
        seeds.append((slip_seed, noise_seed))
    return FrameSet(
        spec=spec, identity_ids=list(ids), id_index=id_idx,
        frame_identity=frame_identity, target_index=t_idx, gazes=gazes,
        ridge_raw=ridge_raw, geo=geo, files=files, slips=slips, seeds=seeds,
    )


def build_dataset(spec: DatasetSpec, ids=None, out_dir: str = ".",
                  workers: int = 1, force: bool = False) -> dict:
    """Render a dataset to disk (PGM frames + sidecars + manifest.json)."""
    spec.validate()
    if ids is None:
        ids = spec.identity_ids()
    manifest_path = os.path.join(out_dir, "manifest.json")
    if os.path.exists(manifest_path) and not force:
        raise ValidationError(f"refusing to overwrite {manifest_path} (use force)")
    frames_dir = os.path.join(out_dir, "frames")
    os.makedirs(frames_dir, exist_ok=True)
    fs = compute_frames(spec, ids, workers=workers, write_dir=frames_dir)
    frames = []
    for i, fname in enumerate(fs.files):
        slip = fs.slips[i]
        slip_seed, noise_seed = fs.seeds[i]
        frames.append({
            "file": f"frames/{fname}.pgm",
            "identity_id": fs.frame_identity[i],
            "target_index": int(fs.target_index[i]),
            "gaze": [float(v) for v in fs.gazes[i]],
            "slippage": [float(v) for v in slip],
            "camera_id": spec.camera_index,
            "slip_seed": slip_seed,
            "noise_seed": noise_seed,
        })
    manifest = {
        "spec_version": 1,
        "kind": "dataset-manifest",
        "dataset": spec.to_dict(),
        "identity_ids": list(ids),
        "total_frames": len(frames),
        "frames": frames,
    }
    try:
        with open(manifest_path, "w") as f:
            json.dump(manifest, f, sort_keys=True, indent=1)
    except OSError as exc:
        raise ValidationError(f"failed writing {manifest_path}: {exc}") from exc
    return manifest


# ---------------------------------------------------------------------------
# sweeps

@dataclass
class SweepSpec:
    """A hardware sweep: one axis, its values, and the shared base dataset."""

    axis: str
    axis_values: list
    base: DatasetSpec = field(default_factory=DatasetSpec)
    trials: int = 3
    split_ratio: tuple = (4, 1)
    estimators: tuple = ("ridge", "geometric")
    ridge_lambda: float = est.DEFAULT_LAMBDA
    ridge_grid: tuple = est.DEFAULT_GRID
    geo_use_glints: bool = False
    materialize_frames: bool = False

    def validate(self) -> "SweepSpec":
        if self.axis not in SWEEP_AXES:
            raise ValidationError(f"unknown sweep axis {self.axis!r}; valid: {SWEEP_AXES}")
        vals = [float(v) for v in self.axis_values]
        if not vals:
            raise ValidationError("axis_values must be non-empty")
        if len(vals) > 1:
            diffs = np.diff(vals)
            if not ((diffs > 0).all() or (diffs < 0).all()):
                raise ValidationError("axis_values must be strictly monotone")
        if self.trials < 1:
            raise ValidationError("trials must be >= 1")
        for e in self.estimators:
            if e not in ("ridge", "geometric"):
                raise ValidationError(f"unknown estimator {e!r}")
        self.base.validate()
        return self

    def to_dict(self) -> dict:
        return {
            "axis": self.axis,
            "axis_values": ["inf" if math.isinf(float(v)) else float(v)
                            for v in self.axis_values],
            "base": self.base.to_dict(),
            "trials": self.trials,
            "split_ratio": list(self.split_ratio),
            "estimators": list(self.estimators),
            "ridge_lambda": self.ridge_lambda,
            "ridge_grid": list(self.ridge_grid),
            "geo_use_glints": self.geo_use_glints,
            "materialize_frames": self.materialize_frames,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        vals = [math.inf if v == "inf" else float(v) for v in d["axis_values"]]
        return cls(
            axis=d["axis"],
            axis_values=vals,
            base=DatasetSpec.from_dict(d["base"]) if "base" in d else DatasetSpec(),
            trials=d.get("trials", 3),
            split_ratio=tuple(d.get("split_ratio", (4, 1))),
            estimators=tuple(d.get("estimators", ("ridge", "geometric"))),
            ridge_lambda=d.get("ridge_lambda", est.DEFAULT_LAMBDA),
            ridge_grid=tuple(d.get("ridge_grid", est.DEFAULT_GRID)),
            geo_use_glints=d.get("geo_use_glints", False),
            materialize_frames=d.get("materialize_frames", False),
        ).validate()


def _vary_camera(rig: RigConfig, camera_index: int, axis: str, value: float) -> RigConfig:
    """One rig variant for a camera axis, re-aimed at the nominal eye center."""
    cameras = list(rig.cameras)
    intr, pose = cameras[camera_index]
    eye = rig.nominal_eye_center
    if axis == "focal_length":
        intr = replace(intr, fx=float(value), fy=float(value))
    elif axis == "camera_offset_vertical":
        pos = pose.camera_origin + np.array([0.0, float(value), 0.0])
        pose = CameraPose.look_at(pos, eye)
    elif axis == "camera_line_to_onaxis":
        frac = float(value)
        if frac != 0.0:
            nominal = pose.camera_origin
            standoff = float(np.linalg.norm(nominal - eye))
            onaxis = eye + np.array([0.0, 0.0, standoff])
            pos = nominal + frac * (onaxis - nominal)
            pose = CameraPose.look_at(pos, eye)
    else:
        raise ValidationError(f"{axis} is not a camera axis")
    cameras[camera_index] = (intr, pose)
    return RigConfig(cameras=cameras, leds=rig.leds,
                     nominal_eye_center=rig.nominal_eye_center)


def camera_axis_values(axis: str, rig: RigConfig, values=None,
                       camera_index: int = 0) -> list:
    """Default grids for the camera axes, as (value, rig_variant) pairs."""
    if axis not in CAMERA_AXES:
        raise ValidationError(f"{axis} is not a camera axis")
    if values is None:
        values = {
            "camera_offset_vertical": DEFAULT_VERTICAL_OFFSETS,
            "camera_line_to_onaxis": tuple(
                i / (DEFAULT_LINE_STEPS - 1) for i in range(DEFAULT_LINE_STEPS)
            ),
            "focal_length": DEFAULT_FOCALS,
        }[axis]
    return [(float(v), _vary_camera(rig, camera_index, axis, float(v))) for v in values]


def apply_axis(base: DatasetSpec, axis: str, value: float) -> DatasetSpec:
    """The dataset spec for one point on the sweep axis."""
    if axis == "blur_radius":
        return replace(base, optics=replace(base.optics, blur_radius=float(value)))
    if axis == "brightness":
        return replace(base, optics=replace(base.optics, brightness=float(value)))
    if axis == "noise_psnr":
        return replace(base, optics=replace(base.optics, target_psnr=float(value)))
    if axis in CAMERA_AXES:
        rig = _vary_camera(base.rig, base.camera_index, axis, float(value))
        return replace(base, rig=rig)
    raise ValidationError(f"unknown axis {axis!r}")


@dataclass
class SweepReport:
    """Per-cell percentile metrics plus per-axis-value aggregates."""

    axis: str
    axis_values: list
    estimators: list
    cells: list          # cells[v][t][estimator] -> metrics dict
    aggregates: list     # aggregates[v][estimator] -> {p50_mean, p50_std, ...}
    meta: dict

    def to_dict(self) -> dict:
        return {
            "spec_version": 1,
            "kind": "sweep-report",
            "axis": self.axis,
            "axis_values": ["inf" if math.isinf(float(v)) else float(v)
                            for v in self.axis_values],
            "estimators": list(self.estimators),
            "cells": self.cells,
            "aggregates": self.aggregates,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepReport":
        vals = [math.inf if v == "inf" else float(v) for v in d["axis_values"]]
        return cls(
            axis=d["axis"], axis_values=vals, estimators=list(d["estimators"]),
            cells=d["cells"], aggregates=d["aggregates"], meta=d.get("meta", {}),
        )

    def mean_series(self, percentile_name: str, estimator: str) -> list:
        return [agg[estimator][f"{percentile_name}_mean"] for agg in self.aggregates]


def _eval_ridge(model: est.RidgeGazeModel, raw: np.ndarray, gazes: np.ndarray,
                trial: int) -> est.EvalResult:
    errors = np.empty(raw.shape[0], dtype=np.float64)
    failures = 0
    for i in range(raw.shape[0]):
        try:
            pred = model.predict_from_raw(raw[i])
            errors[i] = est.angular_error(pred, gazes[i])
        except est.EstimationError:
            errors[i] = est.FAILURE_PENALTY_DEG
            failures += 1
    return est.EvalResult.from_errors(errors, trial, failures)


def _eval_geometric(model, geo: np.ndarray, gazes: np.ndarray,
                    trial: int) -> est.EvalResult:
    errors = np.empty(geo.shape[0], dtype=np.float64)
    failures = 0
    for i in range(geo.shape[0]):
        if model is None or not np.isfinite(geo[i]).all():
            errors[i] = est.FAILURE_PENALTY_DEG
            failures += 1
            continue
        try:
            pred = model.predict_from_features(geo[i])
            errors[i] = est.angular_error(pred, gazes[i])
        except est.EstimationError:
            errors[i] = est.FAILURE_PENALTY_DEG
            failures += 1
    return est.EvalResult.from_errors(errors, trial, failures)


def _fit_geometric_or_none(fs: FrameSet, rows: np.ndarray, train_ids,
                           sweep: SweepSpec):
    """None signals an untrainable cell; its frames all take the 180 penalty."""
    geo = fs.geo[rows]
    ok = np.isfinite(geo).all(axis=1)
    if int(ok.sum()) < 12:
        return None
    intr, _ = fs.spec.rig.cameras[fs.spec.camera_index]
    py = np.array([est.gaze_to_pitch_yaw(g) for g in fs.gazes[rows][ok]])
    try:
        return est.fit_geometric(
            geo[ok], py, train_ids, use_glints=sweep.geo_use_glints,
            image_width=intr.width, image_height=intr.height,
        )
    except est.IllConditionedFitError:
        return None


def run_sweep(sweep: SweepSpec, out_dir: str | None = None,
              workers: int = 1) -> SweepReport:
    """Execute the sweep: per axis value, per trial, fit and evaluate.

    Train and test share the axis value's configuration (paired design); the
    identity split depends only on the trial seed, so splits are paired across
    axis values too.
    """
    from . import __version__
    from ._kernels import BACKEND

    sweep.validate()
    base = sweep.base
    ids = base.identity_ids()
    splits = [
        split_identities(ids, sweep.split_ratio, derive_seed(base.master_seed, "trial", t))
        for t in range(sweep.trials)
    ]
    cells = []
    aggregates = []
    for vi, value in enumerate(sweep.axis_values):
        dspec = apply_axis(base, sweep.axis, float(value))
        write_dir = None
        if sweep.materialize_frames and out_dir is not None:
            tag = "inf" if math.isinf(float(value)) else f"{float(value):g}"
            write_dir = os.path.join(out_dir, "frames", f"{sweep.axis}_{tag}")
        fs = compute_frames(dspec, ids, workers=workers, grid=sweep.ridge_grid,
                            geo_use_glints=sweep.geo_use_glints, write_dir=write_dir)
        value_cells = []
        for trial in range(sweep.trials):
            train_ids, test_ids = splits[trial]
            train_set = set(train_ids)
            test_set = set(test_ids)
            train_rows = np.array([i for i, iid in enumerate(fs.frame_identity)
                                   if iid in train_set])
            test_rows = np.array([i for i, iid in enumerate(fs.frame_identity)
                                  if iid in test_set])
            trial_cell = {}
            for name in sweep.estimators:
                if name == "ridge":
                    model = est.train_ridge(
                        fs.ridge_raw[train_rows], fs.gazes[train_rows],
                        train_ids, grid=sweep.ridge_grid, lam=sweep.ridge_lambda,
                    )
                    res = _eval_ridge(model, fs.ridge_raw[test_rows],
                                      fs.gazes[test_rows], trial)
                    fit_failed = False
                else:
                    model = _fit_geometric_or_none(fs, train_rows, train_ids, sweep)
                    res = _eval_geometric(model, fs.geo[test_rows],
                                          fs.gazes[test_rows], trial)
                    fit_failed = model is None
                trial_cell[name] = {
                    "p50": res.p50, "p75": res.p75, "p95": res.p95,
                    "n_frames": res.n_frames, "n_failures": res.n_failures,
                    "fit_failed": fit_failed,
                }
            value_cells.append(trial_cell)
        cells.append(value_cells)
        agg = {}
        for name in sweep.estimators:
            entry = {}
            for p in ("p50", "p75", "p95"):
                series = np.array([value_cells[t][name][p] for t in range(sweep.trials)])
                entry[f"{p}_mean"] = float(series.mean())
                entry[f"{p}_std"] = float(series.std(ddof=1)) if sweep.trials > 1 else 0.0
            agg[name] = entry
        aggregates.append(agg)
    report = SweepReport(
        axis=sweep.axis,
        axis_values=[float(v) for v in sweep.axis_values],
        estimators=list(sweep.estimators),
        cells=cells,
        aggregates=aggregates,
        meta={
            "sweep": sweep.to_dict(),
            "splits": [{"train": tr, "test": te} for tr, te in splits],
            "kernel_backend": BACKEND,
            "artifact_version": __version__,
        },
    )
    if out_dir is not None:
        from .report import write_report_files
        os.makedirs(out_dir, exist_ok=True)
        write_report_files(report, out_dir)
    return report


def correlate_trends(report_a: SweepReport, report_b: SweepReport,
                     percentile_name: str = "p95", estimator: str = "ridge") -> float:
    """Pearson R between two sweeps' per-axis-value mean error curves."""
    if [float(v) for v in report_a.axis_values] != [float(v) for v in report_b.axis_values]:
        raise ValidationError("reports cover different axis values")
    xs = report_a.mean_series(percentile_name, estimator)
    ys = report_b.mean_series(percentile_name, estimator)
    return pearson_r(xs, ys)


def correlate_estimators(report: SweepReport, percentile_name: str = "p95",
                         estimator_a: str = "ridge",
                         estimator_b: str = "geometric") -> float:
    """Pearson R between two estimator families' trend curves on one sweep."""
    xs = report.mean_series(percentile_name, estimator_a)
    ys = report.mean_series(percentile_name, estimator_b)
    return pearson_r(xs, ys)
