"""Dataset production and observation collection.

Ties the forward chain (layout, contact, render) to the inverse chain
(preprocess, segment, match) for whole datasets on disk. Marker identity
is maintained per trial by matching each frame against the previous one,
starting from the projected rest layout, so the association survives the
large cumulative drift of deep indentations while each step stays well
below half the marker spacing.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .calibration import column_from_observation
from .config import ExperimentConfig, config_hash, dump_config, radius_label
from .errors import AmbiguousMatchError, DataError
from .geometry import MarkerLayout, build_layout
from .imaging import (
    estimate_illumination,
    match_observations,
    preprocess,
    rgb_to_hsv,
    segment_markers,
)
from .mechanics import ContactScenario, ForwardModel, marker_displacements, solve_contact
from .rendering import RasterImage, project, render_frame

__all__ = [
    "FrameRecord",
    "FrameObservations",
    "frame_records",
    "forward_model",
    "scenario_for",
    "simulate_dataset",
    "load_manifest",
    "collect_observations",
    "training_selection",
]

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class FrameRecord:
    """One frame of the protocol; indentation 0 marks the baseline."""

    object_radius: float
    object_label: str
    trial: int
    frame_index: int
    indentation: float
    path: str
    seed: int


def _frame_seed(master_seed: int, obj_idx: int, trial: int, frame_idx: int) -> int:
    ss = np.random.SeedSequence([int(master_seed), obj_idx, trial, frame_idx])
    return int(ss.generate_state(1)[0])


def frame_records(cfg: ExperimentConfig) -> list:
    """Deterministic enumeration of every frame in the protocol."""
    records = []
    master = cfg.protocol.seed if cfg.protocol.seed is not None else 0
    for obj_idx, radius in enumerate(cfg.protocol.object_radii):
        label = radius_label(radius)
        for trial in range(cfg.protocol.trials):
            base = f"{label}/trial_{trial}"
            records.append(
                FrameRecord(
                    object_radius=radius,
                    object_label=label,
                    trial=trial,
                    frame_index=0,
                    indentation=0.0,
                    path=f"{base}/baseline.png",
                    seed=_frame_seed(master, obj_idx, trial, 0),
                )
            )
            for k, depth in enumerate(cfg.protocol.indentation_schedule, start=1):
                records.append(
                    FrameRecord(
                        object_radius=radius,
                        object_label=label,
                        trial=trial,
                        frame_index=k,
                        indentation=float(depth),
                        path=f"{base}/frame_{k:02d}.png",
                        seed=_frame_seed(master, obj_idx, trial, k),
                    )
                )
    return records


def forward_model(cfg: ExperimentConfig) -> ForwardModel:
    return ForwardModel(
        tangential_gain=cfg.pipeline.tangential_gain,
        membrane_thickness=cfg.pipeline.membrane_thickness,
    )


def scenario_for(cfg: ExperimentConfig, record: FrameRecord) -> ContactScenario:
    return ContactScenario.from_object_radius(
        record.object_radius, record.indentation, cfg.sensor.outer_radius
    )


def simulate_dataset(
    cfg: ExperimentConfig, out_dir, force: bool = False, progress=None
) -> dict:
    """Render the full protocol into ``out_dir`` and write the manifest.

    Refuses to touch an existing non-empty directory unless ``force``.
    Byte-reproducible for a fixed configuration and seed.
    """
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()) and not force:
        raise DataError(f"{out}: output directory is not empty (use force)")
    out.mkdir(parents=True, exist_ok=True)

    layout = build_layout(cfg.sensor)
    model = forward_model(cfg)
    records = frame_records(cfg)
    for rec in records:
        scenario = scenario_for(cfg, rec)
        disp = marker_displacements(layout, scenario, cfg.protocol.contact_axis, model)
        frame = render_frame(
            layout,
            disp,
            cfg.camera,
            cfg.filters,
            cfg.lighting,
            noise_sigma=cfg.noise_sigma,
            seed=rec.seed,
            supersample=cfg.pipeline.supersample,
        )
        path = out / rec.path
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.save(path)
        if progress is not None:
            progress(rec)

    manifest = {
        "format": "duotact-dataset",
        "schema_version": 1,
        "config_hash": config_hash(cfg),
        "config": dump_config(cfg),
        "master_seed": cfg.protocol.seed,
        "frames": [vars(rec) for rec in records],
    }
    (out / MANIFEST_NAME).write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="ascii"
    )
    return manifest


def load_manifest(dataset_dir):
    """Read a dataset manifest; returns (manifest, digest of its bytes)."""
    path = Path(dataset_dir) / MANIFEST_NAME
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: cannot read manifest ({exc})") from exc
    try:
        manifest = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed manifest ({exc})") from exc
    if manifest.get("format") != "duotact-dataset":
        raise DataError(f"{path}: not a dataset manifest")
    return manifest, hashlib.sha256(raw).hexdigest()


def _load_frame(dataset_dir, rel_path: str) -> RasterImage:
    path = Path(dataset_dir) / rel_path
    try:
        return RasterImage.load(path)
    except Exception as exc:
        raise DataError(f"{path}: cannot load frame ({exc})") from exc


@dataclass
class FrameObservations:
    """Markers of one frame with resolved layout identities."""

    record: FrameRecord
    observations: list
    layout_indices: np.ndarray


def _match_pruning_ambiguous(observations, references, max_distance):
    """Match, dropping observations that tie between two references.

    Ties happen when neighboring marker blobs merge under extreme
    crowding; the merged blob's centroid is meaningless, so it is
    removed and the match repeated. Returns (kept_observation_rows,
    pairs) with pair indices referring to the kept rows.
    """
    alive = list(range(len(observations)))
    for _ in range(64):
        subset = [observations[i] for i in alive]
        try:
            result = match_observations(subset, references, max_distance=max_distance)
        except AmbiguousMatchError as exc:
            if not exc.indices:
                raise
            alive.pop(exc.indices[0])
            continue
        return alive, result
    raise DataError("marker matching did not stabilize after pruning 64 blobs")


def _records_from_manifest(manifest) -> list:
    return [FrameRecord(**entry) for entry in manifest["frames"]]


def collect_observations(cfg: ExperimentConfig, dataset_dir, manifest):
    """Yield :class:`FrameObservations` for every frame, manifest order.

    Per trial, the baseline is matched against the projected rest layout
    and each later frame against its predecessor; markers that drop out
    of view or fail to match lose their identity for the rest of the
    trial.
    """
    layout = build_layout(cfg.sensor)
    rest_px = project(layout.outer_positions, cfg.camera)
    d2 = ((rest_px[:, None, :] - rest_px[None, :, :]) ** 2).sum(axis=-1)
    np.fill_diagonal(d2, np.inf)
    max_match = 0.5 * float(np.sqrt(d2.min()))

    pip = cfg.pipeline
    records = _records_from_manifest(manifest)
    trials = {}
    for rec in records:
        trials.setdefault((rec.object_label, rec.trial), []).append(rec)

    for key in trials:
        seq = sorted(trials[key], key=lambda r: r.frame_index)
        if seq[0].frame_index != 0:
            raise DataError(f"{key}: trial without a baseline frame")
        baseline = _load_frame(dataset_dir, seq[0].path)
        illum = estimate_illumination(
            baseline, window=pip.illum_window, sigma=pip.illum_sigma, pre_sigma=pip.blur_sigma
        )
        prev_centroids = rest_px
        prev_layout = np.arange(len(layout))
        prev_velocity = np.zeros_like(rest_px)
        prev_depth = 0.0
        prev_step = 0.0
        for rec in seq:
            frame = baseline if rec.frame_index == 0 else _load_frame(dataset_dir, rec.path)
            pre = preprocess(frame, baseline, blur_sigma=pip.blur_sigma, illumination=illum)
            obs = segment_markers(
                rgb_to_hsv(pre),
                pre,
                hue_low=pip.hue_low,
                hue_high=pip.hue_high,
                min_saturation=pip.min_saturation,
                min_blob_px=pip.min_blob_px,
                window=pip.window,
            )
            # constant-velocity prediction keeps the residual motion far
            # below half the marker spacing even at deep indentation
            step = rec.indentation - prev_depth
            scale = step / prev_step if prev_step > 0 else 0.0
            predicted = prev_centroids + prev_velocity * scale
            kept, result = _match_pruning_ambiguous(obs, predicted, max_match)
            matched = [obs[kept[i]] for i, _ in result.pairs]
            ref_rows = [j for _, j in result.pairs]
            indices = prev_layout[ref_rows]
            yield FrameObservations(
                record=rec, observations=matched, layout_indices=indices
            )
            centroids = np.array([o.centroid for o in matched]).reshape(-1, 2)
            if step > 0:
                prev_velocity = centroids - prev_centroids[ref_rows]
                prev_step = step
            else:
                prev_velocity = prev_velocity[ref_rows]
            prev_centroids = centroids
            prev_layout = indices
            prev_depth = rec.indentation


def training_selection(
    cfg: ExperimentConfig,
    layout: MarkerLayout,
    frame_obs: FrameObservations,
) -> np.ndarray:
    """Boolean mask of the observations used as calibration samples.

    Keeps every marker within ``train_contact_radius_factor * a`` of the
    contact axis plus a deterministic stride-thinned sample of the far
    field (the stride phase varies with the frame index so the far
    coverage cycles through all markers).
    """
    axis = np.asarray(cfg.protocol.contact_axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    idx = frame_obs.layout_indices
    pos = layout.inner_positions[idx]
    axial = pos @ axis
    r = np.linalg.norm(pos - np.outer(axial, axis), axis=1)

    state = solve_contact(scenario_for(cfg, frame_obs.record))
    near = r <= cfg.pipeline.train_contact_radius_factor * state.contact_radius
    stride = cfg.pipeline.train_far_stride
    phase = frame_obs.record.frame_index % stride
    far = (idx % stride) == phase
    return near | far


def prediction_columns(calib_dims, observations) -> np.ndarray:
    """Stack observation columns for prediction; (rows, n_markers)."""
    width, height = calib_dims
    return np.stack(
        [column_from_observation(o, width, height) for o in observations], axis=1
    )
