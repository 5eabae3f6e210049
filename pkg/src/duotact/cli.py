"""Experiment harness: generate layouts, simulate, calibrate, evaluate.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 acceptance
check failure (evaluate --check).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import estimation
from .calibration import (
    DesignMatrix,
    apply_calibration,
    load_calibration,
    save_calibration,
    solve_calibration,
)
from .config import (
    ExperimentConfig,
    config_hash,
    default_config,
    dump_config,
    load_config,
)
from .errors import (
    ConfigError,
    DataError,
    DuotactError,
    FitFailedError,
    InsufficientDataError,
    NoContactError,
)
from .estimation import (
    SampledField,
    estimate_curvature,
    fit_gaussian,
    tangent_plane_positions,
    write_results_csv,
)
from .geometry import build_layout, write_layout_csv
from .mechanics import solve_contact, subsurface_normal_field
from .pipeline import (
    collect_observations,
    load_manifest,
    prediction_columns,
    scenario_for,
    simulate_dataset,
    training_selection,
)
from .rendering import render_frame

# acceptance thresholds applied by evaluate --check, indentations >= 2 mm
CHECK_MIN_INDENTATION = 2.0
CHECK_FLAT_CURVATURE_BOUND = 1.0 / 200.0  # 1/mm
CHECK_CURVED_RELATIVE_BOUND = 0.15


def _prepare_dir(path, force: bool) -> Path:
    out = Path(path)
    if out.exists() and any(out.iterdir()) and not force:
        raise DataError(f"{out}: output directory is not empty (use --force)")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate_layout(cfg: ExperimentConfig, out_dir, force: bool = False) -> dict:
    """Write the layout CSV and a clean baseline preview frame."""
    layout = build_layout(cfg.sensor)  # validates before any file is written
    out = _prepare_dir(out_dir, force)
    layout_path = out / "layout.csv"
    preview_path = out / "preview.png"
    write_layout_csv(layout, layout_path)
    preview = render_frame(
        layout,
        camera=cfg.camera,
        filters=cfg.filters,
        lighting=cfg.lighting,
        noise_sigma=0.0,
        supersample=cfg.pipeline.supersample,
    )
    preview.save(preview_path)
    return {"layout": str(layout_path), "preview": str(preview_path)}


def cmd_simulate(cfg: ExperimentConfig, out_dir, seed=None, force: bool = False) -> dict:
    """Render the full dataset; returns the manifest."""
    if seed is not None:
        cfg = replace(cfg, protocol=replace(cfg.protocol, seed=int(seed)))
    return simulate_dataset(cfg, out_dir, force=force)


def _config_for_dataset(dataset_dir, cfg: ExperimentConfig):
    """Resolve the effective config and verify it matches the manifest."""
    manifest, digest = load_manifest(dataset_dir)
    from .config import parse_config

    embedded = parse_config(manifest["config"])
    if cfg is not None and config_hash(cfg) != manifest["config_hash"]:
        raise DataError(
            "dataset was generated with a different configuration "
            f"(manifest hash {manifest['config_hash'][:12]}, "
            f"given {config_hash(cfg)[:12]})"
        )
    return embedded, manifest, digest


def cmd_calibrate(
    dataset_dir,
    cfg: ExperimentConfig = None,
    out_path="calibration.txt",
    holdout_trial=None,
) -> dict:
    """Train the linear calibration on a dataset; returns the report.

    One trial per object is held out for the validation RMS (the last
    trial by default); the persisted map is trained on the others.
    """
    cfg, manifest, digest = _config_for_dataset(dataset_dir, cfg)
    if holdout_trial is None:
        holdout_trial = cfg.protocol.trials - 1
    if not 0 <= holdout_trial < cfg.protocol.trials:
        raise DataError(f"holdout trial {holdout_trial} outside 0..{cfg.protocol.trials - 1}")
    if cfg.protocol.trials == 1:
        holdout_trial = -1  # nothing to hold out

    layout = build_layout(cfg.sensor)
    axis = cfg.protocol.contact_axis
    train_cols, train_z = [], []
    hold_cols, hold_z, hold_obj = [], [], []
    labels = set()
    for frame_obs in collect_observations(cfg, dataset_dir, manifest):
        mask = training_selection(cfg, layout, frame_obs)
        if not mask.any():
            continue
        picked = [o for o, keep in zip(frame_obs.observations, mask) if keep]
        idx = frame_obs.layout_indices[mask]
        cols = prediction_columns(
            (cfg.camera.image_width, cfg.camera.image_height), picked
        )
        state = solve_contact(scenario_for(cfg, frame_obs.record))
        field_fn = subsurface_normal_field(state)
        pos = layout.inner_positions[idx]
        ax = np.asarray(axis) / np.linalg.norm(axis)
        r = np.linalg.norm(pos - np.outer(pos @ ax, ax), axis=1)
        targets = field_fn(r)
        if frame_obs.record.trial == holdout_trial:
            hold_cols.append(cols)
            hold_z.append(targets)
            hold_obj.extend([frame_obs.record.object_label] * len(idx))
        else:
            train_cols.append(cols)
            train_z.append(targets)
            labels.add(f"{frame_obs.record.object_label}:trial{frame_obs.record.trial}")

    if not train_cols:
        raise DataError("dataset produced no training samples")
    matrix = np.concatenate(train_cols, axis=1)
    targets = np.concatenate(train_z)
    if float(np.max(np.abs(targets))) == 0.0:
        raise DataError(
            "degenerate dataset: every training target is zero (baselines only?)"
        )
    design = DesignMatrix(
        matrix=matrix,
        window=cfg.pipeline.window,
        image_width=cfg.camera.image_width,
        image_height=cfg.camera.image_height,
    )
    calib = solve_calibration(
        design,
        targets,
        cutoff=cfg.pipeline.svd_cutoff,
        manifest_hash=digest,
        scenario_labels=sorted(labels),
    )

    report = {
        "samples": int(design.n_samples),
        "training_rms_mm": calib.training_rms,
        "holdout_trial": holdout_trial,
    }
    if hold_cols:
        h = np.concatenate(hold_cols, axis=1)
        hz = np.concatenate(hold_z)
        resid = apply_calibration(calib, h) - hz
        report["holdout_rms_mm"] = float(np.sqrt(np.mean(resid**2)))
        per_obj = {}
        hobj = np.array(hold_obj)
        for label in sorted(set(hold_obj)):
            sel = hobj == label
            per_obj[label] = float(np.sqrt(np.mean(resid[sel] ** 2)))
        report["holdout_rms_per_object_mm"] = per_obj

    save_calibration(calib, out_path)
    Path(str(out_path) + ".report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="ascii"
    )
    return report


def cmd_evaluate(
    dataset_dir,
    calibration_path,
    cfg: ExperimentConfig = None,
    out_dir="evaluation",
    check: bool = False,
    force: bool = False,
) -> dict:
    """Run the inverse pipeline over a dataset and tabulate estimates."""
    cfg, manifest, digest = _config_for_dataset(dataset_dir, cfg)
    calib = load_calibration(calibration_path)
    if calib.manifest_hash != digest:
        raise DataError(
            f"{calibration_path}: calibration was trained on a different dataset"
        )
    if (calib.window, calib.image_width, calib.image_height) != (
        cfg.pipeline.window,
        cfg.camera.image_width,
        cfg.camera.image_height,
    ):
        raise DataError(f"{calibration_path}: calibration header mismatches the dataset")

    out = _prepare_dir(out_dir, force)
    layout = build_layout(cfg.sensor)
    axis = cfg.protocol.contact_axis
    sensor_radius = cfg.sensor.outer_radius

    rows, obs_rows, fit_notes = [], [], []
    base_centroids = {}
    for frame_obs in collect_observations(cfg, dataset_dir, manifest):
        rec = frame_obs.record
        key = (rec.object_label, rec.trial)
        frame_id = f"{rec.object_label}/trial_{rec.trial}/frame_{rec.frame_index:02d}"
        if rec.frame_index == 0:
            base_centroids[key] = {
                int(i): o.centroid
                for i, o in zip(frame_obs.layout_indices, frame_obs.observations)
            }
            continue
        refs = base_centroids.get(key, {})
        for i, o in zip(frame_obs.layout_indices, frame_obs.observations):
            ref = refs.get(int(i))
            dcx = o.centroid[0] - ref[0] if ref else math.nan
            dcy = o.centroid[1] - ref[1] if ref else math.nan
            obs_rows.append((frame_id, int(i), o, dcx, dcy))

        columns = prediction_columns(
            (cfg.camera.image_width, cfg.camera.image_height), frame_obs.observations
        )
        values = apply_calibration(calib, columns)
        positions = tangent_plane_positions(
            layout.inner_positions[frame_obs.layout_indices], axis
        )
        field = SampledField(positions=positions, values=np.asarray(values))
        try:
            fit = fit_gaussian(field, noise_floor=cfg.pipeline.noise_floor)
            est = estimate_curvature(fit, sensor_radius)
            rows.append(
                (
                    rec.trial,
                    rec.object_radius,
                    rec.indentation,
                    fit.width,
                    fit.amplitude,
                    est.equivalent_radius,
                    est.object_curvature,
                    fit.rms_residual,
                )
            )
        except (NoContactError, InsufficientDataError, FitFailedError) as exc:
            fit_notes.append(f"{frame_id}: {exc}")
            rows.append(
                (rec.trial, rec.object_radius, rec.indentation,
                 math.nan, math.nan, math.nan, math.nan, math.nan)
            )

    rows.sort(key=lambda r: (math.inf if math.isinf(r[1]) else r[1], r[0], r[2]))
    write_results_csv(out / "results.csv", rows)

    with open(out / "observations.csv", "w", encoding="ascii") as fh:
        fh.write("frame_id,marker_index,cx,cy,pixel_count,mean_hue,dcx_px,dcy_px\n")
        for frame_id, idx, o, dcx, dcy in obs_rows:
            fh.write(
                f"{frame_id},{idx},{o.centroid[0]:.9g},{o.centroid[1]:.9g},"
                f"{o.pixel_count},{o.mean_hue:.9g},{dcx:.9g},{dcy:.9g}\n"
            )

    summary = _summarize(rows)
    with open(out / "summary.csv", "w", encoding="ascii") as fh:
        fh.write(
            "object_radius_mm,indentation_mm,kappa_mean_inv_mm,kappa_std_inv_mm,"
            "n_trials,low_indentation_flag\n"
        )
        for (radius, depth), (mean_k, std_k, n) in sorted(
            summary.items(), key=lambda kv: (math.inf if math.isinf(kv[0][0]) else kv[0][0], kv[0][1])
        ):
            flag = 1 if depth < 1.0 else 0
            fh.write(
                f"{estimation._fmt(radius)},{depth:.9g},{mean_k:.9g},{std_k:.9g},{n},{flag}\n"
            )
    if fit_notes:
        (out / "fit_notes.txt").write_text("\n".join(fit_notes) + "\n", encoding="ascii")

    failures = _check_thresholds(summary) if check else []
    return {
        "rows": rows,
        "summary": summary,
        "check_failures": failures,
        "out_dir": str(out),
    }


def _summarize(rows) -> dict:
    """Per (object_radius, indentation): mean/std/count of object curvature."""
    groups = {}
    for trial, radius, depth, a, dr, req, kappa, resid in rows:
        groups.setdefault((radius, depth), []).append(kappa)
    out = {}
    for key, kappas in groups.items():
        arr = np.array(kappas, dtype=float)
        ok = np.isfinite(arr)
        if ok.any():
            out[key] = (float(arr[ok].mean()), float(arr[ok].std()), int(ok.sum()))
        else:
            out[key] = (math.nan, math.nan, 0)
    return out


def _check_thresholds(summary) -> list:
    failures = []
    for (radius, depth), (mean_k, _std, n) in sorted(
        summary.items(), key=lambda kv: (math.inf if math.isinf(kv[0][0]) else kv[0][0], kv[0][1])
    ):
        if depth < CHECK_MIN_INDENTATION:
            continue
        if n == 0 or not math.isfinite(mean_k):
            failures.append(f"object {radius} depth {depth}: no estimates")
            continue
        if math.isinf(radius):
            if abs(mean_k) > CHECK_FLAT_CURVATURE_BOUND:
                failures.append(
                    f"flat object at {depth} mm: |mean curvature| "
                    f"{abs(mean_k):.5g} > {CHECK_FLAT_CURVATURE_BOUND:.5g}"
                )
        else:
            true_k = 1.0 / radius
            bound = CHECK_CURVED_RELATIVE_BOUND * abs(true_k)
            if abs(mean_k - true_k) > bound:
                failures.append(
                    f"object {radius} mm at {depth} mm: curvature error "
                    f"{abs(mean_k - true_k):.5g} > {bound:.5g}"
                )
    return failures


def _load_cfg(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        return load_config(args.config)
    return default_config()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="duotact",
        description="Digital twin of a two-layer color-marker tactile sensor.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-layout", help="write the marker layout CSV and a preview frame")
    p.add_argument("--config", help="experiment config file (INI)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--force", action="store_true", help="overwrite non-empty output")

    p = sub.add_parser("simulate", help="render the synthetic dataset")
    p.add_argument("--config", help="experiment config file (INI)")
    p.add_argument("--out", required=True, help="dataset directory")
    p.add_argument("--seed", type=int, help="override the protocol seed")
    p.add_argument("--force", action="store_true", help="overwrite non-empty output")

    p = sub.add_parser("calibrate", help="train the linear calibration on a dataset")
    p.add_argument("dataset", help="dataset directory (from simulate)")
    p.add_argument("--config", help="config file; must match the dataset manifest")
    p.add_argument("--out", default="calibration.txt", help="calibration output file")
    p.add_argument("--holdout-trial", type=int, default=None,
                   help="trial held out for validation (default: last)")

    p = sub.add_parser("evaluate", help="estimate curvature for every frame")
    p.add_argument("dataset", help="dataset directory")
    p.add_argument("calibration", help="calibration file (from calibrate)")
    p.add_argument("--config", help="config file; must match the dataset manifest")
    p.add_argument("--out", default="evaluation", help="output directory")
    p.add_argument("--check", action="store_true",
                   help="exit 3 unless curvature means pass the documented bounds")
    p.add_argument("--force", action="store_true", help="overwrite non-empty output")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "generate-layout":
            cfg = _load_cfg(args)
            paths = cmd_generate_layout(cfg, args.out, force=args.force)
            print(f"layout written to {paths['layout']}")
            print(f"preview written to {paths['preview']}")
        elif args.command == "simulate":
            cfg = _load_cfg(args)
            manifest = cmd_simulate(cfg, args.out, seed=args.seed, force=args.force)
            print(f"{len(manifest['frames'])} frames written to {args.out}")
        elif args.command == "calibrate":
            cfg = load_config(args.config) if args.config else None
            report = cmd_calibrate(
                args.dataset, cfg, out_path=args.out, holdout_trial=args.holdout_trial
            )
            print(f"calibration written to {args.out}")
            print(f"training RMS: {report['training_rms_mm']:.4f} mm")
            if "holdout_rms_mm" in report:
                print(
                    f"holdout trial {report['holdout_trial']} RMS: "
                    f"{report['holdout_rms_mm']:.4f} mm"
                )
        elif args.command == "evaluate":
            cfg = load_config(args.config) if args.config else None
            result = cmd_evaluate(
                args.dataset,
                args.calibration,
                cfg,
                out_dir=args.out,
                check=args.check,
                force=args.force,
            )
            print(f"{len(result['rows'])} estimate rows written to {result['out_dir']}")
            for failure in result["check_failures"]:
                print(f"CHECK FAILED: {failure}", file=sys.stderr)
            if result["check_failures"]:
                return 3
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (DataError, DuotactError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
