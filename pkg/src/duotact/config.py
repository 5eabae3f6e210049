"""Experiment configuration: schema, INI parsing, canonical hashing.

Configs are INI-style text with one section per block. Unknown sections
or keys are errors so typos cannot silently fall back to defaults. Every
field has a documented default reproducing the reference build: 21 mm
dome, 2 mm shell separation, 400 markers, object radii {-40, flat, +40}
mm, indentations up to 10 mm, 6 trials.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import math
from dataclasses import dataclass, field

from .errors import ConfigError
from .geometry import SensorGeometry
from .rendering import CameraModel, OpticalFilterModel, RadialLighting

__all__ = [
    "ProtocolConfig",
    "PipelineConfig",
    "ExperimentConfig",
    "default_config",
    "parse_config",
    "load_config",
    "dump_config",
    "config_hash",
    "radius_label",
]

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ProtocolConfig:
    """Measurement protocol: which objects, how deep, how often."""

    object_radii: tuple = (-40.0, math.inf, 40.0)
    indentation_schedule: tuple = (0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0)
    trials: int = 6
    seed: int = 7
    contact_axis: tuple = (0.0, 0.0, 1.0)


@dataclass(frozen=True)
class PipelineConfig:
    """Inverse-pipeline and forward-model parameters."""

    window: int = 21
    blur_sigma: float = 1.2
    illum_window: int = 41
    illum_sigma: float = 16.0
    hue_low: float = 150.0
    hue_high: float = 270.0
    min_saturation: float = 0.25
    min_blob_px: int = 16
    svd_cutoff: float = 1e-10
    noise_floor: float = 0.05
    tangential_gain: float = 0.2
    membrane_thickness: float = 4.0
    supersample: int = 4
    train_far_stride: int = 8
    train_contact_radius_factor: float = 2.5


@dataclass(frozen=True)
class ExperimentConfig:
    sensor: SensorGeometry = field(default_factory=lambda: SensorGeometry(21.0, 2.0, 400, 0.4))
    camera: CameraModel = field(default_factory=lambda: CameraModel(800, 800, 270.0))
    filters: OpticalFilterModel = field(default_factory=OpticalFilterModel)
    lighting: RadialLighting = field(default_factory=lambda: RadialLighting(0.15))
    noise_sigma: float = 2.0
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)

    @property
    def frames_per_trial(self) -> int:
        return len(self.protocol.indentation_schedule) + 1

    @property
    def total_frames(self) -> int:
        return (
            len(self.protocol.object_radii)
            * self.protocol.trials
            * self.frames_per_trial
        )


def default_config() -> ExperimentConfig:
    return ExperimentConfig()


def _parse_float(text: str) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"not a number: {text!r}") from exc


def _parse_int(text: str) -> int:
    try:
        return int(text)
    except ValueError as exc:
        raise ConfigError(f"not an integer: {text!r}") from exc


def _parse_float_list(text: str) -> tuple:
    return tuple(_parse_float(tok) for tok in text.split(",") if tok.strip())


def _parse_radius(tok: str) -> float:
    tok = tok.strip().lower()
    if tok in ("flat", "inf", "infinity"):
        return math.inf
    return _parse_float(tok)


def _parse_radius_list(text: str) -> tuple:
    return tuple(_parse_radius(tok) for tok in text.split(",") if tok.strip())


def _parse_seed(text: str):
    return None if text.strip().lower() == "none" else _parse_int(text)


def _fmt_value(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_fmt_value(v) for v in value)
    if isinstance(value, float):
        if math.isinf(value):
            return "flat"
        return repr(value)
    return str(value)


# section -> key -> (parser, getter producing the default-text value)
_SCHEMA = {
    "meta": {
        "schema_version": (_parse_int, lambda c: SCHEMA_VERSION),
    },
    "sensor": {
        "outer_radius_mm": (_parse_float, lambda c: c.sensor.outer_radius),
        "layer_separation_mm": (_parse_float, lambda c: c.sensor.layer_separation),
        "marker_count": (_parse_int, lambda c: c.sensor.marker_count),
        "marker_radius_mm": (_parse_float, lambda c: c.sensor.marker_radius),
        "inner_marker_scale": (_parse_float, lambda c: c.sensor.inner_marker_scale),
    },
    "camera": {
        "image_width": (_parse_int, lambda c: c.camera.image_width),
        "image_height": (_parse_int, lambda c: c.camera.image_height),
        "focal_scale_px": (_parse_float, lambda c: c.camera.focal_scale),
    },
    "optics": {
        "cyan_transmission": (_parse_float_list, lambda c: c.filters.cyan_transmission),
        "magenta_transmission": (_parse_float_list, lambda c: c.filters.magenta_transmission),
        "opacity_gain": (_parse_float, lambda c: c.filters.opacity_gain),
        "background_rgb": (_parse_float_list, lambda c: c.filters.background_color),
        "lighting_falloff": (_parse_float, lambda c: c.lighting.falloff),
        "noise_sigma": (_parse_float, lambda c: c.noise_sigma),
    },
    "protocol": {
        "object_radii_mm": (_parse_radius_list, lambda c: c.protocol.object_radii),
        "indentation_schedule_mm": (_parse_float_list, lambda c: c.protocol.indentation_schedule),
        "trials": (_parse_int, lambda c: c.protocol.trials),
        "seed": (_parse_seed, lambda c: c.protocol.seed),
        "contact_axis": (_parse_float_list, lambda c: c.protocol.contact_axis),
    },
    "pipeline": {
        "window_px": (_parse_int, lambda c: c.pipeline.window),
        "blur_sigma_px": (_parse_float, lambda c: c.pipeline.blur_sigma),
        "illumination_window_px": (_parse_int, lambda c: c.pipeline.illum_window),
        "illumination_sigma_px": (_parse_float, lambda c: c.pipeline.illum_sigma),
        "hue_low_deg": (_parse_float, lambda c: c.pipeline.hue_low),
        "hue_high_deg": (_parse_float, lambda c: c.pipeline.hue_high),
        "min_saturation": (_parse_float, lambda c: c.pipeline.min_saturation),
        "min_blob_px": (_parse_int, lambda c: c.pipeline.min_blob_px),
        "svd_cutoff": (_parse_float, lambda c: c.pipeline.svd_cutoff),
        "noise_floor_mm": (_parse_float, lambda c: c.pipeline.noise_floor),
        "tangential_gain": (_parse_float, lambda c: c.pipeline.tangential_gain),
        "membrane_thickness_mm": (_parse_float, lambda c: c.pipeline.membrane_thickness),
        "supersample": (_parse_int, lambda c: c.pipeline.supersample),
        "train_far_stride": (_parse_int, lambda c: c.pipeline.train_far_stride),
        "train_contact_radius_factor": (_parse_float, lambda c: c.pipeline.train_contact_radius_factor),
    },
}


def _build_config(values: dict) -> ExperimentConfig:
    try:
        sensor = SensorGeometry(
            outer_radius=values["sensor", "outer_radius_mm"],
            layer_separation=values["sensor", "layer_separation_mm"],
            marker_count=values["sensor", "marker_count"],
            marker_radius=values["sensor", "marker_radius_mm"],
            inner_marker_scale=values["sensor", "inner_marker_scale"],
        )
        camera = CameraModel(
            image_width=values["camera", "image_width"],
            image_height=values["camera", "image_height"],
            focal_scale=values["camera", "focal_scale_px"],
        )
        filters = OpticalFilterModel(
            cyan_transmission=values["optics", "cyan_transmission"],
            magenta_transmission=values["optics", "magenta_transmission"],
            opacity_gain=values["optics", "opacity_gain"],
            background_color=values["optics", "background_rgb"],
        )
        lighting = RadialLighting(falloff=values["optics", "lighting_falloff"])
    except Exception as exc:
        raise ConfigError(str(exc)) from exc

    protocol = ProtocolConfig(
        object_radii=values["protocol", "object_radii_mm"],
        indentation_schedule=values["protocol", "indentation_schedule_mm"],
        trials=values["protocol", "trials"],
        seed=values["protocol", "seed"],
        contact_axis=values["protocol", "contact_axis"],
    )
    pipeline = PipelineConfig(
        window=values["pipeline", "window_px"],
        blur_sigma=values["pipeline", "blur_sigma_px"],
        illum_window=values["pipeline", "illumination_window_px"],
        illum_sigma=values["pipeline", "illumination_sigma_px"],
        hue_low=values["pipeline", "hue_low_deg"],
        hue_high=values["pipeline", "hue_high_deg"],
        min_saturation=values["pipeline", "min_saturation"],
        min_blob_px=values["pipeline", "min_blob_px"],
        svd_cutoff=values["pipeline", "svd_cutoff"],
        noise_floor=values["pipeline", "noise_floor_mm"],
        tangential_gain=values["pipeline", "tangential_gain"],
        membrane_thickness=values["pipeline", "membrane_thickness_mm"],
        supersample=values["pipeline", "supersample"],
        train_far_stride=values["pipeline", "train_far_stride"],
        train_contact_radius_factor=values["pipeline", "train_contact_radius_factor"],
    )
    cfg = ExperimentConfig(
        sensor=sensor,
        camera=camera,
        filters=filters,
        lighting=lighting,
        noise_sigma=values["optics", "noise_sigma"],
        protocol=protocol,
        pipeline=pipeline,
    )
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    p = cfg.protocol
    if len(p.object_radii) < 1:
        raise ConfigError("need at least one object radius")
    if len(p.indentation_schedule) < 1:
        raise ConfigError("indentation schedule is empty")
    if any(d <= 0 for d in p.indentation_schedule):
        raise ConfigError("indentations must be positive (the baseline is implicit)")
    if any(b <= a for a, b in zip(p.indentation_schedule, p.indentation_schedule[1:])):
        raise ConfigError("indentation schedule must be strictly increasing")
    if p.trials < 1:
        raise ConfigError("trials must be >= 1")
    if cfg.noise_sigma < 0:
        raise ConfigError("noise_sigma must be >= 0")
    if cfg.noise_sigma > 0 and p.seed is None:
        raise ConfigError("a seed is required when noise_sigma > 0")
    if len(p.contact_axis) != 3 or p.contact_axis[2] <= 0:
        raise ConfigError("contact_axis must be a 3-vector into the upper half-space")
    q = cfg.pipeline
    if q.window % 2 != 1 or q.window < 3:
        raise ConfigError("window_px must be odd and >= 3")
    if not 0 < q.hue_low < q.hue_high <= 360:
        raise ConfigError("need 0 < hue_low < hue_high <= 360")
    if q.supersample < 1:
        raise ConfigError("supersample must be >= 1")
    if q.train_far_stride < 1:
        raise ConfigError("train_far_stride must be >= 1")
    for radius in p.object_radii:
        if radius < 0 and -radius <= cfg.sensor.outer_radius:
            raise ConfigError(
                f"concave object radius {radius} mm does not wrap the sensor"
            )


def parse_config(text: str) -> ExperimentConfig:
    """Parse INI text into a validated config; unknown keys are errors."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc

    defaults = default_config()
    values = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            parse, _ = _SCHEMA[section][key]
            values[section, key] = parse(raw)
    if values.pop(("meta", "schema_version"), SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError("unsupported schema_version")
    for section, keys in _SCHEMA.items():
        for key, (_, getter) in keys.items():
            if section == "meta":
                continue
            values.setdefault((section, key), getter(defaults))
    return _build_config(values)


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def dump_config(cfg: ExperimentConfig) -> str:
    """Canonical INI text: schema order, explicit values for every key."""
    out = io.StringIO()
    for section, keys in _SCHEMA.items():
        out.write(f"[{section}]\n")
        for key, (_, getter) in keys.items():
            out.write(f"{key} = {_fmt_value(getter(cfg))}\n")
        out.write("\n")
    return out.getvalue()


def config_hash(cfg: ExperimentConfig) -> str:
    """Stable digest of the fully resolved configuration."""
    return hashlib.sha256(dump_config(cfg).encode("ascii")).hexdigest()


def radius_label(radius: float) -> str:
    """Filesystem-safe label for an object radius: flat, rp40, rm40, ..."""
    if math.isinf(radius):
        return "flat"
    sign = "m" if radius < 0 else "p"
    mag = f"{abs(radius):g}".replace(".", "_")
    return f"r{sign}{mag}"
