"""Pipeline configuration: defaults, validation, and key=value parsing.

Config files are plain text, one ``key=value`` per line, ``#`` comments
allowed. Every field of :class:`PipelineConfig` is addressable by name;
unknown keys are an error.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

MODES = ("markov", "exemplar", "two_stage")


@dataclass(frozen=True)
class PipelineConfig:
    mode: str = "two_stage"
    temperature: float = 0.05
    top_k: int = 8
    confidence_floor: float = 0.3
    blend_bias: float = 0.7
    search_radius: int = 4
    flow_levels: int = 3
    smoothing_strength: int = 2
    smoothing_edge_threshold: float = 10.0
    histogram_bins: int = 256
    perceptual_weights: tuple[float, ...] = (0.02, 0.003, 0.5)
    lambda_cdc: float = 1.0
    lambda_temp: float = 1.0
    lambda_perc: float = 1.0
    lambda_l1: float = 1.0
    lambda_frechet: float = 1.0
    cdc_strides: tuple[int, ...] = (1,)
    feature_levels: int = 4
    pca_components: int = 64
    min_side: int = 128
    min_colorfulness: float = 8.0
    max_corr_grid: int = 64
    scene_cut_guard: bool = False
    scene_cut_threshold: float = 20.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "perceptual_weights", tuple(float(w) for w in self.perceptual_weights))
        object.__setattr__(self, "cdc_strides", tuple(int(s) for s in self.cdc_strides))
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.top_k < 1:
            raise ValueError("top_k must be at least 1")
        if not 0.0 <= self.confidence_floor <= 1.0:
            raise ValueError("confidence_floor must lie in [0, 1]")
        if not 0.0 <= self.blend_bias <= 1.0:
            raise ValueError("blend_bias must lie in [0, 1]")
        if self.search_radius < 1:
            raise ValueError("search_radius must be at least 1")
        if self.flow_levels < 1:
            raise ValueError("flow_levels must be at least 1")
        if self.smoothing_strength < 0:
            raise ValueError("smoothing_strength must be nonnegative")
        if self.smoothing_edge_threshold <= 0:
            raise ValueError("smoothing_edge_threshold must be positive")
        if self.histogram_bins < 2:
            raise ValueError("histogram_bins must be at least 2")
        if len(self.perceptual_weights) != 3 or any(w <= 0 for w in self.perceptual_weights):
            raise ValueError("perceptual_weights must be three positive values")
        for name in ("lambda_cdc", "lambda_temp", "lambda_perc", "lambda_l1", "lambda_frechet"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not self.cdc_strides or any(s < 1 for s in self.cdc_strides):
            raise ValueError("cdc_strides must be positive")
        if self.feature_levels < 3:
            raise ValueError("feature_levels must be at least 3")
        if self.pca_components < 1:
            raise ValueError("pca_components must be at least 1")
        if self.min_side < 1:
            raise ValueError("min_side must be positive")
        if self.min_colorfulness < 0:
            raise ValueError("min_colorfulness must be nonnegative")
        if self.max_corr_grid < 1:
            raise ValueError("max_corr_grid must be positive")
        if self.scene_cut_threshold <= 0:
            raise ValueError("scene_cut_threshold must be positive")

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    def replace(self, **kwargs) -> "PipelineConfig":
        return dataclasses.replace(self, **kwargs)


def _parse_value(field: dataclasses.Field, raw: str):
    text = raw.strip()
    if field.type.startswith("tuple"):
        parts = [p for p in text.split(",") if p.strip()]
        elem = int if "int" in field.type else float
        return tuple(elem(p) for p in parts)
    if field.type == "bool":
        lowered = text.lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"cannot parse boolean from {text!r}")
    if field.type == "int":
        return int(text)
    if field.type == "float":
        return float(text)
    return text


def config_from_pairs(pairs: dict[str, str], base: PipelineConfig | None = None) -> PipelineConfig:
    """Build a config from string key=value pairs over ``base`` (or defaults)."""
    base = base or PipelineConfig()
    fields = {f.name: f for f in dataclasses.fields(PipelineConfig)}
    updates = {}
    for key, raw in pairs.items():
        if key not in fields:
            raise ValueError(f"unknown config key {key!r}")
        try:
            updates[key] = _parse_value(fields[key], raw)
        except ValueError as exc:
            raise ValueError(f"bad value for {key!r}: {exc}") from exc
    return base.replace(**updates)


def load_config(path: str | Path, base: PipelineConfig | None = None) -> PipelineConfig:
    """Parse a key=value config file."""
    pairs: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = stripped.partition("=")
        pairs[key.strip()] = value
    return config_from_pairs(pairs, base=base)
