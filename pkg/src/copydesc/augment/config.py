"""Parameter ranges for the augmentation suite.

The transform catalogue is fixed; the per-kind parameter magnitudes below
are project defaults, chosen for visibly edited but recognizable copies.
Every range can be overridden from a TOML file, so none of these numbers
is load-bearing for correctness, only for corpus flavor.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..exceptions import FormatError, ValidationError

_KIND_COUNT = 15


@dataclass(frozen=True)
class AugmentConfig:
    """Sampling ranges for every transform kind.

    Two-element tuples are inclusive ``(low, high)`` ranges; scalars are
    symmetric half-widths (rotation degrees, jitter strengths) or per-side
    maxima (padding).  ``min_transforms``/``max_transforms`` bound how many
    kinds are drawn per copy before the mandatory final resize.
    """

    crop_scale: tuple[float, float] = (0.3, 1.0)
    crop_ratio: tuple[float, float] = (0.75, 4.0 / 3.0)
    rotation_degrees: float = 45.0
    pixelization_block: tuple[int, int] = (4, 16)
    shuffle_grid: tuple[int, int] = (2, 4)
    perspective_distortion: float = 0.5
    padding_fraction: float = 0.25
    jitter_strength: float = 0.4
    hue_strength: float = 0.1
    blur_sigma: tuple[float, float] = (0.5, 3.0)
    overlay_area: tuple[float, float] = (0.3, 0.8)
    text_length: tuple[int, int] = (4, 12)
    min_transforms: int = 1
    max_transforms: int = 4

    def __post_init__(self) -> None:
        for name in ("crop_scale", "crop_ratio", "blur_sigma", "overlay_area"):
            lo, hi = getattr(self, name)
            if not (0.0 < lo <= hi):
                raise ValidationError(f"{name} must satisfy 0 < low <= high, got ({lo}, {hi})")
        for name in ("pixelization_block", "shuffle_grid", "text_length"):
            lo, hi = getattr(self, name)
            if not (1 <= lo <= hi):
                raise ValidationError(f"{name} must satisfy 1 <= low <= high, got ({lo}, {hi})")
        if self.crop_scale[1] > 1.0:
            raise ValidationError("crop_scale high bound cannot exceed 1.0")
        if self.overlay_area[1] > 1.0:
            raise ValidationError("overlay_area high bound cannot exceed 1.0")
        if self.shuffle_grid[0] < 2:
            raise ValidationError("shuffle_grid low bound must be >= 2")
        for name in ("rotation_degrees", "perspective_distortion", "padding_fraction",
                     "jitter_strength", "hue_strength"):
            v = getattr(self, name)
            if not 0.0 <= v:
                raise ValidationError(f"{name} must be >= 0, got {v}")
        if self.perspective_distortion > 1.0:
            raise ValidationError("perspective_distortion must be <= 1.0")
        if self.jitter_strength >= 1.0:
            raise ValidationError("jitter_strength must be < 1.0")
        if self.hue_strength > 0.5:
            raise ValidationError("hue_strength must be <= 0.5 (half a hue turn)")
        if self.padding_fraction > 1.0:
            raise ValidationError("padding_fraction must be <= 1.0 per side")
        if not (1 <= self.min_transforms <= self.max_transforms <= _KIND_COUNT):
            raise ValidationError(
                "need 1 <= min_transforms <= max_transforms <= "
                f"{_KIND_COUNT}, got ({self.min_transforms}, {self.max_transforms})"
            )

    def as_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any]) -> "AugmentConfig":
        """Build a config from a flat mapping; unknown keys are rejected."""
        names = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(mapping) - set(names))
        if unknown:
            raise FormatError(f"unknown augment config keys: {', '.join(unknown)}")
        kwargs: dict[str, Any] = {}
        for key, value in mapping.items():
            default = names[key].default
            if isinstance(default, tuple):
                if not (isinstance(value, (list, tuple)) and len(value) == 2):
                    raise FormatError(f"{key} must be a 2-element array, got {value!r}")
                caster = int if isinstance(default[0], int) else float
                kwargs[key] = (caster(value[0]), caster(value[1]))
            elif isinstance(default, int):
                kwargs[key] = int(value)
            else:
                kwargs[key] = float(value)
        return cls(**kwargs)

    @classmethod
    def from_toml(cls, path: str | Path) -> "AugmentConfig":
        """Load overrides from a TOML file.

        Keys may live at the top level or under an ``[augment]`` table;
        fields not mentioned keep their defaults.
        """
        with open(path, "rb") as fh:
            try:
                data = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise FormatError(f"invalid TOML in {path}: {exc}") from exc
        table = data.get("augment", data)
        if not isinstance(table, Mapping):
            raise FormatError(f"[augment] section in {path} must be a table")
        return cls.from_mapping(table)
