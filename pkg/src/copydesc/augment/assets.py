"""Overlay assets: emoji sprites, the bundled font, and partner images.

Assets are data inputs, not code.  The package ships a small default set
(``assets/emoji/*.png`` and ``assets/fonts/DejaVuSans.ttf``); corpus
generation additionally registers the other source images as partners for
the image overlay and underlay kinds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Mapping

from PIL import Image, ImageFont, UnidentifiedImageError

from ..exceptions import FormatError


@lru_cache(maxsize=64)
def _load_font(path: str, size: int) -> ImageFont.FreeTypeFont:
    return ImageFont.truetype(path, size)


def bundled_asset_root() -> Path:
    return Path(str(resources.files("copydesc.augment"))) / "assets"


@dataclass(frozen=True)
class AssetLibrary:
    """Resolves overlay asset names to loaded images and fonts."""

    emoji_dir: Path
    font_path: Path
    partner_paths: Mapping[str, Path] = field(default_factory=dict)

    @classmethod
    def bundled(cls, partner_paths: Mapping[str, Path] | None = None) -> "AssetLibrary":
        root = bundled_asset_root()
        return cls(
            emoji_dir=root / "emoji",
            font_path=root / "fonts" / "DejaVuSans.ttf",
            partner_paths=dict(partner_paths or {}),
        )

    def emoji_names(self) -> tuple[str, ...]:
        if not self.emoji_dir.is_dir():
            raise FormatError(f"emoji asset directory not found: {self.emoji_dir}")
        return tuple(sorted(p.stem for p in self.emoji_dir.glob("*.png")))

    def load_emoji(self, name: str) -> Image.Image:
        path = self.emoji_dir / f"{name}.png"
        if not path.is_file():
            raise FormatError(f"missing emoji asset: {path}")
        with Image.open(path) as img:
            return img.convert("RGBA")

    def font(self, size: int) -> ImageFont.FreeTypeFont:
        if not self.font_path.is_file():
            raise FormatError(f"missing font asset: {self.font_path}")
        return _load_font(str(self.font_path), int(size))

    def partner(self, partner_id: str) -> Image.Image:
        try:
            path = self.partner_paths[partner_id]
        except KeyError:
            raise FormatError(f"missing partner image: {partner_id!r}") from None
        try:
            with Image.open(path) as img:
                return img.convert("RGB")
        except (OSError, UnidentifiedImageError) as exc:
            raise FormatError(f"unreadable partner image {path}: {exc}") from exc
