"""The fifteen editing operations used to synthesize image copies.

Each transform is split into two phases:

* ``sample_transform`` draws every random decision up front from a
  :class:`numpy.random.Generator` and freezes it into a plain-data
  :class:`Transform` record (JSON-serializable params).
* ``apply_transform`` is a pure function of ``(image, transform, assets)``:
  no randomness, so replaying a manifest reproduces each copy exactly.

Geometry parameters are stored as fractions of the canvas, which keeps a
sampled transform valid at any intermediate image size.  The four overlay
kinds (``image_underlay``, ``emoji_overlay``, ``text_overlay``,
``image_overlay``) additionally return the normalized bounding box of the
pasted foreground; ``CANONICAL_ORDER`` places them after every
content-moving kind so the boxes stay truthful, and ``resize`` last because
uniform scaling preserves normalized coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from PIL import Image, ImageDraw, ImageEnhance, ImageFilter, ImageOps

from ..exceptions import FormatError, ValidationError
from .assets import AssetLibrary
from .config import AugmentConfig

_GRAY = (128, 128, 128)
_TEXT_CHARS = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789"
_REFERENCE_FONT_SIZE = 32
_MIN_FONT_SIZE = 8


class TransformKind(str, Enum):
    RESIZED_CROP = "resized_crop"
    ROTATION = "rotation"
    PERSPECTIVE = "perspective"
    HFLIP = "hflip"
    PADDING = "padding"
    PIXELIZATION = "pixelization"
    PIXEL_SHUFFLE = "pixel_shuffle"
    COLOR_JITTER = "color_jitter"
    BLUR = "blur"
    GRAYSCALE = "grayscale"
    IMAGE_UNDERLAY = "image_underlay"
    EMOJI_OVERLAY = "emoji_overlay"
    TEXT_OVERLAY = "text_overlay"
    IMAGE_OVERLAY = "image_overlay"
    RESIZE = "resize"


# Application order: content-moving kinds first, box-emitting overlays after
# them, resize last.  Overlays never displace existing pixels and leave the
# canvas size unchanged, so every emitted box survives to the final image.
CANONICAL_ORDER: tuple[TransformKind, ...] = (
    TransformKind.RESIZED_CROP,
    TransformKind.ROTATION,
    TransformKind.PERSPECTIVE,
    TransformKind.HFLIP,
    TransformKind.PADDING,
    TransformKind.PIXELIZATION,
    TransformKind.PIXEL_SHUFFLE,
    TransformKind.COLOR_JITTER,
    TransformKind.BLUR,
    TransformKind.GRAYSCALE,
    TransformKind.IMAGE_UNDERLAY,
    TransformKind.EMOJI_OVERLAY,
    TransformKind.TEXT_OVERLAY,
    TransformKind.IMAGE_OVERLAY,
    TransformKind.RESIZE,
)

OVERLAY_KINDS = frozenset({
    TransformKind.IMAGE_UNDERLAY,
    TransformKind.EMOJI_OVERLAY,
    TransformKind.TEXT_OVERLAY,
    TransformKind.IMAGE_OVERLAY,
})

Box = tuple[float, float, float, float]


@dataclass(frozen=True)
class Transform:
    """One sampled edit: a kind plus its frozen parameters."""

    kind: TransformKind
    params: Mapping[str, Any]

    def as_dict(self) -> dict[str, Any]:
        return {"kind": self.kind.value, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Transform":
        try:
            kind = TransformKind(data["kind"])
        except (KeyError, ValueError) as exc:
            raise FormatError(f"bad transform record: {data!r}") from exc
        params = data.get("params", {})
        if not isinstance(params, Mapping):
            raise FormatError(f"transform params must be a mapping, got {params!r}")
        return cls(kind=kind, params=dict(params))


def _f(x: Any) -> float:
    return float(x)


def _rgb(rng: np.random.Generator) -> list[int]:
    return [int(v) for v in rng.integers(0, 256, size=3)]


def _crop_attempt(rng: np.random.Generator, cfg: AugmentConfig) -> list[float]:
    scale = _f(rng.uniform(*cfg.crop_scale))
    log_ratio = _f(rng.uniform(math.log(cfg.crop_ratio[0]), math.log(cfg.crop_ratio[1])))
    return [scale, log_ratio, _f(rng.uniform()), _f(rng.uniform())]


def sample_transform(
    kind: TransformKind,
    rng: np.random.Generator,
    config: AugmentConfig,
    *,
    partner_ids: Sequence[str] = (),
    emoji_names: Sequence[str] = (),
    output_size: int = 256,
) -> Transform:
    """Draw one transform's parameters; consumes rng in a fixed order."""
    cfg = config
    p: dict[str, Any]
    if kind is TransformKind.RESIZED_CROP:
        # Two pre-drawn attempts: apply retries once if the first does not fit.
        p = {"attempts": [_crop_attempt(rng, cfg), _crop_attempt(rng, cfg)]}
    elif kind is TransformKind.ROTATION:
        p = {"degrees": _f(rng.uniform(-cfg.rotation_degrees, cfg.rotation_degrees))}
    elif kind is TransformKind.PERSPECTIVE:
        half = cfg.perspective_distortion / 2.0
        p = {"shift": [[_f(rng.uniform(0.0, half)), _f(rng.uniform(0.0, half))] for _ in range(4)]}
    elif kind is TransformKind.HFLIP:
        p = {}
    elif kind is TransformKind.PADDING:
        p = {
            "fractions": [_f(rng.uniform(0.0, cfg.padding_fraction)) for _ in range(4)],
            "color": _rgb(rng),
        }
    elif kind is TransformKind.PIXELIZATION:
        p = {"block": int(rng.integers(cfg.pixelization_block[0], cfg.pixelization_block[1] + 1))}
    elif kind is TransformKind.PIXEL_SHUFFLE:
        grid = int(rng.integers(cfg.shuffle_grid[0], cfg.shuffle_grid[1] + 1))
        p = {"grid": grid, "perm": [int(i) for i in rng.permutation(grid * grid)]}
    elif kind is TransformKind.COLOR_JITTER:
        s = cfg.jitter_strength
        p = {
            "brightness": _f(rng.uniform(1.0 - s, 1.0 + s)),
            "contrast": _f(rng.uniform(1.0 - s, 1.0 + s)),
            "saturation": _f(rng.uniform(1.0 - s, 1.0 + s)),
            "hue": _f(rng.uniform(-cfg.hue_strength, cfg.hue_strength)),
        }
    elif kind is TransformKind.BLUR:
        p = {"sigma": _f(rng.uniform(*cfg.blur_sigma))}
    elif kind is TransformKind.GRAYSCALE:
        p = {}
    elif kind is TransformKind.IMAGE_UNDERLAY or kind is TransformKind.IMAGE_OVERLAY:
        partner = None
        if partner_ids:
            partner = str(rng.choice(np.asarray(partner_ids, dtype=object)))
        p = {
            "area": _f(rng.uniform(*cfg.overlay_area)),
            "pos": [_f(rng.uniform()), _f(rng.uniform())],
            "partner": partner,
            "color": _rgb(rng),  # flat fallback when no partner is available
        }
    elif kind is TransformKind.EMOJI_OVERLAY:
        if not emoji_names:
            raise ValidationError("emoji_overlay sampled without any emoji assets")
        p = {
            "asset": str(rng.choice(np.asarray(emoji_names, dtype=object))),
            "area": _f(rng.uniform(*cfg.overlay_area)),
            "pos": [_f(rng.uniform()), _f(rng.uniform())],
        }
    elif kind is TransformKind.TEXT_OVERLAY:
        length = int(rng.integers(cfg.text_length[0], cfg.text_length[1] + 1))
        chars = rng.choice(np.asarray(list(_TEXT_CHARS), dtype=object), size=length)
        p = {
            "text": "".join(str(c) for c in chars),
            "area": _f(rng.uniform(*cfg.overlay_area)),
            "pos": [_f(rng.uniform()), _f(rng.uniform())],
            "color": _rgb(rng),
        }
    elif kind is TransformKind.RESIZE:
        p = {"size": int(output_size)}
    else:  # pragma: no cover - exhaustive enum
        raise ValidationError(f"unknown transform kind {kind!r}")
    return Transform(kind=kind, params=p)


def sample_copy_transforms(
    rng: np.random.Generator,
    config: AugmentConfig,
    *,
    partner_ids: Sequence[str] = (),
    emoji_names: Sequence[str] = (),
    output_size: int = 256,
) -> list[Transform]:
    """Sample the edit list for one copy.

    Draws ``min_transforms..max_transforms`` distinct kinds uniformly from
    the full catalogue, orders them canonically, and always terminates with
    a resize to ``output_size`` (a drawn resize merges with that final one).
    """
    lo, hi = config.min_transforms, config.max_transforms
    count = int(rng.integers(lo, hi + 1))
    picked = rng.choice(len(CANONICAL_ORDER), size=count, replace=False)
    kinds = [CANONICAL_ORDER[i] for i in sorted(int(i) for i in picked)]
    kinds = [k for k in kinds if k is not TransformKind.RESIZE]
    kinds.append(TransformKind.RESIZE)
    return [
        sample_transform(
            k, rng, config,
            partner_ids=partner_ids, emoji_names=emoji_names, output_size=output_size,
        )
        for k in kinds
    ]


def _apply_resized_crop(img: Image.Image, t: Transform, assets: AssetLibrary) -> Image.Image:
    w, h = img.size
    for scale, log_ratio, ux, uy in t.params["attempts"]:
        area = scale * w * h
        ratio = math.exp(log_ratio)
        cw = int(round(math.sqrt(area * ratio)))
        ch = int(round(math.sqrt(area / ratio)))
        if 1 <= cw <= w and 1 <= ch <= h:
            left = int(round(ux * (w - cw)))
            top = int(round(uy * (h - ch)))
            return img.crop((left, top, left + cw, top + ch))
    raise ValidationError(f"degenerate crop: no attempt fits a {w}x{h} image")


def _apply_rotation(img: Image.Image, t: Transform, assets: AssetLibrary) -> Image.Image:
    return img.rotate(
        t.params["degrees"], resample=Image.BILINEAR, expand=True, fillcolor=_GRAY
    )


def _perspective_coeffs(src: Sequence[Sequence[float]], dst: Sequence[Sequence[float]]) -> list[float]:
    # Projective coefficients mapping dst -> src, PIL's transform convention.
    a = np.zeros((8, 8), dtype=np.float64)
    b = np.zeros(8, dtype=np.float64)
    for i, ((xs, ys), (xd, yd)) in enumerate(zip(src, dst)):
        a[2 * i] = [xd, yd, 1.0, 0.0, 0.0, 0.0, -xs * xd, -xs * yd]
        a[2 * i + 1] = [0.0, 0.0, 0.0, xd, yd, 1.0, -ys * xd, -ys * yd]
        b[2 * i] = xs
        b[2 * i + 1] = ys
    return [float(c) for c in np.linalg.solve(a, b)]


def _apply_perspective(img: Image.Image, t: Transform, assets: AssetLibrary) -> Image.Image:
    w, h = img.size
    shifts = t.params["shift"]
    src = [(0.0, 0.0), (w - 1.0, 0.0), (w - 1.0, h - 1.0), (0.0, h - 1.0)]
    inward = [(1, 1), (-1, 1), (-1, -1), (1, -1)]
    dst = [
        (x + sx * round(fx * w), y + sy * round(fy * h))
        for (x, y), (sx, sy), (fx, fy) in zip(src, inward, shifts)
    ]
    coeffs = _perspective_coeffs(src, dst)
    return img.transform((w, h), Image.PERSPECTIVE, coeffs, resample=Image.BILINEAR, fillcolor=_GRAY)


def _apply_hflip(img: Image.Image, t: Transform, assets: AssetLibrary) -> Image.Image:
    return ImageOps.mirror(img)


def _apply_padding(img: Image.Image, t: Transform, assets: AssetLibrary) -> Image.Image:
    w, h = img.size
    fl, ft, fr, fb = t.params["fractions"]
    border = (round(fl * w), round(ft * h), round(fr * w), round(fb * h))
    return ImageOps.expand(img, border=border, fill=tuple(t.params["color"]))


def _apply_pixelization(img: Image.Image, t: Transform, assets: AssetLibrary) -> Image.Image:
    w, h = img.size
    block = t.params["block"]
    small = img.resize((max(1, w // block), max(1, h // block)), Image.BOX)
    return small.resize((w, h), Image.NEAREST)


def _apply_pixel_shuffle(img: Image.Image, t: Transform, assets: AssetLibrary) -> Image.Image:
    g = t.params["grid"]
    w, h = img.size
    if w < g or h < g:  # image too small to tile; no-op
        return img
    wg, hg = (w // g) * g, (h // g) * g
    arr = np.asarray(img)[:hg, :wg]
    th, tw = hg // g, wg // g
    tiles = arr.reshape(g, th, g, tw, 3).swapaxes(1, 2).reshape(g * g, th, tw, 3)
    perm = np.asarray(t.params["perm"], dtype=np.intp)
    out = tiles[perm].reshape(g, g, th, tw, 3).swapaxes(1, 2).reshape(hg, wg, 3)
    return Image.fromarray(out)


def _apply_color_jitter(img: Image.Image, t: Transform, assets: AssetLibrary) -> Image.Image:
    p = t.params
    img = ImageEnhance.Brightness(img).enhance(p["brightness"])
    img = ImageEnhance.Contrast(img).enhance(p["contrast"])
    img = ImageEnhance.Color(img).enhance(p["saturation"])
    shift = int(round(p["hue"] * 255.0)) % 256
    hsv = np.array(img.convert("HSV"))
    hsv[..., 0] = ((hsv[..., 0].astype(np.int16) + shift) % 256).astype(np.uint8)
    return Image.fromarray(hsv, "HSV").convert("RGB")


def _apply_blur(img: Image.Image, t: Transform, assets: AssetLibrary) -> Image.Image:
    return img.filter(ImageFilter.GaussianBlur(radius=t.params["sigma"]))


def _apply_grayscale(img: Image.Image, t: Transform, assets: AssetLibrary) -> Image.Image:
    return img.convert("L").convert("RGB")


def _apply_resize(img: Image.Image, t: Transform, assets: AssetLibrary) -> Image.Image:
    size = t.params["size"]
    return img.resize((size, size), Image.BILINEAR)


def _foreground_geometry(w: int, h: int, area: float, pos: Sequence[float]) -> tuple[int, int, int, int]:
    # Scale both dimensions by sqrt(area) so the paste covers ~area of the canvas.
    s = math.sqrt(area)
    fw = min(w, max(1, int(round(w * s))))
    fh = min(h, max(1, int(round(h * s))))
    left = int(round(pos[0] * (w - fw)))
    top = int(round(pos[1] * (h - fh)))
    return left, top, fw, fh


def _norm_box(left: float, top: float, bw: float, bh: float, w: int, h: int) -> Box:
    # Clip to the canvas, then normalize; callers guarantee a nonempty core.
    x0, y0 = max(0.0, left), max(0.0, top)
    x1, y1 = min(float(w), left + bw), min(float(h), top + bh)
    return ((x0 + x1) / 2.0 / w, (y0 + y1) / 2.0 / h, (x1 - x0) / w, (y1 - y0) / h)


def _partner_image(t: Transform, assets: AssetLibrary, size: tuple[int, int]) -> Image.Image:
    pid = t.params.get("partner")
    if pid is not None:
        return assets.partner(pid).resize(size, Image.BILINEAR)
    return Image.new("RGB", size, tuple(t.params["color"]))


def _apply_image_underlay(img: Image.Image, t: Transform, assets: AssetLibrary) -> tuple[Image.Image, Box]:
    w, h = img.size
    left, top, fw, fh = _foreground_geometry(w, h, t.params["area"], t.params["pos"])
    canvas = _partner_image(t, assets, (w, h))
    canvas.paste(img.resize((fw, fh), Image.BILINEAR), (left, top))
    return canvas, _norm_box(left, top, fw, fh, w, h)


def _apply_image_overlay(img: Image.Image, t: Transform, assets: AssetLibrary) -> tuple[Image.Image, Box]:
    w, h = img.size
    left, top, fw, fh = _foreground_geometry(w, h, t.params["area"], t.params["pos"])
    out = img.copy()
    out.paste(_partner_image(t, assets, (fw, fh)), (left, top))
    return out, _norm_box(left, top, fw, fh, w, h)


def _apply_emoji_overlay(img: Image.Image, t: Transform, assets: AssetLibrary) -> tuple[Image.Image, Box]:
    w, h = img.size
    side = int(round(math.sqrt(t.params["area"] * w * h)))
    side = min(side, w, h)
    side = max(side, 1)
    sprite = assets.load_emoji(t.params["asset"]).resize((side, side), Image.BILINEAR)
    left = int(round(t.params["pos"][0] * (w - side)))
    top = int(round(t.params["pos"][1] * (h - side)))
    out = img.copy()
    out.paste(sprite, (left, top), sprite)
    return out, _norm_box(left, top, side, side, w, h)


def _apply_text_overlay(img: Image.Image, t: Transform, assets: AssetLibrary) -> tuple[Image.Image, Box]:
    w, h = img.size
    text = t.params["text"]
    draw = ImageDraw.Draw(img.copy())

    def measure(size: int) -> tuple[int, int, int, int]:
        bbox = draw.textbbox((0, 0), text, font=assets.font(size), anchor="la")
        return bbox

    l0, t0, r0, b0 = measure(_REFERENCE_FONT_SIZE)
    ref_area = max(1, (r0 - l0) * (b0 - t0))
    target = t.params["area"] * w * h
    size = max(_MIN_FONT_SIZE, int(round(_REFERENCE_FONT_SIZE * math.sqrt(target / ref_area))))
    l0, t0, r0, b0 = measure(size)
    while size > _MIN_FONT_SIZE and (r0 - l0 > w or b0 - t0 > h):
        size = max(_MIN_FONT_SIZE, size - 2)
        l0, t0, r0, b0 = measure(size)
    tw, th = r0 - l0, b0 - t0
    left = int(round(t.params["pos"][0] * max(0, w - tw)))
    top = int(round(t.params["pos"][1] * max(0, h - th)))
    out = img.copy()
    ImageDraw.Draw(out).text(
        (left - l0, top - t0), text,
        font=assets.font(size), fill=tuple(t.params["color"]), anchor="la",
    )
    return out, _norm_box(left, top, tw, th, w, h)


_PLAIN: dict[TransformKind, Callable[[Image.Image, Transform, AssetLibrary], Image.Image]] = {
    TransformKind.RESIZED_CROP: _apply_resized_crop,
    TransformKind.ROTATION: _apply_rotation,
    TransformKind.PERSPECTIVE: _apply_perspective,
    TransformKind.HFLIP: _apply_hflip,
    TransformKind.PADDING: _apply_padding,
    TransformKind.PIXELIZATION: _apply_pixelization,
    TransformKind.PIXEL_SHUFFLE: _apply_pixel_shuffle,
    TransformKind.COLOR_JITTER: _apply_color_jitter,
    TransformKind.BLUR: _apply_blur,
    TransformKind.GRAYSCALE: _apply_grayscale,
    TransformKind.RESIZE: _apply_resize,
}

_WITH_BOX: dict[TransformKind, Callable[[Image.Image, Transform, AssetLibrary], tuple[Image.Image, Box]]] = {
    TransformKind.IMAGE_UNDERLAY: _apply_image_underlay,
    TransformKind.EMOJI_OVERLAY: _apply_emoji_overlay,
    TransformKind.TEXT_OVERLAY: _apply_text_overlay,
    TransformKind.IMAGE_OVERLAY: _apply_image_overlay,
}


def apply_transform(
    img: Image.Image,
    t: Transform,
    assets: AssetLibrary | None = None,
) -> tuple[Image.Image, Box | None]:
    """Apply one transform; returns the edited image and, for overlay
    kinds, the normalized (cx, cy, w, h) box of the pasted foreground.

    Deterministic: all randomness was consumed at sampling time.
    """
    if img.size[0] < 1 or img.size[1] < 1:
        raise ValidationError("cannot transform an empty image")
    if img.mode != "RGB":
        img = img.convert("RGB")
    if assets is None:
        assets = AssetLibrary.bundled()
    if t.kind in _WITH_BOX:
        out, box = _WITH_BOX[t.kind](img, t, assets)
        return out, box
    return _PLAIN[t.kind](img, t, assets), None


def apply_all(
    img: Image.Image,
    transforms: Sequence[Transform],
    assets: AssetLibrary | None = None,
) -> tuple[Image.Image, list[Box]]:
    """Apply a transform list in order, collecting overlay boxes."""
    if assets is None:
        assets = AssetLibrary.bundled()
    boxes: list[Box] = []
    for t in transforms:
        img, box = apply_transform(img, t, assets)
        if box is not None:
            boxes.append(box)
    return img, boxes
