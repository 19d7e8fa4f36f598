"""Corpus generation: edited copies, manifest, truth pairs, box labels.

Layout under the output directory::

    copies/<source>_<index>.png   edited copies (always PNG)
    manifest.json                 plan, config, and one record per copy
    truth.csv                     copy -> source ground truth pairs
    labels/<copy_id>.txt          YOLO-style boxes for copies with overlays

Generation is parallel across copies, yet byte-reproducible for a fixed
master seed: each copy's randomness comes from its own derived stream
(see :mod:`copydesc.augment.rng`), outputs go to distinct files, and the
manifest is assembled in sorted order after all workers finish.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from PIL import Image, UnidentifiedImageError

from ..exceptions import FormatError, ValidationError
from ..io import write_truth
from ..metrics import GroundTruth
from .assets import AssetLibrary
from .config import AugmentConfig
from .rng import copy_rng, derive_seed
from .transforms import Box, Transform, apply_all, sample_copy_transforms

logger = logging.getLogger("copydesc.augment")

_SOURCE_SUFFIXES = {".png", ".jpg", ".jpeg"}
MANIFEST_FORMAT = "copydesc-corpus/1"


@dataclass(frozen=True)
class CorpusPlan:
    """How many copies to make and how to size them."""

    copies_per_source: int = 19
    output_size: int = 256
    source_stride: int = 1

    def __post_init__(self) -> None:
        if self.copies_per_source < 1:
            raise ValidationError(f"copies_per_source must be >= 1, got {self.copies_per_source}")
        if self.output_size < 1:
            raise ValidationError(f"output_size must be >= 1, got {self.output_size}")
        if self.source_stride < 1:
            raise ValidationError(f"source_stride must be >= 1, got {self.source_stride}")

    def as_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class AugRecord:
    """Provenance of one generated copy.

    Replaying ``transforms`` on the source reproduces the copy exactly;
    ``boxes`` are the normalized (cx, cy, w, h) foreground boxes emitted by
    overlay transforms, in application order.
    """

    source_id: str
    copy_id: str
    seed: int
    transforms: tuple[Transform, ...]
    boxes: tuple[Box, ...] = ()

    def __post_init__(self) -> None:
        for cx, cy, w, h in self.boxes:
            ok = 0.0 <= cx <= 1.0 and 0.0 <= cy <= 1.0 and 0.0 < w <= 1.0 and 0.0 < h <= 1.0
            if not ok:
                raise ValidationError(f"box out of range for {self.copy_id}: {(cx, cy, w, h)}")

    def as_dict(self) -> dict[str, Any]:
        return {
            "source_id": self.source_id,
            "copy_id": self.copy_id,
            "seed": f"{self.seed:032x}",
            "transforms": [t.as_dict() for t in self.transforms],
            "boxes": [list(b) for b in self.boxes],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "AugRecord":
        try:
            return cls(
                source_id=str(data["source_id"]),
                copy_id=str(data["copy_id"]),
                seed=int(str(data["seed"]), 16),
                transforms=tuple(Transform.from_dict(t) for t in data["transforms"]),
                boxes=tuple(tuple(float(v) for v in b) for b in data.get("boxes", [])),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"bad manifest record: {exc}") from exc


@dataclass(frozen=True)
class CorpusResult:
    out_dir: Path
    copies_dir: Path
    manifest_path: Path
    truth_path: Path
    records: tuple[AugRecord, ...]
    skipped: tuple[str, ...] = ()


def list_sources(src_dir: str | Path, stride: int = 1) -> list[tuple[str, Path]]:
    """Usable (source_id, path) pairs, sorted by filename, strided.

    Unreadable files are skipped with a warning; duplicate stems are an
    error because source ids must be unique.
    """
    src = Path(src_dir)
    if not src.is_dir():
        raise FormatError(f"source directory not found: {src}")
    paths = sorted(
        (p for p in src.iterdir() if p.suffix.lower() in _SOURCE_SUFFIXES),
        key=lambda p: p.name,
    )
    paths = paths[::stride]
    usable: list[tuple[str, Path]] = []
    seen: set[str] = set()
    for path in paths:
        try:
            with Image.open(path) as img:
                img.verify()
        except (OSError, UnidentifiedImageError) as exc:
            logger.warning("skip source=%s reason=%s", path.name, exc)
            continue
        if path.stem in seen:
            raise FormatError(f"duplicate source id {path.stem!r} in {src}")
        seen.add(path.stem)
        usable.append((path.stem, path))
    return usable


def _load_rgb(path: Path) -> Image.Image:
    with Image.open(path) as img:
        return img.convert("RGB")


def _make_copy(
    source_id: str,
    source_path: Path,
    copy_index: int,
    master_seed: int,
    plan: CorpusPlan,
    config: AugmentConfig,
    assets: AssetLibrary,
    partner_ids: Sequence[str],
    emoji_names: Sequence[str],
    copies_dir: Path,
) -> AugRecord:
    rng = copy_rng(master_seed, source_id, copy_index)
    transforms = sample_copy_transforms(
        rng, config,
        partner_ids=partner_ids, emoji_names=emoji_names, output_size=plan.output_size,
    )
    img, boxes = apply_all(_load_rgb(source_path), transforms, assets)
    copy_id = f"{source_id}_{copy_index:03d}"
    img.save(copies_dir / f"{copy_id}.png", format="PNG")
    return AugRecord(
        source_id=source_id,
        copy_id=copy_id,
        seed=derive_seed(master_seed, source_id, copy_index),
        transforms=tuple(transforms),
        boxes=tuple(boxes),
    )


def generate_corpus(
    src_dir: str | Path,
    out_dir: str | Path,
    plan: CorpusPlan | None = None,
    master_seed: int = 0,
    *,
    config: AugmentConfig | None = None,
    assets: AssetLibrary | None = None,
    threads: int = 0,
) -> CorpusResult:
    """Generate ``copies_per_source`` edited copies of every usable source.

    ``threads=0`` picks the CPU count; any thread count yields identical
    bytes.  Raises if no source image is usable.
    """
    plan = plan or CorpusPlan()
    config = config or AugmentConfig()
    out = Path(out_dir)
    copies_dir = out / "copies"
    copies_dir.mkdir(parents=True, exist_ok=True)

    sources = list_sources(src_dir, plan.source_stride)
    if not sources:
        raise ValidationError(f"no usable source images in {src_dir}")
    all_skipped = tuple(
        p.name for p in sorted(Path(src_dir).iterdir())
        if p.suffix.lower() in _SOURCE_SUFFIXES
    )
    skipped = tuple(name for name in all_skipped
                    if Path(name).stem not in {sid for sid, _ in sources})

    partner_map = {sid: path for sid, path in sources}
    if assets is None:
        assets = AssetLibrary.bundled(partner_paths=partner_map)
    emoji_names = assets.emoji_names()

    jobs = [
        (sid, path, idx)
        for sid, path in sources
        for idx in range(plan.copies_per_source)
    ]
    ids = sorted(partner_map)

    def run(job: tuple[str, Path, int]) -> AugRecord:
        sid, path, idx = job
        partners = [s for s in ids if s != sid]
        return _make_copy(
            sid, path, idx, master_seed, plan, config, assets,
            partners, emoji_names, copies_dir,
        )

    workers = threads if threads > 0 else (os.cpu_count() or 1)
    if workers == 1 or len(jobs) == 1:
        records = [run(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(run, jobs))
    records.sort(key=lambda r: r.copy_id)

    manifest = {
        "format": MANIFEST_FORMAT,
        "master_seed": master_seed,
        "plan": plan.as_dict(),
        "config": config.as_dict(),
        "records": [r.as_dict() for r in records],
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    truth_path = out / "truth.csv"
    write_truth(GroundTruth.from_pairs((r.copy_id, r.source_id) for r in records), truth_path)

    return CorpusResult(
        out_dir=out,
        copies_dir=copies_dir,
        manifest_path=manifest_path,
        truth_path=truth_path,
        records=tuple(records),
        skipped=skipped,
    )


def read_manifest(path: str | Path) -> tuple[dict[str, Any], tuple[AugRecord, ...]]:
    """Load a manifest; returns (header metadata, records)."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read manifest {path}: {exc}") from exc
    if not isinstance(data, dict) or data.get("format") != MANIFEST_FORMAT:
        raise FormatError(f"not a corpus manifest: {path}")
    records = tuple(AugRecord.from_dict(r) for r in data.get("records", []))
    meta = {k: v for k, v in data.items() if k != "records"}
    return meta, records


def emit_detection_labels(records: Iterable[AugRecord], labels_dir: str | Path) -> int:
    """Write one ``<copy_id>.txt`` per record that has overlay boxes.

    Lines are ``0 cx cy w h`` with normalized coordinates (class 0 is the
    overlaid foreground).  Records without boxes are skipped.  Returns the
    number of label files written.
    """
    out = Path(labels_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = 0
    for rec in records:
        if not rec.boxes:
            continue
        lines = [f"0 {cx:.6f} {cy:.6f} {w:.6f} {h:.6f}" for cx, cy, w, h in rec.boxes]
        (out / f"{rec.copy_id}.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
        written += 1
    return written
