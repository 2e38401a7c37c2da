"""Dataset construction: dense masks to sparse supervision, and quality
filtering of image pools.

Conversion takes a binary mask and produces the tight bounding box, the
center of the maximal inscribed circle (first positive point), and a far
point beyond the inscribed circle (second positive point).  Manifest
conversion is fail-soft: bad rows are reported with their index and the
stream continues.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .geometry import BBox, EmptyMaskError, MaskGrid, PointXY, inscribed_center, \
    mask_to_bbox, outer_ring_point
from .mask_io import load_mask

DEFAULT_QUALITY_THRESHOLD = 50.0


@dataclass(frozen=True)
class SupervisionRecord:
    """Sparse supervision for one sample: box plus two positive points."""

    id: str
    image_path: str
    image_width: int
    image_height: int
    question: str
    bbox: BBox
    point_1: PointXY
    point_2: PointXY
    mask_path: str | None = None

    def as_dict(self) -> dict[str, object]:
        out: dict[str, object] = {
            "id": self.id,
            "image_path": self.image_path,
            "image_width": self.image_width,
            "image_height": self.image_height,
            "question": self.question,
            "bbox": list(self.bbox.as_tuple()),
            "point_1": [self.point_1.x, self.point_1.y],
            "point_2": [self.point_2.x, self.point_2.y],
        }
        if self.mask_path is not None:
            out["mask_path"] = self.mask_path
        return out


@dataclass(frozen=True)
class QualityEntry:
    """An externally produced quality score for one image (lower is better)."""

    image_path: str
    quality_score: float


@dataclass
class ConversionOutcome:
    """Results of a fail-soft manifest conversion."""

    records: list[SupervisionRecord] = field(default_factory=list)
    skipped_empty: list[int] = field(default_factory=list)
    errors: list[tuple[int, str]] = field(default_factory=list)

    def summary(self) -> dict[str, int]:
        return {
            "records": len(self.records),
            "skipped_empty": len(self.skipped_empty),
            "errors": len(self.errors),
        }


def convert_mask(mask: MaskGrid) -> tuple[BBox, PointXY, PointXY]:
    """Tight box, inscribed-circle center, and outer far point of a mask."""
    if mask.is_empty:
        raise EmptyMaskError("cannot convert an empty mask to sparse supervision")
    bbox = mask_to_bbox(mask)
    p1, radius = inscribed_center(mask)
    p2 = outer_ring_point(mask, p1, radius)
    return bbox, p1, p2


def convert_dataset(
    rows: Iterable[Mapping[str, object]],
    questions: Mapping[str, str] | None = None,
    base_dir: str | Path | None = None,
) -> ConversionOutcome:
    """Convert manifest rows to supervision records, in input order.

    Each row must carry ``id``, ``image_path``, ``image_width``,
    ``image_height`` and ``mask_path``; the question comes from the row's
    ``question`` field unless ``questions`` maps the id to an override.
    Rows whose mask is empty are skipped and counted; rows that fail to
    load or validate are recorded as errors; neither aborts the stream.
    """
    base = Path(base_dir) if base_dir is not None else None
    out = ConversionOutcome()
    for index, row in enumerate(rows):
        try:
            record = _convert_row(row, questions, base)
        except _EmptyMaskRow:
            out.skipped_empty.append(index)
        except Exception as exc:
            out.errors.append((index, f"row {index}: {exc}"))
        else:
            out.records.append(record)
    return out


class _EmptyMaskRow(Exception):
    pass


def _convert_row(
    row: Mapping[str, object],
    questions: Mapping[str, str] | None,
    base: Path | None,
) -> SupervisionRecord:
    for key in ("id", "image_path", "image_width", "image_height", "mask_path"):
        if key not in row:
            raise ValueError(f"missing field {key!r}")
    sample_id = str(row["id"])
    mask_path = str(row["mask_path"])
    resolved = Path(mask_path) if base is None else base / mask_path
    mask = load_mask(resolved)
    if mask.is_empty:
        raise _EmptyMaskRow()
    bbox, p1, p2 = convert_mask(mask)
    question = str(row.get("question", ""))
    if questions is not None and sample_id in questions:
        question = questions[sample_id]
    width = int(row["image_width"])  # type: ignore[arg-type]
    height = int(row["image_height"])  # type: ignore[arg-type]
    if (mask.width, mask.height) != (width, height):
        raise ValueError(
            f"mask is {mask.width}x{mask.height} but manifest says {width}x{height}"
        )
    return SupervisionRecord(
        id=sample_id,
        image_path=str(row["image_path"]),
        image_width=width,
        image_height=height,
        question=question,
        bbox=bbox,
        point_1=p1,
        point_2=p2,
        mask_path=mask_path,
    )


def filter_pool(
    entries: list[QualityEntry], threshold: float = DEFAULT_QUALITY_THRESHOLD
) -> tuple[list[QualityEntry], list[QualityEntry]]:
    """Partition entries into (kept, discarded) preserving input order.

    An entry is kept iff its score is strictly below the threshold; scores
    at or above it are discarded.
    """
    kept = [e for e in entries if e.quality_score < threshold]
    discarded = [e for e in entries if not (e.quality_score < threshold)]
    return kept, discarded


def read_manifest(path: str | Path) -> list[dict[str, object]]:
    """Read a line-delimited JSON manifest; blank lines are ignored."""
    rows: list[dict[str, object]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{line_no}: invalid JSON ({exc})") from None
            if not isinstance(obj, dict):
                raise ValueError(f"{path}:{line_no}: expected an object")
            rows.append(obj)
    return rows


def read_quality_entries(path: str | Path) -> list[QualityEntry]:
    """Read quality scores from a line-delimited JSON file."""
    entries = []
    for row in read_manifest(path):
        if "image_path" not in row or "quality_score" not in row:
            raise ValueError(f"{path}: rows need image_path and quality_score")
        score = float(row["quality_score"])  # type: ignore[arg-type]
        if not math.isfinite(score):
            raise ValueError(f"{path}: non-finite quality_score for {row['image_path']!r}")
        entries.append(QualityEntry(str(row["image_path"]), score))
    return entries


def record_to_line(record: SupervisionRecord) -> str:
    return json.dumps(record.as_dict(), separators=(",", ":"))
