"""Reading and writing binary masks.

Two on-disk forms are supported:

* binary PGM (magic ``P5``, maxval 255): any nonzero sample is foreground;
* a JSON grid ``{"width": W, "height": H, "rows": ["0101...", ...]}``,
  convenient for hand-written test fixtures.

``load_mask`` sniffs the magic bytes, so either form works regardless of
file extension.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .geometry import MaskGrid


class MaskFormatError(ValueError):
    """Raised when a mask file cannot be decoded."""


def load_mask(path: str | Path) -> MaskGrid:
    data = Path(path).read_bytes()
    if data[:2] == b"P5":
        return _decode_pgm(data, str(path))
    try:
        obj = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MaskFormatError(f"{path}: neither binary PGM nor JSON grid ({exc})") from None
    return _decode_json_grid(obj, str(path))


def save_mask_pgm(mask: MaskGrid, path: str | Path) -> None:
    header = f"P5\n{mask.width} {mask.height}\n255\n".encode("ascii")
    body = np.where(mask.cells, 255, 0).astype(np.uint8).tobytes()
    Path(path).write_bytes(header + body)


def save_mask_json(mask: MaskGrid, path: str | Path) -> None:
    obj = {"width": mask.width, "height": mask.height, "rows": mask.to_rows()}
    Path(path).write_text(json.dumps(obj), encoding="utf-8")


def _decode_pgm(data: bytes, name: str) -> MaskGrid:
    # Header is ASCII tokens (magic, width, height, maxval), '#' comments
    # allowed, followed by exactly one whitespace byte before the raster.
    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] not in (0x0A, 0x0D):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        token = data[start:pos]
        if not token.isdigit():
            raise MaskFormatError(f"{name}: malformed PGM header token {token!r}")
        fields.append(int(token))
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise MaskFormatError(f"{name}: non-positive PGM dimensions {width}x{height}")
    if maxval != 255:
        raise MaskFormatError(f"{name}: unsupported PGM maxval {maxval}, expected 255")
    pos += 1  # single whitespace separating header from raster
    raster = data[pos : pos + width * height]
    if len(raster) != width * height:
        raise MaskFormatError(
            f"{name}: truncated PGM raster, expected {width * height} bytes, "
            f"got {len(raster)}"
        )
    cells = np.frombuffer(raster, dtype=np.uint8).reshape(height, width) != 0
    return MaskGrid(cells)


def _decode_json_grid(obj: object, name: str) -> MaskGrid:
    if not isinstance(obj, dict):
        raise MaskFormatError(f"{name}: JSON grid must be an object")
    try:
        width = obj["width"]
        height = obj["height"]
        rows = obj["rows"]
    except KeyError as exc:
        raise MaskFormatError(f"{name}: JSON grid missing key {exc}") from None
    if not isinstance(rows, list) or len(rows) != height:
        raise MaskFormatError(f"{name}: expected {height} rows")
    try:
        mask = MaskGrid.from_rows([str(r) for r in rows])
    except ValueError as exc:
        raise MaskFormatError(f"{name}: {exc}") from None
    if mask.width != width:
        raise MaskFormatError(f"{name}: rows have width {mask.width}, header says {width}")
    return mask
