"""Run-length codec for binary masks crossing the annotation-service wire.

Format: ``"W,H;"`` followed by comma-separated run lengths over row-major
pixels, alternating starting with background. Runs must sum to W*H. The
leading background run may be 0 (mask starts with foreground).
"""

from __future__ import annotations

import numpy as np

from . import errors


def encode_rle(mask: np.ndarray) -> str:
    """Encode a 2D boolean mask into the wire RLE string."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise errors.ShapeError(f"mask must be 2D, got {mask.shape}")
    height, width = mask.shape
    flat = mask.ravel()
    header = f"{width},{height};"
    if flat.size == 0:
        return header
    boundaries = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [flat.size]))
    runs = (ends - starts).tolist()
    if flat[0]:  # first pixel is foreground: prepend an empty background run
        runs = [0] + runs
    return header + ",".join(str(r) for r in runs)


def decode_rle(text: str) -> np.ndarray:
    """Decode the wire RLE string back to a 2D boolean mask."""
    try:
        header, _, body = text.partition(";")
        w_str, h_str = header.split(",")
        width, height = int(w_str), int(h_str)
    except ValueError as exc:
        raise errors.InvalidRle(f"bad RLE header: {text[:40]!r}") from exc
    if width < 0 or height < 0:
        raise errors.InvalidRle(f"negative dimensions {width}x{height}")
    total = width * height
    if body == "":
        runs = []
    else:
        try:
            runs = [int(r) for r in body.split(",")]
        except ValueError as exc:
            raise errors.InvalidRle("non-integer run length") from exc
    if any(r < 0 for r in runs):
        raise errors.InvalidRle("negative run length")
    if sum(runs) != total:
        raise errors.InvalidRle(
            f"runs sum to {sum(runs)}, expected {total} for {width}x{height}")
    flat = np.zeros(total, dtype=bool)
    pos = 0
    value = False
    for run in runs:
        if value:
            flat[pos:pos + run] = True
        pos += run
        value = not value
    return flat.reshape(height, width)
