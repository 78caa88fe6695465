"""Prompt construction, proposal selection, NMS, and simulated annotation.

Coordinates are float pixels with x along columns and y along rows. Boxes use
the exclusive-max convention ``(x0, y0, x1, y1)`` with ``x0 < x1`` and
``y0 < y1``; a single pixel at (0, 0) is the box ``(0, 0, 1, 1)``. That one
convention is shared by the service API, the UI, and the adapters.
"""

from __future__ import annotations

import datetime
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import errors
from .data import Manifest, decode_mask, encode_mask, sample_gt
from .metrics import image_iou

PROMPT_KINDS = ("auto_grid_point", "point", "box")
ANNOTATION_MODES = ("automatic", "point", "box", "manual_ui")
SIMULATOR_NAME = "simulator"

DEFAULT_GRID_SIZE = 32
DEFAULT_NMS_IOU = 0.7


@dataclass(frozen=True)
class Prompt:
    """A point or box hint steering the foundation mask decoder."""

    kind: str
    point: tuple[float, float] | None = None
    box: tuple[float, float, float, float] | None = None
    label: str | None = None  # "foreground"/"background", point kinds only

    def __post_init__(self):
        if self.kind not in PROMPT_KINDS:
            raise errors.InvalidPrompt(f"unknown prompt kind {self.kind!r}")
        is_point = self.kind in ("point", "auto_grid_point")
        if is_point:
            if self.point is None or self.box is not None:
                raise errors.InvalidPrompt(f"{self.kind} prompt needs exactly a point")
            if self.label not in ("foreground", "background"):
                raise errors.InvalidPrompt(f"point prompt needs a label, got {self.label!r}")
        else:
            if self.box is None or self.point is not None or self.label is not None:
                raise errors.InvalidPrompt("box prompt needs exactly a box")
            x0, y0, x1, y1 = self.box
            if not (x0 < x1 and y0 < y1):
                raise errors.InvalidPrompt(f"degenerate box {self.box}")

    def validate_bounds(self, width: int, height: int) -> "Prompt":
        if self.point is not None:
            x, y = self.point
            if not (0 <= x < width and 0 <= y < height):
                raise errors.InvalidPrompt(
                    f"point {self.point} outside {width}x{height} image")
        if self.box is not None:
            x0, y0, x1, y1 = self.box
            if not (0 <= x0 and 0 <= y0 and x1 <= width and y1 <= height):
                raise errors.InvalidPrompt(
                    f"box {self.box} outside {width}x{height} image")
        return self

    def to_dict(self) -> dict:
        return {"kind": self.kind,
                "point": list(self.point) if self.point else None,
                "box": list(self.box) if self.box else None,
                "label": self.label}

    @classmethod
    def from_dict(cls, doc: dict) -> "Prompt":
        return cls(kind=doc["kind"],
                   point=tuple(doc["point"]) if doc.get("point") else None,
                   box=tuple(doc["box"]) if doc.get("box") else None,
                   label=doc.get("label"))


@dataclass
class MaskProposal:
    """One candidate mask in image coordinates with its predicted-IoU score."""

    mask: np.ndarray
    predicted_iou: float
    source_prompt: Prompt


@dataclass
class AnnotationRecord:
    """A committed mask for one sample, with prompt provenance."""

    sample_id: str
    mask: np.ndarray
    prompts: list[Prompt]
    mode: str
    predicted_iou: float
    annotator: str
    created_at: str

    def __post_init__(self):
        if self.mode not in ANNOTATION_MODES:
            raise ValueError(f"unknown annotation mode {self.mode!r}")
        if self.mode == "manual_ui" and self.annotator == SIMULATOR_NAME:
            raise ValueError("manual_ui records cannot be attributed to the simulator")


# -- prompt derivation from ground truth ---------------------------------------

def point_prompt_from_mask(gt: np.ndarray) -> Prompt:
    """Foreground point prompt at the on-mask pixel nearest the fg centroid.

    The centroid itself can fall off-mask for crescent or hollow landforms, so
    the prompt snaps to the closest foreground pixel (ties broken row-major).
    """
    gt = np.asarray(gt, dtype=bool)
    rows, cols = np.nonzero(gt)
    if rows.size == 0:
        raise errors.EmptyMask("cannot derive a point prompt from an empty mask")
    c_row = rows.mean()
    c_col = cols.mean()
    d2 = (rows - c_row) ** 2 + (cols - c_col) ** 2
    # nonzero() returns row-major order, argmin takes the first minimum
    best = int(np.argmin(d2))
    return Prompt(kind="point", point=(float(cols[best]), float(rows[best])),
                  label="foreground")


def box_prompt_from_mask(gt: np.ndarray) -> Prompt:
    """Tight exclusive-max bounding box over the foreground pixels."""
    gt = np.asarray(gt, dtype=bool)
    rows, cols = np.nonzero(gt)
    if rows.size == 0:
        raise errors.EmptyMask("cannot derive a box prompt from an empty mask")
    return Prompt(kind="box", box=(float(cols.min()), float(rows.min()),
                                   float(cols.max() + 1), float(rows.max() + 1)))


def auto_grid_prompts(width: int, height: int, g: int) -> list[Prompt]:
    """g x g foreground point prompts at cell centers, row-major."""
    if g < 1:
        raise ValueError(f"grid size must be >= 1, got {g}")
    prompts = []
    for j in range(g):
        y = (j + 0.5) * height / g
        for i in range(g):
            x = (i + 0.5) * width / g
            prompts.append(Prompt(kind="auto_grid_point", point=(x, y),
                                  label="foreground"))
    return prompts


# -- proposal selection ---------------------------------------------------------

def select_best_proposal(proposals: list[MaskProposal]) -> MaskProposal:
    """Highest predicted-IoU proposal; ties go to the lowest index."""
    if not proposals:
        raise errors.EmptyList("no proposals to select from")
    best = proposals[0]
    for p in proposals[1:]:
        if p.predicted_iou > best.predicted_iou:
            best = p
    return best


def nms_filter(proposals: list[MaskProposal],
               iou_thresh: float = DEFAULT_NMS_IOU) -> list[MaskProposal]:
    """Greedy mask-level non-maximal suppression.

    Proposals are visited by descending predicted IoU (stable for ties) and
    kept iff their mask IoU with every already-kept mask is <= iou_thresh.
    """
    if not 0.0 <= iou_thresh <= 1.0:
        raise ValueError(f"iou_thresh must be in [0,1], got {iou_thresh}")
    ordered = sorted(proposals, key=lambda p: -p.predicted_iou)
    kept: list[MaskProposal] = []
    for cand in ordered:
        if all(image_iou(cand.mask, k.mask) <= iou_thresh for k in kept):
            kept.append(cand)
    return kept


# -- simulated annotation -------------------------------------------------------

def _connected_components(gt: np.ndarray) -> list[np.ndarray]:
    # 8-connectivity: diagonal contact keeps one landform one component
    labels, n = ndimage.label(gt, structure=np.ones((3, 3), dtype=int))
    return [labels == k for k in range(1, n + 1)]


def union_mask(proposals: list[MaskProposal], shape: tuple[int, int]) -> np.ndarray:
    out = np.zeros(shape, dtype=bool)
    for p in proposals:
        out |= p.mask
    return out


def annotate_sample(sample, gt: np.ndarray, mode: str, gateway,
                    grid_size: int = DEFAULT_GRID_SIZE,
                    nms_iou: float = DEFAULT_NMS_IOU) -> AnnotationRecord:
    """Produce one simulated annotation record for a sample.

    point/box: one prompt per connected ground-truth component, best of the
    three returned proposals each, committed mask is the union. automatic:
    grid prompts -> per-prompt best -> NMS -> union of survivors.
    """
    if mode in ("point", "box"):
        components = _connected_components(gt)
        if not components:
            raise errors.EmptyMask(sample.id)
        prompts = [point_prompt_from_mask(c) if mode == "point"
                   else box_prompt_from_mask(c) for c in components]
        selected = [select_best_proposal(gateway.predict_masks(sample, p))
                    for p in prompts]
    elif mode == "automatic":
        prompts = auto_grid_prompts(sample.width, sample.height, grid_size)
        best_each = [select_best_proposal(gateway.predict_masks(sample, p))
                     for p in prompts]
        selected = nms_filter([b for b in best_each if b.mask.any()], nms_iou)
    else:
        raise ValueError(f"unknown simulation mode {mode!r}")

    mask = union_mask(selected, (sample.height, sample.width))
    score = float(np.mean([p.predicted_iou for p in selected])) if selected else 0.0
    return AnnotationRecord(
        sample_id=sample.id, mask=mask, prompts=prompts, mode=mode,
        predicted_iou=score, annotator=SIMULATOR_NAME,
        created_at=_now_iso())


def simulate_annotation(manifest: Manifest, ids: list[str], mode: str, gateway,
                        grid_size: int = DEFAULT_GRID_SIZE,
                        nms_iou: float = DEFAULT_NMS_IOU) -> list[AnnotationRecord]:
    """Run the prompt simulator over the given sample ids."""
    records = []
    for sample_id in ids:
        sample = manifest.get(sample_id)
        records.append(annotate_sample(sample, sample_gt(sample), mode, gateway,
                                       grid_size=grid_size, nms_iou=nms_iou))
    return records


def _now_iso() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat(
        timespec="seconds")


# -- annotations log ------------------------------------------------------------

class AnnotationLog:
    """Append-only JSONL log of annotation records.

    Each line stores the typed record fields with the mask as a path relative
    to the log directory; the mask itself is an encoded PNG under ``masks/``.
    Appends are serialised by a lock (single-writer contract).
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.log_path = self.root / "annotations.jsonl"
        self.mask_dir = self.root / "masks"
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._lines())

    def _lines(self) -> list[str]:
        if not self.log_path.exists():
            return []
        return [ln for ln in self.log_path.read_text().splitlines() if ln.strip()]

    def append(self, record: AnnotationRecord) -> None:
        with self._lock:
            seq = len(self._lines())
            mask_rel = Path("masks") / f"{record.sample_id}__{seq:05d}.png"
            encode_mask(record.mask, self.root / mask_rel)
            entry = {
                "sample_id": record.sample_id,
                "mask_path": mask_rel.as_posix(),
                "prompts": [p.to_dict() for p in record.prompts],
                "mode": record.mode,
                "predicted_iou": record.predicted_iou,
                "annotator": record.annotator,
                "created_at": record.created_at,
            }
            with open(self.log_path, "a") as fh:
                fh.write(json.dumps(entry) + "\n")

    def extend(self, records: list[AnnotationRecord]) -> None:
        for record in records:
            self.append(record)

    def records(self) -> list[AnnotationRecord]:
        out = []
        for line in self._lines():
            entry = json.loads(line)
            out.append(AnnotationRecord(
                sample_id=entry["sample_id"],
                mask=decode_mask(self.root / entry["mask_path"]),
                prompts=[Prompt.from_dict(d) for d in entry["prompts"]],
                mode=entry["mode"],
                predicted_iou=entry["predicted_iou"],
                annotator=entry["annotator"],
                created_at=entry["created_at"]))
        return out

    def annotated_ids(self) -> set[str]:
        return {json.loads(line)["sample_id"] for line in self._lines()}

    def progress(self, budgets: list[int]) -> dict:
        count = len(self.annotated_ids())
        return {"annotated": count,
                "budgets": {str(n): count >= n for n in budgets}}
