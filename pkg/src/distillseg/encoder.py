"""Gateway to a promptable foundation segmentation model.

The foundation model is opaque: everything behind ``FoundationAdapter`` is an
implementation detail of whichever checkpoint is configured. Two adapters
ship here:

* ``ToyPitAdapter`` -- a deterministic, weight-free stand-in used by CI and
  the synthetic corpus. Its "encoder" is an average-pool plus a seeded random
  channel projection; its "mask decoder" is a tiny trainable quadratic
  logistic model over pixel intensity whose >0.5 band separates pit-level
  greys from both terrain and shadow.
* ``SamAdapter`` -- a thin wrapper over the real segment-anything predictor;
  only importable when the optional package and a checkpoint are present.

Embeddings are float32 and immutable (the encoder is frozen), which makes
them safely cacheable bit-for-bit.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage

from . import errors
from .data import ImageSample, load_image
from .prompts import MaskProposal, Prompt

TOY_GRID = 16
TOY_CHANNELS = 16
# pit grey band in normalised intensity: below = shadow, above = terrain
TOY_BAND = (55.0 / 255.0, 125.0 / 255.0)


@dataclass(frozen=True)
class PreprocParams:
    """Invertible record of the resize+pad applied before encoding."""

    target_side: int
    scale: float
    pad_right: int
    pad_bottom: int
    orig_width: int
    orig_height: int

    def to_model(self, x: float, y: float) -> tuple[float, float]:
        return x * self.scale, y * self.scale

    def to_image(self, x: float, y: float) -> tuple[float, float]:
        return x / self.scale, y / self.scale

    def to_dict(self) -> dict:
        return {"target_side": self.target_side, "scale": self.scale,
                "pad_right": self.pad_right, "pad_bottom": self.pad_bottom,
                "orig_width": self.orig_width, "orig_height": self.orig_height}


@dataclass
class Embedding:
    """Frozen-encoder output with provenance."""

    values: np.ndarray  # float32, (C, H, W)
    encoder_id: str
    preproc: PreprocParams | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 3:
            raise errors.ShapeError(f"embedding must be (C,H,W), got {self.values.shape}")
        if not np.isfinite(self.values).all():
            raise ValueError("embedding contains non-finite values")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape


def to_float_gray(image: np.ndarray) -> np.ndarray:
    """uint8 (H,W) or (H,W,3) -> float64 grayscale in [0,1]."""
    arr = np.asarray(image)
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float64) / 255.0
    else:
        arr = arr.astype(np.float64)
    if arr.ndim == 3:
        arr = arr.mean(axis=2)
    return arr


def preprocess(image: np.ndarray | ImageSample,
               target_side: int) -> tuple[np.ndarray, PreprocParams]:
    """Scale the longest side to ``target_side`` (bilinear, aspect preserved)
    and zero-pad bottom/right to a square model input.

    Returns (float32 array (C, target, target) in [0,1], PreprocParams).
    """
    if isinstance(image, ImageSample):
        image = load_image(image.pixel_path)
    arr = np.asarray(image)
    if arr.ndim == 2:
        height, width = arr.shape
        channels = 1
    else:
        height, width, channels = arr.shape
    scale = target_side / max(width, height)
    new_w = max(1, int(round(width * scale)))
    new_h = max(1, int(round(height * scale)))
    pil = Image.fromarray(arr)
    resized = np.asarray(pil.resize((new_w, new_h), Image.BILINEAR),
                         dtype=np.float32) / 255.0
    if resized.ndim == 2:
        resized = resized[None]
    else:
        resized = resized.transpose(2, 0, 1)
    out = np.zeros((channels, target_side, target_side), dtype=np.float32)
    out[:, :new_h, :new_w] = resized
    params = PreprocParams(target_side=target_side, scale=scale,
                           pad_right=target_side - new_w,
                           pad_bottom=target_side - new_h,
                           orig_width=width, orig_height=height)
    return out, params


def toy_encode(image: np.ndarray, seed: int, grid: int = TOY_GRID,
               channels: int = TOY_CHANNELS) -> Embedding:
    """Average-pool to a grid x grid map, then a seeded random channel projection.

    Pure function of (image, seed); image sides must be divisible by the
    pooling factor (side // grid).
    """
    arr = np.asarray(image)
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float64) / 255.0
    if arr.ndim == 2:
        arr = arr[None]
    elif arr.ndim == 3 and arr.shape[2] in (1, 3):
        arr = arr.transpose(2, 0, 1)
    c_in, height, width = arr.shape
    if height % grid or width % grid:
        raise errors.ShapeError(
            f"image {width}x{height} not divisible into a {grid}x{grid} grid")
    ph, pw = height // grid, width // grid
    pooled = arr.reshape(c_in, grid, ph, grid, pw).mean(axis=(2, 4))
    weight = np.random.default_rng(seed).standard_normal((channels, c_in))
    values = np.tensordot(weight, pooled, axes=(1, 0)).astype(np.float32)
    params = PreprocParams(target_side=max(width, height), scale=1.0,
                           pad_right=0, pad_bottom=0,
                           orig_width=width, orig_height=height)
    return Embedding(values=values, encoder_id=f"toy-s{seed}-g{grid}c{channels}",
                     preproc=params)


# -- adapters -------------------------------------------------------------------

class FoundationAdapter:
    """Contract every foundation-model adapter satisfies."""

    encoder_id: str

    def encode(self, image: np.ndarray) -> Embedding:
        raise NotImplementedError

    def predict(self, image: np.ndarray, prompt: Prompt) -> list[MaskProposal]:
        raise NotImplementedError

    def encoder_digest(self) -> str:
        raise NotImplementedError

    # mask-decoder fine-tuning surface; adapters without one keep the default
    def supports_fine_tuning(self) -> bool:
        return False

    def mask_decoder_digest(self) -> str:
        raise errors.AdapterUnavailable(f"{self.encoder_id} has no mask decoder")

    def fine_tune_step(self, image: np.ndarray, target: np.ndarray,
                       lr: float) -> float:
        raise errors.AdapterUnavailable(f"{self.encoder_id} is not fine-tunable")

    def mask_decoder_state(self) -> np.ndarray:
        raise errors.AdapterUnavailable(f"{self.encoder_id} has no mask decoder")


def _digest(*arrays: np.ndarray) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


def _perimeter(mask: np.ndarray) -> int:
    # count of exposed pixel edges, image border included
    pad = np.pad(mask, 1)
    edges = 0
    edges += int(np.count_nonzero(pad[1:, :] != pad[:-1, :]))
    edges += int(np.count_nonzero(pad[:, 1:] != pad[:, :-1]))
    return edges


def _circularity(mask: np.ndarray) -> float:
    area = int(np.count_nonzero(mask))
    if area == 0:
        return 0.0
    per = _perimeter(mask)
    return float(np.clip(4.0 * np.pi * area / (per * per), 0.0, 1.0))


def _proposal_score(mask: np.ndarray, band_ok: np.ndarray) -> float:
    """Deterministic confidence heuristic: compactness plus band purity.

    purity = fraction of the mask's pixels the intensity model itself puts
    above 0.5, so masks that annex off-band pixels (shadow joined to a pit)
    score below the clean object.
    """
    area = int(np.count_nonzero(mask))
    if area == 0:
        return 0.0
    purity = float(np.count_nonzero(mask & band_ok)) / area
    score = 0.35 * _circularity(mask) + 0.65 * purity
    return float(np.clip(score, 0.02, 0.98))


class ToyPitAdapter(FoundationAdapter):
    """Deterministic weight-free adapter for CI and synthetic scenes.

    The trainable "mask decoder" is a quadratic logistic model over
    normalised pixel intensity x: p = sigmoid(w0 + w1*x + w2*x^2). With the
    default band its >0.5 region covers pit-level greys only; the region
    below the upper root additionally covers shadows. Proposals per prompt:
    whole (pit+shadow), part (pit), subpart (shadow), localised to the prompt
    and scored by mask compactness.
    """

    def __init__(self, seed: int = 0, grid: int = TOY_GRID,
                 channels: int = TOY_CHANNELS,
                 band: tuple[float, float] = TOY_BAND, sharpness: float = 150.0):
        self.seed = seed
        self.grid = grid
        self.channels = channels
        self.encoder_id = f"toy-s{seed}-g{grid}c{channels}"
        lo, hi = band
        self._w = np.array([-sharpness * lo * hi, sharpness * (lo + hi),
                            -sharpness], dtype=np.float64)

    # encoder side ------------------------------------------------------------

    def encode(self, image: np.ndarray) -> Embedding:
        return toy_encode(image, self.seed, self.grid, self.channels)

    def encoder_digest(self) -> str:
        # the projection matrices for 1- and 3-channel input are the encoder's
        # only parameters; both derive from the seed exactly as toy_encode does
        w1 = np.random.default_rng(self.seed).standard_normal((self.channels, 1))
        w3 = np.random.default_rng(self.seed).standard_normal((self.channels, 3))
        return _digest(w1, w3)

    # mask-decoder side ---------------------------------------------------------

    def _band_roots(self) -> tuple[float, float]:
        w0, w1, w2 = self._w
        disc = np.sqrt(max(w1 * w1 - 4 * w2 * w0, 0.0))
        r1 = (-w1 + disc) / (2 * w2)
        r2 = (-w1 - disc) / (2 * w2)
        return min(r1, r2), max(r1, r2)

    def _variants(self, gray: np.ndarray,
                  label: str) -> tuple[list[np.ndarray], np.ndarray]:
        """(whole, part, subpart) masks plus the model's >0.5 band."""
        lo, hi = self._band_roots()
        part = (gray > lo) & (gray < hi)
        whole = gray < hi
        sub = gray <= lo
        variants = [whole, part, sub]
        band_ok = part
        if label == "background":
            variants = [~v for v in variants]
            band_ok = ~band_ok
        return variants, band_ok

    @staticmethod
    def _component_at(mask: np.ndarray, x: float, y: float) -> np.ndarray:
        col, row = int(x), int(y)
        if not mask[row, col]:
            return np.zeros_like(mask)
        labels, _ = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
        return labels == labels[row, col]

    @staticmethod
    def _clip_to_box(mask: np.ndarray,
                     box: tuple[float, float, float, float]) -> np.ndarray:
        x0, y0, x1, y1 = box
        out = np.zeros_like(mask)
        r0, r1 = int(np.floor(y0)), int(np.ceil(y1))
        c0, c1 = int(np.floor(x0)), int(np.ceil(x1))
        out[r0:r1, c0:c1] = mask[r0:r1, c0:c1]
        return out

    def predict(self, image: np.ndarray, prompt: Prompt) -> list[MaskProposal]:
        gray = to_float_gray(image)
        label = prompt.label or "foreground"
        variants, band_ok = self._variants(gray, label)
        proposals = []
        for variant in variants:
            if prompt.box is not None:
                localised = self._clip_to_box(variant, prompt.box)
            else:
                localised = self._component_at(variant, *prompt.point)
            proposals.append(MaskProposal(
                mask=localised,
                predicted_iou=_proposal_score(localised, band_ok),
                source_prompt=prompt))
        return proposals

    def supports_fine_tuning(self) -> bool:
        return True

    def mask_decoder_digest(self) -> str:
        return _digest(self._w)

    def mask_decoder_state(self) -> np.ndarray:
        return self._w.copy()

    def set_mask_decoder_state(self, state: np.ndarray) -> None:
        self._w = np.asarray(state, dtype=np.float64).copy()

    def fine_tune_step(self, image: np.ndarray, target: np.ndarray,
                       lr: float) -> float:
        """One full-image gradient step of pixel BCE on the logistic band model."""
        x = to_float_gray(image).ravel()
        y = np.asarray(target, dtype=np.float64).ravel()
        feats = np.stack([np.ones_like(x), x, x * x])  # (3, N)
        z = self._w @ feats
        p = 1.0 / (1.0 + np.exp(-z))
        eps = 1e-12
        loss = float(np.mean(-y * np.log(p + eps) - (1 - y) * np.log(1 - p + eps)))
        grad = feats @ (p - y) / x.size
        self._w = self._w - lr * grad
        return loss


class SamAdapter(FoundationAdapter):
    """Wrapper over a real segment-anything checkpoint (weights-gated).

    Requires the optional ``segment_anything`` package and a checkpoint file;
    otherwise every call raises AdapterUnavailable. Expected embedding shape
    is (256, 64, 64) for the published checkpoints, recorded as configuration.
    """

    def __init__(self, checkpoint: str, model_type: str = "vit_h",
                 target_side: int = 1024):
        self.checkpoint = checkpoint
        self.model_type = model_type
        self.target_side = target_side
        self.encoder_id = f"sam-{model_type}"
        self._predictor = None

    def _load(self):
        if self._predictor is not None:
            return self._predictor
        try:
            import torch  # noqa: F401
            from segment_anything import SamPredictor, sam_model_registry
        except ImportError as exc:
            raise errors.AdapterUnavailable(
                f"segment_anything/torch not installed: {exc}") from exc
        import os
        if not os.path.exists(self.checkpoint):
            raise errors.AdapterUnavailable(f"checkpoint not found: {self.checkpoint}")
        sam = sam_model_registry[self.model_type](checkpoint=self.checkpoint)
        self._predictor = SamPredictor(sam)
        return self._predictor

    @staticmethod
    def _as_rgb(image: np.ndarray) -> np.ndarray:
        if image.ndim == 2:
            return np.stack([image] * 3, axis=2)
        return image

    def encode(self, image: np.ndarray) -> Embedding:
        predictor = self._load()
        height, width = image.shape[:2]
        predictor.set_image(self._as_rgb(image))
        values = predictor.features.detach().cpu().numpy()[0].astype(np.float32)
        scale = self.target_side / max(width, height)
        params = PreprocParams(
            target_side=self.target_side, scale=scale,
            pad_right=self.target_side - int(round(width * scale)),
            pad_bottom=self.target_side - int(round(height * scale)),
            orig_width=width, orig_height=height)
        return Embedding(values=values, encoder_id=self.encoder_id, preproc=params)

    def predict(self, image: np.ndarray, prompt: Prompt) -> list[MaskProposal]:
        predictor = self._load()
        predictor.set_image(self._as_rgb(image))
        kwargs = {"multimask_output": True}
        if prompt.box is not None:
            kwargs["box"] = np.asarray(prompt.box, dtype=np.float64)[None]
        else:
            kwargs["point_coords"] = np.asarray([prompt.point], dtype=np.float64)
            kwargs["point_labels"] = np.asarray(
                [1 if prompt.label == "foreground" else 0])
        masks, scores, _ = predictor.predict(**kwargs)
        return [MaskProposal(mask=np.asarray(m, dtype=bool),
                             predicted_iou=float(np.clip(s, 0.0, 1.0)),
                             source_prompt=prompt)
                for m, s in zip(masks, scores)]

    def _module_digest(self, module) -> str:
        h = hashlib.sha256()
        for name, tensor in sorted(module.state_dict().items()):
            h.update(name.encode())
            h.update(tensor.detach().cpu().numpy().tobytes())
        return h.hexdigest()

    def encoder_digest(self) -> str:
        predictor = self._load()
        sam = predictor.model
        h = hashlib.sha256()
        h.update(self._module_digest(sam.image_encoder).encode())
        h.update(self._module_digest(sam.prompt_encoder).encode())
        return h.hexdigest()

    def supports_fine_tuning(self) -> bool:
        try:
            self._load()
        except errors.AdapterUnavailable:
            return False
        return True

    def mask_decoder_digest(self) -> str:
        return self._module_digest(self._load().model.mask_decoder)

    def fine_tune_step(self, image: np.ndarray, target: np.ndarray,
                       lr: float) -> float:
        """One BCE step on the mask decoder, box-prompted from the target."""
        import torch

        predictor = self._load()
        sam = predictor.model
        for p in sam.image_encoder.parameters():
            p.requires_grad_(False)
        for p in sam.prompt_encoder.parameters():
            p.requires_grad_(False)
        opt = torch.optim.SGD(sam.mask_decoder.parameters(), lr=lr)

        from .prompts import box_prompt_from_mask
        box = box_prompt_from_mask(np.asarray(target, dtype=bool)).box
        predictor.set_image(self._as_rgb(image))
        box_t = predictor.transform.apply_boxes(
            np.asarray(box, dtype=np.float64)[None], image.shape[:2])
        box_t = torch.as_tensor(box_t, dtype=torch.float,
                                device=predictor.device)
        sparse, dense = sam.prompt_encoder(points=None, boxes=box_t, masks=None)
        low_res, _ = sam.mask_decoder(
            image_embeddings=predictor.features,
            image_pe=sam.prompt_encoder.get_dense_pe(),
            sparse_prompt_embeddings=sparse,
            dense_prompt_embeddings=dense,
            multimask_output=False)
        upscaled = sam.postprocess_masks(
            low_res, predictor.input_size, image.shape[:2])
        target_t = torch.as_tensor(np.asarray(target, dtype=np.float32),
                                   device=predictor.device)[None, None]
        loss = torch.nn.functional.binary_cross_entropy_with_logits(
            upscaled, target_t)
        opt.zero_grad()
        loss.backward()
        opt.step()
        return float(loss.detach().cpu())


# -- gateway --------------------------------------------------------------------

class EncoderGateway:
    """Adapter plus embedding cache, presented as one narrow surface."""

    def __init__(self, adapter: FoundationAdapter | None = None, cache=None,
                 encoder_id: str | None = None):
        self.adapter = adapter
        self.cache = cache
        self.encoder_id = encoder_id or (adapter.encoder_id if adapter else None)

    def encode_image(self, sample: ImageSample) -> Embedding:
        """Embedding for a sample: cache hit if available, else adapter call."""
        if self.cache is not None and self.encoder_id is not None:
            hit = self.cache.get(sample.id, self.encoder_id)
            if hit is not None:
                return hit
        if self.adapter is None:
            raise errors.AdapterUnavailable(
                "no adapter configured and embedding not cached")
        emb = self.adapter.encode(load_image(sample.pixel_path))
        if self.cache is not None:
            self.cache.put(sample.id, emb.encoder_id, emb)
        return emb

    # trainer/eval-facing alias
    def embedding(self, sample: ImageSample) -> Embedding:
        return self.encode_image(sample)

    def predict_masks(self, sample: ImageSample, prompt: Prompt,
                      ) -> list[MaskProposal]:
        """Exactly three scored proposals in image coordinates."""
        if self.adapter is None:
            raise errors.AdapterUnavailable("no adapter configured")
        prompt.validate_bounds(sample.width, sample.height)
        proposals = self.adapter.predict(load_image(sample.pixel_path), prompt)
        for p in proposals:
            if p.mask.shape != (sample.height, sample.width):
                raise errors.ShapeMismatch(
                    f"adapter returned mask {p.mask.shape} for "
                    f"{sample.height}x{sample.width} image")
        return proposals

    def warm_cache(self, manifest, ids: list[str] | None = None) -> int:
        """Precompute embeddings for the given ids (default: whole manifest)."""
        count = 0
        for sample in manifest.samples:
            if ids is not None and sample.id not in ids:
                continue
            self.encode_image(sample)
            count += 1
        return count
