"""Lightweight trainable decoder from frozen-encoder embeddings to masks.

Architecture: three transposed convolutions (kernel 4, stride 2, padding 1,
ReLU between stages) for 8x spatial upsampling, a 1x1 head to the output
channel count, bilinear resize to the configured target size, then a sigmoid.
The embedding grid is rarely a power-of-two factor of the target (64 -> 900,
say), hence the final resize.

Everything here is plain numpy with explicit backward passes. A transposed
convolution is implemented as the adjoint of a strided convolution: its
forward pass is the strided conv's input-gradient, its input gradient is the
strided conv's forward pass, and its weight gradient swaps the roles of input
and output gradient. The finite-difference test in the suite checks the whole
chain. Computation runs in float64; checkpoints and digests use the float32
little-endian byte representation.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import errors
from .encoder import Embedding

KERNEL = 4
STRIDE = 2
PADDING = 1
N_STAGES = 3
BCE_EPS = 1e-7
PROB_FLOOR = 1e-12  # keeps reported probabilities strictly inside (0, 1)


@dataclass(frozen=True)
class DecoderConfig:
    """Shape and seeding of the domain decoder."""

    in_channels: int
    channel_schedule: tuple[int, int, int]
    target_width: int
    target_height: int
    out_channels: int = 1
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "channel_schedule",
                           tuple(self.channel_schedule))
        if len(self.channel_schedule) != N_STAGES:
            raise errors.InvalidConfig(
                f"channel_schedule must have exactly {N_STAGES} entries, "
                f"got {len(self.channel_schedule)}")
        counts = (self.in_channels, *self.channel_schedule, self.out_channels)
        if any(c < 1 for c in counts):
            raise errors.InvalidConfig(f"channel counts must be >= 1: {counts}")
        if self.target_width < 1 or self.target_height < 1:
            raise errors.InvalidConfig("target size must be >= 1")

    def to_dict(self) -> dict:
        return {"in_channels": self.in_channels,
                "channel_schedule": list(self.channel_schedule),
                "target_width": self.target_width,
                "target_height": self.target_height,
                "out_channels": self.out_channels,
                "init_seed": self.init_seed}

    @classmethod
    def from_dict(cls, doc: dict) -> "DecoderConfig":
        return cls(in_channels=doc["in_channels"],
                   channel_schedule=tuple(doc["channel_schedule"]),
                   target_width=doc["target_width"],
                   target_height=doc["target_height"],
                   out_channels=doc.get("out_channels", 1),
                   init_seed=doc.get("init_seed", 0))


@dataclass
class DecoderParams:
    """Decoder weights: one (W, b) pair per deconv stage plus the 1x1 head.

    Deconv weights use the (in_ch, out_ch, kh, kw) layout; the head weight is
    (out_channels, last_stage_channels).
    """

    config: DecoderConfig
    arrays: list[np.ndarray] = field(default_factory=list)

    def digest(self) -> str:
        h = hashlib.sha256()
        for a in self.arrays:
            h.update(np.ascontiguousarray(a.astype("<f4")).tobytes())
        return h.hexdigest()

    def copy(self) -> "DecoderParams":
        return DecoderParams(self.config, [a.copy() for a in self.arrays])


def init_decoder(config: DecoderConfig) -> DecoderParams:
    """Fan-in-scaled uniform weights, zero biases, deterministic in init_seed."""
    rng = np.random.default_rng(config.init_seed)
    arrays: list[np.ndarray] = []
    in_ch = config.in_channels
    for out_ch in config.channel_schedule:
        fan_in = in_ch * KERNEL * KERNEL
        bound = 1.0 / np.sqrt(fan_in)
        arrays.append(rng.uniform(-bound, bound,
                                  size=(in_ch, out_ch, KERNEL, KERNEL)))
        arrays.append(np.zeros(out_ch))
        in_ch = out_ch
    bound = 1.0 / np.sqrt(in_ch)
    arrays.append(rng.uniform(-bound, bound, size=(config.out_channels, in_ch)))
    arrays.append(np.zeros(config.out_channels))
    if not all(np.isfinite(a).all() for a in arrays):
        raise errors.InvalidConfig("non-finite values in initialisation")
    return DecoderParams(config=config, arrays=arrays)


# -- conv primitives ------------------------------------------------------------

def _im2col(x_padded: np.ndarray, k: int, stride: int, oh: int,
            ow: int) -> np.ndarray:
    """(B,C,Hp,Wp) -> (B, C, k, k, oh, ow) via strided window copies."""
    batch, channels = x_padded.shape[:2]
    cols = np.empty((batch, channels, k, k, oh, ow), dtype=x_padded.dtype)
    for kh in range(k):
        for kw in range(k):
            cols[:, :, kh, kw] = x_padded[
                :, :, kh:kh + stride * oh:stride, kw:kw + stride * ow:stride]
    return cols


def _conv_forward(x: np.ndarray, w: np.ndarray, stride: int,
                  pad: int) -> np.ndarray:
    """Strided correlation; w is (F, C, k, k), x is (B, C, H, W)."""
    batch, _, height, width = x.shape
    f, c, k, _ = w.shape
    oh = (height + 2 * pad - k) // stride + 1
    ow = (width + 2 * pad - k) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = _im2col(xp, k, stride, oh, ow).reshape(batch, c * k * k, oh * ow)
    out = np.matmul(w.reshape(f, -1), cols)
    return out.reshape(batch, f, oh, ow)


def _conv_grad_input(g: np.ndarray, w: np.ndarray, stride: int, pad: int,
                     height: int, width: int) -> np.ndarray:
    """Adjoint of _conv_forward w.r.t. its input (a col2im scatter)."""
    batch, f, oh, ow = g.shape
    _, c, k, _ = w.shape
    cols = np.matmul(w.reshape(f, -1).T, g.reshape(batch, f, oh * ow))
    cols = cols.reshape(batch, c, k, k, oh, ow)
    xp = np.zeros((batch, c, height + 2 * pad, width + 2 * pad), dtype=g.dtype)
    for kh in range(k):
        for kw in range(k):
            # strided slices are disjoint within one (kh, kw), so += is safe
            xp[:, :, kh:kh + stride * oh:stride,
               kw:kw + stride * ow:stride] += cols[:, :, kh, kw]
    return xp[:, :, pad:pad + height, pad:pad + width]


def _conv_grad_weight(x: np.ndarray, g: np.ndarray, k: int, stride: int,
                      pad: int) -> np.ndarray:
    """Gradient of _conv_forward w.r.t. w: correlate input with output grad."""
    batch, c, height, width = x.shape
    _, f, oh, ow = g.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = _im2col(xp, k, stride, oh, ow).reshape(batch, c * k * k, oh * ow)
    gw = np.matmul(g.reshape(batch, f, oh * ow), cols.transpose(0, 2, 1))
    return gw.sum(axis=0).reshape(f, c, k, k)


def deconv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Transposed conv, kernel 4 / stride 2 / padding 1: (B,IC,H,W)->(B,OC,2H,2W)."""
    _, _, height, width = x.shape
    out_h = STRIDE * (height - 1) + KERNEL - 2 * PADDING
    out_w = STRIDE * (width - 1) + KERNEL - 2 * PADDING
    y = _conv_grad_input(x, w, STRIDE, PADDING, out_h, out_w)
    return y + b[:, None, None]


def deconv_grad(x: np.ndarray, gy: np.ndarray,
                w: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of deconv_forward: (d_input, d_weight, d_bias)."""
    gx = _conv_forward(gy, w, STRIDE, PADDING)
    gw = _conv_grad_weight(gy, x, KERNEL, STRIDE, PADDING)
    gb = gy.sum(axis=(0, 2, 3))
    return gx, gw, gb


@lru_cache(maxsize=32)
def _resize_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Dense 1D bilinear interpolation matrix (n_out, n_in), edges clamped."""
    m = np.zeros((n_out, n_in))
    if n_in == n_out:
        np.fill_diagonal(m, 1.0)
        return m
    scale = n_in / n_out
    for j in range(n_out):
        src = (j + 0.5) * scale - 0.5
        i0 = int(np.floor(src))
        t = src - i0
        i0c = min(max(i0, 0), n_in - 1)
        i1c = min(max(i0 + 1, 0), n_in - 1)
        m[j, i0c] += 1.0 - t
        m[j, i1c] += t
    return m


def resize_bilinear(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable bilinear resize of (B,C,H,W); exact linear operator."""
    mh = _resize_matrix(x.shape[2], out_h)
    mw = _resize_matrix(x.shape[3], out_w)
    return np.matmul(np.matmul(mh, x), mw.T)


def resize_bilinear_grad(g: np.ndarray, in_h: int, in_w: int) -> np.ndarray:
    mh = _resize_matrix(in_h, g.shape[2])
    mw = _resize_matrix(in_w, g.shape[3])
    return np.matmul(np.matmul(mh.T, g), mw)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# -- forward / loss / backward ----------------------------------------------------

def forward_batch(params: DecoderParams, x: np.ndarray,
                  keep_cache: bool = False):
    """Probabilities (B, out_channels, TH, TW) for a batch of embeddings.

    With keep_cache=True also returns the intermediates needed by
    backward_batch.
    """
    cfg = params.config
    if x.ndim != 4 or x.shape[1] != cfg.in_channels:
        raise errors.ShapeMismatch(
            f"expected (B,{cfg.in_channels},H,W) embeddings, got {x.shape}")
    x = x.astype(np.float64, copy=False)
    stage_inputs = []
    relu_masks = []
    for i in range(N_STAGES):
        w, b = params.arrays[2 * i], params.arrays[2 * i + 1]
        stage_inputs.append(x)
        x = deconv_forward(x, w, b)
        if i < N_STAGES - 1:
            mask = x > 0
            relu_masks.append(mask)
            x = np.where(mask, x, 0.0)
    head_in = x
    wh, bh = params.arrays[-2], params.arrays[-1]
    logits = np.einsum("oc,bchw->bohw", wh, head_in) + bh[None, :, None, None]
    pre_resize_hw = logits.shape[2:]
    logits = resize_bilinear(logits, cfg.target_height, cfg.target_width)
    probs = _sigmoid(logits)
    if not keep_cache:
        return probs
    cache = {"stage_inputs": stage_inputs, "relu_masks": relu_masks,
             "head_in": head_in, "pre_resize_hw": pre_resize_hw, "probs": probs}
    return probs, cache


def backward_batch(params: DecoderParams, cache: dict,
                   target: np.ndarray) -> tuple[float, list[np.ndarray]]:
    """Mean clamped BCE over the batch and its gradient w.r.t. every array."""
    probs = cache["probs"]
    y = target.astype(np.float64, copy=False)
    if y.shape != probs.shape:
        raise errors.ShapeMismatch(f"target {y.shape} vs probs {probs.shape}")
    clamped = np.clip(probs, BCE_EPS, 1.0 - BCE_EPS)
    n = probs.size
    loss = float(np.mean(-y * np.log(clamped) - (1 - y) * np.log1p(-clamped)))
    # d loss / d prob, zero where the clamp is active (clip is flat there)
    dl_dclamped = (clamped - y) / (clamped * (1.0 - clamped)) / n
    inside = (probs > BCE_EPS) & (probs < 1.0 - BCE_EPS)
    dl_dprob = np.where(inside, dl_dclamped, 0.0)
    dlogits = dl_dprob * probs * (1.0 - probs)

    cfg = params.config
    g = resize_bilinear_grad(dlogits, *cache["pre_resize_hw"])
    wh = params.arrays[-2]
    g_wh = np.einsum("bohw,bchw->oc", g, cache["head_in"])
    g_bh = g.sum(axis=(0, 2, 3))
    g = np.einsum("oc,bohw->bchw", wh, g)

    grads_rev = [g_bh, g_wh]
    for i in reversed(range(N_STAGES)):
        if i < N_STAGES - 1:
            g = np.where(cache["relu_masks"][i], g, 0.0)
        w = params.arrays[2 * i]
        g, gw, gb = deconv_grad(cache["stage_inputs"][i], g, w)
        grads_rev.extend([gb, gw])
    return loss, list(reversed(grads_rev))


def loss_and_grads(params: DecoderParams, x: np.ndarray,
                   target: np.ndarray) -> tuple[float, list[np.ndarray]]:
    """Convenience wrapper: forward + clamped-BCE backward on one batch."""
    _, cache = forward_batch(params, x, keep_cache=True)
    return backward_batch(params, cache, target)


# -- public single-image ops ------------------------------------------------------

def decoder_forward(params: DecoderParams, emb: Embedding) -> np.ndarray:
    """Per-pixel foreground probability map at the configured target size.

    Multi-channel configurations read foreground from channel 0. Output
    values are clipped microscopically inside (0, 1) so the sigmoid range
    invariant survives float rounding.
    """
    probs = forward_batch(params, emb.values[None].astype(np.float64))
    return np.clip(probs[0, 0], PROB_FLOOR, 1.0 - PROB_FLOOR)


def bce_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean binary cross-entropy with probabilities clamped to [eps, 1-eps]."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise errors.ShapeMismatch(f"pred {pred.shape} vs target {target.shape}")
    y = target.astype(np.float64)
    clamped = np.clip(pred, BCE_EPS, 1.0 - BCE_EPS)
    return float(np.mean(-y * np.log(clamped) - (1 - y) * np.log1p(-clamped)))


def binarize(pred: np.ndarray, tau: float = 0.5) -> np.ndarray:
    """Threshold a probability map: foreground iff value >= tau."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must be in (0,1), got {tau}")
    return np.asarray(pred) >= tau


# -- checkpoints ------------------------------------------------------------------

def save_checkpoint(params: DecoderParams, epoch: int, path: str | Path) -> None:
    """JSON header {config, param_digest, epoch} + stage-ordered f32le payload."""
    payload = b"".join(
        np.ascontiguousarray(a.astype("<f4")).tobytes() for a in params.arrays)
    header = json.dumps({
        "config": params.config.to_dict(),
        "param_digest": params.digest(),
        "epoch": epoch,
    }, sort_keys=True, separators=(",", ":")).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(struct.pack("<I", len(header)) + header + payload)


def load_checkpoint(path: str | Path) -> tuple[DecoderParams, int]:
    blob = Path(path).read_bytes()
    if len(blob) < 4:
        raise errors.CorruptEntry(f"{path}: truncated checkpoint")
    (header_len,) = struct.unpack("<I", blob[:4])
    try:
        header = json.loads(blob[4:4 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise errors.CorruptEntry(f"{path}: bad header: {exc}") from exc
    config = DecoderConfig.from_dict(header["config"])
    template = init_decoder(config)
    arrays = []
    offset = 4 + header_len
    for ref in template.arrays:
        nbytes = 4 * ref.size
        chunk = blob[offset:offset + nbytes]
        if len(chunk) != nbytes:
            raise errors.CorruptEntry(f"{path}: truncated payload")
        arrays.append(np.frombuffer(chunk, dtype="<f4").reshape(
            ref.shape).astype(np.float64))
        offset += nbytes
    params = DecoderParams(config=config, arrays=arrays)
    if params.digest() != header["param_digest"]:
        raise errors.CorruptEntry(f"{path}: parameter digest mismatch")
    return params, header["epoch"]
