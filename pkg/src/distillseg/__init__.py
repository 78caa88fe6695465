"""distillseg: label-efficient landform segmentation.

Prompt-driven foundation-model proposals become annotations (simulated or via
the interactive service), and a lightweight decoder is trained on frozen
encoder embeddings from small incremental label budgets.

Main surfaces:
  data       -- manifests, mask/image IO, synthetic corpus
  encoder    -- foundation-model adapters, preprocessing, toy encoder
  cache      -- bit-exact embedding cache
  prompts    -- prompt derivation, proposal selection, NMS, simulation
  decoder    -- trainable deconv decoder (forward/backward/checkpoints)
  training   -- budget selection, training loop, learning curves
  metrics    -- pixel metrics, split evaluation, curve plots
  service    -- annotation HTTP API
  cli        -- command-line entry point
"""

from . import errors
from .cache import EmbeddingCache
from .data import (ImageSample, Manifest, build_manifest, decode_mask,
                   encode_mask, generate_synthetic_corpus, load_manifest,
                   save_manifest)
from .decoder import (DecoderConfig, DecoderParams, bce_loss, binarize,
                      decoder_forward, init_decoder, load_checkpoint,
                      save_checkpoint)
from .encoder import (Embedding, EncoderGateway, PreprocParams, SamAdapter,
                      ToyPitAdapter, preprocess, toy_encode)
from .metrics import (ConfusionCounts, MetricsReport, confusion_counts,
                      emit_curve_plot, evaluate_model, image_iou,
                      macro_metrics, mean_image_iou, micro_metrics, miou)
from .prompts import (AnnotationLog, AnnotationRecord, MaskProposal, Prompt,
                      auto_grid_prompts, box_prompt_from_mask, nms_filter,
                      point_prompt_from_mask, select_best_proposal,
                      simulate_annotation)
from .rle import decode_rle, encode_rle
from .training import (CurveReport, TrainConfig, TrainHistory,
                       fine_tune_foundation_decoder, run_curve,
                       select_increment, train_decoder)

__version__ = "0.1.0"

__all__ = [
    "errors", "EmbeddingCache",
    "ImageSample", "Manifest", "build_manifest", "decode_mask", "encode_mask",
    "generate_synthetic_corpus", "load_manifest", "save_manifest",
    "DecoderConfig", "DecoderParams", "bce_loss", "binarize",
    "decoder_forward", "init_decoder", "load_checkpoint", "save_checkpoint",
    "Embedding", "EncoderGateway", "PreprocParams", "SamAdapter",
    "ToyPitAdapter", "preprocess", "toy_encode",
    "ConfusionCounts", "MetricsReport", "confusion_counts", "emit_curve_plot",
    "evaluate_model", "image_iou", "macro_metrics", "mean_image_iou",
    "micro_metrics", "miou",
    "AnnotationLog", "AnnotationRecord", "MaskProposal", "Prompt",
    "auto_grid_prompts", "box_prompt_from_mask", "nms_filter",
    "point_prompt_from_mask", "select_best_proposal", "simulate_annotation",
    "decode_rle", "encode_rle",
    "CurveReport", "TrainConfig", "TrainHistory",
    "fine_tune_foundation_decoder", "run_curve", "select_increment",
    "train_decoder",
]
