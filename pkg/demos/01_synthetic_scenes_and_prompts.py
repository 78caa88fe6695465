"""Walkthrough: synthetic pit scenes and the three prompt modes.

Generates a handful of synthetic scenes, derives point/box prompts from the
ground truth the way the annotation simulator does, asks the toy adapter for
its three mask proposals per prompt, and renders everything side by side.

Run:  python3 demos/01_synthetic_scenes_and_prompts.py
Output lands in demos/out/.
"""

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from distillseg.data import generate_synthetic_corpus, load_image, sample_gt
from distillseg.encoder import EncoderGateway, ToyPitAdapter
from distillseg.metrics import image_iou
from distillseg.prompts import (box_prompt_from_mask, point_prompt_from_mask,
                                select_best_proposal, simulate_annotation)

OUT = Path(__file__).parent / "out"


def main():
    OUT.mkdir(exist_ok=True)
    corpus_dir = OUT / "corpus_demo1"
    manifest = generate_synthetic_corpus(6, seed=42, size=128,
                                         out_dir=corpus_dir)
    print(f"generated {len(manifest)} scenes: {manifest.split_counts}")

    gateway = EncoderGateway(adapter=ToyPitAdapter(seed=0))
    sample = manifest.samples[0]
    image = load_image(sample.pixel_path)
    gt = sample_gt(sample)

    point = point_prompt_from_mask(gt)
    box = box_prompt_from_mask(gt)
    print(f"point prompt at {point.point}, box prompt {box.box}")

    proposals = gateway.predict_masks(sample, box)
    for i, p in enumerate(proposals):
        print(f"  proposal {i}: predicted_iou {p.predicted_iou:.3f}, "
              f"area {int(p.mask.sum())} px, "
              f"true IoU vs GT {image_iou(p.mask, gt):.3f}")
    best = select_best_proposal(proposals)
    print(f"selected proposal IoU vs GT: {image_iou(best.mask, gt):.3f}")

    fig, axes = plt.subplots(1, 3 + len(proposals), figsize=(16, 3))
    axes[0].imshow(image, cmap="gray")
    axes[0].set_title("scene")
    axes[1].imshow(gt, cmap="gray")
    axes[1].set_title("ground truth")
    axes[2].imshow(image, cmap="gray")
    x0, y0, x1, y1 = box.box
    axes[2].add_patch(plt.Rectangle((x0, y0), x1 - x0, y1 - y0,
                                    fill=False, color="tab:orange"))
    axes[2].plot(*point.point, "r+", markersize=12)
    axes[2].set_title("prompts")
    for i, p in enumerate(proposals):
        axes[3 + i].imshow(p.mask, cmap="gray")
        axes[3 + i].set_title(f"proposal {i} ({p.predicted_iou:.2f})")
    for ax in axes:
        ax.axis("off")
    fig.savefig(OUT / "prompts_and_proposals.png", bbox_inches="tight",
                dpi=110)
    print(f"wrote {OUT / 'prompts_and_proposals.png'}")

    # the simulator in all three modes on the same sample
    for mode in ("point", "box", "automatic"):
        record = simulate_annotation(manifest, [sample.id], mode, gateway,
                                     grid_size=16)[0]
        print(f"simulated {mode:>9} annotation: IoU vs GT "
              f"{image_iou(record.mask, gt):.3f} "
              f"({len(record.prompts)} prompts)")


if __name__ == "__main__":
    main()
