"""Walkthrough: the full distillation loop on a synthetic corpus.

Simulated box-prompt annotation over the training split, decoder training at
two annotation budgets from frozen toy-encoder embeddings, evaluation on the
test split, and the metrics-vs-budget curve artifact.

This is the same flow as `distillseg curve`, spelled out. Takes about a
minute on a laptop CPU.

Run:  python3 demos/03_distillation_curve.py
"""

import json
from pathlib import Path

from distillseg.cache import EmbeddingCache
from distillseg.data import generate_synthetic_corpus
from distillseg.decoder import DecoderConfig
from distillseg.encoder import EncoderGateway, ToyPitAdapter
from distillseg.metrics import emit_curve_plot
from distillseg.prompts import simulate_annotation
from distillseg.training import TrainConfig, run_curve

OUT = Path(__file__).parent / "out"


def main():
    OUT.mkdir(exist_ok=True)
    manifest = generate_synthetic_corpus(60, seed=11, size=128,
                                         out_dir=OUT / "corpus_demo3")
    print(f"corpus: {manifest.split_counts}")

    gateway = EncoderGateway(adapter=ToyPitAdapter(seed=0),
                             cache=EmbeddingCache(OUT / "cache_demo3"))
    records = simulate_annotation(manifest, manifest.ids("train"), "box",
                                  gateway)
    print(f"simulated {len(records)} box-prompt annotations")

    config = TrainConfig(budgets=(5, 10), epochs=100, batch_size=1,
                         learning_rate=5e-3, seed=3)
    decoder_config = DecoderConfig(in_channels=16,
                                   channel_schedule=(64, 32, 16),
                                   target_width=128, target_height=128,
                                   init_seed=3)
    report = run_curve(config, decoder_config, manifest, records, gateway)
    for entry in report.entries:
        m = entry.metrics
        print(f"budget {entry.budget:>2}: micro_f1 {m.micro_f1:.3f}  "
              f"miou {m.miou:.3f}  mean_image_iou {m.mean_image_iou:.3f}  "
              f"({entry.wall_time:.0f}s, params {entry.param_digest[:12]})")

    report_path = OUT / "curve_report.json"
    report.save(report_path)
    csv_path = emit_curve_plot(json.loads(report_path.read_text()),
                               OUT / "curve.png")
    print(f"wrote {report_path}, {OUT / 'curve.png'} and {csv_path}")


if __name__ == "__main__":
    main()
