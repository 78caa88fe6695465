"""Acceptance suite: one test per release criterion, at pinned tolerances.

Each test prints a single ``ACCEPTANCE PASS`` line on success (run with
``pytest -s tests/test_acceptance.py`` to see them); a pytest failure marks
the criterion red. Paper-scale results need the real corpus and foundation
weights, so the last criterion is gated behind environment variables and
skipped by default.
"""

import os
import time

import numpy as np
import pytest

from oracles import (naive_counts, naive_image_iou, naive_macro, naive_micro,
                     naive_miou, naive_nms, random_blob_mask,
                     random_nonempty_mask)

from distillseg import errors
from distillseg.cache import EmbeddingCache
from distillseg.data import (decode_mask, encode_mask,
                             generate_synthetic_corpus)
from distillseg.decoder import (DecoderConfig, decoder_forward, init_decoder,
                                loss_and_grads)
from distillseg.encoder import Embedding, EncoderGateway, ToyPitAdapter
from distillseg.metrics import (ConfusionCounts, confusion_counts, image_iou,
                                macro_metrics, micro_metrics, miou)
from distillseg.prompts import (MaskProposal, Prompt, box_prompt_from_mask,
                                nms_filter, point_prompt_from_mask,
                                simulate_annotation)
from distillseg.training import TrainConfig, run_curve, select_increment

from test_decoder import GRADCHECK_CONFIG, central_differences, kink_free_params


def _report(name):
    print(f"\nACCEPTANCE PASS: {name}")


def test_metric_oracle_equivalence():
    """1000 random mask pairs up to 32x32: counts exact, ratios <= 1e-12, <10s."""
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        h, w = int(rng.integers(1, 33)), int(rng.integers(1, 33))
        pred = rng.random((h, w)) < rng.uniform(0, 1)
        gt = rng.random((h, w)) < rng.uniform(0, 1)
        tp, fp, fn, tn = naive_counts(pred, gt)
        c = confusion_counts(pred, gt)
        assert (c.tp, c.fp, c.fn, c.tn) == (tp, fp, fn, tn)
        for mine, ref in zip(micro_metrics(c), naive_micro(tp, fp, fn, tn)):
            assert abs(mine - ref) <= 1e-12
        for mine, ref in zip(macro_metrics(c), naive_macro(tp, fp, fn, tn)):
            assert abs(mine - ref) <= 1e-12
        assert abs(miou(c) - naive_miou(tp, fp, fn, tn)) <= 1e-12
        assert abs(image_iou(pred, gt) - naive_image_iou(pred, gt)) <= 1e-12
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0, f"oracle comparison took {elapsed:.1f}s"
    _report(f"metric oracle equivalence (1000 pairs, {elapsed:.1f}s)")


def test_hand_computed_vector():
    """Counts (2,2,2,10): micro p=r=f1=0.5, acc=0.75, mIoU~0.5238, macro_p~0.6667."""
    counts = ConfusionCounts(tp=2, fp=2, fn=2, tn=10)
    p, r, f1, acc = micro_metrics(counts)
    assert (p, r, f1, acc) == (0.5, 0.5, 0.5, 0.75)
    assert abs(miou(counts) - (2 / 6 + 10 / 14) / 2) <= 1e-9
    assert abs(miou(counts) - 0.5238095238095238) <= 1e-9
    macro_p, _, _ = macro_metrics(counts)
    assert abs(macro_p - 0.6667) <= 1e-4
    _report("hand-computed metric vector (2,2,2,10)")


def test_prompt_correctness():
    """Point prompts land on-mask (1000 masks incl. hollow), boxes are tight,
    NMS equals the quadratic oracle over 200 random trials."""
    rng = np.random.default_rng(77)
    for _ in range(1000):
        h, w = int(rng.integers(2, 28)), int(rng.integers(2, 28))
        mask = random_nonempty_mask(rng, h, w)
        x, y = point_prompt_from_mask(mask).point
        assert mask[int(y), int(x)], "point prompt off-mask"
        x0, y0, x1, y1 = box_prompt_from_mask(mask).box
        rows, cols = np.nonzero(mask)
        assert np.all((cols >= x0) & (cols < x1) & (rows >= y0) & (rows < y1))
        # shrinking any side by one excludes foreground
        assert (cols < x0 + 1).any() and (cols >= x1 - 1).any()
        assert (rows < y0 + 1).any() and (rows >= y1 - 1).any()

    for trial in range(200):
        trng = np.random.default_rng(9000 + trial)
        n = int(trng.integers(1, 11))
        masks = [random_blob_mask(trng, 14, 14) for _ in range(n)]
        scores = trng.random(n).round(2).tolist()
        thresh = float(trng.choice([0.3, 0.5, 0.7]))
        props = [MaskProposal(mask=m, predicted_iou=s,
                              source_prompt=Prompt(kind="box", box=(0, 0, 14, 14)))
                 for m, s in zip(masks, scores)]
        kept = nms_filter(props, thresh)
        order = sorted(range(n), key=lambda i: -scores[i])
        ref = naive_nms([masks[i] for i in order],
                        [scores[i] for i in order], thresh)
        assert len(kept) == len(ref)
        for mine, ref_idx in zip(kept, ref):
            assert np.array_equal(mine.mask, masks[order[ref_idx]])
    _report("prompt correctness (on-mask points, tight boxes, NMS oracle)")


def test_decoder_contracts():
    """Zero-params output exactly 0.5; shapes follow config for 5 random
    configs; bce gradient matches central differences at rel 1e-3. <60s."""
    start = time.perf_counter()

    zero_cfg = DecoderConfig(in_channels=6, channel_schedule=(8, 6, 4),
                             target_width=37, target_height=53, init_seed=0)
    params = init_decoder(zero_cfg)
    for arr in params.arrays:
        arr[...] = 0.0
    emb = Embedding(values=np.random.default_rng(0).standard_normal(
        (6, 5, 5)).astype(np.float32), encoder_id="t")
    out = decoder_forward(params, emb)
    assert out.shape == (53, 37)
    assert np.all(out == 0.5)

    rng = np.random.default_rng(13)
    for _ in range(5):
        cfg = DecoderConfig(
            in_channels=int(rng.integers(1, 9)),
            channel_schedule=tuple(int(v) for v in rng.integers(1, 9, 3)),
            target_width=int(rng.integers(8, 90)),
            target_height=int(rng.integers(8, 90)),
            init_seed=int(rng.integers(0, 100)))
        p = init_decoder(cfg)
        e = Embedding(values=rng.standard_normal(
            (cfg.in_channels, int(rng.integers(2, 9)),
             int(rng.integers(2, 9)))).astype(np.float32), encoder_id="t")
        assert decoder_forward(p, e).shape == (cfg.target_height,
                                               cfg.target_width)

    grng = np.random.default_rng(3)
    x = grng.standard_normal((2, 3, 4, 4))
    y = (grng.random((2, 1, 26, 28)) > 0.5).astype(np.float64)
    gparams = kink_free_params(GRADCHECK_CONFIG, x)
    _, analytic = loss_and_grads(gparams, x, y)
    fd = central_differences(gparams, x, y, step=1e-3)
    for g, f in zip(analytic, fd):
        denom = max(np.linalg.norm(g), np.linalg.norm(f), 1e-12)
        assert np.linalg.norm(g - f) / denom < 1e-3

    elapsed = time.perf_counter() - start
    assert elapsed < 60.0, f"decoder contracts took {elapsed:.1f}s"
    _report(f"decoder contracts (zero-params, shapes, gradcheck, {elapsed:.1f}s)")


def test_distillation_end_to_end(tmp_path_factory):
    """Toy encoder + synthetic corpus n=60, budgets {5,10}: deterministic
    digests, frozen encoder, D(5) mean image IoU >= 0.70,
    D(10) >= D(5) - 0.05, under 10 minutes."""
    start = time.perf_counter()
    root = tmp_path_factory.mktemp("accept_e2e")
    manifest = generate_synthetic_corpus(60, seed=11, size=128,
                                         out_dir=root / "corpus")
    adapter = ToyPitAdapter(seed=0)
    gateway = EncoderGateway(adapter=adapter,
                             cache=EmbeddingCache(root / "cache"))
    encoder_digest_before = adapter.encoder_digest()
    records = simulate_annotation(manifest, manifest.ids("train"), "box",
                                  gateway)

    # config pinned after three seeded pilot runs (see decisions ledger)
    config = TrainConfig(budgets=(5, 10), epochs=100, batch_size=1,
                         learning_rate=5e-3, optimizer="adaptive_moment",
                         seed=3)
    decoder_config = DecoderConfig(in_channels=16, channel_schedule=(64, 32, 16),
                                   target_width=128, target_height=128,
                                   init_seed=3)
    first = run_curve(config, decoder_config, manifest, records, gateway)
    second = run_curve(config, decoder_config, manifest, records, gateway)

    digests_first = [e.param_digest for e in first.entries]
    digests_second = [e.param_digest for e in second.entries]
    assert digests_first == digests_second, "training not deterministic"
    assert adapter.encoder_digest() == encoder_digest_before, "encoder moved"

    entry5, entry10 = first.entries
    iou5 = entry5.metrics.mean_image_iou
    iou10 = entry10.metrics.mean_image_iou
    assert iou5 >= 0.70, f"D(5) mean image IoU {iou5:.3f} < 0.70"
    assert iou10 >= iou5 - 0.05, f"D(10) {iou10:.3f} < D(5) {iou5:.3f} - 0.05"

    elapsed = time.perf_counter() - start
    assert elapsed < 600.0, f"end-to-end took {elapsed:.0f}s"
    _report(f"distillation end-to-end (D(5)={iou5:.3f}, D(10)={iou10:.3f}, "
            f"{elapsed:.0f}s)")


def test_nested_budget_property():
    """D(5) subset of D(10) subset of ... subset of D(50), exactly, any seed."""
    ids = [f"id{i:03d}" for i in range(60)]
    for seed in (0, 1, 7, 123, 99991):
        previous: set = set()
        for n in (5, 10, 15, 20, 25, 50):
            current = set(select_increment(ids, n, seed))
            assert len(current) == n
            assert previous <= current, f"budgets not nested at seed {seed}"
            previous = current
    _report("nested budget property (exact inclusion, 5 seeds)")


def test_round_trips_and_corruption(tmp_path_factory):
    """Cache and mask round-trips are bit-exact; corrupt cache is detected."""
    root = tmp_path_factory.mktemp("accept_rt")
    rng = np.random.default_rng(5)

    mask = rng.random((64, 64)) < 0.3
    encode_mask(mask, root / "m.png")
    assert np.array_equal(decode_mask(root / "m.png"), mask)

    cache = EmbeddingCache(root / "cache")
    emb = Embedding(values=rng.standard_normal((16, 16, 16)).astype(np.float32),
                    encoder_id="enc")
    path1 = cache.put("sample", "enc", emb)
    bytes_first = path1.read_bytes()
    back = cache.get("sample", "enc")
    assert back.values.tobytes() == emb.values.tobytes()
    assert cache.put("sample", "enc", emb).read_bytes() == bytes_first

    corrupted = bytearray(bytes_first)
    corrupted[-1] ^= 0x01
    path1.write_bytes(bytes(corrupted))
    with pytest.raises(errors.CorruptEntry):
        cache.get("sample", "enc")
    path1.write_bytes(bytes_first[:20])
    with pytest.raises(errors.CorruptEntry):
        cache.get("sample", "enc")
    _report("cache and mask round-trips bit-exact, corruption detected")


@pytest.mark.skipif(
    not os.environ.get("DISTILLSEG_SAM_CHECKPOINT"),
    reason="weights-gated: set DISTILLSEG_SAM_CHECKPOINT (and optionally "
           "DISTILLSEG_REAL_MANIFEST) to run against real foundation weights")
def test_weights_gated_real_model(tmp_path_factory):
    """With real weights: box-prompt simulation reaches mean image IoU > 0.9
    on >= 10 realistic samples; the published reference row is only checked
    when the real corpus is supplied."""
    from distillseg.data import load_manifest, sample_gt
    from distillseg.encoder import SamAdapter
    from distillseg.metrics import mean_image_iou

    adapter = SamAdapter(
        checkpoint=os.environ["DISTILLSEG_SAM_CHECKPOINT"],
        model_type=os.environ.get("DISTILLSEG_SAM_MODEL_TYPE", "vit_h"))
    root = tmp_path_factory.mktemp("weights_gated")
    manifest_path = os.environ.get("DISTILLSEG_REAL_MANIFEST")
    if manifest_path:
        manifest = load_manifest(manifest_path)
    else:
        manifest = generate_synthetic_corpus(12, seed=3, size=256,
                                             out_dir=root / "corpus")
    gateway = EncoderGateway(adapter=adapter,
                             cache=EmbeddingCache(root / "cache"))
    ids = [s.id for s in manifest.samples if s.gt_mask_path][:12]
    assert len(ids) >= 10, "need at least 10 ground-truthed samples"
    records = simulate_annotation(manifest, ids, "box", gateway)
    pairs = [(r.mask, sample_gt(manifest.get(r.sample_id))) for r in records]
    simulated_iou = mean_image_iou(pairs)
    assert simulated_iou > 0.9, f"box-prompt mean image IoU {simulated_iou:.3f}"

    if manifest_path:  # full real corpus: reproduce the reference row +-0.05
        config = TrainConfig(budgets=(5,), epochs=100, batch_size=4,
                             learning_rate=1e-4, seed=0)
        sample = manifest.samples[0]
        emb = gateway.embedding(sample)
        decoder_config = DecoderConfig(
            in_channels=emb.shape[0], channel_schedule=(128, 64, 32),
            target_width=sample.width, target_height=sample.height, init_seed=0)
        report = run_curve(config, decoder_config, manifest, records, gateway)
        metrics = report.entries[0].metrics
        from distillseg.metrics import REFERENCE_ROWS
        ref = REFERENCE_ROWS["distilled_decoder_budget_5"]
        assert abs(metrics.macro_f1 - ref["macro_f1"]) <= 0.05
        assert abs(metrics.accuracy - ref["accuracy"]) <= 0.05
        assert abs(metrics.macro_precision - ref["macro_precision"]) <= 0.05
        assert abs(metrics.macro_recall - ref["macro_recall"]) <= 0.05
    _report("weights-gated real-model checks")
