"""Walkthrough: frozen-encoder embeddings and the bit-exact cache.

Encodes a scene with the toy encoder, stores the embedding in the on-disk
cache, and demonstrates the round-trip and corruption guarantees the
training pipeline relies on.

Run:  python3 demos/02_embeddings_and_cache.py
"""

from pathlib import Path

import numpy as np

from distillseg import errors
from distillseg.cache import EmbeddingCache
from distillseg.data import generate_synthetic_corpus
from distillseg.encoder import EncoderGateway, ToyPitAdapter

OUT = Path(__file__).parent / "out"


def main():
    OUT.mkdir(exist_ok=True)
    manifest = generate_synthetic_corpus(3, seed=7, size=128,
                                         out_dir=OUT / "corpus_demo2")
    adapter = ToyPitAdapter(seed=0)
    cache = EmbeddingCache(OUT / "cache_demo2")
    gateway = EncoderGateway(adapter=adapter, cache=cache)

    sample = manifest.samples[0]
    emb = gateway.encode_image(sample)
    print(f"embedding for {sample.id}: shape {emb.shape}, "
          f"dtype {emb.values.dtype}, encoder {emb.encoder_id}")

    # second call is served from the cache, bit-identical
    again = gateway.encode_image(sample)
    print("cache round-trip bit-identical:",
          emb.values.tobytes() == again.values.tobytes())

    # the encoder is frozen: its parameter digest never moves
    digest = adapter.encoder_digest()
    gateway.warm_cache(manifest)
    print("encoder digest stable across calls:",
          digest == adapter.encoder_digest())

    # a gateway without any adapter can still serve cached embeddings
    cold = EncoderGateway(adapter=None, cache=cache,
                          encoder_id=adapter.encoder_id)
    print("cache-only gateway works:",
          cold.encode_image(sample).values.tobytes() == emb.values.tobytes())

    # flip one payload byte: the CRC32 check refuses the entry
    path = cache.path_for(sample.id, adapter.encoder_id)
    blob = bytearray(path.read_bytes())
    blob[-1] ^= 0xFF
    path.write_bytes(bytes(blob))
    try:
        cache.get(sample.id, adapter.encoder_id)
        print("corruption NOT detected (unexpected)")
    except errors.CorruptEntry as exc:
        print(f"corruption detected as expected: {exc}")


if __name__ == "__main__":
    main()
