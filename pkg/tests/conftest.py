import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for oracles.py

from distillseg.cache import EmbeddingCache
from distillseg.data import generate_synthetic_corpus
from distillseg.encoder import EncoderGateway, ToyPitAdapter


@pytest.fixture(scope="session")
def corpus10(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus10")
    manifest = generate_synthetic_corpus(10, seed=5, size=128, out_dir=root)
    return manifest


@pytest.fixture(scope="session")
def toy_gateway(tmp_path_factory):
    cache = EmbeddingCache(tmp_path_factory.mktemp("embcache"))
    return EncoderGateway(adapter=ToyPitAdapter(seed=0), cache=cache)
