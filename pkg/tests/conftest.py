import json
import os

import pytest

from dialog_forge.corpus import Corpus, ImageRecord
from dialog_forge.engine import GameSpec
from dialog_forge.synthworld import (
    ATTRIBUTE_ORDER,
    DEFAULT_DOMAINS,
    one_hot_embedding,
)

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")
CONFORMANCE_DIR = os.path.join(os.path.dirname(__file__), "..", "conformance")


def data_path(*parts) -> str:
    return os.path.join(DATA_DIR, *parts)


def load_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def make_attribute_corpus(rows, corpus_id="testworld", embeddings=True) -> Corpus:
    """Corpus from (background_color, object_color, shape, count) tuples."""
    records = []
    for i, values in enumerate(rows):
        attributes = dict(zip(ATTRIBUTE_ORDER, values))
        image_id = f"img-{i:04d}"
        records.append(
            ImageRecord(
                image_id=image_id,
                content_ref=f"synth://{corpus_id}/{image_id}",
                embedding=(
                    one_hot_embedding(attributes, DEFAULT_DOMAINS) if embeddings else None
                ),
                attributes=attributes,
            )
        )
    return Corpus(corpus_id, records)


def make_spec(corpus, image_ids, target_index, *, max_turns=3, seed=7, game_id="g-test"):
    return GameSpec(
        game_id=game_id,
        image_ids=tuple(image_ids),
        target_index=target_index,
        max_turns=max_turns,
        corpus_id=corpus.corpus_id,
        seed=seed,
    )


@pytest.fixture
def shape_pair_corpus():
    """Two images identical except for shape."""
    return make_attribute_corpus(
        [("orange", "white", "square", 9), ("orange", "white", "circle", 9)]
    )


@pytest.fixture
def fig_style_corpus():
    """Four images in the style of the worked example: white/blue objects
    on orange backgrounds, the target uniquely pinned by its count."""
    return make_attribute_corpus(
        [
            ("orange", "white", "square", 9),
            ("orange", "white", "circle", 4),
            ("orange", "blue", "circle", 4),
            ("orange", "blue", "square", 6),
        ]
    )
