import json
import math

import numpy as np
import pytest

from dialog_forge.corpus import (
    Corpus,
    ImageRecord,
    group_by_cluster,
    group_by_similarity,
    group_episode_frames,
    group_random,
    load_manifest,
    read_specs,
    save_manifest,
    write_specs,
)
from dialog_forge.errors import (
    DanglingContentRef,
    DuplicateId,
    InsufficientCluster,
    InsufficientCorpus,
    InsufficientFrames,
    ManifestError,
    MissingEmbedding,
)
from dialog_forge.synthworld import gen_world


def _write_manifest(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


BASIC_ROWS = [
    {"image_id": "a", "content_ref": "images/a.png", "cluster_key": "cats"},
    {"image_id": "b", "content_ref": "images/b.png", "cluster_key": "cats"},
    {"image_id": "c", "content_ref": "images/c.png", "cluster_key": "dogs"},
    {"image_id": "d", "content_ref": "images/d.png", "cluster_key": "dogs"},
]


def test_load_manifest_four_records(tmp_path):
    path = tmp_path / "corpus.jsonl"
    _write_manifest(path, BASIC_ROWS)
    corpus = load_manifest(path)
    assert len(corpus) == 4
    assert corpus.get("a").cluster_key == "cats"
    assert corpus.image_ref("a").uri == "images/a.png"


def test_duplicate_id_rejected(tmp_path):
    path = tmp_path / "corpus.jsonl"
    _write_manifest(path, BASIC_ROWS + [{"image_id": "a", "content_ref": "x.png"}])
    with pytest.raises(DuplicateId):
        load_manifest(path)


def test_mixed_embedding_dimensions_rejected(tmp_path):
    path = tmp_path / "corpus.jsonl"
    _write_manifest(
        path,
        [
            {"image_id": "a", "content_ref": "a.png", "embedding": [1.0, 0.0]},
            {"image_id": "b", "content_ref": "b.png", "embedding": [1.0, 0.0, 0.0]},
        ],
    )
    with pytest.raises(ManifestError):
        load_manifest(path)


def test_frame_index_requires_episode(tmp_path):
    path = tmp_path / "corpus.jsonl"
    _write_manifest(path, [{"image_id": "a", "content_ref": "a.png", "frame_index": 3}])
    with pytest.raises(ManifestError):
        load_manifest(path)


def test_dangling_content_ref(tmp_path):
    path = tmp_path / "corpus.jsonl"
    _write_manifest(path, [{"image_id": "a", "content_ref": "missing.png"}])
    with pytest.raises(DanglingContentRef):
        load_manifest(path, verify_content=True)
    (tmp_path / "missing.png").write_bytes(b"px")
    assert len(load_manifest(path, verify_content=True)) == 1


def test_manifest_round_trip(tmp_path):
    world = gen_world(3, 12, distinct=True)
    path = tmp_path / "world.jsonl"
    save_manifest(world, path)
    loaded = load_manifest(path, corpus_id=world.corpus_id)
    assert [r.to_json() for r in loaded.records] == [r.to_json() for r in world.records]


# --- cluster grouping ---

def _cluster_corpus(clusters):
    records = []
    for key, count in clusters.items():
        for i in range(count):
            image_id = f"{key}-{i}"
            records.append(ImageRecord(image_id=image_id, content_ref=image_id, cluster_key=key))
    return Corpus("clusters", records)


def test_group_by_cluster_single_cluster_per_game():
    corpus = _cluster_corpus({"c1": 6, "c2": 6, "c3": 3})
    specs = group_by_cluster(corpus, n=4, games=200, seed=5)
    assert len(specs) == 200
    for spec in specs:
        keys = {corpus.get(i).cluster_key for i in spec.image_ids}
        assert len(keys) == 1
        assert keys != {"c3"}  # too small to host a 4-image game
        assert len(set(spec.image_ids)) == 4
        assert 1 <= spec.target_index <= 4


def test_group_by_cluster_insufficient():
    corpus = _cluster_corpus({"c1": 3})
    with pytest.raises(InsufficientCluster):
        group_by_cluster(corpus, n=4, games=10, seed=5)


def test_group_by_cluster_deterministic():
    corpus = _cluster_corpus({"c1": 6, "c2": 6})
    a = group_by_cluster(corpus, n=4, games=50, seed=5)
    b = group_by_cluster(corpus, n=4, games=50, seed=5)
    assert [s.to_json() for s in a] == [s.to_json() for s in b]
    c = group_by_cluster(corpus, n=4, games=50, seed=6)
    assert [s.to_json() for s in a] != [s.to_json() for s in c]


# --- similarity grouping ---

def test_similarity_hand_computed_cosine():
    records = [
        ImageRecord(image_id="target", content_ref="t", embedding=(1.0, 0.0)),
        ImageRecord(image_id="near", content_ref="n", embedding=(0.9, 0.1)),
        ImageRecord(image_id="orthogonal", content_ref="o", embedding=(0.0, 1.0)),
        ImageRecord(image_id="opposite", content_ref="p", embedding=(-1.0, 0.0)),
    ]
    corpus = Corpus("cosine", records)
    # Some game will have "target" as its target; its single distractor
    # must be the hand-computed nearest neighbour (0.9, 0.1).
    specs = group_by_similarity(corpus, n=2, games=40, seed=1)
    targeted = [s for s in specs if s.target_id == "target"]
    assert targeted
    for spec in targeted:
        assert set(spec.image_ids) == {"target", "near"}


def test_similarity_tie_broken_by_image_id():
    records = [
        ImageRecord(image_id="t", content_ref="t", embedding=(1.0, 0.0)),
        ImageRecord(image_id="zz", content_ref="z", embedding=(1.0, 0.0)),
        ImageRecord(image_id="aa", content_ref="a", embedding=(1.0, 0.0)),
    ]
    corpus = Corpus("ties", records)
    specs = group_by_similarity(corpus, n=2, games=30, seed=3)
    for spec in specs:
        if spec.target_id == "t":
            assert set(spec.image_ids) == {"t", "aa"}


def test_similarity_requires_embeddings():
    corpus = Corpus("no-emb", [ImageRecord(image_id="a", content_ref="a")])
    with pytest.raises(InsufficientCorpus):
        group_by_similarity(corpus, n=2, games=1, seed=0)
    corpus = Corpus(
        "no-emb",
        [
            ImageRecord(image_id="a", content_ref="a"),
            ImageRecord(image_id="b", content_ref="b"),
        ],
    )
    with pytest.raises(MissingEmbedding):
        group_by_similarity(corpus, n=2, games=1, seed=0)


def test_similarity_no_closer_unselected_candidate():
    world = gen_world(17, 60, distinct=True)
    specs = group_by_similarity(world, n=4, games=25, seed=9)
    vectors = {r.image_id: np.asarray(r.embedding) for r in world.records}

    def cosine(a, b):
        return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))

    for spec in specs:
        target = spec.target_id
        distractors = [i for i in spec.image_ids if i != target]
        worst_selected = min(cosine(vectors[target], vectors[d]) for d in distractors)
        for other in world.records:
            if other.image_id in spec.image_ids:
                continue
            assert (
                cosine(vectors[target], vectors[other.image_id])
                <= worst_selected + 1e-9
            )


def test_similarity_target_never_its_own_distractor():
    world = gen_world(17, 30, distinct=True)
    for spec in group_by_similarity(world, n=4, games=50, seed=2):
        assert len(set(spec.image_ids)) == 4


# --- random grouping ---

def test_group_random_distinct_ids():
    world = gen_world(23, 40, distinct=True)
    specs = group_random(world, n=4, games=100, seed=11)
    assert len(specs) == 100
    for spec in specs:
        assert len(set(spec.image_ids)) == 4


def test_group_random_n_equals_corpus_size():
    world = gen_world(23, 5, distinct=True)
    specs = group_random(world, n=5, games=10, seed=11)
    for spec in specs:
        assert sorted(spec.image_ids) == sorted(r.image_id for r in world.records)


def test_group_random_insufficient():
    world = gen_world(23, 3)
    with pytest.raises(InsufficientCorpus):
        group_random(world, n=4, games=1, seed=0)


def test_group_random_deterministic():
    world = gen_world(23, 40, distinct=True)
    a = group_random(world, n=4, games=30, seed=11)
    b = group_random(world, n=4, games=30, seed=11)
    assert [s.to_json() for s in a] == [s.to_json() for s in b]


# --- episode frame pairing ---

def _episode_corpus(tasks=10, episodes_per_task=20, frames_per_episode=4):
    records = []
    for t in range(tasks):
        task = f"task-{t:02d}"
        for e in range(episodes_per_task):
            episode = f"{task}-ep{e:02d}"
            for f in range(frames_per_episode):
                image_id = f"{episode}-f{f}"
                records.append(
                    ImageRecord(
                        image_id=image_id,
                        content_ref=image_id,
                        episode_id=episode,
                        task_label=task,
                        frame_index=f,
                    )
                )
    return Corpus("frames", records)


def test_group_episode_frames_counts():
    corpus = _episode_corpus(tasks=10, episodes_per_task=20)
    specs = group_episode_frames(corpus, games_per_task=25, seed=3)
    assert len(specs) == 10 * 25
    for spec in specs:
        assert spec.n == 2
        assert spec.task_label is not None
        episodes = {corpus.get(i).episode_id for i in spec.image_ids}
        assert len(episodes) == 1  # same-episode default
        assert {corpus.get(i).task_label for i in spec.image_ids} == {spec.task_label}


def test_group_episode_frames_same_task_pairing():
    corpus = _episode_corpus(tasks=2, episodes_per_task=3, frames_per_episode=2)
    specs = group_episode_frames(
        corpus, games_per_task=40, seed=3, frame_pairing="same_task"
    )
    tasks_mixed = 0
    for spec in specs:
        assert {corpus.get(i).task_label for i in spec.image_ids} == {spec.task_label}
        if len({corpus.get(i).episode_id for i in spec.image_ids}) == 2:
            tasks_mixed += 1
    assert tasks_mixed > 0  # same_task may straddle episodes


def test_group_episode_frames_single_frame_episode():
    records = [
        ImageRecord(
            image_id="only",
            content_ref="only",
            episode_id="ep0",
            task_label="t",
            frame_index=0,
        )
    ]
    with pytest.raises(InsufficientFrames):
        group_episode_frames(Corpus("one", records), games_per_task=1, seed=0)


def test_group_episode_frames_deterministic():
    corpus = _episode_corpus(tasks=3, episodes_per_task=4)
    a = group_episode_frames(corpus, games_per_task=10, seed=3)
    b = group_episode_frames(corpus, games_per_task=10, seed=3)
    assert [s.to_json() for s in a] == [s.to_json() for s in b]


def test_specs_round_trip(tmp_path):
    world = gen_world(23, 12, distinct=True)
    specs = group_random(world, n=3, games=7, seed=1)
    path = tmp_path / "specs.jsonl"
    write_specs(specs, path)
    assert read_specs(path) == specs
