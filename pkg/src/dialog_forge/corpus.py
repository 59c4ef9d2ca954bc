"""Image-corpus manifests and game composition strategies.

A corpus is loaded from a JSONL manifest (one record per line) and games
are composed from it by cluster grouping, embedding-similarity grouping,
uniform random grouping, or same-episode frame pairing. All grouping
operations are pure functions of (corpus, params, seed).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .engine import GameSpec
from .errors import (
    CorpusMiss,
    DanglingContentRef,
    DuplicateId,
    InsufficientCluster,
    InsufficientCorpus,
    InsufficientFrames,
    ManifestError,
    MissingEmbedding,
)
from .prompts import ImageRef
from .rng import stable_seed


@dataclass(frozen=True)
class ImageRecord:
    """One corpus image: identity, content reference, grouping keys."""

    image_id: str
    content_ref: str
    cluster_key: str | None = None
    episode_id: str | None = None
    task_label: str | None = None
    frame_index: int | None = None
    embedding: tuple[float, ...] | None = None
    attributes: dict | None = None

    def __post_init__(self) -> None:
        if not self.image_id:
            raise ValueError("image_id must be non-empty")
        if self.frame_index is not None and self.episode_id is None:
            raise ValueError(f"{self.image_id}: frame_index requires episode_id")
        if self.embedding is not None:
            object.__setattr__(self, "embedding", tuple(float(x) for x in self.embedding))

    def to_json(self) -> dict:
        obj: dict = {"image_id": self.image_id, "content_ref": self.content_ref}
        for key in ("cluster_key", "episode_id", "task_label", "frame_index"):
            value = getattr(self, key)
            if value is not None:
                obj[key] = value
        if self.embedding is not None:
            obj["embedding"] = list(self.embedding)
        if self.attributes is not None:
            obj["attributes"] = dict(self.attributes)
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "ImageRecord":
        return cls(
            image_id=obj["image_id"],
            content_ref=obj["content_ref"],
            cluster_key=obj.get("cluster_key"),
            episode_id=obj.get("episode_id"),
            task_label=obj.get("task_label"),
            frame_index=obj.get("frame_index"),
            embedding=tuple(obj["embedding"]) if obj.get("embedding") is not None else None,
            attributes=obj.get("attributes"),
        )


class Corpus:
    """Immutable collection of image records with unique ids."""

    def __init__(
        self,
        corpus_id: str,
        records: Sequence[ImageRecord],
        provenance: str = "",
    ):
        self.corpus_id = corpus_id
        self.records = tuple(records)
        self.provenance = provenance
        self._by_id: dict[str, ImageRecord] = {}
        dims = set()
        for record in self.records:
            if record.image_id in self._by_id:
                raise DuplicateId(f"duplicate image_id {record.image_id!r}")
            self._by_id[record.image_id] = record
            if record.embedding is not None:
                dims.add(len(record.embedding))
        if len(dims) > 1:
            raise ManifestError(f"mixed embedding dimensions: {sorted(dims)}")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __contains__(self, image_id: str) -> bool:
        return image_id in self._by_id

    def get(self, image_id: str) -> ImageRecord:
        try:
            return self._by_id[image_id]
        except KeyError:
            raise CorpusMiss(f"unknown image_id {image_id!r} in corpus {self.corpus_id!r}")

    def image_ref(self, image_id: str) -> ImageRef:
        return ImageRef(uri=self.get(image_id).content_ref)


def load_manifest(
    path, *, corpus_id: str | None = None, verify_content: bool = False
) -> Corpus:
    """Load a JSONL manifest, validating ids, embeddings, and optionally refs.

    With ``verify_content`` enabled, relative content_ref paths must exist
    on disk (resolved against the manifest's directory); URI schemes are
    left to the backend that resolves them.
    """
    records = []
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                record = ImageRecord.from_json(obj)
            except DuplicateId:
                raise
            except Exception as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from exc
            if verify_content and "://" not in record.content_ref:
                resolved = os.path.join(base, record.content_ref)
                if not os.path.exists(resolved):
                    raise DanglingContentRef(
                        f"{path}:{lineno}: content_ref {record.content_ref!r} not found"
                    )
            records.append(record)
    name = corpus_id or os.path.splitext(os.path.basename(path))[0]
    return Corpus(name, records, provenance=f"manifest:{path}")


def save_manifest(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in corpus.records:
            fh.write(json.dumps(record.to_json(), sort_keys=True) + "\n")


def _spec(
    corpus: Corpus,
    strategy: str,
    index: int,
    image_ids: Sequence[str],
    target_index: int,
    base_seed: int,
    max_turns: int,
    task_label: str | None = None,
) -> GameSpec:
    game_id = f"{corpus.corpus_id}:{strategy}:{base_seed}:{index:06d}"
    return GameSpec(
        game_id=game_id,
        image_ids=tuple(image_ids),
        target_index=target_index,
        max_turns=max_turns,
        corpus_id=corpus.corpus_id,
        seed=stable_seed(base_seed, game_id),
        task_label=task_label,
    )


def group_by_cluster(
    corpus: Corpus, n: int, games: int, seed: int, *, max_turns: int = 3
) -> list[GameSpec]:
    """Each game draws n distinct images from a single cluster.

    Clusters are sampled uniformly with replacement across games; images
    without replacement within a game; the target position is uniform.
    """
    clusters: dict[str, list[str]] = {}
    for record in corpus.records:
        if record.cluster_key is not None:
            clusters.setdefault(record.cluster_key, []).append(record.image_id)
    eligible = sorted(key for key, members in clusters.items() if len(members) >= n)
    if not eligible:
        raise InsufficientCluster(f"no cluster has >= {n} images")
    rng = np.random.default_rng(stable_seed(seed, "cluster", n))
    specs = []
    for index in range(games):
        key = eligible[int(rng.integers(len(eligible)))]
        members = clusters[key]
        picked = [members[int(i)] for i in rng.choice(len(members), size=n, replace=False)]
        target = int(rng.integers(n)) + 1
        specs.append(_spec(corpus, "cluster", index, picked, target, seed, max_turns))
    return specs


class _SimilarityIndex:
    """Exact nearest-neighbour lookup by cosine, ties by ascending id.

    One linear scan per queried target (cached); corpora here are small
    enough that no approximate index is warranted.
    """

    def __init__(self, corpus: Corpus):
        missing = [r.image_id for r in corpus.records if r.embedding is None]
        if missing:
            raise MissingEmbedding(
                f"records without embeddings: {missing[:5]}{'...' if len(missing) > 5 else ''}"
            )
        self.ids = [r.image_id for r in corpus.records]
        self._id_array = np.asarray(self.ids)
        vectors = np.asarray([r.embedding for r in corpus.records], dtype=float)
        norms = np.linalg.norm(vectors, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        self._unit = vectors / norms
        self._cache: dict[int, np.ndarray] = {}

    def _ranked(self, index: int) -> np.ndarray:
        ranked = self._cache.get(index)
        if ranked is None:
            sims = self._unit @ self._unit[index]
            # lexsort uses the last key as primary: similarity descending,
            # then image_id ascending for equal similarities.
            ranked = np.lexsort((self._id_array, -sims))
            self._cache[index] = ranked
        return ranked

    def neighbours(self, index: int, k: int) -> list[int]:
        out = []
        for j in self._ranked(index):
            if j == index:
                continue
            out.append(int(j))
            if len(out) == k:
                break
        return out


def group_by_similarity(
    corpus: Corpus, n: int, games: int, seed: int, *, max_turns: int = 3
) -> list[GameSpec]:
    """Distractors are the target's n-1 nearest neighbours by cosine."""
    if len(corpus) < n:
        raise InsufficientCorpus(f"corpus has {len(corpus)} images, need {n}")
    index = _SimilarityIndex(corpus)
    rng = np.random.default_rng(stable_seed(seed, "similarity", n))
    specs = []
    for game_index in range(games):
        t = int(rng.integers(len(index.ids)))
        picked_idx = [t] + index.neighbours(t, n - 1)
        picked = [index.ids[i] for i in picked_idx]
        order = rng.permutation(n)
        image_ids = [picked[int(i)] for i in order]
        target = image_ids.index(index.ids[t]) + 1
        specs.append(
            _spec(corpus, "similarity", game_index, image_ids, target, seed, max_turns)
        )
    return specs


def group_random(
    corpus: Corpus, n: int, games: int, seed: int, *, max_turns: int = 3
) -> list[GameSpec]:
    """Uniform sampling of n distinct images per game."""
    if len(corpus) < n:
        raise InsufficientCorpus(f"corpus has {len(corpus)} images, need {n}")
    ids = [r.image_id for r in corpus.records]
    rng = np.random.default_rng(stable_seed(seed, "random", n))
    specs = []
    for index in range(games):
        picked = [ids[int(i)] for i in rng.choice(len(ids), size=n, replace=False)]
        target = int(rng.integers(n)) + 1
        specs.append(_spec(corpus, "random", index, picked, target, seed, max_turns))
    return specs


def group_episode_frames(
    corpus: Corpus,
    games_per_task: int = 1000,
    seed: int = 0,
    *,
    frame_pairing: str = "same_episode",
    max_turns: int = 3,
) -> list[GameSpec]:
    """Two-frame games sampled from one task execution.

    With the default ``same_episode`` pairing both frames come from one
    episode; ``same_task`` allows frames from different episodes of the
    same task. The task description is carried on the spec.
    """
    if frame_pairing not in ("same_episode", "same_task"):
        raise ValueError(f"unknown frame_pairing {frame_pairing!r}")
    tasks: dict[str, dict[str, list[str]]] = {}
    for record in corpus.records:
        if record.task_label is None or record.episode_id is None:
            continue
        tasks.setdefault(record.task_label, {}).setdefault(
            record.episode_id, []
        ).append(record.image_id)
    if not tasks:
        raise InsufficientFrames("no records carry task_label and episode_id")
    rng = np.random.default_rng(stable_seed(seed, "episode", frame_pairing))
    specs = []
    index = 0
    for task in sorted(tasks):
        episodes = tasks[task]
        if frame_pairing == "same_episode":
            pools = [sorted(frames) for frames in episodes.values() if len(frames) >= 2]
            pools.sort()
            if not pools:
                raise InsufficientFrames(f"task {task!r} has no episode with >= 2 frames")
        else:
            merged = sorted(fid for frames in episodes.values() for fid in frames)
            if len(merged) < 2:
                raise InsufficientFrames(f"task {task!r} has fewer than 2 frames")
            pools = [merged]
        for _ in range(games_per_task):
            pool = pools[int(rng.integers(len(pools)))]
            i, j = rng.choice(len(pool), size=2, replace=False)
            pair = [pool[int(i)], pool[int(j)]]
            target = int(rng.integers(2)) + 1
            specs.append(
                _spec(corpus, "episode", index, pair, target, seed, max_turns, task)
            )
            index += 1
    return specs


def write_specs(specs: Iterable[GameSpec], path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for spec in specs:
            fh.write(json.dumps(spec.to_json(), sort_keys=True) + "\n")
            count += 1
    return count


def read_specs(path) -> list[GameSpec]:
    specs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                specs.append(GameSpec.from_json(json.loads(line)))
    return specs
