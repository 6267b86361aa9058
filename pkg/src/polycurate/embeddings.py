"""Geometry-based curation over document embeddings.

Embeddings come from a pluggable external embedder (subprocess or HTTP);
this module only does exact-distance deduplication and diversity
selection with deterministic, id-ordered greedy scans.
"""

from __future__ import annotations

import json
import subprocess
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np
import requests


class EmbeddingError(Exception):
    pass


@dataclass
class EmbeddingVector:
    doc_id: str
    vector: np.ndarray
    embedder_id: str


def cosine_distance(u: Sequence[float], v: Sequence[float]) -> float:
    """1 - cos(u, v), in [0, 2]."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise EmbeddingError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise EmbeddingError("zero-norm vector")
    return float(1.0 - np.dot(u, v) / (nu * nv))


def load_embeddings(fh: IO[str]) -> list[EmbeddingVector]:
    """Read embedding JSONL; rejects non-finite components and mixed
    dimensions/embedder ids."""
    out: list[EmbeddingVector] = []
    dim = None
    embedder_id = None
    for line_no, line in enumerate(fh, start=1):
        line = line.strip()
        if not line:
            continue
        obj = json.loads(line)
        vec = np.asarray(obj["vector"], dtype=np.float64)
        if not np.all(np.isfinite(vec)):
            raise EmbeddingError(f"line {line_no}: non-finite component")
        if dim is None:
            dim, embedder_id = vec.shape[0], obj["embedder_id"]
        elif vec.shape[0] != dim:
            raise EmbeddingError(f"line {line_no}: dimension {vec.shape[0]} != {dim}")
        elif obj["embedder_id"] != embedder_id:
            raise EmbeddingError(f"line {line_no}: mixed embedder_ids")
        out.append(EmbeddingVector(obj["doc_id"], vec, obj["embedder_id"]))
    return out


def _check_collection(embs: Sequence[EmbeddingVector]) -> None:
    ids = {e.embedder_id for e in embs}
    if len(ids) > 1:
        raise EmbeddingError(f"mixed embedder_ids: {sorted(ids)}")


def dedup_near(embs: Sequence[EmbeddingVector], tau: float) -> list[str]:
    """Greedy near-duplicate removal; returns kept doc ids.

    Scans in ascending doc-id order; a doc is dropped iff its cosine
    distance to some already-kept doc is < tau.
    """
    if not (0.0 < tau < 2.0):
        raise EmbeddingError("tau must be in (0, 2)")
    _check_collection(embs)
    ordered = sorted(embs, key=lambda e: e.doc_id)
    kept: list[EmbeddingVector] = []
    for e in ordered:
        if all(cosine_distance(e.vector, k.vector) >= tau for k in kept):
            kept.append(e)
    return [e.doc_id for e in kept]


def select_diverse(embs: Sequence[EmbeddingVector], k: int) -> list[str]:
    """Farthest-point traversal; returns k doc ids in selection order.

    Seeds at the smallest id, then repeatedly adds the doc maximizing the
    minimum distance to the selected set (ties by ascending id).
    """
    _check_collection(embs)
    n = len(embs)
    if not (1 <= k <= n):
        raise EmbeddingError(f"k={k} out of range for {n} embeddings")
    ordered = sorted(embs, key=lambda e: e.doc_id)
    selected = [ordered[0]]
    remaining = ordered[1:]
    min_dist = {e.doc_id: cosine_distance(e.vector, ordered[0].vector) for e in remaining}
    while len(selected) < k:
        best = min(remaining, key=lambda e: (-min_dist[e.doc_id], e.doc_id))
        selected.append(best)
        remaining = [e for e in remaining if e.doc_id != best.doc_id]
        for e in remaining:
            d = cosine_distance(e.vector, best.vector)
            if d < min_dist[e.doc_id]:
                min_dist[e.doc_id] = d
    return [e.doc_id for e in selected]


class SubprocessEmbedder:
    """Embedder contract: JSONL docs on stdin -> embedding JSONL on stdout."""

    def __init__(self, argv: Sequence[str], embedder_id: str = "subprocess"):
        self.argv = list(argv)
        self.embedder_id = embedder_id

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        payload = "".join(
            json.dumps({"doc_id": str(i), "text": t}, ensure_ascii=False) + "\n"
            for i, t in enumerate(texts)
        )
        proc = subprocess.run(
            self.argv, input=payload, capture_output=True, text=True, check=False
        )
        if proc.returncode != 0:
            raise EmbeddingError(f"embedder exited {proc.returncode}: {proc.stderr[:500]}")
        by_id = {}
        for line in proc.stdout.splitlines():
            if line.strip():
                obj = json.loads(line)
                by_id[obj["doc_id"]] = np.asarray(obj["vector"], dtype=np.float64)
        try:
            return [by_id[str(i)] for i in range(len(texts))]
        except KeyError as exc:
            raise EmbeddingError(f"embedder omitted doc {exc}") from exc


class HttpEmbedder:
    """Embedder contract: POST /embed {"texts": [...]} -> {"vectors": [[...]]}."""

    def __init__(self, base_url: str, embedder_id: str = "http", timeout: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self.embedder_id = embedder_id
        self.timeout = timeout

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        resp = requests.post(
            f"{self.base_url}/embed", json={"texts": list(texts)}, timeout=self.timeout
        )
        if not resp.ok:
            raise EmbeddingError(f"embedder HTTP {resp.status_code}")
        vectors = resp.json()["vectors"]
        if len(vectors) != len(texts):
            raise EmbeddingError("embedder returned wrong number of vectors")
        return [np.asarray(v, dtype=np.float64) for v in vectors]


def embed_documents(docs: Iterable, embedder) -> list[EmbeddingVector]:
    docs = list(docs)
    vectors = embedder.embed([d.text for d in docs])
    return [
        EmbeddingVector(doc_id=d.id, vector=v, embedder_id=embedder.embedder_id)
        for d, v in zip(docs, vectors)
    ]
