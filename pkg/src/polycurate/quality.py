"""Linear bag-of-ngrams quality classifiers over hashed features.

Feature vector for a text is the mean of one-hot hashed n-gram vectors
(word n-grams up to order 2 plus character n-grams of length 3..5 by
default). Training is plain logistic-loss SGD with a fixed seed, so
retraining is bit-reproducible.
"""

from __future__ import annotations

import json
import math
import random
import zlib
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .corpus import Document

DEFAULT_HASH_DIM = 1 << 20


class QualityError(Exception):
    pass


@dataclass(frozen=True)
class NgramSpec:
    word_max_order: int = 2
    char_min: int = 3
    char_max: int = 5


@dataclass(frozen=True)
class TrainingMeta:
    seed: int = 0
    epochs: int = 10
    learning_rate: float = 0.5
    holdout_fraction: float = 0.1


@dataclass
class QualityModel:
    lang: str
    hash_dim: int
    weights: np.ndarray
    bias: float
    ngram_spec: NgramSpec = NgramSpec()
    training_meta: TrainingMeta = TrainingMeta()
    holdout_accuracy: float | None = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "version": 1,
                "lang": self.lang,
                "hash_dim": self.hash_dim,
                "weights": self.weights.tolist(),
                "bias": self.bias,
                "ngram_spec": vars(self.ngram_spec),
                "training_meta": vars(self.training_meta),
                "holdout_accuracy": self.holdout_accuracy,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "QualityModel":
        obj = json.loads(text)
        return cls(
            lang=obj["lang"],
            hash_dim=obj["hash_dim"],
            weights=np.asarray(obj["weights"], dtype=np.float64),
            bias=obj["bias"],
            ngram_spec=NgramSpec(**obj["ngram_spec"]),
            training_meta=TrainingMeta(**obj["training_meta"]),
            holdout_accuracy=obj.get("holdout_accuracy"),
        )


@dataclass(frozen=True)
class ScoreRecord:
    doc_id: str
    score: float


def _hash(gram: str, dim: int) -> int:
    return zlib.crc32(gram.encode("utf-8")) % dim


def _features(text: str, spec: NgramSpec, dim: int) -> dict[int, float]:
    """Sparse mean-of-indicators feature vector."""
    idx_counts: dict[int, int] = {}
    total = 0
    words = text.split()
    for order in range(1, spec.word_max_order + 1):
        for i in range(len(words) - order + 1):
            gram = "w:" + " ".join(words[i : i + order])
            idx_counts[_hash(gram, dim)] = idx_counts.get(_hash(gram, dim), 0) + 1
            total += 1
    for n in range(spec.char_min, spec.char_max + 1):
        for i in range(len(text) - n + 1):
            gram = "c:" + text[i : i + n]
            h = _hash(gram, dim)
            idx_counts[h] = idx_counts.get(h, 0) + 1
            total += 1
    if total == 0:
        return {}
    return {h: c / total for h, c in idx_counts.items()}


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def train_quality(
    pos: Iterable[Document],
    neg: Iterable[Document],
    cfg: TrainingMeta = TrainingMeta(),
    lang: str = "en",
    hash_dim: int = DEFAULT_HASH_DIM,
    ngram_spec: NgramSpec = NgramSpec(),
) -> QualityModel:
    """Train a logistic classifier; positives label 1, negatives 0.

    A deterministic holdout slice is carved off before training and its
    accuracy stored on the returned model.
    """
    pos_feats = [(_features(d.text, ngram_spec, hash_dim), 1.0) for d in pos]
    neg_feats = [(_features(d.text, ngram_spec, hash_dim), 0.0) for d in neg]
    if not pos_feats or not neg_feats:
        raise QualityError("both positive and negative streams must be non-empty")

    rng = random.Random(cfg.seed)
    examples = pos_feats + neg_feats
    rng.shuffle(examples)
    n_hold = int(len(examples) * cfg.holdout_fraction)
    holdout, train = examples[:n_hold], examples[n_hold:]
    if not train:
        train, holdout = holdout, []

    w = np.zeros(hash_dim, dtype=np.float64)
    b = 0.0
    order = list(range(len(train)))
    for _ in range(cfg.epochs):
        rng.shuffle(order)
        for i in order:
            feats, y = train[i]
            margin = b + sum(w[h] * v for h, v in feats.items())
            g = _sigmoid(margin) - y
            step = cfg.learning_rate * g
            # Normalize the weight step by the example's squared feature
            # norm so the margin moves at learning-rate scale regardless of
            # document length (mean-of-indicator features have L2 mass
            # ~1/n_features, which would otherwise stall learning).
            sq = sum(v * v for v in feats.values())
            if sq > 0:
                for h, v in feats.items():
                    w[h] -= step * v / sq
            b -= step

    acc = None
    if holdout:
        correct = 0
        for feats, y in holdout:
            margin = b + sum(w[h] * v for h, v in feats.items())
            correct += int((margin >= 0) == (y >= 0.5))
        acc = correct / len(holdout)

    return QualityModel(
        lang=lang,
        hash_dim=hash_dim,
        weights=w,
        bias=b,
        ngram_spec=ngram_spec,
        training_meta=cfg,
        holdout_accuracy=acc,
    )


def score_doc(doc: Document, model: QualityModel) -> float:
    feats = _features(doc.text, model.ngram_spec, model.hash_dim)
    margin = model.bias + sum(model.weights[h] * v for h, v in feats.items())
    return _sigmoid(margin)


def score(docs: Iterable[Document], model: QualityModel) -> Iterator[ScoreRecord]:
    """Score documents, preserving stream order."""
    for doc in docs:
        yield ScoreRecord(doc_id=doc.id, score=score_doc(doc, model))


def filter_top(
    docs: Iterable[Document],
    scores: Iterable[ScoreRecord],
    keep_fraction: float | None = None,
    keep_threshold: float | None = None,
) -> list[Document]:
    """Keep the highest-scoring documents.

    Fraction mode keeps exactly ceil(f*N) documents, score ties broken by
    ascending doc id. Threshold mode keeps score >= t. Kept documents gain
    the provenance tag "score-filtered".
    """
    if (keep_fraction is None) == (keep_threshold is None):
        raise QualityError("specify exactly one of keep_fraction / keep_threshold")
    doc_list = list(docs)
    by_id = {}
    for rec in scores:
        by_id[rec.doc_id] = rec.score
    for doc in doc_list:
        if doc.id not in by_id:
            raise QualityError(f"missing score for doc {doc.id!r}")

    if keep_threshold is not None:
        kept_ids = {d.id for d in doc_list if by_id[d.id] >= keep_threshold}
    else:
        f = keep_fraction
        if not (0.0 < f <= 1.0):
            raise QualityError("keep_fraction must be in (0, 1]")
        n_keep = math.ceil(f * len(doc_list))
        ranked = sorted(doc_list, key=lambda d: (-by_id[d.id], d.id))
        kept_ids = {d.id for d in ranked[:n_keep]}

    return [d.with_provenance("score-filtered") for d in doc_list if d.id in kept_ids]
