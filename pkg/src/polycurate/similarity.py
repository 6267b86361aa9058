"""Language-similarity proxies and correlation machinery.

Two proxies relate a target language to English: mean log cosine
distance of parallel sentence embeddings (averaged over embedders), and
log perplexity per word of target text under an English-trained n-gram
LM. A Pearson correlation with Student-t p-values ties either proxy to
per-language outcome deltas.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from scipy import stats as _scipy_stats

from .corpus import Document
from .embeddings import cosine_distance

UNSPACED_LANGS = frozenset({"zh", "ja"})


class SimilarityError(Exception):
    pass


@dataclass(frozen=True)
class ParallelPair:
    sentence_en: str
    sentence_tgt: str
    tgt_lang: str

    def __post_init__(self):
        if not self.sentence_en or not self.sentence_tgt:
            raise SimilarityError("both sides of a parallel pair must be non-empty")


def load_parallel_tsv(fh) -> list[ParallelPair]:
    """TSV columns: tgt_lang, sentence_en, sentence_tgt."""
    pairs = []
    for line_no, line in enumerate(fh, start=1):
        line = line.rstrip("\n")
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise SimilarityError(f"line {line_no}: expected 3 tab-separated columns")
        pairs.append(ParallelPair(tgt_lang=parts[0], sentence_en=parts[1], sentence_tgt=parts[2]))
    return pairs


def embed_distance(pairs: Iterable[ParallelPair], embedders: Sequence) -> dict[str, float]:
    """Per target language: mean over embedders of ln(mean cosine distance).

    A zero mean distance for some (embedder, language) is degenerate (the
    log is undefined) and raises.
    """
    if not embedders:
        raise SimilarityError("need at least one embedder")
    pair_list = list(pairs)
    if not pair_list:
        raise SimilarityError("no parallel pairs")
    by_lang: dict[str, list[ParallelPair]] = defaultdict(list)
    for p in pair_list:
        by_lang[p.tgt_lang].append(p)

    result: dict[str, float] = {}
    for lang in sorted(by_lang):
        lang_pairs = by_lang[lang]
        logs = []
        for embedder in embedders:
            en_vecs = embedder.embed([p.sentence_en for p in lang_pairs])
            tgt_vecs = embedder.embed([p.sentence_tgt for p in lang_pairs])
            dists = [cosine_distance(u, v) for u, v in zip(en_vecs, tgt_vecs)]
            mean_dist = sum(dists) / len(dists)
            if mean_dist <= 0.0:
                raise SimilarityError(
                    f"degenerate zero mean distance for {lang!r} under {embedder.embedder_id!r}"
                )
            logs.append(math.log(mean_dist))
        result[lang] = sum(logs) / len(logs)
    return result


class NgramLanguageModel:
    """Witten-Bell-smoothed n-gram model over UTF-8 bytes.

    Working on bytes keeps the alphabet finite (256 symbols), so every
    conditional distribution sums to exactly 1 and unseen characters fall
    back toward the uniform byte distribution (8 bits per byte).
    """

    def __init__(self, order: int = 5, trained_lang: str = "en"):
        if order < 2:
            raise SimilarityError("order must be >= 2")
        self.order = order
        self.trained_lang = trained_lang
        # counts[k][(context bytes)][byte] for context lengths k = 0..order-1
        self._counts: list[dict[bytes, dict[int, int]]] = [
            defaultdict(dict) for _ in range(order)
        ]
        self._trained = False

    def fit(self, docs: Iterable[Document]) -> "NgramLanguageModel":
        n_docs = 0
        for doc in docs:
            data = doc.text.encode("utf-8")
            if data:
                n_docs += 1
            for i, b in enumerate(data):
                for k in range(min(i, self.order - 1) + 1):
                    ctx = data[i - k : i]
                    bucket = self._counts[k][ctx]
                    bucket[b] = bucket.get(b, 0) + 1
        if n_docs == 0:
            raise SimilarityError("empty training corpus")
        self._trained = True
        return self

    def prob(self, byte: int, context: bytes) -> float:
        """P(byte | context) with recursive Witten-Bell backoff."""
        if not self._trained:
            raise SimilarityError("model not trained")
        return self._prob(byte, context[-(self.order - 1):] if self.order > 1 else b"")

    def _prob(self, byte: int, ctx: bytes) -> float:
        if len(ctx) == 0:
            bucket = self._counts[0].get(b"", {})
            total = sum(bucket.values())
            types = len(bucket)
            # uniform 1/256 base distribution
            return (bucket.get(byte, 0) + types / 256.0) / (total + types)
        bucket = self._counts[len(ctx)].get(ctx)
        lower = self._prob(byte, ctx[1:])
        if not bucket:
            return lower
        total = sum(bucket.values())
        types = len(bucket)
        return (bucket.get(byte, 0) + types * lower) / (total + types)

    def log2_prob_text(self, text: str) -> float:
        """Total log2 probability of a text's byte sequence."""
        data = text.encode("utf-8")
        total = 0.0
        for i, b in enumerate(data):
            ctx = data[max(0, i - self.order + 1) : i]
            total += math.log2(self._prob(b, ctx))
        return total


def train_char_lm(english_docs: Iterable[Document], order: int = 5) -> NgramLanguageModel:
    return NgramLanguageModel(order=order).fit(english_docs)


def count_words(text: str, lang: str | None, unspaced: frozenset = UNSPACED_LANGS) -> int:
    """Whitespace tokens for spaced scripts; one word per non-space
    character for unspaced scripts (zh, ja by default)."""
    if lang in unspaced:
        return sum(1 for c in text if not c.isspace())
    return len(text.split())


def log_ppl_per_word(
    lm: NgramLanguageModel,
    target_docs: Iterable[Document],
    unspaced: frozenset = UNSPACED_LANGS,
    normalize: bool = True,
) -> float:
    """-(total log2 probability) / (total word count) over the target.

    With ``normalize=False`` returns the raw negative total log
    probability instead (no per-word normalization).
    """
    total_log2 = 0.0
    total_words = 0
    n_docs = 0
    for doc in target_docs:
        n_docs += 1
        total_log2 += lm.log2_prob_text(doc.text)
        total_words += count_words(doc.text, doc.lang, unspaced)
    if n_docs == 0:
        raise SimilarityError("no target documents")
    if not normalize:
        return -total_log2
    if total_words == 0:
        raise SimilarityError("target has zero words")
    return -total_log2 / total_words


def pearson(x: Sequence[float], y: Sequence[float]) -> tuple[float, float, int]:
    """Pearson r with two-tailed Student-t p-value; returns (r, p, n)."""
    n = len(x)
    if len(y) != n:
        raise SimilarityError("x and y must have equal length")
    if n < 3:
        raise SimilarityError("need at least 3 points")
    mx = sum(x) / n
    my = sum(y) / n
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    if sxx == 0.0 or syy == 0.0:
        raise SimilarityError("constant series")
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    r = sxy / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    df = n - 2
    if abs(r) == 1.0:
        return r, 0.0, n
    t = r * math.sqrt(df / (1.0 - r * r))
    p = 2.0 * float(_scipy_stats.t.sf(abs(t), df))
    return r, p, n


@dataclass
class SimilarityReport:
    """Per-language proxies plus correlation of each proxy with uplift."""

    embed_distance: dict[str, float] = field(default_factory=dict)
    log_ppl: dict[str, float] = field(default_factory=dict)
    uplift: dict[str, float] = field(default_factory=dict)
    correlations: dict[str, dict] = field(default_factory=dict)

    def correlate(self) -> "SimilarityReport":
        for name, metric in (("embed_distance", self.embed_distance), ("log_ppl", self.log_ppl)):
            langs = sorted(set(metric) & set(self.uplift))
            if len(langs) >= 3:
                x = [metric[l] for l in langs]
                y = [self.uplift[l] for l in langs]
                r, p, n = pearson(x, y)
                self.correlations[name] = {"r": r, "p": p, "n": n}
        return self

    def to_json(self) -> str:
        return json.dumps(
            {
                "embed_distance": self.embed_distance,
                "log_ppl_per_word": self.log_ppl,
                "uplift": self.uplift,
                "correlations": self.correlations,
            },
            indent=2,
            sort_keys=True,
        )
