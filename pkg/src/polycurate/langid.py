"""Character n-gram rank-profile language identification.

Classic rank-order profiling: per language, rank the most frequent
character n-grams; classify a document by the profile minimizing total
rank displacement.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

from .corpus import Document

DEFAULT_N_RANGE = (1, 4)
DEFAULT_TOP_K = 3000
UNKNOWN = "unknown"

_WS = re.compile(r"\s+")


class LangIdError(Exception):
    pass


def _ngrams(text: str, n_range: tuple[int, int]) -> Counter:
    text = _WS.sub(" ", text.strip())
    counts: Counter = Counter()
    lo, hi = n_range
    for n in range(lo, hi + 1):
        for i in range(len(text) - n + 1):
            counts[text[i : i + n]] += 1
    return counts


def _rank(counts: Counter, top_k: int) -> dict[str, int]:
    # Descending frequency, ties lexicographic; ranks 1..K.
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:top_k]
    return {gram: i + 1 for i, (gram, _) in enumerate(ordered)}


@dataclass
class LanguageProfile:
    lang: str
    ngram_ranks: dict[str, int]
    trained_on_chars: int
    n_range: tuple[int, int] = DEFAULT_N_RANGE


@dataclass
class ProfileSet:
    profiles: dict[str, LanguageProfile] = field(default_factory=dict)
    n_range: tuple[int, int] = DEFAULT_N_RANGE
    top_k: int = DEFAULT_TOP_K

    def to_json(self) -> str:
        return json.dumps(
            {
                "n_range": list(self.n_range),
                "top_k": self.top_k,
                "profiles": {
                    lang: {"ngram_ranks": p.ngram_ranks, "trained_on_chars": p.trained_on_chars}
                    for lang, p in sorted(self.profiles.items())
                },
            },
            ensure_ascii=False,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "ProfileSet":
        obj = json.loads(text)
        n_range = tuple(obj["n_range"])
        ps = cls(n_range=n_range, top_k=obj["top_k"])
        for lang, p in obj["profiles"].items():
            ps.profiles[lang] = LanguageProfile(
                lang=lang,
                ngram_ranks=dict(p["ngram_ranks"]),
                trained_on_chars=p["trained_on_chars"],
                n_range=n_range,
            )
        return ps


def train_profiles(
    seed_corpora: dict[str, Iterable[Document]],
    n_range: tuple[int, int] = DEFAULT_N_RANGE,
    top_k: int = DEFAULT_TOP_K,
) -> ProfileSet:
    """Build one rank profile per language from seed documents."""
    if top_k < 1:
        raise LangIdError("top_k must be positive")
    ps = ProfileSet(n_range=n_range, top_k=top_k)
    for lang in sorted(seed_corpora):
        text = " ".join(d.text for d in seed_corpora[lang])
        if not text.strip():
            raise LangIdError(f"empty seed text for language {lang!r}")
        counts = _ngrams(text, n_range)
        ps.profiles[lang] = LanguageProfile(
            lang=lang,
            ngram_ranks=_rank(counts, top_k),
            trained_on_chars=len(text),
            n_range=n_range,
        )
    return ps


def _rank_distance(doc_ranks: dict[str, int], profile_ranks: dict[str, int], k: int) -> int:
    # Out-of-profile grams incur the maximum displacement k.
    dist = 0
    for gram, r in doc_ranks.items():
        pr = profile_ranks.get(gram)
        dist += abs(r - pr) if pr is not None else k
    return dist


def classify(
    doc: Document,
    profiles: ProfileSet,
    min_chars: int = 20,
) -> tuple[str, float]:
    """Return (language, confidence); ("unknown", 0.0) for short texts.

    Confidence is 1 - best/second_best rank distance, clamped to [0, 1].
    Exact ties resolve to the lexicographically smaller code with
    confidence 0.
    """
    if not doc.text.strip():
        raise LangIdError(f"doc {doc.id!r}: empty text")
    text = _WS.sub(" ", doc.text.strip())
    if len(text) < min_chars:
        return UNKNOWN, 0.0
    doc_ranks = _rank(_ngrams(text, profiles.n_range), profiles.top_k)
    k = profiles.top_k
    scored = sorted(
        (( _rank_distance(doc_ranks, p.ngram_ranks, k), lang) for lang, p in profiles.profiles.items()),
    )
    if not scored:
        raise LangIdError("no trained profiles")
    best_dist, best_lang = scored[0]
    if len(scored) == 1:
        return best_lang, 1.0
    second_dist = scored[1][0]
    if best_dist == second_dist:
        return best_lang, 0.0
    confidence = 1.0 - (best_dist / second_dist if second_dist > 0 else 0.0)
    return best_lang, min(max(confidence, 0.0), 1.0)
