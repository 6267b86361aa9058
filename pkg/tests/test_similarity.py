import io
import math
import random

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings, strategies as st

from conftest import CYRILLIC, LATIN, make_docs
from polycurate.corpus import Document
from polycurate.similarity import (
    NgramLanguageModel,
    ParallelPair,
    SimilarityError,
    SimilarityReport,
    count_words,
    embed_distance,
    load_parallel_tsv,
    log_ppl_per_word,
    pearson,
    train_char_lm,
)


class TestParallelPairs:
    def test_tsv_loading(self):
        fh = io.StringIO("de\thello\thallo\nfr\thello\tbonjour\n")
        pairs = load_parallel_tsv(fh)
        assert [(p.tgt_lang, p.sentence_tgt) for p in pairs] == [
            ("de", "hallo"), ("fr", "bonjour")]

    def test_bad_column_count_rejected(self):
        with pytest.raises(SimilarityError, match="line 1"):
            load_parallel_tsv(io.StringIO("only\ttwo\n"))

    def test_empty_side_rejected(self):
        with pytest.raises(SimilarityError):
            ParallelPair(sentence_en="", sentence_tgt="x", tgt_lang="de")


class FixedEmbedder:
    """Maps known strings to fixed vectors for hand-checkable arithmetic."""

    def __init__(self, embedder_id, table):
        self.embedder_id = embedder_id
        self.table = table

    def embed(self, texts):
        return [np.asarray(self.table[t], dtype=np.float64) for t in texts]


class TestEmbedDistance:
    def test_matches_hand_arithmetic(self):
        # Embedder 1: distances 1.0 and 0.5 -> mean 0.75
        # Embedder 2: distances 0.5 and 0.5 -> mean 0.5
        # expected: (ln 0.75 + ln 0.5) / 2
        e1 = FixedEmbedder("e1", {
            "en-a": [1, 0], "de-a": [0, 1],        # dist 1.0
            "en-b": [1, 0], "de-b": [1, 1],        # dist 1 - 1/sqrt(2) ~ 0.2929
        })
        # pick vectors giving exact 0.5: cos = 0.5 -> 60 degrees
        e1.table["de-b"] = [1, math.sqrt(3)]       # cos = 0.5, dist 0.5
        e2 = FixedEmbedder("e2", {
            "en-a": [1, 0], "de-a": [1, math.sqrt(3)],
            "en-b": [0, 1], "de-b": [math.sqrt(3), 1],
        })
        pairs = [
            ParallelPair("en-a", "de-a", "de"),
            ParallelPair("en-b", "de-b", "de"),
        ]
        got = embed_distance(pairs, [e1, e2])
        expected = (math.log(0.75) + math.log(0.5)) / 2
        assert got["de"] == pytest.approx(expected, abs=1e-12)

    def test_zero_mean_distance_is_degenerate(self):
        e = FixedEmbedder("e", {"same": [1, 0]})
        pairs = [ParallelPair("same", "same", "de")]
        with pytest.raises(SimilarityError, match="degenerate"):
            embed_distance(pairs, [e])

    def test_requires_embedders_and_pairs(self):
        with pytest.raises(SimilarityError):
            embed_distance([ParallelPair("a", "b", "de")], [])
        with pytest.raises(SimilarityError):
            embed_distance([], [FixedEmbedder("e", {})])


class TestNgramLM:
    def test_conditionals_sum_to_one(self):
        lm = NgramLanguageModel(order=3).fit([Document(id="a", text="abracadabra abba")])
        for ctx in (b"", b"a", b"ab", b"zq"):
            total = sum(lm.prob(b, ctx) for b in range(256))
            assert total == pytest.approx(1.0, abs=1e-9)

    def test_unseen_bytes_near_uniform(self):
        lm = NgramLanguageModel(order=3).fit([Document(id="a", text="aaaa")])
        # A byte the model never saw in any context backs off toward 1/256.
        assert -math.log2(lm.prob(0xF4, b"")) > 6.0

    def test_seen_text_more_probable_than_noise(self):
        train = make_docs(LATIN, 30, "t", "en", seed=1)
        lm = train_char_lm(train, order=4)
        seen = train[0].text[:50]
        noise = "".join(random.Random(0).choice(CYRILLIC) for _ in range(50))
        assert lm.log2_prob_text(seen) > lm.log2_prob_text(noise)

    def test_order_validation_and_untrained_guard(self):
        with pytest.raises(SimilarityError):
            NgramLanguageModel(order=1)
        with pytest.raises(SimilarityError):
            NgramLanguageModel(order=3).prob(0x61, b"")

    def test_empty_corpus_rejected(self):
        with pytest.raises(SimilarityError):
            NgramLanguageModel(order=3).fit([Document(id="a", text="")])


class TestPerplexity:
    def test_word_counting_spaced_vs_unspaced(self):
        assert count_words("two words", "en") == 2
        assert count_words("漢字 かな", "ja") == 4  # non-space chars
        assert count_words("漢字 かな", "zh") == 4

    def test_normalize_flag(self):
        lm = train_char_lm(make_docs(LATIN, 10, "t", "en", seed=2), order=3)
        docs = make_docs(LATIN, 3, "h", "en", seed=3)
        raw = log_ppl_per_word(lm, docs, normalize=False)
        norm = log_ppl_per_word(lm, docs)
        words = sum(count_words(d.text, d.lang) for d in docs)
        assert norm == pytest.approx(raw / words, rel=1e-12)

    def test_no_docs_rejected(self):
        lm = train_char_lm(make_docs(LATIN, 5, "t", "en"), order=3)
        with pytest.raises(SimilarityError):
            log_ppl_per_word(lm, [])


class TestPearson:
    def test_matches_scipy_oracle(self, rng):
        for _ in range(300):
            n = rng.randint(3, 40)
            x = [rng.gauss(0, 1) for _ in range(n)]
            y = [rng.gauss(0, 1) for _ in range(n)]
            r, p, got_n = pearson(x, y)
            ref = scipy.stats.pearsonr(x, y)
            assert got_n == n
            assert r == pytest.approx(ref.statistic, abs=1e-12)
            assert p == pytest.approx(ref.pvalue, abs=1e-12)

    def test_perfect_correlation(self):
        r, p, _ = pearson([1, 2, 3, 4], [2, 4, 6, 8])
        assert (r, p) == (1.0, 0.0)
        r, p, _ = pearson([1, 2, 3, 4], [-2, -4, -6, -8])
        assert (r, p) == (-1.0, 0.0)

    def test_constant_series_rejected(self):
        with pytest.raises(SimilarityError):
            pearson([1, 1, 1], [1, 2, 3])

    def test_minimum_points(self):
        with pytest.raises(SimilarityError):
            pearson([1, 2], [3, 4])

    @settings(max_examples=100)
    @given(st.lists(st.floats(min_value=-1e6, max_value=1e6), min_size=3, max_size=30,
                    unique=True))
    def test_symmetric_in_arguments(self, x):
        rng = random.Random(len(x))
        y = [v + rng.gauss(0, 10) + rng.random() for v in x]
        try:
            r1, p1, _ = pearson(x, y)
        except SimilarityError:
            return  # degenerate (constant) series under fp cancellation
        r2, p2, _ = pearson(y, x)
        assert r1 == pytest.approx(r2, abs=1e-12)
        assert p1 == pytest.approx(p2, abs=1e-12)


class TestReport:
    def test_correlate_fills_both_proxies(self):
        langs = [f"l{i}" for i in range(5)]
        rep = SimilarityReport(
            embed_distance={l: -0.1 * i for i, l in enumerate(langs)},
            log_ppl={l: 10 + i for i, l in enumerate(langs)},
            uplift={l: 0.3 - 0.05 * i for i, l in enumerate(langs)},
        )
        rep.correlate()
        assert set(rep.correlations) == {"embed_distance", "log_ppl"}
        assert rep.correlations["log_ppl"]["r"] == pytest.approx(-1.0)

    def test_too_few_overlapping_langs_skipped(self):
        rep = SimilarityReport(embed_distance={"a": 1.0, "b": 2.0},
                               uplift={"a": 0.1, "b": 0.2})
        rep.correlate()
        assert rep.correlations == {}
