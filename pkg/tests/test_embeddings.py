import io
import json
import math
import sys

import numpy as np
import pytest

from polycurate.embeddings import (
    EmbeddingError,
    EmbeddingVector,
    SubprocessEmbedder,
    cosine_distance,
    dedup_near,
    embed_documents,
    load_embeddings,
    select_diverse,
)


def vec(doc_id, *components, embedder="test"):
    return EmbeddingVector(doc_id, np.asarray(components, dtype=np.float64), embedder)


class TestCosineDistance:
    def test_known_values(self):
        assert cosine_distance([1, 0], [1, 0]) == pytest.approx(0.0, abs=1e-12)
        assert cosine_distance([1, 0], [0, 1]) == pytest.approx(1.0, abs=1e-12)
        assert cosine_distance([1, 0], [-1, 0]) == pytest.approx(2.0, abs=1e-12)

    def test_scale_invariant(self):
        assert cosine_distance([1, 2, 3], [2, 4, 6]) == pytest.approx(0.0, abs=1e-12)

    def test_zero_norm_rejected(self):
        with pytest.raises(EmbeddingError):
            cosine_distance([0, 0], [1, 0])

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(EmbeddingError):
            cosine_distance([1, 0], [1, 0, 0])


class TestLoadEmbeddings:
    def _jsonl(self, rows):
        return io.StringIO("".join(json.dumps(r) + "\n" for r in rows))

    def test_loads_rows(self):
        embs = load_embeddings(self._jsonl([
            {"doc_id": "a", "vector": [1.0, 0.0], "embedder_id": "e"},
            {"doc_id": "b", "vector": [0.0, 1.0], "embedder_id": "e"},
        ]))
        assert [e.doc_id for e in embs] == ["a", "b"]

    def test_rejects_non_finite(self):
        with pytest.raises(EmbeddingError, match="non-finite"):
            load_embeddings(self._jsonl([
                {"doc_id": "a", "vector": [float("nan"), 0.0], "embedder_id": "e"},
            ]))

    def test_rejects_mixed_dimensions(self):
        with pytest.raises(EmbeddingError, match="dimension"):
            load_embeddings(self._jsonl([
                {"doc_id": "a", "vector": [1.0], "embedder_id": "e"},
                {"doc_id": "b", "vector": [1.0, 2.0], "embedder_id": "e"},
            ]))

    def test_rejects_mixed_embedders(self):
        with pytest.raises(EmbeddingError, match="embedder"):
            load_embeddings(self._jsonl([
                {"doc_id": "a", "vector": [1.0], "embedder_id": "e1"},
                {"doc_id": "b", "vector": [2.0], "embedder_id": "e2"},
            ]))


class TestDedup:
    def test_drops_near_duplicates_keeps_first_by_id(self):
        embs = [vec("b", 1.0, 0.001), vec("a", 1.0, 0.0), vec("c", 0.0, 1.0)]
        kept = dedup_near(embs, tau=0.1)
        assert kept == ["a", "c"]  # "b" is within tau of "a"

    def test_boundary_distance_exactly_tau_kept(self):
        # distance between orthogonal unit vectors is exactly 1.0
        embs = [vec("a", 1.0, 0.0), vec("b", 0.0, 1.0)]
        assert dedup_near(embs, tau=1.0) == ["a", "b"]

    def test_invalid_tau_rejected(self):
        with pytest.raises(EmbeddingError):
            dedup_near([vec("a", 1.0)], tau=0.0)

    def test_deterministic_under_input_order(self):
        embs = [vec("a", 1.0, 0.0), vec("b", 0.9, 0.1), vec("c", 0.0, 1.0)]
        assert dedup_near(embs, 0.05) == dedup_near(list(reversed(embs)), 0.05)


class TestSelectDiverse:
    def test_seeds_at_smallest_id(self):
        embs = [vec("z", 0.0, 1.0), vec("a", 1.0, 0.0)]
        assert select_diverse(embs, 1) == ["a"]

    def test_farthest_point_order(self):
        embs = [
            vec("a", 1.0, 0.0),
            vec("b", 0.99, 0.01),   # close to a
            vec("c", -1.0, 0.0),    # antipodal to a
            vec("d", 0.0, 1.0),     # orthogonal
        ]
        assert select_diverse(embs, 3) == ["a", "c", "d"]

    def test_k_out_of_range(self):
        with pytest.raises(EmbeddingError):
            select_diverse([vec("a", 1.0)], 2)

    def test_selection_is_prefix_stable(self):
        # Selecting k and k+1 agree on the first k picks.
        embs = [vec(f"v{i}", math.cos(i), math.sin(i)) for i in range(8)]
        assert select_diverse(embs, 5)[:4] == select_diverse(embs, 4)


class TestExternalEmbedders:
    def test_subprocess_embedder_round_trip(self):
        script = (
            "import sys, json\n"
            "for line in sys.stdin:\n"
            "    if line.strip():\n"
            "        o = json.loads(line)\n"
            "        print(json.dumps({'doc_id': o['doc_id'],"
            " 'vector': [float(len(o['text'])), 1.0]}))\n"
        )
        emb = SubprocessEmbedder([sys.executable, "-c", script], embedder_id="len")
        vecs = emb.embed(["ab", "abcd"])
        assert [v.tolist() for v in vecs] == [[2.0, 1.0], [4.0, 1.0]]

    def test_subprocess_failure_surfaces(self):
        emb = SubprocessEmbedder([sys.executable, "-c", "import sys; sys.exit(3)"])
        with pytest.raises(EmbeddingError, match="exited 3"):
            emb.embed(["x"])

    def test_embed_documents_labels_vectors(self):
        from polycurate.corpus import Document

        class Fixed:
            embedder_id = "fixed"

            def embed(self, texts):
                return [np.asarray([float(len(t))]) for t in texts]

        docs = [Document(id="a", text="xy"), Document(id="b", text="xyz")]
        out = embed_documents(docs, Fixed())
        assert [(e.doc_id, e.vector[0], e.embedder_id) for e in out] == [
            ("a", 2.0, "fixed"), ("b", 3.0, "fixed")]
