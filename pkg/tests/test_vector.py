import json

import httpx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from issuelink.corpus import Document
from issuelink.retrieval import (
    EmbeddingError,
    HashingEmbedder,
    HttpEmbeddingProvider,
    build_vector_index,
    embed_documents,
    load_vector_index,
    save_vector_index,
    vector_search,
)
from issuelink.synthetic import clustered_vectors

# worst |cosine| seen over 3 x 1000 token-disjoint pairs was 0.274
DISJOINT_COSINE_BOUND = 0.35


def unit_rows(n, dim, seed):
    x = np.random.default_rng(seed).standard_normal((n, dim))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def brute_top(mat, ids, q, k):
    sims = mat @ q
    return sorted(range(len(ids)), key=lambda i: (-sims[i], ids[i]))[:k]


class TestHashingEmbedder:
    def test_identical_texts(self):
        e = HashingEmbedder()
        a, b = e.embed("parse config file"), e.embed("parse config file")
        assert np.array_equal(a, b) and float(a @ b) == pytest.approx(1.0)

    @given(st.text(max_size=80))
    def test_unit_norm_and_dim(self, text):
        v = HashingEmbedder(64).embed(text)
        assert v.shape == (64,) and abs(np.linalg.norm(v) - 1) <= 1e-6

    def test_disjoint_texts_near_orthogonal(self):
        rng = np.random.default_rng(0)
        vocab = ["w" + "".join(rng.choice(list("abcdefghij"), 6)) for _ in range(4000)]
        e = HashingEmbedder()
        cos = []
        for _ in range(1000):
            idx = rng.permutation(len(vocab))
            a = " ".join(vocab[i] for i in idx[: rng.integers(3, 30)])
            b = " ".join(vocab[i] for i in idx[100 : 100 + rng.integers(3, 30)])
            cos.append(abs(float(e.embed(a) @ e.embed(b))))
        assert max(cos) < DISJOINT_COSINE_BOUND and np.mean(cos) < 0.05

    def test_embed_documents(self):
        docs = [Document(f"d{i}", f"text {i} word", 2, "", "") for i in range(5)]
        out = embed_documents(HashingEmbedder(), docs, batch_size=2)
        assert list(out) == [d.doc_id for d in docs]


class TestHttpEmbeddings:
    def test_round_trip(self):
        def handler(request):
            texts = json.loads(request.content)["texts"]
            return httpx.Response(200, json={"vectors": [[3.0, 4.0] for _ in texts]})

        p = HttpEmbeddingProvider("http://embed.test", dim=2, transport=httpx.MockTransport(handler))
        assert np.allclose(p.embed("x"), [0.6, 0.8])

    def test_failure_carries_doc_id(self):
        p = HttpEmbeddingProvider("http://embed.test", dim=2,
                                  transport=httpx.MockTransport(lambda r: httpx.Response(503)))
        with pytest.raises(EmbeddingError) as err:
            embed_documents(p, [Document("d7", "x", 1, "", "")])
        assert err.value.doc_id == "d7"

    def test_missing_url(self, monkeypatch):
        monkeypatch.delenv("ISSUELINK_EMBED_URL", raising=False)
        with pytest.raises(ValueError):
            HttpEmbeddingProvider()


class TestVectorIndex:
    def test_flat_exact_small(self):
        mat = unit_rows(10, 16, 1)
        ids = [f"d{i}" for i in range(10)]
        idx = build_vector_index((ids, mat), "flat")
        for q in unit_rows(5, 16, 2):
            assert vector_search(idx, q, 4).doc_ids == [ids[i] for i in brute_top(mat, ids, q, 4)]

    def test_query_equal_to_stored(self):
        mat = unit_rows(20, 8, 3)
        idx = build_vector_index(([f"d{i}" for i in range(20)], mat), "flat")
        top = vector_search(idx, mat[7], 1).entries[0]
        assert top[0] == "d7" and top[1] == pytest.approx(1.0)

    @pytest.mark.parametrize("kind", ["flat", "hnsw", "lsh", "rp_forest"])
    def test_k_larger_than_corpus(self, kind):
        idx = build_vector_index(([f"d{i}" for i in range(6)], unit_rows(6, 8, 4)), kind)
        assert sorted(vector_search(idx, unit_rows(1, 8, 5)[0], 50).doc_ids) == [f"d{i}" for i in range(6)]

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            build_vector_index({"a": np.array([1.0, 0.0]), "b": np.array([0.0, 0.0, 1.0])})

    def test_non_unit_rejected(self):
        with pytest.raises(ValueError):
            build_vector_index({"a": np.array([1.0, 1.0])})

    def test_unknown_param(self):
        with pytest.raises(ValueError):
            build_vector_index({"a": np.array([1.0, 0.0])}, "hnsw", {"efSearch": 3})

    def test_lsh_signature_bits(self):
        idx = build_vector_index(([f"d{i}" for i in range(4)], unit_rows(4, 32, 6)), "lsh", {"nbits": 256})
        assert idx.structure.codes.shape == (4, 32)

    def test_hnsw_seeded_determinism(self):
        mat = unit_rows(300, 24, 7)
        ids = [f"d{i:03d}" for i in range(300)]
        a = build_vector_index((ids, mat), "hnsw", {"seed": 3})
        b = build_vector_index((ids, mat), "hnsw", {"seed": 3})
        for q in unit_rows(10, 24, 8):
            assert vector_search(a, q, 10).entries == vector_search(b, q, 10).entries

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 60), st.integers(2, 12), st.integers(0, 10**6))
    def test_flat_equals_brute_force(self, n, dim, seed):
        mat = unit_rows(n, dim, seed)
        ids = [f"d{i:03d}" for i in range(n)]
        idx = build_vector_index((ids, mat), "flat")
        q = unit_rows(1, dim, seed + 1)[0]
        k = min(n, 7)
        assert vector_search(idx, q, k).doc_ids == [ids[i] for i in brute_top(mat, ids, q, k)]

    def test_ties_by_doc_id(self):
        v = np.array([1.0, 0.0])
        idx = build_vector_index({"b": v, "a": v, "c": v})
        assert vector_search(idx, v, 3).doc_ids == ["a", "b", "c"]

    @pytest.mark.parametrize("kind", ["hnsw", "rp_forest", "lsh"])
    def test_ann_recall_small(self, kind):
        mat = clustered_vectors(1000, dim=64, seed=11)
        ids = [f"d{i:04d}" for i in range(1000)]
        flat = build_vector_index((ids, mat), "flat")
        ann = build_vector_index((ids, mat), kind)
        qs = mat[np.random.default_rng(13).choice(1000, 30, replace=False)]
        hits = sum(len(set(vector_search(flat, q, 10).doc_ids) & set(vector_search(ann, q, 10).doc_ids)) for q in qs)
        assert hits / 300 >= (0.9 if kind != "lsh" else 0.6)

    @pytest.mark.parametrize("kind", ["flat", "hnsw", "lsh", "rp_forest"])
    def test_persistence_round_trip(self, kind, tmp_path):
        mat = unit_rows(80, 16, 9)
        ids = [f"d{i:02d}" for i in range(80)]
        idx = build_vector_index((ids, mat), kind)
        save_vector_index(idx, tmp_path / "idx.npz")
        back = load_vector_index(tmp_path / "idx.npz")
        assert back.doc_ids == ids and back.params == idx.params
        for q in unit_rows(5, 16, 10):
            assert vector_search(back, q, 10).entries == vector_search(idx, q, 10).entries
