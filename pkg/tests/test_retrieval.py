import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from issuelink.corpus import Document
from issuelink.ranking import RankedList
from issuelink.retrieval import (
    EmbeddingCache,
    HashingEmbedder,
    PoolRetriever,
    RetrieverConfig,
    build_sparse_index,
    retrieve_for_issue,
    rrf_fuse,
    rrf_scores,
    sparse_scores,
    sparse_search,
)
from issuelink.text import STOPWORDS, tokenize

WORDS = ["alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta"]


def doc(doc_id, text):
    return Document(doc_id, text, len(tokenize(text)), text, "")


def okapi_oracle(corpus, query, k1=1.5, b=0.75, eps=0.25):
    """Okapi BM25 written out term by term from the textbook formula."""
    n = len(corpus)
    avgdl = sum(len(d) for d in corpus) / n
    vocab = sorted({t for d in corpus for t in d})
    df = {t: sum(1 for d in corpus if t in d) for t in vocab}
    raw = {t: math.log((n - df[t] + 0.5) / (df[t] + 0.5)) for t in vocab}
    floor = eps * sum(raw.values()) / len(raw) if raw else 0.0
    idf = {t: (v if v >= 0 else floor) for t, v in raw.items()}
    out = []
    for d in corpus:
        s = 0.0
        for q in query:
            f = d.count(q)
            s += idf.get(q, 0.0) * f * (k1 + 1) / (f + k1 * (1 - b + b * len(d) / avgdl))
        out.append(s)
    return out


def bm25l_oracle(corpus, query, k1=1.5, b=0.75, delta=0.5):
    n = len(corpus)
    avgdl = sum(len(d) for d in corpus) / n
    out = []
    for d in corpus:
        s = 0.0
        for q in query:
            df = sum(1 for x in corpus if q in x)
            if df == 0:
                continue
            idf = math.log((n + 1) / (df + 0.5))
            ctd = d.count(q) / (1 - b + b * len(d) / avgdl)
            s += idf * (k1 + 1) * (ctd + delta) / (k1 + ctd + delta)
        out.append(s)
    return out


corpora = st.lists(st.lists(st.sampled_from(WORDS), min_size=1, max_size=12), min_size=1, max_size=20)
queries = st.lists(st.sampled_from(WORDS + ["unseen"]), min_size=1, max_size=5)


class TestTokenize:
    def test_camel_case(self):
        assert tokenize("NullPointerException in parseFile") == ["null", "pointer", "exception", "parse", "file"]

    def test_drops(self):
        assert tokenize("a b") == [] and tokenize("") == []

    def test_snake_and_acronyms(self):
        assert tokenize("read_HTTPHeader v2 x") == ["read", "http", "header"]

    @given(st.text(max_size=60))
    def test_invariants(self, text):
        toks = tokenize(text)
        assert all(len(t) >= 2 and t not in STOPWORDS and t == t.lower() for t in toks)


class TestSparse:
    def test_stats(self):
        idx = build_sparse_index([doc("a", "alpha beta"), doc("b", "alpha gamma"), doc("c", "alpha delta")])
        assert idx.avg_doc_len == 2.0 and idx.doc_freq["alpha"] == idx.doc_count == 3

    def test_rebuild_identical(self):
        docs = [doc("a", "alpha beta beta"), doc("b", "gamma")]
        x, y = build_sparse_index(docs), build_sparse_index(docs)
        assert (x.doc_freq, x.idf, x.doc_len) == (y.doc_freq, y.idf, y.doc_len)

    def test_empty_corpus(self):
        with pytest.raises(ValueError):
            build_sparse_index([])

    def test_tf_monotone_example(self):
        idx = build_sparse_index([doc("d1", "alpha beta"), doc("d2", "gamma delta"), doc("d3", "alpha alpha")])
        ranked = sparse_search(idx, ["alpha"], 3)
        assert ranked.doc_ids[0] == "d3" and ranked.rank_of("d1") == 2
        assert dict(ranked.entries)["d2"] == 0.0

    def test_unknown_terms_score_zero(self):
        idx = build_sparse_index([doc("a", "alpha beta"), doc("b", "gamma")])
        assert set(sparse_scores(idx, ["omega"]).values()) == {0.0}

    def test_five_doc_hand_example(self):
        texts = ["alpha beta gamma", "alpha alpha delta eps", "beta zeta", "eta theta alpha beta", "gamma gamma gamma"]
        corpus = [t.split() for t in texts]
        idx = build_sparse_index([(f"d{i}", c) for i, c in enumerate(corpus)])
        got = sparse_scores(idx, ["alpha", "gamma"])
        want = okapi_oracle(corpus, ["alpha", "gamma"])
        assert [got[f"d{i}"] for i in range(5)] == pytest.approx(want, abs=1e-12)
        assert sparse_search(idx, ["alpha", "gamma"], 5).doc_ids[0] == "d4"

    @settings(max_examples=100)
    @given(corpora, queries)
    def test_okapi_oracle(self, corpus, query):
        idx = build_sparse_index([(f"d{i:02d}", c) for i, c in enumerate(corpus)])
        got = sparse_scores(idx, query)
        for i, want in enumerate(okapi_oracle(corpus, query)):
            assert abs(got[f"d{i:02d}"] - want) <= 1e-9

    @settings(max_examples=100)
    @given(corpora, queries)
    def test_bm25l_oracle(self, corpus, query):
        idx = build_sparse_index([(f"d{i:02d}", c) for i, c in enumerate(corpus)], "bm25l")
        got = sparse_scores(idx, query)
        for i, want in enumerate(bm25l_oracle(corpus, query)):
            assert abs(got[f"d{i:02d}"] - want) <= 1e-9

    @given(st.integers(3, 30), st.data())
    def test_rarer_term_scores_higher(self, n, data):
        """Equal tf in an equal-length doc: the term with lower df wins.

        Okapi's epsilon floor maps every negative idf to one value, so there
        the property holds only while the rarer term's idf is non-negative.
        """
        df_rare = data.draw(st.integers(1, n - 1))
        df_common = data.draw(st.integers(df_rare + 1, n))
        corpus = [["rare" if i < df_rare else "pad", "common" if i < df_common else "pad"] for i in range(n)]
        ids = [(f"d{i:02d}", c) for i, c in enumerate(corpus)]
        l_idx = build_sparse_index(ids, "bm25l")
        assert sparse_scores(l_idx, ["rare"])["d00"] > sparse_scores(l_idx, ["common"])["d00"]
        o_idx = build_sparse_index(ids, "bm25")
        if math.log(n - df_rare + 0.5) >= math.log(df_rare + 0.5):
            assert sparse_scores(o_idx, ["rare"])["d00"] > sparse_scores(o_idx, ["common"])["d00"]


def brute_rrf(lists, k=60):
    """Correctly rounded sum of 1/(k+rank) over every list holding the doc."""
    terms = {}
    for lst in lists:
        for rank, d in enumerate(lst, start=1):
            terms.setdefault(d, []).append(1.0 / (k + rank))
    return {d: math.fsum(t) for d, t in terms.items()}


ranked_ids = st.lists(st.sampled_from([f"c{i:02d}" for i in range(80)]), unique=True, max_size=50)


class TestFusion:
    def test_rank_one_in_both(self):
        a = RankedList("q", (("A", 9.0), ("B", 1.0)))
        b = RankedList("q", (("A", 0.7),))
        fused = rrf_fuse([a, b])
        assert dict(fused.entries)["A"] == 2 / 61
        assert dict(fused.entries)["B"] == 1 / 62 and fused.doc_ids == ["A", "B"]

    def test_empty_input(self):
        with pytest.raises(ValueError):
            rrf_fuse([])

    @settings(max_examples=200)
    @given(st.lists(ranked_ids, min_size=1, max_size=4), st.randoms())
    def test_brute_force_and_order_invariance(self, lists, rnd):
        ranked = [RankedList("q", tuple((d, float(-i)) for i, d in enumerate(l))) for l in lists]
        oracle = brute_rrf(lists)
        assert rrf_scores(ranked) == oracle
        fused = rrf_fuse(ranked)
        expected = sorted(oracle, key=lambda d: (-oracle[d], d))[:50]
        assert fused.doc_ids == expected
        shuffled = list(ranked)
        rnd.shuffle(shuffled)
        assert rrf_fuse(shuffled).entries == fused.entries


class TestPipeline:
    POOL = [
        doc("t1", "Crash when parsing empty config file\nmodified src/Parser.java parseFile"),
        doc("n1", "bump dependency versions\nmodified build.gradle"),
        doc("n2", "config loader cleanup\nmodified src/Loader.java"),
        doc("n3", "upload client retry\nmodified src/Client.java"),
    ]

    def test_title_copy_ranks_first(self):
        ranked = retrieve_for_issue("q", "Crash when parsing empty config file ", self.POOL, RetrieverConfig("bm25"))
        assert ranked.doc_ids[0] == "t1"

    @pytest.mark.parametrize("name", ["bm25", "bm25l", "flat", "hnsw", "lsh", "rp_forest", "rrf"])
    def test_single_doc_pool(self, name):
        cache = EmbeddingCache(HashingEmbedder())
        ranked = retrieve_for_issue("q", "anything", self.POOL[1:2], RetrieverConfig(name), cache)
        assert ranked.doc_ids == ["n1"]

    def test_empty_pool(self, caplog):
        assert len(retrieve_for_issue("q", "x", [], RetrieverConfig("bm25"))) == 0
        assert "empty candidate pool" in caplog.text

    def test_rrf_is_fusion_of_sublists(self):
        cache = EmbeddingCache(HashingEmbedder())
        r = PoolRetriever("q", "config parsing crash", self.POOL, cache)
        fused = r.retrieve(RetrieverConfig("rrf", k=50))
        assert fused.entries == rrf_fuse([r.run("bm25", 50), r.run("flat", 50)], top_n=50, query_id="q").entries

    @pytest.mark.parametrize("name", ["bm25", "flat", "lsh", "rrf"])
    def test_no_leakage(self, name):
        cache = EmbeddingCache(HashingEmbedder())
        pool = self.POOL[:2]
        ranked = retrieve_for_issue("q", "upload client retry config", pool, RetrieverConfig(name), cache)
        assert set(ranked.doc_ids) <= {d.doc_id for d in pool}

    def test_global_idf_restricted_to_pool(self):
        everything = self.POOL + [doc(f"x{i}", "config config config") for i in range(5)]
        global_idx = {"bm25": build_sparse_index(everything)}
        r = PoolRetriever("q", "config crash", self.POOL[:2], global_sparse=global_idx)
        ranked = r.retrieve(RetrieverConfig("bm25", idf_scope="global"))
        assert set(ranked.doc_ids) == {"t1", "n1"}

    def test_rrf_k_bound(self):
        pool = [doc(f"d{i:03d}", f"word{i} shared") for i in range(120)]
        cache = EmbeddingCache(HashingEmbedder())
        assert len(retrieve_for_issue("q", "shared", pool, RetrieverConfig("rrf"), cache)) == 50
