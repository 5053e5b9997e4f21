import json
import math
import threading
import time

import httpx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from issuelink.corpus import commit_document
from issuelink.ranking import RankedList
from issuelink.rerank import (
    FAILED_SCORE,
    FEATURE_NAMES,
    ChatClient,
    FeatureVector,
    ForestParams,
    FRLinkModel,
    PairwiseClient,
    PoolContext,
    RemoteScorerError,
    RerankRequestBatch,
    RetryPolicy,
    TfidfModel,
    bounded_map,
    external_score,
    extract_features,
    frlink_score,
    frlink_threshold,
    llm_rerank,
    load_forest,
    make_training_set,
    pairwise_scores,
    parse_llm_order,
    render_prompt,
    rerank_with_model,
    rerank_with_scores,
    save_forest,
    score_forest,
    train_forest,
)
from issuelink.rerank.forest import ForestModel, Tree
from issuelink.text import tokenize

from conftest import make_commit, make_issue

NO_RETRY = RetryPolicy(max_retries=0, backoff=0.0)


def ranked(ids, qid="q"):
    return RankedList(qid, tuple((d, float(len(ids) - i)) for i, d in enumerate(ids)))


def separable(n, seed, dim=16):
    """Label is 1 iff feature 0 + feature 3 > 0; the rest is noise."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, dim))
    y = (X[:, 0] + X[:, 3] > 0).astype(int)
    return X, y


class TestTrainingSet:
    def test_true_link_at_rank_two(self):
        r = {"q": ranked([f"c{i}" for i in range(1, 20)])}
        pairs = make_training_set(["q"], {"q": {"c2"}}, r)
        assert [p.commit_hash for p in pairs if p.label == 1] == ["c2"]
        assert [p.commit_hash for p in pairs if p.label == 0] == ["c1"] + [f"c{i}" for i in range(3, 12)]

    def test_small_pool(self):
        pairs = make_training_set(["q"], {"q": {"c1"}}, {"q": ranked([f"c{i}" for i in range(6)])})
        assert sum(p.label for p in pairs) == 1 and len(pairs) == 6

    def test_positives_outside_top(self):
        r = {"q": ranked([f"n{i:02d}" for i in range(30)])}
        pairs = make_training_set(["q"], {"q": {"t1", "t2"}}, r)
        assert sum(p.label for p in pairs) == 2 and len(pairs) == 12

    def test_empty_pool_positives_only(self, caplog):
        pairs = make_training_set(["q"], {"q": {"t"}}, {})
        assert [(p.commit_hash, p.label) for p in pairs] == [("t", 1)] and "empty" in caplog.text

    @given(st.lists(st.tuples(st.lists(st.sampled_from("abcdefghijklmnopqrstuvwxyz"), unique=True, max_size=26),
                              st.sets(st.sampled_from("abcdefghijklmnopqrstuvwxyz"), min_size=1, max_size=4)),
                    min_size=1, max_size=8))
    def test_no_positive_labeled_negative(self, rows):
        rankings = {f"q{i}": ranked(ids, f"q{i}") for i, (ids, _) in enumerate(rows)}
        relevant = {f"q{i}": rel for i, (_, rel) in enumerate(rows)}
        pairs = make_training_set(sorted(relevant), relevant, rankings)
        for p in pairs:
            if p.label == 0:
                assert p.commit_hash not in relevant[p.query_id]
        for q in relevant:
            assert sum(1 for p in pairs if p.query_id == q and p.label == 0) <= 10


class TestFeatures:
    def _ctx(self, query, docs):
        return PoolContext.build(query, docs, {d.doc_id: 1.5 for d in docs}, {d.doc_id: 0.03 for d in docs})

    def test_examples(self):
        issue = make_issue("P-1", created=0, closed=20, title="Crash on save", reporter="ann", assignee="bob")
        commit = make_commit("h", day=10, message="Crash on save", author="ann",
                             files=(("modified", "src/Save.java", ("save", "flush")),))
        doc = commit_document(commit, ["P"])
        ctx = self._ctx("Crash on save", [doc])
        f = extract_features(issue, commit, doc, ctx).as_dict()
        assert f["author_is_reporter"] == 1.0 and f["author_is_assignee"] == 0.0
        assert f["days_since_creation"] == 10.0 and f["days_to_closure"] == 10.0
        assert f["within_closure_buffer"] == 1.0
        assert f["tfidf_cosine_message"] == pytest.approx(1.0)
        assert (f["changed_files"], f["changed_methods"]) == (1.0, 2.0)
        assert (f["bm25_score"], f["rrf_score"]) == (1.5, 0.03)

    def test_no_assignee_and_open_issue(self):
        issue = make_issue("P-1", created=5, title="x")
        commit = make_commit("h", day=2, author="ann")
        doc = commit_document(commit, ["P"])
        f = extract_features(issue, commit, doc, self._ctx("x", [doc])).as_dict()
        assert f["author_is_assignee"] == 0.0 and f["days_to_closure"] == 0.0 and f["days_since_creation"] == -3.0

    def test_schema(self):
        assert len(FEATURE_NAMES) == 16 and len(set(FEATURE_NAMES)) == 16
        with pytest.raises(ValueError):
            FeatureVector(np.array([math.nan] * 16))

    def test_tfidf_hand_computation(self):
        docs = [["bug", "parser"], ["bug", "cache"], ["cache", "eviction"]]
        model = TfidfModel(docs)
        idf = {"bug": math.log(4 / 3) + 1, "parser": math.log(4 / 2) + 1,
               "cache": math.log(4 / 3) + 1, "eviction": math.log(4 / 2) + 1}
        q, d = ["bug", "parser", "parser"], ["bug", "cache"]
        dot = idf["bug"] ** 2
        nq = math.sqrt(idf["bug"] ** 2 + (2 * idf["parser"]) ** 2)
        nd = math.sqrt(idf["bug"] ** 2 + idf["cache"] ** 2)
        assert model.cosine(q, d) == pytest.approx(dot / (nq * nd), abs=1e-12)


class TestForest:
    def test_separable_holdout(self):
        X, y = separable(600, 0)
        model = train_forest(X, ForestParams(n_trees=100, seed=1), labels=y)
        Xt, yt = separable(300, 99)
        acc = np.mean((score_forest(model, Xt) >= 0.5) == yt)
        assert acc >= 0.9 and model.train_accuracy >= 0.99

    def test_more_trees_no_worse(self):
        X, y = separable(400, 2)
        Xt, yt = separable(400, 3)
        accs = [np.mean((score_forest(train_forest(X, ForestParams(n_trees=n, seed=5), y), Xt) >= 0.5) == yt)
                for n in (1, 100)]
        assert accs[1] >= accs[0]

    def test_deterministic(self):
        X, y = separable(200, 4)
        a = score_forest(train_forest(X, ForestParams(n_trees=20, seed=7), y), X)
        b = score_forest(train_forest(X, ForestParams(n_trees=20, seed=7), y), X)
        assert np.array_equal(a, b)

    def test_constant_feature_never_split(self):
        X, y = separable(300, 6)
        X[:, 5] = 2.0
        model = train_forest(X, ForestParams(n_trees=30, seed=0), y)
        assert all(5 not in t.feature.tolist() for t in model.trees)
        assert all(np.all(t.feature[t.feature >= 0] < 16) for t in model.trees)

    def test_single_class(self):
        with pytest.raises(ValueError):
            train_forest(np.zeros((5, 16)), labels=[1] * 5)

    def _stump(self, value):
        return Tree(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]), np.array([value]))

    def test_leaf_fraction_scores(self):
        one = ForestModel([self._stump(1.0)], ForestParams(n_trees=1))
        two = ForestModel([self._stump(1.0), self._stump(0.0)], ForestParams(n_trees=2))
        x = FeatureVector(np.zeros(16))
        assert score_forest(one, x) == 1.0 and score_forest(two, x) == 0.5

    def test_persistence_and_schema(self, tmp_path):
        X, y = separable(100, 8)
        model = train_forest(X, ForestParams(n_trees=5), y)
        save_forest(model, tmp_path / "f.json")
        back = load_forest(tmp_path / "f.json")
        assert np.array_equal(score_forest(back, X), score_forest(model, X))
        data = json.loads((tmp_path / "f.json").read_text())
        data["feature_schema_version"] = "old"
        (tmp_path / "g.json").write_text(json.dumps(data))
        with pytest.raises(ValueError):
            load_forest(tmp_path / "g.json")
        with pytest.raises(ValueError):
            score_forest(model, np.zeros((1, 3)))


class TestFRLink:
    def test_threshold_examples(self):
        assert frlink_threshold([i / 10 for i in range(1, 11)]) == pytest.approx(0.1)
        assert frlink_threshold([0.8] * 12) == 0.8
        with pytest.raises(ValueError):
            frlink_threshold([0.5] * 9)

    @given(st.lists(st.floats(0, 1), min_size=10, max_size=200))
    def test_recall_guarantee(self, scores):
        t = frlink_threshold(scores)
        assert sum(s >= t for s in scores) / len(scores) >= 0.9

    def test_classification(self, tmp_path):
        m = FRLinkModel(0.4, 10)
        assert not m.is_link(0.39) and m.is_link(0.4)
        m.save(tmp_path / "fr.json")
        assert FRLinkModel.load(tmp_path / "fr.json") == m

    def test_scores(self, caplog):
        tf = TfidfModel([tokenize("parse config"), tokenize("upload retry")])
        assert frlink_score("parse config", "parse config", tf) == pytest.approx(1.0)
        assert frlink_score("parse config", "upload retry", tf) == 0.0
        assert frlink_score("", "upload", tf) == 0.0 and "empty" in caplog.text


class TestRerankCore:
    def test_identity(self):
        cands = ranked(["a", "b", "c"])
        assert rerank_with_model(dict(cands.entries).__getitem__, cands).doc_ids == ["a", "b", "c"]

    def test_promote(self):
        cands = ranked(["a", "b", "t", "c"])
        assert rerank_with_model(lambda d: 1.0 if d == "t" else 0.0, cands).doc_ids == ["t", "a", "b", "c"]

    def test_failing_pair_sinks(self, caplog):
        def scorer(d):
            if d == "a":
                raise RuntimeError("boom")
            return 0.5

        out = rerank_with_model(scorer, ranked(["a", "b"]))
        assert out.doc_ids == ["b", "a"] and out.entries[-1][1] == FAILED_SCORE and "boom" in caplog.text

    def test_fallback(self):
        out = rerank_with_scores(None, ranked(["a", "b"]), name="x")
        assert out.doc_ids == ["a", "b"] and out.provenance == "x:fallback"

    @given(st.lists(st.text(alphabet="abcdef0123456789", min_size=1, max_size=8), unique=True, max_size=20),
           st.lists(st.one_of(st.floats(allow_nan=True), st.none()), max_size=20))
    def test_permutation(self, ids, raw):
        scores = {d: raw[i] if i < len(raw) else 0.0 for i, d in enumerate(ids)}

        def scorer(d):
            if scores[d] is None:
                raise ValueError("no score")
            return scores[d]

        out = rerank_with_model(scorer, ranked(ids))
        assert sorted(out.doc_ids) == sorted(ids)


IDS = ["abc1234aaaa", "def5678bbbb", "aaa9999cccc"]


class TestLLMParsing:
    def test_examples(self):
        assert parse_llm_order("1. abc1234\n2. def5678", IDS) == IDS
        assert parse_llm_order("", IDS) == IDS
        assert parse_llm_order("def5678bbbb, def5678bbbb, abc1234aaaa", IDS) == ["def5678bbbb", "abc1234aaaa", "aaa9999cccc"]

    def test_missing_appended_and_unknown_ignored(self):
        ids = ["c1", "c2", "c3", "c4"]
        assert parse_llm_order("c3, c1, c2", ids) == ["c3", "c1", "c2", "c4"]
        assert parse_llm_order("zz9, c2", ids) == ["c2", "c1", "c3", "c4"]

    def test_short_or_ambiguous_prefix_ignored(self):
        ids = ["abc12345x", "abc12345y"]
        assert parse_llm_order("abc12345", ids) == ids
        assert parse_llm_order("abc12", ["abc12345x", "zzz"]) == ["abc12345x", "zzz"]

    @settings(max_examples=500)
    @given(st.binary(max_size=300), st.lists(st.text(alphabet="0123456789abcdef", min_size=1, max_size=12),
                                              unique=True, max_size=20))
    def test_fuzz_permutation(self, raw, ids):
        assert sorted(parse_llm_order(raw, ids)) == sorted(ids)

    def test_prompt_budget(self):
        batch = RerankRequestBatch("q", "issue text", (("c1", "x" * 5000), ("c2", "short")))
        prompt, truncated = render_prompt(batch, char_budget=100)
        assert truncated == 1 and "x" * 101 not in prompt and "c2" in prompt

    def test_batch_limits(self):
        with pytest.raises(ValueError):
            RerankRequestBatch("q", "", tuple((f"c{i}", "") for i in range(21)))
        with pytest.raises(ValueError):
            RerankRequestBatch("q", "", (("c", ""), ("c", "")))


def chat_transport(reply=None, status=200, calls=None):
    def handler(request):
        if calls is not None:
            calls.append(json.loads(request.content))
        if status != 200:
            return httpx.Response(status)
        return httpx.Response(200, json={"choices": [{"message": {"content": reply}}]})

    return httpx.MockTransport(handler)


class TestRemote:
    BATCH = RerankRequestBatch("q", "issue", (("c1", "m1"), ("c2", "m2"), ("c3", "m3"), ("c4", "m4")))

    def test_llm_order(self):
        calls = []
        client = ChatClient("http://llm.test", "m", transport=chat_transport("c3, c1, c2", calls=calls))
        out = llm_rerank(client, self.BATCH)
        assert out.doc_ids == ["c3", "c1", "c2", "c4"] and out.provenance == "llm"
        assert calls[0]["model"] == "m" and calls[0]["messages"][0]["role"] == "user"

    def test_llm_fallback_after_retries(self):
        calls = []
        client = ChatClient("http://llm.test", retry=RetryPolicy(max_retries=2, backoff=0.0),
                            transport=chat_transport(status=503, calls=calls))
        out = llm_rerank(client, self.BATCH, name="gpt")
        assert out.doc_ids == ["c1", "c2", "c3", "c4"] and out.provenance == "gpt:fallback"
        assert len(calls) == 3

    def test_pairwise(self):
        def handler(request):
            pairs = json.loads(request.content)["pairs"]
            return httpx.Response(200, json={"scores": [1.0 if q == d else 0.0 for q, d in pairs]})

        client = PairwiseClient("http://score.test", retry=NO_RETRY, transport=httpx.MockTransport(handler))
        assert external_score(client, "same text", "same text") == 1.0
        assert external_score(client, "alpha", "beta") == 0.0
        scores = pairwise_scores(client, "x", [("a", "x"), ("b", "y"), ("c", "x")])
        assert scores == {"a": 1.0, "b": 0.0, "c": 1.0}

    def test_pairwise_down(self):
        client = PairwiseClient("http://score.test", retry=NO_RETRY,
                                transport=httpx.MockTransport(lambda r: httpx.Response(500)))
        with pytest.raises(RemoteScorerError):
            pairwise_scores(client, "x", [("a", "x")])

    def test_bounded_map_order_and_limit(self):
        active, peak, lock = [0], [0], threading.Lock()

        def work(i):
            with lock:
                active[0] += 1
                peak[0] = max(peak[0], active[0])
            time.sleep(0.01 * (5 - i % 5))
            with lock:
                active[0] -= 1
            return i * i

        assert bounded_map(work, list(range(20)), 3) == [i * i for i in range(20)]
        assert peak[0] <= 3
