"""Pipeline stages behind the CLI subcommands.

Each stage writes into ``<output_dir>/<stage>/<hash>/`` where the hash covers
the stage's configuration and everything upstream of it, and finishes by
writing ``manifest.json``. A stage looks for its prerequisites under the
hashes the current config implies and refuses to run without them.
"""

from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence, TypeVar

from . import __version__
from .config import RunConfig, stage_hashes
from .corpus import (
    CommitRecord,
    Document,
    IngestError,
    IssueRecord,
    TrueLink,
    commit_document,
    extract_true_links,
    filter_commits,
    find_issue_keys,
    infer_project_keys,
    ingest_commits,
    ingest_issues,
    issue_query,
    resolve_links,
    write_records,
)
from .eval import (
    RERANK_COLUMNS,
    RETRIEVAL_COLUMNS,
    EvaluationReport,
    chrono_split,
    evaluate_run,
    format_table,
    judgments_from_links,
    query_id,
    sample_test,
)
from .ranking import RankedList
from .rerank import (
    ChatClient,
    FRLinkModel,
    ForestParams,
    PairwiseClient,
    PoolContext,
    RemoteScorerError,
    RerankRequestBatch,
    RetryPolicy,
    bounded_map,
    extract_features,
    frlink_score,
    frlink_threshold,
    llm_rerank,
    load_forest,
    make_training_set,
    pairwise_scores,
    rerank_with_model,
    rerank_with_scores,
    save_forest,
    score_forest,
    train_forest,
)
from .retrieval import (
    EmbeddingCache,
    HashingEmbedder,
    HttpEmbeddingProvider,
    PoolRetriever,
    build_sparse_index,
    sparse_scores,
)
from .temporal import CommitTimeline, WindowPolicy, coverage, format_coverage_table

logger = logging.getLogger(__name__)

STAGES = ("ingest", "coverage", "retrieve", "train", "rerank", "evaluate")
SEEDED_KINDS = ("hnsw", "lsh", "rp_forest")
T = TypeVar("T")


class StageError(RuntimeError):
    """Runtime failure inside a stage (exit status 2)."""

    exit_code = 2


class MissingArtifact(StageError):
    """A prerequisite stage has not been run for this config (exit status 1)."""

    exit_code = 1


# ---------------------------------------------------------------- helpers


def _write_json(path: Path, obj: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=1, ensure_ascii=False) + "\n", encoding="utf-8")


def _read_json(path: Path) -> Any:
    return json.loads(path.read_text(encoding="utf-8"))


def _write_lists(path: Path, lists: Iterable[RankedList]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for r in lists:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


def _read_lists(path: Path) -> dict[str, RankedList]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            r = RankedList.from_dict(json.loads(line))
            out[r.query_id] = r
    return out


def _read_jsonl(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def parallel_map(fn: Callable[[T], Any], items: Sequence[T], workers: int) -> list:
    """Ordered map; output order never depends on scheduling."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass
class ProjectCorpus:
    project_id: str
    key_style: str
    keys: list[str]
    issues: list[IssueRecord]
    commits: list[CommitRecord]
    links: list[TrueLink]
    docs: dict[str, Document]
    _timeline: CommitTimeline | None = field(default=None, repr=False)

    @property
    def timeline(self) -> CommitTimeline:
        if self._timeline is None:
            self._timeline = CommitTimeline(self.commits)
        return self._timeline

    @property
    def issue_map(self) -> dict[str, IssueRecord]:
        return {i.issue_key: i for i in self.issues}

    @property
    def commit_map(self) -> dict[str, CommitRecord]:
        return {c.hash: c for c in self.commits}

    def query(self, issue: IssueRecord) -> str:
        return issue_query(issue, self.keys, self.key_style)

    def query_ids(self) -> list[str]:
        """Issues with at least one true link, in id order."""
        linked = {link.issue_key for link in self.links}
        return sorted(query_id(self.project_id, k) for k in linked)


class Workspace:
    def __init__(self, cfg: RunConfig, workers: int | None = None):
        self.cfg = cfg
        self.hashes = stage_hashes(cfg)
        self.workers = workers or cfg.workers or os.cpu_count() or 1
        self._corpus: dict[str, ProjectCorpus] | None = None

    def dir(self, stage: str) -> Path:
        return Path(self.cfg.output_dir) / stage / self.hashes[stage]

    def require(self, stage: str) -> Path:
        d = self.dir(stage)
        if not (d / "manifest.json").is_file():
            raise MissingArtifact(
                f"missing {stage} artifacts for this config (expected {d / 'manifest.json'}); "
                f"run `issuelink {stage} --config ...` first"
            )
        return d

    def finish(self, stage: str, started: float, counts: dict, artifacts: Sequence[str], extra: dict | None = None) -> Path:
        d = self.dir(stage)
        manifest = {
            "stage": stage,
            "config_fingerprint": self.hashes[stage],
            "tool_version": __version__,
            "artifacts": sorted(artifacts),
            "counts": counts,
            "timing_seconds": round(time.perf_counter() - started, 3),
            **(extra or {}),
        }
        _write_json(d / "manifest.json", manifest)
        return d

    # -------------------------------------------------------- corpus access

    def corpus(self) -> dict[str, ProjectCorpus]:
        if self._corpus is None:
            d = self.require("ingest")
            out = {}
            for proj in self.cfg.projects:
                pdir = d / proj.id
                meta = _read_json(pdir / "project.json")
                issues = ingest_issues(pdir / "issues.jsonl").records
                commits = ingest_commits(pdir / "commits.jsonl").records
                links = [TrueLink(**row) for row in _read_jsonl(pdir / "links.jsonl")]
                docs = {row["doc_id"]: Document.from_dict(row) for row in _read_jsonl(pdir / "documents.jsonl")}
                out[proj.id] = ProjectCorpus(proj.id, meta["key_style"], meta["keys"], issues, commits, links, docs)
            self._corpus = out
        return self._corpus

    def policy(self) -> WindowPolicy:
        return self.cfg.window.policy()

    def embeddings(self) -> EmbeddingCache:
        e = self.cfg.retrieval.embedding
        provider = HashingEmbedder(e.dim) if e.provider == "hashing" else HttpEmbeddingProvider(e.url, dim=e.dim)
        return EmbeddingCache(provider)

    def split(self) -> dict[str, dict[str, list[str]]]:
        return _read_json(self.require("train") / "split.json")


# ---------------------------------------------------------------- ingest


def cmd_ingest(ws: Workspace) -> dict:
    started = time.perf_counter()
    out = ws.dir("ingest")
    quality: dict[str, dict] = {}
    artifacts = ["quality.json"]
    for proj in ws.cfg.projects:
        issues_res = ingest_issues(proj.issues, proj.id)
        commits_res = ingest_commits(proj.commits, proj.id)
        if not issues_res.records:
            raise IngestError(f"{proj.issues}: no usable issue records")
        if not commits_res.records:
            raise IngestError(f"{proj.commits}: no usable commit records")
        issues = [i if i.project_id == proj.id else replace(i, project_id=proj.id) for i in issues_res.records]
        commits = [c if c.project_id == proj.id else replace(c, project_id=proj.id) for c in commits_res.records]
        keys = list(proj.keys) or (infer_project_keys(i.issue_key for i in issues) if proj.key_style == "jira" else [])
        if proj.key_style == "jira" and not keys:
            raise IngestError(f"project {proj.id}: no Jira keys configured or inferable from issue keys")

        merges = sum(1 for c in commits if len(c.parents) > 1)
        empty = sum(1 for c in commits if len(c.parents) <= 1 and not c.file_changes)
        kept = filter_commits(commits)
        unkeyed = 0
        if ws.cfg.ingest.keyed_commits_only:
            keyed = [c for c in kept if find_issue_keys(c.message, keys, proj.key_style)]
            unkeyed = len(kept) - len(keyed)
            kept = keyed
        links, unresolved = resolve_links(extract_true_links(kept, keys, proj.key_style), issues, kept)
        docs = [commit_document(c, keys, proj.key_style) for c in kept]

        pdir = out / proj.id
        pdir.mkdir(parents=True, exist_ok=True)
        write_records(issues, pdir / "issues.jsonl")
        write_records(kept, pdir / "commits.jsonl")
        write_records(links, pdir / "links.jsonl")
        write_records(docs, pdir / "documents.jsonl")
        _write_json(pdir / "project.json", {"project_id": proj.id, "key_style": proj.key_style, "keys": keys})
        artifacts += [f"{proj.id}/{n}" for n in ("issues.jsonl", "commits.jsonl", "links.jsonl", "documents.jsonl", "project.json")]
        linked_issues = {link.issue_key for link in links}
        quality[proj.id] = {
            "issues_read": len(issues_res.records) + issues_res.skipped,
            "issues_kept": len(issues),
            "issues_skipped": issues_res.skipped,
            "duplicate_issues": issues_res.duplicates,
            "closed_before_created": issues_res.closed_before_created,
            "malformed_closed_at": issues_res.malformed_closed_at,
            "commits_read": len(commits_res.records) + commits_res.skipped,
            "commits_skipped": commits_res.skipped,
            "merge_commits_excluded": merges,
            "empty_commits_excluded": empty,
            "unkeyed_commits_excluded": unkeyed,
            "commits_kept": len(kept),
            "true_links": len(links),
            "unresolved_links": len(unresolved),
            "issues_with_links": len(linked_issues),
            "degenerate_queries": sum(1 for i in issues if not (i.title.strip() or i.description.strip())),
            "warnings": issues_res.warnings + commits_res.warnings,
        }
    _write_json(out / "quality.json", quality)
    totals = {k: sum(q[k] for q in quality.values()) for k in quality[next(iter(quality))] if k != "warnings"}
    ws.finish("ingest", started, totals, artifacts, {"per_project": {p: {k: v for k, v in q.items() if k != "warnings"} for p, q in quality.items()}})
    ws._corpus = None
    return totals


# ---------------------------------------------------------------- coverage


def cmd_coverage(ws: Workspace, policies: Sequence[WindowPolicy] | None = None) -> str:
    started = time.perf_counter()
    corpus = ws.corpus()
    if policies is None:
        policies = [p.policy() for p in ws.cfg.coverage.policies]
    links = [l for pc in corpus.values() for l in pc.links]
    issues = [i for pc in corpus.values() for i in pc.issues]
    commits = [c for pc in corpus.values() for c in pc.commits]
    reports = [coverage(links, issues, commits, p) for p in policies]
    table = format_coverage_table(reports)
    out = ws.dir("coverage")
    _write_json(out / "coverage.json", [r.to_dict() for r in reports])
    (out / "coverage.txt").write_text(table + "\n", encoding="utf-8")
    ws.finish("coverage", started, {"policies": len(reports), "links": len(links)}, ["coverage.json", "coverage.txt"])
    return table


# ---------------------------------------------------------------- retrieve


def _dense_params(ws: Workspace) -> dict[str, dict]:
    params: dict[str, dict] = {}
    for r in ws.cfg.retrieval.retrievers:
        if r.name != "rrf":
            params[r.name] = dict(r.params)
    for kind in SEEDED_KINDS:
        params.setdefault(kind, {}).setdefault("seed", ws.cfg.seed)
    return params


def cmd_retrieve(ws: Workspace) -> dict:
    started = time.perf_counter()
    corpus = ws.corpus()
    policy = ws.policy()
    configs = ws.cfg.retrieval.retriever_configs()
    needs_dense = any(c.needs_embeddings for c in configs)
    cache = ws.embeddings() if needs_dense else None
    params = _dense_params(ws)
    results: dict[str, list[RankedList]] = {c.name: [] for c in configs}
    pools: list[dict] = []
    for pc in corpus.values():
        global_sparse = {}
        if ws.cfg.retrieval.idf_scope == "global":
            global_sparse = {v: build_sparse_index(list(pc.docs.values()), v) for v in ("bm25", "bm25l")}
        issue_map = pc.issue_map

        def run(qid: str, pc=pc, issue_map=issue_map, global_sparse=global_sparse):
            issue = issue_map[qid.split("/", 1)[1]]
            pool = [pc.docs[c.hash] for c in pc.timeline.pool(issue, policy)]
            retriever = PoolRetriever(qid, pc.query(issue), pool, cache, global_sparse, params)
            return len(pool), [retriever.retrieve(c) for c in configs]

        qids = pc.query_ids()
        for qid, (size, lists) in zip(qids, parallel_map(run, qids, ws.workers)):
            pools.append({"query_id": qid, "pool_size": size})
            for c, r in zip(configs, lists):
                results[c.name].append(r)
    out = ws.dir("retrieve")
    artifacts = []
    for name, lists in results.items():
        _write_lists(out / "rankings" / f"{name}.jsonl", lists)
        artifacts.append(f"rankings/{name}.jsonl")
    with open(out / "pools.jsonl", "w", encoding="utf-8") as fh:
        for row in pools:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    counts = {"queries": len(pools), "empty_pools": sum(1 for p in pools if p["pool_size"] == 0)}
    if counts["empty_pools"]:
        logger.warning("%d issues have empty candidate pools", counts["empty_pools"])
    ws.finish("retrieve", started, counts, artifacts + ["pools.jsonl"])
    return counts


def load_rankings(ws: Workspace, name: str) -> dict[str, RankedList]:
    path = ws.require("retrieve") / "rankings" / f"{name}.jsonl"
    if not path.is_file():
        raise MissingArtifact(f"no rankings for retriever {name!r} at {path}")
    return _read_lists(path)


# ---------------------------------------------------------------- features


def _issue_context(
    ws: Workspace,
    pc: ProjectCorpus,
    issue: IssueRecord,
    rrf: RankedList | None,
    extra_docs: Iterable[Document] = (),
) -> tuple[list[Document], PoolContext]:
    pool = [pc.docs[c.hash] for c in pc.timeline.pool(issue, ws.policy())]
    in_pool = {d.doc_id for d in pool}
    vocab_docs = pool + [d for d in extra_docs if d.doc_id not in in_pool]
    query = pc.query(issue)
    bm25 = {}
    if vocab_docs:
        from .text import tokenize

        bm25 = sparse_scores(build_sparse_index(vocab_docs, "bm25"), tokenize(query))
    buffer = max(ws.cfg.window.closure_before_days or 0, ws.cfg.window.closure_after_days or 0)
    ctx = PoolContext.build(query, vocab_docs, bm25, dict(rrf.entries) if rrf else {}, buffer)
    return pool, ctx


def _split_project(pc: ProjectCorpus, ratio: float) -> dict[str, list[str]]:
    try:
        s = chrono_split(pc.issues, ratio)
    except ValueError as exc:
        raise StageError(f"project {pc.project_id}: {exc}") from exc
    return {"train": sorted(s.train_issue_keys), "test": sorted(s.test_issue_keys)}


def cmd_train(ws: Workspace) -> dict:
    started = time.perf_counter()
    corpus = ws.corpus()
    cand = load_rankings(ws, ws.cfg.train.candidate_retriever)
    rrf_lists = load_rankings(ws, "rrf") if any(r.name == "rrf" for r in ws.cfg.retrieval.retrievers) else {}
    split = {p: _split_project(pc, ws.cfg.split.ratio) for p, pc in corpus.items()}
    relevant = judgments_from_links(l for pc in corpus.values() for l in pc.links)

    examples, labels_seen, positive_scores, pair_rows = [], [], [], []
    for p, pc in corpus.items():
        train_keys = set(split[p]["train"])
        qids = [q for q in pc.query_ids() if q.split("/", 1)[1] in train_keys]
        pairs = make_training_set(qids, relevant, cand, ws.cfg.train.negatives)
        issue_map, commit_map = pc.issue_map, pc.commit_map
        by_query: dict[str, list] = {}
        for pair in pairs:
            by_query.setdefault(pair.query_id, []).append(pair)

        def featurize(qid: str, pc=pc, issue_map=issue_map, commit_map=commit_map, by_query=by_query):
            issue = issue_map[qid.split("/", 1)[1]]
            qpairs = by_query[qid]
            positives = [pc.docs[pr.commit_hash] for pr in qpairs if pr.label == 1]
            _, ctx = _issue_context(ws, pc, issue, rrf_lists.get(qid), positives)
            rows = []
            for pr in qpairs:
                doc = pc.docs[pr.commit_hash]
                fv = extract_features(issue, commit_map[pr.commit_hash], doc, ctx, pr.label)
                fr = frlink_score(ctx.query, doc.text, ctx.tfidf) if pr.label == 1 else None
                rows.append((pr, fv, fr))
            return rows

        for rows in parallel_map(featurize, sorted(by_query), ws.workers):
            for pr, fv, fr in rows:
                examples.append(fv)
                labels_seen.append(pr.label)
                pair_rows.append({"query_id": pr.query_id, "commit_hash": pr.commit_hash, "label": pr.label})
                if fr is not None:
                    positive_scores.append(fr)

    if len(set(labels_seen)) < 2:
        raise StageError(
            f"training set has a single class ({len(examples)} examples); "
            "need both true links and retrieved non-links among training issues"
        )
    fcfg = ws.cfg.train.forest
    model = train_forest(
        examples,
        ForestParams(fcfg.n_trees, fcfg.max_depth, fcfg.min_samples_leaf, fcfg.features_per_split, True, ws.cfg.seed),
    )
    out = ws.dir("train")
    out.mkdir(parents=True, exist_ok=True)
    save_forest(model, out / "forest.json")
    artifacts = ["forest.json", "split.json", "training_pairs.jsonl"]
    if len(positive_scores) >= 10:
        FRLinkModel(frlink_threshold(positive_scores), len(positive_scores)).save(out / "frlink.json")
        artifacts.append("frlink.json")
    else:
        logger.warning("only %d positive pairs; frlink threshold not learned", len(positive_scores))
    _write_json(out / "split.json", split)
    with open(out / "training_pairs.jsonl", "w", encoding="utf-8") as fh:
        for row in pair_rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    counts = {
        "examples": len(examples),
        "positives": sum(labels_seen),
        "negatives": len(labels_seen) - sum(labels_seen),
        "train_accuracy": model.train_accuracy,
    }
    ws.finish("train", started, counts, artifacts)
    return counts


# ---------------------------------------------------------------- rerank


def _test_qids(ws: Workspace, pc: ProjectCorpus, split: dict) -> list[str]:
    test_keys = set(split[pc.project_id]["test"])
    return [q for q in pc.query_ids() if q.split("/", 1)[1] in test_keys]


def cmd_rerank(ws: Workspace) -> dict:
    started = time.perf_counter()
    tdir = ws.require("train")
    corpus = ws.corpus()
    split = ws.split()
    rcfg = ws.cfg.rerank
    cand = load_rankings(ws, rcfg.candidate_retriever)
    rrf_lists = load_rankings(ws, "rrf") if any(r.name == "rrf" for r in ws.cfg.retrieval.retrievers) else {}
    types = {r.type for r in rcfg.rerankers}
    forest = load_forest(tdir / "forest.json") if "forest" in types else None

    jobs: list[tuple[ProjectCorpus, str, RankedList]] = []
    for pc in corpus.values():
        for qid in _test_qids(ws, pc, split):
            jobs.append((pc, qid, (cand.get(qid) or RankedList(qid)).top(rcfg.k)))

    outputs: dict[str, list[RankedList]] = {}
    fallbacks: dict[str, list[str]] = {}
    for entry in rcfg.rerankers:
        name = entry.name
        if entry.type in ("identity", "forest", "frlink"):

            def local(job, entry=entry):
                pc, qid, cands = job
                if entry.type == "identity":
                    scores = dict(cands.entries)
                    return rerank_with_model(scores.__getitem__, cands, rcfg.k, entry.name)
                issue = pc.issue_map[qid.split("/", 1)[1]]
                _, ctx = _issue_context(ws, pc, issue, rrf_lists.get(qid))
                docs = [pc.docs[d] for d in cands.doc_ids]
                if entry.type == "frlink":
                    scores = {d.doc_id: frlink_score(ctx.query, d.text, ctx.tfidf) for d in docs}
                else:
                    commits = pc.commit_map
                    fvs = [extract_features(issue, commits[d.doc_id], d, ctx) for d in docs]
                    s = score_forest(forest, fvs) if fvs else []
                    scores = {d.doc_id: float(v) for d, v in zip(docs, s)}
                return rerank_with_model(scores.__getitem__, cands, rcfg.k, entry.name)

            lists = parallel_map(local, jobs, ws.workers)
        elif entry.type == "llm":
            client = ChatClient(entry.url, entry.model, retry=RetryPolicy(entry.retries, entry.backoff),
                                min_interval=entry.min_interval, timeout=entry.timeout)

            def remote_llm(job, entry=entry, client=client):
                pc, qid, cands = job
                issue = pc.issue_map[qid.split("/", 1)[1]]
                batch = RerankRequestBatch(qid, pc.query(issue), tuple((d, pc.docs[d].message) for d in cands.doc_ids))
                return llm_rerank(client, batch, entry.char_budget, entry.name)

            lists = bounded_map(remote_llm, jobs, entry.max_concurrency)
            client.close()
        else:
            client = PairwiseClient(entry.url, retry=RetryPolicy(entry.retries, entry.backoff),
                                    min_interval=entry.min_interval, timeout=entry.timeout)

            def remote_pairs(job, entry=entry, client=client):
                pc, qid, cands = job
                issue = pc.issue_map[qid.split("/", 1)[1]]
                docs = [(d, pc.docs[d].text) for d in cands.doc_ids]
                try:
                    scores = pairwise_scores(client, pc.query(issue), docs) if docs else {}
                except RemoteScorerError as exc:
                    logger.warning("%s: pairwise scoring failed, keeping retrieval order: %s", qid, exc)
                    scores = None
                return rerank_with_scores(scores, cands, rcfg.k, entry.name)

            lists = bounded_map(remote_pairs, jobs, entry.max_concurrency)
            client.close()
        fallbacks[name] = [r.query_id for r in lists if r.provenance.endswith(":fallback")]
        outputs[name] = lists

    out = ws.dir("rerank")
    artifacts = []
    for name, lists in outputs.items():
        _write_lists(out / "reranked" / f"{name}.jsonl", lists)
        artifacts.append(f"reranked/{name}.jsonl")
    _write_lists(out / "reranked" / "_candidates.jsonl", [j[2] for j in jobs])
    _write_json(out / "fallbacks.json", fallbacks)
    counts = {"queries": len(jobs), "fallbacks": {n: len(v) for n, v in fallbacks.items()}}
    ws.finish("rerank", started, counts, artifacts + ["reranked/_candidates.jsonl", "fallbacks.json"])
    return counts


# ---------------------------------------------------------------- evaluate


def cmd_evaluate(ws: Workspace) -> str:
    started = time.perf_counter()
    rdir = ws.require("rerank")
    corpus = ws.corpus()
    split = ws.split()
    ecfg = ws.cfg.evaluate
    judged: list[str] = []
    per_project_samples = []
    for pc in corpus.values():
        qids = _test_qids(ws, pc, split)
        judged += qids
        per_project_samples.append(sample_test(qids, ecfg.sample_size, ecfg.repeats, ws.cfg.seed))
    n_samples = max(len(s) for s in per_project_samples)
    samples = [sorted(q for s in per_project_samples for q in s[min(i, len(s) - 1)]) for i in range(n_samples)]
    judgments = judgments_from_links((l for pc in corpus.values() for l in pc.links), judged)
    if not judgments:
        raise StageError("no judged test queries; every test issue lacks true links")
    fp = ws.hashes["evaluate"]

    retrieval_reports: list[EvaluationReport] = []
    for r in ws.cfg.retrieval.retrievers:
        lists = load_rankings(ws, r.name)
        retrieval_reports.append(evaluate_run(lists, judgments, ecfg.ks, samples, r.name, fp))
    rerank_reports: list[EvaluationReport] = []
    cand_path = rdir / "reranked" / "_candidates.jsonl"
    rerank_reports.append(
        evaluate_run(_read_lists(cand_path), judgments, ecfg.ks, samples,
                     f"{ws.cfg.rerank.candidate_retriever}@{ws.cfg.rerank.k}", fp)
    )
    for entry in ws.cfg.rerank.rerankers:
        path = rdir / "reranked" / f"{entry.name}.jsonl"
        if not path.is_file():
            raise MissingArtifact(f"no reranked lists for {entry.name!r} at {path}")
        rerank_reports.append(evaluate_run(_read_lists(path), judgments, ecfg.ks, samples, entry.name, fp))

    out = ws.dir("evaluate")
    report = {
        "config_fingerprint": fp,
        "samples": len(samples),
        "retrieval": [r.to_dict() for r in retrieval_reports],
        "rerank": [r.to_dict() for r in rerank_reports],
    }
    _write_json(out / "report.json", report)
    tables = (
        "Retrieval\n" + format_table(retrieval_reports, RETRIEVAL_COLUMNS)
        + "\n\nReranking\n" + format_table(rerank_reports, RERANK_COLUMNS) + "\n"
    )
    (out / "tables.txt").write_text(tables, encoding="utf-8")
    ws.finish("evaluate", started, {"judged_queries": len(judgments), "samples": len(samples)},
              ["report.json", "tables.txt"])
    return tables


def cmd_all(ws: Workspace) -> str:
    cmd_ingest(ws)
    print(cmd_coverage(ws))
    cmd_retrieve(ws)
    cmd_train(ws)
    cmd_rerank(ws)
    return cmd_evaluate(ws)
