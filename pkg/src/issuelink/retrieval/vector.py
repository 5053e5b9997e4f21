"""Dense vector indexes over unit vectors: flat, HNSW, LSH and random-projection forest.

All similarities are inner products of unit vectors (cosine). Every index
is built once and never mutated afterwards, so concurrent searches are safe.
"""

from __future__ import annotations

import heapq
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from ..ranking import RankedList

logger = logging.getLogger(__name__)

KINDS = ("flat", "hnsw", "lsh", "rp_forest")
INDEX_FORMAT_VERSION = 1
NORM_TOLERANCE = 1e-6

DEFAULT_PARAMS: dict[str, dict[str, Any]] = {
    "flat": {},
    "hnsw": {"M": 16, "ef_construction": 200, "ef_search": 100, "seed": 0},
    "lsh": {"nbits": 256, "seed": 0},
    "rp_forest": {"n_trees": 50, "leaf_size": 32, "search_k_factor": 10, "seed": 0},
}


# ---------------------------------------------------------------- HNSW


class HNSWGraph:
    """Hierarchical navigable small-world graph (Malkov & Yashunin).

    Uses the neighbour-selection heuristic for both new links and pruning.
    Layer 0 keeps up to ``2*M`` links per node, upper layers ``M``.
    """

    def __init__(self, vectors: np.ndarray, M: int = 16, ef_construction: int = 200, seed: int = 0):
        self.vectors = vectors
        self.M = M
        self.M0 = 2 * M
        self.ef_construction = ef_construction
        self.level_mult = 1.0 / math.log(M)
        self.levels: list[int] = []
        self.links: list[dict[int, list[int]]] = []
        self.entry = -1
        self.max_level = -1
        rng = np.random.default_rng(seed)
        draws = 1.0 - rng.random(len(vectors))
        for i, u in enumerate(draws):
            self._insert(i, int(-math.log(u) * self.level_mult))

    def _search_layer(self, q: np.ndarray, entry_points: Sequence[int], ef: int, level: int) -> list[tuple[float, int]]:
        vectors = self.vectors
        layer = self.links[level]
        visited = set(entry_points)
        sims = (vectors[list(entry_points)] @ q).tolist()
        candidates = [(-s, e) for s, e in zip(sims, entry_points)]
        heapq.heapify(candidates)
        results = [(s, e) for s, e in zip(sims, entry_points)]
        heapq.heapify(results)
        while len(results) > ef:
            heapq.heappop(results)
        while candidates:
            neg_s, c = heapq.heappop(candidates)
            if -neg_s < results[0][0] and len(results) >= ef:
                break
            fresh = [n for n in layer.get(c, ()) if n not in visited]
            if not fresh:
                continue
            visited.update(fresh)
            for n, s in zip(fresh, (vectors[fresh] @ q).tolist()):
                if len(results) < ef or s > results[0][0]:
                    heapq.heappush(candidates, (-s, n))
                    heapq.heappush(results, (s, n))
                    if len(results) > ef:
                        heapq.heappop(results)
        return sorted(results, key=lambda t: (-t[0], t[1]))

    def _select(self, ranked: list[tuple[float, int]], m: int) -> list[int]:
        """Keep a candidate only if it is closer to the base than to every kept one."""
        if len(ranked) <= m:
            return [c for _, c in ranked]
        kept: list[int] = []
        for s, c in ranked:
            if len(kept) >= m:
                break
            if not kept or float(np.max(self.vectors[kept] @ self.vectors[c])) < s:
                kept.append(c)
        return kept

    def _insert(self, i: int, level: int) -> None:
        q = self.vectors[i]
        self.levels.append(level)
        while len(self.links) <= level:
            self.links.append({})
        for lc in range(level + 1):
            self.links[lc][i] = []
        if self.entry < 0:
            self.entry, self.max_level = i, level
            return
        ep = [self.entry]
        for lc in range(self.max_level, level, -1):
            ep = [self._search_layer(q, ep, 1, lc)[0][1]]
        for lc in range(min(level, self.max_level), -1, -1):
            found = self._search_layer(q, ep, self.ef_construction, lc)
            cap = self.M0 if lc == 0 else self.M
            neighbours = self._select(found, self.M)
            layer = self.links[lc]
            layer[i] = list(neighbours)
            for n in neighbours:
                nl = layer[n]
                nl.append(i)
                if len(nl) > cap:
                    sims = (self.vectors[nl] @ self.vectors[n]).tolist()
                    ranked = sorted(zip(sims, nl), key=lambda t: (-t[0], t[1]))
                    layer[n] = self._select(ranked, cap)
            ep = [c for _, c in found]
        if level > self.max_level:
            self.entry, self.max_level = i, level

    def search(self, q: np.ndarray, k: int, ef: int) -> list[int]:
        if self.entry < 0:
            return []
        ep = [self.entry]
        for lc in range(self.max_level, 0, -1):
            ep = [self._search_layer(q, ep, 1, lc)[0][1]]
        return [c for _, c in self._search_layer(q, ep, max(ef, k), 0)]

    def state(self) -> dict:
        return {
            "M": self.M,
            "ef_construction": self.ef_construction,
            "entry": self.entry,
            "max_level": self.max_level,
            "levels": self.levels,
            "links": [{str(k): v for k, v in layer.items()} for layer in self.links],
        }

    @classmethod
    def from_state(cls, vectors: np.ndarray, state: dict) -> "HNSWGraph":
        g = cls.__new__(cls)
        g.vectors = vectors
        g.M = state["M"]
        g.M0 = 2 * g.M
        g.ef_construction = state["ef_construction"]
        g.level_mult = 1.0 / math.log(g.M)
        g.entry = state["entry"]
        g.max_level = state["max_level"]
        g.levels = list(state["levels"])
        g.links = [{int(k): list(v) for k, v in layer.items()} for layer in state["links"]]
        return g


# ---------------------------------------------------------------- LSH

_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint16)


class HyperplaneLSH:
    """Sign-of-random-projection signatures compared by Hamming distance."""

    def __init__(self, vectors: np.ndarray, nbits: int = 256, seed: int = 0, planes: np.ndarray | None = None):
        if nbits % 8:
            raise ValueError("nbits must be a multiple of 8")
        self.nbits = nbits
        if planes is None:
            planes = np.random.default_rng(seed).standard_normal((nbits, vectors.shape[1]))
        self.planes = planes
        self.codes = self.signature(vectors)

    def signature(self, x: np.ndarray) -> np.ndarray:
        bits = (np.atleast_2d(x) @ self.planes.T) > 0
        return np.packbits(bits, axis=1)

    def hamming(self, q: np.ndarray) -> np.ndarray:
        return _POPCOUNT[np.bitwise_xor(self.codes, self.signature(q))].sum(axis=1)


# ---------------------------------------------------------------- RP forest


@dataclass
class _RPTree:
    # internal node j: split normal normals[j], children left[j]/right[j];
    # a child c < 0 is leaf -(c+1), whose items are items[starts[l]:starts[l+1]]
    normals: np.ndarray
    left: np.ndarray
    right: np.ndarray
    items: np.ndarray
    starts: np.ndarray
    root: int


def _build_rp_tree(vectors: np.ndarray, leaf_size: int, rng: np.random.Generator) -> _RPTree:
    normals: list[np.ndarray] = []
    left: list[int] = []
    right: list[int] = []
    leaves: list[np.ndarray] = []

    def leaf(idx: np.ndarray) -> int:
        leaves.append(idx)
        return -len(leaves)

    def grow(idx: np.ndarray) -> int:
        if len(idx) <= leaf_size:
            return leaf(idx)
        a, b = rng.choice(len(idx), size=2, replace=False)
        normal = vectors[idx[a]] - vectors[idx[b]]
        norm = np.linalg.norm(normal)
        side = None
        if norm > 0:
            normal = normal / norm
            side = (vectors[idx] @ normal) > 0
            if side.all() or not side.any():
                side = None
        if side is None:
            # duplicate points: fall back to a random halving
            normal = np.zeros(vectors.shape[1])
            side = np.zeros(len(idx), dtype=bool)
            side[rng.permutation(len(idx))[: len(idx) // 2]] = True
        j = len(normals)
        normals.append(normal)
        left.append(0)
        right.append(0)
        right[j] = grow(idx[side])
        left[j] = grow(idx[~side])
        return j

    root = grow(np.arange(len(vectors)))
    dim = vectors.shape[1]
    starts = np.cumsum([0] + [len(l) for l in leaves])
    return _RPTree(
        normals=np.array(normals).reshape(-1, dim),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        items=np.concatenate(leaves) if leaves else np.zeros(0, dtype=np.int64),
        starts=starts.astype(np.int64),
        root=root,
    )


class RPForest:
    """Random projection trees searched with a shared priority queue (ANNOY-style)."""

    def __init__(self, vectors: np.ndarray, n_trees: int = 50, leaf_size: int = 32, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.leaf_size = leaf_size
        self.trees = [_build_rp_tree(vectors, leaf_size, rng) for _ in range(n_trees)]

    def candidates(self, q: np.ndarray, budget: int) -> np.ndarray:
        heap: list[tuple[float, int, int]] = [(-math.inf, t, tree.root) for t, tree in enumerate(self.trees)]
        heapq.heapify(heap)
        found: list[np.ndarray] = []
        count = 0
        while heap and count < budget:
            neg_prio, t, node = heapq.heappop(heap)
            tree = self.trees[t]
            if node < 0:
                leaf = -node - 1
                items = tree.items[tree.starts[leaf] : tree.starts[leaf + 1]]
                found.append(items)
                count += len(items)
                continue
            margin = float(tree.normals[node] @ q)
            prio = -neg_prio
            heapq.heappush(heap, (-min(prio, margin), t, int(tree.right[node])))
            heapq.heappush(heap, (-min(prio, -margin), t, int(tree.left[node])))
        if not found:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(found))


# ---------------------------------------------------------------- index


@dataclass
class VectorIndex:
    kind: str
    dim: int
    doc_ids: list[str]
    matrix: np.ndarray
    params: dict[str, Any] = field(default_factory=dict)
    structure: Any = None

    def __post_init__(self):
        # rank of each row's doc_id in sorted order, for deterministic tie-breaks
        order = sorted(range(len(self.doc_ids)), key=self.doc_ids.__getitem__)
        self._id_rank = np.empty(len(order), dtype=np.int64)
        self._id_rank[order] = np.arange(len(order))

    def __len__(self):
        return len(self.doc_ids)

    @property
    def vectors(self) -> dict[str, np.ndarray]:
        return {d: self.matrix[i] for i, d in enumerate(self.doc_ids)}


def _as_matrix(vectors) -> tuple[list[str], np.ndarray]:
    if isinstance(vectors, Mapping):
        ids = list(vectors.keys())
        rows = [np.asarray(vectors[d], dtype=np.float64) for d in ids]
    else:
        ids, mat = vectors
        ids = list(ids)
        rows = list(np.asarray(mat, dtype=np.float64))
    dims = {r.shape for r in rows}
    if len(dims) > 1:
        raise ValueError(f"vector dimension mismatch: {sorted(dims)}")
    if not rows:
        return ids, np.zeros((0, 0))
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate doc_ids")
    return ids, np.vstack(rows)


def build_vector_index(vectors, kind: str = "flat", params: Mapping[str, Any] | None = None) -> VectorIndex:
    """Build an index from ``{doc_id: vector}`` or ``(doc_ids, matrix)``.

    Vectors must share one dimension and have unit L2 norm.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown vector index kind {kind!r}")
    merged = {**DEFAULT_PARAMS[kind], **(params or {})}
    unknown = set(merged) - set(DEFAULT_PARAMS[kind])
    if unknown:
        raise ValueError(f"unknown {kind} parameters: {sorted(unknown)}")
    ids, mat = _as_matrix(vectors)
    if len(ids) and np.any(np.abs(np.linalg.norm(mat, axis=1) - 1.0) > NORM_TOLERANCE):
        raise ValueError("all indexed vectors must have unit L2 norm")
    dim = mat.shape[1] if len(ids) else 0
    structure: Any = None
    if len(ids):
        if kind == "hnsw":
            structure = HNSWGraph(mat, merged["M"], merged["ef_construction"], merged["seed"])
        elif kind == "lsh":
            structure = HyperplaneLSH(mat, merged["nbits"], merged["seed"])
        elif kind == "rp_forest":
            structure = RPForest(mat, merged["n_trees"], merged["leaf_size"], merged["seed"])
    return VectorIndex(kind, dim, ids, mat, merged, structure)


def _rank(index: VectorIndex, rows: np.ndarray, sims: np.ndarray, k: int) -> list[int]:
    order = np.lexsort((index._id_rank[rows], -sims))
    return [int(x) for x in order[:k]]


def vector_search(
    index: VectorIndex, query_vec: np.ndarray, k: int, query_id: str = "", ef_search: int | None = None
) -> RankedList:
    """Top-``k`` documents for a unit query vector; scores are cosines except for
    LSH, whose score is the angle-based cosine estimate from Hamming distance."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(index) == 0:
        return RankedList(query_id, (), index.kind)
    q = np.asarray(query_vec, dtype=np.float64)
    if q.shape != (index.dim,):
        raise ValueError(f"query dim {q.shape} does not match index dim {index.dim}")
    kind = index.kind
    if kind == "flat":
        rows = np.arange(len(index))
    elif kind == "hnsw":
        ef = ef_search if ef_search is not None else index.params["ef_search"]
        rows = np.array(index.structure.search(q, k, ef), dtype=np.int64)
    elif kind == "rp_forest":
        budget = index.params["search_k_factor"] * k * index.params["n_trees"]
        rows = index.structure.candidates(q, budget)
    else:
        lsh: HyperplaneLSH = index.structure
        dist = lsh.hamming(q)
        sims = index.matrix @ q
        order = np.lexsort((index._id_rank, -sims, dist))[:k]
        entries = tuple(
            (index.doc_ids[i], float(math.cos(math.pi * dist[i] / lsh.nbits))) for i in order
        )
        return RankedList(query_id, entries, kind)
    sims = index.matrix[rows] @ q
    top = _rank(index, rows, sims, k)
    entries = tuple((index.doc_ids[rows[i]], float(sims[i])) for i in top)
    return RankedList(query_id, entries, kind)


# ---------------------------------------------------------------- persistence


def save_vector_index(index: VectorIndex, path: str | Path) -> None:
    """Write the index to a single ``.npz`` file (lossless round trip)."""
    arrays: dict[str, np.ndarray] = {"matrix": index.matrix}
    meta: dict[str, Any] = {
        "format_version": INDEX_FORMAT_VERSION,
        "kind": index.kind,
        "dim": index.dim,
        "doc_ids": index.doc_ids,
        "params": index.params,
    }
    s = index.structure
    if isinstance(s, HNSWGraph):
        meta["hnsw"] = s.state()
    elif isinstance(s, HyperplaneLSH):
        arrays["lsh_planes"] = s.planes
    elif isinstance(s, RPForest):
        meta["n_trees"] = len(s.trees)
        for t, tree in enumerate(s.trees):
            for name in ("normals", "left", "right", "items", "starts"):
                arrays[f"tree{t}_{name}"] = getattr(tree, name)
            arrays[f"tree{t}_root"] = np.array([tree.root])
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_vector_index(path: str | Path) -> VectorIndex:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        if meta.get("format_version") != INDEX_FORMAT_VERSION:
            raise ValueError(f"unsupported index format {meta.get('format_version')!r}")
        mat = data["matrix"]
        kind = meta["kind"]
        structure: Any = None
        if kind == "hnsw" and "hnsw" in meta:
            structure = HNSWGraph.from_state(mat, meta["hnsw"])
        elif kind == "lsh" and "lsh_planes" in data:
            structure = HyperplaneLSH(mat, meta["params"]["nbits"], planes=data["lsh_planes"])
        elif kind == "rp_forest" and "n_trees" in meta:
            forest = RPForest.__new__(RPForest)
            forest.leaf_size = meta["params"]["leaf_size"]
            forest.trees = [
                _RPTree(
                    normals=data[f"tree{t}_normals"],
                    left=data[f"tree{t}_left"],
                    right=data[f"tree{t}_right"],
                    items=data[f"tree{t}_items"],
                    starts=data[f"tree{t}_starts"],
                    root=int(data[f"tree{t}_root"][0]),
                )
                for t in range(meta["n_trees"])
            ]
            structure = forest
    return VectorIndex(kind, meta["dim"], meta["doc_ids"], mat, meta["params"], structure)
