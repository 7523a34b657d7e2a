"""The implication preorder, its reversible cliques and atomic steps.

Relations are held as a dense boolean matrix for ingest and counting and
as Python-int bitsets for reachability work on the condensed DAG.
"""
from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)


class GraphError(ValueError):
    pass


def _bits(x: int) -> Iterable[int]:
    while x:
        low = x & -x
        yield low.bit_length() - 1
        x ^= low


def rows_to_bitsets(adj: np.ndarray) -> list[int]:
    packed = np.packbits(adj, axis=1, bitorder="little")
    return [int.from_bytes(r.tobytes(), "little") for r in packed]


@dataclass
class ImplicationGraph:
    """``adj[j, k]`` is true when law ``j`` implies law ``k``."""

    adj: np.ndarray

    @property
    def num_vertices(self) -> int:
        return self.adj.shape[0]

    def num_implications(self) -> int:
        return int(np.count_nonzero(self.adj))

    def successors(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.adj[j])

    def is_transitive(self) -> bool:
        rows = rows_to_bitsets(self.adj)
        for j, r in enumerate(rows):
            for k in _bits(r):
                if rows[k] & ~r:
                    return False
        return True

    def audit_transitivity(self, samples: int = 100_000, seed: int = 0) -> bool:
        """Check random triples ``j => k => l`` for ``j => l``."""
        from . import rng
        src = np.flatnonzero(self.adj.any(axis=1))
        if not len(src):
            return True
        key = rng.stream_key(seed, 0x545249)  # "TRI"
        picks = rng.integers(key, 3 * samples, 1 << 30).reshape(3, samples)
        for a, b, c in picks.T:
            j = int(src[a % len(src)])
            ks = self.successors(j)
            k = int(ks[b % len(ks)])
            ls = self.successors(k)
            if len(ls) and not self.adj[j, ls[c % len(ls)]]:
                return False
        return True

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]], close: bool = False) -> "ImplicationGraph":
        adj = np.zeros((n, n), dtype=bool)
        for j, k in edges:
            adj[j, k] = True
        np.fill_diagonal(adj, True)
        g = cls(adj)
        return transitive_closure(g) if close else g


def transitive_closure(g: ImplicationGraph) -> ImplicationGraph:
    """Reflexive-transitive closure (bitset Warshall)."""
    rows = rows_to_bitsets(g.adj)
    n = len(rows)
    for i in range(n):
        rows[i] |= 1 << i
    for k in range(n):
        bk = 1 << k
        rk = rows[k]
        for i in range(n):
            if rows[i] & bk:
                rows[i] |= rk
    return ImplicationGraph(_bitsets_to_matrix(rows, n))


def _bitsets_to_matrix(rows: Sequence[int], n: int) -> np.ndarray:
    nbytes = (n + 7) // 8
    buf = b"".join(r.to_bytes(nbytes, "little") for r in rows)
    packed = np.frombuffer(buf, dtype=np.uint8).reshape(len(rows), nbytes)
    return np.unpackbits(packed, axis=1, count=n, bitorder="little").astype(bool)


def preorder_from_satisfaction(sat: np.ndarray) -> ImplicationGraph:
    """``j => k`` iff every structure satisfying ``j`` satisfies ``k``.

    ``sat`` is an equations x structures boolean matrix.
    """
    s = sat.astype(np.float64)
    bad = s @ (1.0 - s).T
    return ImplicationGraph(bad == 0)


def load_preorder(path: str | Path, corpus=None, close: bool = False) -> ImplicationGraph:
    """Read ``j k`` lines (``j`` implies ``k``).

    A ``# ids: et`` header switches identifiers from corpus indices to ET
    numbers (which needs ``corpus.et_numbering``).  ``# vertices: n`` sets the
    vertex count when no corpus is given.  Self-loops are added.
    """
    ids = "index"
    n = len(corpus) if corpus is not None else None
    pairs: list[tuple[int, int]] = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if ":" in body:
                key, val = (s.strip() for s in body.split(":", 1))
                if key == "ids":
                    ids = val
                elif key == "vertices" and n is None:
                    n = int(val)
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2 or not all(p.lstrip("-").isdigit() for p in parts):
            raise GraphError(f"{path}:{lineno}: malformed line {raw!r}")
        pairs.append((int(parts[0]), int(parts[1])))
    if ids == "et":
        if corpus is None or not corpus.et_numbering:
            raise GraphError("ET identifiers need a corpus with ET numbering")
        to_idx = {v: k for k, v in corpus.et_numbering.items()}
        try:
            pairs = [(to_idx[a], to_idx[b]) for a, b in pairs]
        except KeyError as exc:
            raise GraphError(f"unknown ET number {exc.args[0]}") from None
    elif ids != "index":
        raise GraphError(f"unknown id scheme {ids!r}")
    if n is None:
        n = 1 + max((max(p) for p in pairs), default=-1)
    for a, b in pairs:
        if not (0 <= a < n and 0 <= b < n):
            raise GraphError(f"identifier out of range in pair ({a}, {b})")
    g = ImplicationGraph.from_edges(n, pairs, close=close)
    log.info("loaded %d implications on %d vertices", g.num_implications(), n)
    return g


def write_preorder(g: ImplicationGraph, path: str | Path, strict_only: bool = False) -> None:
    with open(path, "w") as fh:
        fh.write(f"# ids: index\n# vertices: {g.num_vertices}\n")
        js, ks = np.nonzero(g.adj)
        for j, k in zip(js.tolist(), ks.tolist()):
            if not (strict_only and j == k):
                fh.write(f"{j} {k}\n")


def import_dense_matrix(path: str | Path) -> ImplicationGraph:
    """Build a graph from a square matrix of outcomes (JSON list of lists or CSV).

    Entries count as implications when they are ``1``/``true`` or a string
    ending in ``_true`` (e.g. ``explicit_proof_true``).
    """
    import json
    text = Path(path).read_text()
    try:
        rows = json.loads(text)
    except json.JSONDecodeError:
        rows = [r.split(",") for r in text.splitlines() if r.strip()]

    def truth(v) -> bool:
        if isinstance(v, bool):
            return v
        if isinstance(v, (int, float)):
            return v != 0
        s = str(v).strip().strip('"').lower()
        return s in ("1", "true") or s.endswith("_true")

    adj = np.array([[truth(v) for v in r] for r in rows], dtype=bool)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise GraphError("outcome matrix must be square")
    np.fill_diagonal(adj, True)
    return ImplicationGraph(adj)


# -------------------------------------------------------------- condensation

def strongly_connected_components(n: int, succ) -> list[int]:
    """Iterative Tarjan; returns component ids (in order of completion).

    ``succ(v)`` yields the successors of ``v``.
    """
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    comp = [-1] * n
    stack: list[int] = []
    counter = 0
    ncomp = 0
    for root in range(n):
        if index[root] >= 0:
            continue
        work = [(root, iter(succ(root)))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if index[w] < 0:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, iter(succ(w))))
                    advanced = True
                    break
                if on_stack[w] and index[w] < low[v]:
                    low[v] = index[w]
            if advanced:
                continue
            work.pop()
            if work:
                u = work[-1][0]
                if low[v] < low[u]:
                    low[u] = low[v]
            if low[v] == index[v]:
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp[w] = ncomp
                    if w == v:
                        break
                ncomp += 1
    return comp


@dataclass
class Condensation:
    """Cliques of mutually implying laws and the strict/atomic DAG between them.

    Cliques are numbered by their smallest member.  ``reach[c]`` is the bitset
    of cliques strictly implied by ``c``; ``atomic[c]`` its transitive reduction.
    """

    clique_of: np.ndarray
    cliques: list[list[int]]
    reach: list[int]
    atomic: list[int]
    direct: list[int] = field(repr=False, default_factory=list)

    @property
    def num_cliques(self) -> int:
        return len(self.cliques)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(c) for c in self.cliques], dtype=np.int64)

    def dag_edges(self) -> list[tuple[int, int]]:
        return [(a, b) for a, r in enumerate(self.reach) for b in _bits(r)]

    def atomic_edges(self) -> list[tuple[int, int]]:
        return [(a, b) for a, r in enumerate(self.atomic) for b in _bits(r)]

    def num_dag_edges(self) -> int:
        return sum(r.bit_count() for r in self.reach)

    def num_atomic_edges(self) -> int:
        return sum(r.bit_count() for r in self.atomic)

    def vertex_atomic_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """All vertex pairs ``(j, k)`` whose cliques form an atomic edge."""
        src, dst = [], []
        for a, b in self.atomic_edges():
            ca, cb = self.cliques[a], self.cliques[b]
            src.append(np.repeat(ca, len(cb)))
            dst.append(np.tile(cb, len(ca)))
        if not src:
            return np.zeros(0, np.int64), np.zeros(0, np.int64)
        return np.concatenate(src), np.concatenate(dst)


def _topological(n: int, succ: list[int]) -> list[int]:
    indeg = [0] * n
    for r in succ:
        for b in _bits(r):
            indeg[b] += 1
    ready = [v for v in range(n) if indeg[v] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        v = heapq.heappop(ready)
        order.append(v)
        for b in _bits(succ[v]):
            indeg[b] -= 1
            if indeg[b] == 0:
                heapq.heappush(ready, b)
    if len(order) != n:
        raise GraphError("condensed graph has a cycle")
    return order


def condense(g: ImplicationGraph) -> Condensation:
    n = g.num_vertices
    rows = rows_to_bitsets(g.adj)
    raw = strongly_connected_components(n, lambda v: _bits(rows[v]))
    # renumber cliques by smallest member
    first: dict[int, int] = {}
    for v in range(n):
        first.setdefault(raw[v], len(first))
    clique_of = np.array([first[raw[v]] for v in range(n)], dtype=np.int64)
    c = len(first)
    cliques: list[list[int]] = [[] for _ in range(c)]
    for v in range(n):
        cliques[clique_of[v]].append(v)

    # direct edges between cliques
    direct = [0] * c
    member_bits = [0] * c
    for v in range(n):
        member_bits[clique_of[v]] |= 1 << v
    for a, members in enumerate(cliques):
        out = 0
        for v in members:
            out |= rows[v]
        out &= ~member_bits[a]
        cb = 0
        for w in _bits(out):
            cb |= 1 << int(clique_of[w])
        direct[a] = cb

    order = _topological(c, direct)
    reach = [0] * c
    for a in reversed(order):
        r = direct[a]
        for b in _bits(direct[a]):
            r |= reach[b]
        reach[a] = r
    atomic = [0] * c
    for a in range(c):
        via = 0
        for b in _bits(direct[a]):
            via |= reach[b]
        atomic[a] = reach[a] & ~via
    return Condensation(clique_of, cliques, reach, atomic, direct)


@dataclass(frozen=True)
class GraphStats:
    vertices: int
    implications: int
    strict: int
    reversible: int
    cliques: int
    dag_edges: int
    atomic_edges: int
    vertex_atomic: int
    self_pairs: str = "include"

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def vertex_atomic_count(c: Condensation) -> int:
    sizes = c.sizes
    return int(sum(sizes[a] * sizes[b] for a, b in c.atomic_edges()))


def graph_stats(g: ImplicationGraph, c: Condensation, self_pairs: str = "include") -> GraphStats:
    """Implication counts.  With ``self_pairs='exclude'`` the ``n`` self-pairs are
    moved from the reversible count to the strict count."""
    if self_pairs not in ("include", "exclude"):
        raise ValueError("self_pairs must be 'include' or 'exclude'")
    sizes = c.sizes
    total = g.num_implications()
    reversible = int((sizes ** 2).sum())
    strict = total - reversible
    if self_pairs == "exclude":
        reversible -= g.num_vertices
        strict += g.num_vertices
    return GraphStats(g.num_vertices, total, strict, reversible, c.num_cliques,
                      c.num_dag_edges(), c.num_atomic_edges(), vertex_atomic_count(c),
                      self_pairs)


# ----------------------------------------------------------------- paths

def longest_paths(c: Condensation, top: int = 10) -> list[list[int]]:
    """The ``top`` longest maximal atomic paths (source to sink) in the clique DAG.

    Ordered by edge count descending, ties by lexicographic clique sequence.
    """
    n = c.num_cliques
    order = _topological(n, c.atomic)
    has_pred = [False] * n
    for r in c.atomic:
        for b in _bits(r):
            has_pred[b] = True
    # best[v]: up to `top` entries (-edges, path) of paths from v to a sink
    best: list[list[tuple[int, tuple[int, ...]]]] = [[] for _ in range(n)]
    for v in reversed(order):
        succ = list(_bits(c.atomic[v]))
        if not succ:
            best[v] = [(0, (v,))]
        else:
            cand = [(neg - 1, (v,) + path) for s in succ for neg, path in best[s]]
            best[v] = heapq.nsmallest(top, cand)
    pool = []
    for v in range(n):
        if not has_pred[v]:
            pool.extend(best[v])
    return [list(p) for _, p in heapq.nsmallest(top, pool)]


# --------------------------------------------------------------- parallelism

@dataclass(frozen=True)
class ParallelPair:
    first: tuple[int, int]
    second: tuple[int, int]
    angle: float
    length_diff: float
    score: float


def clique_centers(c: Condensation, coords: np.ndarray) -> np.ndarray:
    return np.array([coords[m].mean(axis=0) for m in c.cliques])


def parallel_edge_candidates(c: Condensation, emb, angle_tol: float = 0.05,
                             length_tol: float = 0.05, limit: int | None = None) -> list[ParallelPair]:
    """Pairs of atomic clique edges with nearly equal direction and length.

    Length difference is relative to the longer edge.  Ranked by
    ``angle/angle_tol + length_diff/length_tol``.
    """
    coords = np.asarray(getattr(emb, "coords", emb), dtype=np.float64)
    centers = clique_centers(c, coords)
    edges = c.atomic_edges()
    if len(edges) < 2:
        return []
    e = np.array(edges)
    vec = centers[e[:, 1]] - centers[e[:, 0]]
    length = np.linalg.norm(vec, axis=1)
    keep = length > 0
    e, vec, length = e[keep], vec[keep], length[keep]
    unit = vec / length[:, None]
    cos_tol = math.cos(angle_tol)
    out: list[ParallelPair] = []
    block = 1024
    for s in range(0, len(e), block):
        dots = unit[s:s + block] @ unit.T
        ii, jj = np.nonzero(dots >= cos_tol - 1e-12)
        ii = ii + s
        sel = jj > ii
        ii, jj = ii[sel], jj[sel]
        ldiff = np.abs(length[ii] - length[jj]) / np.maximum(length[ii], length[jj])
        ok = ldiff <= length_tol
        for a, b, d in zip(ii[ok], jj[ok], ldiff[ok]):
            ang = math.acos(min(1.0, max(-1.0, float(unit[a] @ unit[b]))))
            score = ang / angle_tol if angle_tol > 0 else 0.0
            score += float(d) / length_tol if length_tol > 0 else 0.0
            out.append(ParallelPair(tuple(map(int, e[a])), tuple(map(int, e[b])), ang, float(d), score))
    out.sort(key=lambda p: (p.score, p.first, p.second))
    return out[:limit] if limit else out
