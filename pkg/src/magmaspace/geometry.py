"""Geometry of the implication graph inside the latent space."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import Condensation, ImplicationGraph, clique_centers

EDGE_CLASSES = ("reversible", "atomic", "strict")
STAT_NAMES = ("count", "mean", "std", "min", "25%", "50%", "75%", "max")


def nearest_rank(sorted_vals: np.ndarray, q: float) -> float:
    n = len(sorted_vals)
    return float(sorted_vals[max(math.ceil(q * n), 1) - 1])


def describe(lengths: np.ndarray) -> dict[str, float]:
    """Count, mean, population std, min, nearest-rank quartiles and max."""
    n = len(lengths)
    if n == 0:
        return {"count": 0, **{k: float("nan") for k in STAT_NAMES[1:]}}
    v = np.sort(lengths)
    mean = float(v.sum() / n)
    return {
        "count": n,
        "mean": mean,
        "std": float(np.sqrt(((v - mean) ** 2).sum() / n)),
        "min": float(v[0]),
        "25%": nearest_rank(v, 0.25),
        "50%": nearest_rank(v, 0.50),
        "75%": nearest_rank(v, 0.75),
        "max": float(v[-1]),
    }


@dataclass(frozen=True)
class EdgeStats:
    table: dict[str, dict[str, float]]
    self_pairs: str

    def mean(self, cls: str) -> float:
        return self.table[cls]["mean"]

    def ratios(self) -> dict[str, float]:
        r = self.mean("reversible")
        return {"atomic/reversible": self.mean("atomic") / r if r else float("inf"),
                "strict/reversible": self.mean("strict") / r if r else float("inf")}

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            fh.write("statistic," + ",".join(EDGE_CLASSES) + "\n")
            for s in STAT_NAMES:
                vals = [self.table[c][s] for c in EDGE_CLASSES]
                fh.write(s + "," + ",".join(repr(v) if s != "count" else str(v) for v in vals) + "\n")


def edge_pairs(g: ImplicationGraph, c: Condensation, self_pairs: str = "include"):
    """Vertex pairs of each edge class as ``{class: (src, dst)}``."""
    same = c.clique_of[:, None] == c.clique_of[None, :]
    eye = np.eye(g.num_vertices, dtype=bool)
    if self_pairs == "include":
        rev = same
        strict = g.adj & ~same
    elif self_pairs == "exclude":
        rev = same & ~eye
        strict = (g.adj & ~same) | eye
    else:
        raise ValueError("self_pairs must be 'include' or 'exclude'")
    return {
        "reversible": np.nonzero(rev),
        "atomic": c.vertex_atomic_pairs(),
        "strict": np.nonzero(strict),
    }


def edge_lengths(coords, g: ImplicationGraph, c: Condensation,
                 self_pairs: str = "include") -> EdgeStats:
    """Euclidean edge-length statistics per class.

    ``coords`` may be a LatentEmbedding or any (vertices x dims) array, e.g. the
    full feature matrix for comparison in the original space.
    """
    pts = np.asarray(getattr(coords, "coords", coords), dtype=np.float64)
    table = {}
    for cls, (a, b) in edge_pairs(g, c, self_pairs).items():
        d = np.linalg.norm(pts[a] - pts[b], axis=1) if len(a) else np.zeros(0)
        table[cls] = describe(d)
    return EdgeStats(table, self_pairs)


@dataclass(frozen=True)
class CliqueGeometry:
    members: list[list[int]]
    centers: np.ndarray
    spreads: np.ndarray       # mean member-to-center distance
    radii: np.ndarray         # proportional to clique size
    size_histogram: dict[int, int]

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            fh.write("clique,size,x,y,z,spread,radius,members\n")
            for i, m in enumerate(self.members):
                x, y, z = (self.centers[i].tolist() + [0.0, 0.0, 0.0])[:3]
                fh.write(f"{i},{len(m)},{x!r},{y!r},{z!r},{float(self.spreads[i])!r},"
                         f"{float(self.radii[i])!r},{' '.join(map(str, m))}\n")


def clique_geometry(coords, c: Condensation, max_radius: float = 1.0) -> CliqueGeometry:
    pts = np.asarray(getattr(coords, "coords", coords), dtype=np.float64)
    centers = clique_centers(c, pts)
    spreads = np.array([np.linalg.norm(pts[m] - centers[i], axis=1).mean()
                        for i, m in enumerate(c.cliques)])
    sizes = c.sizes
    radii = max_radius * sizes / sizes.max()
    hist: dict[int, int] = {}
    for s in sizes.tolist():
        hist[s] = hist.get(s, 0) + 1
    return CliqueGeometry([list(m) for m in c.cliques], centers, spreads, radii,
                          dict(sorted(hist.items(), reverse=True)))


@dataclass(frozen=True)
class CrossCliqueMatrix:
    sizes: list[int]          # clique-size classes, ascending
    counts: np.ndarray        # counts[i, j]: strict edges from size sizes[i] to sizes[j]

    def total(self) -> int:
        return int(self.counts.sum())

    def entry(self, s: int, t: int) -> int:
        return int(self.counts[self.sizes.index(s), self.sizes.index(t)])

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            fh.write("from\\to," + ",".join(map(str, self.sizes)) + "\n")
            for s, row in zip(self.sizes, self.counts.tolist()):
                fh.write(f"{s}," + ",".join(map(str, row)) + "\n")


def cross_clique_edge_matrix(g: ImplicationGraph, c: Condensation,
                             self_pairs: str = "include") -> CrossCliqueMatrix:
    """Vertex-level strict implications aggregated by (source, target) clique size."""
    order = np.argsort(c.clique_of, kind="stable")
    sizes = c.sizes
    starts = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    A = g.adj[order][:, order].astype(np.int64)
    K = np.add.reduceat(np.add.reduceat(A, starts, axis=0), starts, axis=1)
    np.fill_diagonal(K, 0)
    classes = sorted(set(sizes.tolist()))
    cls_of = np.array([classes.index(s) for s in sizes.tolist()])
    M = np.zeros((len(classes), len(classes)), dtype=np.int64)
    np.add.at(M, (cls_of[:, None], cls_of[None, :]), K)
    if self_pairs == "exclude":
        for s in sizes.tolist():
            M[classes.index(s), classes.index(s)] += s
    return CrossCliqueMatrix(classes, M)


def write_scene(coords, c: Condensation, path: str | Path, max_radius: float = 1.0) -> None:
    """Balls at clique centers and arrows along atomic clique edges."""
    geo = clique_geometry(coords, c, max_radius)
    with open(path, "w") as fh:
        fh.write("kind,x1,y1,z1,x2,y2,z2,radius\n")
        for ctr, r in zip(geo.centers.tolist(), geo.radii.tolist()):
            x, y, z = (ctr + [0.0, 0.0])[:3]
            fh.write(f"ball,{x!r},{y!r},{z!r},,,,{r!r}\n")
        for a, b in c.atomic_edges():
            p = (geo.centers[a].tolist() + [0.0, 0.0])[:3]
            q = (geo.centers[b].tolist() + [0.0, 0.0])[:3]
            fh.write(f"arrow,{p[0]!r},{p[1]!r},{p[2]!r},{q[0]!r},{q[1]!r},{q[2]!r},\n")
