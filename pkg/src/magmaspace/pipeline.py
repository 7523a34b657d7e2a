"""Staged pipeline: corpus -> sample -> matrix -> pca -> graph -> geometry.

Every stage writes into ``<out>/<stage>/`` together with a ``stage.json``
recording the hash of the configuration subset it depends on (plus its
upstream hashes).  A stage whose stored hash matches is loaded instead of
recomputed; a mismatch is logged as stale and the stage is rebuilt.
"""
from __future__ import annotations

import ast
import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import Corpus, enumerate_corpus, load_et_numbering, self_conjugate_count
from .geometry import (clique_geometry, cross_clique_edge_matrix, edge_lengths, write_scene)
from .graph import (condense, graph_stats, load_preorder, longest_paths,
                    preorder_from_satisfaction, write_preorder)
from .magma import all_magmas, read_sample, sample_magmas, write_sample
from .pca import LatentEmbedding, fix_signs, pca_embed, pearson, regress
from .stone import (StoneConfig, build_feature_matrix, interference_spectrum, load_binary,
                    row_statistics, satisfies, save_binary, spectrum, write_interference_csv,
                    write_spectrum_csv)

log = logging.getLogger(__name__)

STAGES = ("corpus", "sample", "matrix", "pca", "graph", "geometry")


class PipelineError(RuntimeError):
    pass


@dataclass
class PipelineConfig:
    max_ops: int = 4
    et_numbering: str = ""
    n: int = 200
    N: int = 4
    seed: int = 1
    symmetric: bool = True
    exact_budget: int = 2 ** 22
    mc_samples: int = 2 ** 16
    pca_k: int = 3
    centering: str = "columns"
    graph_path: str = ""
    close_graph: bool = False
    synthetic_max_ops: int = 2
    synthetic_sizes: tuple = (2, 3)
    self_pairs: str = "include"
    longest_top: int = 5
    out_dir: str = "out"
    stages: tuple = STAGES
    threads: int = 0

    def validate(self) -> None:
        errs = []
        if not 0 <= self.max_ops <= 6:
            errs.append("max_ops must be in 0..6")
        if self.n < 1 or not 1 <= self.N <= 16:
            errs.append("need n >= 1 and 1 <= N <= 16")
        if self.symmetric and self.n % 2:
            errs.append("symmetric samples need even n")
        if not 1 <= self.pca_k <= 10:
            errs.append("pca_k must be in 1..10")
        if self.centering not in ("columns", "rows"):
            errs.append("centering must be 'columns' or 'rows'")
        if self.self_pairs not in ("include", "exclude"):
            errs.append("self_pairs must be 'include' or 'exclude'")
        if any(s not in STAGES for s in self.stages):
            errs.append(f"stages must be drawn from {STAGES}")
        if any(s > 3 for s in self.synthetic_sizes):
            errs.append("synthetic_sizes are exhaustive and limited to <= 3")
        if errs:
            raise PipelineError("; ".join(errs))

    def subset(self, stage: str) -> dict:
        keys = {
            "corpus": ("max_ops", "et_numbering"),
            "sample": ("n", "N", "seed", "symmetric"),
            "matrix": ("exact_budget", "mc_samples", "seed"),
            "pca": ("pca_k", "centering"),
            "graph": ("graph_path", "close_graph", "synthetic_max_ops", "synthetic_sizes"),
            "geometry": ("self_pairs", "longest_top"),
        }[stage]
        d = {k: getattr(self, k) for k in keys}
        for k in ("et_numbering", "graph_path"):
            if d.get(k):
                d[k + "_sha256"] = _file_hash(d[k])
        return d

    def as_dict(self) -> dict:
        d = asdict(self)
        d["synthetic_sizes"] = list(self.synthetic_sizes)
        d["stages"] = list(self.stages)
        return d

    def hash(self) -> str:
        d = self.as_dict()
        for k in ("out_dir", "threads", "stages"):
            d.pop(k)
        return _digest(d)


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


def _file_hash(path: str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def _parse_value(text: str):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text.strip("'\"")


def load_config(path: str | Path, **overrides) -> PipelineConfig:
    """Read ``key = value`` lines (``#`` comments, ``[section]`` headers ignored)."""
    known = {f.name for f in fields(PipelineConfig)}
    values: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line or line.startswith("["):
            continue
        if "=" not in line:
            raise PipelineError(f"{path}:{lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise PipelineError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _parse_value(val)
    values.update({k: v for k, v in overrides.items() if v is not None})
    for k in ("stages", "synthetic_sizes"):
        if k in values and isinstance(values[k], (list, str)):
            v = values[k]
            values[k] = tuple(v.split(",") if isinstance(v, str) else v)
    cfg = PipelineConfig(**values)
    cfg.validate()
    return cfg


def _header(cfg: PipelineConfig, stage_hash: str) -> str:
    return f"magmaspace {__version__} config {cfg.hash()} stage {stage_hash}"


def _r(x, digits: int = 12):
    """Round floats for reports so tiny BLAS-level noise never shows up."""
    if isinstance(x, float):
        return float(f"{x:.{digits}g}")
    if isinstance(x, dict):
        return {k: _r(v, digits) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_r(v, digits) for v in x]
    if isinstance(x, np.generic):
        return _r(x.item(), digits)
    return x


class Pipeline:
    def __init__(self, cfg: PipelineConfig):
        cfg.validate()
        self.cfg = cfg
        self.out = Path(cfg.out_dir)
        self.status: dict[str, str] = {}
        self.hashes: dict[str, str] = {}
        self.report: dict = {}

    # -------------------------------------------------------------- caching
    def _stage_hash(self, stage: str, deps: tuple[str, ...]) -> str:
        h = _digest({"stage": stage, "config": self.cfg.subset(stage),
                     "deps": [self.hashes[d] for d in deps], "version": __version__})
        self.hashes[stage] = h
        return h

    def _cached(self, stage: str, h: str) -> bool:
        meta = self.out / stage / "stage.json"
        if not meta.exists():
            return False
        stored = json.loads(meta.read_text()).get("hash")
        if stored == h:
            self.status[stage] = "cached"
            return True
        log.warning("stage %s: stale cache (stored %s, expected %s); recomputing", stage, stored, h)
        self.status[stage] = "stale-recomputed"
        return False

    def _done(self, stage: str, h: str, summary: dict) -> None:
        self.status.setdefault(stage, "computed")
        stamp = f"# {_header(self.cfg, h)}\n"
        for p in sorted((self.out / stage).iterdir()):
            if p.suffix in (".txt", ".csv"):
                text = p.read_text()
                if not text.startswith("# magmaspace "):
                    p.write_text(stamp + text)
        meta = {"stage": stage, "hash": h, "config_hash": self.cfg.hash(),
                "version": __version__, "summary": _r(summary)}
        (self.out / stage / "stage.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    def _dir(self, stage: str) -> Path:
        d = self.out / stage
        d.mkdir(parents=True, exist_ok=True)
        return d

    def _summary(self, stage: str) -> dict:
        return json.loads((self.out / stage / "stage.json").read_text())["summary"]

    # --------------------------------------------------------------- stages
    def corpus(self) -> Corpus:
        h = self._stage_hash("corpus", ())
        path = self._dir("corpus") / "corpus.txt"
        if self._cached("corpus", h):
            c = Corpus.read(path)
            c.max_ops = self.cfg.max_ops
        else:
            c = enumerate_corpus(self.cfg.max_ops)
            c.write(path)
            self._done("corpus", h, {
                "size": len(c),
                "signature_histogram": {f"{a},{b}": v for (a, b), v in
                                        sorted(c.signature_histogram().items())},
                "self_conjugate": self_conjugate_count(c),
            })
        if self.cfg.et_numbering:
            c = load_et_numbering(c, self.cfg.et_numbering)
        self.report["corpus"] = self._summary("corpus")
        return c

    def sample(self):
        h = self._stage_hash("sample", ())
        path = self._dir("sample") / "magmas.txt"
        if self._cached("sample", h):
            s = read_sample(path)
        else:
            cfg = self.cfg
            s = sample_magmas(cfg.n, cfg.N, cfg.seed, cfg.symmetric)
            write_sample(s, path)
            self._done("sample", h, {"n": cfg.n, "N": cfg.N, "seed": cfg.seed,
                                     "symmetric": cfg.symmetric})
        self.report["sample"] = self._summary("sample")
        return s

    def matrix(self, corpus: Corpus, sample):
        h = self._stage_hash("matrix", ("corpus", "sample"))
        path = self._dir("matrix") / "features.bin"
        if self._cached("matrix", h):
            f = load_binary(path)
            f.equations = list(corpus.equations)
        else:
            cfg = self.cfg
            threads = cfg.threads or os.cpu_count() or 1
            f = build_feature_matrix(corpus.equations, sample,
                                     StoneConfig(cfg.exact_budget, cfg.mc_samples, cfg.seed, threads))
            save_binary(f, path)
            with open(self.out / "matrix" / "features.csv", "w") as fh:
                for row in f.values:
                    fh.write(",".join(f"{v:.12g}" for v in row) + "\n")
            self._done("matrix", h, {"shape": list(f.shape), "mode": f.mode()})
        self.report["matrix"] = self._summary("matrix")
        return f

    def pca(self, corpus: Corpus, f) -> LatentEmbedding:
        h = self._stage_hash("pca", ("matrix",))
        d = self._dir("pca")
        emb = fix_signs(pca_embed(f, self.cfg.pca_k, self.cfg.centering), f, corpus.equations)
        if self._cached("pca", h):
            cached = np.loadtxt(d / "embedding.csv", delimiter=",", skiprows=2)[:, 1:]
            if not np.allclose(cached, emb.coords, atol=1e-9):
                raise PipelineError("cached embedding disagrees with recomputation")
        else:
            mean, var = row_statistics(f)
            conj = corpus.conjugate_index()
            z_err = float(np.abs(emb.coords[conj, 2] + emb.coords[:, 2]).max()) if emb.k > 2 else None
            sx, ix, rx = regress(emb.coords[:, 0], mean)
            summary = {
                "singular_values": emb.singular_values.tolist(),
                "explained_variance_ratio": emb.explained_variance_ratio.tolist(),
                "iterations": emb.iterations,
                "argmax_X": int(np.argmax(emb.coords[:, 0])),
                "regression_X_expectation": {"slope": sx, "intercept": ix, "r2": rx,
                                             "pearson": pearson(emb.coords[:, 0], mean)},
                "conjugate_Z_reflection_max_error": z_err,
            }
            if emb.k > 1:
                sy, iy, ry = regress(emb.coords[:, 1], var)
                summary["regression_Y_variance"] = {"slope": sy, "intercept": iy, "r2": ry,
                                                    "pearson": pearson(emb.coords[:, 1], var)}
            with open(d / "embedding.csv", "w") as fh:
                fh.write("index," + ",".join("XYZ"[i] if i < 3 else f"PC{i + 1}"
                                             for i in range(emb.k)) + "\n")
                for i, row in enumerate(emb.coords):
                    fh.write(f"{i}," + ",".join(f"{v:.12g}" for v in row) + "\n")
            self._done("pca", h, summary)
        self.report["pca"] = self._summary("pca")
        return emb

    def graph_vertices(self, corpus: Corpus) -> np.ndarray:
        if self.cfg.graph_path:
            return np.arange(len(corpus))
        return np.array([i for i, e in enumerate(corpus) if e.op_total <= self.cfg.synthetic_max_ops])

    def graph(self, corpus: Corpus):
        h = self._stage_hash("graph", ("corpus",))
        d = self._dir("graph")
        verts = self.graph_vertices(corpus)
        pre = d / "preorder.txt"
        if self._cached("graph", h):
            g = load_preorder(pre)
        else:
            if self.cfg.graph_path:
                g = load_preorder(self.cfg.graph_path, corpus, close=self.cfg.close_graph)
            else:
                tables = [np.stack([m.table for m in all_magmas(s)]) for s in self.cfg.synthetic_sizes]
                sat = np.array([np.concatenate([satisfies(corpus[i], t) for t in tables])
                                for i in verts])
                g = preorder_from_satisfaction(sat)
            write_preorder(g, pre)
        c = condense(g)
        if self.status.get("graph") != "cached":
            stats = graph_stats(g, c, self.cfg.self_pairs).as_dict()
            stats["source"] = "file" if self.cfg.graph_path else "synthetic"
            stats["transitive"] = g.is_transitive() if g.num_vertices <= 2000 else g.audit_transitivity()
            self._done("graph", h, stats)
        self.report["graph"] = self._summary("graph")
        return g, c, verts

    def geometry(self, emb: LatentEmbedding, g, c, verts):
        h = self._stage_hash("geometry", ("pca", "graph"))
        d = self._dir("geometry")
        if self._cached("geometry", h):
            self.report["geometry"] = self._summary("geometry")
            return
        coords = emb.coords[verts]
        es = edge_lengths(coords, g, c, self.cfg.self_pairs)
        es.write_csv(d / "edge_stats.csv")
        geo = clique_geometry(coords, c)
        geo.write_csv(d / "cliques.csv")
        cross_clique_edge_matrix(g, c, self.cfg.self_pairs).write_csv(d / "cross_clique.csv")
        write_scene(coords, c, d / "scene.csv")
        paths = longest_paths(c, self.cfg.longest_top)
        self._done("geometry", h, {
            "edge_stats": es.table,
            "ratios": es.ratios(),
            "clique_size_histogram": {str(k): v for k, v in geo.size_histogram.items()},
            "longest_paths": [[int(verts[c.cliques[q][0]]) for q in p] for p in paths],
        })
        self.report["geometry"] = self._summary("geometry")

    # ------------------------------------------------------------------ run
    def run(self) -> dict:
        self.out.mkdir(parents=True, exist_ok=True)
        want = set(self.cfg.stages)
        corpus = self.corpus()
        sample = f = emb = g = None
        if want & {"sample", "matrix", "pca", "geometry"}:
            sample = self.sample()
        if want & {"matrix", "pca", "geometry"}:
            f = self.matrix(corpus, sample)
        if want & {"pca", "geometry"}:
            emb = self.pca(corpus, f)
        if want & {"graph", "geometry"}:
            g, c, verts = self.graph(corpus)
        if "geometry" in want:
            self.geometry(emb, g, c, verts)
        report = {"version": __version__, "config_hash": self.cfg.hash(),
                  "config": {k: v for k, v in self.cfg.as_dict().items()
                             if k not in ("out_dir", "threads")},
                  **self.report}
        text = json.dumps(_r(report), indent=2, sort_keys=True) + "\n"
        (self.out / "report.json").write_text(text)
        for s, st in self.status.items():
            log.info("stage %-8s %s", s, st)
        return report


def run_pipeline(cfg: PipelineConfig) -> dict:
    return Pipeline(cfg).run()


# --------------------------------------------------------------- plot data

PLOT_KINDS = ("spectrum", "interference", "scene", "regression", "scree")


def emit_plot_data(out_dir: str | Path, kind: str, eq: int = 0, other: int = 1,
                   bins: int = 256) -> list[Path]:
    """Export the CSV data behind a figure from an existing pipeline output."""
    out = Path(out_dir)
    if not (out / "report.json").exists():
        raise PipelineError(f"{out} holds no pipeline output; run the pipeline first")
    dest = out / "plots"
    dest.mkdir(exist_ok=True)

    def need(p: Path) -> Path:
        if not p.exists():
            raise PipelineError(f"missing artifact {p}; run the pipeline first")
        return p

    if kind == "scree":
        meta = json.loads(need(out / "pca" / "stage.json").read_text())["summary"]
        p = dest / "scree.csv"
        with open(p, "w") as fh:
            fh.write("component,singular_value,explained_variance_ratio\n")
            for i, (s, r) in enumerate(zip(meta["singular_values"], meta["explained_variance_ratio"]), 1):
                fh.write(f"{i},{s!r},{r!r}\n")
        return [p]
    if kind in ("spectrum", "interference", "regression"):
        f = load_binary(need(out / "matrix" / "features.bin"))
        if kind == "spectrum":
            s = spectrum(f, eq)
            p1, p2 = dest / f"spectrum_{eq}.csv", dest / f"spectrum_{eq}_hist.csv"
            write_spectrum_csv(s, p1)
            h = s.histogram(bins)
            with open(p2, "w") as fh:
                fh.write("bin_low,bin_high,count\n")
                for i, cnt in enumerate(h.tolist()):
                    fh.write(f"{i / bins!r},{(i + 1) / bins!r},{cnt}\n")
            return [p1, p2]
        if kind == "interference":
            p = dest / f"interference_{eq}_{other}.csv"
            write_interference_csv(interference_spectrum(f, eq, other), p)
            return [p]
        emb = np.loadtxt(need(out / "pca" / "embedding.csv"), delimiter=",", skiprows=2)
        mean, var = row_statistics(f)
        p = dest / "regression.csv"
        with open(p, "w") as fh:
            fh.write("index,X,expectation,Y,variance\n")
            for i in range(len(mean)):
                y = emb[i, 2] if emb.shape[1] > 2 else float("nan")
                fh.write(f"{i},{float(emb[i, 1])!r},{float(mean[i])!r},{float(y)!r},{float(var[i])!r}\n")
        return [p]
    if kind == "scene":
        p = need(out / "geometry" / "scene.csv")
        return [p]
    raise PipelineError(f"unknown plot kind {kind!r}; choose from {PLOT_KINDS}")
