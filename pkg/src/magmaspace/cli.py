"""Command line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 verification failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import Corpus, CorpusError, enumerate_corpus, load_et_numbering, self_conjugate_count
from .geometry import clique_geometry, cross_clique_edge_matrix, edge_lengths, write_scene
from .graph import (GraphError, condense, graph_stats, import_dense_matrix, load_preorder,
                    longest_paths, parallel_edge_candidates, write_preorder)
from .herbrand import HerbrandError, read_proof, replay, verdict_json, verify
from .magma import MagmaError, read_sample, sample_magmas, write_sample
from .pca import PCAError, fix_signs, pca_embed
from .pipeline import PLOT_KINDS, PipelineConfig, PipelineError, emit_plot_data, load_config, run_pipeline
from .stone import (BudgetExceeded, StoneConfig, build_feature_matrix, load_binary, save_binary,
                    spectrum, write_csv, write_spectrum_csv)
from .terms import ParseError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VERIFY = 0, 1, 2, 3
DATA_ERRORS = (ParseError, CorpusError, MagmaError, GraphError, HerbrandError, PipelineError,
               PCAError, BudgetExceeded, OSError, ValueError, IndexError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _threads(args) -> int:
    return args.threads or os.cpu_count() or 1


def _emit(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load_corpus(args) -> Corpus:
    c = Corpus.read(args.corpus) if args.corpus else enumerate_corpus(args.max_ops)
    if getattr(args, "et_numbering", None):
        c = load_et_numbering(c, args.et_numbering)
    return c


def read_embedding(path: str | Path) -> np.ndarray:
    rows = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    if not rows or not rows[0].startswith("index"):
        raise ValueError(f"{path}: expected an 'index,...' header")
    return np.array([[float(v) for v in r.split(",")[1:]] for r in rows[1:]])


def _load_graph(args):
    if args.dense:
        return import_dense_matrix(args.preorder)
    corpus = None
    if args.et_numbering:
        corpus = load_et_numbering(_load_corpus(args), args.et_numbering)
    return load_preorder(args.preorder, corpus, close=args.close)


# ------------------------------------------------------------ subcommands

def cmd_corpus(args) -> int:
    c = enumerate_corpus(args.max_ops)
    if args.et_numbering:
        c = load_et_numbering(c, args.et_numbering)
    if args.out:
        c.write(args.out, f"magmaspace {__version__} corpus max_ops={args.max_ops}")
    hist = {f"{a},{b}": v for (a, b), v in sorted(c.signature_histogram().items())}
    _emit({"size": len(c), "self_conjugate": self_conjugate_count(c),
           "signature_histogram": hist}, args.json)
    return EXIT_OK


def cmd_sample(args) -> int:
    s = sample_magmas(args.n, args.N, args.seed, args.symmetric)
    write_sample(s, args.out)
    print(f"wrote {len(s)} magmas of size {args.N} to {args.out}")
    return EXIT_OK


def cmd_stone(args) -> int:
    c = _load_corpus(args)
    s = read_sample(args.sample)
    f = build_feature_matrix(c.equations, s, StoneConfig(args.exact_budget, args.mc_samples,
                                                         args.seed, _threads(args)))
    if args.out:
        save_binary(f, args.out)
    if args.csv:
        write_csv(f, args.csv)
    if args.spectrum is not None:
        write_spectrum_csv(spectrum(f, args.spectrum), args.spectrum_out or f"spectrum_{args.spectrum}.csv")
    print(f"feature matrix {f.shape[0]}x{f.shape[1]} ({f.mode()})", file=sys.stderr)
    return EXIT_OK


def cmd_pca(args) -> int:
    f = load_binary(args.matrix)
    c = _load_corpus(args)
    if len(c) != f.shape[0]:
        raise ValueError(f"corpus has {len(c)} equations but the matrix has {f.shape[0]} rows")
    emb = fix_signs(pca_embed(f, args.k, args.centering), f, c.equations)
    with open(args.out, "w") as fh:
        fh.write(f"# magmaspace {__version__}\n")
        fh.write("index," + ",".join("XYZ"[i] if i < 3 else f"PC{i + 1}" for i in range(emb.k)) + "\n")
        for i, row in enumerate(emb.coords):
            fh.write(f"{i}," + ",".join(f"{v:.12g}" for v in row) + "\n")
    _emit({"singular_values": emb.singular_values.tolist(),
           "explained_variance_ratio": emb.explained_variance_ratio.tolist(),
           "iterations": emb.iterations}, args.json)
    return EXIT_OK


def cmd_graph(args) -> int:
    g = _load_graph(args)
    if args.action == "load":
        _emit({"vertices": g.num_vertices, "implications": g.num_implications(),
               "transitive": g.audit_transitivity()}, args.json)
        if args.out:
            write_preorder(g, args.out)
        return EXIT_OK
    c = condense(g)
    if args.action == "condense":
        _emit({"cliques": [list(map(int, m)) for m in c.cliques],
               "atomic_edges": [list(e) for e in c.atomic_edges()]}, args.json)
    elif args.action == "stats":
        _emit(graph_stats(g, c, args.self_pairs).as_dict(), args.json)
    elif args.action == "longest":
        _emit({"paths": longest_paths(c, args.top)}, args.json)
    elif args.action == "parallel":
        if not args.embedding:
            raise UsageError("graph parallel needs --embedding")
        pairs = parallel_edge_candidates(c, read_embedding(args.embedding),
                                         args.angle_tol, args.length_tol, args.limit)
        _emit({"pairs": [asdict(p) for p in pairs]}, args.json)
    return EXIT_OK


def cmd_geometry(args) -> int:
    g = _load_graph(args)
    c = condense(g)
    coords = read_embedding(args.embedding)
    if coords.shape[0] != g.num_vertices:
        raise ValueError(f"embedding has {coords.shape[0]} rows but the graph has {g.num_vertices} vertices")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    es = edge_lengths(coords, g, c, args.self_pairs)
    es.write_csv(out / "edge_stats.csv")
    clique_geometry(coords, c).write_csv(out / "cliques.csv")
    cross_clique_edge_matrix(g, c, args.self_pairs).write_csv(out / "cross_clique.csv")
    write_scene(coords, c, out / "scene.csv")
    _emit({"edge_stats": es.table, "ratios": es.ratios()}, args.json)
    return EXIT_OK


def cmd_herbrand(args) -> int:
    p = read_proof(args.proof, max_depth=args.max_depth, max_size=args.max_size)
    rigid = not args.pattern
    v = verify(p, rigid=rigid)
    print(verdict_json(p, v))
    if not v.proved:
        return EXIT_VERIFY
    if not replay(p, v, rigid=rigid):
        print("trace failed to replay", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_pipeline(args) -> int:
    overrides = {"out_dir": args.out, "threads": args.threads,
                 "stages": tuple(args.stages.split(",")) if args.stages else None}
    if args.config:
        cfg = load_config(args.config, **overrides)
    else:
        cfg = PipelineConfig(**{k: v for k, v in overrides.items() if v is not None})
        cfg.validate()
    report = run_pipeline(cfg)
    print(f"report written to {Path(cfg.out_dir) / 'report.json'} (config {report['config_hash']})")
    return EXIT_OK


def cmd_plot(args) -> int:
    for p in emit_plot_data(args.out, args.kind, args.eq, args.other, args.bins):
        print(p)
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="magmaspace", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("--threads", type=int, default=0, help="worker cap (default: all cores)")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def corpus_args(p, et=True):
        p.add_argument("--corpus", help="corpus file (default: enumerate)")
        p.add_argument("--max-ops", type=int, default=4)
        if et:
            p.add_argument("--et-numbering", help="file of 'equation <-> number' lines")

    p = sub.add_parser("corpus", help="enumerate canonical equations")
    p.add_argument("--max-ops", type=int, default=4)
    p.add_argument("--et-numbering")
    p.add_argument("--out", help="write the corpus here")
    p.add_argument("--json", help="write the summary here instead of stdout")
    p.set_defaults(func=cmd_corpus)

    p = sub.add_parser("sample", help="draw random magmas")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--N", type=int, default=4)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--symmetric", action="store_true", help="close the sample under opposites")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("stone", help="compute the Stone-pairing feature matrix")
    corpus_args(p)
    p.add_argument("--sample", required=True)
    p.add_argument("--exact-budget", type=int, default=2 ** 22)
    p.add_argument("--mc-samples", type=int, default=2 ** 16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="binary matrix output")
    p.add_argument("--csv", help="CSV matrix output")
    p.add_argument("--spectrum", type=int, help="write the spectrum of this equation index")
    p.add_argument("--spectrum-out")
    p.set_defaults(func=cmd_stone)

    p = sub.add_parser("pca", help="embed equations by PCA")
    corpus_args(p)
    p.add_argument("--matrix", required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--centering", choices=("columns", "rows"), default="columns")
    p.add_argument("--out", required=True)
    p.add_argument("--json")
    p.set_defaults(func=cmd_pca)

    def graph_args(p):
        p.add_argument("preorder", help="preorder file ('j k' lines) or dense matrix with --dense")
        corpus_args(p)
        p.add_argument("--dense", action="store_true", help="input is a dense true/false matrix")
        p.add_argument("--close", action="store_true", help="take the transitive closure on load")
        p.add_argument("--self-pairs", choices=("include", "exclude"), default="include")
        p.add_argument("--json")

    p = sub.add_parser("graph", help="implication preorder analysis")
    p.add_argument("action", choices=("load", "condense", "stats", "longest", "parallel"))
    graph_args(p)
    p.add_argument("--out", help="(load) write the normalized preorder here")
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--embedding")
    p.add_argument("--angle-tol", type=float, default=0.05)
    p.add_argument("--length-tol", type=float, default=0.05)
    p.add_argument("--limit", type=int)
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("geometry", help="edge lengths and clique geometry in latent space")
    graph_args(p)
    p.add_argument("--embedding", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_geometry)

    p = sub.add_parser("herbrand", help="check Herbrand proofs")
    hs = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    v = hs.add_parser("verify")
    v.add_argument("proof")
    v.add_argument("--max-depth", type=int, default=8)
    v.add_argument("--max-size", type=int, default=32)
    v.add_argument("--pattern", action="store_true", help="rewrite with instances as patterns")
    v.set_defaults(func=cmd_herbrand)

    p = sub.add_parser("pipeline", help="run the staged pipeline")
    ps = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    r = ps.add_parser("run")
    r.add_argument("--config")
    r.add_argument("--out")
    r.add_argument("--stages", help="comma separated subset of stages")
    r.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("plot", help="export figure data from a pipeline output")
    p.add_argument("kind", choices=PLOT_KINDS)
    p.add_argument("--out", required=True, help="pipeline output directory")
    p.add_argument("--eq", type=int, default=0)
    p.add_argument("--other", type=int, default=1)
    p.add_argument("--bins", type=int, default=256)
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 0:
        ap.error("--threads must be non-negative")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"magmaspace: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        print(f"magmaspace: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
