"""Acceptance criteria, one test each; verdict lines are printed in the summary."""
import os
import time
from fractions import Fraction

import numpy as np
import pytest

from magmaspace.corpus import enumerate_corpus, load_et_numbering, self_conjugate_count
from magmaspace.geometry import clique_geometry, edge_lengths
from magmaspace.graph import (ImplicationGraph, condense, graph_stats, load_preorder, longest_paths,
                              preorder_from_satisfaction)
from magmaspace.herbrand import HerbrandProof, ground_entails, replay, verify
from magmaspace.magma import all_magmas, sample_magmas
from magmaspace.pca import fix_signs, pca_embed, pearson
from magmaspace.pipeline import PipelineConfig, run_pipeline
from magmaspace.stone import build_feature_matrix, row_statistics, satisfies, spectrum
from magmaspace.terms import conjugate

from _acceptance_log import record
from oracles import (all_maximal_paths, atomic_naive, check_trace, pairing_naive, random_preorder,
                     reach_matrix, sccs_naive)

EQ13 = "u = v * (u * v)"
EQ1557 = "x = (y * z) * (x * (y * z))"


@pytest.fixture(scope="module")
def corpus():
    return enumerate_corpus(4)


@pytest.fixture(scope="module")
def seeded_runs(corpus):
    """The desk-scale runs: n = 200 opposite-closed magmas of size 4, exact mode."""
    runs = {}
    for seed in range(1, 6):
        s = sample_magmas(200, 4, seed, symmetric=True)
        f = build_feature_matrix(corpus.equations, s)
        runs[seed] = (s, f, fix_signs(pca_embed(f, 3), f))
    return runs


def test_criterion_01_corpus_counts():
    t = time.perf_counter()
    c = enumerate_corpus(4)
    dt = time.perf_counter() - t
    hist = sorted(c.signature_histogram().values(), reverse=True)
    sc = self_conjugate_count(c)
    ok = len(c) == 4694 and hist == [2842, 1015, 427, 260, 104, 30, 9, 5, 2] and sc == 84 and dt < 10
    record(1, ok, f"size={len(c)} histogram={hist} self_conjugate={sc} time={dt:.2f}s")
    assert ok


def test_criterion_02_stone_oracle():
    t = time.perf_counter()
    eqs = enumerate_corpus(1).equations
    mismatches = 0
    engine_time = 0.0
    for N in (2, 3, 4):
        s = sample_magmas(50, N, seed=N)
        t0 = time.perf_counter()
        f = build_feature_matrix(eqs, s)
        engine_time += time.perf_counter() - t0
        for k, e in enumerate(eqs):
            want = [pairing_naive(e, m.table) for m in s]
            mismatches += sum(a != b for a, b in zip(f.row_fractions(k), want))
    dt = time.perf_counter() - t
    ok = mismatches == 0 and dt < 5
    record(2, ok, f"7 laws x 50 magmas x N in 2,3,4: mismatches={mismatches} "
                  f"engine={engine_time:.3f}s total with oracle={dt:.2f}s")
    assert ok


def test_criterion_03_analytic_rows(corpus, seeded_runs):
    bad = 0
    for s, f, _ in seeded_runs.values():
        bad += sum(v != 1 for v in f.row_fractions(0))
        bad += sum(v != Fraction(1, 4) for v in f.row_fractions(1))
    for N in (2, 3, 5, 7):
        f = build_feature_matrix(corpus.equations[:2], sample_magmas(40, N, seed=N))
        bad += sum(v != 1 for v in f.row_fractions(0))
        bad += sum(v != Fraction(1, N) for v in f.row_fractions(1))
    ok = bad == 0 and str(corpus[0]) == "x = x" and str(corpus[1]) == "x = y"
    record(3, ok, f"<x=x|A> = 1 and <x=y|A> = 1/N on every sampled magma; violations={bad}")
    assert ok


def test_criterion_04_conjugacy_bridge(corpus, seeded_runs):
    s, f, emb = seeded_runs[1]
    conj = corpus.conjugate_index()
    picks = np.random.default_rng(4).choice(len(corpus), 200, replace=False)
    spec_bad = sum(spectrum(f, int(k)) != spectrum(f, conj[k]) for k in picks)
    z = emb.Z
    refl = float(np.abs(z[conj] + z).max())
    self_conj = [i for i, e in enumerate(corpus) if conjugate(e) == e]
    zmax = float(np.abs(z[self_conj]).max())
    ok = spec_bad == 0 and refl <= 1e-6 and zmax <= 1e-6 and len(self_conj) == 84
    record(4, ok, f"spectrum mismatches={spec_bad}/200 max|Z(e*)+Z(e)|={refl:.2e} "
                  f"max|Z| over 84 self-conjugate={zmax:.2e}")
    assert ok


def _synthetic_lattice():
    """64 x 16 deterministic rows with population covariance spectrum {9, 4, 1, 0, ...}.

    Rows are +-1 Walsh patterns (orthogonal, zero mean) scaled by 3, 2, 1 and
    rotated into 16 dimensions by a DCT-II basis.
    """
    i = np.arange(64)
    w = np.stack([1 - 2 * ((i >> b) & 1) for b in (0, 2, 4)], axis=1).astype(float)
    n = 16
    k = np.arange(n)
    dct = np.cos(np.pi * (k[:, None] + 0.5) * k[None, :] / n) * np.sqrt(2 / n)
    dct[:, 0] /= np.sqrt(2)
    Q = dct[:, 1:4]
    return w * np.array([3.0, 2.0, 1.0]) @ Q.T + 0.5, Q


def test_criterion_05_pca_correctness():
    R, Q = _synthetic_lattice()
    emb = pca_embed(R, 3)
    rel = np.abs(emb.eigenvalues[:3] - [9, 4, 1]) / [9, 4, 1]
    G = emb.components @ emb.components.T
    orth = float(np.abs(G - np.eye(3)).max())
    r = emb.explained_variance_ratio
    ok = rel.max() <= 1e-8 and orth <= 1e-9 and bool((np.diff(r) <= 0).all()) and r.sum() <= 1 + 1e-12
    record(5, ok, f"eigenvalues={np.round(emb.eigenvalues[:3], 12).tolist()} max rel err={rel.max():.1e} "
                  f"orthonormality err={orth:.1e} ratio sum={r.sum():.12f}")
    assert ok


def test_criterion_06_axis_correlations(seeded_runs):
    rows = []
    for seed, (s, f, emb) in seeded_runs.items():
        mean, var = row_statistics(f)
        rx, ry = pearson(emb.X, mean), pearson(emb.Y, var)
        top = int(np.argmax(emb.X))
        rows.append((seed, rx, ry, top))
    base = [rx > 0 and ry > 0 and top == 0 for _, rx, ry, top in rows]
    strong = [rx > 0.8 and ry > 0.8 and top == 0 for _, rx, ry, top in rows]
    detail = " ".join(f"seed{sd}:rX={rx:.3f},rY={ry:.3f},argmaxX={top}" for sd, rx, ry, top in rows)
    ok = all(base) and sum(strong) >= 4
    record(6, ok, f"sign clauses hold on {sum(base)}/5 seeds, r>0.8 on both axes for "
                  f"{sum(strong)}/5 seeds (need 4); {detail}")
    assert ok


def _clustering(corpus, emb, tables):
    verts = [i for i, e in enumerate(corpus) if e.op_total <= 2]
    sat = np.array([np.concatenate([satisfies(corpus[i], t) for t in tables]) for i in verts])
    g = preorder_from_satisfaction(sat)
    c = condense(g)
    es = edge_lengths(emb.coords[verts], g, c)
    return c, es


def test_criterion_09_clustering(corpus, seeded_runs):
    s, f, emb = seeded_runs[1]
    et = os.environ.get("MAGMASPACE_ET_PREORDER")
    if et:
        c_all = load_et_numbering(corpus, os.environ["MAGMASPACE_ET_NUMBERING"])
        g = load_preorder(et, c_all)
        c = condense(g)
        es = edge_lengths(emb.coords, g, c)
        source = "ET graph"
    else:
        c, es = _clustering(corpus, emb, [s.tables()])
        source = "satisfaction in the criterion-6 sample, max_ops<=2"
    m = {k: es.mean(k) for k in ("reversible", "atomic", "strict")}
    ratio = es.ratios()["atomic/reversible"]
    ok = m["reversible"] < m["atomic"] < m["strict"] and ratio >= 3
    record(9, ok, f"[{source}] cliques={c.num_cliques} means rev={m['reversible']:.3f} "
                  f"atomic={m['atomic']:.3f} strict={m['strict']:.3f} atomic/rev={ratio:.2f} (need >= 3)")
    # supplementary: the same preorder built from every magma of size 2 and 3
    exh = [np.stack([a.table for a in all_magmas(k)]) for k in (2, 3)]
    c2, es2 = _clustering(corpus, emb, exh)
    m2 = [es2.mean(k) for k in ("reversible", "atomic", "strict")]
    record("9b", None, f"[info: all magmas of size 2 and 3] cliques={c2.num_cliques} means "
                       f"{m2[0]:.3f} < {m2[1]:.3f} < {m2[2]:.3f} atomic/rev={es2.ratios()['atomic/reversible']:.1f}")
    assert ok


ET_HISTOGRAM = {1496: 1, 419: 1, 112: 2, 76: 2, 71: 2, 40: 2, 37: 2, 31: 2, 30: 1, 27: 2, 18: 2,
                14: 1, 12: 1, 9: 4, 8: 7, 7: 4, 6: 11, 5: 11, 4: 14, 3: 61, 2: 137, 1: 1145}


def test_criterion_07_et_graph_counts(corpus):
    path = os.environ.get("MAGMASPACE_ET_PREORDER")
    if not path:
        record(7, None, "ET preorder not supplied (set MAGMASPACE_ET_PREORDER and "
                        "MAGMASPACE_ET_NUMBERING); criterion 8 substitutes")
        pytest.skip("ET dataset absent")
    c_all = load_et_numbering(corpus, os.environ["MAGMASPACE_ET_NUMBERING"])
    g = load_preorder(path, c_all)
    c = condense(g)
    st = graph_stats(g, c)
    hist = clique_geometry(np.zeros((g.num_vertices, 3)), c).size_histogram
    got = (st.implications, st.strict, st.reversible, st.cliques, st.atomic_edges, st.vertex_atomic)
    ok = got == (8178279, 5702669, 2475610, 1415, 4824, 1052209) and hist == ET_HISTOGRAM
    record(7, ok, f"counts={got} histogram match={hist == ET_HISTOGRAM}")
    assert ok


def test_criterion_08_graph_oracles():
    rng = np.random.default_rng(8)
    failures = {"scc": 0, "reduction": 0, "closure": 0, "longest": 0}
    for _ in range(1000):
        n = int(rng.integers(1, 9))
        adj = random_preorder(rng, n)
        g = ImplicationGraph(adj)
        c = condense(g)
        r = reach_matrix(adj)
        failures["scc"] += [frozenset(q) for q in c.cliques] != sccs_naive(adj)
        atomic = set(c.atomic_edges())
        failures["reduction"] += atomic != atomic_naive(c.cliques, r)
        m = c.num_cliques
        A = np.zeros((m, m), bool)
        for a, b in atomic:
            A[a, b] = True
        closure = {(int(a), int(b)) for a, b in zip(*np.nonzero(reach_matrix(A) & ~np.eye(m, dtype=bool)))}
        st = graph_stats(g, c)
        failures["closure"] += not (closure == set(c.dag_edges()) and g.is_transitive()
                                    and st.strict + st.reversible == st.implications)
        failures["longest"] += longest_paths(c, 3) != all_maximal_paths(m, atomic)[:3]
    ok = not any(failures.values())
    record(8, ok, f"1000 random preorders (<= 8 vertices) failures={failures}")
    assert ok


def _timed_verify(steps, source, target):
    p = HerbrandProof.make(source, target, steps)
    t = time.perf_counter()
    v = verify(p)
    dt = time.perf_counter() - t
    replays = v.proved and replay(p, v) and check_trace(p, v)
    return p, v, dt, bool(replays)


def test_criterion_10_herbrand_example():
    # the substitutions exactly as stated for the Eq13 / Eqn1557 example
    fwd = _timed_verify(["u -> x, v -> x * y"], EQ13, EQ1557)
    th12 = _timed_verify(["x -> u, y -> u * v, z -> v * (u * u)", "x -> v, y -> u, z -> u"], EQ1557, EQ13)
    th34 = _timed_verify(["x -> u, y -> u * v, z -> v * (u * u)", "x -> v, y -> u, z -> v"], EQ1557, EQ13)

    def show(name, res):
        p, v, dt, rep = res
        entailed = ground_entails(p.instances(), p.target)
        return f"{name}:{v.status},rewrites={len(v.trace)},replay={rep},entailed={entailed},{dt * 1000:.0f}ms"

    ok = (fwd[1].proved and fwd[1].by_instance is not None and not fwd[1].trace and fwd[3]
          and th12[1].proved and th12[3] and th34[1].proved and th34[3]
          and max(fwd[2], th12[2], th34[2]) < 1)
    record(10, ok, "stated substitutions: " + "; ".join(
        [show("theta", fwd), show("(theta1,theta2)", th12), show("(theta3,theta4)", th34)]))
    # supplementary: substitutions consistent with the stated instances psi[theta1] etc.
    cf = _timed_verify(["u -> x, v -> y * z"], EQ13, EQ1557)
    c12 = _timed_verify(["x -> u, y -> u * u, z -> v * (u * u)", "x -> v, y -> u, z -> u"], EQ1557, EQ13)
    c34 = _timed_verify(["x -> u, y -> u * v, z -> v * (u * v)", "x -> v, y -> u, z -> v"], EQ1557, EQ13)
    record("10b", None, "[info: corrected substitutions] " + "; ".join(
        [show("v->y*z", cf), show("theta1:y->u*u", c12), show("theta3:z->v*(u*v)", c34)]))
    assert cf[1].proved and c12[1].proved and c34[1].proved
    assert cf[3] and c12[3] and c34[3]
    assert ok


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_11_determinism(tmp_path):
    trees = []
    t = time.perf_counter()
    for threads, name in ((1, "a"), (4, "b")):
        run_pipeline(PipelineConfig(out_dir=str(tmp_path / name), threads=threads))
        trees.append(_tree(tmp_path / name))
    run_pipeline(PipelineConfig(out_dir=str(tmp_path / "a"), threads=2))  # cached rerun
    trees.append(_tree(tmp_path / "a"))
    dt = time.perf_counter() - t
    ok = trees[0] == trees[1] == trees[2] and len(trees[0]) > 10
    record(11, ok, f"full default pipeline, threads 1 vs 4 plus cached rerun: {len(trees[0])} files "
                   f"byte-identical={ok} ({dt:.1f}s)")
    assert ok
