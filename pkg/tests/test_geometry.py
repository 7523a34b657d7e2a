import numpy as np
import pytest
from hypothesis import given, strategies as st

from magmaspace.geometry import (clique_geometry, cross_clique_edge_matrix, describe, edge_lengths,
                                 edge_pairs, nearest_rank, write_scene)
from magmaspace.graph import ImplicationGraph, condense, graph_stats

from oracles import random_preorder


def test_describe():
    d = describe(np.array([4.0, 1.0, 3.0, 2.0]))
    assert d["count"] == 4 and d["mean"] == 2.5 and d["min"] == 1 and d["max"] == 4
    assert d["std"] == pytest.approx(np.sqrt(1.25))
    assert (d["25%"], d["50%"], d["75%"]) == (1.0, 2.0, 3.0)
    assert nearest_rank(np.array([7.0]), 0.25) == 7.0
    assert describe(np.zeros(0))["count"] == 0


def _graph(seed, n=8):
    g = ImplicationGraph(random_preorder(np.random.default_rng(seed), n))
    return g, condense(g)


@pytest.mark.parametrize("seed", range(20))
def test_edge_classes_and_cross_matrix(seed):
    g, c = _graph(seed)
    st_inc = graph_stats(g, c, "include")
    pairs = edge_pairs(g, c, "include")
    assert len(pairs["reversible"][0]) == st_inc.reversible
    assert len(pairs["strict"][0]) == st_inc.strict
    assert len(pairs["atomic"][0]) == st_inc.vertex_atomic
    assert cross_clique_edge_matrix(g, c).total() == st_inc.strict
    st_ex = graph_stats(g, c, "exclude")
    assert cross_clique_edge_matrix(g, c, "exclude").total() == st_ex.strict
    ex = edge_pairs(g, c, "exclude")
    assert len(ex["reversible"][0]) == st_ex.reversible and len(ex["strict"][0]) == st_ex.strict


@given(st.integers(0, 500), st.integers(0, 2 ** 31))
def test_invariant_under_rigid_motion(seed, rot_seed):
    g, c = _graph(seed)
    rng = np.random.default_rng(rot_seed)
    pts = rng.standard_normal((g.num_vertices, 3))
    Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    moved = pts @ Q.T + rng.standard_normal(3)
    a, b = edge_lengths(pts, g, c), edge_lengths(moved, g, c)
    for cls in a.table:
        for k, v in a.table[cls].items():
            assert b.table[cls][k] == pytest.approx(v, abs=1e-9, nan_ok=True)
    ga, gb = clique_geometry(pts, c), clique_geometry(moved, c)
    assert np.allclose(ga.spreads, gb.spreads)


def test_clique_centers():
    g = ImplicationGraph.from_edges(3, [(0, 1), (1, 0), (1, 2)], close=True)
    c = condense(g)
    pts = np.array([[0.0, 0, 0], [2, 2, 0], [5, 5, 5]])
    geo = clique_geometry(pts, c, max_radius=2.0)
    assert np.allclose(geo.centers[0], [1, 1, 0]) and np.allclose(geo.centers[1], pts[2])
    assert geo.spreads[1] == 0 and geo.spreads[0] == pytest.approx(np.sqrt(2))
    assert geo.radii.tolist() == [2.0, 1.0]
    assert geo.size_histogram == {2: 1, 1: 1}
    # member order does not move the center
    perm = np.array([1, 0, 2])
    g2 = ImplicationGraph(g.adj[perm][:, perm])
    assert np.allclose(clique_geometry(pts[perm], condense(g2)).centers[0], [1, 1, 0])


def test_cross_matrix_entries():
    # clique {0,1} implies singleton {2}: 2 strict edges from size 2 to size 1
    g = ImplicationGraph.from_edges(3, [(0, 1), (1, 0), (1, 2)], close=True)
    m = cross_clique_edge_matrix(g, condense(g))
    assert m.sizes == [1, 2] and m.entry(2, 1) == 2 and m.total() == 2


def test_edge_length_ordering_on_clustered_points():
    g = ImplicationGraph.from_edges(4, [(0, 1), (1, 0), (1, 2), (2, 3), (3, 2)], close=True)
    c = condense(g)
    pts = np.array([[0, 0, 0], [0.1, 0, 0], [3, 0, 0], [3.1, 0, 0]])
    es = edge_lengths(pts, g, c)
    assert es.mean("reversible") < es.mean("atomic") <= es.mean("strict")


def test_outputs(tmp_path):
    g, c = _graph(3)
    pts = np.random.default_rng(0).standard_normal((g.num_vertices, 3))
    edge_lengths(pts, g, c).write_csv(tmp_path / "e.csv")
    clique_geometry(pts, c).write_csv(tmp_path / "c.csv")
    cross_clique_edge_matrix(g, c).write_csv(tmp_path / "x.csv")
    write_scene(pts, c, tmp_path / "s.csv")
    scene = (tmp_path / "s.csv").read_text().splitlines()
    assert scene[0] == "kind,x1,y1,z1,x2,y2,z2,radius"
    assert sum(r.startswith("ball") for r in scene) == c.num_cliques
    assert sum(r.startswith("arrow") for r in scene) == c.num_atomic_edges()
    assert "np.float64" not in (tmp_path / "c.csv").read_text() + "".join(scene)
