import pytest

from magmaspace.herbrand import (HerbrandError, HerbrandProof, apply_substitution, compose,
                                 format_pair, ground_entails, parse_pair, parse_substitution,
                                 read_proof, replace_at, replay, subterm, substitute, term_size,
                                 verify, verify_semantically)
from magmaspace.magma import sample_magmas
from magmaspace.terms import App, Var, parse_term

from oracles import check_trace

EQ13 = "u = v * (u * v)"
EQ1557 = "x = (y * z) * (x * (y * z))"


def test_forward_by_instance():
    p = HerbrandProof.make(EQ13, EQ1557, ["u -> x, v -> y * z"])
    v = verify(p)
    assert v.proved and v.by_instance == 0 and v.trace == []
    assert replay(p, v)


@pytest.mark.parametrize("steps", [
    ["x -> u, y -> u * u, z -> v * (u * u)", "x -> v, y -> u, z -> u"],
    ["x -> u, y -> u * v, z -> v * (u * v)", "x -> v, y -> u, z -> v"],
])
def test_backward_proofs(steps):
    p = HerbrandProof.make(EQ1557, EQ13, steps)
    v = verify(p)
    assert v.proved and len(v.trace) == 3
    assert replay(p, v)
    check_trace(p, v)
    assert ground_entails(p.instances(), p.target)
    assert verify_semantically(p, sample_magmas(50, 3, seed=1)) is None


def test_insufficient_instances_fail():
    p = HerbrandProof.make(EQ1557, EQ13, ["x -> v, y -> u, z -> u"])
    v = verify(p)
    assert not v.proved and v.status == "not-found-within-bounds"
    assert not replay(p, v)
    assert not ground_entails(p.instances(), p.target)


def test_semantic_counterexample():
    # x = y * x does not follow from x = x * x
    p = HerbrandProof.make("x = x * x", "x = y * x", ["x -> x"])
    assert not verify(p).proved
    assert verify_semantically(p, sample_magmas(40, 3, seed=2)) is not None


def test_substitution_algebra():
    s = parse_substitution("x -> y * z, y ↦ x")
    t = parse_term("x * y")
    assert substitute(t, s) == parse_term("(y * z) * x")
    theta = parse_substitution("x: x, y: y, z: x")
    assert substitute(substitute(t, s), theta) == substitute(t, compose(theta, s))
    assert term_size(parse_term("x * (y * z)")) == 5
    a, b = apply_substitution(parse_pair(EQ13), parse_substitution("u -> x, v -> x * y"))
    assert format_pair((a, b)) == "x = (x * y) * (x * (x * y))"
    with pytest.raises(HerbrandError):
        parse_substitution("x * y -> z")


def test_validation():
    with pytest.raises(HerbrandError):
        HerbrandProof.make(EQ13, EQ1557, ["u -> x"]).validate()
    with pytest.raises(HerbrandError):
        HerbrandProof.make(EQ13, EQ1557, ["u -> x, v -> q"]).validate()
    with pytest.raises(HerbrandError):
        HerbrandProof.make(EQ13, EQ1557, []).validate()


def test_bounds_limit_search():
    steps = ["x -> u, y -> u * v, z -> v * (u * v)", "x -> v, y -> u, z -> v"]
    # depth bounds each side: three rewrites need two levels on one side
    assert not verify(HerbrandProof.make(EQ1557, EQ13, steps, max_depth=1)).proved
    assert verify(HerbrandProof.make(EQ1557, EQ13, steps, max_depth=2)).proved
    assert not verify(HerbrandProof.make(EQ1557, EQ13, steps, max_size=8)).proved


def test_read_proof(tmp_path):
    f = tmp_path / "p.txt"
    f.write_text(f"# example\nsource: {EQ13}\ntarget: {EQ1557}\nstep: u -> x, v -> y * z\n")
    p = read_proof(f)
    assert verify(p).proved
    f.write_text("source: x = x\nbogus: 1\n")
    with pytest.raises(HerbrandError):
        read_proof(f)


def test_subterm_positions():
    t = parse_term("(x * y) * z")
    assert subterm(t, (0, 1)) == Var(1)
    assert replace_at(t, (1,), App(Var(0), Var(0))) == parse_term("(x * y) * (x * x)")
