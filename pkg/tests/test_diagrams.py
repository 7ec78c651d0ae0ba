from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

import oracles
from orbitknots import diagrams as dg
from orbitknots.diagrams import DiagramCombination as C

CHORD = dg.named_diagram("chord")
PARALLEL = dg.named_diagram("parallel")
CROSSED = dg.named_diagram("crossed")
TRIPOD = dg.named_diagram("tripod")


def relabel(d: dg.TrivalentDiagram, perm: dict) -> dg.TrivalentDiagram:
    return dg.TrivalentDiagram(d.k, d.s, tuple(perm[c] for c in d.circle_order),
                               tuple((perm[a], perm[b]) for a, b in d.edges))


@st.composite
def relabelled(draw, n_choices=(1, 2, 3)):
    n = draw(st.sampled_from(n_choices))
    d = draw(st.sampled_from(dg.enumerate_diagrams(n)))
    labels = list(d.labels)
    perm = dict(zip(labels, draw(st.permutations(labels))))
    rot = draw(st.integers(0, max(d.k - 1, 0)))
    e = relabel(d, perm)
    order = e.circle_order[rot:] + e.circle_order[:rot]
    return d, dg.TrivalentDiagram(e.k, e.s, order, e.edges)


# ---------------------------------------------------------------- canonicalize

def test_chord_any_labelling_is_single_canonical():
    a = dg.TrivalentDiagram(2, 0, (1, 2), ((1, 2),))
    b = dg.TrivalentDiagram(2, 0, (2, 1), ((1, 2),))
    assert dg.canonicalize(a) == dg.canonicalize(b) == CHORD


@pytest.mark.parametrize("order", [(1, 2, 3), (2, 3, 1), (3, 1, 2)])
def test_tripod_rotations_share_canonical_form(order):
    d = dg.TrivalentDiagram(3, 1, order, ((1, 4), (2, 4), (3, 4)))
    assert dg.canonicalize(d) == TRIPOD
    assert dg.format_diagram(TRIPOD) == "3 1; 1-4,2-4,3-4"


def test_crossed_labellings_agree():
    a = dg.TrivalentDiagram(4, 0, (1, 2, 3, 4), ((1, 3), (2, 4)))
    b = dg.TrivalentDiagram(4, 0, (3, 1, 4, 2), ((3, 4), (1, 2)))
    assert dg.canonicalize(a) == dg.canonicalize(b) == CROSSED
    assert CROSSED != PARALLEL


@pytest.mark.parametrize("k,s,order,edges,msg", [
    (3, 0, (1, 2, 3), ((1, 2),), "even"),
    (2, 0, (1, 2), ((1, 1),), "self-loop"),
    (3, 1, (1, 2, 3), ((1, 4), (2, 4), (3, 4), (3, 4)), "repeated"),
    (4, 0, (1, 2, 3, 4), ((1, 2), (1, 3), (2, 4)), "valence"),
    (2, 2, (1, 2), ((1, 3), (2, 4), (3, 4)), "valence"),
])
def test_structural_violations_rejected(k, s, order, edges, msg):
    with pytest.raises(dg.DiagramError, match=msg):
        dg.TrivalentDiagram(k, s, order, edges)


@given(relabelled())
def test_canonical_form_is_labelling_independent(pair):
    d, e = pair
    assert dg.canonicalize(e) == d
    assert dg.is_canonical(d)


@given(relabelled())
def test_canonical_form_agrees_with_isomorphism_oracle(pair):
    _, e = pair
    c = dg.canonicalize(e)
    g1 = oracles.diagram_digraph(e.k, e.s, e.circle_order, e.edges)
    g2 = oracles.diagram_digraph(c.k, c.s, c.circle_order, c.edges)
    assert oracles.same_diagram(g1, g2)


# ----------------------------------------------------------------- enumeration

def test_degree_one_is_single_chord():
    assert dg.enumerate_diagrams(1) == (CHORD,)


def test_degree_two_contains_fig_diagrams():
    ds = dg.enumerate_diagrams(2)
    assert TRIPOD in ds and CROSSED in ds and PARALLEL in ds


@pytest.mark.parametrize("n", [1, 2, 3])
def test_enumeration_count_matches_brute_force(n):
    assert len(dg.enumerate_diagrams(n)) == len(oracles.brute_force_diagrams(n))


@pytest.mark.parametrize("n", [1, 2, 3])
def test_enumeration_closed_under_canonicalize_and_duplicate_free(n):
    ds = dg.enumerate_diagrams(n)
    assert len(set(ds)) == len(ds)
    for d in ds:
        assert dg.canonicalize(d) == d
        assert (d.k + 3 * d.s) % 2 == 0
        assert dg.degree(d) == n


@pytest.mark.parametrize("n", [0, -2])
def test_enumeration_rejects_nonpositive_degree(n):
    with pytest.raises(dg.DiagramError):
        dg.enumerate_diagrams(n)


@pytest.mark.parametrize("text,edges,deg", [
    ("3 1; 1-4,2-4,3-4", 3, 2),
    ("2 0; 1-2", 1, 1),
    ("4 2; 1-5,2-5,3-6,4-6,5-6", 5, 3),
])
def test_edge_count_and_degree(text, edges, deg):
    d = dg.parse_diagram(text)
    assert dg.edge_count(d) == edges
    assert dg.degree(d) == deg


# ------------------------------------------------------------------------- STU

def test_tripod_expands_to_crossed_minus_parallel():
    assert dg.stu_expand(TRIPOD, 4) == C({CROSSED: 1}) - C({PARALLEL: 1})


@pytest.mark.parametrize("text", ["5 1; 1-2,3-6,4-6,5-6", "5 1; 1-3,2-6,4-6,5-6"])
def test_degree_three_expansion_matches_graph_rewrite(text):
    d = dg.parse_diagram(text)
    out = dg.stu_expand(d, 6)
    assert sorted(out.terms.values()) == [-1, 1]
    # hand rewrite: leg c on the circle becomes two adjacent points p, q
    c = min(w for w in d.neighbours(6) if d.is_circle(w))
    i, j = [w for w in d.neighbours(6) if w != c]
    circle = []
    for v in d.circle_order:
        circle += ["p", "q"] if v == c else [v]
    pos = {v: n + 1 for n, v in enumerate(circle)}
    base = [(pos[a], pos[b]) for a, b in d.edges if 6 not in (a, b)]
    want = [base + [(pos["p"], pos[i]), (pos["q"], pos[j])],
            base + [(pos["p"], pos[j]), (pos["q"], pos[i])]]
    got = list(out.terms)
    assert all(g.s == 0 and g.k == 6 for g in got)
    for edges in want:
        G = oracles.diagram_digraph(6, 0, tuple(range(1, 7)), edges)
        assert any(oracles.same_diagram(G, oracles.diagram_digraph(6, 0, g.circle_order, g.edges)) for g in got)


def test_expand_rejects_bad_vertices():
    with pytest.raises(dg.DiagramError, match="not a free vertex"):
        dg.stu_expand(TRIPOD, 1)
    inner = dg.parse_diagram("2 4; 1-3,2-4,3-5,3-6,4-5,4-6,5-6")
    with pytest.raises(dg.DiagramError, match="no leg on the circle"):
        dg.stu_expand(inner, 5)


def test_basis_degree_one():
    q = dg.stu_basis(1)
    assert q.dimension == 1 and q.basis_diagrams == (CHORD,)


@pytest.mark.parametrize("n", [2, 3])
def test_basis_dimension_independent_of_reduction_order(n):
    dims = {dg.quotient_dimension(n, seed) for seed in (None, 1, 2, 3)}
    assert len(dims) == 1


@given(st.integers(0, 10_000))
def test_basis_coordinates_independent_of_order(seed):
    a, b = dg.stu_basis(2), dg.stu_basis(2, shuffle_seed=seed)
    assert a.basis_diagrams == b.basis_diagrams
    for d in a.diagrams:
        assert a.reduce(C({d: 1})) == b.reduce(C({d: 1}))


def test_reduce_tripod_equals_reduce_crossed_minus_parallel():
    q = dg.stu_basis(2)
    assert q.reduce(C({TRIPOD: 1})) == q.reduce(C({CROSSED: 1}) - C({PARALLEL: 1}))


def test_basis_degree_out_of_range():
    with pytest.raises(dg.DiagramError, match="supported"):
        dg.stu_basis(4)


def test_reduce_rejects_wrong_degree():
    with pytest.raises(dg.DiagramError):
        dg.stu_basis(2).reduce(C({CHORD: 1}))


# -------------------------------------------------------------- weight systems

fractions = st.fractions(min_value=-50, max_value=50, max_denominator=20)


@given(fractions, fractions)
def test_fig4_relation_killed_by_any_weight_system(a, b):
    W = dg.WeightSystem.from_basis(2, {CROSSED: a, PARALLEL: b})
    rel = C({TRIPOD: 1}) - C({CROSSED: 1}) + C({PARALLEL: 1})
    assert dg.weight_eval(W, rel) == 0
    assert W(TRIPOD) == a - b


def test_zero_weight_system():
    W = dg.WeightSystem.zero(2)
    assert all(dg.weight_eval(W, C({d: 3})) == 0 for d in dg.enumerate_diagrams(2))


def test_weight_forced_by_reduction():
    W = dg.WeightSystem.from_basis(2, {CROSSED: 1, PARALLEL: 0})
    assert W(TRIPOD) == 1


def test_weight_degree_mismatch():
    W = dg.WeightSystem.zero(2)
    with pytest.raises(dg.DiagramError, match="degree"):
        dg.weight_eval(W, C({CHORD: 1}))


@given(st.data())
def test_stu_relations_vanish_exactly(data):
    n = data.draw(st.sampled_from([2, 3]))
    q = dg.stu_basis(n)
    vals = {b: data.draw(fractions) for b in q.basis_diagrams}
    W = dg.WeightSystem.from_basis(n, vals)
    assert W.is_consistent()
    for d in dg.enumerate_diagrams(n):
        for v in d.free_vertices:
            for c in d.neighbours(v):
                if d.is_circle(c):
                    assert dg.weight_eval(W, C({d: 1}) - dg.stu_expand(d, v, leg=c)) == 0


@given(st.data())
def test_weight_eval_is_linear(data):
    q = dg.stu_basis(2)
    W = dg.WeightSystem.from_basis(2, {b: data.draw(fractions) for b in q.basis_diagrams})
    ds = dg.enumerate_diagrams(2)
    c1 = C({d: data.draw(fractions) for d in ds})
    c2 = C({d: data.draw(fractions) for d in ds})
    x = data.draw(fractions)
    assert dg.weight_eval(W, c1 + x * c2) == dg.weight_eval(W, c1) + x * dg.weight_eval(W, c2)


def test_primitive_weight_system_kills_parallel():
    assert dg.is_connected_sum(PARALLEL) and not dg.is_connected_sum(CROSSED)
    assert dg.is_primitive(dg.WeightSystem.from_basis(2, {CROSSED: 1, PARALLEL: 0}))
    assert not dg.is_primitive(dg.WeightSystem.from_basis(2, {CROSSED: 0, PARALLEL: 1}))


# --------------------------------------------------------------- serialization

@pytest.mark.parametrize("n", [1, 2, 3])
def test_diagram_text_roundtrip(n):
    for d in dg.enumerate_diagrams(n):
        assert dg.parse_diagram(dg.format_diagram(d)) == d


@given(st.lists(st.tuples(st.sampled_from(dg.enumerate_diagrams(2)), fractions), max_size=5))
def test_combination_text_roundtrip(terms):
    c = C({})
    for d, x in terms:
        c = c + C.of(d, x)
    assert dg.parse_combination(dg.format_combination(c)) == c
    assert all(v != 0 for v in c.terms.values())


def test_parse_errors():
    with pytest.raises(dg.DiagramError, match="cannot parse"):
        dg.parse_diagram("two chords")
    assert Fraction(1) == C.of(TRIPOD).terms[TRIPOD]
