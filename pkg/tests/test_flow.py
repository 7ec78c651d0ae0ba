import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from orbitknots import diagrams as dg
from orbitknots import flow as fl
from orbitknots import integrals as ig
from orbitknots import knots as kn
from orbitknots.streams import generator

D0 = dg.named_diagram("chord")
FLOW = fl.default_flow()
PLANAR = fl.build_flow(fl.Subshift.full(2), (1.0, fl.GOLDEN), fl.TemplateEmbedding(layering_fraction=0.0), "planar")


def unit_roof(adj):
    return fl.build_flow(adj, [1.0] * len(adj), None)


# ------------------------------------------------------------------ building

def test_default_flow_valid():
    assert FLOW.m == 2 and FLOW.weak_mixing_proxy
    assert FLOW.roof.values == (1.0, fl.GOLDEN)


def test_golden_mean_shift_mixing():
    S = fl.Subshift.golden_mean()
    assert S.mixing_exponent() == 2
    assert np.all(np.linalg.matrix_power(S.matrix, 2) > 0)


def test_periodic_shift_rejected():
    with pytest.raises(fl.FlowError, match="not mixing"):
        fl.build_flow([[0, 1], [1, 0]], [1.0, 1.0])


@pytest.mark.parametrize("roof", [[1.0, 0.0], [1.0, -2.0], [1.0, float("inf")]])
def test_bad_roof_rejected(roof):
    with pytest.raises(fl.FlowError, match="positive"):
        fl.build_flow([[1, 1], [1, 1]], roof)


def test_constant_roof_has_no_irrational_ratio():
    assert not fl.build_flow([[1, 1], [1, 1]], [1.0, 2.0], None).weak_mixing_proxy


def test_template_arcs_close_on_branch_line():
    for a in range(2):
        for u in (0.1, 0.7):
            p0 = FLOW.arc_points(np.array([a]), np.array([u]), np.array([0.0]))
            p1 = FLOW.arc_points(np.array([a]), np.array([u]), np.array([FLOW.roof[a]]))
            assert np.allclose(p0[0, :2], 0, atol=1e-12) and np.allclose(p1[0, :2], 0, atol=1e-12)


def test_flow_file_roundtrip(tmp_path):
    path = tmp_path / "f.flow"
    path.write_text(fl.dump_flow(FLOW))
    assert fl.flow_to_dict(fl.load_flow(path)) == fl.flow_to_dict(FLOW)


@pytest.mark.parametrize("extra,msg", [({"colour": 1}, "unknown flow key"), ({"schema": 2}, "schema"),
                                       ({"template": {"lobe_depth": 1.0}}, "unknown template key")])
def test_flow_spec_errors(extra, msg):
    d = fl.flow_to_dict(FLOW)
    d.update(extra)
    with pytest.raises(fl.FlowError, match=msg):
        fl.flow_from_dict(d)


# ------------------------------------------------------------------ orbits

@pytest.mark.parametrize("T,words", [(3, ["001", "011"]), (1, ["0", "1"])])
def test_full_shift_unit_roof(T, words):
    assert fl.enumerate_orbits(unit_roof([[1, 1], [1, 1]]), T).words == words


def test_golden_mean_forbids_11():
    assert fl.enumerate_orbits(unit_roof([[1, 1], [1, 0]]), 3).words == ["001"]


@given(st.floats(1.0, 9.0), st.sampled_from([((1, 1), (1, 1)), ((1, 1), (1, 0))]))
def test_enumeration_matches_necklace_oracle(T, adj):
    flow = fl.build_flow(adj, [1.0, fl.GOLDEN], None)
    got = {o.word for o in fl.enumerate_orbits(flow, T)}
    want = set()
    for n in range(1, int(T) + 1):
        for w in oracles.primitive_necklaces(2, n):
            p = flow.roof.word_period(w)
            if T - 1 < p <= T and oracles.admissible(w, adj):
                want.add(w)
    assert got == want
    for o in fl.enumerate_orbits(flow, T):
        assert T - 1 < o.period <= T


def test_enumeration_cap_and_floor():
    with pytest.raises(fl.FlowError, match="smaller T"):
        fl.enumerate_orbits(FLOW, 14, cap=10)
    with pytest.raises(fl.FlowError, match="below"):
        fl.enumerate_orbits(FLOW, 0.5)


@given(st.lists(st.integers(0, 1), min_size=1, max_size=6), st.integers(2, 4))
def test_power_words_are_not_primitive(w, n):
    assert not fl.is_primitive(tuple(w) * n)
    assert FLOW.roof.word_period(tuple(w) * n) == pytest.approx(n * FLOW.roof.word_period(w))


def test_lyndon_words_are_canonical_rotations():
    for w in fl.lyndon_words(2, 8):
        assert fl.canonical_rotation(w) == w and fl.is_primitive(w)


def test_orbit_01_unknotted():
    K = fl.orbit_knot(FLOW, (0, 1))
    for v in [(0.3, 0.2, 0.93), (0.9, 0.1, 0.4)]:
        assert kn.polyak_viro_v2(K, v) == 0


def test_single_symbol_loops_disjoint():
    a, b = fl.orbit_knot(FLOW, (0,)), fl.orbit_knot(FLOW, (1,))
    lk = ig.linking_combinatorial(a, b, (0.3, 0.2, 0.93))
    assert lk == round(ig.linking_polygon(a, b, 512, 512))
    assert ig._min_distance(a, b) > 0


def test_orbits_embedded_and_unit_speed_up_to_T8():
    for T in range(1, 9):
        for o in fl.enumerate_orbits(FLOW, T):
            K = fl.orbit_knot(FLOW, o.word)
            kn.check_embedded(K, rel_tol=1e-9)
            speed = np.linalg.norm(K.tangent(K.grid(4000)), axis=1)
            assert np.abs(speed - 1).max() < 1e-4
            assert K.param_length == pytest.approx(o.period)


def test_inadmissible_word():
    gm = fl.build_flow([[1, 1], [1, 0]], [1.0, fl.GOLDEN])
    with pytest.raises(fl.FlowError, match="admissible"):
        fl.orbit_knot(gm, (0, 1, 1))


# ------------------------------------------------------------------ measure

def test_full_shift_entropy_log2():
    mu = fl.max_entropy_measure(unit_roof([[1, 1], [1, 1]]))
    assert abs(mu.h - math.log(2)) < 1e-12
    assert np.allclose(mu.stationary, 0.5, atol=1e-12) and np.allclose(mu.transition, 0.5, atol=1e-12)


def test_golden_mean_entropy():
    mu = fl.max_entropy_measure(unit_roof([[1, 1], [1, 0]]))
    assert abs(mu.h - math.log(fl.GOLDEN)) < 1e-12


@pytest.mark.parametrize("adj", [[[1, 1], [1, 1]], [[1, 1], [1, 0]], [[1, 1, 0], [0, 1, 1], [1, 0, 1]]])
def test_perron_data_against_numpy_oracle(adj):
    mu = fl.max_entropy_measure(fl.build_flow(adj, [1.0] * len(adj), None))
    P, pi = oracles.parry_chain(adj)
    assert abs(mu.h - oracles.constant_roof_entropy(adj, 1.0)) < 1e-12
    assert np.allclose(mu.transition, P, atol=1e-12) and np.allclose(mu.stationary, pi, atol=1e-12)
    assert mu.stationarity_residual() <= 1e-12


def test_default_measure_spectral_condition():
    mu = fl.max_entropy_measure(FLOW)
    A = FLOW.subshift.matrix * np.exp(-mu.h * np.asarray(FLOW.roof.values))[:, None]
    assert abs(fl.spectral_radius(A) - 1) < 1e-12
    assert mu.stationarity_residual() <= 1e-12


@given(st.floats(1.1, 5.0))
def test_constant_roof_scaling_exact(c):
    h1 = fl.topological_entropy(fl.build_flow([[1, 1], [1, 0]], [1.0, 1.0], None))
    hc = fl.topological_entropy(fl.build_flow([[1, 1], [1, 0]], [c, c], None))
    assert abs(hc - h1 / c) < 1e-12


@given(st.floats(0.3, 3.0), st.floats(0.3, 3.0), st.floats(1.05, 3.0))
def test_entropy_decreases_under_roof_scaling(r0, r1, c):
    h = fl.topological_entropy(fl.build_flow([[1, 1], [1, 1]], [r0, r1], None))
    hc = fl.topological_entropy(fl.build_flow([[1, 1], [1, 1]], [c * r0, c * r1], None))
    assert hc < h


def test_entropy_needs_positive_growth():
    with pytest.raises(fl.FlowError, match="no positive entropy"):
        fl.topological_entropy(fl.build_flow([[1]], [1.0], None))


def test_symbol_frequencies_within_three_sigma():
    mu = fl.max_entropy_measure(FLOW)
    x = mu.sample_symbols(200_000, generator(0, "test.freq"))[:, 0]
    p = mu.stationary[1]
    assert abs((x == 1).mean() - p) < 3 * math.sqrt(p * (1 - p) / len(x))


def test_flow_points_weighted_by_roof():
    mu = fl.max_entropy_measure(FLOW)
    seq, hts = mu.sample_flow_points(100_000, generator(0, "test.pts"), window=4)
    p = mu.symbol_weights[1]
    assert abs((seq[:, 0] == 1).mean() - p) < 4 * math.sqrt(p * (1 - p) / len(seq))
    assert np.all(hts < np.asarray(FLOW.roof.values)[seq[:, 0]]) and np.all(hts >= 0)


# -------------------------------------------------------------- integrand

def test_planar_template_integrand_vanishes():
    mu = fl.max_entropy_measure(PLANAR)
    X, V = mu.sample_embedded(100, generator(1, "test.planar"))
    Y, W = mu.sample_embedded(100, generator(2, "test.planar"))
    f = fl.flow_integrand(PLANAR, D0, np.stack([X, Y], 1), np.stack([V, W], 1))
    assert np.abs(f).max() < 1e-12


def test_flow_integrand_symmetric():
    mu = fl.max_entropy_measure(FLOW)
    X, V = mu.sample_embedded(200, generator(3, "test.sym"))
    Y, W = mu.sample_embedded(200, generator(4, "test.sym"))
    a = fl.flow_integrand(FLOW, D0, np.stack([X, Y], 1), np.stack([V, W], 1))
    b = fl.flow_integrand(FLOW, D0, np.stack([Y, X], 1), np.stack([W, V], 1))
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


def test_flow_integrand_coincident_points():
    X = np.zeros((1, 2, 3))
    with pytest.raises(ig.DomainError):
        fl.flow_integrand(FLOW, D0, X, np.ones((1, 2, 3)))


def test_orbit_time_measure_integral_is_chord_integral():
    word = (0, 1)
    n = 400
    X, V = fl.orbit_samples(FLOW, word, n, with_velocity=True)
    period = FLOW.roof.word_period(word)
    i, j = np.where(~np.eye(n, dtype=bool))
    f = fl.flow_integrand(FLOW, D0, np.stack([X[i], X[j]], 1), np.stack([V[i], V[j]], 1))
    nu2 = f.sum() * (period / n) ** 2
    K = fl.orbit_knot(FLOW, word)
    assert nu2 == pytest.approx(ig.FOUR_PI * ig.writhe_gauss(K).value, rel=1e-5)


# -------------------------------------------------------------- Monte Carlo

def test_mc_planar_zero():
    r = fl.monte_carlo_integral(PLANAR, D0, 4096, 0)
    assert abs(r.estimate) <= max(r.stderr, 1e-12)


def test_mc_stderr_clt_scaling():
    """With a finite exclusion radius the integrand is bounded and the
    standard error halves every two doublings. (Without exclusion the
    variance of the D0 integrand on a 2D template diverges logarithmically.)"""
    se = [fl.monte_carlo_integral(FLOW, D0, 4096 * 2**i, 0, exclusion=0.1 * FLOW.diameter).stderr
          for i in range(5)]
    ratios = [se[i] / se[i + 1] for i in range(4)]
    assert all(1.15 < r < 1.7 for r in ratios)
    assert 3.2 < se[0] / se[4] < 5.0


def test_mc_seed_stability():
    ests = [fl.monte_carlo_integral(FLOW, D0, 32768, s) for s in range(5)]
    mean = np.mean([e.estimate for e in ests])
    for e in ests:
        assert abs(e.estimate - mean) < 3 * e.stderr


def test_mc_thread_invariance():
    a = fl.monte_carlo_integral(FLOW, D0, 20000, 7, block=4096, threads=1)
    b = fl.monte_carlo_integral(FLOW, D0, 20000, 7, block=4096, threads=3)
    assert a.to_dict() == b.to_dict()


def test_mc_minimum_samples_and_flagging():
    with pytest.raises(ValueError, match="1000"):
        fl.monte_carlo_integral(FLOW, D0, 10, 0)
    assert fl.monte_carlo_integral(FLOW, D0, 2000, 0, tol=1e-9).flagged
