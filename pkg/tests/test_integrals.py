import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from orbitknots import cli
from orbitknots import diagrams as dg
from orbitknots import integrals as ig
from orbitknots import knots as kn

TREFOIL = kn.trefoil()
FIG8 = kn.figure_eight()
CIRCLE = kn.circle()
params = st.floats(0, 2 * math.pi, exclude_max=True)


@pytest.fixture(scope="module")
def preset():
    return cli.load_preset()


# ------------------------------------------------------------------ kernel

@given(params, params)
def test_kernel_vanishes_on_circle(t1, t2):
    if abs(t1 - t2) < 1e-6:
        return
    assert abs(ig.two_point_kernel(CIRCLE, t1, t2)) < 1e-12


@given(params, params)
def test_kernel_symmetric(t1, t2):
    if min(abs(t1 - t2), 2 * math.pi - abs(t1 - t2)) < 1e-6:
        return
    a, b = ig.two_point_kernel(TREFOIL, t1, t2), ig.two_point_kernel(TREFOIL, t2, t1)
    assert abs(a - b) <= 1e-12 * max(1.0, abs(a))


def test_kernel_finite_near_diagonal():
    vals = [float(ig.two_point_kernel(TREFOIL, 1.0, 1.0 + 2.0**-m)) for m in range(4, 16)]
    assert max(abs(v) for v in vals) < 10
    # g ~ h kappa^2 tau / 12, so the limit is 0 and successive values halve
    assert abs(vals[-1]) < 1e-3
    assert 1.8 < vals[-4] / vals[-3] < 2.2


def test_kernel_rejects_coincident_parameters():
    with pytest.raises(ig.DomainError):
        ig.two_point_kernel(TREFOIL, 0.5, 0.5 + 2 * math.pi)


# ------------------------------------------------------------------ writhe

def test_circle_writhe_zero():
    assert abs(ig.writhe_gauss(CIRCLE).value) < 1e-8


@pytest.mark.parametrize("K,curve", [(TREFOIL, oracles.torus_curve(2, 3)), (FIG8, oracles.figure_eight_curve())])
def test_writhe_matches_analytic_trapezoid(K, curve):
    assert abs(ig.writhe_gauss(K).value - oracles.gauss_writhe_trapezoid(*curve)) < 1e-4


def test_writhe_projection_agrees_with_gauss():
    mean, se, frac = ig.writhe_projection(TREFOIL, 2000)
    assert frac < 0.01
    assert abs(mean - ig.writhe_gauss(TREFOIL).value) < 0.02 * 3.5 + 3 * se


def test_writhe_projection_circle_exact():
    mean, se, _ = ig.writhe_projection(CIRCLE, 1000)
    assert mean == 0 and se == 0


def test_writhe_projection_needs_enough_directions():
    with pytest.raises(ValueError, match="1000"):
        ig.writhe_projection(TREFOIL, 500)


def test_mirror_negates_writhe():
    assert abs(ig.writhe_gauss(FIG8.mirrored()).value + ig.writhe_gauss(FIG8).value) < 1e-6


def test_writhe_not_an_invariant():
    # same trefoil, different geometry
    a = ig.writhe_gauss(TREFOIL)
    b = ig.writhe_gauss(kn.torus_knot(2, 3, R=4.0))
    assert abs(a.value - b.value) > 100 * (a.abs_error_estimate + b.abs_error_estimate)


def test_polygon_writhe_converges_to_smooth():
    smooth = ig.writhe_gauss(TREFOIL).value
    rep = ig.writhe_polygon_extrapolated(TREFOIL, 512)
    assert abs(rep.value - smooth) < 1e-4
    assert abs(ig.writhe_polygon(TREFOIL, 256) - smooth) > abs(rep.value - smooth)


def test_tube_exclusion_removes_quadratically_small_mass():
    L = TREFOIL.length
    vals = [ig.writhe_gauss(TREFOIL, exclusion=f * L).value for f in (0.004, 0.002, 0.001)]
    d1, d2 = abs(vals[0] - vals[1]), abs(vals[1] - vals[2])
    assert d2 < d1 / 3
    assert ig.writhe_gauss(TREFOIL, exclusion=0.001 * L).excluded_tube_radius == 0.001 * L


# ----------------------------------------------------------------- linking

def test_distant_circles_unlinked():
    a, b = kn.distant_circles()
    assert abs(ig.linking_gauss(a, b).value) < 1e-6
    assert ig.linking_combinatorial(a, b) == 0


def test_hopf_link_integer_and_symmetric():
    a, b = kn.hopf_link()
    ab, ba = ig.linking_gauss(a, b), ig.linking_gauss(b, a)
    assert abs(abs(ab.value) - 1) < 0.05 and not ab.flagged
    assert ab.value == pytest.approx(ba.value, abs=1e-12)
    assert ig.linking_combinatorial(a, b) == round(ab.value) == ig.linking_combinatorial(b, a)
    ref = oracles.gauss_linking_trapezoid(*oracles.circle_curve((0, 0, 0), (1, 0, 0), (0, 1, 0)),
                                          *oracles.circle_curve((1, 0, 0), (0, 0, 1), (1, 0, 0)))
    assert ab.value == pytest.approx(ref, abs=1e-6)


@given(st.tuples(*[st.floats(-1, 1)] * 3).filter(lambda v: np.linalg.norm(v) > 0.3))
def test_combinatorial_linking_direction_independent(v):
    a, b = kn.hopf_link()
    try:
        assert ig.linking_combinatorial(a, b, v) == 1
    except kn.NonGenericDirection:
        pass


def test_touching_curves_rejected():
    a = kn.circle(1.0, 256)
    b = kn.circle(1.0, 256, center=(2.0, 0, 0))
    with pytest.raises(ig.DomainError, match="touch"):
        ig.linking_gauss(a, b)


def test_polygon_linking():
    a, b = kn.hopf_link()
    assert ig.linking_polygon(a, b, 128, 128) == pytest.approx(1.0, abs=1e-9)


# --------------------------------------------------------------- integrand

@given(params, params)
def test_integrand_reduces_to_kernel_for_chord(t1, t2):
    if min(abs(t1 - t2), 2 * math.pi - abs(t1 - t2)) < 1e-3:
        return
    D0 = dg.named_diagram("chord")
    f = ig.bott_taubes_integrand(D0, TREFOIL, np.array([t1, t2]))
    assert f == pytest.approx(float(ig.two_point_kernel(TREFOIL, t1, t2)), rel=1e-10, abs=1e-12)


def test_tripod_integrand_decay():
    """Each edge factor is O(R^-2), but at leading order the three Gauss
    vectors coincide and the signed sum over frame assignments cancels, so
    the integrand is O(R^-7)."""
    tri = dg.named_diagram("tripod")
    t = np.array([0.3, 2.0, 4.1])
    direction = np.array([0.3, -0.5, 0.81])
    R = np.geomspace(50, 800, 6)
    f = [abs(float(ig.bott_taubes_integrand(tri, TREFOIL, t, (r * direction)[None]))) for r in R]
    slope = np.polyfit(np.log(R), np.log(f), 1)[0]
    assert slope == pytest.approx(-7, abs=0.1)


def test_frame_transposition_flips_sign():
    D0 = dg.named_diagram("chord")
    X = np.array([[0.0, 0, 0], [1.0, 0.3, 0.2]])
    V = np.array([[0.1, 1.0, 0.4], [0.0, 0.2, 1.0]])
    a = ig.flow_frame_integrand(D0, X, V)
    b = ig.flow_frame_integrand(D0, X, V[::-1])
    assert a == pytest.approx(-b, rel=1e-14) and a != 0


@given(st.lists(params, min_size=3, max_size=3, unique=True), st.tuples(*[st.floats(-3, 3)] * 3))
def test_flow_frame_integrand_matches_knot_integrand(ts, y):
    tri = dg.named_diagram("tripod")
    t = np.array(ts)
    y = np.array(y)[None]
    X, V = TREFOIL.position(t), TREFOIL.tangent(t)
    if min(np.linalg.norm(X - y, axis=1)) < 1e-3:
        return
    a = ig.bott_taubes_integrand(tri, TREFOIL, t, y)
    b = ig.flow_frame_integrand(tri, X, V, y)
    assert a == pytest.approx(b, rel=1e-10, abs=1e-14)


def test_integrand_rejects_coincident_points():
    tri = dg.named_diagram("tripod")
    t = np.array([0.3, 2.0, 4.1])
    with pytest.raises(ig.DomainError):
        ig.bott_taubes_integrand(tri, TREFOIL, t, TREFOIL.position(0.3)[None])


# ---------------------------------------------------------- config integral

def test_chord_integral_of_circle():
    assert abs(ig.config_integral(dg.named_diagram("chord"), CIRCLE).value) < 1e-8


def test_chord_integral_is_four_pi_writhe():
    rep = ig.config_integral(dg.named_diagram("chord"), TREFOIL)
    mean, se, _ = ig.writhe_projection(TREFOIL, 2000)
    assert abs(rep.value - ig.FOUR_PI * mean) < ig.FOUR_PI * (0.02 * abs(mean) + 3 * se)


@pytest.mark.parametrize("K", [TREFOIL, FIG8])
def test_chord_diagram_square_identity(K):
    """Splitting (4 pi Wr)^2 over the cyclic orders of four points."""
    c4 = ig.chord4_integrals(K)
    wr = ig.writhe_gauss(K).value
    lhs = 4 * c4["parallel"].value - 2 * c4["crossed"].value
    scale = 4 * abs(c4["parallel"].value) + 2 * abs(c4["crossed"].value)
    assert abs(lhs - (ig.FOUR_PI * wr) ** 2) < 1e-8 * scale


def test_relabelled_diagram_uses_fast_path_with_sign():
    d = dg.TrivalentDiagram(4, 0, (1, 2, 3, 4), ((1, 3), (2, 4)))
    e = dg.TrivalentDiagram(4, 0, (2, 3, 4, 1), ((2, 4), (1, 3)))
    name, s1 = ig.match_fast_path(d)
    name2, s2 = ig.match_fast_path(e)
    assert name == name2 == "crossed" and s1 == 1
    a, b = ig.config_integral(d, TREFOIL), ig.config_integral(e, TREFOIL)
    assert a.value == pytest.approx(s2 * b.value)
    # the labelled integrand agrees at a matched configuration
    t = np.array([0.2, 1.5, 3.0, 4.4])
    f_d = ig.bott_taubes_integrand(d, TREFOIL, t)
    f_e = ig.bott_taubes_integrand(e, TREFOIL, t)
    assert f_e == pytest.approx(s2 * f_d)


def test_qmc_agrees_with_grid_integrator():
    crossed = dg.named_diagram("crossed")
    est, se, _ = ig._qmc_integral(crossed, TREFOIL, 2**13, seed=1)
    ref = ig.chord4_integrals(TREFOIL)["crossed"].value
    assert abs(est - ref) < 5 * se + 1e-3 * abs(ref)


def test_unsupported_diagram_falls_back_with_warning():
    d = dg.parse_diagram("6 0; 1-4,2-5,3-6")
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        rep = ig.config_integral(d, TREFOIL, qmc_points=2**10)
    assert any("QMC" in str(x.message) for x in w)
    assert rep.settings["method"] == "qmc" and math.isfinite(rep.value)


# ------------------------------------------------------------- degree two

def test_preset_unknot_and_trefoils(preset):
    assert abs(ig.degree2_value(preset, CIRCLE).value) < 0.02
    assert abs(ig.degree2_value(preset, TREFOIL).value - 1) < 0.05
    assert abs(ig.degree2_value(preset, kn.trefoil(handed="left")).value - 1) < 0.05


def test_vassiliev_eval_missing_dependency(preset):
    with pytest.raises(ig.DependencyError, match="missing"):
        ig.vassiliev_eval(preset.weight_system(), preset.corrections, scales=preset.scales, values={"crossed": 1.0})


def test_vassiliev_eval_linear_combination(preset):
    vals = {"crossed": 2.0, "tripod": -3.0, "writhe": 0.5}
    rep = ig.vassiliev_eval(preset.weight_system(), preset.corrections, scales=preset.scales,
                            offset=preset.offset, values=vals)
    want = (preset.scales["crossed"] * 2.0 - preset.corrections["crossed"] * 0.5
            + preset.scales["tripod"] * -3.0 + preset.offset)
    assert rep.value == pytest.approx(want, rel=1e-14)


def test_calibration_recovers_synthetic_coefficients():
    rng = np.random.default_rng(5)
    truth = np.array([-0.0016, 0.00017, -0.0003, 0.04])
    rows = []
    for i in range(6):
        x = rng.normal(size=3) * [500, 5000, 3]
        target = truth[0] * x[0] + truth[1] * x[1] - truth[2] * x[2] + truth[3]
        rows.append((f"k{i}", target, {"crossed": x[0], "tripod": x[1], "writhe": x[2]}))
    p = ig.calibrate_degree2(rows)
    got = [p.scales["crossed"], p.scales["tripod"], p.corrections["crossed"], p.offset]
    assert np.allclose(got, truth, rtol=1e-9)
    assert ig.Degree2Preset.from_dict(p.to_dict()) == p


def test_calibration_needs_four_knots():
    with pytest.raises(ValueError, match="four"):
        ig.calibrate_degree2([("a", 0, {"crossed": 1, "tripod": 1, "writhe": 0})])


def test_preset_weight_system_is_stu_consistent(preset):
    W = preset.weight_system()
    assert W.is_consistent() and dg.is_primitive(W)
    assert W(dg.named_diagram("tripod")) == 1


# -------------------------------------------------------------- Polyak-Viro

def test_pv_unknot():
    assert kn.polyak_viro_v2(CIRCLE, (0.2, 0.3, 0.93)) == 0


@pytest.mark.parametrize("handed", ["right", "left"])
def test_pv_trefoil_mirror_even(handed):
    assert kn.polyak_viro_v2(kn.trefoil(handed=handed), (0.1234, 0.2345, 0.9641)) == 1


def test_pv_direction_independent():
    rng = np.random.default_rng(11)
    got = []
    for v in rng.normal(size=(40, 3)):
        try:
            got.append(kn.polyak_viro_v2(FIG8, v))
        except kn.NonGenericDirection:
            continue
        if len(got) == 20:
            break
    assert len(got) == 20 and set(got) == {-1}


def test_pv_matches_gauss_code_oracle():
    for K in (TREFOIL, FIG8, kn.torus_knot(2, 5)):
        D = kn.project_and_sign(K, (0.1234, 0.2345, 0.9641))
        code = [(kind, idx) for kind, idx, _ in D.gauss_sequence()]
        signs = {i: c.sign for i, c in enumerate(D.crossings)}
        assert oracles.v2_from_gauss_code(code, signs) == kn.polyak_viro_v2(K, (0.1234, 0.2345, 0.9641))


def test_pv_gauss_code_oracle_hand_examples():
    trefoil = [("O", 1), ("U", 2), ("O", 3), ("U", 1), ("O", 2), ("U", 3)]
    assert oracles.v2_from_gauss_code(trefoil, {1: 1, 2: 1, 3: 1}) == 1
    # torus(2,5): c2 = 3
    assert kn.polyak_viro_v2(kn.torus_knot(2, 5), (0.1234, 0.2345, 0.9641)) == 3
