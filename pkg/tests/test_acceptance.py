"""Acceptance suite: one recorded PASS/FAIL line per criterion.

Run ``pytest tests/test_acceptance.py -s`` to see the lines as they are
produced; they are also collected in the terminal summary.
"""

import argparse
import math
from fractions import Fraction

import numpy as np
import pytest

from orbitknots import cli
from orbitknots import diagrams as dg
from orbitknots import flow as fl
from orbitknots import integrals as ig
from orbitknots import knots as kn
from orbitknots import orbit_statistics as st
from orbitknots.diagrams import DiagramCombination as C
from orbitknots.streams import generator

D0 = dg.named_diagram("chord")
FLOW = fl.default_flow()
PV_DIRECTION = (0.1234, 0.2345, 0.9641)


# ------------------------------------------------------------------------- 1

@pytest.mark.parametrize("name", ["trefoil", "figure8", "unknot:seed=3,amp=0.2"])
def test_01_writhe_duality(name, acceptance):
    K = kn.make_knot(name)
    gauss = ig.writhe_gauss(K).value
    proj, se, rejected = ig.writhe_projection(K, 10_000)
    gap = abs(gauss - proj)
    ok = gap <= 0.02 * max(1.0, abs(gauss))
    acceptance(1, f"writhe duality ({K.name})", ok,
               f"gauss {gauss:.5f}, projection {proj:.5f} +- {se:.5f}, gap {gap:.2e}, rejected {rejected:.2%}")
    assert ok


# ------------------------------------------------------------------------- 2

def test_02_linking_integrality(acceptance):
    a, b = kn.hopf_link()
    hopf = ig.linking_gauss(a, b).value
    lk = ig.linking_combinatorial(a, b)
    c, d = kn.distant_circles()
    far = ig.linking_gauss(c, d).value
    ok = abs(lk) == 1 and abs(hopf - lk) <= 0.05 and abs(far) <= 1e-6
    acceptance(2, "linking integrality", ok, f"Hopf {hopf:.8f} vs {lk}, distant {far:.1e}")
    assert ok


# ------------------------------------------------------------------------- 3

@pytest.mark.slow
def test_03_degree2_invariant(acceptance):
    preset = ig.run_calibration()
    frozen = cli.load_preset()
    drift = max(abs(preset.scales[k] - frozen.scales[k]) / abs(frozen.scales[k]) for k in frozen.scales)
    fig8 = kn.figure_eight()
    v = ig.degree2_value(preset, fig8).value
    pv = kn.polyak_viro_v2(fig8, np.asarray(PV_DIRECTION))
    wr0 = ig.writhe_gauss(fig8).value
    moved = []
    for seed in range(32):
        K = kn.isotopic_perturbation(fig8, seed, stretch=2.0)
        dw = ig.writhe_gauss(K).value - wr0
        if abs(dw) > 0.2:
            moved.append((seed, dw, ig.degree2_value(preset, K).value))
        if len(moved) == 3:
            break
    spread = max(abs(m[2] - v) for m in moved) if moved else math.inf
    ok = abs(v + 1) <= 0.05 and round(v) == pv == -1 and len(moved) == 3 and spread <= 0.05
    detail = (f"figure-eight {v:.4f}, oracle {pv}, perturbations "
              + ", ".join(f"seed {s}: dWr {dw:+.3f} -> {x:.4f}" for s, dw, x in moved)
              + f"; calibration residual {preset.residual:.1e}, drift from frozen preset {drift:.1e}")
    acceptance(3, "degree-2 invariant", ok, detail)
    assert ok


# ------------------------------------------------------------------------- 4

def test_04_stu_exactness(acceptance):
    q = dg.stu_basis(2)
    systems = [dg.WeightSystem.from_basis(2, {b: Fraction(i + 2, 3 * j + 1) for j, b in enumerate(q.basis_diagrams)})
               for i in range(3)]
    systems.append(cli.load_preset().weight_system())
    checked, bad = 0, 0
    for W in systems:
        for d in dg.enumerate_diagrams(2):
            for v in d.free_vertices:
                for c in d.neighbours(v):
                    if d.is_circle(c):
                        r = dg.weight_eval(W, C({d: 1}) - dg.stu_expand(d, v, leg=c))
                        checked += 1
                        bad += not (isinstance(r, (int, Fraction)) and r == 0)
    dims = {n: (dg.quotient_dimension(n), dg.quotient_dimension(n, shuffle_seed=7)) for n in (1, 2, 3)}
    ok = checked > 0 and bad == 0 and all(a == b for a, b in dims.values())
    acceptance(4, "STU exactness", ok, f"{checked} relations, {bad} nonzero; dimensions {dims}")
    assert ok


# ------------------------------------------------------------------------- 5

def test_05_max_entropy_measure(acceptance):
    full = fl.max_entropy_measure(fl.build_flow([[1, 1], [1, 1]], [1.0, 1.0], None))
    gm = fl.max_entropy_measure(fl.build_flow([[1, 1], [1, 0]], [1.0, 1.0], None))
    dflt = fl.max_entropy_measure(FLOW)
    e_full = abs(full.h - math.log(2))
    e_gm = abs(gm.h - math.log(fl.GOLDEN))
    bern = max(np.abs(full.transition - 0.5).max(), np.abs(full.stationary - 0.5).max())
    resid = max(m.stationarity_residual() for m in (full, gm, dflt))
    zs = []
    for i, mu in enumerate((full, gm, dflt)):
        x = mu.sample_symbols(1_000_000, generator(0, "accept.freq", i))[:, 0]
        p = mu.stationary[1]
        zs.append(abs((x == 1).mean() - p) / math.sqrt(p * (1 - p) / len(x)))
    ok = e_full <= 1e-12 and e_gm <= 1e-12 and bern <= 1e-12 and resid <= 1e-12 and max(zs) < 3
    acceptance(5, "max-entropy measure", ok,
               f"|h - log 2| {e_full:.1e}, |h - log phi| {e_gm:.1e}, Bernoulli dev {bern:.1e}, "
               f"residual {resid:.1e}, frequency z {', '.join(f'{z:.2f}' for z in zs)}")
    assert ok


# ------------------------------------------------------------------------- 6

@pytest.mark.slow
def test_06_convergence_trend(acceptance):
    rec = st.convergence_experiment(FLOW, D0, range(4, 13), mc_samples=100_000, seed=0)
    d = rec.discrepancy
    ok = rec.trend_ok and rec.sandwich_ok and rec.mc_samples >= 100_000
    acceptance(6, "convergence trend", ok,
               f"target {rec.target:.4f} +- {rec.target_stderr:.4f}, discrepancy T=4 {d[0]:.4f}, T=12 {d[-1]:.4f}, "
               f"sandwich {'holds' if rec.sandwich_ok else 'fails'}")
    assert ok


# ------------------------------------------------------------------------- 7

@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="mass in B_R scales like R^2 below the strand gap, not like R")
def test_07_tube_mass_law(acceptance):
    words = [(0, 1), (0, 0, 1), (0, 1, 1), (0, 0, 0, 1), (0, 0, 1, 1)]
    assert len({FLOW.roof.word_period(w) for w in words}) == 5
    tab = st.near_diagonal_mass(FLOW, words, D0, R_grid=(1e-1, 1e-2, 1e-3))
    per_orbit = max(tab.ratio_spread().values())
    across = max(tab.rescaled_spread().values())
    ok = per_orbit < 3 and across < 3
    acceptance(7, "tube-mass law", ok,
               f"max mass/R spread over R {per_orbit:.3g}, max rescaled spread over orbits {across:.3g}")
    assert ok


# ------------------------------------------------------------------------- 8

@pytest.mark.slow
def test_08_weakstar_trend(acceptance):
    tab = st.weakstar_test(FLOW, range(4, 13), mc_samples=200_000, seed=0)
    names = ["x", "z", "bump", "x*z"]
    trend = {n: tab.trend_ok(n) for n in names}
    fac = tab.factorization["x*z"]
    ok = all(trend.values()) and fac["z"] < 3
    acceptance(8, "weak* trend", ok,
               ", ".join(f"{n} {tab.discrepancies(n)[0]:.4f}->{tab.discrepancies(n)[-1]:.4f}" for n in names)
               + f"; factorization {fac['joint']:.5f} vs {fac['product']:.5f} ({fac['z']:.2f} sigma)")
    assert ok


# ------------------------------------------------------------------------- 9

@pytest.mark.slow
def test_09_pair_linking_trend(acceptance):
    tab = st.pair_linking_experiment(FLOW, range(4, 11), mc_samples=100_000, seed=0)
    diag = tab.diagonal()
    ok = diag[-1][1] <= diag[0][1] and not tab.excluded
    acceptance(9, "pair-linking trend", ok,
               f"target {tab.target:.4f} +- {tab.target_stderr:.4f}, discrepancy S=T=4 {diag[0][1]:.4f}, "
               f"S=T=10 {diag[-1][1]:.4f}, excluded pairs {len(tab.excluded)}")
    assert ok


# ------------------------------------------------------------------------ 10

def test_10_determinism(acceptance, tmp_path):
    base = {"T": [5.0, 6.0], "S": [4.0, 5.0], "R": [0.2, 0.1], "words": ["01", "001"], "mc_samples": 4000,
            "seed": 123}
    differing = []
    for kind in ("converge", "weakstar", "tube", "pairlink"):
        runs = []
        for threads in (1, 2):
            cfg = cli.RunConfig.from_mapping(dict(base, threads=threads, command=f"experiment {kind}"))
            runs.append(cli.run_experiment(cfg, kind).files)
        if runs[0] != runs[1]:
            differing.append(kind)
    for threads in (1, 2):
        cfg = cli.RunConfig.from_mapping(dict(base, threads=threads, cache=str(tmp_path / f"c{threads}"),
                                              out=str(tmp_path / f"o{threads}")))
        cli.cmd_flow(cfg, argparse.Namespace(action="orbits", allow_flagged=True))
    if (tmp_path / "o1" / "orbits.csv").read_bytes() != (tmp_path / "o2" / "orbits.csv").read_bytes():
        differing.append("orbits")
    ok = not differing
    acceptance(10, "determinism", ok, "converge, weakstar, tube, pairlink and orbit outputs identical for 1 and 2 "
               "threads" if ok else f"differ: {differing}")
    assert ok
