"""Orbit measures, ensemble averages and the desk-scale convergence experiments.

Everything here is built on the periodic orbits of a :class:`TemplateFlow`.
Orbit integrals are cached per flow in an :class:`OrbitCache`; Monte Carlo
targets use the measure of maximal entropy from :mod:`orbitknots.flow`.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numba
import numpy as np
from scipy.spatial import cKDTree

from . import diagrams as dg
from .flow import (FlowError, OrbitEnsemble, PeriodicOrbit, TemplateFlow, enumerate_orbits, flow_integrand,
                   flow_to_dict, max_entropy_measure, monte_carlo_integral, orbit_knot, orbit_samples)
from .integrals import (FOUR_PI, QuadratureReport, _segment_pair_angle, abs_gauss_polygon, config_integral,
                        linking_combinatorial, linking_polygon, match_fast_path, writhe_polygon_extrapolated)
from .knots import KnotError
from .streams import generator, ordered_map

log = logging.getLogger(__name__)

D0 = dg.named_diagram("chord")
SAMPLES_PER_UNIT = 128


class EmptyEnsembleError(FlowError):
    pass


# ---------------------------------------------------------------------------
# cache


def flow_digest(flow: TemplateFlow) -> str:
    blob = json.dumps(flow_to_dict(flow), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _record_digest(record: dict) -> str:
    return hashlib.sha256(json.dumps(record, sort_keys=True).encode()).hexdigest()


class CacheCorrupt(ValueError):
    def __init__(self, path, reason):
        self.path = Path(path)
        super().__init__(f"{path}: {reason}")


class OrbitCache:
    """Per-flow directory of JSON records, one file per (quantity, key).

    Writes go to a temporary file and are renamed into place, so readers
    never see partial records. Each file stores the sha256 of its record.
    """

    def __init__(self, root, flow: TemplateFlow):
        self.flow = flow
        self.dir = Path(root) / flow_digest(flow)

    def _path(self, quantity: str, key: str) -> Path:
        safe = quantity.replace(":", "_").replace(" ", "").replace(";", "_").replace(",", "_")
        return self.dir / safe / f"{key}.json"

    def _ensure(self):
        if not (self.dir / "flow.json").exists():
            self.dir.mkdir(parents=True, exist_ok=True)
            _atomic_write(self.dir / "flow.json", json.dumps(flow_to_dict(self.flow), sort_keys=True, indent=1))

    def get(self, quantity: str, key: str) -> Optional[dict]:
        p = self._path(quantity, key)
        if not p.exists():
            return None
        return read_record(p)

    def put(self, record: dict) -> Path:
        self._ensure()
        p = self._path(record["quantity"], record["key"])
        p.parent.mkdir(parents=True, exist_ok=True)
        body = {"record": record, "sha256": _record_digest(record)}
        _atomic_write(p, json.dumps(body, sort_keys=True, indent=1))
        return p


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def read_record(path) -> dict:
    try:
        body = json.loads(Path(path).read_bytes().decode("utf-8"))
        record, digest = body["record"], body["sha256"]
    except (ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
        raise CacheCorrupt(path, f"unreadable record ({exc.__class__.__name__})") from None
    if _record_digest(record) != digest:
        raise CacheCorrupt(path, "digest mismatch")
    return record


# ---------------------------------------------------------------------------
# orbit integrals


def _orbit_knot(flow: TemplateFlow, word, samples_per_unit: int):
    return orbit_knot(flow, word, samples_per_unit=samples_per_unit)


def compute_orbit_record(flow: TemplateFlow, word: Sequence[int], quantity: str,
                         samples_per_unit: int = SAMPLES_PER_UNIT) -> dict:
    """Fresh computation of one cached quantity.

    ``quantity`` is ``"I_D0"`` (4 pi times the writhe), ``"abs_D0"`` (the
    double integral of |f_D0| over the orbit) or ``"I:<diagram>"``.
    """
    word = tuple(int(a) for a in word)
    label = "".join(map(str, word))
    K = _orbit_knot(flow, word, samples_per_unit)
    n = K.n_samples
    if quantity == "I_D0":
        rep = writhe_polygon_extrapolated(K, n)
        value, err = FOUR_PI * rep.value, FOUR_PI * rep.abs_error_estimate
    elif quantity == "abs_D0":
        hi, lo = abs_gauss_polygon(K, n), abs_gauss_polygon(K, n // 2)
        value, err = hi, abs(hi - lo)
    elif quantity.startswith("I:"):
        D = dg.parse_diagram(quantity[2:])
        hit = match_fast_path(D)
        if hit is not None and hit[0] == "D0":
            rep = writhe_polygon_extrapolated(K, n)
            value, err = hit[1] * FOUR_PI * rep.value, FOUR_PI * rep.abs_error_estimate
        else:
            rep = config_integral(D, K)
            value, err = rep.value, rep.abs_error_estimate
    else:
        raise ValueError(f"unknown orbit quantity {quantity!r}")
    return {"flow": flow_digest(flow), "quantity": quantity, "key": label, "period": flow.roof.word_period(word),
            "value": float(value), "error": float(err), "samples": int(n), "samples_per_unit": int(samples_per_unit)}


def diagram_quantity(D: dg.TrivalentDiagram) -> str:
    hit = match_fast_path(D)
    if hit == ("D0", 1):
        return "I_D0"
    return "I:" + dg.format_diagram(D)


def orbit_value(flow: TemplateFlow, word, quantity: str, cache: Optional[OrbitCache] = None) -> dict:
    label = "".join(map(str, word))
    if cache is not None:
        rec = cache.get(quantity, label)
        if rec is not None:
            return rec
    rec = compute_orbit_record(flow, word, quantity)
    if cache is not None:
        cache.put(rec)
    return rec


def orbit_values(flow: TemplateFlow, words: Sequence[Sequence[int]], quantity: str,
                 cache: Optional[OrbitCache] = None, threads: int = 1) -> List[dict]:
    """Records in word order; computation is parallel, cache writes are serial."""
    labels = ["".join(map(str, w)) for w in words]
    have = {}
    if cache is not None:
        for lab in labels:
            rec = cache.get(quantity, lab)
            if rec is not None:
                have[lab] = rec
    todo = [i for i, lab in enumerate(labels) if lab not in have]
    fresh = ordered_map(lambda i: compute_orbit_record(flow, words[i], quantity), todo, threads)
    for i, rec in zip(todo, fresh):
        have[labels[i]] = rec
        if cache is not None:
            cache.put(rec)
    return [have[lab] for lab in labels]


def _period_gap_message(flow: TemplateFlow, T: float) -> str:
    lo = hi = None
    probe = max(T + 1, 2 * T)
    try:
        for w in _all_orbit_words(flow, probe):
            p = flow.roof.word_period(w)
            if p <= T - 1 and (lo is None or p > lo):
                lo = p
            if p > T and (hi is None or p < hi):
                hi = p
    except FlowError:
        pass
    parts = [f"no periodic orbit has period in ({T - 1:g}, {T:g}]"]
    if lo is not None:
        parts.append(f"nearest below: {lo:.6g}")
    if hi is not None:
        parts.append(f"nearest above: {hi:.6g}")
    return "; ".join(parts)


def _all_orbit_words(flow: TemplateFlow, T: float):
    from .flow import lyndon_words

    n_max = int(math.floor(T / min(flow.roof.values) + 1e-12))
    for w in lyndon_words(flow.m, min(n_max, 16)):
        if flow.subshift.admissible(w) and flow.roof.word_period(w) <= T:
            yield w


def ensemble(flow: TemplateFlow, T: float, cap: int = 20000) -> OrbitEnsemble:
    """Orbits with period in (T - 1, T]; raises when that window is empty."""
    ens = enumerate_orbits(flow, T, cap)
    if len(ens) == 0:
        raise EmptyEnsembleError(_period_gap_message(flow, T))
    return ens


def average_integral(ens: OrbitEnsemble, D: dg.TrivalentDiagram = D0, cache: Optional[OrbitCache] = None,
                     threads: int = 1) -> float:
    """A_D(T): mean of I_D over the ensemble."""
    if len(ens) == 0:
        raise EmptyEnsembleError(f"no periodic orbit has period in ({ens.T - 1:g}, {ens.T:g}]")
    flow = ens.orbits[0].flow
    recs = orbit_values(flow, [o.word for o in ens], diagram_quantity(D), cache, threads)
    return math.fsum(r["value"] for r in recs) / len(recs)


# ---------------------------------------------------------------------------
# empirical measures


@dataclass(frozen=True)
class OrbitGrid:
    """Uniform time grid on one orbit; each node carries weight 1/n."""

    word: Tuple[int, ...]
    length: float
    points: np.ndarray
    velocities: np.ndarray

    @property
    def n(self) -> int:
        return len(self.points)

    @classmethod
    def build(cls, flow: TemplateFlow, word, samples_per_unit: int = 32) -> "OrbitGrid":
        word = tuple(int(a) for a in word)
        L = flow.roof.word_period(word)
        n = max(32, int(math.ceil(L * samples_per_unit)))
        P, V = orbit_samples(flow, word, n, with_velocity=True)
        return cls(word, L, P, V)


@dataclass
class EmpiricalMeasure:
    """Ensemble measure mu_{T,k}: average over orbits of the k-fold product of orbit measures.

    A single orbit gives mu_gamma^k.
    """

    grids: List[OrbitGrid]
    k: int = 1

    @classmethod
    def of_orbit(cls, flow: TemplateFlow, orbit, k: int = 1, samples_per_unit: int = 32):
        word = orbit.word if isinstance(orbit, PeriodicOrbit) else orbit
        return cls([OrbitGrid.build(flow, word, samples_per_unit)], k)

    @classmethod
    def of_ensemble(cls, ens: OrbitEnsemble, k: int = 1, samples_per_unit: int = 32):
        if len(ens) == 0:
            raise EmptyEnsembleError(f"no periodic orbit has period in ({ens.T - 1:g}, {ens.T:g}]")
        flow = ens.orbits[0].flow
        return cls([OrbitGrid.build(flow, o.word, samples_per_unit) for o in ens], k)

    def mass(self) -> float:
        per = [math.fsum(np.full(g.n, 1.0 / g.n)) ** self.k for g in self.grids]
        return math.fsum(per) / len(per)

    def integrate(self, psi: "TestFunction") -> float:
        if psi.k != self.k:
            raise ValueError(f"test function has k = {psi.k}, measure has k = {self.k}")
        vals = [psi.orbit_mean(g) for g in self.grids]
        return math.fsum(vals) / len(vals)


# ---------------------------------------------------------------------------
# test functions


@dataclass(frozen=True)
class TestFunction:
    """psi on (R^3)^k; ``factors`` lists the k one-point factors of a product function."""

    __test__ = False  # not a pytest class

    name: str
    k: int
    factors: Tuple[Callable[[np.ndarray], np.ndarray], ...]

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.ones(X.shape[:-2])
        for i, f in enumerate(self.factors):
            out = out * f(X[..., i, :])
        return out

    def orbit_mean(self, g: OrbitGrid) -> float:
        # product functions factor over the product grid
        return math.prod(float(np.mean(f(g.points))) for f in self.factors)

    def factor_means(self, g: OrbitGrid) -> List[float]:
        return [float(np.mean(f(g.points))) for f in self.factors]


def _coord(i):
    return lambda x: x[..., i]


def _bump(center, width):
    c = np.asarray(center, dtype=float)

    def f(x):
        return np.exp(-np.sum((x - c) ** 2, axis=-1) / (2 * width**2))

    return f


def shipped_test_functions(flow: TemplateFlow) -> List[TestFunction]:
    """Three k = 1 functions and one k = 2 product; scaled to the template.

    The y coordinate is avoided: every lobe is symmetric in y, so its orbit
    averages vanish identically and carry no information.
    """
    d = flow.diameter
    W = max(flow.strip_width, 1e-300)

    def z(x):
        return x[..., 2] / W

    return [
        TestFunction("x", 1, (_coord(0),)),
        TestFunction("z", 1, (z,)),
        TestFunction("bump", 1, (_bump((0.25 * d, 0.1 * d, 0.0), 0.2 * d),)),
        TestFunction("x*z", 2, (_coord(0), z)),
    ]


def constant_function(k: int = 1) -> TestFunction:
    return TestFunction("one", k, tuple(lambda x: np.ones(x.shape[:-1]) for _ in range(k)))


# ---------------------------------------------------------------------------
# records


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def csv_text(columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = [",".join(columns)]
    for r in rows:
        lines.append(",".join(_fmt(v) for v in r))
    return "\n".join(lines) + "\n"


@dataclass
class ConvergenceRecord:
    diagram: str
    k: int
    T: List[float]
    counts: List[int]
    values: List[float]
    target: float
    target_stderr: float
    target_excluded_bound: float
    sandwich: List[Tuple[float, float, float]]
    warnings: List[str] = field(default_factory=list)
    mc_samples: int = 0

    @property
    def discrepancy(self) -> List[float]:
        return [abs(v - self.target) for v in self.values]

    @property
    def trend_ok(self) -> bool:
        return self.discrepancy[-1] < self.discrepancy[0]

    @property
    def sandwich_ok(self) -> bool:
        return all(lo <= mid * (1 + 1e-12) and mid <= hi * (1 + 1e-12) for lo, mid, hi in self.sandwich)

    COLUMNS = ("T", "count", "value", "target", "stderr", "discrepancy", "sandwich_lower", "sandwich_mid",
               "sandwich_upper")

    def rows(self):
        for i, T in enumerate(self.T):
            lo, mid, hi = self.sandwich[i]
            yield (float(T), self.counts[i], self.values[i], self.target, self.target_stderr,
                   self.discrepancy[i], lo, mid, hi)

    def to_csv(self) -> str:
        return csv_text(self.COLUMNS, self.rows())

    def plot_data(self) -> str:
        head = f"# A_D(T)/T^{self.k} for D = {self.diagram}; target {self.target!r} +- {self.target_stderr!r}\n# T value\n"
        return head + "".join(f"{float(T)!r} {v!r}\n" for T, v in zip(self.T, self.values))

    def summary(self) -> dict:
        return {"diagram": self.diagram, "k": self.k, "target": self.target, "target_stderr": self.target_stderr,
                "target_excluded_bound": self.target_excluded_bound, "mc_samples": self.mc_samples,
                "trend_ok": self.trend_ok, "sandwich_ok": self.sandwich_ok, "warnings": list(self.warnings)}


def _check_grid(grid: Sequence[float], name: str = "T grid"):
    g = [float(x) for x in grid]
    if not g:
        raise ValueError(f"{name} is empty")
    if any(b <= a for a, b in zip(g, g[1:])):
        raise ValueError(f"{name} must be strictly increasing")
    return g


def convergence_experiment(flow: TemplateFlow, D: dg.TrivalentDiagram = D0, T_grid: Sequence[float] = range(4, 13),
                           mc_samples: int = 100_000, seed: int = 0, *, cache: Optional[OrbitCache] = None,
                           threads: int = 1, cap: int = 20000) -> ConvergenceRecord:
    """A_D(T)/T^k across the grid against the Monte Carlo value of int f_{D,X} dmu^k.

    The sandwich columns are, for f = |f_D0|, the three members of
    ((T-1)/T)^k int f dmu_{T,k} <= int f dnu_{T,k} / T^k <= int f dmu_{T,k}.
    They are only computed for the chord diagram (zeros otherwise).
    """
    grid = _check_grid(T_grid)
    k = D.k
    notes: List[str] = []
    counts, values, sandwich = [], [], []
    is_chord = diagram_quantity(D) == "I_D0"
    for T in grid:
        ens = ensemble(flow, T, cap)
        counts.append(len(ens))
        words = [o.word for o in ens]
        recs = orbit_values(flow, words, diagram_quantity(D), cache, threads)
        values.append(math.fsum(r["value"] for r in recs) / len(recs) / T**k)
        if is_chord:
            absr = orbit_values(flow, words, "abs_D0", cache, threads)
            lengths = [flow.roof.word_period(w) for w in words]
            mu = math.fsum(r["value"] / L**k for r, L in zip(absr, lengths)) / len(absr)
            nu = math.fsum(r["value"] for r in absr) / len(absr) / T**k
            sandwich.append((((T - 1) / T) ** k * mu, nu, mu))
        else:
            sandwich.append((0.0, 0.0, 0.0))
    if all(c == 1 for c in counts):
        msg = "every T in the grid has a single orbit; the trend is not informative"
        notes.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    mc = monte_carlo_integral(flow, D, mc_samples, seed, threads=threads, stream="stats.converge")
    return ConvergenceRecord(dg.format_diagram(D), k, grid, counts, values, mc.estimate, mc.stderr,
                             mc.excluded_bound, sandwich, notes, mc.n_samples)


# ---------------------------------------------------------------------------
# weak* convergence


@dataclass
class MCReference:
    value: float
    stderr: float


def mu_reference(flow: TemplateFlow, psi: TestFunction, n_samples: int, seed: int,
                 block: int = 65536, threads: int = 1) -> MCReference:
    """int psi dmu^k by iid sampling from the measure of maximal entropy."""
    mu = max_entropy_measure(flow)
    n_blocks = (n_samples + block - 1) // block

    def run(b):
        n = min(block, n_samples - b * block)
        rng = generator(seed, "stats.weakstar." + psi.name, b)
        X = np.stack([mu.sample_embedded(n, rng)[0] for _ in range(psi.k)], axis=1)
        v = psi(X)
        return math.fsum(v), math.fsum(v * v), n

    parts = ordered_map(run, range(n_blocks), threads)
    n = sum(p[2] for p in parts)
    m = math.fsum(p[0] for p in parts) / n
    var = max(math.fsum(p[1] for p in parts) / n - m * m, 0.0)
    return MCReference(m, math.sqrt(var / (n - 1)))


@dataclass
class WeakStarTable:
    rows: List[Tuple[str, int, float, int, float, float, float, float]]
    factorization: Dict[str, Dict[str, float]]

    COLUMNS = ("function", "k", "T", "count", "value", "reference", "stderr", "discrepancy")

    def to_csv(self) -> str:
        return csv_text(self.COLUMNS, self.rows)

    def discrepancies(self, name: str) -> List[float]:
        return [r[7] for r in self.rows if r[0] == name]

    def trend_ok(self, name: str) -> bool:
        d = self.discrepancies(name)
        return d[-1] < d[0]


def weakstar_test(flow: TemplateFlow, T_grid: Sequence[float] = range(4, 13),
                  test_functions: Optional[Sequence[TestFunction]] = None, mc_samples: int = 200_000,
                  seed: int = 0, samples_per_unit: int = 32, threads: int = 1) -> WeakStarTable:
    """|int psi dmu_{T,k} - int psi dmu^k| per test function and T.

    For every product function the table also records the factorization
    check: MC of psi under mu x mu against the product of the one-point MC
    means (same samples), with a combined standard error.
    """
    grid = _check_grid(T_grid)
    fns = list(test_functions) if test_functions is not None else shipped_test_functions(flow)
    refs = {f.name: mu_reference(flow, f, mc_samples, seed, threads=threads) for f in fns}
    rows = []
    for T in grid:
        ens = ensemble(flow, T)
        grids = [OrbitGrid.build(flow, o.word, samples_per_unit) for o in ens]
        for f in fns:
            val = math.fsum(f.orbit_mean(g) for g in grids) / len(grids)
            ref = refs[f.name]
            rows.append((f.name, f.k, float(T), len(grids), val, ref.value, ref.stderr, abs(val - ref.value)))
    fac = {}
    for f in fns:
        if f.k < 2:
            continue
        singles = [mu_reference(flow, TestFunction(f"{f.name}[{i}]", 1, (g,)), mc_samples, seed, threads=threads)
                   for i, g in enumerate(f.factors)]
        prod = math.prod(s.value for s in singles)
        # delta method for the product of independent means
        perr = math.sqrt(sum((prod / s.value * s.stderr) ** 2 if s.value else s.stderr**2 for s in singles))
        joint = refs[f.name]
        err = math.hypot(joint.stderr, perr)
        fac[f.name] = {"joint": joint.value, "product": prod, "stderr": err,
                       "z": abs(joint.value - prod) / err if err else 0.0}
    return WeakStarTable(rows, fac)


def deviation_diagnostic(flow: TemplateFlow, T_grid: Sequence[float], psi: TestFunction, delta: float,
                     reference: Optional[float] = None, mc_samples: int = 100_000, seed: int = 0,
                     samples_per_unit: int = 32) -> List[Tuple[float, int, float]]:
    """Fraction of orbits per T whose mu_gamma-average of psi is off by more than delta.

    Purely descriptive: no rate is fitted or asserted.
    """
    if psi.k != 1:
        raise ValueError("the deviation diagnostic takes a one-point test function")
    ref = reference if reference is not None else mu_reference(flow, psi, mc_samples, seed).value
    out = []
    for T in _check_grid(T_grid):
        ens = ensemble(flow, T)
        dev = [abs(psi.orbit_mean(OrbitGrid.build(flow, o.word, samples_per_unit)) - ref) > delta for o in ens]
        out.append((float(T), len(dev), sum(dev) / len(dev)))
    return out


# ---------------------------------------------------------------------------
# near-diagonal mass


@numba.njit(cache=True, nogil=True)
def _tube_abs_sum(P, M, V, I, J, h):
    """Sum of |g| over the listed chord pairs, counted once per unordered pair.

    Pairs on the same stretch of curve (arc gap comparable to distance) use
    the midpoint rule on the smooth kernel, which is bounded there. Pairs on
    different strands use the exact straight-segment integral, which stays
    accurate when the strand gap is below the grid spacing.
    """
    n = P.shape[0]
    s = 0.0
    for k in range(I.shape[0]):
        i = I[k]
        j = J[k]
        if i == j:
            continue
        gap = abs(i - j)
        gap = min(gap, n - gap) * h
        dx = M[j, 0] - M[i, 0]
        dy = M[j, 1] - M[i, 1]
        dz = M[j, 2] - M[i, 2]
        r = math.sqrt(dx * dx + dy * dy + dz * dz)
        if gap <= 1.5 * r + 2 * h:
            cx = V[j, 1] * V[i, 2] - V[j, 2] * V[i, 1]
            cy = V[j, 2] * V[i, 0] - V[j, 0] * V[i, 2]
            cz = V[j, 0] * V[i, 1] - V[j, 1] * V[i, 0]
            s += abs(dx * cx + dy * cy + dz * cz) / (r * r * r) * h * h
        elif j != (i + 1) % n and (j + 1) % n != i:
            s += abs(_segment_pair_angle(P[i], P[(i + 1) % n], P[j], P[(j + 1) % n]))
    return s


def tube_mass(flow: TemplateFlow, word, R: float, points_per_radius: int = 16, max_points: int = 400_000) -> float:
    """int over B_R of |f_D0| d mu_gamma^2, with B_R = {|x - y| < R}."""
    word = tuple(int(a) for a in word)
    L = flow.roof.word_period(word)
    if math.isinf(R):
        n = max(256, int(math.ceil(L * 64)))
    else:
        n = int(min(max_points, max(256, math.ceil(points_per_radius * L / R))))
    h = L / n
    P = orbit_samples(flow, word, n)
    Q, W = orbit_samples(flow, word, 2 * n, with_velocity=True)
    M, V = np.ascontiguousarray(Q[1::2]), np.ascontiguousarray(W[1::2])
    if math.isinf(R) or R >= 2 * flow.diameter:
        I, J = np.triu_indices(n, 1)
    else:
        pairs = cKDTree(M).query_pairs(R, output_type="ndarray")
        I, J = pairs[:, 0], pairs[:, 1]
    total = _tube_abs_sum(P, M, V, np.ascontiguousarray(I, dtype=np.int64), np.ascontiguousarray(J, dtype=np.int64), h)
    return 2.0 * total / L**2


@dataclass
class TubeTable:
    k: int
    rows: List[Tuple[str, float, float, float, float, float]]

    COLUMNS = ("word", "period", "R", "mass", "mass_over_R", "rescaled")

    def to_csv(self) -> str:
        return csv_text(self.COLUMNS, self.rows)

    def ratio_spread(self) -> Dict[str, float]:
        """Per orbit, max/min of mass/R across the R grid."""
        out: Dict[str, List[float]] = {}
        for w, _, _, _, q, _ in self.rows:
            out.setdefault(w, []).append(q)
        return {w: (max(v) / min(v) if min(v) > 0 else math.inf) for w, v in out.items()}

    def rescaled_spread(self) -> Dict[float, float]:
        """Per R, max/min across orbits of mass * l^(k-1) / R."""
        out: Dict[float, List[float]] = {}
        for _, _, R, _, _, s in self.rows:
            out.setdefault(R, []).append(s)
        return {R: (max(v) / min(v) if min(v) > 0 else math.inf) for R, v in out.items()}


def near_diagonal_mass(flow: TemplateFlow, orbits, D: dg.TrivalentDiagram = D0,
                       R_grid: Sequence[float] = (1e-1, 1e-2, 1e-3), relative: bool = True,
                       threads: int = 1) -> TubeTable:
    """Mass of |f_{D,X}| over the tube B_R under mu_gamma^k, per orbit and R.

    ``relative`` takes R in units of the template diameter. Only the chord
    diagram (k = 2) is supported.
    """
    if diagram_quantity(D) != "I_D0":
        raise NotImplementedError("near-diagonal mass is implemented for the chord diagram only")
    R_vals = [float(r) * (flow.diameter if relative else 1.0) for r in R_grid]
    if any(b >= a for a, b in zip(R_vals, R_vals[1:])):
        raise ValueError("R grid must be decreasing")
    words = [o.word if isinstance(o, PeriodicOrbit) else tuple(o) for o in orbits]
    jobs = [(w, R) for w in words for R in R_vals]
    masses = ordered_map(lambda i: tube_mass(flow, *jobs[i]), range(len(jobs)), threads)
    rows = []
    for (w, R), m in zip(jobs, masses):
        L = flow.roof.word_period(w)
        rows.append(("".join(map(str, w)), L, R, m, m / R, m * L ** (D.k - 1) / R))
    return TubeTable(D.k, rows)


# ---------------------------------------------------------------------------
# pair linking


def linking_record(flow: TemplateFlow, w1, w2, method: str = "polygon",
                   samples_per_unit: int = SAMPLES_PER_UNIT) -> Optional[int]:
    """Integer linking number of two distinct orbits, or None when it cannot be certified."""
    K1 = _orbit_knot(flow, w1, samples_per_unit)
    K2 = _orbit_knot(flow, w2, samples_per_unit)
    if method == "combinatorial":
        try:
            return int(linking_combinatorial(K1, K2))
        except KnotError as exc:
            log.warning("linking of %s and %s failed: %s", w1, w2, exc)
            return None
    val = linking_polygon(K1, K2, K1.n_samples, K2.n_samples)
    lk = int(round(val))
    if abs(val - lk) > 0.05:
        log.warning("orbits %s and %s: Gauss integral %.4f is not near an integer", w1, w2, val)
        return None
    return lk


@dataclass
class PairLinkTable:
    rows: List[Tuple[float, float, int, int, float, float, float, float]]
    excluded: List[Tuple[str, str]]
    target: float
    target_stderr: float

    COLUMNS = ("S", "T", "count_S", "count_T", "average", "target", "stderr", "discrepancy")

    def to_csv(self) -> str:
        return csv_text(self.COLUMNS, self.rows)

    def diagonal(self) -> List[Tuple[float, float]]:
        return [(r[0], r[7]) for r in self.rows if r[0] == r[1]]


def pair_linking_experiment(flow: TemplateFlow, S_grid: Sequence[float] = range(4, 11),
                            T_grid: Optional[Sequence[float]] = None, mc_samples: int = 100_000, seed: int = 0,
                            method: str = "polygon", threads: int = 1) -> PairLinkTable:
    """sum lk(gamma, eta) / (S T #P_S #P_T) for every (S, T), against int I d(mu x mu).

    When the two classes coincide the diagonal terms gamma = eta enter
    through the self-linking Gauss integral, i.e. the writhe. The target is
    the Monte Carlo value of the chord integrand divided by 4 pi.
    """
    S_grid = _check_grid(S_grid, "S grid")
    T_grid = _check_grid(T_grid if T_grid is not None else S_grid)
    ens = {t: ensemble(flow, t) for t in sorted(set(S_grid) | set(T_grid))}
    lk: Dict[Tuple[Tuple[int, ...], Tuple[int, ...]], Optional[float]] = {}
    excluded = []
    pairs = sorted({tuple(sorted((a.word, b.word))) for S in S_grid for T in T_grid
                    for a in ens[S] for b in ens[T] if a.word != b.word})
    vals = ordered_map(lambda i: linking_record(flow, pairs[i][0], pairs[i][1], method), range(len(pairs)), threads)
    for p, v in zip(pairs, vals):
        lk[p] = v
    selfs = sorted({o.word for t in ens for o in ens[t]})
    wr = orbit_values(flow, selfs, "I_D0", None, threads)
    for w, r in zip(selfs, wr):
        lk[(w, w)] = r["value"] / FOUR_PI
    mc = monte_carlo_integral(flow, D0, mc_samples, seed, threads=threads, stream="stats.pairlink")
    target, err = mc.estimate / FOUR_PI, mc.stderr / FOUR_PI
    rows = []
    for S in S_grid:
        for T in T_grid:
            tot, n = [], 0
            for a in ens[S]:
                for b in ens[T]:
                    key = tuple(sorted((a.word, b.word)))
                    v = lk[key]
                    if v is None:
                        excluded.append(("".join(map(str, a.word)), "".join(map(str, b.word))))
                        continue
                    tot.append(v)
                    n += 1
            avg = math.fsum(tot) / (S * T * n) if n else math.nan
            rows.append((float(S), float(T), len(ens[S]), len(ens[T]), avg, target, err, abs(avg - target)))
    if excluded:
        warnings.warn(f"{len(excluded)} orbit pairs excluded from the linking average", RuntimeWarning, stacklevel=2)
    return PairLinkTable(rows, sorted(set(excluded)), target, err)


# ---------------------------------------------------------------------------
# cache audit


@dataclass
class CacheReport:
    checked: int = 0
    passed: int = 0
    mismatched: List[str] = field(default_factory=list)
    corrupted: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatched and not self.corrupted

    def to_dict(self) -> dict:
        return {"checked": self.checked, "passed": self.passed, "mismatched": self.mismatched,
                "corrupted": self.corrupted, "ok": self.ok}


def cache_verify(cache_dir, fraction: float = 0.1, seed: int = 0) -> CacheReport:
    """Check every record's digest and recompute a random subset.

    A recomputed value must agree with the stored one within the larger of
    the two error estimates (plus rounding slack).
    """
    from .flow import flow_from_dict

    root = Path(cache_dir)
    if not root.exists():
        raise FileNotFoundError(f"no cache at {root}; build one with `orbitknots flow orbits --cache {root}`")
    rep = CacheReport()
    for fdir in sorted(p for p in root.iterdir() if p.is_dir()):
        try:
            flow = flow_from_dict(json.loads((fdir / "flow.json").read_text()))
        except (OSError, ValueError) as exc:
            rep.corrupted.append(f"{fdir.name}/flow.json ({exc.__class__.__name__})")
            continue
        if flow_digest(flow) != fdir.name:
            rep.corrupted.append(f"{fdir.name}/flow.json (digest mismatch)")
            continue
        files = sorted(p for p in fdir.rglob("*.json") if p.name != "flow.json" and not p.name.startswith(".tmp"))
        good = []
        for p in files:
            try:
                good.append(read_record(p))
            except CacheCorrupt:
                rep.corrupted.append(str(p.relative_to(root)))
        if not good:
            continue
        rng = generator(seed, "cache.audit", int(fdir.name[:8], 16))
        n_audit = max(1, int(math.ceil(fraction * len(good)))) if fraction > 0 else 0
        pick = sorted(rng.choice(len(good), size=min(n_audit, len(good)), replace=False).tolist())
        for i in pick:
            rec = good[i]
            fresh = compute_orbit_record(flow, tuple(int(c) for c in rec["key"]), rec["quantity"],
                                         samples_per_unit=int(rec.get("samples_per_unit", SAMPLES_PER_UNIT)))
            tol = max(rec["error"], fresh["error"]) + 1e-12 * max(1.0, abs(rec["value"]))
            rep.checked += 1
            if abs(fresh["value"] - rec["value"]) <= tol:
                rep.passed += 1
            else:
                rep.mismatched.append(f"{rec['quantity']}:{rec['key']}")
    return rep
