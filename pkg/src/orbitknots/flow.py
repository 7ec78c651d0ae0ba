"""Suspension flows over subshifts of finite type, carried by a two-lobe template.

Symbolic side: a mixing 0/1 adjacency matrix, a locally constant roof, the
flow entropy h and the measure of maximal entropy, periodic orbits as Lyndon
words.

Geometric side: the branch line is the segment {(0, 0, W u) : u in [0, 1]}.
Symbol a owns the sub-interval [a/m, (a+1)/m) and its strip is a lobe
through the origin, tangent to +y there, on side sigma_a of the yz-plane:

    xy(phi) = lam * (sigma_a * B * sin^4(phi / 2), C * sin(phi)),  phi in [0, 2 pi]
    z(phi)  = W * (u + S(phi / 2 pi) * (m u - a - u))

with S the quintic smoothstep. The lobe vanishes to fourth order at the
origin, so consecutive arcs join C^2 with unit tangent +y. ``lam`` is solved
per arc so the arc has length exactly r(a); the flow is unit speed along
the arcs. Distinct points on one lobe differ in z, and lobes meet only along
the branch line, so distinct orbits are disjoint.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .knots import EmbeddingError, Knot, check_embedded

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0
SCHEMA_VERSION = 1


class FlowError(ValueError):
    pass


# ---------------------------------------------------------------------------
# symbolic dynamics


@dataclass(frozen=True)
class Subshift:
    adjacency: Tuple[Tuple[int, ...], ...]

    def __post_init__(self):
        A = np.asarray(self.adjacency, dtype=np.int64)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
            raise FlowError("adjacency must be a square matrix")
        if not np.isin(A, (0, 1)).all():
            raise FlowError("adjacency entries must be 0 or 1")
        object.__setattr__(self, "adjacency", tuple(tuple(int(x) for x in row) for row in A))
        if not self.is_mixing():
            raise FlowError("adjacency matrix is not mixing (no power with all entries positive)")

    @property
    def m(self) -> int:
        return len(self.adjacency)

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.adjacency, dtype=float)

    def mixing_exponent(self) -> Optional[int]:
        """Smallest p <= m^2 with A^p > 0, or None."""
        A = np.array(self.adjacency, dtype=np.int64)
        P = A.copy()
        for p in range(1, self.m**2 + 1):
            if (P > 0).all():
                return p
            P = np.minimum(P @ A, 1)
        return None

    def is_mixing(self) -> bool:
        return self.mixing_exponent() is not None

    def admissible(self, word: Sequence[int], cyclic: bool = True) -> bool:
        n = len(word)
        pairs = range(n) if cyclic else range(n - 1)
        return all(self.adjacency[word[i]][word[(i + 1) % n]] for i in pairs)

    @classmethod
    def full(cls, m: int = 2) -> "Subshift":
        return cls(tuple(tuple(1 for _ in range(m)) for _ in range(m)))

    @classmethod
    def golden_mean(cls) -> "Subshift":
        return cls(((1, 1), (1, 0)))


@dataclass(frozen=True)
class RoofFunction:
    values: Tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals or min(vals) <= 0 or not all(math.isfinite(v) for v in vals):
            raise FlowError("roof values must be positive and finite")
        object.__setattr__(self, "values", vals)

    def __getitem__(self, a: int) -> float:
        return self.values[a]

    def __len__(self) -> int:
        return len(self.values)

    def has_irrational_ratio(self, max_den: int = 1000, tol: float = 1e-9) -> bool:
        """Heuristic: some ratio is not within tol of a fraction with denominator <= max_den."""
        v = self.values
        for i in range(len(v)):
            for j in range(i + 1, len(v)):
                q = v[i] / v[j]
                if abs(q - float(Fraction(q).limit_denominator(max_den))) > tol:
                    return True
        return False

    def word_period(self, word: Sequence[int]) -> float:
        return math.fsum(self.values[a] for a in word)


# ---------------------------------------------------------------------------
# template geometry

_GL_X, _GL_W = np.polynomial.legendre.leggauss(48)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def _smooth(tau):
    return tau**3 * (10.0 + tau * (-15.0 + 6.0 * tau))


def _smooth_d(tau):
    return 30.0 * tau**2 * (1.0 - tau) ** 2


@dataclass(frozen=True)
class TemplateEmbedding:
    """Two lobes meeting along the branch line.

    ``layering_fraction`` sets the branch-line length W as a fraction of the
    template diameter; it is also the total spread between stacked strands.
    """

    sides: Tuple[int, ...] = (-1, 1)
    lobe_width: float = 1.0
    lobe_height: float = 0.6
    layering_fraction: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "sides", tuple(int(s) for s in self.sides))
        if any(s not in (-1, 1) for s in self.sides):
            raise FlowError("template sides must be -1 or +1")
        if len(set(self.sides)) != len(self.sides):
            raise FlowError("each lobe needs its own side of the branch line; at most two symbols")
        if self.lobe_width <= 0 or self.lobe_height <= 0:
            raise FlowError("lobe dimensions must be positive")
        if self.layering_fraction < 0:
            raise FlowError("layering_fraction must be non-negative")

    @property
    def planar(self) -> bool:
        # zero layering flattens the template into z = 0; orbits are then immersed, not embedded
        return self.layering_fraction == 0

    def base_length(self) -> float:
        """Length of the unit lobe (lam = 1, flat strip)."""
        phi = 2 * math.pi * _GL_X
        return float(2 * math.pi * np.dot(_GL_W, self._dp_norm(phi)))

    def _dp_norm(self, phi):
        s, c = np.sin(0.5 * phi), np.cos(0.5 * phi)
        dx = self.lobe_width * 2.0 * s**3 * c
        dy = self.lobe_height * np.cos(phi)
        return np.hypot(dx, dy)

    def doubled(self) -> "TemplateEmbedding":
        return TemplateEmbedding(self.sides, self.lobe_width, self.lobe_height, 2 * self.layering_fraction)


@dataclass(frozen=True)
class TemplateFlow:
    subshift: Subshift
    roof: RoofFunction
    embedding: Optional[TemplateEmbedding] = TemplateEmbedding()
    name: str = "flow"

    def __post_init__(self):
        if len(self.roof) != self.subshift.m:
            raise FlowError(f"roof has {len(self.roof)} values for {self.subshift.m} symbols")
        if self.embedding is not None and len(self.embedding.sides) != self.subshift.m:
            raise FlowError("template needs exactly one lobe per symbol")

    @property
    def m(self) -> int:
        return self.subshift.m

    @property
    def weak_mixing_proxy(self) -> bool:
        return self.roof.has_irrational_ratio()

    @cached_property
    def diameter(self) -> float:
        E = self._emb()
        L0 = E.base_length()
        lam = [r / L0 for r in self.roof.values]
        xs = [0.0] + [s * l * E.lobe_width for s, l in zip(E.sides, lam)]
        ys = max(l * E.lobe_height for l in lam)
        return math.hypot(max(xs) - min(xs), 2 * ys)

    @property
    def strip_width(self) -> float:
        return self._emb().layering_fraction * self.diameter

    def _emb(self) -> TemplateEmbedding:
        if self.embedding is None:
            raise FlowError("this flow has no template embedding")
        return self.embedding

    # -- arcs -------------------------------------------------------------

    def _speed(self, phi, lam, dz, sigma):
        E = self._emb()
        s, c = np.sin(0.5 * phi), np.cos(0.5 * phi)
        dx = lam * sigma * E.lobe_width * 2.0 * s**3 * c
        dy = lam * E.lobe_height * np.cos(phi)
        ddz = dz * _smooth_d(phi / (2 * math.pi)) / (2 * math.pi)
        return np.sqrt(dx * dx + dy * dy + ddz * ddz)

    def _arc_length(self, phi, lam, dz, sigma):
        """int_0^phi speed, vectorised over the leading axis."""
        phi = np.asarray(phi, dtype=float)
        nodes = phi[..., None] * _GL_X
        sp = self._speed(nodes, np.asarray(lam)[..., None], np.asarray(dz)[..., None], np.asarray(sigma)[..., None])
        return phi * (sp @ _GL_W)

    def _solve_lam(self, a, dz):
        """Scale making the arc of symbol a with z-rise dz have length r(a)."""
        E = self._emb()
        a = np.asarray(a)
        r = np.asarray(self.roof.values)[a]
        sigma = np.asarray(E.sides)[a]
        lam = r / E.base_length()
        full = np.full(np.shape(lam), 2 * math.pi)
        nodes = full[..., None] * _GL_X
        dpn = self._emb()._dp_norm(nodes)
        for _ in range(50):
            sp = self._speed(nodes, lam[..., None], np.asarray(dz)[..., None], sigma[..., None])
            f = full * (sp @ _GL_W) - r
            df = full * ((lam[..., None] * dpn**2 / sp) @ _GL_W)
            step = f / df
            lam = lam - step
            if np.all(np.abs(step) <= 1e-15 * lam):
                break
        return lam

    def arc_points(self, a, u, t, with_velocity: bool = False):
        """Position (and unit velocity) at arc length t along the arc of symbol a entering at u."""
        E = self._emb()
        a = np.asarray(a, dtype=np.int64)
        u = np.asarray(u, dtype=float)
        t = np.asarray(t, dtype=float)
        W = self.strip_width
        m = self.m
        dz = W * ((m * u - a) - u)
        lam = self._solve_lam(a, dz)
        sigma = np.asarray(E.sides, dtype=float)[a]
        r = np.asarray(self.roof.values)[a]
        phi = 2 * math.pi * t / r
        for _ in range(60):
            g = self._arc_length(phi, lam, dz, sigma) - t
            step = g / self._speed(phi, lam, dz, sigma)
            phi = np.clip(phi - step, 0.0, 2 * math.pi)
            if np.all(np.abs(step) <= 1e-14):
                break
        s, c = np.sin(0.5 * phi), np.cos(0.5 * phi)
        tau = phi / (2 * math.pi)
        pos = np.stack([lam * sigma * E.lobe_width * s**4, lam * E.lobe_height * np.sin(phi),
                        W * u + dz * _smooth(tau)], axis=-1)
        if not with_velocity:
            return pos
        vel = np.stack([lam * sigma * E.lobe_width * 2.0 * s**3 * c, lam * E.lobe_height * np.cos(phi),
                        dz * _smooth_d(tau) / (2 * math.pi)], axis=-1)
        vel /= np.linalg.norm(vel, axis=-1, keepdims=True)
        return pos, vel

    def branch_coordinate(self, window: np.ndarray) -> np.ndarray:
        """u = sum_k x_k m^{-(k+1)} for symbol windows of shape (..., L)."""
        L = window.shape[-1]
        w = float(self.m) ** -np.arange(1, L + 1)
        return window @ w


# ---------------------------------------------------------------------------
# periodic orbits


def lyndon_words(m: int, n_max: int) -> Iterator[Tuple[int, ...]]:
    """Duval's algorithm: all Lyndon words over range(m) of length <= n_max, in lex order."""
    w = [-1]
    while w:
        w[-1] += 1
        yield tuple(w)
        k = len(w)
        while len(w) < n_max:
            w.append(w[len(w) - k])
        while w and w[-1] == m - 1:
            w.pop()


def is_primitive(word: Sequence[int]) -> bool:
    n = len(word)
    return all(tuple(word[i:]) + tuple(word[:i]) != tuple(word) for i in range(1, n))


def canonical_rotation(word: Sequence[int]) -> Tuple[int, ...]:
    w = tuple(word)
    return min(w[i:] + w[:i] for i in range(len(w)))


@dataclass(frozen=True)
class PeriodicOrbit:
    word: Tuple[int, ...]
    period: float
    flow: TemplateFlow = field(repr=False, compare=False, hash=False)

    @property
    def label(self) -> str:
        return "".join(str(a) for a in self.word)

    @cached_property
    def knot(self) -> Knot:
        return orbit_knot(self.flow, self.word)


@dataclass
class OrbitEnsemble:
    T: float
    orbits: List[PeriodicOrbit]

    def __len__(self) -> int:
        return len(self.orbits)

    def __iter__(self):
        return iter(self.orbits)

    @property
    def words(self) -> List[str]:
        return [o.label for o in self.orbits]


def enumerate_orbits(flow: TemplateFlow, T: float, cap: int = 20000) -> OrbitEnsemble:
    """Primitive admissible cyclic words with period in (T - 1, T]."""
    rmin = min(flow.roof.values)
    if T < rmin:
        raise FlowError(f"T = {T} is below the shortest roof value {rmin}")
    n_max = int(math.floor(T / rmin + 1e-12))
    out = []
    for w in lyndon_words(flow.m, n_max):
        p = flow.roof.word_period(w)
        if T - 1 < p <= T and flow.subshift.admissible(w):
            out.append(PeriodicOrbit(w, p, flow))
            if len(out) > cap:
                raise FlowError(f"more than {cap} orbits with period in ({T - 1}, {T}]; use a smaller T")
    out.sort(key=lambda o: (o.period, o.word))
    return OrbitEnsemble(T, out)


def word_branch_points(word: Sequence[int], m: int) -> np.ndarray:
    """Branch coordinates u_i of the periodic point for each rotation of the word."""
    n = len(word)
    den = m**n - 1
    out = []
    for i in range(n):
        rot = word[i:] + word[:i]
        num = 0
        for a in rot:
            num = num * m + a
        out.append(num / den)
    return np.array(out)


def orbit_samples(flow: TemplateFlow, word: Sequence[int], n: int, with_velocity: bool = False):
    """n points equally spaced in time around the orbit, starting at the branch line."""
    word = tuple(word)
    u = word_branch_points(word, flow.m)
    r = np.array([flow.roof[a] for a in word])
    starts = np.concatenate([[0.0], np.cumsum(r)])
    period = starts[-1]
    s = np.arange(n) * period / n
    idx = np.clip(np.searchsorted(starts, s, side="right") - 1, 0, len(word) - 1)
    t = s - starts[idx]
    return flow.arc_points(np.array(word)[idx], u[idx], t, with_velocity)


def orbit_knot(flow: TemplateFlow, word: Sequence[int], samples_per_unit: int = 128,
               check: bool = True, retries: int = 2) -> Knot:
    """Closed unit-speed curve of the orbit; parameter = time = arc length."""
    word = tuple(int(a) for a in word)
    if not flow.subshift.admissible(word):
        raise FlowError(f"word {word} is not admissible")
    period = flow.roof.word_period(word)
    n = max(64, int(math.ceil(period * samples_per_unit)))
    label = "".join(map(str, word))
    check = check and not flow._emb().planar
    for attempt in range(retries + 1):
        P = orbit_samples(flow, word, n)
        K = Knot(P, period, f"orbit:{label}", {"word": label, "period": repr(period)}, check=False)
        if not check:
            return K
        try:
            check_embedded(K, m=min(4 * n, 4096), rel_tol=1e-9)
            return K
        except EmbeddingError:
            if attempt == retries:
                raise
            flow = TemplateFlow(flow.subshift, flow.roof, flow._emb().doubled(), flow.name)
    raise AssertionError("unreachable")


# ---------------------------------------------------------------------------
# measure of maximal entropy


def _perron(M: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
    vals, right = np.linalg.eig(M)
    i = int(np.argmax(vals.real))
    lam = float(vals[i].real)
    vals_l, left = np.linalg.eig(M.T)
    j = int(np.argmax(vals_l.real))
    rv = np.abs(right[:, i].real)
    lv = np.abs(left[:, j].real)
    # power iteration polish
    for _ in range(200):
        rv2 = M @ rv
        rv2 /= rv2.sum()
        lv2 = M.T @ lv
        lv2 /= lv2.sum()
        if np.allclose(rv2, rv / rv.sum(), rtol=0, atol=1e-16) and np.allclose(lv2, lv / lv.sum(), rtol=0, atol=1e-16):
            rv, lv = rv2, lv2
            break
        rv, lv = rv2, lv2
    return lam, lv, rv


def spectral_radius(M: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(M))))


@dataclass(frozen=True)
class MaxEntropyMeasure:
    h: float
    stationary: np.ndarray
    transition: np.ndarray
    roof: Tuple[float, ...]
    flow: TemplateFlow = field(repr=False, compare=False)

    @property
    def symbol_weights(self) -> np.ndarray:
        """Probability that a flow point sits over symbol a: pi_a r(a) / sum."""
        w = self.stationary * np.asarray(self.roof)
        return w / w.sum()

    def stationarity_residual(self) -> float:
        return float(np.abs(self.stationary @ self.transition - self.stationary).max())

    def sample_symbols(self, n: int, rng: np.random.Generator, window: int = 1) -> np.ndarray:
        """Windows of the stationary Markov chain, shape (n, window)."""
        out = np.empty((n, window), dtype=np.int64)
        cdf0 = np.cumsum(self.stationary)
        out[:, 0] = np.minimum(np.searchsorted(cdf0, rng.random(n) * cdf0[-1], side="right"), len(cdf0) - 1)
        cdf = np.cumsum(self.transition, axis=1)
        for k in range(1, window):
            row = cdf[out[:, k - 1]]
            x = rng.random(n)[:, None] * row[:, -1:]
            out[:, k] = np.minimum((row <= x).sum(axis=1), self.transition.shape[0] - 1)
        return out

    def sample_flow_points(self, n: int, rng: np.random.Generator, window: int = 56):
        """iid points of the flow-invariant measure: (symbols, heights)."""
        m = len(self.roof)
        w = self.symbol_weights
        a0 = np.minimum(np.searchsorted(np.cumsum(w), rng.random(n) * w.sum(), side="right"), m - 1)
        seq = np.empty((n, window), dtype=np.int64)
        seq[:, 0] = a0
        cdf = np.cumsum(self.transition, axis=1)
        for k in range(1, window):
            row = cdf[seq[:, k - 1]]
            x = rng.random(n)[:, None] * row[:, -1:]
            seq[:, k] = np.minimum((row <= x).sum(axis=1), m - 1)
        heights = rng.random(n) * np.asarray(self.roof)[a0]
        return seq, heights

    def embed(self, seq: np.ndarray, heights: np.ndarray):
        """Positions and unit velocities in R^3 of flow points."""
        u = self.flow.branch_coordinate(seq.astype(float))
        return self.flow.arc_points(seq[:, 0], u, heights, with_velocity=True)

    def sample_embedded(self, n: int, rng: np.random.Generator):
        seq, hts = self.sample_flow_points(n, rng)
        return self.embed(seq, hts)


def topological_entropy(flow: TemplateFlow, tol: float = 1e-15) -> float:
    """h with spectral radius of A(a, b) exp(-h r(a)) equal to 1, by bisection."""
    A = flow.subshift.matrix
    r = np.asarray(flow.roof.values)

    def rho(h):
        return spectral_radius(A * np.exp(-h * r)[:, None])

    lo, hi = 0.0, 1.0
    if rho(lo) <= 1.0:
        raise FlowError("spectral radius at h = 0 is not above 1; no positive entropy")
    k = 0
    while rho(hi) > 1.0:
        hi *= 2.0
        k += 1
        if k > 200:
            raise FlowError(f"could not bracket the entropy: rho({hi}) = {rho(hi)}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if rho(mid) > 1.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def max_entropy_measure(flow: TemplateFlow) -> MaxEntropyMeasure:
    """Perron data of the roof-weighted matrix; Markov chain P(a, b) = A_h(a, b) v_b / v_a."""
    h = topological_entropy(flow)
    A = flow.subshift.matrix
    r = np.asarray(flow.roof.values)
    Ah = A * np.exp(-h * r)[:, None]
    lam, left, right = _perron(Ah)
    P = Ah * right[None, :] / (lam * right[:, None])
    P /= P.sum(axis=1, keepdims=True)
    pi = left * right
    pi /= pi.sum()
    # polish stationarity: pi <- pi P converges geometrically for a mixing chain
    for _ in range(100):
        nxt = pi @ P
        nxt /= nxt.sum()
        if np.abs(nxt - pi).max() <= 1e-17:
            pi = nxt
            break
        pi = nxt
    return MaxEntropyMeasure(h, pi, P, flow.roof.values, flow)


# ---------------------------------------------------------------------------
# spec files


def default_flow() -> TemplateFlow:
    """Full 2-shift, roof (1, golden ratio), two-lobe template."""
    return TemplateFlow(Subshift.full(2), RoofFunction((1.0, GOLDEN)), TemplateEmbedding(), "default")


def build_flow(subshift, roof, embedding: Optional[TemplateEmbedding] = TemplateEmbedding(),
               name: str = "flow") -> TemplateFlow:
    """Validated flow; accepts raw adjacency rows and roof values as well."""
    if not isinstance(subshift, Subshift):
        subshift = Subshift(tuple(tuple(row) for row in subshift))
    if not isinstance(roof, RoofFunction):
        roof = RoofFunction(tuple(roof))
    flow = TemplateFlow(subshift, roof, embedding, name)
    if embedding is not None:
        # arcs must meet the branch line with matching ends
        for a in range(flow.m):
            u0 = a / flow.m
            p0, v0 = flow.arc_points(np.array([a]), np.array([u0]), np.array([0.0]), True)
            p1, v1 = flow.arc_points(np.array([a]), np.array([u0]), np.array([roof[a]]), True)
            if not (np.allclose(p0[0, :2], 0, atol=1e-12) and np.allclose(p1[0, :2], 0, atol=1e-12)
                    and np.allclose(v0, v1, atol=1e-9)):
                raise FlowError(f"arc of symbol {a} does not close on the branch line")
    return flow


def _parse_roof(v) -> float:
    if isinstance(v, str):
        table = {"golden": GOLDEN, "phi": GOLDEN, "sqrt2": math.sqrt(2.0)}
        if v.strip().lower() in table:
            return table[v.strip().lower()]
        return float(v)
    return float(v)


FLOW_KEYS = {"schema", "name", "alphabet", "adjacency", "roof", "template"}
TEMPLATE_KEYS = {"sides", "lobe_width", "lobe_height", "layering_fraction"}


def flow_from_dict(d: dict) -> TemplateFlow:
    unknown = set(d) - FLOW_KEYS
    if unknown:
        raise FlowError(f"unknown flow key(s): {', '.join(sorted(unknown))}")
    if int(d.get("schema", SCHEMA_VERSION)) != SCHEMA_VERSION:
        raise FlowError(f"unsupported flow schema {d.get('schema')}")
    adj = d.get("adjacency")
    if adj is None:
        raise FlowError("flow spec needs 'adjacency'")
    roof = [_parse_roof(v) for v in d.get("roof", [1.0] * len(adj))]
    emb = None
    tmpl = d.get("template", {})
    if tmpl is not False:
        bad = set(tmpl) - TEMPLATE_KEYS
        if bad:
            raise FlowError(f"unknown template key(s): {', '.join(sorted(bad))}")
        emb = TemplateEmbedding(**{k: (tuple(v) if k == "sides" else float(v)) for k, v in tmpl.items()})
    if "alphabet" in d and len(d["alphabet"]) != len(adj):
        raise FlowError("alphabet size does not match the adjacency matrix")
    return build_flow(adj, roof, emb, str(d.get("name", "flow")))


def flow_to_dict(flow: TemplateFlow) -> dict:
    out = {"schema": SCHEMA_VERSION, "name": flow.name, "alphabet": [str(a) for a in range(flow.m)],
           "adjacency": [list(r) for r in flow.subshift.adjacency], "roof": list(flow.roof.values)}
    if flow.embedding is not None:
        E = flow.embedding
        out["template"] = {"sides": list(E.sides), "lobe_width": E.lobe_width, "lobe_height": E.lobe_height,
                           "layering_fraction": E.layering_fraction}
    return out


def load_flow(path) -> TemplateFlow:
    with open(path, "rb") as fh:
        return flow_from_dict(tomllib.load(fh))


def dump_flow(flow: TemplateFlow) -> str:
    d = flow_to_dict(flow)
    lines = [f"schema = {d['schema']}", f'name = "{d["name"]}"',
             "alphabet = [" + ", ".join(f'"{a}"' for a in d["alphabet"]) + "]",
             "adjacency = [" + ", ".join("[" + ", ".join(map(str, r)) + "]" for r in d["adjacency"]) + "]",
             "roof = [" + ", ".join(repr(float(v)) for v in d["roof"]) + "]"]
    if "template" in d:
        t = d["template"]
        lines += ["", "[template]", "sides = [" + ", ".join(map(str, t["sides"])) + "]",
                  f"lobe_width = {t['lobe_width']!r}", f"lobe_height = {t['lobe_height']!r}",
                  f"layering_fraction = {t['layering_fraction']!r}"]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# integrands and Monte Carlo against the measure of maximal entropy


def flow_integrand(flow: TemplateFlow, D, X, V, y=None):
    """f_{D,X} at embedded points X (..., k, 3) with flow velocities V (..., k, 3).

    Free vertices are either given as ``y`` or integrated over R^3 (slow:
    adaptive cubature per configuration).
    """
    from .integrals import flow_frame_integrand, DomainError

    X = np.asarray(X, dtype=float)
    V = np.asarray(V, dtype=float)
    k = X.shape[-2]
    for i in range(k):
        for j in range(i + 1, k):
            if np.any(np.all(X[..., i, :] == X[..., j, :], axis=-1)):
                raise DomainError("coincident embedded points")
    if D.s == 0 or y is not None:
        return flow_frame_integrand(D, X, V, y)
    return _free_integral(D, X, V)


def _free_integral(D, X, V, rtol: float = 1e-3):
    from scipy.integrate import cubature
    from .integrals import flow_frame_integrand

    if D.s != 1:
        raise NotImplementedError("free-point integration is implemented for one free vertex")
    batch = X.shape[:-2]
    Xf = X.reshape(-1, X.shape[-2], 3)
    Vf = V.reshape(-1, V.shape[-2], 3)
    out = np.empty(len(Xf))
    for n in range(len(Xf)):
        c = Xf[n].mean(axis=0)
        a = float(np.abs(Xf[n] - c).max()) * 2 + 1e-3

        def f(z, n=n):
            # z in the unit ball-ish cube; y = c + a z / (1 - |z|_inf)
            zi = np.max(np.abs(z), axis=1)
            zi = np.minimum(zi, 1 - 1e-12)
            Y = c + a * z / (1 - zi)[:, None]
            jac = a**3 / (1 - zi) ** 4
            val = flow_frame_integrand(D, np.broadcast_to(Xf[n], (len(z),) + Xf[n].shape),
                                       np.broadcast_to(Vf[n], (len(z),) + Vf[n].shape), Y[:, None, :])
            return (np.where(np.isfinite(val), val, 0.0) * jac)[:, None]

        res = cubature(f, -np.ones(3), np.ones(3), rule="genz-malik", rtol=rtol, max_subdivisions=20000)
        out[n] = res.estimate[0]
    return out.reshape(batch)


@dataclass
class MCEstimate:
    estimate: float
    stderr: float
    n_samples: int
    excluded_fraction: float
    exclusion_radius: float
    excluded_bound: float
    flagged: bool = False

    def to_dict(self) -> Dict[str, float]:
        return {"estimate": self.estimate, "stderr": self.stderr, "n_samples": self.n_samples,
                "excluded_fraction": self.excluded_fraction, "exclusion_radius": self.exclusion_radius,
                "excluded_bound": self.excluded_bound, "flagged": self.flagged}


def monte_carlo_integral(flow: TemplateFlow, D, n_samples: int, seed: int, *,
                         measure: Optional[MaxEntropyMeasure] = None, exclusion: Optional[float] = None,
                         block: int = 16384, threads: int = 1, tol: Optional[float] = None,
                         stream: str = "flow.mc") -> MCEstimate:
    """iid k-tuples from mu^k; tuples with two points closer than ``exclusion`` count as 0.

    The excluded contribution is bounded by M * exclusion with M the largest
    observed mass(|f| on B_R)/R over R = 2, 4, 8 times the exclusion radius,
    per the linear tube-mass law.
    """
    if n_samples < 1000:
        raise ValueError("need at least 1000 samples")
    from .streams import generator, ordered_map

    mu = measure or max_entropy_measure(flow)
    eps = 1e-3 * flow.diameter if exclusion is None else float(exclusion)
    k = D.k
    radii = np.array([2.0, 4.0, 8.0]) * eps
    n_blocks = (n_samples + block - 1) // block

    def run(b: int):
        n = min(block, n_samples - b * block)
        rng = generator(seed, stream, b)
        pts = [mu.sample_embedded(n, rng) for _ in range(k)]
        X = np.stack([p[0] for p in pts], axis=1)
        V = np.stack([p[1] for p in pts], axis=1)
        dmin = np.full(n, np.inf)
        for i in range(k):
            for j in range(i + 1, k):
                dmin = np.minimum(dmin, np.linalg.norm(X[:, i] - X[:, j], axis=-1))
        keep = dmin >= eps
        f = np.zeros(n)
        if keep.any():
            f[keep] = flow_integrand(flow, D, X[keep], V[keep])
        near = [float(np.abs(f[(dmin < R) & keep]).sum()) for R in radii]
        return (math.fsum(f), math.fsum(f * f), n, int((~keep).sum()), near)

    parts = ordered_map(run, range(n_blocks), threads)
    s1 = math.fsum(p[0] for p in parts)
    s2 = math.fsum(p[1] for p in parts)
    n = sum(p[2] for p in parts)
    excl = sum(p[3] for p in parts)
    mean = s1 / n
    var = max(s2 / n - mean * mean, 0.0)
    stderr = math.sqrt(var / (n - 1))
    near = np.array([math.fsum(p[4][i] for p in parts) for i in range(len(radii))]) / n
    M = float(np.max(near / radii))
    flagged = tol is not None and stderr > tol
    return MCEstimate(mean, stderr, n, excl / n, eps, M * eps, flagged)
