"""Closed space curves, standard test knots and signed projection diagrams.

A :class:`Knot` is a periodic cubic spline through its samples, taken at
uniform parameter spacing on ``[0, param_length)``. Crossing signs follow the
right-hand rule: looking down the projection direction ``v`` (the over strand
has the larger coordinate along ``v``), a crossing is positive when
``(T_over x T_under) . v > 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numba
import numpy as np
from scipy.interpolate import CubicSpline

GK_ANGLE_TOL = 1e-3
TRANSVERSE_TOL = 1e-6
MIN_SAMPLES = 64


class KnotError(ValueError):
    pass


class NonGenericDirection(KnotError):
    def __init__(self, v, reason):
        self.direction = np.asarray(v, dtype=float)
        super().__init__(f"direction {np.array2string(self.direction, precision=6)} is not generic: {reason}")


class EmbeddingError(KnotError):
    def __init__(self, t1, t2, dist):
        self.params = (float(t1), float(t2))
        super().__init__(f"curve is not embedded: points at t={t1:.6g} and t={t2:.6g} are {dist:.3g} apart")


@dataclass(frozen=True, eq=False)
class Knot:
    samples: np.ndarray
    param_length: float = 2 * math.pi
    name: str = "knot"
    meta: Dict[str, str] = field(default_factory=dict)
    check: bool = True

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.samples, dtype=float))
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise KnotError("samples must be an (N, 3) array")
        if len(pts) > 1 and np.allclose(pts[0], pts[-1]):
            pts = pts[:-1]
        if len(pts) < MIN_SAMPLES:
            raise KnotError(f"need at least {MIN_SAMPLES} samples, got {len(pts)}")
        pts.setflags(write=False)
        object.__setattr__(self, "samples", pts)
        n = len(pts)
        t = np.linspace(0.0, self.param_length, n + 1)
        spline = CubicSpline(t, np.vstack([pts, pts[:1]]), bc_type="periodic", axis=0)
        object.__setattr__(self, "_spline", spline)
        object.__setattr__(self, "_derivs", [spline.derivative(m) for m in (1, 2, 3)])
        if self.check:
            check_embedded(self)

    @property
    def n_samples(self) -> int:
        return len(self.samples)

    def _wrap(self, t):
        return np.mod(np.asarray(t, dtype=float), self.param_length)

    def position(self, t):
        return self._spline(self._wrap(t))

    def derivative(self, t, order: int = 1):
        if order == 0:
            return self.position(t)
        return self._derivs[order - 1](self._wrap(t))

    def tangent(self, t):
        return self.derivative(t, 1)

    def grid(self, m: int) -> np.ndarray:
        return np.arange(m) * (self.param_length / m)

    def polyline(self, m: Optional[int] = None) -> np.ndarray:
        m = m or 4 * self.n_samples
        return self.position(self.grid(m))

    @property
    def length(self) -> float:
        return float(self.arc_length_table()[1][-1])

    def arc_length_table(self, per_segment: int = 8):
        """Cumulative arc length at the sample knots, by per-segment Gauss-Legendre."""
        x, w = np.polynomial.legendre.leggauss(per_segment)
        n = self.n_samples
        h = self.param_length / n
        t0 = np.arange(n) * h
        tt = t0[:, None] + 0.5 * h * (x[None, :] + 1.0)
        speed = np.linalg.norm(self.tangent(tt.ravel()), axis=1).reshape(tt.shape)
        seg = 0.5 * h * speed @ w
        return np.append(t0, self.param_length), np.concatenate([[0.0], np.cumsum(seg)])

    @property
    def diameter(self) -> float:
        # max pairwise distance over a subsample, good enough for scale choices
        p = self.polyline(min(4 * self.n_samples, 512))
        return float(np.linalg.norm(p[:, None, :] - p[None, :, :], axis=-1).max())

    def arclength_reparametrized(self, n: Optional[int] = None) -> "Knot":
        """Same curve resampled at equal arc length; parameter becomes arc length."""
        n = n or self.n_samples
        tk, sk = self.arc_length_table()
        total = sk[-1]
        # invert s(t) with a monotone cubic through the cumulative table, then polish by Newton
        from scipy.interpolate import PchipInterpolator

        inv = PchipInterpolator(sk, tk)
        s_target = np.arange(n) * total / n
        t = inv(s_target)
        x, w = np.polynomial.legendre.leggauss(16)
        for _ in range(3):
            idx = np.clip(np.searchsorted(tk, t, side="right") - 1, 0, len(tk) - 2)
            a = tk[idx]
            half = 0.5 * (t - a)
            nodes = a[:, None] + half[:, None] * (x[None, :] + 1.0)
            sp = np.linalg.norm(self.tangent(nodes.ravel()), axis=1).reshape(nodes.shape)
            s_now = sk[idx] + half * (sp @ w)
            t = t - (s_now - s_target) / np.linalg.norm(self.tangent(t), axis=1)
        meta = dict(self.meta)
        meta["parametrization"] = "arclength"
        return Knot(self.position(t), total, self.name, meta, check=False)

    def mirrored(self, axis: int = 2) -> "Knot":
        pts = np.array(self.samples)
        pts[:, axis] *= -1
        return Knot(pts, self.param_length, self.name + "-mirror", dict(self.meta), check=False)

    def transformed(self, matrix=None, shift=None) -> "Knot":
        pts = np.array(self.samples)
        if matrix is not None:
            pts = pts @ np.asarray(matrix, dtype=float).T
        if shift is not None:
            pts = pts + np.asarray(shift, dtype=float)
        return Knot(pts, self.param_length, self.name, dict(self.meta), check=False)


# ---------------------------------------------------------------------------
# embeddedness


@numba.njit(cache=True)
def _min_chord_distance(P):
    """(distance, i, j, s, t) for the closest pair of chords at least three apart."""
    m = P.shape[0]
    best, bi, bj, bs, bt = np.inf, 0, 0, 0.0, 0.0
    half = np.empty(m)
    mid = np.empty((m, 3))
    for i in range(m):
        q = P[(i + 1) % m]
        for k in range(3):
            mid[i, k] = 0.5 * (P[i, k] + q[k])
        half[i] = 0.5 * math.sqrt((q[0] - P[i, 0]) ** 2 + (q[1] - P[i, 1]) ** 2 + (q[2] - P[i, 2]) ** 2)
    for i in range(m):
        p0 = P[i]
        p1 = P[(i + 1) % m]
        for j in range(i + 3, m):
            if i + m - j <= 2:
                continue
            dx = mid[i, 0] - mid[j, 0]
            dy = mid[i, 1] - mid[j, 1]
            dz = mid[i, 2] - mid[j, 2]
            lower = math.sqrt(dx * dx + dy * dy + dz * dz) - half[i] - half[j]
            if lower >= best:
                continue
            q0 = P[j]
            q1 = P[(j + 1) % m]
            d1 = p1 - p0
            d2 = q1 - q0
            r = p0 - q0
            a = d1 @ d1
            e = d2 @ d2
            f = d2 @ r
            c = d1 @ r
            b = d1 @ d2
            den = a * e - b * b
            s = 0.0
            if den > 1e-300:
                s = min(1.0, max(0.0, (b * f - c * e) / den))
            t = min(1.0, max(0.0, (b * s + f) / e))
            s = min(1.0, max(0.0, (b * t - c) / a))
            w = p0 + s * d1 - q0 - t * d2
            dist = math.sqrt(w @ w)
            if dist < best:
                best, bi, bj, bs, bt = dist, i, j, s, t
    return best, bi, bj, bs, bt


def check_embedded(K: Knot, m: Optional[int] = None, rel_tol: float = 1e-6) -> float:
    """Smallest distance between non-neighbouring chords of a dense polyline.

    Raises :class:`EmbeddingError` naming the offending parameter pair when it
    falls below ``rel_tol`` times the curve size.
    """
    m = m or min(4 * K.n_samples, 1536)
    P = np.ascontiguousarray(K.polyline(m))
    size = float(np.ptp(P, axis=0).max())
    dist, i, j, s, t = _min_chord_distance(P)
    h = K.param_length / m
    if dist <= rel_tol * size:
        raise EmbeddingError((i + s) * h, (j + t) * h, dist)
    return float(dist)


# ---------------------------------------------------------------------------
# builders


def circle(radius: float = 1.0, n: int = 256, center=(0.0, 0.0, 0.0), normal=(0.0, 0.0, 1.0), name="circle") -> Knot:
    t = np.arange(n) * 2 * math.pi / n
    e1, e2, e3 = _frame(np.asarray(normal, dtype=float))
    pts = np.asarray(center, float) + radius * (np.cos(t)[:, None] * e1 + np.sin(t)[:, None] * e2)
    return Knot(pts, 2 * math.pi, name, {"builder": "circle", "radius": repr(radius)})


def torus_knot(p: int = 2, q: int = 3, n: int = 256, R: float = 2.0, r: float = 1.0, name=None) -> Knot:
    if math.gcd(p, q) != 1:
        raise KnotError("torus knot needs coprime (p, q)")
    # the minus sign makes T(p, q) with p, q > 0 a positive knot (right-handed trefoil)
    t = np.arange(n) * 2 * math.pi / n
    rho = R + r * np.cos(q * t)
    pts = np.column_stack([rho * np.cos(p * t), rho * np.sin(p * t), -r * np.sin(q * t)])
    return Knot(pts, 2 * math.pi, name or f"torus({p},{q})", {"builder": "torus", "p": str(p), "q": str(q)})


def trefoil(n: int = 256, handed: str = "right") -> Knot:
    K = torus_knot(2, 3, n, name="trefoil")
    return K if handed == "right" else K.mirrored()


def figure_eight(n: int = 256) -> Knot:
    """Lissajous-type figure-eight: ((2+cos 2t) cos 3t, (2+cos 2t) sin 3t, sin 4t)."""
    t = np.arange(n) * 2 * math.pi / n
    rho = 2 + np.cos(2 * t)
    pts = np.column_stack([rho * np.cos(3 * t), rho * np.sin(3 * t), np.sin(4 * t)])
    return Knot(pts, 2 * math.pi, "figure-eight", {"builder": "figure8"})


def hopf_link(n: int = 256) -> Tuple[Knot, Knot]:
    a = circle(1.0, n, (0, 0, 0), (0, 0, 1), name="hopf-a")
    b = circle(1.0, n, (1.0, 0, 0), (0, 1, 0), name="hopf-b")
    return a, b


def distant_circles(n: int = 256, gap: float = 10.0) -> Tuple[Knot, Knot]:
    a = circle(1.0, n, (0, 0, 0), (0, 0, 1), name="far-a")
    b = circle(1.0, n, (0, 0, gap), (0, 0, 1), name="far-b")
    return a, b


def perturbed(K: Knot, amplitude: float, seed: int, modes: int = 4, n: Optional[int] = None) -> Knot:
    """Smooth random Fourier displacement of ``K`` of max size about ``amplitude``."""
    rng = np.random.default_rng(seed)
    n = n or K.n_samples
    t = np.arange(n) * K.param_length / n
    theta = 2 * math.pi * t / K.param_length
    disp = np.zeros((n, 3))
    for m in range(1, modes + 1):
        a, b = rng.normal(size=(2, 3)) / m
        disp += np.outer(np.cos(m * theta), a) + np.outer(np.sin(m * theta), b)
    disp *= amplitude / np.abs(disp).max()
    meta = dict(K.meta)
    meta.update({"perturbation_seed": str(seed), "perturbation_amplitude": repr(amplitude)})
    return Knot(K.position(t) + disp, K.param_length, K.name + f"~{seed}", meta)


def isotopic_perturbation(K: Knot, seed: int, stretch: float = 1.6, amplitude: float = 0.1,
                          steps: int = 16) -> Knot:
    """Random orientation-preserving stretch plus a smooth bump, checked along the path.

    The linear part is diag(e^{a_i}) in a random orthonormal frame with
    |a_i| <= log(stretch), so it lies in GL+(3) and is joined to the identity
    through embedded curves. ``amplitude`` is relative to the smallest
    distance between non-neighbouring chords. The straight-line homotopy from
    ``K`` is sampled at ``steps`` points and each stage must stay embedded;
    otherwise :class:`EmbeddingError` propagates.
    """
    rng = np.random.default_rng(seed)
    Q, R = np.linalg.qr(rng.normal(size=(3, 3)))
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    a = rng.uniform(-1.0, 1.0, 3) * math.log(stretch)
    M = Q @ np.diag(np.exp(a)) @ Q.T
    gap = check_embedded(K)
    t = K.grid(K.n_samples)
    P0 = K.position(t)
    c = P0.mean(axis=0)
    target = (P0 - c) @ M.T + c
    theta = 2 * math.pi * t / K.param_length
    disp = np.zeros_like(P0)
    for m in range(1, 5):
        u, v = rng.normal(size=(2, 3)) / m
        disp += np.outer(np.cos(m * theta), u) + np.outer(np.sin(m * theta), v)
    target += disp * (amplitude * gap / np.abs(disp).max())
    for lam in np.linspace(0.0, 1.0, steps + 1)[1:]:
        check_embedded(Knot((1 - lam) * P0 + lam * target, K.param_length, check=False))
    meta = dict(K.meta)
    meta.update({"isotopy_seed": str(seed), "stretch": repr(stretch), "amplitude": repr(amplitude)})
    return Knot(target, K.param_length, K.name + f"~iso{seed}", meta)


def from_points(points, param_length: Optional[float] = None, name: str = "points") -> Knot:
    pts = np.asarray(points, dtype=float)
    return Knot(pts, param_length or 2 * math.pi, name, {"builder": "points"})


def _parse_opts(text: str) -> Dict[str, str]:
    out = {}
    for tok in filter(None, text.split(",")):
        key, _, val = tok.partition("=")
        out[key.strip()] = val.strip()
    return out


def make_knot(spec: str) -> Knot:
    """Build a knot from a short spec such as ``trefoil``, ``torus:p=2,q=5``,
    ``figure8:n=512``, ``unknot:seed=3,amp=0.2``, ``hopf:0`` or ``file:path.csv``."""
    name, _, rest = spec.partition(":")
    name = name.strip().lower()
    if name == "file":
        return read_knot_csv(rest)
    if name == "hopf":
        return hopf_link()[int(rest or 0)]
    opts = _parse_opts(rest)
    n = int(opts.pop("n", 256))
    if name in ("circle", "round"):
        return circle(float(opts.get("r", 1.0)), n)
    if name in ("trefoil", "left-trefoil"):
        return trefoil(n, "left" if name.startswith("left") else opts.get("hand", "right"))
    if name in ("torus",):
        return torus_knot(int(opts.get("p", 2)), int(opts.get("q", 3)), n)
    if name in ("figure8", "figure-eight", "4_1"):
        return figure_eight(n)
    if name in ("unknot",):
        base = circle(1.0, n)
        return perturbed(base, float(opts.get("amp", 0.2)), int(opts.get("seed", 0)))
    raise KnotError(f"unknown knot builder {name!r}")


# ---------------------------------------------------------------------------
# CSV io


def write_knot_csv(K: Knot, path) -> None:
    with open(path, "w") as fh:
        fh.write("# closure=periodic-cubic\n")
        fh.write(f"# param_length={K.param_length!r}\n")
        fh.write(f"# name={K.name}\n")
        fh.write("x,y,z\n")
        for x, y, z in K.samples.tolist():
            fh.write(f"{x!r},{y!r},{z!r}\n")


def read_knot_csv(path) -> Knot:
    header = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].partition("=")
                header[key.strip()] = val.strip()
            elif line[0].isalpha():
                continue
            else:
                rows.append([float(x) for x in line.split(",")])
    if header.get("closure", "periodic-cubic") != "periodic-cubic":
        raise KnotError(f"unsupported closure rule {header['closure']!r}")
    return Knot(np.array(rows), float(header.get("param_length", 2 * math.pi)), header.get("name", str(path)))


# ---------------------------------------------------------------------------
# projection


def _frame(v):
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    a = np.array([1.0, 0.0, 0.0]) if abs(v[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(v, a)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(v, e1)
    return e1, e2, v


@numba.njit(cache=True)
def _crossings_kernel(XA, HA, XB, HB, same):
    """Transverse double points of closed 2D polylines with heights.

    Returns rows (i, j, s, u, sign, over_is_a, sine) where segment i of A
    meets segment j of B at fractions s and u.
    """
    ma = XA.shape[0]
    mb = XB.shape[0]
    out = np.empty((64, 7))
    cnt = 0
    for i in range(ma):
        i2 = i + 1 if i + 1 < ma else 0
        ax, ay = XA[i, 0], XA[i, 1]
        bx, by = XA[i2, 0], XA[i2, 1]
        dx, dy = bx - ax, by - ay
        lox, hix = min(ax, bx), max(ax, bx)
        loy, hiy = min(ay, by), max(ay, by)
        j0 = i + 2 if same else 0
        for j in range(j0, mb):
            if same and i == 0 and j == mb - 1:
                continue
            j2 = j + 1 if j + 1 < mb else 0
            cx, cy = XB[j, 0], XB[j, 1]
            ex, ey = XB[j2, 0], XB[j2, 1]
            if max(cx, ex) < lox or min(cx, ex) > hix or max(cy, ey) < loy or min(cy, ey) > hiy:
                continue
            fx, fy = ex - cx, ey - cy
            den = dx * fy - dy * fx
            if den == 0.0:
                continue
            rx, ry = cx - ax, cy - ay
            s = (rx * fy - ry * fx) / den
            u = (rx * dy - ry * dx) / den
            if s < 0.0 or s >= 1.0 or u < 0.0 or u >= 1.0:
                continue
            ha = HA[i] + s * (HA[i2] - HA[i])
            hb = HB[j] + u * (HB[j2] - HB[j])
            sg = 1.0 if den > 0 else -1.0
            if hb > ha:
                sg = -sg
            if cnt == out.shape[0]:
                bigger = np.empty((2 * cnt, 7))
                bigger[:cnt] = out
                out = bigger
            out[cnt, 0] = i
            out[cnt, 1] = j
            out[cnt, 2] = s
            out[cnt, 3] = u
            out[cnt, 4] = sg
            out[cnt, 5] = 1.0 if ha > hb else 0.0
            out[cnt, 6] = abs(den) / math.sqrt((dx * dx + dy * dy) * (fx * fx + fy * fy))
            cnt += 1
    return out[:cnt]


@numba.njit(cache=True)
def _writhe_counts_kernel(P, T, dirs, cos_tol):
    """Directional writhe of a closed polyline for many directions.

    Directions within the tangent cone tolerance get the flag 1 and value 0.
    """
    n = dirs.shape[0]
    m = P.shape[0]
    vals = np.zeros(n, dtype=np.int64)
    flags = np.zeros(n, dtype=np.int64)
    X = np.empty((m, 2))
    H = np.empty(m)
    for k in range(n):
        vx, vy, vz = dirs[k, 0], dirs[k, 1], dirs[k, 2]
        bad = False
        for a in range(T.shape[0]):
            c = T[a, 0] * vx + T[a, 1] * vy + T[a, 2] * vz
            if abs(c) > cos_tol:
                bad = True
                break
        if bad:
            flags[k] = 1
            continue
        if abs(vx) < 0.9:
            ax, ay, az = 1.0, 0.0, 0.0
        else:
            ax, ay, az = 0.0, 1.0, 0.0
        e1x, e1y, e1z = vy * az - vz * ay, vz * ax - vx * az, vx * ay - vy * ax
        nrm = math.sqrt(e1x * e1x + e1y * e1y + e1z * e1z)
        e1x, e1y, e1z = e1x / nrm, e1y / nrm, e1z / nrm
        e2x, e2y, e2z = vy * e1z - vz * e1y, vz * e1x - vx * e1z, vx * e1y - vy * e1x
        for a in range(m):
            X[a, 0] = P[a, 0] * e1x + P[a, 1] * e1y + P[a, 2] * e1z
            X[a, 1] = P[a, 0] * e2x + P[a, 1] * e2y + P[a, 2] * e2z
            H[a] = P[a, 0] * vx + P[a, 1] * vy + P[a, 2] * vz
        rows = _crossings_kernel(X, H, X, H, True)
        tot = 0
        for r in range(rows.shape[0]):
            tot += int(rows[r, 4])
        vals[k] = tot
    return vals, flags


@dataclass(frozen=True)
class Crossing:
    t_over: float
    t_under: float
    sign: int

    @property
    def params(self) -> Tuple[float, float]:
        return tuple(sorted((self.t_over, self.t_under)))


@dataclass(frozen=True)
class ProjectionDiagram:
    direction: np.ndarray
    crossings: Tuple[Crossing, ...]

    @property
    def writhe(self) -> int:
        return int(sum(c.sign for c in self.crossings))

    def gauss_sequence(self) -> List[Tuple[str, int, int]]:
        """Events ('O' or 'U', crossing index, sign) in parameter order from t=0."""
        ev = []
        for idx, c in enumerate(self.crossings):
            ev.append((c.t_over, "O", idx, c.sign))
            ev.append((c.t_under, "U", idx, c.sign))
        ev.sort()
        return [(kind, idx, sg) for _, kind, idx, sg in ev]


def _tangent_cone_ok(K: Knot, v, m: Optional[int] = None) -> bool:
    m = m or 4 * K.n_samples
    T = K.tangent(K.grid(m))
    T = T / np.linalg.norm(T, axis=1)[:, None]
    return bool(np.all(np.abs(T @ v) <= math.cos(GK_ANGLE_TOL)))


def _refine(KA: Knot, KB: Knot, ta, tb, e1, e2, iters: int = 12):
    E = np.vstack([e1, e2])
    for _ in range(iters):
        F = E @ (KA.position(ta) - KB.position(tb))
        J = np.column_stack([E @ KA.tangent(ta), -(E @ KB.tangent(tb))])
        try:
            step = np.linalg.solve(J, F)
        except np.linalg.LinAlgError:
            break
        ta, tb = ta - step[0], tb - step[1]
        if abs(step[0]) + abs(step[1]) < 1e-14 * KA.param_length:
            break
    return float(np.mod(ta, KA.param_length)), float(np.mod(tb, KB.param_length))


def _project_pair(KA: Knot, KB: Knot, v, same: bool, m: Optional[int] = None) -> List[Crossing]:
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    for K in ((KA,) if same else (KA, KB)):
        if not _tangent_cone_ok(K, v):
            raise NonGenericDirection(v, f"within {GK_ANGLE_TOL} rad of a tangent of {K.name}")
    e1, e2, _ = _frame(v)
    ma = m or 4 * KA.n_samples
    mb = m or 4 * KB.n_samples
    PA = KA.polyline(ma)
    PB = PA if same else KB.polyline(mb)
    rows = _crossings_kernel(PA @ np.column_stack([e1, e2]), PA @ v, PB @ np.column_stack([e1, e2]), PB @ v, same)
    out = []
    for i, j, s, u, _sg, _over, _sine in rows:
        ta = (i + s) * KA.param_length / ma
        tb = (j + u) * KB.param_length / mb
        ta, tb = _refine(KA, KB, ta, tb, e1, e2)
        da, db = KA.tangent(ta), KB.tangent(tb)
        pa, pb = np.array([da @ e1, da @ e2]), np.array([db @ e1, db @ e2])
        sine = abs(pa[0] * pb[1] - pa[1] * pb[0]) / (np.linalg.norm(pa) * np.linalg.norm(pb))
        if sine < TRANSVERSE_TOL:
            raise NonGenericDirection(v, "non-transverse crossing")
        ha, hb = KA.position(ta) @ v, KB.position(tb) @ v
        if abs(ha - hb) < 1e-12 * max(1.0, abs(ha)):
            raise EmbeddingError(ta, tb, abs(ha - hb))
        if ha > hb:
            over, under, t_over, t_under = da, db, ta, tb
        else:
            over, under, t_over, t_under = db, da, tb, ta
        sign = 1 if np.dot(np.cross(over, under), v) > 0 else -1
        out.append(Crossing(t_over, t_under, sign) if same else (ta, tb, sign))
    return out


def project_and_sign(K: Knot, v) -> ProjectionDiagram:
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    cr = _project_pair(K, K, v, True)
    cr.sort(key=lambda c: c.params)
    return ProjectionDiagram(v, tuple(cr))


def directional_writhe(K: Knot, v) -> int:
    """Signed crossing count; zero by convention for non-generic ``v``."""
    try:
        return project_and_sign(K, v).writhe
    except NonGenericDirection:
        return 0


def fibonacci_sphere(n: int, offset: float = 0.5) -> np.ndarray:
    """Low-discrepancy, area-uniform unit vectors (spherical Fibonacci lattice)."""
    i = np.arange(n) + offset
    z = 1 - 2 * i / n
    phi = i * math.pi * (3 - math.sqrt(5))
    r = np.sqrt(np.clip(1 - z * z, 0, None))
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def directional_writhe_many(K: Knot, dirs, m: Optional[int] = None):
    """Vectorised d_K over an array of directions using a dense polyline.

    Returns (values, rejected) where ``rejected`` marks directions in the
    tangent-cone tolerance; those have value 0.
    """
    m = m or min(2 * K.n_samples, 1024)
    P = np.ascontiguousarray(K.polyline(m))
    T = K.tangent(K.grid(4 * m))
    T = np.ascontiguousarray(T / np.linalg.norm(T, axis=1)[:, None])
    dirs = np.ascontiguousarray(np.asarray(dirs, dtype=float))
    vals, flags = _writhe_counts_kernel(P, T, dirs, math.cos(GK_ANGLE_TOL))
    return vals, flags.astype(bool)


def inter_crossings(KA: Knot, KB: Knot, v) -> List[Tuple[float, float, int]]:
    """Crossings between two curves as (t on KA, t on KB, sign)."""
    return _project_pair(KA, KB, v, False)


def polyak_viro_v2(K: Knot, v) -> int:
    """Degree-2 invariant from the based Gauss diagram of the projection along v.

    Counts crossing pairs (a, b) met from t=0 in the order
    under(a), over(b), over(a), under(b), weighted by sign(a)*sign(b).
    """
    seq = project_and_sign(K, v).gauss_sequence()
    pos = {}
    sign = {}
    for p, (kind, idx, sg) in enumerate(seq):
        pos[(kind, idx)] = p
        sign[idx] = sg
    total = 0
    idxs = sorted(sign)
    for a in idxs:
        ua, oa = pos[("U", a)], pos[("O", a)]
        if ua > oa:
            continue
        for b in idxs:
            if b == a:
                continue
            ob, ub = pos[("O", b)], pos[("U", b)]
            if ua < ob < oa < ub:
                total += sign[a] * sign[b]
    return total
