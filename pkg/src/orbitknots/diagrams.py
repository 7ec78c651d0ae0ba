"""Trivalent diagrams, their enumeration by degree and the STU quotient.

A diagram has ``k`` univalent vertices sitting on an oriented outer circle
and ``s`` trivalent free vertices. Every free vertex carries a cyclic
orientation of its three legs; the convention used throughout is that the
orientation of a labelled diagram is "neighbours in ascending label order".
Relabelling therefore can flip orientations, and :func:`canonical_form`
reports the resulting sign. A diagram that is carried to minus itself by a
symmetry is zero in the quotient space.

All coefficients are :class:`fractions.Fraction` so that STU identities hold
exactly.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

Edge = Tuple[int, int]

MAX_BASIS_DEGREE = 3


class DiagramError(ValueError):
    """Structural violation or unsupported request."""


def _norm_edge(a: int, b: int) -> Edge:
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class TrivalentDiagram:
    k: int
    s: int
    circle_order: Tuple[int, ...]
    edges: Tuple[Edge, ...]

    def __post_init__(self):
        edges = tuple(sorted(_norm_edge(int(a), int(b)) for a, b in self.edges))
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "circle_order", tuple(int(c) for c in self.circle_order))
        _validate(self)

    @property
    def labels(self) -> range:
        return range(1, self.k + self.s + 1)

    @property
    def free_vertices(self) -> Tuple[int, ...]:
        circ = set(self.circle_order)
        return tuple(v for v in self.labels if v not in circ)

    def neighbours(self, v: int) -> Tuple[int, ...]:
        out = []
        for a, b in self.edges:
            if a == v:
                out.append(b)
            elif b == v:
                out.append(a)
        return tuple(sorted(out))

    def is_circle(self, v: int) -> bool:
        return v in self.circle_order

    def __str__(self) -> str:
        return format_diagram(self)


def _validate(d: TrivalentDiagram) -> None:
    k, s = d.k, d.s
    if k < 0 or s < 0:
        raise DiagramError("negative vertex count")
    if (k + s) % 2:
        raise DiagramError(f"k+s must be even, got k={k}, s={s}")
    if len(d.circle_order) != k or len(set(d.circle_order)) != k:
        raise DiagramError("circle_order must list k distinct labels")
    n = k + s
    labels = set(range(1, n + 1))
    if not set(d.circle_order) <= labels:
        raise DiagramError("circle label out of range")
    if len(set(d.edges)) != len(d.edges):
        raise DiagramError("repeated edge")
    deg = {v: 0 for v in labels}
    for a, b in d.edges:
        if a == b:
            raise DiagramError(f"self-loop at {a}")
        if a not in labels or b not in labels:
            raise DiagramError(f"edge {a}-{b} uses an unknown label")
        deg[a] += 1
        deg[b] += 1
    circ = set(d.circle_order)
    for v in sorted(labels):
        want = 1 if v in circ else 3
        if deg[v] != want:
            kind = "circle" if v in circ else "free"
            raise DiagramError(f"{kind} vertex {v} has valence {deg[v]}, expected {want}")
    if len(d.edges) != (k + 3 * s) // 2:
        raise DiagramError("edge count differs from (k+3s)/2")
    if not _connected_with_circle(n, d.circle_order, d.edges):
        raise DiagramError("diagram is not connected once circle arcs are included")


def _connected_with_circle(n: int, circle: Sequence[int], edges: Iterable[Edge]) -> bool:
    if n == 0:
        return True
    if not circle:
        # a closed graph with no leg on the circle is its own component
        return False
    adj: Dict[int, set] = {v: set() for v in range(1, n + 1)}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    for a, b in zip(circle, circle[1:]):
        adj[a].add(b)
        adj[b].add(a)
    seen = {circle[0]}
    stack = [circle[0]]
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == n


def edge_count(d: TrivalentDiagram) -> int:
    return (d.k + 3 * d.s) // 2


def degree(d: TrivalentDiagram) -> int:
    return (d.k + d.s) // 2


# ---------------------------------------------------------------------------
# canonical forms


def _perm_parity(seq: Sequence[int]) -> int:
    """+1 for an even permutation of sorted(seq), -1 for odd."""
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


def _default_orientation(d: TrivalentDiagram) -> Dict[int, Tuple[int, ...]]:
    return {v: d.neighbours(v) for v in d.free_vertices}


def _relabelings(d: TrivalentDiagram) -> Iterator[Dict[int, int]]:
    k = d.k
    free = d.free_vertices
    for rot in range(max(k, 1)):
        base = {d.circle_order[(rot + p) % k]: p + 1 for p in range(k)}
        for perm in itertools.permutations(range(k + 1, k + d.s + 1)):
            m = dict(base)
            m.update(zip(free, perm))
            yield m


def canonical_form(
    d: TrivalentDiagram, orientation: Optional[Mapping[int, Sequence[int]]] = None
) -> Tuple[TrivalentDiagram, int]:
    """Canonical representative and the orientation sign relating them.

    Circle vertices are relabelled 1..k following the circle from the best
    rotation, free vertices get k+1..k+s; the representative minimises the
    sorted edge list. The sign is 0 when a symmetry reverses orientation,
    meaning the diagram vanishes modulo antisymmetry.
    """
    orient = dict(orientation) if orientation is not None else _default_orientation(d)
    best = None
    signs = set()
    for m in _relabelings(d):
        enc = tuple(sorted(_norm_edge(m[a], m[b]) for a, b in d.edges))
        sign = 1
        for v, cyc in orient.items():
            sign *= _perm_parity([m[w] for w in cyc])
        if best is None or enc < best:
            best = enc
            signs = {sign}
        elif enc == best:
            signs.add(sign)
    canon = TrivalentDiagram(d.k, d.s, tuple(range(1, d.k + 1)), best)
    return canon, (signs.pop() if len(signs) == 1 else 0)


def canonicalize(d: TrivalentDiagram) -> TrivalentDiagram:
    return canonical_form(d)[0]


def is_canonical(d: TrivalentDiagram) -> bool:
    return canonicalize(d) == d


# ---------------------------------------------------------------------------
# text format: "k s; i-j,i-j,..." with circle labels 1..k in order


def format_diagram(d: TrivalentDiagram) -> str:
    if d.circle_order != tuple(range(1, d.k + 1)):
        d = canonicalize(d)
    return f"{d.k} {d.s}; " + ",".join(f"{a}-{b}" for a, b in d.edges)


def parse_diagram(text: str) -> TrivalentDiagram:
    try:
        head, tail = text.split(";", 1)
        k, s = (int(x) for x in head.split())
        edges = []
        for tok in tail.replace(" ", "").split(","):
            if tok:
                a, b = tok.split("-")
                edges.append((int(a), int(b)))
    except ValueError as exc:
        raise DiagramError(f"cannot parse diagram {text!r}") from exc
    return TrivalentDiagram(k, s, tuple(range(1, k + 1)), tuple(edges))


# ---------------------------------------------------------------------------
# formal combinations


@dataclass(frozen=True)
class DiagramCombination:
    terms: Mapping[TrivalentDiagram, Fraction] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for d, c in self.terms.items():
            c = Fraction(c)
            if c != 0:
                clean[d] = c
        object.__setattr__(self, "terms", dict(sorted(clean.items(), key=lambda kv: _sort_key(kv[0]))))

    @classmethod
    def of(cls, d: TrivalentDiagram, coeff=1, orientation=None) -> "DiagramCombination":
        canon, sign = canonical_form(d, orientation)
        return cls({canon: Fraction(coeff) * sign})

    def __add__(self, other: "DiagramCombination") -> "DiagramCombination":
        out = dict(self.terms)
        for d, c in other.terms.items():
            out[d] = out.get(d, Fraction(0)) + c
        return DiagramCombination(out)

    def __neg__(self) -> "DiagramCombination":
        return DiagramCombination({d: -c for d, c in self.terms.items()})

    def __sub__(self, other: "DiagramCombination") -> "DiagramCombination":
        return self + (-other)

    def __mul__(self, scalar) -> "DiagramCombination":
        scalar = Fraction(scalar)
        return DiagramCombination({d: scalar * c for d, c in self.terms.items()})

    __rmul__ = __mul__

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __str__(self) -> str:
        return format_combination(self)


def _sort_key(d: TrivalentDiagram):
    return (d.k + d.s, -d.s, d.edges)


def format_combination(c: DiagramCombination) -> str:
    return "\n".join(f"{coef}*{format_diagram(d)}" for d, coef in c.terms.items())


def parse_combination(text: str) -> DiagramCombination:
    out = DiagramCombination()
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        coef, _, body = line.partition("*")
        out = out + DiagramCombination.of(parse_diagram(body), Fraction(coef))
    return out


# ---------------------------------------------------------------------------
# enumeration


def _graphs_with_degrees(want: Dict[int, int]) -> Iterator[Tuple[Edge, ...]]:
    """All simple graphs realising the prescribed degree sequence."""
    order = sorted(want)
    left = dict(want)
    edges: List[Edge] = []

    def rec(pos: int):
        while pos < len(order) and left[order[pos]] == 0:
            pos += 1
        if pos == len(order):
            yield tuple(edges)
            return
        v = order[pos]
        cands = [w for w in order[pos + 1:] if left[w] > 0]
        need = left[v]
        for chosen in itertools.combinations(cands, need):
            left[v] = 0
            for w in chosen:
                left[w] -= 1
                edges.append((v, w))
            yield from rec(pos + 1)
            for w in chosen:
                left[w] += 1
                edges.pop()
            left[v] = need

    yield from rec(0)


@lru_cache(maxsize=None)
def _enumerate(n: int) -> Tuple[TrivalentDiagram, ...]:
    found = set()
    for k in range(2 * n, 0, -1):
        s = 2 * n - k
        if (k + 3 * s) % 2:
            continue
        want = {v: (1 if v <= k else 3) for v in range(1, k + s + 1)}
        for edges in _graphs_with_degrees(want):
            if not _connected_with_circle(k + s, tuple(range(1, k + 1)), edges):
                continue
            d = TrivalentDiagram(k, s, tuple(range(1, k + 1)), edges)
            found.add(canonicalize(d))
    return tuple(sorted(found, key=_sort_key))


def enumerate_diagrams(n: int) -> Tuple[TrivalentDiagram, ...]:
    """Every canonical trivalent diagram of degree ``n``, sorted."""
    if n <= 0:
        raise DiagramError(f"degree must be positive, got {n}")
    return _enumerate(int(n))


# ---------------------------------------------------------------------------
# STU


def stu_expand(
    d: TrivalentDiagram,
    free_vertex: int,
    orientation: Optional[Mapping[int, Sequence[int]]] = None,
    leg: Optional[int] = None,
) -> DiagramCombination:
    """Replace ``free_vertex`` by the S-term minus the U-term.

    The baseline leg is the circle neighbour ``leg`` (smallest one by
    default). With cyclic legs (c, i, j) at the vertex, c is removed from the
    circle and two new consecutive points p < q take its place; the S-term
    joins p-i, q-j and the U-term p-j, q-i.
    """
    orient = dict(orientation) if orientation is not None else _default_orientation(d)
    if free_vertex not in d.free_vertices:
        raise DiagramError(f"{free_vertex} is not a free vertex")
    circ_nb = [w for w in orient[free_vertex] if d.is_circle(w)]
    if not circ_nb:
        raise DiagramError(f"free vertex {free_vertex} has no leg on the circle")
    c = min(circ_nb) if leg is None else leg
    if c not in circ_nb:
        raise DiagramError(f"{c} is not a circle neighbour of {free_vertex}")
    cyc = list(orient[free_vertex])
    r = cyc.index(c)
    _, i, j = cyc[r:] + cyc[:r]

    v = free_vertex
    p, q = c, v  # reuse labels: c becomes p, v becomes the new circle point q
    pos = d.circle_order.index(c)
    circle = d.circle_order[:pos] + (p, q) + d.circle_order[pos + 1:]
    base = [e for e in d.edges if v not in e]

    def term(a: int, b: int) -> DiagramCombination:
        edges = base + [_norm_edge(p, a), _norm_edge(q, b)]
        new_orient = {}
        for w, cw in orient.items():
            if w == v:
                continue
            new_orient[w] = tuple((p if x == v and w == a else q if x == v and w == b else x) for x in cw)
        nd = TrivalentDiagram(d.k + 1, d.s - 1, circle, tuple(edges))
        return DiagramCombination.of(nd, 1, new_orient)

    return term(i, j) - term(j, i)


def stu_relations(n: int) -> List[DiagramCombination]:
    """All elements d - stu_expand(d) of degree n, over every admissible leg."""
    rels = []
    for d in enumerate_diagrams(n):
        lhs = DiagramCombination.of(d)
        if not lhs:
            rels.append(DiagramCombination({d: 1}))
            continue
        for v in d.free_vertices:
            for c in d.neighbours(v):
                if d.is_circle(c):
                    rels.append(DiagramCombination({d: 1}) - stu_expand(d, v, leg=c))
    return rels


def _rref(rows: List[List[Fraction]], ncols: int) -> Tuple[List[List[Fraction]], List[int]]:
    rows = [list(r) for r in rows]
    pivots: List[int] = []
    r = 0
    for col in range(ncols):
        piv = next((i for i in range(r, len(rows)) if rows[i][col] != 0), None)
        if piv is None:
            continue
        rows[r], rows[piv] = rows[piv], rows[r]
        inv = 1 / rows[r][col]
        rows[r] = [x * inv for x in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][col] != 0:
                f = rows[i][col]
                rows[i] = [a - f * b for a, b in zip(rows[i], rows[r])]
        pivots.append(col)
        r += 1
        if r == len(rows):
            break
    return rows[:r], pivots


@dataclass(frozen=True)
class STUQuotient:
    """Basis of span(TD_n)/STU with a linear reduction map."""

    degree: int
    diagrams: Tuple[TrivalentDiagram, ...]
    basis_diagrams: Tuple[TrivalentDiagram, ...]
    _rows: Tuple[Tuple[Fraction, ...], ...]
    _pivots: Tuple[int, ...]

    @property
    def basis(self) -> List[DiagramCombination]:
        return [DiagramCombination({d: 1}) for d in self.basis_diagrams]

    @property
    def dimension(self) -> int:
        return len(self.basis_diagrams)

    def reduce(self, c: DiagramCombination) -> Tuple[Fraction, ...]:
        index = {d: i for i, d in enumerate(self.diagrams)}
        vec = [Fraction(0)] * len(self.diagrams)
        for d, coef in c.terms.items():
            if d not in index:
                raise DiagramError(f"diagram {format_diagram(d)} is not of degree {self.degree}")
            vec[index[d]] += coef
        for row, col in zip(self._rows, self._pivots):
            f = vec[col]
            if f:
                vec = [a - f * b for a, b in zip(vec, row)]
        return tuple(vec[index[d]] for d in self.basis_diagrams)

    def __iter__(self):
        yield self.basis
        yield self.reduce


def stu_basis(n: int, shuffle_seed: Optional[int] = None) -> STUQuotient:
    """Quotient of span(TD_n) by STU and antisymmetry.

    Columns are ordered so that diagrams with more free vertices are
    eliminated first; the surviving basis is then made of chord diagrams.
    ``shuffle_seed`` permutes the relation rows, which must not change the
    result since the reduced row echelon form is unique.
    """
    if n < 1 or n > MAX_BASIS_DEGREE:
        raise DiagramError(f"STU basis supported for degree 1..{MAX_BASIS_DEGREE}, got {n}")
    diagrams = enumerate_diagrams(n)
    index = {d: i for i, d in enumerate(diagrams)}
    rels = stu_relations(n)
    if shuffle_seed is not None:
        random.Random(shuffle_seed).shuffle(rels)
    rows = []
    for rel in rels:
        row = [Fraction(0)] * len(diagrams)
        for d, c in rel.terms.items():
            row[index[d]] += c
        rows.append(row)
    red, piv = _rref(rows, len(diagrams))
    basis = tuple(d for i, d in enumerate(diagrams) if i not in set(piv))
    return STUQuotient(n, diagrams, basis, tuple(tuple(r) for r in red), tuple(piv))


def quotient_dimension(n: int, shuffle_seed: Optional[int] = None) -> int:
    return stu_basis(n, shuffle_seed).dimension


# ---------------------------------------------------------------------------
# weight systems


@dataclass(frozen=True)
class WeightSystem:
    degree: int
    values: Mapping[TrivalentDiagram, Fraction]

    @classmethod
    def from_basis(cls, n: int, basis_values: Mapping[TrivalentDiagram, object]) -> "WeightSystem":
        """Extend values given on chord diagrams to all of TD_n through STU.

        Keys are canonicalised; every basis diagram of the quotient must be
        given. Values on other diagrams are implied and must be consistent.
        """
        quot = stu_basis(n)
        given = {}
        for d, v in basis_values.items():
            canon, sign = canonical_form(d)
            given[canon] = Fraction(v) * sign if sign else Fraction(0)
        missing = [d for d in quot.basis_diagrams if d not in given]
        if missing:
            raise DiagramError("missing weights for " + "; ".join(format_diagram(d) for d in missing))
        values = {}
        for d in quot.diagrams:
            coords = quot.reduce(DiagramCombination({d: 1}))
            values[d] = sum((c * given[b] for c, b in zip(coords, quot.basis_diagrams)), Fraction(0))
        for d, v in given.items():
            if values.get(d) != v:
                raise DiagramError(f"weight on {format_diagram(d)} contradicts STU")
        return cls(n, values)

    @classmethod
    def zero(cls, n: int) -> "WeightSystem":
        return cls(n, {d: Fraction(0) for d in enumerate_diagrams(n)})

    def __call__(self, d: TrivalentDiagram) -> Fraction:
        return weight_eval(self, DiagramCombination.of(d))

    def is_consistent(self) -> bool:
        return all(weight_eval(self, rel) == 0 for rel in stu_relations(self.degree))


def weight_eval(W: WeightSystem, c: DiagramCombination):
    total = Fraction(0)
    for d, coef in c.terms.items():
        if degree(d) != W.degree:
            raise DiagramError(f"degree {degree(d)} diagram given to a degree {W.degree} weight system")
        total += coef * W.values[d]
    return total


def is_connected_sum(d: TrivalentDiagram) -> bool:
    """True when a proper circle arc carries a union of graph components."""
    comp = {}
    adj: Dict[int, set] = {v: set() for v in d.labels}
    for a, b in d.edges:
        adj[a].add(b)
        adj[b].add(a)
    cid = 0
    for v in d.labels:
        if v in comp:
            continue
        stack = [v]
        comp[v] = cid
        while stack:
            x = stack.pop()
            for y in adj[x]:
                if y not in comp:
                    comp[y] = cid
                    stack.append(y)
        cid += 1
    labels = [comp[c] for c in d.circle_order]
    k = len(labels)
    for start in range(k):
        for length in range(1, k):
            inside = {labels[(start + t) % k] for t in range(length)}
            outside = {labels[(start + t) % k] for t in range(length, k)}
            if not inside & outside:
                return True
    return False


def is_primitive(W: WeightSystem) -> bool:
    return all(v == 0 for d, v in W.values.items() if is_connected_sum(d))


def named_diagram(name: str) -> TrivalentDiagram:
    """Small catalogue: chord, parallel, crossed, tripod."""
    table = {
        "chord": "2 0; 1-2",
        "D0": "2 0; 1-2",
        "parallel": "4 0; 1-2,3-4",
        "crossed": "4 0; 1-3,2-4",
        "tripod": "3 1; 1-4,2-4,3-4",
    }
    if name in table:
        return canonicalize(parse_diagram(table[name]))
    return canonicalize(parse_diagram(name))
