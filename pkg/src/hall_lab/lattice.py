"""Discrete torus geometry, dual-lattice paths and lattice one-forms.

Conventions
-----------
* Sites of ``Z_L x Z_L`` are labelled by integer pairs in
  ``{lo, ..., lo + L - 1}`` with ``lo = -((L - 1) // 2)``, i.e.
  ``{-L/2 + 1, ..., L/2}`` for even ``L``.
* Site index is row-major: ``index = (x1 - lo) * L + (x2 - lo)``.
* A one-form is stored on the ``2 L^2`` positively oriented edges
  ``x -> x + e_axis``; the value on the reversed edge is the negative.
* The dual lattice sits at half-integer coordinates.  A dual edge is fixed
  by the site ``left`` (``e_L``) and the site ``right`` (``e_R``) it
  separates; it points along ``rot90(e_R - e_L)`` so that ``e_L`` lies on
  the left when walking along it.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    EmptyBoundaryError,
    InexactFormError,
    MalformedPathError,
    OrientationError,
)

Site = tuple[int, int]
DualVertex = tuple[float, float]

AXES = (0, 1)
_UNIT = {(0, 1): (1, 0), (0, -1): (-1, 0), (1, 1): (0, 1), (1, -1): (0, -1)}


def _freeze(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TorusLattice:
    """The periodic ``L x L`` square lattice."""

    L: int

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 2:
            raise ConfigurationError(f"lattice size must be an integer >= 2, got {self.L!r}")

    @property
    def lo(self) -> int:
        return -((self.L - 1) // 2)

    @property
    def hi(self) -> int:
        return self.lo + self.L - 1

    @property
    def n_sites(self) -> int:
        return self.L * self.L

    @cached_property
    def positions(self) -> np.ndarray:
        """``(L^2, 2)`` integer coordinates in index order."""
        c = np.arange(self.lo, self.lo + self.L)
        x1, x2 = np.meshgrid(c, c, indexing="ij")
        return _freeze(np.stack([x1.ravel(), x2.ravel()], axis=1))

    @cached_property
    def sites(self) -> tuple[Site, ...]:
        return tuple((int(a), int(b)) for a, b in self.positions)

    @cached_property
    def neighbor_index(self) -> np.ndarray:
        """``nbr[axis, i]`` is the index of ``site(i) + e_axis``."""
        pos = self.positions
        out = np.empty((2, self.n_sites), dtype=np.int64)
        for axis in AXES:
            shifted = pos.copy()
            shifted[:, axis] += 1
            out[axis] = self.index_array(shifted)
        return _freeze(out)

    def canonical(self, x: Sequence[int]) -> Site:
        L, lo = self.L, self.lo
        return ((int(x[0]) - lo) % L + lo, (int(x[1]) - lo) % L + lo)

    def index(self, x: Sequence[int]) -> int:
        L, lo = self.L, self.lo
        return ((int(x[0]) - lo) % L) * L + (int(x[1]) - lo) % L

    def index_array(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs)
        L, lo = self.L, self.lo
        return ((xs[:, 0] - lo) % L) * L + (xs[:, 1] - lo) % L

    def site(self, i: int) -> Site:
        return self.sites[i]

    def shift(self, x: Sequence[int], axis: int, sign: int = 1) -> Site:
        dx = [0, 0]
        dx[axis] = sign
        return self.canonical((x[0] + dx[0], x[1] + dx[1]))

    def neighbors(self, x: Sequence[int]) -> list[Site]:
        return [self.shift(x, axis, s) for axis in AXES for s in (1, -1)]

    def displacement(self, x: Sequence[int], y: Sequence[int]) -> np.ndarray:
        """Minimal-image vector ``y - x`` with components in ``(-L/2, L/2]``."""
        d = (np.asarray(y, dtype=float) - np.asarray(x, dtype=float)) % self.L
        return np.where(d > self.L / 2, d - self.L, d)

    def dist(self, x: Sequence[float], y: Sequence[float]) -> float:
        """Euclidean distance on the continuous torus ``[-L/2, L/2]^2``."""
        return float(np.hypot(*self.displacement(x, y)))

    def distances_to(self, points: Iterable[Sequence[float]]) -> np.ndarray:
        """Distance of every site to the nearest of ``points`` (``inf`` if empty)."""
        best = np.full(self.n_sites, np.inf)
        pos = self.positions.astype(float)
        for p in points:
            d = (pos - np.asarray(p, dtype=float)) % self.L
            d = np.minimum(d, self.L - d)
            best = np.minimum(best, np.hypot(d[:, 0], d[:, 1]))
        return best

    # edges -----------------------------------------------------------------

    def edge(self, source: Sequence[int], axis: int, sign: int = 1) -> "OrientedEdge":
        src = self.canonical(source)
        return OrientedEdge(src, self.shift(src, axis, sign), axis, sign)

    def edge_between(self, x: Sequence[int], y: Sequence[int]) -> "OrientedEdge":
        x, y = self.canonical(x), self.canonical(y)
        found = [e for e in (self.edge(x, a, s) for a in AXES for s in (1, -1)) if e.target == y]
        if not found:
            raise MalformedPathError(f"sites {x} and {y} are not adjacent")
        if len(found) > 1 and self.L == 2:
            raise MalformedPathError(f"edge {x}->{y} is ambiguous on the L=2 torus")
        return found[0]

    def positive_edges(self) -> list["OrientedEdge"]:
        return [self.edge(x, axis, 1) for x in self.sites for axis in AXES]

    def straight_path(self, start: Sequence[int], axis: int, length: int, sign: int = 1) -> list["OrientedEdge"]:
        path, x = [], self.canonical(start)
        for _ in range(length):
            e = self.edge(x, axis, sign)
            path.append(e)
            x = e.target
        return path

    def winding_loop(self, direction: int, offset: int = 0) -> list["OrientedEdge"]:
        """Loop ``gamma_direction`` winding once in the increasing ``direction`` (1 or 2)."""
        axis = _direction_axis(direction)
        start = [0, 0]
        start[1 - axis] = offset
        return self.straight_path(start, axis, self.L)

    def plaquette(self, corner: Sequence[int]) -> list["OrientedEdge"]:
        """Counter-clockwise elementary loop with lower-left ``corner``."""
        x = self.canonical(corner)
        e1 = self.edge(x, 0, 1)
        e2 = self.edge(e1.target, 1, 1)
        e3 = self.edge(e2.target, 0, -1)
        e4 = self.edge(e3.target, 1, -1)
        return [e1, e2, e3, e4]


def _direction_axis(direction: int) -> int:
    if direction not in (1, 2):
        raise ConfigurationError(f"direction must be 1 or 2, got {direction!r}")
    return direction - 1


@dataclass(frozen=True)
class OrientedEdge:
    """Edge ``source -> target`` along ``axis`` with orientation ``sign``."""

    source: Site
    target: Site
    axis: int
    sign: int

    def reversed(self) -> "OrientedEdge":
        return OrientedEdge(self.target, self.source, self.axis, -self.sign)


@dataclass(frozen=True, eq=False)
class OneForm:
    """Antisymmetric function on oriented edges.

    ``values[i, axis]`` is ``A(site_i -> site_i + e_axis)``.
    """

    lattice: TorusLattice
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.lattice.n_sites, 2):
            raise ValueError(f"one-form values must have shape {(self.lattice.n_sites, 2)}, got {v.shape}")
        object.__setattr__(self, "values", _freeze(v))

    @classmethod
    def zeros(cls, lattice: TorusLattice) -> "OneForm":
        return cls(lattice, np.zeros((lattice.n_sites, 2)))

    def __call__(self, edge: OrientedEdge) -> float:
        if edge.sign > 0:
            return float(self.values[self.lattice.index(edge.source), edge.axis])
        return -float(self.values[self.lattice.index(edge.target), edge.axis])

    def norm(self) -> float:
        return float(np.abs(self.values).max(initial=0.0))

    def _check(self, other):
        if not isinstance(other, OneForm) or other.lattice != self.lattice:
            raise ValueError("one-forms live on different lattices")

    def __add__(self, other):
        self._check(other)
        return OneForm(self.lattice, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return OneForm(self.lattice, self.values - other.values)

    def __neg__(self):
        return OneForm(self.lattice, -self.values)

    def __mul__(self, c):
        return OneForm(self.lattice, float(c) * self.values)

    __rmul__ = __mul__

    def allclose(self, other, atol=1e-12) -> bool:
        self._check(other)
        return bool(np.allclose(self.values, other.values, rtol=0, atol=atol))


@dataclass(frozen=True, eq=False)
class SiteFunction:
    """Real function on sites, ``values[i] = f(site_i)``."""

    lattice: TorusLattice
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.lattice.n_sites,):
            raise ValueError(f"site function must have shape {(self.lattice.n_sites,)}, got {v.shape}")
        object.__setattr__(self, "values", _freeze(v))

    @classmethod
    def zeros(cls, lattice):
        return cls(lattice, np.zeros(lattice.n_sites))

    @classmethod
    def from_callable(cls, lattice, f):
        return cls(lattice, np.array([f(x) for x in lattice.sites], dtype=float))

    @classmethod
    def indicator(cls, lattice, sites):
        v = np.zeros(lattice.n_sites)
        for x in sites:
            v[lattice.index(x)] = 1.0
        return cls(lattice, v)

    def __call__(self, x) -> float:
        return float(self.values[self.lattice.index(x)])

    def __add__(self, other):
        return SiteFunction(self.lattice, self.values + other.values)

    def __sub__(self, other):
        return SiteFunction(self.lattice, self.values - other.values)

    def __neg__(self):
        return SiteFunction(self.lattice, -self.values)

    def __mul__(self, c):
        return SiteFunction(self.lattice, float(c) * self.values)

    __rmul__ = __mul__


# ---------------------------------------------------------------------------
# one-form calculus


def neighborhood(lattice: TorusLattice, S: Iterable[Sequence[int]], r: float) -> set[Site]:
    """``S^r = {x : dist(x, S) <= r}``."""
    S = [lattice.canonical(x) for x in S]
    if not S:
        return set()
    d = lattice.distances_to(S)
    return {lattice.sites[i] for i in np.flatnonzero(d <= r + 1e-12)}


def integrate(A: OneForm, path: Sequence[OrientedEdge]) -> float:
    """Sum of ``A`` over the edges of a chaining path."""
    for a, b in zip(path, path[1:]):
        if a.target != b.source:
            raise MalformedPathError(f"edge {a} does not chain into {b}")
    return float(sum(A(e) for e in path))


def exterior_derivative(theta: SiteFunction) -> OneForm:
    """``d theta((x, y)) = theta(y) - theta(x)``."""
    lat = theta.lattice
    v = theta.values
    return OneForm(lat, np.stack([v[lat.neighbor_index[a]] - v for a in AXES], axis=1))


def standard_flux_form(direction: int, lattice: TorusLattice | int) -> OneForm:
    """``xi_direction``: ``1/L`` on edges pointing in the positive ``direction``."""
    if not isinstance(lattice, TorusLattice):
        lattice = TorusLattice(lattice)
    axis = _direction_axis(direction)
    vals = np.zeros((lattice.n_sites, 2))
    vals[:, axis] = 1.0 / lattice.L
    return OneForm(lattice, vals)


def _region_edges(lattice: TorusLattice, region: set[int]):
    """Positive edges ``(i, axis, j)`` with both endpoints in ``region``."""
    nbr = lattice.neighbor_index
    return [(i, a, int(nbr[a, i])) for i in sorted(region) for a in AXES if int(nbr[a, i]) in region]


def _spanning_forest(lattice, A, region):
    """BFS potential on each component of ``region`` plus the tree parents."""
    adj: dict[int, list[tuple[int, float, OrientedEdge]]] = {i: [] for i in region}
    edges = _region_edges(lattice, region)
    for i, a, j in edges:
        w = float(A.values[i, a])
        e = lattice.edge(lattice.sites[i], a, 1)
        adj[i].append((j, w, e))
        adj[j].append((i, -w, e.reversed()))
    theta: dict[int, float] = {}
    parent: dict[int, OrientedEdge | None] = {}
    for root in sorted(region):
        if root in theta:
            continue
        theta[root] = 0.0
        parent[root] = None
        queue = deque([root])
        while queue:
            i = queue.popleft()
            for j, w, e in adj[i]:
                if j not in theta:
                    theta[j] = theta[i] + w
                    parent[j] = e
                    queue.append(j)
    return theta, parent, edges


def _tree_path(lattice, parent, i) -> list[OrientedEdge]:
    """Tree path from the component root to site ``i``."""
    out = []
    e = parent[i]
    while e is not None:
        out.append(e)
        e = parent[lattice.index(e.source)]
    return out[::-1]


def _exactness_witness(lattice, A, region, tol):
    theta, parent, edges = _spanning_forest(lattice, A, region)
    scale = max(1.0, A.norm())
    for i, a, j in edges:
        mismatch = theta[i] + A.values[i, a] - theta[j]
        if abs(mismatch) > tol * scale * max(1, len(region)):
            e = lattice.edge(lattice.sites[i], a, 1)
            to_i = _tree_path(lattice, parent, i)
            to_j = _tree_path(lattice, parent, j)
            cycle = to_i + [e] + [f.reversed() for f in reversed(to_j)]
            return theta, cycle, float(integrate(A, cycle))
    return theta, None, 0.0


def _as_index_set(lattice, sites) -> set[int]:
    return {lattice.index(x) for x in sites}


def is_exact(A: OneForm, sites: Iterable[Sequence[int]], tol: float = 1e-12) -> bool:
    """True iff every cycle (contractible or not) inside ``sites`` has zero circulation."""
    region = _as_index_set(A.lattice, sites)
    _, witness, _ = _exactness_witness(A.lattice, A, region, tol)
    return witness is None


def find_potential(A: OneForm, sites: Iterable[Sequence[int]], tol: float = 1e-12) -> SiteFunction:
    """Scalar ``theta`` supported on ``sites`` with ``A = d theta`` on the region's edges.

    One anchor per connected component (its lowest-index site) carries
    ``theta = 0``.
    """
    lat = A.lattice
    region = _as_index_set(lat, sites)
    theta, witness, circ = _exactness_witness(lat, A, region, tol)
    if witness is not None:
        raise InexactFormError(
            f"one-form is not exact on the region: circulation {circ:.3e} on a {len(witness)}-edge cycle",
            witness=witness,
            circulation=circ,
        )
    vals = np.zeros(lat.n_sites)
    for i, t in theta.items():
        vals[i] = t
    return SiteFunction(lat, vals)


# ---------------------------------------------------------------------------
# electrostatic potentials


def _strip_coordinate(lattice: TorusLattice, ell: int) -> np.ndarray:
    """``x1`` unwrapped into ``[-ell, L - ell)``."""
    x1 = lattice.positions[:, 0]
    return (x1 + ell) % lattice.L - ell


def build_strip_potential(lattice: TorusLattice, E: float, ell: int, r: int = 0, variant: str = "bulk"):
    """Potential ``v(x1)`` with ``dv = E dx1`` on the strip ``|x1| <= ell``.

    Variants
    --------
    ``bulk``
        outside the strip ``v`` returns linearly over the remaining columns.
    ``flat-flanks``
        additionally ``dv = 0`` for ``ell < |x1| <= ell + 2r``; the descent
        is spread over the ``L - 2 ell - 4 r`` leftover edges.
    ``two-zone``
        ``v`` descends through a zone of the same width ``2 ell`` antipodal
        to the strip; the two plateaus in between are as wide as possible
        (``r`` is ignored).
    ``step``
        the whole rise ``2 ell E`` sits on the single column edge ``0 -> 1``
        and the return on the antipodal edge; ``v = -ell E`` on columns
        ``x1 <= 0`` and ``+ell E`` on ``x1 >= 1``.  This is the only
        traversing geometry that fits ``L = 4``.

    Returns
    -------
    v : SiteFunction
    delta_v : float
        ``v(ell, 0) - v(-ell, 0)`` (``= 2 ell E``).
    """
    L = lattice.L
    if ell < 0 or r < 0:
        raise ConfigurationError("ell and r must be non-negative")
    if variant == "step":
        if L < 4:
            raise ConfigurationError("step potential needs L >= 4")
        top = E * ell
        return SiteFunction(lattice, np.where(lattice.positions[:, 0] >= 1, top, -top)), 2.0 * ell * E
    if variant == "bulk":
        flat, closing = 0, L - 2 * ell
    elif variant == "flat-flanks":
        flat, closing = 2 * r, L - 2 * ell - 4 * r
    elif variant == "two-zone":
        flat = (L - 4 * ell) // 2
        closing = L - 2 * ell - 2 * flat
        if flat < 1:
            raise ConfigurationError(f"two-zone potential with ell={ell} needs L >= {4 * ell + 2}, got L={L}")
    else:
        raise ConfigurationError(f"unknown potential variant {variant!r}")
    if closing < 1:
        raise ConfigurationError(
            f"strip potential ({variant}, ell={ell}, r={r}) does not fit on L={L}: {closing} closing edges"
        )
    s = _strip_coordinate(lattice, ell + flat).astype(float)
    top = E * ell
    v = np.clip(E * s, -top, top) if E >= 0 else np.clip(E * s, top, -top)
    descending = s > ell + flat
    v = np.where(descending, top - (s - ell - flat) * (2 * top / closing), v)
    return SiteFunction(lattice, v), 2.0 * ell * E


# ---------------------------------------------------------------------------
# dual lattice


def _canonical_dual(lattice: TorusLattice, p) -> DualVertex:
    L, lo = lattice.L, lattice.lo
    return (
        float((p[0] - lo - 0.5) % L + lo + 0.5),
        float((p[1] - lo - 0.5) % L + lo + 0.5),
    )


@dataclass(frozen=True)
class DualEdge:
    """Oriented edge of the dual lattice, fixed by ``left`` (e_L) and ``right`` (e_R)."""

    left: Site
    right: Site

    def reversed(self) -> "DualEdge":
        return DualEdge(self.right, self.left)


def _dual_geometry(lattice: TorusLattice, e: DualEdge):
    """Return ``(start, end, direction)`` of a dual edge."""
    step = lattice.displacement(e.left, e.right)
    if sorted(np.abs(step).tolist()) != [0.0, 1.0]:
        raise OrientationError(f"dual edge {e} does not separate adjacent sites")
    direction = np.array([-step[1], step[0]])
    mid = np.asarray(e.left, dtype=float) + step / 2
    return (
        _canonical_dual(lattice, mid - direction / 2),
        _canonical_dual(lattice, mid + direction / 2),
        direction.astype(int),
    )


@dataclass(frozen=True, eq=False)
class DualPath:
    """Chain of dual edges; ``closed`` when the last edge ends where the first starts."""

    lattice: TorusLattice
    edges: tuple[DualEdge, ...]

    def __post_init__(self):
        if self.lattice.L < 3:
            raise ConfigurationError("dual paths need L >= 3")
        edges = tuple(DualEdge(self.lattice.canonical(e.left), self.lattice.canonical(e.right)) for e in self.edges)
        object.__setattr__(self, "edges", edges)
        geo = [_dual_geometry(self.lattice, e) for e in edges]
        for (s0, f0, _), (s1, _, _) in zip(geo, geo[1:]):
            if f0 != s1:
                raise MalformedPathError(f"dual edges do not chain: {f0} != {s1}")
        object.__setattr__(self, "_geometry", geo)

    def __len__(self):
        return len(self.edges)

    def __iter__(self):
        return iter(self.edges)

    @property
    def start(self) -> DualVertex:
        return self._geometry[0][0]

    @property
    def end(self) -> DualVertex:
        return self._geometry[-1][1]

    @property
    def closed(self) -> bool:
        return bool(self.edges) and self.start == self.end

    def directions(self) -> list[np.ndarray]:
        return [g[2] for g in self._geometry]

    def reversed(self) -> "DualPath":
        return DualPath(self.lattice, tuple(e.reversed() for e in reversed(self.edges)))

    def sites(self) -> set[Site]:
        """Sites passed by the path (``e_L`` and ``e_R`` of every edge)."""
        return {x for e in self.edges for x in (e.left, e.right)}

    def edge_set(self) -> frozenset[DualEdge]:
        return frozenset(self.edges)

    def check_boundary_compatible(self) -> None:
        """Raise unless some region has every ``e_R`` inside and every ``e_L`` outside."""
        lefts = {e.left for e in self.edges}
        rights = {e.right for e in self.edges}
        clash = lefts & rights
        if clash:
            raise OrientationError(f"sites {sorted(clash)} lie on both sides of the path")

    def __eq__(self, other):
        return isinstance(other, DualPath) and other.lattice == self.lattice and other.edges == self.edges

    def __hash__(self):
        return hash((self.lattice, self.edges))


def straight_dual_path(lattice: TorusLattice, start: Sequence[float], axis: int, length: int, sign: int = 1) -> DualPath:
    """Straight dual path from the dual vertex ``start`` along ``sign * e_axis``."""
    d = np.zeros(2, dtype=int)
    d[axis] = sign
    # e_R - e_L = rot(-90)(d)
    step = np.array([d[1], -d[0]])
    p = np.asarray(start, dtype=float)
    edges = []
    for k in range(length):
        mid = p + (k + 0.5) * d
        left = np.rint(mid - step / 2).astype(int)
        right = np.rint(mid + step / 2).astype(int)
        edges.append(DualEdge(tuple(int(c) for c in left), tuple(int(c) for c in right)))
    return DualPath(lattice, tuple(edges))


def horizontal_segment(lattice: TorusLattice, d: int, height: float = 0.5) -> DualPath:
    """``gamma_d``: from ``x1 = -d + 1/2`` to ``x1 = d + 1/2`` at ``x2 = height``."""
    return straight_dual_path(lattice, (-d + 0.5, height), 0, 2 * d)


def polyline_dual_path(lattice: TorusLattice, corners: Sequence[Sequence[float]]) -> DualPath:
    """Dual path through axis-aligned ``corners`` (dual vertices, unwrapped coordinates)."""
    edges: list[DualEdge] = []
    for a, b in zip(corners, corners[1:]):
        delta = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
        moving = np.flatnonzero(np.abs(delta) > 1e-12)
        if moving.size != 1 or abs(delta[moving[0]] - round(delta[moving[0]])) > 1e-12:
            raise MalformedPathError(f"segment {tuple(a)} -> {tuple(b)} is not an axis-aligned lattice step")
        axis = int(moving[0])
        n = int(round(delta[axis]))
        edges += straight_dual_path(lattice, a, axis, abs(n), 1 if n > 0 else -1).edges
    return DualPath(lattice, tuple(edges))


def boundary_path(lattice: TorusLattice, X: Iterable[Sequence[int]]) -> tuple[DualPath, ...]:
    """Oriented boundary of ``X``, one closed dual loop per component.

    Every dual edge has ``e_R`` in ``X`` and ``e_L`` outside.  Where four
    boundary edges meet at one dual vertex the walk turns towards ``X``
    (right turn), so loops never cross.
    """
    Xs = {lattice.canonical(x) for x in X}
    if not Xs or len(Xs) == lattice.n_sites:
        raise EmptyBoundaryError("boundary of the empty set or the whole torus is empty")
    if lattice.L < 3:
        raise ConfigurationError("dual paths need L >= 3")
    edges = []
    for x in sorted(Xs):
        for axis in AXES:
            for s in (1, -1):
                y = lattice.shift(x, axis, s)
                if y not in Xs:
                    edges.append(DualEdge(y, x))
    geo = {e: _dual_geometry(lattice, e) for e in edges}
    by_start: dict[DualVertex, list[DualEdge]] = {}
    for e in edges:
        by_start.setdefault(geo[e][0], []).append(e)
    unused = set(edges)
    loops = []
    for first in edges:
        if first not in unused:
            continue
        loop = [first]
        unused.discard(first)
        cur = first
        while True:
            end, d = geo[cur][1], geo[cur][2]
            cands = [e for e in by_start.get(end, []) if e in unused]
            if not cands:
                break
            right_turn = np.array([d[1], -d[0]])

            def turn_rank(e):
                nd = geo[e][2]
                if np.array_equal(nd, right_turn):
                    return 0
                if np.array_equal(nd, d):
                    return 1
                return 2

            nxt = min(cands, key=turn_rank)
            unused.discard(nxt)
            loop.append(nxt)
            cur = nxt
        loops.append(DualPath(lattice, tuple(loop)))
    return tuple(loops)


def emf_integral(A: OneForm, gamma: DualPath) -> float:
    """Line integral of ``A`` along a dual path.

    Each dual edge with direction ``d`` contributes the mean of ``A`` over
    the four half lattice edges parallel to ``d`` through ``e_L`` and
    ``e_R``.  For closed loops and for ``A`` vanishing near the endpoints
    this equals the integral along any homotopic lattice path.
    """
    lat = A.lattice
    total = 0.0
    for e, d in zip(gamma.edges, gamma.directions()):
        axis = int(np.flatnonzero(d)[0])
        sign = int(d[axis])
        for x in (e.left, e.right):
            total += 0.25 * (A(lat.edge(x, axis, sign)) + A(lat.edge(x, axis, -sign).reversed()))
    return float(total)
