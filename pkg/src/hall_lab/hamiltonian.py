"""Nearest-neighbour lattice fermion Hamiltonians, Peierls coupling and currents.

Hopping convention: ``hopping[i, axis]`` is the amplitude ``alpha(x, x')``
of the hop ``x -> x' = x + e_axis`` (site ``x = site_i``), i.e. the
coefficient of ``c^dag_{x'} c_x`` in ``H``.  The reverse hop carries the
complex conjugate.  A vector potential multiplies ``alpha(x, x')`` by
``exp(i A(x -> x'))``, which makes ``U_theta H_A U_theta^dag = H_{A + d theta}``
hold exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import CommensurabilityError, ConfigurationError
from .fock import (
    DEFAULT_MAX_DIM,
    ManyBodyOperator,
    SectorBasis,
    assemble_hops,
    density_polynomial,
    hop_table,
    number_operator,
)
from .lattice import AXES, DualPath, OneForm, TorusLattice, boundary_path, standard_flux_form


@dataclass(frozen=True, eq=False)
class HamiltonianSpec:
    """Parameters of ``H = sum hops + sum_X B_X - mu N`` on one ``N``-particle sector.

    ``onsite`` is a per-site potential ``sum_x w_x n_x`` (a one-site density
    term), ``interactions`` a tuple of ``(site indices, coefficient)``
    density monomials.
    """

    lattice: TorusLattice
    N: int
    hopping: np.ndarray
    onsite: np.ndarray | None = None
    interactions: tuple = ()
    mu: float = 0.0
    base_flux: float = 0.0
    max_dim: int = DEFAULT_MAX_DIM
    label: str = "custom"

    def __post_init__(self):
        n = self.lattice.n_sites
        hop = np.array(self.hopping, dtype=complex)
        if hop.shape != (n, 2):
            raise ConfigurationError(f"hopping must have shape {(n, 2)}, got {hop.shape}")
        hop.setflags(write=False)
        object.__setattr__(self, "hopping", hop)
        onsite = np.zeros(n) if self.onsite is None else np.array(self.onsite, dtype=float)
        if onsite.shape != (n,):
            raise ConfigurationError(f"onsite potential must have shape {(n,)}")
        onsite.setflags(write=False)
        object.__setattr__(self, "onsite", onsite)
        terms = []
        for idx, c in self.interactions:
            idx = tuple(sorted({int(i) for i in idx}))
            if not idx or min(idx) < 0 or max(idx) >= n:
                raise ConfigurationError(f"interaction support {idx} is not a set of sites")
            terms.append((idx, float(c)))
        object.__setattr__(self, "interactions", tuple(terms))
        if not 0 <= self.N <= n:
            raise ConfigurationError(f"particle number {self.N} outside [0, {n}]")

    # recorded bounds -------------------------------------------------------

    @property
    def interaction_range(self) -> float:
        """``R = max diam(X)`` over the density terms (at least 1 for hopping)."""
        lat = self.lattice
        R = 1.0 if np.any(self.hopping != 0) else 0.0
        for idx, _ in self.interactions:
            pts = [lat.sites[i] for i in idx]
            for a in pts:
                for b in pts:
                    R = max(R, lat.dist(a, b))
        return R

    @property
    def interaction_strength(self) -> float:
        """``m = max |coefficient|`` over hopping, on-site and density terms."""
        vals = [np.abs(self.hopping).max(initial=0.0), np.abs(self.onsite).max(initial=0.0)]
        vals += [abs(c) for _, c in self.interactions]
        return float(max(vals))

    # cached assembly pieces ------------------------------------------------

    @cached_property
    def basis(self) -> SectorBasis:
        return SectorBasis.build(self.lattice, self.N, self.max_dim)

    @cached_property
    def _edges(self) -> tuple[np.ndarray, np.ndarray]:
        """``(sources, targets)`` of the ``2 L^2`` positive edges in ``(site, axis)`` order."""
        lat = self.lattice
        src = np.repeat(np.arange(lat.n_sites), 2)
        tgt = lat.neighbor_index.T.ravel()
        return src, tgt

    @cached_property
    def _table(self):
        src, tgt = self._edges
        return hop_table(self.basis, src, tgt)

    @cached_property
    def _diagonal(self) -> np.ndarray:
        b = self.basis
        diag = b.occupations @ (self.onsite - self.mu)
        if self.interactions:
            diag = diag + density_polynomial(b, self.interactions)
        return diag

    def edge_values(self, A: OneForm | None) -> np.ndarray:
        """Flattened ``A`` on the positive edges, aligned with the hop table."""
        if A is None:
            return np.zeros(2 * self.lattice.n_sites)
        if A.lattice != self.lattice:
            raise ConfigurationError("one-form lives on a different lattice")
        return A.values.ravel()

    def amplitudes(self, A: OneForm | None = None) -> np.ndarray:
        """Peierls-substituted forward amplitudes on the positive edges."""
        return self.hopping.ravel() * np.exp(1j * self.edge_values(A))

    def hop_sum(self, coefficients: np.ndarray) -> ManyBodyOperator:
        """``sum_k b_k c^dag_{t_k} c_{s_k} + h.c.`` over positive edges ``k``."""
        return ManyBodyOperator(self.basis, assemble_hops(self.basis, self._table, coefficients))

    def diagonal_operator(self) -> ManyBodyOperator:
        return ManyBodyOperator(self.basis, sp.diags(self._diagonal.astype(complex), format="csr"))

    def replace(self, **changes) -> "HamiltonianSpec":
        kw = dict(
            lattice=self.lattice,
            N=self.N,
            hopping=self.hopping,
            onsite=self.onsite,
            interactions=self.interactions,
            mu=self.mu,
            base_flux=self.base_flux,
            max_dim=self.max_dim,
            label=self.label,
        )
        kw.update(changes)
        return HamiltonianSpec(**kw)

    def fingerprint(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(f"{self.lattice.L}|{self.N}|{self.mu!r}|{self.base_flux!r}|{self.label}".encode())
        h.update(np.ascontiguousarray(self.hopping).tobytes())
        h.update(np.ascontiguousarray(self.onsite).tobytes())
        h.update(repr(self.interactions).encode())
        return h.hexdigest()[:16]


def nearest_neighbor_pairs(lattice: TorusLattice) -> list[tuple[int, int]]:
    """Unordered nearest-neighbour pairs (each bond once; L=2 double bonds merged)."""
    pairs = set()
    nbr = lattice.neighbor_index
    for i in range(lattice.n_sites):
        for a in AXES:
            j = int(nbr[a, i])
            if i != j:
                pairs.add((min(i, j), max(i, j)))
    return sorted(pairs)


def harper_spec(
    L: int,
    t: float = 1.0,
    flux: float = 0.0,
    U: float = 0.0,
    mu: float = 0.0,
    N: int = 1,
    onsite=None,
    max_dim: int = DEFAULT_MAX_DIM,
    tol: float = 1e-12,
) -> HamiltonianSpec:
    """Harper model: ``t`` on horizontal bonds, ``t exp(i flux x1)`` on vertical ones.

    ``flux`` must be a multiple of ``2 pi / L``.  ``U`` couples nearest
    neighbour densities; ``onsite`` is an optional extra site potential.
    """
    lattice = TorusLattice(L)
    k = flux * L / (2 * np.pi)
    if abs(k - round(k)) > tol * max(1.0, abs(k)):
        raise CommensurabilityError(f"flux {flux!r} is not a multiple of 2*pi/{L}")
    x1 = lattice.positions[:, 0]
    hop = np.empty((lattice.n_sites, 2), dtype=complex)
    hop[:, 0] = t
    hop[:, 1] = t * np.exp(1j * flux * x1)
    interactions = tuple((p, U) for p in nearest_neighbor_pairs(lattice)) if U != 0 else ()
    return HamiltonianSpec(
        lattice=lattice,
        N=N,
        hopping=hop,
        onsite=onsite,
        interactions=interactions,
        mu=mu,
        base_flux=flux,
        max_dim=max_dim,
        label="harper",
    )


def with_vector_potential(spec: HamiltonianSpec, A: OneForm | None = None) -> ManyBodyOperator:
    """``H_A``."""
    return spec.hop_sum(spec.amplitudes(A)) + spec.diagonal_operator()


def twist_form(lattice: TorusLattice, phi1: float, phi2: float) -> OneForm:
    return standard_flux_form(1, lattice) * phi1 + standard_flux_form(2, lattice) * phi2


def twist_hamiltonian(spec: HamiltonianSpec, phi1: float, phi2: float) -> ManyBodyOperator:
    """``H(phi) = H_{phi1 xi1 + phi2 xi2}``."""
    return with_vector_potential(spec, twist_form(spec.lattice, phi1, phi2))


def drive_generator(spec: HamiltonianSpec, A: OneForm, base: OneForm | None = None) -> ManyBodyOperator:
    """``W = d/ds H_{base + s A}`` at ``s = 0``: each hop times ``i A(edge)``."""
    return spec.hop_sum(1j * spec.edge_values(A) * spec.amplitudes(base))


def flux_derivative(spec: HamiltonianSpec, direction: int, base: OneForm | None = None) -> ManyBodyOperator:
    """``d H / d phi_direction`` at ``phi = 0`` (around an optional background ``base``)."""
    return drive_generator(spec, standard_flux_form(direction, spec.lattice), base)


@dataclass(frozen=True, eq=False)
class CurrentOperator:
    """Current across ``paths`` (one dual path, or the loops of a boundary)."""

    paths: tuple[DualPath, ...]
    operator: ManyBodyOperator

    @property
    def path(self) -> DualPath:
        if len(self.paths) != 1:
            raise ValueError(f"current runs along {len(self.paths)} loops; use .paths")
        return self.paths[0]


def _dual_edge_coefficients(spec: HamiltonianSpec, paths: Iterable[DualPath]) -> np.ndarray:
    """``c_k = +1`` if the dual edge's e_L -> e_R hop is the forward hop of edge ``k``, ``-1`` if reverse."""
    lat = spec.lattice
    c = np.zeros(2 * lat.n_sites)
    for gamma in paths:
        if gamma.lattice != lat:
            raise ConfigurationError("dual path lives on a different lattice")
        gamma.check_boundary_compatible()
        for e in gamma.edges:
            step = lat.displacement(e.left, e.right).astype(int)
            axis = int(np.flatnonzero(step)[0])
            if step[axis] > 0:
                c[2 * lat.index(e.left) + axis] += 1.0
            else:
                c[2 * lat.index(e.right) + axis] -= 1.0
    return c


def current_path(spec: HamiltonianSpec, gamma: DualPath | Sequence[DualPath], A: OneForm | None = None) -> CurrentOperator:
    """``J_gamma = -i sum_e (h_{e_L -> e_R} - h_{e_R -> e_L})`` with Peierls amplitudes of ``A``."""
    paths = (gamma,) if isinstance(gamma, DualPath) else tuple(gamma)
    c = _dual_edge_coefficients(spec, paths)
    return CurrentOperator(paths, spec.hop_sum(-1j * c * spec.amplitudes(A)))


def current_loop(spec: HamiltonianSpec, X: Iterable[Sequence[int]], A: OneForm | None = None) -> CurrentOperator:
    """``J_{dX} = i [H_A, n_X]``, the rate of change of the charge in ``X``."""
    X = {spec.lattice.canonical(x) for x in X}
    H = with_vector_potential(spec, A)
    op = 1j * H.commutator(number_operator(spec.basis, X))
    if len(X) in (0, spec.lattice.n_sites) or spec.lattice.L < 3:
        return CurrentOperator((), op)
    return CurrentOperator(boundary_path(spec.lattice, X), op)
