"""Fixed particle-number fermionic Fock sectors and sparse many-body operators.

Basis states are occupation bit patterns stored as integers (bit ``i`` is
site index ``i`` of the lattice, row-major).  The fermionic sign of
``c^dag_x c_y`` acting on a pattern is ``(-1)**k`` where ``k`` counts the
occupied sites strictly between ``x`` and ``y`` in that ordering.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from math import comb
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import BasisMismatchError, CapacityError
from .lattice import SiteFunction, TorusLattice

DEFAULT_MAX_DIM = 5_000_000


@dataclass(frozen=True, eq=False)
class SectorBasis:
    """All ``N``-particle occupation patterns on the lattice, in increasing order."""

    lattice: TorusLattice
    N: int
    states: np.ndarray

    @classmethod
    def build(cls, lattice: TorusLattice, N: int, max_dim: int = DEFAULT_MAX_DIM) -> "SectorBasis":
        n = lattice.n_sites
        if not 0 <= N <= n:
            raise ValueError(f"particle number {N} outside [0, {n}]")
        if n > 62:
            raise CapacityError(f"{n} sites do not fit a 64-bit occupation pattern")
        dim = comb(n, N)
        if dim > max_dim:
            raise CapacityError(f"sector dimension binomial({n}, {N}) = {dim} exceeds cap {max_dim}")
        states = np.fromiter(
            (sum(1 << i for i in occ) for occ in combinations(range(n), N)), dtype=np.int64, count=dim
        )
        states.sort()
        states.setflags(write=False)
        return cls(lattice, N, states)

    @property
    def dim(self) -> int:
        return len(self.states)

    @property
    def n_sites(self) -> int:
        return self.lattice.n_sites

    @cached_property
    def occupations(self) -> np.ndarray:
        """``(dim, n_sites)`` 0/1 occupation table."""
        bits = (self.states[:, None] >> np.arange(self.n_sites, dtype=np.int64)) & 1
        bits = bits.astype(np.int8)
        bits.setflags(write=False)
        return bits

    def lookup(self, patterns: np.ndarray) -> np.ndarray:
        """Positions of ``patterns`` in the basis (patterns must be present)."""
        return np.searchsorted(self.states, patterns)

    def compatible(self, other: "SectorBasis") -> bool:
        return self is other or (self.lattice == other.lattice and self.N == other.N)


def build_sector_basis(lattice: TorusLattice, N: int, max_dim: int = DEFAULT_MAX_DIM) -> SectorBasis:
    return SectorBasis.build(lattice, N, max_dim)


def _is_sparse(m) -> bool:
    return sp.issparse(m)


@dataclass(frozen=True, eq=False)
class ManyBodyOperator:
    """Operator on one particle-number sector; ``matrix`` is scipy-sparse or dense."""

    basis: SectorBasis
    matrix: object

    def __post_init__(self):
        m = self.matrix
        if _is_sparse(m):
            m = sp.csr_matrix(m, dtype=complex)
        else:
            m = np.asarray(m, dtype=complex)
        if m.shape != (self.basis.dim, self.basis.dim):
            raise ValueError(f"matrix shape {m.shape} does not match sector dimension {self.basis.dim}")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls, basis):
        return cls(basis, sp.identity(basis.dim, dtype=complex, format="csr"))

    @classmethod
    def zeros(cls, basis):
        return cls(basis, sp.csr_matrix((basis.dim, basis.dim), dtype=complex))

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def is_sparse(self) -> bool:
        return _is_sparse(self.matrix)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray() if self.is_sparse else np.array(self.matrix)

    def _other(self, other) -> object:
        if not isinstance(other, ManyBodyOperator):
            raise TypeError(f"expected ManyBodyOperator, got {type(other).__name__}")
        if not self.basis.compatible(other.basis):
            raise BasisMismatchError("operators act on different sector bases")
        return other.matrix

    def _wrap(self, m):
        return ManyBodyOperator(self.basis, m)

    def __add__(self, other):
        return self._wrap(_add(self.matrix, self._other(other)))

    def __sub__(self, other):
        return self._wrap(_add(self.matrix, -1 * self._other(other)))

    def __neg__(self):
        return self._wrap(-self.matrix)

    def __mul__(self, c):
        if isinstance(c, ManyBodyOperator):
            raise TypeError("use @ for operator products")
        return self._wrap(self.matrix * complex(c))

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self._wrap(self.matrix / complex(c))

    def __matmul__(self, other):
        if isinstance(other, ManyBodyOperator):
            return self._wrap(_mul(self.matrix, self._other(other)))
        return self.matrix @ np.asarray(other)

    def adjoint(self) -> "ManyBodyOperator":
        return self._wrap(self.matrix.conj().T)

    @property
    def H(self):
        return self.adjoint()

    def commutator(self, other: "ManyBodyOperator") -> "ManyBodyOperator":
        return self @ other - other @ self

    def max_abs(self) -> float:
        """Largest absolute matrix entry."""
        if self.is_sparse:
            return float(np.abs(self.matrix.data).max(initial=0.0))
        return float(np.abs(self.matrix).max(initial=0.0))

    def hermiticity_residual(self) -> float:
        return (self - self.adjoint()).max_abs()

    def diagonal(self) -> np.ndarray:
        return np.asarray(self.matrix.diagonal())


def _add(a, b):
    if _is_sparse(a) and _is_sparse(b):
        return a + b
    return _dense(a) + _dense(b)


def _mul(a, b):
    if _is_sparse(a) and _is_sparse(b):
        return a @ b
    if _is_sparse(a):
        return a @ _dense(b)
    if _is_sparse(b):
        return (b.T @ _dense(a).T).T
    return a @ b


def _dense(m):
    return m.toarray() if _is_sparse(m) else m


def max_abs_diff(a: ManyBodyOperator, b: ManyBodyOperator) -> float:
    return (a - b).max_abs()


# ---------------------------------------------------------------------------
# elementary operators


def _between_mask(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    lo = np.minimum(x, y)
    hi = np.maximum(x, y)
    one = np.int64(1)
    return ((one << hi) - (one << (lo + 1))).astype(np.int64)


@dataclass(frozen=True)
class HopTable:
    """COO skeleton of ``c^dag_{target_k} c_{source_k}`` for a list of site pairs.

    ``rows, cols, signs`` give the non-zero entries; ``term`` says which
    pair each entry belongs to.
    """

    rows: np.ndarray
    cols: np.ndarray
    signs: np.ndarray
    term: np.ndarray


def hop_table(basis: SectorBasis, sources: Sequence[int], targets: Sequence[int]) -> HopTable:
    """Entries of ``c^dag_t c_s`` for every pair ``(s, t)`` with ``s != t``."""
    sources = np.asarray(sources, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    if np.any(sources == targets):
        raise ValueError("hopping needs distinct sites; use number_operator for n_x")
    states = basis.states
    rows, cols, signs, term = [], [], [], []
    one = np.int64(1)
    for k, (s, t) in enumerate(zip(sources, targets)):
        ok = ((states >> s) & 1).astype(bool) & ~((states >> t) & 1).astype(bool)
        cidx = np.flatnonzero(ok)
        if cidx.size == 0:
            continue
        old = states[cidx]
        new = old - (one << s) + (one << t)
        between = np.bitwise_count(old & _between_mask(np.int64(s), np.int64(t)))
        rows.append(basis.lookup(new))
        cols.append(cidx)
        signs.append(1.0 - 2.0 * (between & 1))
        term.append(np.full(cidx.size, k, dtype=np.int64))
    if not rows:
        empty = np.zeros(0, dtype=np.int64)
        return HopTable(empty, empty, np.zeros(0), empty)
    return HopTable(np.concatenate(rows), np.concatenate(cols), np.concatenate(signs), np.concatenate(term))


def assemble_hops(basis: SectorBasis, table: HopTable, amplitudes: np.ndarray, hermitian: bool = True):
    """``sum_k a_k c^dag_{t_k} c_{s_k}`` (plus the adjoint when ``hermitian``) as CSR."""
    data = table.signs * np.asarray(amplitudes, dtype=complex)[table.term]
    dim = basis.dim
    m = sp.coo_matrix((data, (table.rows, table.cols)), shape=(dim, dim)).tocsr()
    if hermitian:
        m = m + m.conj().T
    return m


def hopping_term(basis: SectorBasis, x, y, amplitude: complex = 1.0) -> ManyBodyOperator:
    """``amplitude * c^dag_x c_y``."""
    lat = basis.lattice
    ix, iy = lat.index(x), lat.index(y)
    if ix == iy:
        raise ValueError("hopping_term needs x != y; use number_operator for n_x")
    table = hop_table(basis, [iy], [ix])
    return ManyBodyOperator(basis, assemble_hops(basis, table, np.array([amplitude]), hermitian=False))


def density_operator(basis: SectorBasis, weights) -> ManyBodyOperator:
    """``<f, n> = sum_x f(x) n_x`` for a SiteFunction or per-site array ``f``."""
    w = weights.values if isinstance(weights, SiteFunction) else np.asarray(weights, dtype=float)
    diag = basis.occupations @ w
    return ManyBodyOperator(basis, sp.diags(diag.astype(complex), format="csr"))


def number_operator(basis: SectorBasis, X: Iterable) -> ManyBodyOperator:
    """``n_X`` for a set of sites."""
    w = np.zeros(basis.n_sites)
    for x in X:
        w[basis.lattice.index(x)] = 1.0
    return density_operator(basis, w)


def gauge_unitary(basis: SectorBasis, theta) -> ManyBodyOperator:
    """``U_theta = exp(i <theta, n>)``."""
    w = theta.values if isinstance(theta, SiteFunction) else np.asarray(theta, dtype=float)
    phases = np.exp(1j * (basis.occupations @ w))
    return ManyBodyOperator(basis, sp.diags(phases, format="csr"))


def density_polynomial(basis: SectorBasis, terms) -> np.ndarray:
    """Diagonal of ``sum_X c_X prod_{x in X} n_x`` for ``terms = [(site indices, c_X)]``."""
    occ = basis.occupations
    diag = np.zeros(basis.dim)
    for idx, c in terms:
        diag += c * np.prod(occ[:, list(idx)], axis=1)
    return diag
