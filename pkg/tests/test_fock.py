from functools import reduce
from math import comb

import numpy as np
import pytest

from hall_lab.errors import BasisMismatchError, CapacityError
from hall_lab.fock import (
    ManyBodyOperator,
    SectorBasis,
    density_operator,
    density_polynomial,
    gauge_unitary,
    hopping_term,
    max_abs_diff,
    number_operator,
)
from hall_lab.lattice import SiteFunction, TorusLattice

# Jordan-Wigner oracle on the full Fock space via Kronecker products:
# c_i = Z x ... x Z x a x 1 x ... x 1 (site 0 is the first factor).
_Z = np.diag([1.0, -1.0])
_A = np.array([[0.0, 1.0], [0.0, 0.0]])  # |1> -> |0>


def jw_annihilators(n):
    out = []
    for i in range(n):
        factors = [_Z] * i + [_A] + [np.eye(2)] * (n - i - 1)
        out.append(reduce(np.kron, factors))
    return out


def sector_rows(basis):
    """Kronecker index of each basis pattern (bit i of the pattern is factor i)."""
    n = basis.n_sites
    bits = basis.occupations
    return (bits * (1 << np.arange(n - 1, -1, -1))).sum(axis=1)


def restrict(M, basis):
    idx = sector_rows(basis)
    return M[np.ix_(idx, idx)]


def test_oracle_satisfies_car():
    c = jw_annihilators(4)
    for i in range(4):
        for j in range(4):
            anti = c[i] @ c[j].T + c[j].T @ c[i]
            assert np.allclose(anti, np.eye(16) * (i == j))
            assert np.allclose(c[i] @ c[j] + c[j] @ c[i], 0)


@pytest.mark.parametrize("L,N", [(2, 1), (2, 2), (3, 1), (3, 4)])
def test_sector_dimension(L, N):
    b = SectorBasis.build(TorusLattice(L), N)
    assert b.dim == comb(L * L, N)
    assert np.all(b.occupations.sum(axis=1) == N)
    assert np.all(np.diff(b.states) > 0)


def test_capacity_error_names_binomial():
    with pytest.raises(CapacityError, match="binomial"):
        SectorBasis.build(TorusLattice(6), 18, max_dim=1000)


@pytest.mark.parametrize("L,N", [(2, 2), (3, 3)])
def test_hopping_matches_jordan_wigner(L, N, rng):
    lat = TorusLattice(L)
    basis = SectorBasis.build(lat, N)
    c = jw_annihilators(lat.n_sites)
    pairs = [(i, j) for i in range(lat.n_sites) for j in range(lat.n_sites) if i != j]
    if len(pairs) > 20:
        pairs = [pairs[k] for k in rng.choice(len(pairs), 20, replace=False)]
    for i, j in pairs:
        amp = complex(rng.normal(), rng.normal())
        ours = hopping_term(basis, lat.sites[i], lat.sites[j], amp).toarray()
        ref = restrict(amp * c[i].T @ c[j], basis)
        assert np.allclose(ours, ref, atol=1e-14)


def test_hopping_needs_distinct_sites():
    basis = SectorBasis.build(TorusLattice(2), 1)
    with pytest.raises(ValueError):
        hopping_term(basis, (0, 0), (0, 0))


def test_density_and_polynomial_match_oracle(rng):
    lat = TorusLattice(2)
    basis = SectorBasis.build(lat, 2)
    c = jw_annihilators(4)
    n_ops = [ci.T @ ci for ci in c]
    w = rng.normal(size=4)
    ref = restrict(sum(wi * ni for wi, ni in zip(w, n_ops)), basis)
    assert np.allclose(density_operator(basis, w).toarray(), ref)
    assert np.allclose(density_operator(basis, SiteFunction(lat, w)).toarray(), ref)
    terms = [((0, 1), 0.7), ((1, 3), -1.2)]
    poly = restrict(0.7 * n_ops[0] @ n_ops[1] - 1.2 * n_ops[1] @ n_ops[3], basis)
    assert np.allclose(np.diag(density_polynomial(basis, terms)), poly)
    X = [lat.sites[0], lat.sites[2]]
    assert np.allclose(number_operator(basis, X).toarray(), restrict(n_ops[0] + n_ops[2], basis))


def test_gauge_unitary_is_phase_of_density(rng):
    lat = TorusLattice(3)
    basis = SectorBasis.build(lat, 3)
    th = rng.normal(size=9)
    U = gauge_unitary(basis, th).toarray()
    D = density_operator(basis, th).toarray()
    assert np.allclose(U, np.diag(np.exp(1j * np.diag(D))))
    assert np.allclose(U @ U.conj().T, np.eye(basis.dim))


def test_operator_algebra(rng):
    lat = TorusLattice(3)
    basis = SectorBasis.build(lat, 2)
    h = hopping_term(basis, (0, 0), (1, 0), 0.3 + 0.2j)
    h = h + h.adjoint()
    assert h.hermiticity_residual() < 1e-15
    n = number_operator(basis, [(0, 0)])
    dense = ManyBodyOperator(basis, h.toarray())
    assert max_abs_diff(h.commutator(n), dense.commutator(n)) < 1e-15
    assert max_abs_diff(h * 2.0, h + h) < 1e-15
    assert max_abs_diff(h / 2.0 - h * 0.5, ManyBodyOperator.zeros(basis)) == 0
    v = rng.normal(size=basis.dim)
    assert np.allclose(h @ v, h.toarray() @ v)
    assert np.allclose((-h).toarray(), -h.toarray())
    assert np.allclose(ManyBodyOperator.identity(basis).diagonal(), 1)


def test_basis_mismatch():
    lat = TorusLattice(3)
    a = ManyBodyOperator.identity(SectorBasis.build(lat, 2))
    b = ManyBodyOperator.identity(SectorBasis.build(lat, 3))
    with pytest.raises(BasisMismatchError):
        a + b


def test_particle_hole_count():
    # N hops across the lattice: each c^dag_x c_y has exactly binom(n-2, N-1) non-zeros
    lat = TorusLattice(3)
    basis = SectorBasis.build(lat, 4)
    h = hopping_term(basis, (0, 0), (1, 1))
    assert h.matrix.nnz == comb(7, 3)
