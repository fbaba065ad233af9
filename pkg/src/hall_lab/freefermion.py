"""Non-interacting fast path: single-particle matrices, Slater states, Bloch bands.

For ``U = 0`` (no density-density terms) every many-body quantity built
from the ground state reduces to the ``L^2 x N`` orbital matrix of the
lowest single-particle levels.  Overlaps of Slater states are orbital
determinants; the many-body ``N = 1`` sector matrix is the single-particle
matrix itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd

import numpy as np

from .errors import AssumptionViolation, BandTouchingError, ConfigurationError, FrequencyOutOfGapError
from .hamiltonian import HamiltonianSpec, _dual_edge_coefficients
from .lattice import DualPath, OneForm, SiteFunction, standard_flux_form

DEFAULT_ORBITAL_GAP_FLOOR = 1e-8


@dataclass(frozen=True, eq=False)
class SingleParticleHamiltonian:
    """``h[x', x]`` is the amplitude of the hop ``x -> x'``; diagonal holds on-site terms."""

    spec: HamiltonianSpec
    matrix: np.ndarray


def _check_free(spec: HamiltonianSpec) -> None:
    if spec.interactions:
        raise ConfigurationError("free-fermion routines need a spec without density-density terms")


def hop_matrix(spec: HamiltonianSpec, coefficients: np.ndarray) -> np.ndarray:
    """Single-particle matrix of ``sum_k b_k c^dag_{t_k} c_{s_k} + h.c.``."""
    n = spec.lattice.n_sites
    src, tgt = spec._edges
    m = np.zeros((n, n), dtype=complex)
    np.add.at(m, (tgt, src), coefficients)
    return m + m.conj().T


def single_particle(spec: HamiltonianSpec, A: OneForm | None = None) -> SingleParticleHamiltonian:
    _check_free(spec)
    h = hop_matrix(spec, spec.amplitudes(A))
    h[np.diag_indices_from(h)] += spec.onsite - spec.mu
    return SingleParticleHamiltonian(spec, h)


def drive_matrix(spec: HamiltonianSpec, A: OneForm, base: OneForm | None = None) -> np.ndarray:
    return hop_matrix(spec, 1j * spec.edge_values(A) * spec.amplitudes(base))


def current_matrix(spec: HamiltonianSpec, gamma, A: OneForm | None = None) -> np.ndarray:
    """Single-particle matrix of ``J_gamma``."""
    paths = (gamma,) if isinstance(gamma, DualPath) else tuple(gamma)
    c = _dual_edge_coefficients(spec, paths)
    return hop_matrix(spec, -1j * c * spec.amplitudes(A))


def density_matrix(spec: HamiltonianSpec, f) -> np.ndarray:
    w = f.values if isinstance(f, SiteFunction) else np.asarray(f, dtype=float)
    return np.diag(w.astype(complex))


@dataclass(frozen=True, eq=False)
class SlaterState:
    """Lowest ``N`` orbitals of a single-particle Hamiltonian."""

    orbitals: np.ndarray
    occupied_energies: np.ndarray
    energies: np.ndarray
    vectors: np.ndarray
    gap: float

    @property
    def N(self) -> int:
        return self.orbitals.shape[1]

    @property
    def correlation(self) -> np.ndarray:
        """``P_1 = Phi Phi^dag``."""
        return self.orbitals @ self.orbitals.conj().T

    @property
    def energy(self) -> float:
        return float(self.occupied_energies.sum())


def slater_ground_state(h: SingleParticleHamiltonian | np.ndarray, N: int,
                        gap_floor: float = DEFAULT_ORBITAL_GAP_FLOOR) -> SlaterState:
    m = h.matrix if isinstance(h, SingleParticleHamiltonian) else np.asarray(h)
    w, v = np.linalg.eigh(m)
    n = len(w)
    if not 0 <= N <= n:
        raise ConfigurationError(f"cannot fill {N} of {n} orbitals")
    gap = float(w[N] - w[N - 1]) if 0 < N < n else np.inf
    if gap < gap_floor:
        raise AssumptionViolation(f"orbital gap {gap:.3e} between levels {N - 1} and {N} below floor", gap=gap)
    return SlaterState(v[:, :N], w[:N], w, v, gap)


def slater_overlap(a: SlaterState, b: SlaterState) -> complex:
    """``<a, b> = det(Phi_a^dag Phi_b)``."""
    return complex(np.linalg.det(a.orbitals.conj().T @ b.orbitals))


def _forms(spec, forms):
    if forms is None:
        return (standard_flux_form(1, spec.lattice), standard_flux_form(2, spec.lattice))
    return tuple(forms)


def _slater_at(spec, forms, phi, N, gap_floor):
    A = forms[0] * phi[0] + forms[1] * phi[1]
    try:
        return slater_ground_state(single_particle(spec, A), N, gap_floor)
    except AssumptionViolation as exc:
        raise AssumptionViolation(f"orbital gap closes at twist {tuple(phi)}: {exc}", gap=exc.gap,
                                  points=[tuple(phi)]) from exc


def _plaquette_curvature(spec, forms, N, h, gap_floor):
    pts = [(-h, -h), (h, -h), (h, h), (-h, h)]
    states = [_slater_at(spec, forms, p, N, gap_floor) for p in pts]
    prod = 1.0 + 0j
    for k in range(4):
        prod *= slater_overlap(states[k], states[(k + 1) % 4])
    return -np.angle(prod) / (2 * h) ** 2


def free_curvature(
    spec: HamiltonianSpec,
    N: int | None = None,
    method: str = "overlap",
    h: float = 1e-3,
    forms=None,
    gap_floor: float = DEFAULT_ORBITAL_GAP_FLOOR,
) -> float:
    """Adiabatic curvature of the Slater ground state at zero twist.

    ``overlap`` integrates the Berry phase of a small counter-clockwise
    plaquette of side ``2h`` (Richardson-combined with side ``h``);
    ``projector`` uses ``i tr(P_1 [dP_1, dP_1'])`` with first-order
    orbital derivatives.
    """
    _check_free(spec)
    N = spec.N if N is None else N
    forms = _forms(spec, forms)
    if N in (0, spec.lattice.n_sites):
        return 0.0
    if method == "overlap":
        a = _plaquette_curvature(spec, forms, N, h, gap_floor)
        b = _plaquette_curvature(spec, forms, N, h / 2, gap_floor)
        return float((4 * b - a) / 3)
    if method == "projector":
        st = slater_ground_state(single_particle(spec), N, gap_floor)
        dP = [_projector_derivative(spec, st, drive_matrix(spec, f)) for f in forms]
        P = st.correlation
        return float(np.real(1j * np.trace(P @ (dP[0] @ dP[1] - dP[1] @ dP[0]))))
    raise ValueError(f"unknown free-curvature method {method!r}")


def _projector_derivative(spec, st: SlaterState, dh: np.ndarray) -> np.ndarray:
    N = st.N
    V, E = st.vectors, st.energies
    M = V.conj().T @ dh @ V
    D = np.zeros_like(M)
    occ, emp = slice(0, N), slice(N, None)
    denom = E[occ][:, None] - E[emp][None, :]
    D[emp, occ] = (M[emp, occ] / denom.T)
    D[occ, emp] = D[emp, occ].conj().T
    return V @ D @ V.conj().T


def free_kubo(spec: HamiltonianSpec, J: np.ndarray, V: np.ndarray, nu: float = 0.0, eps: float = 0.0,
              N: int | None = None, A: OneForm | None = None,
              gap_floor: float = DEFAULT_ORBITAL_GAP_FLOOR) -> complex:
    """Static Kubo response of the quadratic observable ``J`` to the quadratic perturbation ``V``.

    Same closed form as the many-body ``kubo_time_integral`` with particle-hole
    excitations ``b <- a`` (``a`` occupied, ``b`` empty) in place of
    excited many-body levels.
    """
    _check_free(spec)
    N = spec.N if N is None else N
    st = slater_ground_state(single_particle(spec, A), N, gap_floor)
    if abs(nu) >= st.gap / 2:
        raise FrequencyOutOfGapError(f"|nu| = {abs(nu)} not below half the orbital gap {st.gap / 2}")
    U, E = st.vectors, st.energies
    Vt = U.conj().T @ V @ U
    Jt = U.conj().T @ J @ U
    occ, emp = slice(0, N), slice(N, None)
    d = E[emp][None, :] - E[occ][:, None]  # (a, b): excitation energy
    # <0|V|b<-a> = V_ba, <b<-a|J|0> = J_ba
    term1 = Vt[occ, emp] * Jt[emp, occ].T  # V_ab J_ba
    term2 = Jt[occ, emp] * Vt[emp, occ].T  # J_ab V_ba
    return complex(-np.sum(term1 / (d + nu + 1j * eps) + term2 / (d - nu - 1j * eps)))


# ---------------------------------------------------------------------------
# Bloch bands


def bloch_hamiltonian(p: int, q: int, K1: float, k2: float, t: float = 1.0) -> np.ndarray:
    """Harper Bloch matrix on the ``q``-site magnetic cell (flux ``2 pi p / q``)."""
    flux = 2 * np.pi * p / q
    j = np.arange(q)
    h = np.diag(2 * t * np.cos(k2 - flux * j)).astype(complex)
    for a in range(q - 1):
        h[a + 1, a] += t
        h[a, a + 1] += t
    # hop from site q-1 of the previous cell into site 0
    h[0, q - 1] += t * np.exp(-1j * K1)
    h[q - 1, 0] += t * np.exp(1j * K1)
    if q == 1:
        h = np.array([[2 * t * np.cos(k2) + 2 * t * np.cos(K1)]], dtype=complex)
    return h


def band_chern(p: int, q: int, band: int, grid: int = 24, t: float = 1.0, touch_tol: float = 1e-6) -> int:
    """Chern number of Harper band ``band`` (0 = lowest) by plaquette link variables."""
    if q < 1 or gcd(p, q) != 1:
        raise ConfigurationError(f"flux p/q = {p}/{q} must be in lowest terms")
    if not 0 <= band < q:
        raise ConfigurationError(f"band index {band} outside [0, {q})")
    ks = 2 * np.pi * np.arange(grid) / grid
    vecs = np.empty((grid, grid, q), dtype=complex)
    min_gap = np.inf
    for a, K1 in enumerate(ks):
        for b, k2 in enumerate(ks):
            w, v = np.linalg.eigh(bloch_hamiltonian(p, q, K1, k2, t))
            if band > 0:
                min_gap = min(min_gap, w[band] - w[band - 1])
            if band < q - 1:
                min_gap = min(min_gap, w[band + 1] - w[band])
            vecs[a, b] = v[:, band]
    if min_gap < touch_tol * max(1.0, abs(t)):
        raise BandTouchingError(f"band {band} at flux {p}/{q} touches a neighbour (min gap {min_gap:.2e})")
    return int(round(link_chern(vecs)))


def link_chern(vecs: np.ndarray) -> float:
    """Sum of plaquette Berry phases / 2 pi on a periodic ``(M, M, dim)`` grid of states.

    ``vecs[a, b]`` may also be ``(M, M, dim, N)`` orbital blocks (overlaps
    become determinants).
    """
    M1, M2 = vecs.shape[:2]

    def ov(a, b):
        if vecs.ndim == 3:
            return np.vdot(a, b)
        return np.linalg.det(a.conj().T @ b)

    total = 0.0
    for a in range(M1):
        for b in range(M2):
            a1, b1 = (a + 1) % M1, (b + 1) % M2
            loop = ov(vecs[a, b], vecs[a1, b]) * ov(vecs[a1, b], vecs[a1, b1]) \
                * ov(vecs[a1, b1], vecs[a, b1]) * ov(vecs[a, b1], vecs[a, b])
            total += -np.angle(loop)
    return total / (2 * np.pi)


def free_chern_number(spec: HamiltonianSpec, grid: int = 12, N: int | None = None,
                      gap_floor: float = DEFAULT_ORBITAL_GAP_FLOOR) -> int:
    """Twist-torus Chern number of the Slater ground state (grid includes ``phi = 2 pi``)."""
    _check_free(spec)
    N = spec.N if N is None else N
    forms = _forms(spec, None)
    phis = 2 * np.pi * np.arange(grid + 1) / grid
    n = spec.lattice.n_sites
    orb = np.empty((grid + 1, grid + 1, n, N), dtype=complex)
    for a, p1 in enumerate(phis):
        for b, p2 in enumerate(phis):
            orb[a, b] = _slater_at(spec, forms, (p1, p2), N, gap_floor).orbitals
    return int(round(_open_grid_chern(orb)))


def _open_grid_chern(states: np.ndarray) -> float:
    """Plaquette sum on a ``(M+1, M+1, ...)`` grid whose last row/column closes the torus up to a gauge."""
    M = states.shape[0] - 1

    def ov(a, b):
        if states.ndim == 3:
            return np.vdot(a, b)
        return np.linalg.det(a.conj().T @ b)

    total = 0.0
    for a in range(M):
        for b in range(M):
            s00, s10, s11, s01 = states[a, b], states[a + 1, b], states[a + 1, b + 1], states[a, b + 1]
            total += -np.angle(ov(s00, s10) * ov(s10, s11) * ov(s11, s01) * ov(s01, s00))
    return total / (2 * np.pi)
