"""Ground states, off-diagonal projection and the quasi-adiabatic map.

The quasi-adiabatic map is realised through the spectral calculus of ``H``:

    I(O)_{mn} = sqrt(2 pi) W_hat(E_n - E_m) O_{mn},

with ``W_hat(z) = -i / (sqrt(2 pi) z)`` for ``|z| >= g/2`` and a linear odd
continuation inside the gap.  Off the diagonal blocks this is
``i O_{mn} / (E_m - E_n)``, so that ``[H, I(O_bar)] = i O_bar`` and
``I([H, O_bar]) = i O_bar``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .errors import AssumptionViolation, BasisMismatchError, CapabilityError, SolverError
from .fock import ManyBodyOperator

DENSE_CAP = 4000
DEFAULT_GAP_FLOOR = 1e-6
_SQRT2PI = np.sqrt(2 * np.pi)


@dataclass(frozen=True)
class FilterTransform:
    """Odd, purely imaginary profile ``W_hat`` adapted to the gap ``g``."""

    gap: float

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        g = self.gap
        outside = np.abs(z) >= g / 2
        safe = np.where(outside, z, 1.0)
        return np.where(outside, -1j / (_SQRT2PI * safe), -1j * 4 * z / (_SQRT2PI * g * g))

    @property
    def sup(self) -> float:
        """``sup |W_hat|`` (attained at ``|z| = g/2``)."""
        return 2.0 / (_SQRT2PI * self.gap)


@dataclass(frozen=True, eq=False)
class SpectralCache:
    """Ground state of ``operator``; ``energies``/``vectors`` only in full mode."""

    operator: ManyBodyOperator
    E0: float
    psi: np.ndarray
    gap: float
    mode: str
    residual: float
    energies: np.ndarray | None = None
    vectors: np.ndarray | None = None

    @property
    def basis(self):
        return self.operator.basis

    @property
    def full(self) -> bool:
        return self.mode == "full"

    def require_full(self, what: str) -> None:
        if not self.full:
            raise CapabilityError(f"{what} needs the full eigendecomposition; build the cache with mode='full'")

    @property
    def filter(self) -> FilterTransform:
        return FilterTransform(self.gap)

    def in_eigenbasis(self, O: ManyBodyOperator) -> np.ndarray:
        self.require_full("eigenbasis transform")
        _check_basis(self, O)
        V = self.vectors
        return V.conj().T @ (O @ V if O.is_sparse else O.matrix @ V)

    def from_eigenbasis(self, M: np.ndarray) -> ManyBodyOperator:
        V = self.vectors
        return ManyBodyOperator(self.basis, V @ M @ V.conj().T)


def _check_basis(cache: SpectralCache, O: ManyBodyOperator) -> None:
    if not cache.basis.compatible(O.basis):
        raise BasisMismatchError("operator and ground state live on different sector bases")


def _fix_phase(v: np.ndarray) -> np.ndarray:
    """Deterministic phase: largest-modulus component real and positive."""
    k = int(np.argmax(np.abs(v) - 1e-12 * np.arange(v.size)))
    return v * (abs(v[k]) / v[k])


def ground_state(
    H: ManyBodyOperator,
    mode: str = "auto",
    gap_floor: float = DEFAULT_GAP_FLOOR,
    tol: float = 1e-12,
    dense_cap: int = DENSE_CAP,
) -> SpectralCache:
    """Ground state and gap of ``H``.

    ``mode`` is ``"full"`` (dense eigendecomposition), ``"ground"`` (Lanczos
    for the two lowest levels) or ``"auto"`` (full below ``dense_cap``).
    """
    dim = H.basis.dim
    if mode == "auto":
        mode = "full" if dim <= dense_cap else "ground"
    if mode not in ("full", "ground"):
        raise ValueError(f"unknown spectral mode {mode!r}")
    if dim < 2:
        raise AssumptionViolation("one-dimensional sector has no spectral gap", gap=np.inf)
    energies = vectors = None
    if mode == "full" or dim <= 64:
        if dim > dense_cap:
            raise CapabilityError(f"dimension {dim} exceeds the dense cap {dense_cap}")
        w, v = np.linalg.eigh(H.toarray())
        E0, E1, psi = float(w[0]), float(w[1]), v[:, 0]
        if mode == "full":
            energies, vectors = w, v
    else:
        try:
            w, v = spla.eigsh(H.matrix, k=2, which="SA", tol=tol, maxiter=max(1000, 20 * dim))
        except spla.ArpackNoConvergence as exc:  # pragma: no cover - depends on ARPACK
            raise SolverError("Lanczos did not converge", residual=np.inf) from exc
        order = np.argsort(w)
        w, v = w[order], v[:, order]
        E0, E1, psi = float(w[0]), float(w[1]), v[:, 0]
    psi = _fix_phase(psi / np.linalg.norm(psi))
    if vectors is not None:
        vectors = vectors.copy()
        vectors[:, 0] = psi
    scale = max(1.0, float(abs(H.matrix).sum(axis=1).max()))
    residual = float(np.linalg.norm(H @ psi - E0 * psi))
    if residual > max(1e-10, 100 * tol) * scale:
        raise SolverError(f"ground-state residual {residual:.2e} above tolerance", residual=residual)
    gap = E1 - E0
    if gap < gap_floor:
        raise AssumptionViolation(
            f"ground state is (nearly) degenerate: gap {gap:.3e} below floor {gap_floor:.1e}", gap=gap
        )
    return SpectralCache(H, E0, psi, gap, mode, residual, energies, vectors)


def expectation(cache: SpectralCache, O: ManyBodyOperator) -> complex:
    """``omega(O) = <psi, O psi>``."""
    _check_basis(cache, O)
    psi = cache.psi
    return complex(np.vdot(psi, O @ psi))


def offdiag(cache: SpectralCache, O: ManyBodyOperator) -> ManyBodyOperator:
    """``O_bar = P O P_perp + P_perp O P`` (dense)."""
    _check_basis(cache, O)
    psi = cache.psi
    Opsi = O @ psi
    psiO = (O.adjoint() @ psi).conj()
    w = np.vdot(psi, Opsi)
    M = np.outer(psi, psiO) + np.outer(Opsi, psi.conj()) - 2 * w * np.outer(psi, psi.conj())
    return ManyBodyOperator(O.basis, M)


def projector(cache: SpectralCache) -> ManyBodyOperator:
    return ManyBodyOperator(cache.basis, np.outer(cache.psi, cache.psi.conj()))


def filter_matrix(cache: SpectralCache) -> np.ndarray:
    """``sqrt(2 pi) W_hat(E_n - E_m)`` on the eigenbasis grid."""
    cache.require_full("the quasi-adiabatic map")
    E = cache.energies
    return _SQRT2PI * cache.filter(E[None, :] - E[:, None])


def quasi_adiabatic_map(cache: SpectralCache, O: ManyBodyOperator) -> ManyBodyOperator:
    """``I(O)`` via the eigendecomposition of the cached Hamiltonian."""
    cache.require_full("the quasi-adiabatic map")
    return cache.from_eigenbasis(filter_matrix(cache) * cache.in_eigenbasis(O))


def ground_row_elements(cache: SpectralCache, O: ManyBodyOperator) -> tuple[np.ndarray, np.ndarray]:
    """``(I(O)_{0m}, I(O)_{m0})`` in the eigenbasis without forming ``I(O)``."""
    cache.require_full("the quasi-adiabatic map")
    _check_basis(cache, O)
    U, psi = cache.vectors, cache.psi
    col = U.conj().T @ (O @ psi)
    row = (U.conj().T @ (O.adjoint() @ psi)).conj()
    D = cache.energies - cache.E0
    f_row = _SQRT2PI * cache.filter(D)  # W_hat(E_m - E_0) for I_{0m}
    return f_row * row, -f_row * col


def _spectral_cache_for(spec, A=None, mode="full", gap_floor=DEFAULT_GAP_FLOOR) -> SpectralCache:
    from .hamiltonian import with_vector_potential

    return ground_state(with_vector_potential(spec, A), mode=mode, gap_floor=gap_floor)


def parallel_transport_generator(spec, direction: int, cache: SpectralCache | None = None, forms=None):
    """``K_j = I(dH/dphi_j)`` at ``phi = 0``.

    ``forms`` optionally replaces ``(xi_1, xi_2)`` by another pair of twist
    one-forms.
    """
    from .hamiltonian import drive_generator, flux_derivative

    cache = cache or _spectral_cache_for(spec)
    if forms is None:
        dH = flux_derivative(spec, direction)
    else:
        dH = drive_generator(spec, forms[direction - 1])
    return quasi_adiabatic_map(cache, dH)


def _twist_ground(spec, forms, phi, gap_floor, mode="ground"):
    from .hamiltonian import with_vector_potential

    A = forms[0] * phi[0] + forms[1] * phi[1]
    try:
        return ground_state(with_vector_potential(spec, A), mode=mode, gap_floor=gap_floor)
    except AssumptionViolation as exc:
        raise AssumptionViolation(
            f"gap closes at twist {tuple(float(p) for p in phi)}: {exc}", gap=exc.gap, points=[tuple(phi)]
        ) from exc


def _default_forms(spec, forms):
    from .lattice import standard_flux_form

    if forms is None:
        return (standard_flux_form(1, spec.lattice), standard_flux_form(2, spec.lattice))
    return tuple(forms)


def reduced_resolvent_apply(cache: SpectralCache, vec: np.ndarray) -> np.ndarray:
    """``R v = P_perp (H - E0)^{-1} P_perp v``."""
    psi = cache.psi
    v = vec - psi * np.vdot(psi, vec)
    if cache.full:
        V, E = cache.vectors, cache.energies
        c = V.conj().T @ v
        c[0] = 0.0
        c[1:] /= E[1:] - cache.E0
        return V @ c
    H = cache.operator.matrix
    dim = cache.basis.dim

    def mv(x):
        x = x - psi * np.vdot(psi, x)
        y = H @ x - cache.E0 * x
        return y - psi * np.vdot(psi, y)

    op = spla.LinearOperator((dim, dim), matvec=mv, dtype=complex)
    # positive definite on the complement of psi, so CG applies (scipy's MINRES is real-only in practice)
    x, info = spla.cg(op, v, rtol=1e-13, atol=0.0, maxiter=20 * dim)
    if info != 0:
        raise SolverError("reduced-resolvent solve did not converge", residual=float(np.linalg.norm(mv(x) - v)))
    return x - psi * np.vdot(psi, x)


def ground_state_derivative(spec, direction: int, cache=None, forms=None) -> np.ndarray:
    """``P_perp d psi / d phi_j = -R (dH/dphi_j) psi`` (first-order perturbation theory)."""
    from .hamiltonian import drive_generator

    forms = _default_forms(spec, forms)
    cache = cache or _spectral_cache_for(spec, mode="auto")
    dH = drive_generator(spec, forms[direction - 1])
    return -reduced_resolvent_apply(cache, dH @ cache.psi)


def _fd_projector_columns(spec, direction, h, forms, gap_floor, cache):
    """``(dP) psi`` and ``psi^dag (dP)`` by central differences of ``P(phi)``."""
    psi = cache.psi
    step = np.zeros(2)
    step[direction - 1] = h
    plus = _twist_ground(spec, forms, step, gap_floor).psi
    minus = _twist_ground(spec, forms, -step, gap_floor).psi
    col = (plus * np.vdot(plus, psi) - minus * np.vdot(minus, psi)) / (2 * h)
    return col, plus, minus


def projector_derivative(
    spec,
    direction: int,
    method: str = "perturbation",
    h: float = 1e-4,
    forms=None,
    cache: SpectralCache | None = None,
    gap_floor: float = DEFAULT_GAP_FLOOR,
) -> ManyBodyOperator:
    """``dP/dphi_j`` at ``phi = 0`` as a dense operator.

    ``perturbation`` uses ``dP = |d psi><psi| + |psi><d psi|`` with
    ``d psi = -R dH psi``; ``finite-diff`` differences ``P(+h) - P(-h)``.
    """
    forms = _default_forms(spec, forms)
    cache = cache or _spectral_cache_for(spec, mode="auto", gap_floor=gap_floor)
    psi = cache.psi
    if method == "perturbation":
        d = ground_state_derivative(spec, direction, cache, forms)
        M = np.outer(d, psi.conj()) + np.outer(psi, d.conj())
    elif method == "finite-diff":
        _, plus, minus = _fd_projector_columns(spec, direction, h, forms, gap_floor, cache)
        M = (np.outer(plus, plus.conj()) - np.outer(minus, minus.conj())) / (2 * h)
    else:
        raise ValueError(f"unknown projector-derivative method {method!r}")
    return ManyBodyOperator(cache.basis, M)


def projector_derivative_columns(spec, direction, method="finite-diff", h=1e-4, forms=None, cache=None,
                                 gap_floor=DEFAULT_GAP_FLOOR) -> np.ndarray:
    """``(dP/dphi_j) psi`` without forming the dense derivative (``dP`` is Hermitian,
    so ``psi^dag dP`` is the conjugate)."""
    forms = _default_forms(spec, forms)
    cache = cache or _spectral_cache_for(spec, mode="auto", gap_floor=gap_floor)
    if method == "perturbation":
        return ground_state_derivative(spec, direction, cache, forms)
    if method == "finite-diff":
        return _fd_projector_columns(spec, direction, h, forms, gap_floor, cache)[0]
    if method == "richardson":
        a = _fd_projector_columns(spec, direction, h, forms, gap_floor, cache)[0]
        b = _fd_projector_columns(spec, direction, h / 2, forms, gap_floor, cache)[0]
        return (4 * b - a) / 3
    raise ValueError(f"unknown projector-derivative method {method!r}")


def operator_norm(O: ManyBodyOperator) -> float:
    """Spectral norm (dense)."""
    return float(np.linalg.norm(O.toarray(), 2))
