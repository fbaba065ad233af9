"""Static response coefficients: Kubo, adiabatic curvature, Chern numbers.

Kubo response is evaluated from its time-integral definition

    chi_{J,V}(nu, eps) = i int_0^inf dt omega([V(-t), J]) exp(i nu t - eps t)

in closed form over the eigenbasis (``V(-t) = e^{-iHt} V e^{iHt}``):

    chi = -sum_m [ V_0m J_m0 / (D_m + nu + i eps) + J_0m V_m0 / (D_m - nu - i eps) ],

``D_m = E_m - E_0``.  With the quasi-adiabatic map of :mod:`spectral` this
equals ``-i omega([I(V), J])`` at ``nu = eps = 0``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import AssumptionViolation, ConfigurationError, FrequencyOutOfGapError, SolverError
from .fock import ManyBodyOperator, density_operator
from .hamiltonian import (
    HamiltonianSpec,
    current_path,
    drive_generator,
    with_vector_potential,
)
from .lattice import (
    DualPath,
    SiteFunction,
    build_strip_potential,
    exterior_derivative,
    horizontal_segment,
    standard_flux_form,
)
from .spectral import (
    DEFAULT_GAP_FLOOR,
    SpectralCache,
    expectation,
    ground_row_elements,
    ground_state,
    projector_derivative_columns,
    quasi_adiabatic_map,
    reduced_resolvent_apply,
)


@dataclass
class ResponseReport:
    kind: str
    value: Any
    diagnostics: dict = field(default_factory=dict)
    provenance: str = ""

    def as_dict(self) -> dict:
        return {"kind": self.kind, "value": _jsonable(self.value), "diagnostics": _jsonable(self.diagnostics),
                "provenance": self.provenance}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    return x


# ---------------------------------------------------------------------------
# Kubo


def _matrix_elements(cache: SpectralCache, J: ManyBodyOperator, V: ManyBodyOperator):
    """``(D_m, V_0m J_m0, J_0m V_m0)`` over excited levels ``m``."""
    cache.require_full("closed-form Kubo response")
    U = cache.vectors
    psi = U[:, 0]
    Jc = U.conj().T @ (J @ psi)  # J_m0
    Vc = U.conj().T @ (V @ psi)  # V_m0
    Jr = (U.conj().T @ (J.adjoint() @ psi)).conj()  # J_0m
    Vr = (U.conj().T @ (V.adjoint() @ psi)).conj()  # V_0m
    D = cache.energies[1:] - cache.E0
    return D, (Vr * Jc)[1:], (Jr * Vc)[1:]


def _check_nu(cache: SpectralCache, nu: float, strict: bool = True):
    lim = cache.gap / 2
    if (abs(nu) >= lim) if strict else (abs(nu) > lim):
        raise FrequencyOutOfGapError(f"|nu| = {abs(nu):.4g} must lie inside half the gap ({lim:.4g})")


def kubo_time_integral(cache: SpectralCache, J: ManyBodyOperator, V: ManyBodyOperator,
                       nu: float = 0.0, eps: float = 0.0) -> complex:
    """``chi(eps)`` from the closed-form time integral (``eps >= 0``)."""
    if eps < 0:
        raise ConfigurationError("regulator eps must be non-negative")
    _check_nu(cache, nu, strict=eps == 0)
    if cache.full:
        D, a, b = _matrix_elements(cache, J, V)
        return complex(-np.sum(a / (D + nu + 1j * eps) + b / (D - nu - 1j * eps)))
    if eps != 0 or nu != 0:
        raise ConfigurationError("ground-only caches support the static resolvent form only")
    # -<V psi| R |J psi> - <J psi| R |V psi>, R the reduced resolvent
    psi = cache.psi
    RJ = reduced_resolvent_apply(cache, J @ psi)
    RV = reduced_resolvent_apply(cache, V @ psi)
    return complex(-np.vdot(V.adjoint() @ psi, RJ) - np.vdot(J.adjoint() @ psi, RV))


def kubo_resolvent(cache: SpectralCache, J: ManyBodyOperator, V: ManyBodyOperator, nu: float = 0.0) -> complex:
    """Exact ``eps -> 0`` Kubo response at frequency ``|nu| < g/2``."""
    _check_nu(cache, nu)
    return kubo_time_integral(cache, J, V, nu, 0.0)


def commutator_response(cache: SpectralCache, J: ManyBodyOperator, V: ManyBodyOperator) -> complex:
    """``i omega([I(V), J])``."""
    IV = quasi_adiabatic_map(cache, V)
    return 1j * expectation(cache, IV.commutator(J))


def fit_linear_rate(eps: np.ndarray, residuals: np.ndarray) -> dict:
    """Per-point constants ``|chi(eps) - chi(0)| / eps`` and their spread."""
    eps = np.asarray(eps, dtype=float)
    C = np.abs(np.asarray(residuals)) / eps
    return {"eps": eps.tolist(), "C": C.tolist(), "C_ratio": float(C.max() / C.min()) if C.min() > 0 else np.inf}


# ---------------------------------------------------------------------------
# adiabatic curvature


def _forms(spec, forms):
    if forms is None:
        return (standard_flux_form(1, spec.lattice), standard_flux_form(2, spec.lattice))
    return tuple(forms)


def adiabatic_curvature_complex(spec: HamiltonianSpec, method: str = "generators", forms=None,
                                derivative: str = "richardson", h: float = 1e-4,
                                gap_floor: float = DEFAULT_GAP_FLOOR, cache: SpectralCache | None = None) -> complex:
    forms = _forms(spec, forms)
    if method == "generators":
        cache = cache or ground_state(with_vector_potential(spec), "full", gap_floor)
        (r1, c1), (r2, c2) = (ground_row_elements(cache, drive_generator(spec, f)) for f in forms)
        # omega([K1, K2]) = sum_m K1_0m K2_m0 - K2_0m K1_m0
        return 1j * (np.dot(r1, c2) - np.dot(r2, c1))
    if method == "projectors":
        cache = cache or ground_state(with_vector_potential(spec), "auto", gap_floor)
        c1, c2 = (projector_derivative_columns(spec, j, derivative, h, forms, cache, gap_floor) for j in (1, 2))
        # i tr(P [d1P, d2P]) = i (<psi|d1P d2P|psi> - <psi|d2P d1P|psi>)
        return 1j * (np.vdot(c1, c2) - np.vdot(c2, c1))
    raise ValueError(f"unknown curvature method {method!r}")


def adiabatic_curvature(spec: HamiltonianSpec, method: str = "generators", forms=None,
                        derivative: str = "richardson", h: float = 1e-4,
                        gap_floor: float = DEFAULT_GAP_FLOOR, cache: SpectralCache | None = None,
                        imag_tol: float = 1e-9) -> float:
    """``kappa = i tr(P [d1 P, d2 P])`` at zero twist.

    ``generators`` evaluates ``i omega([K1, K2])``; ``projectors`` uses
    finite-difference (or, with ``derivative="perturbation"``, first-order)
    projector derivatives.
    """
    if spec.N in (0, spec.lattice.n_sites):
        return 0.0
    k = adiabatic_curvature_complex(spec, method, forms, derivative, h, gap_floor, cache)
    if abs(k.imag) > imag_tol * max(1.0, abs(k.real)):
        raise SolverError(f"curvature has imaginary part {k.imag:.2e}", residual=abs(k.imag))
    return float(k.real)


def _curvature(spec, forms=None, engine="auto", method="generators"):
    if engine == "auto":
        engine = "free" if not spec.interactions else "many-body"
    if engine == "free":
        from .freefermion import free_curvature

        return free_curvature(spec, forms=forms, method="projector")
    return adiabatic_curvature(spec, method=method, forms=forms)


def curvature_gauge_check(spec: HamiltonianSpec, theta1: SiteFunction, theta2: SiteFunction,
                          engine: str = "auto", bound: float | None = None):
    """Curvature for the twist pair ``(xi_j)`` and for ``(xi_j + d theta_j)``."""
    xi = _forms(spec, None)
    d1, d2 = exterior_derivative(theta1), exterior_derivative(theta2)
    if bound is not None and max(d1.norm(), d2.norm()) > bound:
        raise ConfigurationError(f"|d theta| exceeds the configured bound {bound}")
    k = _curvature(spec, xi, engine)
    kp = _curvature(spec, (xi[0] + d1, xi[1] + d2), engine)
    return k, kp, abs(k - kp)


# ---------------------------------------------------------------------------
# Chern number over the flux torus


def chern_report(spec: HamiltonianSpec, grid: int = 6, gap_floor: float = DEFAULT_GAP_FLOOR,
                 forms=None) -> ResponseReport:
    """Plaquette link-variable Chern number on a ``grid x grid`` mesh of ``[0, 2 pi]^2``.

    The endpoints ``phi_j = 2 pi`` are diagonalised explicitly: there the
    Hamiltonian is a gauge transform of the one at ``0``, so the boundary
    links cancel without constructing that transform.
    """
    from .spectral import _twist_ground

    forms = _forms(spec, forms)
    phis = 2 * np.pi * np.arange(grid + 1) / grid
    states = np.empty((grid + 1, grid + 1, spec.basis.dim), dtype=complex)
    bad, min_gap = [], np.inf
    for a, p1 in enumerate(phis):
        for b, p2 in enumerate(phis):
            try:
                c = _twist_ground(spec, forms, (p1, p2), gap_floor)
            except AssumptionViolation as exc:
                bad.append((float(p1), float(p2), exc.gap))
                continue
            min_gap = min(min_gap, c.gap)
            states[a, b] = c.psi
    if bad:
        raise AssumptionViolation(f"gap closes at {len(bad)} twist grid points", points=bad,
                                  gap=min(g for *_, g in bad))
    from .freefermion import _open_grid_chern

    raw = _open_grid_chern(states)
    n = int(round(raw))
    return ResponseReport("chern", n, {"raw": raw, "rounding_distance": abs(raw - n), "grid": grid,
                                       "min_gap": min_gap}, spec.fingerprint())


def chern_number(spec: HamiltonianSpec, grid: int = 6, gap_floor: float = DEFAULT_GAP_FLOOR) -> int:
    return int(chern_report(spec, grid, gap_floor).value)


# ---------------------------------------------------------------------------
# Kubo response versus curvature


def hall_equivalence(spec: HamiltonianSpec, setup: str, E: float = 0.1, ell: int = 1, d: int | None = None,
                     r: int = 0, variant: str | None = None, path: DualPath | None = None,
                     potential: SiteFunction | None = None, engine: str = "auto",
                     gap_floor: float = DEFAULT_GAP_FLOOR) -> ResponseReport:
    """Compare ``kappa`` with the Kubo Hall ratio of a current/potential pair.

    ``lemma42``: ``J = J_{gamma_d}`` inside a uniform field ``E`` on
    ``|x1| <= ell`` (``d <= ell``), normaliser ``2 E d``.
    ``thm43``: path ``gamma_{ell + r}`` traversing the field region with
    field-free flanks of width ``2r``, normaliser ``Delta v = 2 ell E``.
    ``lemma44``: arbitrary boundary-compatible ``path`` and ``potential``;
    normaliser ``v(y_e) - v(y_b)`` (read off the sites next to the endpoints).
    """
    lat = spec.lattice
    t0 = time.perf_counter()
    if setup == "lemma42":
        d = ell if d is None else d
        if d > ell:
            raise ConfigurationError(f"lemma42 needs d <= ell, got d={d}, ell={ell}")
        v, _ = build_strip_potential(lat, E, ell, 0, variant or "bulk")
        gamma = horizontal_segment(lat, d)
        norm = 2 * E * d
    elif setup == "thm43":
        d = ell + r if d is None else d
        v, norm = build_strip_potential(lat, E, ell, r, variant or "flat-flanks")
        gamma = horizontal_segment(lat, d)
    elif setup == "lemma44":
        if path is None or potential is None:
            raise ConfigurationError("lemma44 needs an explicit path and potential")
        gamma, v = path, potential
        norm = endpoint_value(v, gamma.end) - endpoint_value(v, gamma.start)
    else:
        raise ConfigurationError(f"unknown equivalence setup {setup!r}")
    if 2 * (d or 0) >= lat.L and setup != "lemma44":
        raise ConfigurationError(f"path gamma_{d} of length {2 * d} does not fit an open segment on L={lat.L}")
    gamma.check_boundary_compatible()
    if engine == "auto":
        engine = "free" if not spec.interactions else "many-body"
    if engine == "free":
        from .freefermion import current_matrix, density_matrix, free_curvature, free_kubo

        chi = free_kubo(spec, current_matrix(spec, gamma), density_matrix(spec, v))
        kappa = free_curvature(spec, method="projector")
    else:
        cache = ground_state(with_vector_potential(spec), "auto", gap_floor)
        J = current_path(spec, gamma).operator
        V = density_operator(spec.basis, v)
        chi = kubo_time_integral(cache, J, V)
        kappa = adiabatic_curvature(spec, "generators" if cache.full else "projectors", cache=cache)
    diag = {"setup": setup, "engine": engine, "L": lat.L, "N": spec.N, "E": E, "ell": ell, "d": d, "r": r,
            "path_length": len(gamma), "chi_imag": float(np.imag(chi)), "seconds": time.perf_counter() - t0}
    if abs(norm) < 1e-14:
        return ResponseReport("equivalence", None, {**diag, "kappa": kappa, "chi": float(np.real(chi)),
                                                   "normalizer": norm, "outcome": "degenerate-drive"},
                              spec.fingerprint())
    ratio = float(np.real(chi)) / norm
    disc = abs(kappa - ratio)
    diag.update(kappa=kappa, chi=float(np.real(chi)), normalizer=norm, ratio=ratio, discrepancy=disc,
                relative_discrepancy=disc / abs(kappa) if kappa else np.inf, outcome="ok")
    return ResponseReport("equivalence", disc, diag, spec.fingerprint())


def endpoint_value(v: SiteFunction, y) -> float:
    """Mean of ``v`` over the four sites around the dual vertex ``y``."""
    lat = v.lattice
    pts = [(y[0] + a, y[1] + b) for a in (-0.5, 0.5) for b in (-0.5, 0.5)]
    return float(np.mean([v(lat.canonical((round(p[0]), round(p[1])))) for p in pts]))
