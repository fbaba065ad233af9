import numpy as np
import pytest
from scipy.integrate import simpson
from scipy.linalg import expm

from conftest import impurity_harper
from hall_lab.errors import ConfigurationError, FrequencyOutOfGapError
from hall_lab.fock import density_operator
from hall_lab.freefermion import band_chern
from hall_lab.hamiltonian import current_path, harper_spec, with_vector_potential
from hall_lab.lattice import SiteFunction, build_strip_potential, horizontal_segment
from hall_lab.response import (
    adiabatic_curvature,
    chern_report,
    commutator_response,
    curvature_gauge_check,
    fit_linear_rate,
    hall_equivalence,
    kubo_resolvent,
    kubo_time_integral,
)
from hall_lab.spectral import expectation, ground_state, quasi_adiabatic_map


@pytest.fixture(scope="module")
def setup(l3_preset):
    cache = ground_state(with_vector_potential(l3_preset), "full")
    lat = l3_preset.lattice
    J = current_path(l3_preset, horizontal_segment(lat, 1)).operator
    v, _ = build_strip_potential(lat, 0.3, 1, 0, "bulk")
    V = density_operator(l3_preset.basis, v)
    return cache, J, V


def quadrature_kubo(cache, J, V, nu, eps, T=70.0, n=14001):
    """i int_0^T omega([V(-t), J]) e^{i nu t - eps t} dt with dense matrix exponentials."""
    H = cache.operator.toarray()
    Vd, Jd, psi = V.toarray(), J.toarray(), cache.psi
    ts = np.linspace(0.0, T, n)
    step = expm(-1j * H * (ts[1] - ts[0]))
    U = np.eye(len(psi), dtype=complex)
    vals = np.empty(n, dtype=complex)
    for k, t in enumerate(ts):
        Vt = U @ Vd @ U.conj().T  # e^{-iHt} V e^{iHt}
        vals[k] = np.vdot(psi, (Vt @ Jd - Jd @ Vt) @ psi) * np.exp(1j * nu * t - eps * t)
        U = step @ U
    return 1j * simpson(vals, x=ts)


@pytest.mark.parametrize("nu,eps", [(0.0, 0.3), (0.05, 0.25), (-0.1, 0.4)])
def test_closed_form_matches_time_quadrature(setup, nu, eps):
    cache, J, V = setup
    ref = quadrature_kubo(cache, J, V, nu, eps)
    ours = kubo_time_integral(cache, J, V, nu, eps)
    assert abs(ours - ref) < 1e-7 * max(1.0, abs(ref))


def test_static_response_against_commutator(setup):
    cache, J, V = setup
    chi = kubo_resolvent(cache, J, V)
    # the time-integral convention carries the opposite sign to i omega([I(V), J])
    assert np.isclose(chi, -commutator_response(cache, J, V), atol=1e-13)
    assert abs(chi.imag) < 1e-12


def test_exchange_symmetries(setup):
    cache, J, V = setup
    a = expectation(cache, quasi_adiabatic_map(cache, V).commutator(J))
    b = expectation(cache, quasi_adiabatic_map(cache, J).commutator(V))
    assert np.isclose(a, b, atol=1e-13)
    nu = 0.3 * cache.gap
    assert np.isclose(kubo_resolvent(cache, V, J, -nu), kubo_resolvent(cache, J, V, nu), atol=1e-13)


def test_ground_only_cache_gives_same_static_response(l3_preset, setup):
    cache, J, V = setup
    lan = ground_state(with_vector_potential(l3_preset), "ground")
    assert np.isclose(kubo_time_integral(lan, J, V), kubo_resolvent(cache, J, V), atol=1e-9)
    with pytest.raises(ConfigurationError):
        kubo_time_integral(lan, J, V, eps=0.1)


def test_frequency_must_be_in_gap(setup):
    cache, J, V = setup
    with pytest.raises(FrequencyOutOfGapError):
        kubo_resolvent(cache, J, V, nu=0.6 * cache.gap)
    with pytest.raises(ConfigurationError):
        kubo_time_integral(cache, J, V, eps=-1.0)
    # with eps > 0 the edge of the window is allowed
    kubo_time_integral(cache, J, V, nu=0.5 * cache.gap, eps=0.1)


def test_regulated_response_converges_linearly(setup):
    cache, J, V = setup
    chi0 = kubo_resolvent(cache, J, V)
    eps = np.array([1e-3, 5e-4, 2.5e-4])
    res = [kubo_time_integral(cache, J, V, 0.0, e) - chi0 for e in eps]
    fit = fit_linear_rate(eps, res)
    assert fit["C_ratio"] < 1.05


def test_curvature_methods_agree(l3_preset):
    gen = adiabatic_curvature(l3_preset, "generators")
    assert np.isclose(gen, -1.16568, atol=1e-5)
    assert np.isclose(adiabatic_curvature(l3_preset, "projectors", derivative="richardson", h=1e-3), gen, atol=1e-7)
    assert np.isclose(adiabatic_curvature(l3_preset, "projectors", derivative="perturbation"), gen, atol=1e-10)


def test_empty_and_full_sectors_have_no_curvature():
    assert adiabatic_curvature(harper_spec(3, N=0)) == 0.0
    assert adiabatic_curvature(harper_spec(3, N=9)) == 0.0


def test_curvature_gauge_check_exact_for_constant_shift(l3_preset):
    lat = l3_preset.lattice
    c = SiteFunction(lat, np.full(lat.n_sites, 0.7))
    k, kp, disc = curvature_gauge_check(l3_preset, c, c)
    assert disc < 1e-12 and np.isclose(k, kp)
    with pytest.raises(ConfigurationError):
        big = SiteFunction.from_callable(lat, lambda x: 5.0 * x[0])
        curvature_gauge_check(l3_preset, big, big, bound=1.0)


@pytest.mark.parametrize("spec_args,expected", [((3, 2, 0.5), -1), ((4, 4, 0.0, 4), -1)])
def test_many_body_chern(spec_args, expected):
    spec = impurity_harper(*spec_args[:3], flux_q=spec_args[3] if len(spec_args) > 3 else None)
    rep = chern_report(spec, grid=6)
    assert rep.value == expected
    assert rep.diagnostics["rounding_distance"] < 1e-6


def test_filled_lowest_band_matches_bloch_chern():
    spec = impurity_harper(4, 4, U=0.0, flux_q=4)
    assert chern_report(spec, grid=6).value == band_chern(1, 4, 0)


def test_degenerate_drive_reported(l3_preset):
    rep = hall_equivalence(impurity_harper(4, 3, flux_q=4), "lemma42", E=0.0, ell=1)
    assert rep.value is None and rep.diagnostics["outcome"] == "degenerate-drive"


def test_equivalence_rejects_bad_geometry():
    spec = impurity_harper(4, 3, flux_q=4)
    with pytest.raises(ConfigurationError):
        hall_equivalence(spec, "lemma42", ell=1, d=2)
    with pytest.raises(ConfigurationError):
        hall_equivalence(spec, "nope")
    with pytest.raises(ConfigurationError):
        hall_equivalence(spec, "lemma44")


def test_equivalence_free_and_many_body_agree():
    spec = impurity_harper(4, 3, U=0.0, flux_q=4)
    a = hall_equivalence(spec, "lemma42", E=0.2, ell=1, engine="free")
    b = hall_equivalence(spec, "lemma42", E=0.2, ell=1, engine="many-body")
    assert np.isclose(a.diagnostics["chi"], b.diagnostics["chi"], atol=1e-10)
    assert np.isclose(a.diagnostics["kappa"], b.diagnostics["kappa"], atol=1e-9)
    assert a.as_dict()["kind"] == "equivalence"
