import numpy as np
import pytest
from scipy.integrate import quad
from scipy.sparse.linalg import expm_multiply

from conftest import impurity_harper
from hall_lab.dynamics import (
    RampProtocol,
    adiabatic_response,
    default_time_step,
    emf_experiment,
    expm_krylov,
    propagate,
    ramp_amplitude,
    richardson,
    switch_rate,
)
from hall_lab.errors import ConfigurationError
from hall_lab.fock import density_operator
from hall_lab.freefermion import current_matrix, density_matrix, free_kubo
from hall_lab.hamiltonian import current_path, with_vector_potential
from hall_lab.lattice import (
    OneForm,
    SiteFunction,
    boundary_path,
    exterior_derivative,
    horizontal_segment,
    standard_flux_form,
)
from hall_lab.response import kubo_resolvent
from hall_lab.spectral import ground_state


def gradient_drive(lat, seed=3, amp=1.0):
    theta = SiteFunction(lat, amp * np.random.default_rng(seed).uniform(-1, 1, lat.n_sites))
    return theta, exterior_derivative(theta)


def test_switch_rate_profile():
    s = np.linspace(-1, 0, 201)
    b = switch_rate(s)
    assert b[0] == 0 and np.isclose(b[-1], 1.0)
    assert np.all(np.diff(b) >= 0)
    assert switch_rate(0.5) == 1.0 and switch_rate(-1.5) == 0.0
    # flat to all orders at s = -1: b(-1 + h) / h^k -> 0
    for h in (0.02, 0.01):
        assert switch_rate(-1 + h) / h**6 < 1e-9


def test_ramp_amplitude_endpoints():
    assert abs(ramp_amplitude(0.0)) < 1e-12
    h = 1e-4
    slope = (ramp_amplitude(0.0) - ramp_amplitude(-h)) / h
    assert np.isclose(slope, 1.0, atol=1e-6)
    assert np.isclose(ramp_amplitude(-1.0), -0.5, atol=1e-10)


def test_ramp_amplitude_is_integral_of_rate():
    for s in (-0.8, -0.5, -0.2):
        ref = -quad(lambda u: float(switch_rate(u)), s, 0.0, epsabs=1e-13)[0]
        assert np.isclose(ramp_amplitude(s), ref, atol=1e-10)


def test_ramp_protocol_validation():
    A = standard_flux_form(1, impurity_harper(3, 2).lattice)
    with pytest.raises(ConfigurationError):
        RampProtocol(A, 0.0)
    with pytest.raises(ConfigurationError):
        RampProtocol(A, 0.1, dt=-1.0)
    assert RampProtocol(A, 0.25).total_time == 4.0


def test_krylov_matches_scipy(l3_preset, rng):
    H = with_vector_potential(l3_preset).matrix
    v = rng.normal(size=H.shape[0]) + 1j * rng.normal(size=H.shape[0])
    for tau in (0.1, 2.0, 15.0):
        ours = expm_krylov(lambda x: H @ x, v, tau, m_max=12)
        ref = expm_multiply(-1j * tau * H, v)
        assert np.allclose(ours, ref, atol=1e-10)
    assert np.all(expm_krylov(lambda x: H @ x, np.zeros(H.shape[0], complex), 1.0) == 0)


def test_zero_drive_keeps_ground_state(l3_preset):
    A = OneForm(l3_preset.lattice, np.zeros((9, 2)))
    run = propagate(l3_preset, RampProtocol(A, 0.2, dt=0.1))
    assert abs(abs(np.vdot(run.initial_state, run.final_state)) - 1) < 1e-12
    assert run.norm_drift < 1e-12


def test_time_step_convergence(l3_preset):
    _, A = gradient_drive(l3_preset.lattice)
    eps = 0.1
    a = propagate(l3_preset, RampProtocol(A, eps, dt=0.1)).final_state
    b = propagate(l3_preset, RampProtocol(A, eps, dt=0.05)).final_state
    assert 1 - abs(np.vdot(a, b)) ** 2 < 1e-6


def test_slower_ramps_stay_closer_to_the_ground_state(l3_preset):
    _, A = gradient_drive(l3_preset.lattice)
    omega = ground_state(with_vector_potential(l3_preset), "full").psi
    infid = []
    for eps in (0.2, 0.1, 0.05):
        psi = propagate(l3_preset, RampProtocol(A, eps, dt=0.1)).final_state
        infid.append(1 - abs(np.vdot(omega, psi)) ** 2)
    assert infid[0] > infid[1] > infid[2]


def test_checkpoints_and_traces(l3_preset):
    _, A = gradient_drive(l3_preset.lattice)
    n = density_operator(l3_preset.basis, np.ones(9))
    run = propagate(l3_preset, RampProtocol(A, 0.2, dt=0.1, checkpoints=5), {"N": n})
    assert np.allclose(run.observable_traces["N"], 2.0)
    assert run.times[0] == -5.0 and np.isclose(run.times[-1], 0.0)


def test_default_time_step_is_conservative(l3_preset):
    _, A = gradient_drive(l3_preset.lattice)
    ramp = RampProtocol(A, 0.1)
    dt = default_time_step(l3_preset, ramp)
    assert 0 < dt <= 0.05


@pytest.mark.parametrize("ladder", [[0.1, 0.05], [0.1, -0.05, 0.02], [0.1, 0.02, 0.05]])
def test_ladder_validation(l3_preset, ladder):
    _, A = gradient_drive(l3_preset.lattice)
    with pytest.raises(ConfigurationError):
        adiabatic_response(l3_preset, A, density_operator(l3_preset.basis, np.ones(9)), ladder)


def test_richardson_on_exact_quadratic():
    eps = np.array([0.04, 0.02, 0.01])
    chi0, err, coef = richardson(eps, 2.0 + 3.0 * eps + 5.0 * eps**2)
    assert np.isclose(chi0, 2.0) and np.allclose(coef, [2, 3, 5])
    assert err > 0


def test_richardson_bar_covers_cubic_remainder():
    eps = np.array([0.08, 0.04, 0.02, 0.01])
    vals = 1.0 + 0.5 * eps - 2.0 * eps**2 + 40.0 * eps**3
    chi0, err, _ = richardson(eps, vals)
    assert abs(chi0 - 1.0) <= err


def test_adiabatic_response_matches_kubo_free_and_many_body():
    spec = impurity_harper(3, 2, U=0.0)
    lat = spec.lattice
    theta, A = gradient_drive(lat, amp=0.5)
    g = horizontal_segment(lat, 1)
    J = current_path(spec, g).operator
    ladder = [0.007425, 0.005197, 0.003679]  # about gap / {56, 80, 113}, inside the asymptotic regime
    mb = adiabatic_response(spec, A, J, ladder, "many-body", dt=0.1)
    fr = adiabatic_response(spec, A, current_matrix(spec, g), ladder, "free", dt=0.1)
    assert np.allclose(mb.diagnostics["quotients"], fr.diagnostics["quotients"], atol=1e-9)
    chi_k = free_kubo(spec, current_matrix(spec, g), density_matrix(spec, theta)).real
    cache = ground_state(with_vector_potential(spec), "full")
    assert np.isclose(chi_k, kubo_resolvent(cache, J, density_operator(spec.basis, theta)).real, atol=1e-12)
    assert abs(mb.value - chi_k) <= mb.diagnostics["error"]
    assert abs(mb.value - chi_k) < 0.02 * abs(chi_k)


def test_emf_drive_must_vanish_near_endpoints(l3_preset):
    lat = impurity_harper(6, 2, flux_q=3).lattice
    spec = impurity_harper(6, 2, flux_q=3)
    g = horizontal_segment(lat, 1)
    with pytest.raises(ConfigurationError):
        emf_experiment(spec, g, standard_flux_form(2, lat) * 0.1, 1.0, [0.1, 0.05, 0.02])


def test_emf_zero_drive_is_degenerate():
    spec = impurity_harper(4, 3, U=0.0, flux_q=4)
    lat = spec.lattice
    X = [x for x in lat.sites if 0 <= x[0] < 2]
    loop = boundary_path(lat, X)[0]
    zero = OneForm(lat, np.zeros((lat.n_sites, 2)))
    rep = emf_experiment(spec, loop, zero, 0.0, [0.1, 0.05, 0.02])
    assert rep.value is None and rep.diagnostics["outcome"] == "degenerate-drive"
