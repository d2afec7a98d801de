import numpy as np
import pytest
import scipy.integrate
import scipy.linalg

from fockscatter.meanfield import (
    IntegratorConfig,
    MeanfieldError,
    classical_hamiltonian,
    eom_rhs,
    hamiltonian_gradient,
    integrate,
    integrate_batch,
    integrate_with_tangent,
    tangent_generator,
)
from fockscatter.model import BoseHubbardModel, build_model

CHAOTIC_TRIMER = build_model({
    "L": 3, "geometry": "ring", "J": 1.0, "U": 1.0, "eps": [0.3, -0.1, 0.2],
})
TRIMER_PSI0 = np.sqrt(np.array([2.5, 1.5, 2.0])) * np.exp(1j * np.array([0.0, 1.1, -0.7]))


def test_hamiltonian_zero_field_constant_terms():
    m = build_model({"L": 3, "J": 1.0, "eps": [0.4, -0.2, 0.1]})
    assert classical_hamiltonian(m, np.zeros(3)) == pytest.approx(
        -0.5 * np.trace(m.hopping).real, rel=1e-14
    )


def test_hamiltonian_single_site_closed_form():
    eps, U = 0.7, 0.4
    m = build_model({"L": 1, "eps": eps, "U": U})
    psi = np.array([1.3 + 0.4j])
    n = abs(psi[0]) ** 2 - 0.5
    assert classical_hamiltonian(m, psi) == pytest.approx(
        eps * n + 0.5 * U * n**2, rel=1e-13
    )


def test_hamiltonian_real_for_hermitian_models():
    rng = np.random.default_rng(0)
    h = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    h = (h + h.conj().T) / 2
    inter = {(0, 1, 0, 1): 0.3, (1, 0, 0, 1): 0.3,
             (0, 1, 1, 0): 0.3, (1, 0, 1, 0): 0.3,
             (2, 2, 2, 2): -0.5}
    m = BoseHubbardModel(h, inter)
    from fockscatter.meanfield import _classical_hamiltonian_complex
    psi = rng.normal(size=3) + 1j * rng.normal(size=3)
    assert abs(_classical_hamiltonian_complex(m, psi).imag) < 1e-12


def _fd_gradient(model, psi, d=1e-6):
    """(dH/dx + i dH/dy)/2 by central differences."""
    G = np.zeros(model.L, dtype=complex)
    for l in range(model.L):
        for real_part in (True, False):
            e = np.zeros(model.L, dtype=complex)
            e[l] = d if real_part else 1j * d
            deriv = (classical_hamiltonian(model, psi + e)
                     - classical_hamiltonian(model, psi - e)) / (2 * d)
            G[l] += deriv / 2 if real_part else 1j * deriv / 2
    return G


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    h = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    h = (h + h.conj().T) / 2
    inter = {(0, 1, 0, 1): 0.3, (1, 0, 0, 1): 0.3,
             (0, 1, 1, 0): 0.3, (1, 0, 1, 0): 0.3,
             (0, 0, 0, 0): 0.8}
    m = BoseHubbardModel(h, inter)
    psi = rng.normal(size=3) + 1j * rng.normal(size=3)
    assert np.max(np.abs(hamiltonian_gradient(m, psi) - _fd_gradient(m, psi))) < 1e-7


def test_eom_rhs_linear_and_onsite():
    m = build_model({"L": 2, "J": 1.0, "U": 0.5})
    psi = np.array([0.8 + 0.1j, -0.3 + 0.6j])
    expected = -1j * (m.hopping @ psi + 0.5 * (np.abs(psi) ** 2 - 0.5) * psi)
    assert np.allclose(eom_rhs(m, psi), expected, atol=1e-14)
    m0 = build_model({"L": 2, "J": 1.0})
    assert np.allclose(eom_rhs(m0, psi), -1j * (m0.hopping @ psi), atol=1e-14)


def test_single_site_closed_form_solution():
    eps, U, t = 0.3, 0.9, 3.7
    m = build_model({"L": 1, "eps": eps, "U": U})
    psi0 = np.array([1.2 - 0.5j])
    path = integrate(m, psi0, (0.0, t))
    freq = eps + U * (abs(psi0[0]) ** 2 - 0.5)
    expected = psi0 * np.exp(-1j * freq * t)
    assert np.max(np.abs(path.psi_f - expected)) < 1e-9


def test_linear_flow_matches_matrix_exponential():
    m = build_model({"L": 3, "geometry": "ring", "J": 1.0, "eps": [0.2, -0.1, 0.4]})
    psi0 = np.array([0.7 + 0.2j, -0.4 + 0.9j, 0.1 - 0.3j])
    t = 2.8
    path = integrate(m, psi0, (0.0, t), track_phases=False)
    expected = scipy.linalg.expm(-1j * np.asarray(m.hopping) * t) @ psi0
    assert np.max(np.abs(path.psi_f - expected)) < 1e-9


def test_drifts_on_chaotic_trimer():
    path = integrate(CHAOTIC_TRIMER, TRIMER_PSI0, (0.0, 100.0), track_phases=False,
                     cfg=IntegratorConfig(rel_tol=1e-12, abs_tol=1e-13))
    assert path.norm_drift < 1e-8
    assert path.energy_drift < 1e-8


def test_integrate_argument_validation():
    m = build_model({"L": 1})
    with pytest.raises(MeanfieldError):
        integrate(m, np.array([np.nan + 0j]), (0.0, 1.0))
    with pytest.raises(MeanfieldError):
        integrate(m, np.array([1.0 + 0j]), (1.0, 1.0))
    with pytest.raises(MeanfieldError):
        integrate(m, np.array([0.0 + 0j]), (0.0, 1.0), track_phases=True)


def test_time_reversal_of_gauged_real_model():
    m = build_model({"L": 3, "geometry": "chain", "J": 1.0, "U": 0.8})
    psi0 = TRIMER_PSI0
    t = 4.0
    fwd = integrate(m, psi0, (0.0, t), track_phases=False)
    back = integrate(m, np.conj(fwd.psi_f), (0.0, t), track_phases=False)
    assert np.max(np.abs(back.psi_f - np.conj(psi0))) < 1e-8


def test_tangent_identity_at_start():
    path, frame = integrate_with_tangent(CHAOTIC_TRIMER, TRIMER_PSI0, (0.0, 1.0))
    assert np.max(np.abs(path.monodromy(0.0) - np.eye(6))) < 1e-10


def test_tangent_symplectic_on_chaotic_run():
    path, frame = integrate_with_tangent(
        CHAOTIC_TRIMER, TRIMER_PSI0, (0.0, 20.0), track_phases=False,
        cfg=IntegratorConfig(rel_tol=1e-11, abs_tol=1e-13),
    )
    assert frame.symplectic_defect() < 1e-8


def test_tangent_linear_oracle():
    m = build_model({"L": 2, "J": 1.0, "eps": [0.3, -0.2]})
    t = 1.9
    psi0 = np.array([0.9 + 0.1j, 0.2 - 0.4j])
    _, frame = integrate_with_tangent(m, psi0, (0.0, t), track_phases=False)
    Usp = scipy.linalg.expm(-1j * np.asarray(m.hopping) * t)
    expected = np.block([[Usp.real, -Usp.imag], [Usp.imag, Usp.real]])
    assert np.max(np.abs(frame.M - expected)) < 1e-9


def test_tangent_generator_matches_rhs_linearization():
    m = CHAOTIC_TRIMER
    psi = TRIMER_PSI0
    T = tangent_generator(m, psi)
    d = 1e-7
    for j in range(6):
        dz = np.zeros(6)
        dz[j] = d
        dpsi = dz[:3] + 1j * dz[3:]
        col = (eom_rhs(m, psi + dpsi) - eom_rhs(m, psi - dpsi)) / (2 * d)
        expected = np.concatenate([col.real, col.imag])
        assert np.max(np.abs(T[:, j] - expected)) < 1e-5


def test_linearization_error_quadratic():
    t = 3.0
    base = integrate(CHAOTIC_TRIMER, TRIMER_PSI0, (0.0, t),
                     track_phases=False, with_tangent=True)
    M = base.monodromy(t)
    errs = []
    for scale in (1e-4, 5e-5):
        dz = scale * np.array([1.0, -0.5, 0.3, 0.2, -0.8, 0.6])
        dpsi = dz[:3] + 1j * dz[3:]
        pert = integrate(CHAOTIC_TRIMER, TRIMER_PSI0 + dpsi, (0.0, t),
                         track_phases=False)
        diff = pert.psi_f - base.psi_f
        lin = M @ dz
        errs.append(np.max(np.abs(np.concatenate([diff.real, diff.imag]) - lin)))
    # halving the perturbation should shrink the error about fourfold
    assert errs[1] < errs[0] / 2.5


def test_action_quadrature_b_independent_definition():
    # dR_quad/dt = 2 hbar Im(psi) . d Re(psi)/dt - H, integrated: check against
    # direct quadrature of the integrand on a dense grid
    m = CHAOTIC_TRIMER
    path = integrate(m, TRIMER_PSI0, (0.0, 2.0), track_phases=False)
    ts = np.linspace(0.0, 2.0, 8001)
    psi = np.array([path.psi(t) for t in ts])
    dpsi = np.array([eom_rhs(m, p) for p in psi])
    integrand = 2.0 * np.sum(psi.imag * dpsi.real, axis=1) - np.array(
        [classical_hamiltonian(m, p) for p in psi]
    )
    direct = scipy.integrate.simpson(integrand, x=ts)
    assert path.action_quadrature == pytest.approx(direct, abs=1e-6)


def test_action_fock_single_site():
    # constant occupation: R_fock = -H t
    eps, U, t = 0.4, 0.7, 2.3
    m = build_model({"L": 1, "eps": eps, "U": U})
    psi0 = np.array([np.sqrt(2.5) + 0j])
    path = integrate(m, psi0, (0.0, t), track_phases=True)
    H = classical_hamiltonian(m, psi0)
    assert path.action_fock == pytest.approx(-H * t, rel=1e-9)


def test_theta_unwrapping_is_continuous():
    m = build_model({"L": 1, "eps": 2.0})
    psi0 = np.array([np.sqrt(3.5) + 0j])
    path = integrate(m, psi0, (0.0, 10.0), track_phases=True)
    # phase winds by -eps * t, far past -pi; unwrapped theta must follow it
    assert path.theta(10.0)[0] == pytest.approx(-20.0, rel=1e-8)


def test_integrate_batch_matches_single():
    m = CHAOTIC_TRIMER
    rng = np.random.default_rng(7)
    batch = rng.normal(size=(4, 3)) + 1j * rng.normal(size=(4, 3))
    times = [0.7, 1.9]
    fields = integrate_batch(m, batch, times, rel_tol=1e-10, abs_tol=1e-12)
    assert fields.shape == (2, 4, 3)
    for j in range(4):
        path = integrate(m, batch[j], (0.0, 1.9), track_phases=False)
        assert np.max(np.abs(fields[1, j] - path.psi_f)) < 1e-7
        assert np.max(np.abs(fields[0, j] - path.psi(0.7))) < 1e-7
