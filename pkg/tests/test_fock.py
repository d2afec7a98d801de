import math

import numpy as np
import pytest
import scipy.linalg

from fockscatter import fock
from fockscatter.model import BoseHubbardModel, analyze_time_reversal, build_model, gauge_transform


def test_enumerate_basis_dimer():
    basis = fock.enumerate_basis(2, 2)
    assert [tuple(s) for s in basis.states] == [(2, 0), (1, 1), (0, 2)]
    assert basis.dim == 3
    assert basis.index_of((1, 1)) == 1


def test_enumerate_basis_sizes():
    assert fock.enumerate_basis(4, 8).dim == 165
    single = fock.enumerate_basis(1, 5)
    assert single.dim == 1 and tuple(single.states[0]) == (5,)


def test_basis_index_roundtrip():
    basis = fock.enumerate_basis(3, 4)
    for k, s in enumerate(basis.states):
        assert basis.index_of(s) == k


def test_basis_errors():
    with pytest.raises(fock.FockError):
        fock.enumerate_basis(0, 2)
    with pytest.raises(fock.FockError):
        fock.enumerate_basis(6, 60, dim_cap=1000)
    basis = fock.enumerate_basis(2, 2)
    with pytest.raises(fock.FockError):
        basis.index_of((3, 0))


def test_hamiltonian_single_site():
    eps, U = 0.7, 0.3
    m = build_model({"L": 1, "eps": eps, "U": U})
    basis = fock.enumerate_basis(1, 6)
    H = fock.build_hamiltonian(m, basis).toarray()
    n = 6
    assert H[0, 0] == pytest.approx(eps * n + 0.5 * U * n * (n - 1), rel=1e-14)


def test_hamiltonian_two_site_single_particle():
    m = build_model({"L": 2, "J": 1.0, "eps": [0.2, -0.4]})
    basis = fock.enumerate_basis(2, 1)
    H = fock.build_hamiltonian(m, basis).toarray()
    assert np.allclose(H, [[0.2, -1.0], [-1.0, -0.4]])


def test_hamiltonian_hopping_matrix_element():
    # <1,1| H |2,0> = -J sqrt(2) for the dimer
    m = build_model({"L": 2, "J": 1.0})
    basis = fock.enumerate_basis(2, 2)
    H = fock.build_hamiltonian(m, basis).toarray()
    assert H[1, 0] == pytest.approx(-np.sqrt(2), rel=1e-14)


def _ladder_oracle(model, basis):
    """Dense Hamiltonian by literal ladder-operator application."""
    dim = basis.dim
    H = np.zeros((dim, dim), dtype=complex)
    for col, n in enumerate(basis.states):
        n = np.array(n)
        for l in range(model.L):
            for lp in range(model.L):
                amp = model.hopping[l, lp]
                if amp == 0 or n[lp] == 0:
                    continue
                m = n.copy()
                m[lp] -= 1
                factor = math.sqrt(n[lp])
                if m[l] is not None:
                    factor *= math.sqrt(m[l] + 1)
                    m[l] += 1
                H[basis.index_of(m), col] += amp * factor
        for (k, l, m_, n_), u in model.interaction.items():
            state = n.copy()
            factor = 1.0
            ok = True
            for idx in (n_, m_):
                if state[idx] == 0:
                    ok = False
                    break
                factor *= math.sqrt(state[idx])
                state[idx] -= 1
            if not ok:
                continue
            for idx in (l, k):
                factor *= math.sqrt(state[idx] + 1)
                state[idx] += 1
            H[basis.index_of(state), col] += 0.5 * u * factor
    return H


def test_hamiltonian_against_ladder_oracle():
    rng = np.random.default_rng(3)
    h = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    h = (h + h.conj().T) / 2
    inter = {(0, 0, 0, 0): 0.4, (1, 1, 1, 1): -0.2,
             (0, 1, 0, 1): 0.3, (1, 0, 0, 1): 0.3,
             (0, 1, 1, 0): 0.3, (1, 0, 1, 0): 0.3}
    m = BoseHubbardModel(h, inter)
    basis = fock.enumerate_basis(3, 3)
    H = fock.build_hamiltonian(m, basis).toarray()
    assert np.max(np.abs(H - _ladder_oracle(m, basis))) < 1e-12


def test_evolve_identity_at_zero_time():
    m = build_model({"L": 2, "J": 1.0, "U": 0.5})
    basis = fock.enumerate_basis(2, 3)
    v = np.arange(1.0, basis.dim + 1) + 0.5j
    assert np.array_equal(fock.evolve(v, m, basis, 0.0), v)


def test_evolve_single_site_phases():
    eps, U, t = 0.3, 0.8, 1.7
    m = build_model({"L": 1, "eps": eps, "U": U})
    basis = fock.enumerate_basis(1, 4)
    v = np.ones(1, dtype=complex)
    out = fock.evolve(v, m, basis, t)
    n = 4
    phase = np.exp(-1j * t * (eps * n + 0.5 * U * n * (n - 1)))
    assert abs(out[0] - phase) < 1e-12


def _ryser_permanent(M):
    n = M.shape[0]
    total = 0.0
    for S in range(1, 1 << n):
        cols = [j for j in range(n) if S >> j & 1]
        prod = np.prod([sum(M[i, j] for j in cols) for i in range(n)])
        total += (-1) ** (n - len(cols)) * prod
    return total


def _noninteracting_amplitude(Usp, n_i, n_f):
    rows = [i for i, c in enumerate(n_f) for _ in range(c)]
    cols = [j for j, c in enumerate(n_i) for _ in range(c)]
    norm = math.prod(math.factorial(v) for v in n_i)
    norm *= math.prod(math.factorial(v) for v in n_f)
    if not rows:
        return 1.0
    return _ryser_permanent(Usp[np.ix_(rows, cols)]) / math.sqrt(norm)


def test_noninteracting_matches_permanent_oracle():
    h = np.array([[0.3, -1.0], [-1.0, -0.2]], dtype=complex)
    m = BoseHubbardModel(h, {})
    t = 0.9
    Usp = scipy.linalg.expm(-1j * h * t)
    basis = fock.enumerate_basis(2, 3)
    n_i = (2, 1)
    P = fock.transition_probabilities_all(m, basis, n_i, [t])[0]
    for k, s in enumerate(basis.states):
        n_f = tuple(int(v) for v in s)
        expected = abs(_noninteracting_amplitude(Usp, n_i, n_f)) ** 2
        assert P[k] == pytest.approx(expected, abs=1e-9)


def test_two_mode_rotation_quarter_period():
    # J=1, U=0: at t = pi/2 the dimer maps mode 1 fully onto mode 2
    m = build_model({"L": 2, "J": 1.0})
    assert fock.transition_probability_exact(m, (2, 0), (0, 2), np.pi / 2) == pytest.approx(
        1.0, abs=1e-10
    )


def test_dense_unitarity_and_probability_sum():
    m = build_model({"L": 3, "geometry": "ring", "J": 1.0, "U": 0.7, "eps": [0.1, -0.2, 0.3]})
    basis = fock.enumerate_basis(3, 5)
    H = fock.build_hamiltonian(m, basis).toarray()
    K = scipy.linalg.expm(-1j * H * 2.0)
    assert np.max(np.abs(K.conj().T @ K - np.eye(basis.dim))) < 1e-10
    P = fock.transition_probabilities_all(m, basis, (2, 2, 1), [2.0])[0]
    assert P.sum() == pytest.approx(1.0, abs=1e-10)


def test_energy_conservation():
    m = build_model({"L": 3, "J": 1.0, "U": 0.5, "eps": [0.3, 0.0, -0.3]})
    basis = fock.enumerate_basis(3, 6)
    H = fock.build_hamiltonian(m, basis)
    rng = np.random.default_rng(5)
    v0 = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
    v0 /= np.linalg.norm(v0)
    v1 = fock.evolve(v0, m, basis, 7.0, H=H)
    e0 = np.vdot(v0, H @ v0).real
    e1 = np.vdot(v1, H @ v1).real
    assert abs(e1 - e0) < 1e-9 * max(abs(e0), 1.0)


def test_krylov_agrees_with_dense():
    # dimension 528 exceeds the dense threshold and exercises the Lanczos path
    m = build_model({"L": 3, "geometry": "ring", "J": 1.0, "U": 0.1})
    basis = fock.enumerate_basis(3, 31)
    assert basis.dim == 528
    H = fock.build_hamiltonian(m, basis)
    v0 = np.zeros(basis.dim, dtype=complex)
    v0[basis.index_of((11, 10, 10))] = 1.0
    via_krylov = fock.evolve(v0, m, basis, 1.5, H=H)
    dense = scipy.linalg.expm(-1j * H.toarray() * 1.5) @ v0
    assert np.max(np.abs(via_krylov - dense)) < 1e-9
    assert abs(np.linalg.norm(via_krylov) - 1.0) < 1e-10


def test_gauge_covariance_of_probabilities():
    m = build_model({"L": 4, "geometry": "chain", "J": 1.0, "U": 0.6, "flux": 0.9})
    chi = analyze_time_reversal(m).phases
    m2 = gauge_transform(m, chi)
    basis = fock.enumerate_basis(4, 4)
    P1 = fock.transition_probabilities_all(m, basis, (1, 1, 1, 1), [2.3])[0]
    P2 = fock.transition_probabilities_all(m2, basis, (1, 1, 1, 1), [2.3])[0]
    assert np.max(np.abs(P1 - P2)) < 1e-10


def test_gauge_invariance_of_spectrum():
    m = build_model({"L": 3, "geometry": "ring", "J": 1.0, "U": 0.4, "flux": 0.5})
    chi = np.array([0.0, 1.1, -0.7])
    m2 = gauge_transform(m, chi)
    basis = fock.enumerate_basis(3, 4)
    e1 = np.linalg.eigvalsh(fock.build_hamiltonian(m, basis).toarray())
    e2 = np.linalg.eigvalsh(fock.build_hamiltonian(m2, basis).toarray())
    assert np.max(np.abs(e1 - e2)) < 1e-10


def test_evolve_input_validation():
    m = build_model({"L": 2, "J": 1.0})
    basis = fock.enumerate_basis(2, 2)
    v = np.ones(basis.dim, dtype=complex)
    with pytest.raises(fock.FockError):
        fock.evolve(v, m, basis, -1.0)
    with pytest.raises(fock.FockError):
        fock.evolve(v * np.nan, m, basis, 1.0)
