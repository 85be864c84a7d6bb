import json

import numpy as np
import pytest

from conftest import random_hermitian
from vqgeo import qsim
from vqgeo.errors import InvalidDimensions, NotHermitian
from vqgeo.numkit import eigh

X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0, -1.0]).astype(complex)
PAULI = [X, Y, Z]


def rotation_matrix(axis, angle):
    return np.cos(angle / 2) * np.eye(2) - 1j * np.sin(angle / 2) * PAULI[axis]


def dense_circuit_unitary(spec, theta):
    """Independent oracle: assemble the full unitary with np.kron products."""
    n, L = spec.n_qubits, spec.n_layers
    dim = 2**n
    u = np.eye(dim, dtype=complex)
    ry = rotation_matrix(1, np.pi / 4)
    init = np.array([[1.0]], dtype=complex)
    for _ in range(n):
        init = np.kron(init, ry)
    u = init @ u
    cz = np.diag(qsim.cz_chain_signs(n)).astype(complex)
    for l in range(L):
        layer = np.array([[1.0]], dtype=complex)
        for q in range(n):
            layer = np.kron(layer, rotation_matrix(spec.axes[l, q], theta[l * n + q]))
        u = cz @ layer @ u
    return u


class TestSampling:
    def test_circuit_deterministic(self):
        a = qsim.sample_circuit(0, 2, 1)
        b = qsim.sample_circuit(0, 2, 1)
        assert np.array_equal(a.axes, b.axes)

    def test_different_seeds_differ(self):
        # probability of a collision is ~3^-30
        a = qsim.sample_circuit(0, 6, 5)
        b = qsim.sample_circuit(1, 6, 5)
        assert not np.array_equal(a.axes, b.axes)

    def test_paper_shape(self):
        spec = qsim.sample_circuit(3, 6, 5)
        assert spec.axes.shape == (5, 6)
        assert spec.n_params == 30

    def test_axis_distribution(self):
        spec = qsim.sample_circuit(5, 6, 500)
        counts = np.bincount(spec.axes.ravel(), minlength=3)
        assert counts.sum() == 3000
        assert np.all(counts > 850)  # roughly uniform over X, Y, Z

    def test_requires_two_qubits(self):
        with pytest.raises(InvalidDimensions):
            qsim.sample_circuit(0, 1, 1)

    def test_params_deterministic(self):
        assert np.array_equal(qsim.sample_params(4, 6, 5), qsim.sample_params(4, 6, 5))

    def test_params_moments(self):
        z = qsim.sample_params(9, 10, 10_000)  # 1e5 draws
        assert abs(z.std() - 2 * np.pi) <= 0.02 * 2 * np.pi
        assert abs(z.mean()) <= 3 * (2 * np.pi) / np.sqrt(z.size)


class TestPrepareState:
    def test_yy_amplitudes_against_dense_oracle(self):
        spec = qsim.CircuitSpec(2, 1, np.array([[1, 1]]), 0)
        psi = qsim.prepare_state(spec, np.zeros(2))
        c, s = np.cos(np.pi / 8), np.sin(np.pi / 8)
        expect = np.array([c * c, c * s, s * c, -s * s])
        assert np.allclose(psi, expect, atol=1e-15)
        assert abs(psi[3] - (-(np.sin(np.pi / 8) ** 2))) < 1e-12  # ~ -0.146447

    def test_unit_norm(self, rng):
        for _ in range(100):
            n = int(rng.integers(2, 5))
            L = int(rng.integers(1, 4))
            spec = qsim.sample_circuit(int(rng.integers(0, 2**31)), n, L)
            theta = rng.normal(size=n * L) * 5
            assert abs(np.linalg.norm(qsim.prepare_state(spec, theta)) - 1) < 1e-12

    def test_layer_zero_is_product_state(self):
        spec = qsim.sample_circuit(1, 3, 2)
        psi = qsim.prepare_state(spec, np.ones(6), up_to_layer=0)
        c, s = np.cos(np.pi / 8), np.sin(np.pi / 8)
        factors = {0: c, 1: s}
        expect = np.array(
            [factors[(i >> 2) & 1] * factors[(i >> 1) & 1] * factors[i & 1] for i in range(8)]
        )
        assert np.allclose(psi, expect, atol=1e-15)
        assert np.all(psi.real > 0) and np.allclose(psi.imag, 0)

    def test_matches_dense_unitary(self, rng):
        for n, L in [(2, 1), (3, 2), (4, 3)]:
            spec = qsim.sample_circuit(int(rng.integers(0, 2**31)), n, L)
            theta = rng.normal(size=n * L)
            psi = qsim.prepare_state(spec, theta)
            u = dense_circuit_unitary(spec, theta)
            psi0 = np.zeros(2**n)
            psi0[0] = 1.0
            assert np.allclose(psi, u @ psi0, atol=1e-12)

    def test_theta_length_checked(self):
        spec = qsim.sample_circuit(0, 2, 1)
        with pytest.raises(InvalidDimensions):
            qsim.prepare_state(spec, np.zeros(5))


class TestHamiltonian:
    def test_gap_and_ground_energy(self):
        for seed in range(5):
            h = qsim.sample_hamiltonian(seed, 6)
            w, _ = eigh(h.matrix)
            grouped = np.unique(np.round(w, 9))
            assert abs((grouped[1] - grouped[0]) - 1.5) < 1e-10
            assert abs(w[0] - (-1.0)) < 1e-10

    def test_embedding_preserves_h2_spectrum(self):
        h = qsim.sample_hamiltonian(3, 4)
        w2 = np.linalg.eigvalsh(h.h2)
        w = np.linalg.eigvalsh(h.matrix)
        assert np.allclose(np.unique(np.round(w, 9)), np.round(w2, 9))
        for lam in w2:
            assert np.sum(np.abs(w - lam) < 1e-9) == 4  # 2^(n-2)-fold degeneracy

    def test_custom_gap(self):
        h = qsim.sample_hamiltonian(0, 2, gap=0.7)
        w = np.linalg.eigvalsh(h.matrix)
        assert abs((w[1] - w[0]) - 0.7) < 1e-10

    def test_json_round_trip(self, tmp_path):
        h = qsim.sample_hamiltonian(5, 3)
        blob = json.dumps(h.to_json())
        back = qsim.GappedHamiltonian.from_json(json.loads(blob))
        assert np.allclose(back.matrix, h.matrix, atol=0)
        assert back.e0 == h.e0 and back.gap == h.gap and back.seed == h.seed
        assert np.allclose(back.h2, h.h2, atol=0)

    def test_circuit_json_round_trip(self):
        spec = qsim.sample_circuit(8, 4, 3)
        back = qsim.CircuitSpec.from_json(json.loads(json.dumps(spec.to_json())))
        assert np.array_equal(back.axes, spec.axes)
        assert (back.n_qubits, back.n_layers, back.seed) == (4, 3, 8)


class TestEnergy:
    def test_identity_hamiltonian(self, rng):
        spec = qsim.sample_circuit(2, 3, 2)
        for _ in range(5):
            theta = rng.normal(size=6)
            assert abs(qsim.energy(spec, theta, np.eye(8)) - 1.0) < 1e-12

    def test_z_on_init_state(self):
        spec = qsim.CircuitSpec(2, 1, np.array([[2, 2]]), 0)
        h = np.kron(Z, np.eye(2))
        assert abs(qsim.energy(spec, np.zeros(2), h) - np.cos(np.pi / 4)) < 1e-12

    def test_eigenvector_gives_eigenvalue(self):
        # theta = 0 with Z-rotations leaves the init product state; use an H
        # diagonal in that state's basis direction
        spec = qsim.CircuitSpec(2, 1, np.array([[2, 2]]), 0)
        psi = qsim.prepare_state(spec, np.zeros(2))
        h = 2.5 * np.outer(psi, psi.conj())  # psi is the eigenvector
        assert abs(qsim.energy(spec, np.zeros(2), h) - 2.5) < 1e-12

    def test_bounded_below(self, rng):
        h = qsim.sample_hamiltonian(7, 3)
        spec = qsim.sample_circuit(7, 3, 2)
        for _ in range(100):
            theta = rng.normal(size=6) * 6
            assert qsim.energy(spec, theta, h) >= h.e0 - 1e-9


class TestGradEnergy:
    def test_identity_gives_zero(self, rng):
        spec = qsim.sample_circuit(1, 3, 2)
        g = qsim.grad_energy(spec, rng.normal(size=6), np.eye(8))
        assert np.allclose(g, 0, atol=1e-12)

    def test_matches_finite_differences(self, rng):
        h_step = 1e-5
        for _ in range(20):
            n = int(rng.integers(2, 5))
            L = int(rng.integers(1, 4))
            spec = qsim.sample_circuit(int(rng.integers(0, 2**31)), n, L)
            theta = rng.normal(size=n * L)
            hmat = random_hermitian(rng, 2**n)
            g = qsim.grad_energy(spec, theta, hmat)
            fd = np.empty_like(g)
            for i in range(g.size):
                e = np.zeros_like(theta)
                e[i] = h_step
                # 5-point stencil
                fd[i] = (
                    qsim.energy(spec, theta - 2 * e, hmat)
                    - 8 * qsim.energy(spec, theta - e, hmat)
                    + 8 * qsim.energy(spec, theta + e, hmat)
                    - qsim.energy(spec, theta + 2 * e, hmat)
                ) / (12 * h_step)
            assert np.max(np.abs(g - fd)) <= 1e-6

    def test_commuting_parameter_has_zero_gradient(self, rng):
        # Rz generators commute with CZ and with H = Z (x) I, so the last
        # layer's Z rotations cannot move the energy.
        spec = qsim.CircuitSpec(2, 2, np.array([[0, 1], [2, 2]]), 0)
        h = np.kron(Z, np.eye(2))
        g = qsim.grad_energy(spec, rng.normal(size=4), h)
        assert np.allclose(g[2:], 0, atol=1e-14)

    def test_determinism(self):
        spec = qsim.sample_circuit(4, 6, 5)
        theta = qsim.sample_params(4, 6, 5)
        h = qsim.sample_hamiltonian(4, 6)
        g1 = qsim.grad_energy(spec, theta, h)
        g2 = qsim.grad_energy(spec, theta, h)
        assert np.array_equal(g1, g2)


def test_rejects_non_hermitian_in_eigh_path():
    with pytest.raises(NotHermitian):
        eigh(np.array([[0, 2], [1, 0]], dtype=complex))
