import json

import numpy as np
import pytest

from vqgeo import qgt, qsim
from vqgeo.errors import InvalidDimensions
from vqgeo.numkit import SplitRng


def covariance_oracle(psi, n, axes_row):
    """Statevector covariance, assembled entry by entry from dense Paulis."""
    X = np.array([[0, 1], [1, 0]], dtype=complex)
    Y = np.array([[0, -1j], [1j, 0]])
    Z = np.diag([1.0, -1.0]).astype(complex)
    paulis = [X, Y, Z]

    def on_qubit(q, p):
        op = np.array([[1.0]], dtype=complex)
        for k in range(n):
            op = np.kron(op, p if k == q else np.eye(2))
        return op

    ops = [on_qubit(q, paulis[axes_row[q]]) for q in range(n)]
    block = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            pij = np.vdot(psi, ops[i] @ ops[j] @ psi).real
            block[i, j] = 0.25 * (pij - np.vdot(psi, ops[i] @ psi).real * np.vdot(psi, ops[j] @ psi).real)
    return (block + block.T) / 2


class TestBlockQGT:
    def test_layer1_diagonal_on_init_state(self):
        spec = qsim.CircuitSpec(3, 1, np.array([[2, 2, 2]]), 0)
        b = qgt.block_qgt(spec, np.zeros(3))
        # variance of Z in Ry(pi/4)|0>: (1 - cos^2(pi/4)) / 4 = 0.125
        assert np.allclose(b.blocks[0].diagonal(), 0.125, atol=1e-12)

    def test_layer1_offdiagonal_vanishes_on_product_state(self, rng):
        for seed in range(5):
            spec = qsim.sample_circuit(seed, 4, 1)
            b = qgt.block_qgt(spec, rng.normal(size=4))
            off = b.blocks[0] - np.diag(b.blocks[0].diagonal())
            assert np.max(np.abs(off)) < 1e-12

    def test_diagonal_bounded_by_quarter(self, rng):
        for seed in range(5):
            spec = qsim.sample_circuit(seed, 4, 3)
            b = qgt.block_qgt(spec, rng.normal(size=12) * 4)
            assert np.all(b.blocks.diagonal(axis1=1, axis2=2) <= 0.25 + 1e-12)

    def test_matches_dense_covariance_oracle(self, rng):
        for seed in range(4):
            spec = qsim.sample_circuit(seed + 30, 3, 3)
            theta = rng.normal(size=9)
            b = qgt.block_qgt(spec, theta)
            for l in range(3):
                ref_state = qsim.prepare_state(spec, theta, up_to_layer=l)
                oracle = covariance_oracle(ref_state, 3, spec.axes[l])
                assert np.allclose(b.blocks[l], oracle, atol=1e-12)

    def test_blocks_psd(self, rng):
        for seed in range(6):
            spec = qsim.sample_circuit(seed, 5, 4)
            b = qgt.block_qgt(spec, rng.normal(size=20) * 3)
            for block in b.blocks:
                assert np.linalg.eigvalsh(block).min() >= -1e-10

    def test_json_round_trip(self):
        spec = qsim.sample_circuit(0, 3, 2)
        b = qgt.block_qgt(spec, np.ones(6))
        back = qgt.BlockQGT.from_json(json.loads(json.dumps(b.to_json())))
        assert np.allclose(back.blocks, b.blocks, atol=0)
        assert back.epsilon == b.epsilon

    def test_dimension_check(self):
        spec = qsim.sample_circuit(0, 3, 2)
        with pytest.raises(InvalidDimensions):
            qgt.block_qgt(spec, np.zeros(7))


class TestApplyNoise:
    def test_zero_strength_is_identity(self):
        spec = qsim.sample_circuit(1, 3, 2)
        b = qgt.block_qgt(spec, np.zeros(6))
        out = qgt.apply_noise(b, 0.0, 1e-6, SplitRng(0))
        assert out is b

    def test_output_exactly_symmetric(self):
        spec = qsim.sample_circuit(2, 4, 3)
        b = qgt.block_qgt(spec, np.ones(12))
        out = qgt.apply_noise(b, 0.1, 1e-6, SplitRng(3, ("noise",)))
        for block in out.blocks:
            assert np.array_equal(block, block.T)
        assert out.noisy and out.noise_strength == 0.1

    def test_noise_law_monte_carlo(self):
        spec = qsim.sample_circuit(4, 3, 2)
        b = qgt.block_qgt(spec, np.full(6, 0.4))
        varsigma, eps = 0.1, 1e-2
        rng = SplitRng(11, ("mc",))
        draws = np.stack(
            [qgt.apply_noise(b, varsigma, eps, rng).blocks - b.blocks for _ in range(10_000)]
        )
        expected = varsigma * (np.abs(b.blocks) + eps)
        std = draws.std(axis=0)
        assert np.max(np.abs(std / expected - 1.0)) < 0.05
        assert np.max(np.abs(draws.mean(axis=0) / expected)) < 0.05

    def test_deterministic_given_stream(self):
        spec = qsim.sample_circuit(4, 3, 2)
        b = qgt.block_qgt(spec, np.zeros(6))
        out1 = qgt.apply_noise(b, 0.1, 1e-6, SplitRng(7, ("a",)))
        out2 = qgt.apply_noise(b, 0.1, 1e-6, SplitRng(7, ("a",)))
        assert np.array_equal(out1.blocks, out2.blocks)


class TestFullQGT:
    def test_single_parameter_is_generator_variance(self):
        # one-layer, n=2: full tensor restricted to one parameter equals the
        # variance-of-generator formula
        spec = qsim.CircuitSpec(2, 1, np.array([[0, 1]]), 0)
        theta = np.array([0.3, -0.7])
        g = qgt.full_qgt(spec, theta)
        b = qgt.block_qgt(spec, theta)
        assert np.allclose(g, b.blocks[0], atol=1e-9)

    def test_one_layer_equals_block(self, rng):
        for seed in range(4):
            spec = qsim.sample_circuit(seed + 50, 3, 1)
            theta = rng.normal(size=3)
            g = qgt.full_qgt(spec, theta)
            b = qgt.block_qgt(spec, theta)
            assert np.allclose(g, b.blocks[0], atol=1e-9)

    def test_fidelity_hessian_oracle(self, rng):
        h = 1e-4
        for trial in range(10):
            n = int(rng.integers(2, 4))
            L = int(rng.integers(1, 3))
            spec = qsim.sample_circuit(int(rng.integers(0, 2**31)), n, L)
            theta = rng.normal(size=n * L)
            g = qgt.full_qgt(spec, theta)
            p = theta.size
            psi0 = qsim.prepare_state(spec, theta)

            def fid(d):
                return abs(np.vdot(psi0, qsim.prepare_state(spec, theta + d))) ** 2

            hess = np.empty((p, p))
            eye = np.eye(p)
            for i in range(p):
                for j in range(p):
                    hess[i, j] = (
                        fid(h * (eye[i] + eye[j]))
                        - fid(h * (eye[i] - eye[j]))
                        - fid(h * (-eye[i] + eye[j]))
                        + fid(h * (-eye[i] - eye[j]))
                    ) / (4 * h * h)
            assert np.max(np.abs(g - (-0.5) * hess)) <= 1e-4

    def test_gauge_invariance(self, rng):
        # multiply every state by exp(i f(theta)) via the derivative hook
        spec = qsim.sample_circuit(77, 3, 2)
        theta = rng.normal(size=6)
        psi, derivs = qgt.state_derivatives(spec, theta)
        g_plain = qgt.qgt_from_state_derivs(psi, derivs)

        coeffs = rng.normal(size=6)
        f = float(np.sin(coeffs @ theta))
        df = np.cos(coeffs @ theta) * coeffs
        phase = np.exp(1j * f)
        psi_g = phase * psi
        derivs_g = phase * (derivs + 1j * df[:, None] * psi[None, :])
        g_gauge = qgt.qgt_from_state_derivs(psi_g, derivs_g)
        assert np.max(np.abs(g_plain - g_gauge)) <= 1e-9

    def test_psd_and_symmetric(self, rng):
        spec = qsim.sample_circuit(5, 3, 3)
        g = qgt.full_qgt(spec, rng.normal(size=9))
        assert np.array_equal(g, g.T)
        assert np.linalg.eigvalsh(g).min() >= -1e-9

    def test_oracle_scale_guard(self):
        spec = qsim.sample_circuit(0, 9, 1)
        with pytest.raises(InvalidDimensions):
            qgt.full_qgt(spec, np.zeros(9))
