import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_hermitian, random_spd
from vqgeo.errors import NotHermitian, NotPositiveDefinite
from vqgeo.numkit import SplitRng, eigh, sherman_morrison_solve, solve_sym, symmetrize


class TestSolveSym:
    def test_identity(self):
        x = solve_sym(np.eye(2), np.array([3.0, 4.0]), 0.0)
        assert np.allclose(x, [3.0, 4.0], atol=0)

    def test_diagonal(self):
        x = solve_sym(np.diag([2.0, 4.0]), np.array([2.0, 4.0]), 0.0)
        assert np.allclose(x, [1.0, 1.0], atol=1e-14)

    def test_hand_inverted_2x2(self):
        # [[2,1],[1,2]]^{-1} (1,1)' = (1/3, 1/3)'
        x = solve_sym(np.array([[2.0, 1.0], [1.0, 2.0]]), np.ones(2), 0.0)
        assert np.allclose(x, [1.0 / 3.0, 1.0 / 3.0], atol=1e-14)

    def test_residual_bound(self, rng):
        for _ in range(20):
            dim = int(rng.integers(1, 21))
            m = random_spd(rng, dim)
            b = rng.normal(size=dim)
            damping = float(rng.choice([0.0, 1e-8, 1e-3]))
            x = solve_sym(m, b, damping)
            res = np.linalg.norm((m + damping * np.eye(dim)) @ x - b)
            assert res <= 1e-10 * max(1.0, np.linalg.norm(b))

    def test_damping_escalation_rescues_singular(self):
        m = np.zeros((3, 3))  # singular; ladder must provide the damping
        x = solve_sym(m, np.ones(3), 0.0)
        assert np.all(np.isfinite(x))

    def test_not_positive_definite(self):
        m = np.diag([-1.0, 1.0])  # stays indefinite through the ladder
        with pytest.raises(NotPositiveDefinite):
            solve_sym(m, np.ones(2), 0.0)


class TestShermanMorrison:
    def test_identity_rank1(self):
        # (I + e e')^{-1} e = e / 2
        x = sherman_morrison_solve(np.eye(2), np.array([1.0, 0.0]), 1.0, np.array([1.0, 0.0]))
        assert np.allclose(x, [0.5, 0.0], atol=1e-14)

    def test_orthogonal_to_v(self):
        x = sherman_morrison_solve(np.eye(2), np.array([1.0, 0.0]), 1.0, np.array([0.0, 1.0]))
        assert np.allclose(x, [0.0, 1.0], atol=1e-14)

    def test_explicit_2x2(self):
        # (diag(2,2) + 2*[1,1][1,1]')^{-1} (1,1)' = (1/6, 1/6)'
        x = sherman_morrison_solve(np.diag([2.0, 2.0]), np.ones(2), 2.0, np.ones(2))
        assert np.allclose(x, [1.0 / 6.0, 1.0 / 6.0], atol=1e-14)

    @settings(max_examples=60, deadline=None)
    @given(
        dim=st.integers(1, 20),
        xi=st.floats(0.0, 10.0),
        seed=st.integers(0, 2**31),
    )
    def test_matches_dense_solve(self, dim, xi, seed):
        rng = np.random.default_rng(seed)
        m = random_spd(rng, dim)
        v = rng.normal(size=dim)
        b = rng.normal(size=dim)
        x = sherman_morrison_solve(m, v, xi, b)
        dense = np.linalg.solve(m + xi * np.outer(v, v), b)
        assert np.linalg.norm(x - dense) <= 1e-9 * np.linalg.norm(b)


class TestEigh:
    def test_pauli_z(self):
        w, _ = eigh(np.diag([1.0, -1.0]).astype(complex))
        assert np.allclose(w, [-1.0, 1.0], atol=0)

    def test_identity(self):
        w, _ = eigh(np.eye(4, dtype=complex))
        assert np.allclose(w, np.ones(4), atol=0)

    def test_pauli_x(self):
        w, u = eigh(np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex))
        assert np.allclose(w, [-1.0, 1.0], atol=1e-15)
        # eigenvectors (1, -/+1)/sqrt(2) up to phase
        for k, sign in enumerate([-1.0, 1.0]):
            vec = u[:, k] / u[0, k]
            assert np.allclose(vec, [1.0, sign], atol=1e-14)

    def test_reconstruction_random(self, rng):
        for _ in range(10):
            dim = int(rng.integers(2, 65))
            h = random_hermitian(rng, dim)
            w, u = eigh(h)
            rec = (u * w) @ u.conj().T
            assert np.linalg.norm(rec - h) <= 1e-9 * max(1.0, np.linalg.norm(h))
            assert np.all(np.diff(w) >= 0)
            assert np.linalg.norm(u.conj().T @ u - np.eye(dim)) <= 1e-10

    def test_rejects_non_hermitian(self):
        with pytest.raises(NotHermitian):
            eigh(np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex))


class TestSplitRng:
    def test_determinism_first_1000(self):
        a = SplitRng(123, ("x", 4)).normal(1000)
        b = SplitRng(123, ("x", 4)).normal(1000)
        assert np.array_equal(a, b)

    def test_distinct_paths_differ(self):
        a = SplitRng(123, (0,)).random(100)
        b = SplitRng(123, (1,)).random(100)
        assert not np.array_equal(a, b)

    def test_split_matches_direct_construction(self):
        via_split = SplitRng(7).split("a", 2).random(50)
        direct = SplitRng(7, ("a", 2)).random(50)
        assert np.array_equal(via_split, direct)

    def test_draw_order_independent_streams(self):
        parent = SplitRng(9)
        child_first = parent.split(1).random(10)
        parent.random(1000)  # consuming the parent must not move the child
        assert np.array_equal(child_first, SplitRng(9).split(1).random(10))

    def test_normal_moments(self):
        z = SplitRng(5, ("mc",)).normal(200_000)
        assert abs(z.mean()) < 0.01
        assert abs(z.std() - 1.0) < 0.01

    def test_seed64_stable(self):
        assert SplitRng(11, (3,)).seed64 == SplitRng(11, (3,)).seed64
        assert SplitRng(11, (3,)).seed64 != SplitRng(11, (4,)).seed64


def test_symmetrize_exact():
    a = np.array([[1.0, 2.0], [0.0, 3.0]])
    s = symmetrize(a)
    assert np.array_equal(s, s.T)
