"""Quantum geometric tensor: per-layer blocks, noise model, exact oracle.

The block for layer l is the covariance matrix of the layer's rotation
generators, 0.25 * (<P_i P_j> - <P_i><P_j>), evaluated in the state entering
that layer (all earlier layers fully applied). The multiplicative noise
model perturbs every entry by (|g_ij| + eps) * varsigma * beta_ij with
standard-normal beta drawn on the upper triangle and mirrored.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidDimensions
from .numkit import SplitRng
from .qsim import (
    CircuitSpec,
    apply_pauli,
    apply_rotation,
    cz_chain_signs,
    initial_state,
    prepare_state,
)

__all__ = [
    "BlockQGT",
    "block_qgt",
    "apply_noise",
    "full_qgt",
    "state_derivatives",
    "qgt_from_state_derivs",
]


@dataclass
class BlockQGT:
    """Per-layer symmetric blocks approximating the quantum geometric tensor."""

    blocks: np.ndarray  # (n_layers, n_qubits, n_qubits) float64
    noisy: bool = False
    noise_strength: float = 0.0
    epsilon: float = 1e-6

    @property
    def n_layers(self) -> int:
        return self.blocks.shape[0]

    @property
    def block_dim(self) -> int:
        return self.blocks.shape[1]

    @property
    def n_params(self) -> int:
        return self.blocks.shape[0] * self.blocks.shape[1]

    def to_json(self) -> dict:
        return {
            "blocks": self.blocks.tolist(),
            "noisy": self.noisy,
            "noise_strength": self.noise_strength,
            "epsilon": self.epsilon,
        }

    @classmethod
    def from_json(cls, d: dict) -> "BlockQGT":
        return cls(
            np.asarray(d["blocks"], dtype=np.float64),
            d["noisy"],
            d["noise_strength"],
            d["epsilon"],
        )


def _layer_block(psi: np.ndarray, n: int, axes_row: np.ndarray) -> np.ndarray:
    """Covariance block of the layer generators in state psi."""
    v = np.stack([apply_pauli(psi, n, q, axes_row[q]) for q in range(n)])
    means = np.real(v @ psi.conj())
    cross = np.real(v.conj() @ v.T)
    block = 0.25 * (cross - np.outer(means, means))
    return (block + block.T) / 2.0


def block_qgt(spec: CircuitSpec, theta: np.ndarray) -> BlockQGT:
    """Block-diagonal QGT of the layered ansatz at theta (noiseless)."""
    theta = np.asarray(theta, dtype=np.float64).ravel()
    if theta.shape[0] != spec.n_params:
        raise InvalidDimensions(
            f"theta has {theta.shape[0]} entries, circuit expects {spec.n_params}"
        )
    n, n_layers = spec.n_qubits, spec.n_layers
    signs = cz_chain_signs(n)
    psi = initial_state(n).copy()
    blocks = np.empty((n_layers, n, n))
    for l in range(n_layers):
        blocks[l] = _layer_block(psi, n, spec.axes[l])
        if l < n_layers - 1:
            for q in range(n):
                psi = apply_rotation(psi, n, q, spec.axes[l, q], theta[l * n + q])
            psi = psi * signs
    return BlockQGT(blocks=blocks)


def noise_betas(rng: SplitRng, n_layers: int, dim: int) -> np.ndarray:
    """Standard-normal draws on the upper triangle, mirrored per block.

    One rng.normal call of shape (n_layers, dim*(dim+1)/2), filled row-major
    into the upper triangle including the diagonal.
    """
    iu = np.triu_indices(dim)
    flat = rng.normal((n_layers, iu[0].size))
    betas = np.zeros((n_layers, dim, dim))
    betas[:, iu[0], iu[1]] = flat
    betas[:, iu[1], iu[0]] = flat
    return betas


def apply_noise(q: BlockQGT, varsigma: float, eps: float, rng: SplitRng, betas: np.ndarray | None = None) -> BlockQGT:
    """Multiplicative symmetric noise g_ij -> g_ij + (|g_ij| + eps) varsigma beta_ij.

    beta is drawn on the upper triangle (diagonal included) and mirrored, so
    the output blocks stay exactly symmetric. varsigma = 0 returns the input
    unchanged. A precomputed `betas` array bypasses the rng (used by the fast
    benchmark path; it must come from noise_betas to reproduce the stream).
    """
    if varsigma < 0:
        raise ValueError("noise strength must be nonnegative")
    if eps <= 0:
        raise ValueError("epsilon must be positive")
    if varsigma == 0.0:
        return q
    if betas is None:
        betas = noise_betas(rng, q.n_layers, q.block_dim)
    noisy = q.blocks + (np.abs(q.blocks) + eps) * varsigma * betas
    return replace(q, blocks=noisy, noisy=True, noise_strength=varsigma, epsilon=eps)


# ---------------------------------------------------------------------------
# exact full tensor (oracle scale)

def state_derivatives(spec: CircuitSpec, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """State and analytic derivative states d|psi>/d theta_k.

    Derivative k = (l, q) applies the generator -(i/2) P_q right after the
    layer-l rotations (the generator commutes with the rest of the layer)
    and then pushes through the remaining gates.
    """
    theta = np.asarray(theta, dtype=np.float64).ravel()
    if theta.shape[0] != spec.n_params:
        raise InvalidDimensions("theta length mismatch")
    n, n_layers = spec.n_qubits, spec.n_layers
    signs = cz_chain_signs(n)
    # forward pass caching the state right after each layer's rotations
    post_rot = []
    psi = initial_state(n).copy()
    for l in range(n_layers):
        for q in range(n):
            psi = apply_rotation(psi, n, q, spec.axes[l, q], theta[l * n + q])
        post_rot.append(psi)
        psi = psi * signs
    derivs = np.empty((spec.n_params, 2**n), dtype=np.complex128)
    for l in range(n_layers):
        for q in range(n):
            d = -0.5j * apply_pauli(post_rot[l], n, q, spec.axes[l, q])
            d = d * signs
            for l2 in range(l + 1, n_layers):
                for q2 in range(n):
                    d = apply_rotation(d, n, q2, spec.axes[l2, q2], theta[l2 * n + q2])
                d = d * signs
            derivs[l * n + q] = d
    return psi, derivs


def qgt_from_state_derivs(psi: np.ndarray, derivs: np.ndarray) -> np.ndarray:
    """Re[<d_i|d_j> - <d_i|psi><psi|d_j>], symmetrized.

    Public so a test harness can inject gauge-transformed derivative sets;
    the combination is invariant under psi -> e^{i f(theta)} psi.
    """
    overlaps = derivs.conj() @ derivs.T
    c = derivs.conj() @ psi  # c_i = <d_i|psi>
    g = np.real(overlaps - np.outer(c, c.conj()))
    return (g + g.T) / 2.0


def full_qgt(spec: CircuitSpec, theta: np.ndarray) -> np.ndarray:
    """Exact QGT over all parameters via analytic state derivatives."""
    if spec.n_qubits > 8:
        raise InvalidDimensions("full_qgt is an oracle for n_qubits <= 8")
    psi, derivs = state_derivatives(spec, theta)
    return qgt_from_state_derivs(psi, derivs)
