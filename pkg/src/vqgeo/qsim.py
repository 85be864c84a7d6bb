"""Statevector simulation of the layered random ansatz.

Circuit structure: a global Ry(pi/4) on every qubit acting on |0...0>, then
n_layers of [single-qubit rotations R_{axis}(theta) on each qubit, followed
by a CZ chain on the open pairs (q, q+1)]. Gate conventions are fixed:
R_P(theta) = exp(-i theta P / 2) for P in {X, Y, Z}, CZ = diag(1, 1, 1, -1).

Qubit 0 is the most significant bit of the amplitude index, so the full
Hamiltonian H2 (x) I acts on the leading 4-dimensional factor of the state
reshaped to (4, 2**(n-2)).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidDimensions
from .numkit import SplitRng, eigh

__all__ = [
    "AXIS_CHARS",
    "CircuitSpec",
    "GappedHamiltonian",
    "sample_circuit",
    "sample_params",
    "prepare_state",
    "sample_hamiltonian",
    "energy",
    "grad_energy",
    "apply_rotation",
    "apply_pauli",
    "cz_chain_signs",
    "initial_state",
]

AXIS_CHARS = "XYZ"


@dataclass
class CircuitSpec:
    """Layered random ansatz: per-(layer, qubit) rotation axes and seed."""

    n_qubits: int
    n_layers: int
    axes: np.ndarray  # (n_layers, n_qubits) int64, 0=X 1=Y 2=Z
    seed: int

    @property
    def n_params(self) -> int:
        return self.n_layers * self.n_qubits

    def to_json(self) -> dict:
        return {
            "n_qubits": self.n_qubits,
            "n_layers": self.n_layers,
            "axes": [[AXIS_CHARS[a] for a in row] for row in self.axes],
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, d: dict) -> "CircuitSpec":
        axes = np.array(
            [[AXIS_CHARS.index(c) for c in row] for row in d["axes"]], dtype=np.int64
        )
        return cls(d["n_qubits"], d["n_layers"], axes, d["seed"])


@dataclass
class GappedHamiltonian:
    """Random 2-qubit Hamiltonian embedded as H2 (x) I^(n-2), fixed gap."""

    matrix: np.ndarray  # (2**n, 2**n) complex128
    e0: float
    gap: float
    seed: int
    h2: np.ndarray = None  # (4, 4) complex128 convenience copy

    def __post_init__(self):
        if self.h2 is None:
            d = self.matrix.shape[0] // 4
            self.h2 = self.matrix[::d, ::d].copy()

    def to_json(self) -> dict:
        return {
            "matrix": [[[z.real, z.imag] for z in row] for row in self.matrix],
            "e0": self.e0,
            "gap": self.gap,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, d: dict) -> "GappedHamiltonian":
        m = np.array([[complex(re, im) for re, im in row] for row in d["matrix"]])
        return cls(m, d["e0"], d["gap"], d["seed"])


def dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj.to_json(), fh)


# ---------------------------------------------------------------------------
# gates

@lru_cache(maxsize=None)
def cz_chain_signs(n_qubits: int) -> np.ndarray:
    """Diagonal of the full CZ chain on pairs (q, q+1), q = 0..n-2."""
    idx = np.arange(2**n_qubits)
    bits = (idx[:, None] >> np.arange(n_qubits - 1, -1, -1)) & 1
    flips = (bits[:, :-1] & bits[:, 1:]).sum(axis=1)
    return np.where(flips % 2 == 1, -1.0, 1.0)


@lru_cache(maxsize=None)
def initial_state(n_qubits: int) -> np.ndarray:
    """(x)_q Ry(pi/4) |0...0> — a real positive product state."""
    one = np.array([np.cos(np.pi / 8), np.sin(np.pi / 8)], dtype=np.complex128)
    psi = one
    for _ in range(n_qubits - 1):
        psi = np.kron(psi, one)
    return psi


def apply_rotation(psi: np.ndarray, n: int, q: int, axis: int, angle: float) -> np.ndarray:
    """Return R_axis(angle) applied to qubit q of psi."""
    half = 0.5 * angle
    c, s = np.cos(half), np.sin(half)
    r = psi.reshape(2**q, 2, 2 ** (n - 1 - q))
    out = np.empty_like(r)
    s0, s1 = r[:, 0, :], r[:, 1, :]
    if axis == 0:  # Rx
        out[:, 0, :] = c * s0 - 1j * s * s1
        out[:, 1, :] = -1j * s * s0 + c * s1
    elif axis == 1:  # Ry
        out[:, 0, :] = c * s0 - s * s1
        out[:, 1, :] = s * s0 + c * s1
    else:  # Rz
        out[:, 0, :] = (c - 1j * s) * s0
        out[:, 1, :] = (c + 1j * s) * s1
    return out.reshape(psi.shape)


def apply_pauli(psi: np.ndarray, n: int, q: int, axis: int) -> np.ndarray:
    """Return P applied to qubit q, P in {X, Y, Z} by axis code."""
    r = psi.reshape(2**q, 2, 2 ** (n - 1 - q))
    out = np.empty_like(r)
    s0, s1 = r[:, 0, :], r[:, 1, :]
    if axis == 0:  # X
        out[:, 0, :] = s1
        out[:, 1, :] = s0
    elif axis == 1:  # Y
        out[:, 0, :] = -1j * s1
        out[:, 1, :] = 1j * s0
    else:  # Z
        out[:, 0, :] = s0
        out[:, 1, :] = -s1
    return out.reshape(psi.shape)


# ---------------------------------------------------------------------------
# sampling

def sample_circuit(seed: int, n_qubits: int, n_layers: int) -> CircuitSpec:
    """Draw rotation axes uniformly from {X, Y, Z} per (layer, qubit)."""
    if n_qubits < 2:
        raise InvalidDimensions("the entangler chain requires n_qubits >= 2")
    if n_layers < 1:
        raise InvalidDimensions("n_layers must be >= 1")
    u = SplitRng(seed, ("axes",)).random((n_layers, n_qubits))
    axes = np.floor(u * 3.0).astype(np.int64)
    return CircuitSpec(n_qubits, n_layers, axes, int(seed))


def sample_params(seed: int, n_qubits: int, n_layers: int) -> np.ndarray:
    """Initial parameters 2*pi*z with z ~ N(0, 1), flattened layer-major."""
    z = SplitRng(seed, ("theta",)).normal(n_layers * n_qubits)
    return 2.0 * np.pi * z


def sample_hamiltonian(seed: int, n_qubits: int, gap: float = 1.5) -> GappedHamiltonian:
    """Random Gaussian-Hermitian 2-qubit Hamiltonian with spectrum surgery.

    The raw 4x4 spectrum lam0 <= ... <= lam3 is remapped to lam'0 = -1,
    lam'1 = -1 + gap, and lam'k = lam'1 + (lamk - lam1) * gap / (lam1 - lam0)
    for k >= 2, preserving the relative shape above the gap; the result is
    embedded as H2 (x) I^(n-2).
    """
    if n_qubits < 2:
        raise InvalidDimensions("need n_qubits >= 2 to embed a 2-qubit Hamiltonian")
    rng = SplitRng(seed, ("h2",))
    re = rng.normal((4, 4))
    im = rng.normal((4, 4))
    a = re + 1j * im
    h2_raw = (a + a.conj().T) / 2.0
    w, u = eigh(h2_raw)
    lam = np.empty(4)
    lam[0] = -1.0
    lam[1] = -1.0 + gap
    scale = gap / (w[1] - w[0])
    lam[2:] = lam[1] + (w[2:] - w[1]) * scale
    h2 = u @ np.diag(lam) @ u.conj().T
    h2 = (h2 + h2.conj().T) / 2.0
    matrix = np.kron(h2, np.eye(2 ** (n_qubits - 2)))
    return GappedHamiltonian(matrix=matrix, e0=-1.0, gap=float(gap), seed=int(seed), h2=h2)


# ---------------------------------------------------------------------------
# simulation

def _check_theta(spec: CircuitSpec, theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64).ravel()
    if theta.shape[0] != spec.n_params:
        raise InvalidDimensions(
            f"theta has {theta.shape[0]} entries, circuit expects {spec.n_params}"
        )
    return theta


def prepare_state(spec: CircuitSpec, theta: np.ndarray, up_to_layer: int | None = None) -> np.ndarray:
    """Apply U_init then the first `up_to_layer` complete layers (default all)."""
    theta = _check_theta(spec, theta)
    n, n_layers = spec.n_qubits, spec.n_layers
    if up_to_layer is None:
        up_to_layer = n_layers
    if not 0 <= up_to_layer <= n_layers:
        raise InvalidDimensions(f"up_to_layer must be in [0, {n_layers}]")
    psi = initial_state(n).copy()
    signs = cz_chain_signs(n)
    for l in range(up_to_layer):
        for q in range(n):
            psi = apply_rotation(psi, n, q, spec.axes[l, q], theta[l * n + q])
        psi = psi * signs
    return psi


def _h_matrix(h) -> np.ndarray:
    return h.matrix if isinstance(h, GappedHamiltonian) else np.asarray(h)


def energy(spec: CircuitSpec, theta: np.ndarray, h) -> float:
    """<psi(theta)| H |psi(theta)> as a real number."""
    psi = prepare_state(spec, theta)
    m = _h_matrix(h)
    if m.shape[0] != psi.shape[0]:
        raise InvalidDimensions(
            f"Hamiltonian dim {m.shape[0]} vs state dim {psi.shape[0]}"
        )
    return float(np.real(np.vdot(psi, m @ psi)))


def grad_energy(spec: CircuitSpec, theta: np.ndarray, h) -> np.ndarray:
    """Exact energy gradient via a reverse adjoint statevector sweep.

    With the generator convention dR/dtheta = -(i/2) P R, the per-parameter
    derivative is Im <mu| P_q |phi> where phi is the state right after the
    layer's rotations and mu carries H psi back through the undone gates.
    Rotations within a layer commute, so one phi/mu pair per layer serves
    every qubit of that layer.
    """
    theta = _check_theta(spec, theta)
    n, n_layers = spec.n_qubits, spec.n_layers
    psi = prepare_state(spec, theta)
    m = _h_matrix(h)
    if m.shape[0] != psi.shape[0]:
        raise InvalidDimensions(
            f"Hamiltonian dim {m.shape[0]} vs state dim {psi.shape[0]}"
        )
    phi = psi
    mu = m @ psi
    signs = cz_chain_signs(n)
    grad = np.zeros(spec.n_params)
    for l in range(n_layers - 1, -1, -1):
        phi = phi * signs
        mu = mu * signs
        for q in range(n):
            grad[l * n + q] = np.imag(np.vdot(mu, apply_pauli(phi, n, q, spec.axes[l, q])))
        for q in range(n):
            phi = apply_rotation(phi, n, q, spec.axes[l, q], -theta[l * n + q])
            mu = apply_rotation(mu, n, q, spec.axes[l, q], -theta[l * n + q])
    return grad
