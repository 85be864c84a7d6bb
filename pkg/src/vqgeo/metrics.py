"""Loss-aware and conformal metric algebra.

The scalar sigma = xi gradL' g^{-1} gradL controls the loss-aware step
attenuation 1/(1+sigma); conformal factors rescale it further without
changing the step direction. conformal_multiplier returns Omega^{-2}, the
factor multiplying the loss-aware step:

    la    -> 1
    cla1  -> (1+sigma)^(-gamma)
    cla2  -> exp(gamma sigma / (1+sigma))
    cla3  -> (1+sigma)^gamma

The finite-dimensional loss-aware tensors of the overlap construction
(la_qgt_tensor, la_berry) live here too; they are verification artifacts
built from central differences of a state family, not hot-path code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotHermitian, ZeroLoss
from .numkit import solve_sym
from .qgt import BlockQGT

__all__ = [
    "ConformalKind",
    "LA",
    "cla1",
    "cla2",
    "cla3",
    "LossAwareContext",
    "sigma",
    "conformal_multiplier",
    "effective_rate",
    "fd_state_derivatives",
    "fubini_study_fd",
    "la_qgt_tensor",
    "la_berry",
]

_KIND_TAGS = ("la", "cla1", "cla2", "cla3")


@dataclass(frozen=True)
class ConformalKind:
    """Conformal family tag plus its exponent gamma (ignored for la)."""

    tag: str
    gamma: float = 0.0

    def __post_init__(self):
        if self.tag not in _KIND_TAGS:
            raise ValueError(f"unknown conformal kind {self.tag!r}")
        if not np.isfinite(self.gamma) or self.gamma < 0:
            raise ValueError("gamma must be finite and >= 0")


LA = ConformalKind("la")


def cla1(gamma: float) -> ConformalKind:
    return ConformalKind("cla1", gamma)


def cla2(gamma: float) -> ConformalKind:
    return ConformalKind("cla2", gamma)


def cla3(gamma: float) -> ConformalKind:
    return ConformalKind("cla3", gamma)


@dataclass
class LossAwareContext:
    """Base metric (dense or block-diagonal), loss gradient, xi and kind."""

    base_metric: object  # (p, p) ndarray or BlockQGT
    grad_loss: np.ndarray
    xi: float
    kind: ConformalKind = LA


def _blockwise_solve(gb: BlockQGT, vec: np.ndarray, damping: float) -> np.ndarray:
    out = np.empty_like(vec)
    d = gb.block_dim
    for l in range(gb.n_layers):
        out[l * d : (l + 1) * d] = solve_sym(gb.blocks[l], vec[l * d : (l + 1) * d], damping)
    return out


def _blockwise_apply(gb: BlockQGT, vec: np.ndarray) -> np.ndarray:
    d = gb.block_dim
    segs = vec.reshape(gb.n_layers, d)
    return np.einsum("lij,lj->li", gb.blocks, segs).ravel()


def sigma(ctx: LossAwareContext, damping: float = 0.0, literal: bool = False) -> float:
    """Loss-curvature scalar controlling the effective step size.

    Default: xi * gradL' (g + damping I)^{-1} gradL. With literal=True the
    table form xi * gradL' g gradL is used instead (no damping, metric not
    inverted); both conventions are exposed because the source material uses
    both without reconciling them.
    """
    grad = np.asarray(ctx.grad_loss, dtype=np.float64).ravel()
    g = ctx.base_metric
    if literal:
        gv = _blockwise_apply(g, grad) if isinstance(g, BlockQGT) else np.asarray(g) @ grad
        return float(ctx.xi * grad @ gv)
    if isinstance(g, BlockQGT):
        y = _blockwise_solve(g, grad, damping)
    else:
        y = solve_sym(np.asarray(g), grad, damping)
    return float(ctx.xi * grad @ y)


def conformal_multiplier(kind: ConformalKind, sig: float) -> float:
    """Omega^{-2}: the factor multiplying the loss-aware step."""
    if sig < 0:
        raise ValueError("sigma must be nonnegative")
    if kind.tag == "la":
        return 1.0
    if kind.tag == "cla1":
        return float((1.0 + sig) ** (-kind.gamma))
    if kind.tag == "cla2":
        return float(np.exp(kind.gamma * sig / (1.0 + sig)))
    return float((1.0 + sig) ** kind.gamma)  # cla3


def effective_rate(kind: ConformalKind, eta: float, sig: float) -> float:
    """eta_eff = Omega^{-2} * eta / (1 + sigma)."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    return conformal_multiplier(kind, sig) * eta / (1.0 + sig)


# ---------------------------------------------------------------------------
# finite-dimensional loss-aware tensors from the overlap construction

def _check_hermitian(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.complex128)
    if np.max(np.abs(a - a.conj().T)) > 1e-12 * max(1.0, float(np.max(np.abs(a)))):
        raise NotHermitian("operator A must be Hermitian")
    return a


def fd_state_derivatives(state_fn, theta: np.ndarray, h: float = 1e-4, richardson: bool = False):
    """Central-difference derivative states of a parametrized family.

    Returns (psi, derivs) with derivs[i] ~ d psi / d theta_i + O(h^2); with
    richardson=True the h and h/2 estimates are combined to O(h^4).
    """
    theta = np.asarray(theta, dtype=np.float64)
    psi = np.asarray(state_fn(theta), dtype=np.complex128)

    def central(step):
        d = np.empty((theta.size, psi.size), dtype=np.complex128)
        for i in range(theta.size):
            e = np.zeros_like(theta)
            e[i] = step
            d[i] = (np.asarray(state_fn(theta + e)) - np.asarray(state_fn(theta - e))) / (2.0 * step)
        return d

    if richardson:
        return psi, (4.0 * central(h / 2.0) - central(h)) / 3.0
    return psi, central(h)


def fubini_study_fd(state_fn, theta: np.ndarray, h: float = 1e-4, richardson: bool = False) -> np.ndarray:
    """FS_ij = <d_i|d_j> - <d_i|psi><psi|d_j> by central differences."""
    psi, derivs = fd_state_derivatives(state_fn, theta, h, richardson)
    c = derivs.conj() @ psi
    return derivs.conj() @ derivs.T - np.outer(c, c.conj())


def la_qgt_tensor(state_fn, a: np.ndarray, theta: np.ndarray, h: float = 1e-4, richardson: bool = False) -> np.ndarray:
    """Gauge-invariant loss-aware tensor of the operator overlap.

    FS^LA_ij = FS_ij + <d_i|A|d_j>/L - <d_i|A|psi><psi|A|d_j>/L^2 with
    L = <psi|A|psi>; Hermitian, invariant under psi -> e^{i f(theta)} psi.
    Raises ZeroLoss when |L| < 1e-12.
    """
    a = _check_hermitian(a)
    psi, derivs = fd_state_derivatives(state_fn, theta, h, richardson)
    lval = float(np.real(np.vdot(psi, a @ psi)))
    if abs(lval) < 1e-12:
        raise ZeroLoss("operator expectation value vanishes")
    c = derivs.conj() @ psi
    fs = derivs.conj() @ derivs.T - np.outer(c, c.conj())
    ad = derivs.conj() @ a @ derivs.T  # <d_i|A|d_j>
    b = derivs.conj() @ (a @ psi)  # b_i = <d_i|A|psi>
    return fs + ad / lval - np.outer(b, b.conj()) / lval**2


def la_berry(state_fn, a: np.ndarray, theta: np.ndarray, h: float = 1e-4, richardson: bool = False) -> np.ndarray:
    """Antisymmetric loss-aware curvature: the imaginary part of la_qgt_tensor.

    Equals the operator-weighted curvature assembled term by term,
    omega_ij + Im<d_i|A|d_j>/L - Im(<d_i|A|psi><psi|A|d_j>)/L^2,
    which the test suite verifies against an independent assembly.
    """
    t = la_qgt_tensor(state_fn, a, theta, h, richardson)
    w = np.imag(t)
    return (w - w.T) / 2.0
