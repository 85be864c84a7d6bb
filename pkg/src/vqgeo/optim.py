"""Optimizer update rules: the quantum family and the Fisher-preconditioned
classical family.

Quantum methods all share one mechanics: solve the block-diagonal base
metric, fold the rank-1 xi gradE gradE' term in with Sherman-Morrison (the
rank-1 term couples blocks, the correction is a single global scalar), and
multiply by the conformal factor. As a consequence every loss-aware /
conformal step is an exact scalar multiple of the plain natural-gradient
step on the same inputs.

Classical methods implement the momentum + preconditioner recursions with
a per-layer curvature cache refreshed on a fixed cadence; the conformal
scalar multipliers are literally conformal_multiplier(kind, s)/(1+s) from
the metrics module, shared with the quantum path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import InvalidDimensions, NonFiniteGradient, NotPositiveDefinite
from .metrics import LA, ConformalKind, cla2, cla3, conformal_multiplier
from .numkit import solve_sym
from .qgt import BlockQGT

__all__ = [
    "QUANTUM_METHODS",
    "CLASSICAL_METHODS",
    "QOptConfig",
    "quantum_step",
    "ClassicalHyper",
    "ClassicalOptState",
    "classical_step",
    "fisher_precond_refresh",
]

QUANTUM_METHODS = ("qng", "la-qng", "cla2-qng", "cla3-qng")
CLASSICAL_METHODS = ("sgd-rms", "adam", "f-ng", "f-lang", "f-cla2", "f-cla3")


@dataclass
class QOptConfig:
    """Quantum method tag plus hyperparameters.

    qng ignores xi and gamma; la-qng ignores gamma. sigma_literal selects
    the non-inverted table form of sigma (see metrics.sigma).
    """

    method: str
    eta: float
    xi: float = 0.0
    gamma: float = 0.0
    damping: float = 1e-8
    sigma_literal: bool = False

    def __post_init__(self):
        if self.method not in QUANTUM_METHODS:
            raise ValueError(f"unknown quantum method {self.method!r}")
        if self.eta <= 0:
            raise ValueError("eta must be positive")

    def kind(self) -> ConformalKind:
        if self.method == "cla2-qng":
            return cla2(self.gamma)
        if self.method == "cla3-qng":
            return cla3(self.gamma)
        return LA


def quantum_step(cfg: QOptConfig, gb: BlockQGT, grad_e: np.ndarray) -> np.ndarray:
    """One parameter update Delta theta for the quantum methods.

    Delta theta = -eta * Omega^{-2} * x where x solves
    (gb + damping I + xi gradE gradE') x = gradE; with v = b = gradE the
    Sherman-Morrison correction collapses to x = y / (1 + xi gradE.y),
    y = (gb + damping I)^{-1} gradE solved block by block.
    """
    grad_e = np.asarray(grad_e, dtype=np.float64).ravel()
    if grad_e.shape[0] != gb.n_params:
        raise InvalidDimensions(
            f"grad has {grad_e.shape[0]} entries, blocks cover {gb.n_params}"
        )
    if not np.any(grad_e):
        return np.zeros_like(grad_e)
    d = gb.block_dim
    y = np.empty_like(grad_e)
    for l in range(gb.n_layers):
        seg = slice(l * d, (l + 1) * d)
        y[seg] = solve_sym(gb.blocks[l], grad_e[seg], cfg.damping)
    s = float(grad_e @ y)
    xi = 0.0 if cfg.method == "qng" else cfg.xi
    x = y / (1.0 + xi * s)
    mult = 1.0
    if cfg.method in ("cla2-qng", "cla3-qng"):
        if cfg.sigma_literal:
            segs = grad_e.reshape(gb.n_layers, d)
            sig = cfg.xi * float(np.einsum("li,lij,lj->", segs, gb.blocks, segs))
        else:
            sig = cfg.xi * s
        mult = conformal_multiplier(cfg.kind(), sig)
    return -cfg.eta * mult * x


# ---------------------------------------------------------------------------
# classical family

@dataclass
class ClassicalHyper:
    """Hyperparameters shared by the Table-2 style classical updates."""

    eta: float = 1e-2
    beta_m: float = 0.9
    beta_rms: float = 0.999
    beta: float = 0.9
    beta_curv: float = 0.95
    xi: float = 0.1
    gamma: float = 1.0
    lam: float = 0.0
    delta_tilde: float = 0.1  # before the first inverse refresh P = delta*I, so steps scale as eta/delta
    eps: float = 1e-8


@dataclass
class ClassicalOptState:
    """Moment vectors, scalar EMA, step counter, and curvature cache."""

    hyper: ClassicalHyper
    layer_slices: list  # [(start, stop)] parameter segments per layer
    m: np.ndarray
    r: np.ndarray
    mu: float = 0.0
    t: int = 0
    curv_every: int = 20
    inv_every: int = 40
    fisher: list = field(default_factory=list)  # per-layer F blocks
    chol: list = field(default_factory=list)  # lower Cholesky of F + delta I

    @classmethod
    def init(cls, n_params: int, layer_slices, hyper: ClassicalHyper,
             curv_every: int = 20, inv_every: int = 40) -> "ClassicalOptState":
        if inv_every % curv_every != 0:
            raise ValueError("inv_every must be a multiple of curv_every")
        state = cls(
            hyper=hyper,
            layer_slices=list(layer_slices),
            m=np.zeros(n_params),
            r=np.zeros(n_params),
            curv_every=curv_every,
            inv_every=inv_every,
        )
        for start, stop in state.layer_slices:
            p = stop - start
            state.fisher.append(np.zeros((p, p)))
            state.chol.append(np.sqrt(hyper.delta_tilde) * np.eye(p))
        return state

    def precond_solve(self, vec: np.ndarray) -> np.ndarray:
        """p = P^{-1} vec using the cached per-layer Cholesky factors."""
        out = np.empty_like(vec)
        for (start, stop), c in zip(self.layer_slices, self.chol):
            y = scipy.linalg.solve_triangular(c, vec[start:stop], lower=True)
            out[start:stop] = scipy.linalg.solve_triangular(c.T, y, lower=False)
        return out


def classical_step(state: ClassicalOptState, method: str, grad: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """One classical update; mutates the state moments and step counter.

    `grad` is the raw data-loss gradient. sgd-rms applies weight decay as
    the explicit -eta lam theta term; every other method folds it into
    d_t = grad + lam theta (the regularizer enters through the gradient).
    The mu_t sum in sgd-rms runs over all parameters (one scalar).
    """
    if method not in CLASSICAL_METHODS:
        raise ValueError(f"unknown classical method {method!r}")
    grad = np.asarray(grad, dtype=np.float64).ravel()
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradient("gradient contains non-finite entries")
    h = state.hyper
    state.t += 1
    t = state.t

    if method == "sgd-rms":
        d = grad
        state.r = h.beta_rms * state.r + (1.0 - h.beta_rms) * d**2
        r_hat = state.r / (1.0 - h.beta_rms**t)
        state.m = h.beta_m * state.m + (1.0 - h.beta_m) * d
        denom = np.sqrt(r_hat) + h.eps
        state.mu = h.beta * state.mu + (1.0 - h.beta) * h.xi * float(np.sum(d**2 / denom))
        mu_hat = state.mu / (1.0 - h.beta**t)
        gamma_t = 1.0 / (1.0 + abs(mu_hat))
        return -h.eta * gamma_t * state.m / ((1.0 - h.beta_m**t) * denom) - h.eta * h.lam * theta

    d = grad + h.lam * np.asarray(theta, dtype=np.float64).ravel()

    if method == "adam":
        state.m = h.beta_m * state.m + (1.0 - h.beta_m) * d
        state.r = h.beta_rms * state.r + (1.0 - h.beta_rms) * d**2
        m_hat = state.m / (1.0 - h.beta_m**t)
        r_hat = state.r / (1.0 - h.beta_rms**t)
        return -h.eta * m_hat / (np.sqrt(r_hat) + h.eps)

    state.m = h.beta_m * state.m + (1.0 - h.beta_m) * d
    p = state.precond_solve(state.m)
    s = float(state.m @ p)
    if method == "f-ng":
        mult = 1.0
    elif method == "f-lang":
        mult = conformal_multiplier(LA, s) / (1.0 + s)
    elif method == "f-cla2":
        mult = conformal_multiplier(cla2(h.gamma), s) / (1.0 + s)
    else:  # f-cla3
        mult = conformal_multiplier(cla3(h.gamma), s) / (1.0 + s)
    return -h.eta * mult * p


def fisher_precond_refresh(state: ClassicalOptState, per_layer_grads: list) -> None:
    """Cadenced curvature update: F blocks every curv_every completed steps,
    cached inverse factors every inv_every; otherwise a no-op.

    per_layer_grads[l] is the (batch, p_l) matrix of per-example gradient
    segments for layer l; the block update is the EMA of their averaged
    outer products G'G / B.
    """
    t = state.t
    if t == 0 or t % state.curv_every != 0:
        return
    bc = state.hyper.beta_curv
    for l, g in enumerate(per_layer_grads):
        g = np.asarray(g, dtype=np.float64)
        state.fisher[l] = bc * state.fisher[l] + (1.0 - bc) * (g.T @ g) / g.shape[0]
    if t % state.inv_every == 0:
        for l, f in enumerate(state.fisher):
            damped = f + state.hyper.delta_tilde * np.eye(f.shape[0])
            try:
                state.chol[l] = np.linalg.cholesky(damped)
            except np.linalg.LinAlgError as exc:
                raise NotPositiveDefinite(f"layer {l} curvature block not PD") from exc
