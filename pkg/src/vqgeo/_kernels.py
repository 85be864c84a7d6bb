"""Fused numba kernel for the benchmark hot loop.

One call = one optimization iteration: statevector forward pass with
per-layer QGT block measurement, energy, adjoint gradient sweep, optional
multiplicative noise (betas supplied by the caller so the stream matches
qgt.apply_noise), blockwise Cholesky solves with the damping escalation
ladder, Sherman-Morrison rank-1 correction and the conformal multiplier.

The math mirrors qsim / qgt / optim exactly (same gate conventions, same
update formulas); tests assert agreement with the pure-numpy path to 1e-12.
Status codes: 0 = ok, 1 = a block stayed non-positive-definite through the
escalation ladder.
"""

import numpy as np
from numba import njit

# conformal method codes
QNG, LA_QNG, CLA2_QNG, CLA3_QNG = 0, 1, 2, 3

METHOD_CODES = {"qng": QNG, "la-qng": LA_QNG, "cla2-qng": CLA2_QNG, "cla3-qng": CLA3_QNG}

_ESCALATION_START = 1e-8
_ESCALATION_STEPS = 6


@njit(cache=True)
def _rot_inplace(psi, n, q, axis, angle):
    half = 0.5 * angle
    c = np.cos(half)
    s = np.sin(half)
    step = 1 << (n - 1 - q)
    dim = psi.shape[0]
    for base in range(0, dim, 2 * step):
        for off in range(step):
            i0 = base + off
            i1 = i0 + step
            a = psi[i0]
            b = psi[i1]
            if axis == 0:  # Rx
                psi[i0] = c * a - 1j * s * b
                psi[i1] = -1j * s * a + c * b
            elif axis == 1:  # Ry
                psi[i0] = c * a - s * b
                psi[i1] = s * a + c * b
            else:  # Rz
                psi[i0] = (c - 1j * s) * a
                psi[i1] = (c + 1j * s) * b


@njit(cache=True)
def _pauli_into(psi, out, n, q, axis):
    step = 1 << (n - 1 - q)
    dim = psi.shape[0]
    for base in range(0, dim, 2 * step):
        for off in range(step):
            i0 = base + off
            i1 = i0 + step
            if axis == 0:  # X
                out[i0] = psi[i1]
                out[i1] = psi[i0]
            elif axis == 1:  # Y
                out[i0] = -1j * psi[i1]
                out[i1] = 1j * psi[i0]
            else:  # Z
                out[i0] = psi[i0]
                out[i1] = -psi[i1]


@njit(cache=True)
def _vdot_real(a, b):
    acc = 0.0
    for k in range(a.shape[0]):
        acc += a[k].real * b[k].real + a[k].imag * b[k].imag
    return acc


@njit(cache=True)
def _vdot_imag(a, b):
    acc = 0.0
    for k in range(a.shape[0]):
        acc += a[k].real * b[k].imag - a[k].imag * b[k].real
    return acc


@njit(cache=True)
def _chol_lower(a, damping, out):
    """Cholesky of a + damping*I into out (lower); False if not PD."""
    n = a.shape[0]
    for i in range(n):
        for j in range(i + 1):
            s = a[i, j]
            if i == j:
                s += damping
            for k in range(j):
                s -= out[i, k] * out[j, k]
            if i == j:
                if s <= 0.0:
                    return False
                out[i, i] = np.sqrt(s)
            else:
                out[i, j] = s / out[j, j]
    return True


@njit(cache=True)
def _chol_solve_escalate(a, b, damping, out):
    """solve_sym semantics: requested damping first, then the 1e-8*10^k ladder."""
    n = a.shape[0]
    low = np.empty((n, n))
    ok = _chol_lower(a, damping, low)
    if not ok:
        esc = _ESCALATION_START
        for _ in range(_ESCALATION_STEPS):
            if esc > damping:
                ok = _chol_lower(a, esc, low)
                if ok:
                    break
            esc *= 10.0
        if not ok:
            return False
    # forward substitution L y = b
    y = np.empty(n)
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= low[i, k] * y[k]
        y[i] = s / low[i, i]
    # back substitution L' x = y
    for i in range(n - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, n):
            s -= low[k, i] * out[k]
        out[i] = s / low[i, i]
    return True


@njit(cache=True)
def vqe_iterate(axes, theta, h2, signs, psi0, betas, varsigma, epsilon,
                method_code, eta, xi, gamma, damping, sigma_literal):
    """One full iteration at theta.

    Returns (energy, dtheta, status). The step is
    -eta * Omega^{-2} * y / (1 + xi grad.y) with y the damped blockwise
    solve of the gradient, matching optim.quantum_step.
    """
    n_layers, n = axes.shape
    dim = psi0.shape[0]
    n_params = n_layers * n

    psi = psi0.copy()
    v = np.empty((n, dim), dtype=np.complex128)
    means = np.empty(n)
    blocks = np.empty((n_layers, n, n))

    # forward pass; block l measured in the state entering layer l
    for l in range(n_layers):
        for q in range(n):
            _pauli_into(psi, v[q], n, q, axes[l, q])
        for i in range(n):
            means[i] = _vdot_real(psi, v[i])
        for i in range(n):
            for j in range(i, n):
                cij = _vdot_real(v[i], v[j])
                val = 0.25 * (cij - means[i] * means[j])
                blocks[l, i, j] = val
                blocks[l, j, i] = val
        for q in range(n):
            _rot_inplace(psi, n, q, axes[l, q], theta[l * n + q])
        for k in range(dim):
            psi[k] *= signs[k]

    # energy via h2 acting on the two most significant qubits
    d4 = dim // 4
    hpsi = np.zeros(dim, dtype=np.complex128)
    for a in range(4):
        for b in range(4):
            hab = h2[a, b]
            if hab != 0:
                for r in range(d4):
                    hpsi[a * d4 + r] += hab * psi[b * d4 + r]
    energy = _vdot_real(psi, hpsi)

    # adjoint gradient sweep (phi, mu destroyed layer by layer)
    grad = np.empty(n_params)
    phi = psi
    mu = hpsi
    tmp = np.empty(dim, dtype=np.complex128)
    for l in range(n_layers - 1, -1, -1):
        for k in range(dim):
            phi[k] *= signs[k]
            mu[k] *= signs[k]
        for q in range(n):
            _pauli_into(phi, tmp, n, q, axes[l, q])
            grad[l * n + q] = _vdot_imag(mu, tmp)
        for q in range(n):
            _rot_inplace(phi, n, q, axes[l, q], -theta[l * n + q])
            _rot_inplace(mu, n, q, axes[l, q], -theta[l * n + q])

    # multiplicative symmetric noise
    if varsigma > 0.0:
        for l in range(n_layers):
            for i in range(n):
                for j in range(n):
                    blocks[l, i, j] += (abs(blocks[l, i, j]) + epsilon) * varsigma * betas[l, i, j]

    dtheta = np.zeros(n_params)
    all_zero = True
    for k in range(n_params):
        if grad[k] != 0.0:
            all_zero = False
            break
    if all_zero:
        return energy, dtheta, 0

    # blockwise damped solve
    y = np.empty(n_params)
    for l in range(n_layers):
        ok = _chol_solve_escalate(blocks[l], grad[l * n : (l + 1) * n], damping, y[l * n : (l + 1) * n])
        if not ok:
            return energy, dtheta, 1

    s = 0.0
    for k in range(n_params):
        s += grad[k] * y[k]
    xi_eff = 0.0 if method_code == QNG else xi
    scale = 1.0 / (1.0 + xi_eff * s)

    mult = 1.0
    if method_code == CLA2_QNG or method_code == CLA3_QNG:
        if sigma_literal:
            sig = 0.0
            for l in range(n_layers):
                for i in range(n):
                    gi = grad[l * n + i]
                    for j in range(n):
                        sig += gi * blocks[l, i, j] * grad[l * n + j]
            sig *= xi
        else:
            sig = xi * s
        if method_code == CLA2_QNG:
            mult = np.exp(gamma * sig / (1.0 + sig))
        else:
            mult = (1.0 + sig) ** gamma

    coeff = -eta * mult * scale
    for k in range(n_params):
        dtheta[k] = coeff * y[k]
    return energy, dtheta, 0
