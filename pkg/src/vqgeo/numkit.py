"""Dense linear-algebra primitives and the deterministic splittable RNG.

Everything here operates on plain numpy arrays: real symmetric matrices are
float64 ndarrays of shape (d, d) stored fully symmetrized, complex matrices
are complex128 ndarrays. All matrices in this project are small (<= 64x64),
so dense LAPACK routines are used throughout.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np
import scipy.linalg
from scipy.special import ndtri

from .errors import NotHermitian, NotPositiveDefinite

__all__ = [
    "SplitRng",
    "symmetrize",
    "solve_sym",
    "sherman_morrison_solve",
    "eigh",
]

# Damping escalation ladder: on Cholesky failure retry with 1e-8, 1e-7, ...
# up to 1e-3 (6 attempts), then give up.
_ESCALATION_START = 1e-8
_ESCALATION_STEPS = 6

_MASK64 = (1 << 64) - 1


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Return the exactly symmetric part (a + a.T) / 2 as float64."""
    a = np.asarray(a, dtype=np.float64)
    return (a + a.T) / 2.0


def _cholesky_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a @ x = b for SPD a via Cholesky; raises LinAlgError if not PD."""
    c = np.linalg.cholesky(a)
    y = scipy.linalg.solve_triangular(c, b, lower=True)
    return scipy.linalg.solve_triangular(c.T, y, lower=False)


def solve_sym(m: np.ndarray, b: np.ndarray, damping: float = 0.0) -> np.ndarray:
    """Solve (m + damping*I) x = b for symmetric positive definite m.

    If the Cholesky factorization fails, the damping is escalated through
    1e-8 * 10**k (k = 0..5); only values larger than the requested damping
    are tried. Raises NotPositiveDefinite once the ladder is exhausted.
    """
    m = np.asarray(m, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] != b.shape[0]:
        raise ValueError(f"shape mismatch: m {m.shape}, b {b.shape}")
    eye = np.eye(m.shape[0])
    try:
        return _cholesky_solve(m + damping * eye, b)
    except np.linalg.LinAlgError:
        pass
    esc = _ESCALATION_START
    for _ in range(_ESCALATION_STEPS):
        if esc > damping:
            try:
                return _cholesky_solve(m + esc * eye, b)
            except np.linalg.LinAlgError:
                pass
        esc *= 10.0
    raise NotPositiveDefinite(
        f"matrix not positive definite after damping escalation up to {esc / 10.0:g}"
    )


def sherman_morrison_solve(
    m: np.ndarray,
    v: np.ndarray,
    xi: float,
    b: np.ndarray,
    damping: float = 0.0,
) -> np.ndarray:
    """Solve (m + damping*I + xi v v^T) x = b via two SPD solves.

    Uses the rank-1 correction x = y - xi (v.y) / (1 + xi v.z) * z with
    y = (m + damping*I)^{-1} b and z = (m + damping*I)^{-1} v.
    """
    if xi < 0:
        raise ValueError("xi must be nonnegative")
    y = solve_sym(m, b, damping)
    if xi == 0.0:
        return y
    z = solve_sym(m, v, damping)
    denom = 1.0 + xi * float(v @ z)
    return y - xi * (float(v @ y) / denom) * z


def eigh(h: np.ndarray, herm_tol: float = 1e-12):
    """Eigendecomposition of a Hermitian matrix.

    Returns (eigenvalues ascending, eigenvector matrix with orthonormal
    columns). Raises NotHermitian if max |h - h'| exceeds herm_tol relative
    to the matrix scale.
    """
    h = np.asarray(h)
    dev = np.max(np.abs(h - h.conj().T))
    scale = max(1.0, float(np.max(np.abs(h))))
    if dev > herm_tol * scale:
        raise NotHermitian(f"deviation from Hermiticity {dev:g} exceeds {herm_tol:g}")
    w, u = np.linalg.eigh((h + h.conj().T) / 2.0)
    return w, u


def _path_key(master_seed: int, path: tuple) -> bytes:
    """SHA-256 digest identifying (master_seed, stream_path)."""
    h = hashlib.sha256()
    h.update(b"vqgeo-rng")
    h.update(struct.pack("<Q", master_seed & _MASK64))
    for item in path:
        if isinstance(item, str):
            h.update(b"s" + item.encode("utf-8") + b"\x00")
        else:
            h.update(b"i" + struct.pack("<q", int(item)))
    return h.digest()


class SplitRng:
    """Counter-based deterministic RNG with split-by-path semantics.

    The (master_seed, stream_path) pair is hashed with SHA-256 and the first
    128 bits key a Philox counter-based bit generator, so identical
    constructions are bit-identical and distinct paths give independent
    streams regardless of draw interleaving or thread scheduling.

    Draws use fixed, documented transforms:
      * uniforms: 53-bit, u = next_uint64 >> 11 times 2^-53, in [0, 1)
      * normals:  inverse CDF, z = ndtri(max(u, 2^-54))
    """

    def __init__(self, master_seed: int, path: tuple = ()):
        self.master_seed = int(master_seed)
        self.path = tuple(path)
        digest = _path_key(self.master_seed, self.path)
        key = int.from_bytes(digest[:16], "little")
        self._gen = np.random.Generator(np.random.Philox(key=key))
        # 64-bit identity of this stream, usable as a derived scalar seed.
        self.seed64 = int.from_bytes(digest[16:24], "little")

    def split(self, *items) -> "SplitRng":
        """Child stream at path + items; independent of the parent's draws."""
        return SplitRng(self.master_seed, self.path + items)

    def random(self, size=None) -> np.ndarray:
        return self._gen.random(size)

    def normal(self, size=None):
        u = self._gen.random(size)
        return ndtri(np.maximum(u, 2.0**-54))

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def uniform(self, low: float, high: float, size=None):
        return low + (high - low) * self._gen.random(size)

    def loguniform(self, low: float, high: float, size=None):
        return np.exp(self.uniform(np.log(low), np.log(high), size))

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)
