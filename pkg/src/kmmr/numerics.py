"""Dense symmetric linear algebra and statistical utilities.

Everything here is pure and reentrant.  Random streams are numpy
``Generator`` objects backed by PCG64 (128-bit state); the seed-to-stream
mapping is frozen per package version, and labelled substreams give
independent, reproducible streams to submodules and parallel workers.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, NumericalFailure

__all__ = [
    "SymMatrix",
    "EigenPair",
    "sym_eigen",
    "solve_spd",
    "vec",
    "kron_vec",
    "chi2_quantile_1df",
    "rng_stream",
    "derive_seed",
    "substream",
]


@dataclass(frozen=True)
class SymMatrix:
    """A dense real symmetric matrix, symmetrized on construction.

    The stored ``entries`` are (A + A^T)/2 of the input, so the symmetry
    invariant holds exactly rather than within tolerance.
    """

    entries: np.ndarray

    def __init__(self, entries):
        a = np.asarray(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionError(f"expected a square matrix, got shape {a.shape}")
        object.__setattr__(self, "entries", 0.5 * (a + a.T))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class EigenPair:
    """Full spectrum of a symmetric matrix.

    ``values`` are sorted descending; ``vectors[:, i]`` is the unit
    eigenvector for ``values[i]`` with its first nonzero component positive.
    """

    values: np.ndarray
    vectors: np.ndarray

    @property
    def smallest(self) -> float:
        return float(self.values[-1])

    @property
    def smallest_vector(self) -> np.ndarray:
        return self.vectors[:, -1]


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    # first component with magnitude above noise level is made positive
    out = vectors.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        k = nz[0] if nz.size else int(np.argmax(np.abs(col)))
        if col[k] < 0:
            out[:, j] = -col
    return out


def sym_eigen(m) -> EigenPair:
    """Eigendecomposition of a symmetric matrix.

    Parameters
    ----------
    m : SymMatrix or array_like
        Symmetric matrix; arrays are symmetrized first.

    Returns
    -------
    EigenPair
        Descending eigenvalues with sign-fixed orthonormal eigenvectors.

    Raises
    ------
    NumericalFailure
        If the input is not finite or the eigensolver does not converge.
    """
    a = m.entries if isinstance(m, SymMatrix) else SymMatrix(m).entries
    if not np.all(np.isfinite(a)):
        raise NumericalFailure("matrix has non-finite entries")
    try:
        w, v = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigendecomposition failed: {exc}") from exc
    order = np.argsort(w)[::-1]
    return EigenPair(values=w[order], vectors=_fix_signs(v[:, order]))


def solve_spd(a, b, ridge: float = 0.0) -> np.ndarray:
    """Solve (a + ridge*I) c = b for a symmetric PSD ``a``.

    Uses a spectral solve: eigenvalues below ``1e-14 * max_eigenvalue`` are
    treated as exactly zero, so a singular system returns the
    pseudo-inverse (minimum-norm) solution.

    Raises
    ------
    NumericalFailure
        If ``a`` is indefinite beyond tolerance (smallest eigenvalue below
        ``-1e-8`` relative to the largest).
    """
    if ridge < 0:
        raise DomainError("ridge must be nonnegative")
    b = np.asarray(b, dtype=float)
    eig = sym_eigen(a)
    w = eig.values
    wmax = max(float(w[0]), 0.0)
    if w[-1] < -1e-8 * max(wmax, 1.0):
        raise NumericalFailure(
            f"matrix is indefinite: min eigenvalue {w[-1]:.3e} vs max {wmax:.3e}"
        )
    w = np.clip(w, 0.0, None) + ridge
    cutoff = 1e-14 * float(w[0])  # descending order: w[0] is the largest
    inv = np.zeros_like(w)
    keep = w > cutoff
    inv[keep] = 1.0 / w[keep]
    return eig.vectors @ (inv * (eig.vectors.T @ b))


def vec(m) -> np.ndarray:
    """Row-major vectorization: entry (i, j) of an s x t matrix lands at i*t + j."""
    a = np.asarray(m, dtype=float)
    if a.ndim != 2:
        raise DimensionError(f"vec expects a matrix, got ndim={a.ndim}")
    return a.ravel(order="C").copy()


def kron_vec(u, v) -> np.ndarray:
    """Kronecker product of two equal-length vectors.

    Ordered so that ``kron_vec(u, v) @ vec(M) == u @ M @ v``.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.ndim != 1 or v.ndim != 1 or u.shape != v.shape:
        raise DimensionError(f"kron_vec expects equal-length vectors, got {u.shape}, {v.shape}")
    return np.kron(u, v)


def _chi2_1df_cdf(q: float) -> float:
    # P(N^2 <= q) = erf(sqrt(q/2)) for standard normal N
    return math.erf(math.sqrt(q / 2.0)) if q > 0 else 0.0


def chi2_quantile_1df(p: float) -> float:
    """Quantile of the squared standard normal (chi-square, 1 df).

    Computed by bisection on the erf-based CDF to an interval width of
    1e-10; no special-function inverse is required.

    Raises
    ------
    DomainError
        If ``p`` is outside (0, 1).
    """
    if not 0.0 < p < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {p}")
    lo, hi = 0.0, 1.0
    while _chi2_1df_cdf(hi) < p:
        hi *= 2.0
        if hi > 1e12:
            raise NumericalFailure("quantile bracket exceeded 1e12")
    while hi - lo > 1e-10:
        mid = 0.5 * (lo + hi)
        if _chi2_1df_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


_SEED_MASK = (1 << 63) - 1


def rng_stream(seed: int) -> np.random.Generator:
    """Deterministic random stream for a 64-bit seed (PCG64-backed)."""
    return np.random.Generator(np.random.PCG64(int(seed) & _SEED_MASK))


def derive_seed(seed: int, *labels) -> int:
    """Stable 63-bit seed derived from a base seed and string/int labels.

    Used to hand independent substreams to submodules (data split, CV
    folds, parameter init) and to parallel workers, all reproducible from
    one base seed.
    """
    h = hashlib.sha256()
    h.update(str(int(seed)).encode())
    for lab in labels:
        h.update(b"/")
        h.update(str(lab).encode())
    return int.from_bytes(h.digest()[:8], "little") & _SEED_MASK


def substream(seed: int, *labels) -> np.random.Generator:
    """Random stream for the substream identified by ``labels``."""
    return rng_stream(derive_seed(seed, *labels))
