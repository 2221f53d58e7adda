"""Kernel families, Gram matrices, and data-driven bandwidth baselines.

Three families are supported:

* linear      ``k(z, z') = <z, z'>``                        label ``L``
* polynomial  ``k(z, z') = (<z, z'> + p)^d``                label ``P<d>-<p>``
* gaussian    ``k(z, z') = exp(-||z - z'||^2 / (2 p^2))``   label ``G-<p>``

The Gaussian family is integrally strictly positive definite, so its RKHS
is rich enough to characterize the conditional moment restriction; the
linear and polynomial families are not, which is what makes
under-identification possible for them.  That distinction is documented
here, not computed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, DegenerateSample, DimensionError
from .numerics import SymMatrix

__all__ = [
    "KernelSpec",
    "GramMatrix",
    "CANDIDATE_GRID",
    "candidate_grid",
    "eval_kernel",
    "gram",
    "median_heuristic_bandwidth",
    "silverman_bandwidth",
]

_FAMILIES = ("linear", "polynomial", "gaussian")


def _fmt(x: float) -> str:
    return f"{x:g}"


@dataclass(frozen=True)
class KernelSpec:
    """One candidate instrument space: a kernel family plus hyperparameters."""

    family: str
    degree: Optional[int] = None
    offset: Optional[float] = None
    bandwidth: Optional[float] = None

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ConfigError(f"unknown kernel family {self.family!r}")
        if self.family == "polynomial":
            if self.degree is None or self.degree < 1:
                raise ConfigError("polynomial kernel needs degree >= 1")
            if self.offset is None or self.offset < 0:
                raise ConfigError("polynomial kernel needs offset >= 0")
        if self.family == "gaussian":
            if self.bandwidth is None or self.bandwidth <= 0:
                raise ConfigError("gaussian kernel needs bandwidth > 0")

    @property
    def label(self) -> str:
        """Label under the ``L | P<degree>-<offset> | G-<bandwidth>`` grammar."""
        if self.family == "linear":
            return "L"
        if self.family == "polynomial":
            return f"P{self.degree}-{_fmt(self.offset)}"
        return f"G-{_fmt(self.bandwidth)}"

    @classmethod
    def from_label(cls, label: str) -> "KernelSpec":
        """Parse a label back into a spec; raises ConfigError on bad grammar."""
        s = label.strip()
        if s == "L":
            return cls("linear")
        try:
            if s.startswith("P"):
                head, param = s[1:].split("-", 1)
                return cls("polynomial", degree=int(head), offset=float(param))
            if s.startswith("G-"):
                return cls("gaussian", bandwidth=float(s[2:]))
        except ValueError as exc:
            raise ConfigError(f"cannot parse kernel label {label!r}") from exc
        raise ConfigError(f"cannot parse kernel label {label!r}")


#: Candidate grid used throughout the experiments.
CANDIDATE_GRID = (
    "L",
    "P2-1",
    "P2-2",
    "P4-1",
    "P4-2",
    "G-2",
    "G-1",
    "G-0.5",
    "G-0.2",
    "G-0.1",
)


def candidate_grid(labels=CANDIDATE_GRID) -> list[KernelSpec]:
    return [KernelSpec.from_label(lab) for lab in labels]


@dataclass(frozen=True)
class GramMatrix:
    """Kernel matrix of one sample under one KernelSpec."""

    matrix: SymMatrix
    spec: KernelSpec
    sample_id: str = field(default="")

    @property
    def entries(self) -> np.ndarray:
        return self.matrix.entries

    @property
    def dim(self) -> int:
        return self.matrix.dim


def _as_points(z) -> np.ndarray:
    a = np.asarray(z, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1)
    return a


def eval_kernel(spec: KernelSpec, z, z2) -> float:
    """Evaluate the kernel on a single pair of points.

    Points may be scalars or d-vectors; ``z z'`` means the Euclidean inner
    product when d > 1.
    """
    a, b = _as_points(z), _as_points(z2)
    if a.shape != b.shape:
        raise DimensionError(f"point dimensions differ: {a.shape} vs {b.shape}")
    if spec.family == "linear":
        return float(a @ b)
    if spec.family == "polynomial":
        return float((a @ b + spec.offset) ** spec.degree)
    d2 = float(np.sum((a - b) ** 2))
    return float(np.exp(-d2 / (2.0 * spec.bandwidth**2)))


def _as_sample(Z) -> np.ndarray:
    a = np.asarray(Z, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise DimensionError(f"sample must be n x d, got shape {a.shape}")
    return a


def gram(spec: KernelSpec, Z, sample_id: str = "") -> GramMatrix:
    """Gram matrix K with K[i, j] = k(z_i, z_j), symmetrized.

    The Gaussian diagonal is set to exactly 1.
    """
    pts = _as_sample(Z)
    ip = pts @ pts.T
    if spec.family == "linear":
        K = ip
    elif spec.family == "polynomial":
        K = (ip + spec.offset) ** spec.degree
    else:
        sq = np.sum(pts**2, axis=1)
        d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * ip, 0.0)
        K = np.exp(-d2 / (2.0 * spec.bandwidth**2))
        np.fill_diagonal(K, 1.0)
    return GramMatrix(matrix=SymMatrix(K), spec=spec, sample_id=sample_id)


def _pairwise_distances(pts: np.ndarray) -> np.ndarray:
    sq = np.sum(pts**2, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * pts @ pts.T, 0.0)
    iu = np.triu_indices(pts.shape[0], k=1)
    return np.sqrt(d2[iu])


def median_heuristic_bandwidth(Z) -> float:
    """Median of the n(n-1)/2 pairwise Euclidean distances (strict pairs i < j)."""
    pts = _as_sample(Z)
    if pts.shape[0] < 2:
        raise DegenerateSample("need at least two points")
    med = float(np.median(_pairwise_distances(pts)))
    if med <= 0.0:
        raise DegenerateSample("median pairwise distance is zero")
    return med


def silverman_bandwidth(Z) -> float:
    """Silverman's rule-of-thumb bandwidth.

    d = 1 uses 1.06 * sigma * n^(-1/5) with the sample standard deviation
    (denominator n - 1).  For d > 1 the standard multivariate
    rule-of-thumb ``(4/(d+2))^(1/(d+4)) * n^(-1/(d+4)) * sigma_bar`` is
    used, with sigma_bar the mean per-coordinate standard deviation.
    """
    pts = _as_sample(Z)
    n, d = pts.shape
    if n < 2:
        raise DegenerateSample("need at least two points")
    stds = np.std(pts, axis=0, ddof=1)
    if np.all(stds == 0.0):
        raise DegenerateSample("sample has zero variance")
    if d == 1:
        return float(1.06 * stds[0] * n ** (-1.0 / 5.0))
    sbar = float(np.mean(stds))
    return float((4.0 / (d + 2)) ** (1.0 / (d + 4)) * n ** (-1.0 / (d + 4)) * sbar)
