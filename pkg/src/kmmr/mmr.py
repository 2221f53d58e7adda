"""Empirical KMMR risk and model fitting.

The empirical risk is the V-statistic

    R(theta) = (1/n^2) * r^T K r,      r_i = y_i - f(x_i; theta),

which includes the i = j diagonal terms.  Linear-in-parameter models have
the closed-form minimizer of the induced quadratic; MLPs are fitted by
full-batch Adam with early stopping on a validation risk.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .datagen import Dataset
from .errors import ConfigError, NumericalFailure
from .kernels import GramMatrix, KernelSpec, gram
from .models import MlpModel, PolyModel, basis_matrix, residual_grad_matrix
from .numerics import solve_spd, sym_eigen

__all__ = [
    "MmrProblem",
    "FitResult",
    "FitOptions",
    "empirical_risk",
    "risk_gradient",
    "fit_linear",
    "fit_gradient",
]


@dataclass
class MmrProblem:
    """A dataset, an instrument space, and a model, with the Gram precomputed."""

    dataset: Dataset
    kernel: KernelSpec
    model: object
    gram: Optional[GramMatrix] = None

    def __post_init__(self):
        if self.gram is None:
            self.gram = gram(self.kernel, self.dataset.z)
        if self.gram.dim != self.dataset.n:
            raise ConfigError(
                f"gram dimension {self.gram.dim} != dataset size {self.dataset.n}"
            )

    @property
    def K(self) -> np.ndarray:
        return self.gram.entries


@dataclass(frozen=True)
class FitResult:
    """Fitted parameters with the achieved risk and solver diagnostics."""

    theta: np.ndarray
    risk_value: float
    iterations: int = 0
    grad_norm: float = 0.0
    ridge: float = 0.0
    best_iteration: int = 0


@dataclass(frozen=True)
class FitOptions:
    """Adam settings for gradient fitting (fixed defaults, documented)."""

    step: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_iter: int = 2000
    patience: int = 50


def _risk_of_residual(K: np.ndarray, r: np.ndarray) -> float:
    n = r.shape[0]
    return float(r @ (K @ r)) / (n * n)


def empirical_risk(problem: MmrProblem, theta) -> float:
    """V-statistic risk (1/n^2) r^T K r at the given parameters."""
    model = problem.model.with_params(theta)
    r = problem.dataset.y - model.predict(problem.dataset.x)
    return _risk_of_residual(problem.K, r)


def risk_gradient(problem: MmrProblem, theta, mask: str = "full") -> np.ndarray:
    """Analytic gradient (2/n^2) J^T K r with J the rows of grad_theta phi."""
    model = problem.model.with_params(theta)
    r = problem.dataset.y - model.predict(problem.dataset.x)
    J = residual_grad_matrix(model, problem.dataset.x, mask)
    n = problem.dataset.n
    return (2.0 / (n * n)) * (J.T @ (problem.K @ r))


def fit_linear(problem: MmrProblem) -> FitResult:
    """Closed-form minimizer for PolyModel: solve (Phi^T K Phi) c = Phi^T K y.

    The normal system is assembled in a column-equilibrated basis for
    conditioning.  When it is numerically singular (smallest eigenvalue
    below 1e-12 of the largest) a ridge of 1e-10 * trace / (m+1) is added
    and the spectral solve returns a minimum-norm-like solution.
    """
    if not isinstance(problem.model, PolyModel):
        raise ConfigError("fit_linear requires a PolyModel")
    ds = problem.dataset
    Phi = basis_matrix(problem.model, ds.x)
    scale = np.linalg.norm(Phi, axis=0)
    scale[scale == 0.0] = 1.0
    P = Phi / scale
    KP = problem.K @ P
    A = P.T @ KP
    b = KP.T @ ds.y
    w = sym_eigen(A).values
    ridge = 0.0
    if w[-1] < 1e-12 * max(w[0], 0.0):
        ridge = 1e-10 * float(np.trace(A)) / A.shape[0]
    theta = solve_spd(A, b, ridge=ridge) / scale
    risk = empirical_risk(problem, theta)
    gnorm = float(np.linalg.norm(risk_gradient(problem, theta)))
    return FitResult(theta=theta, risk_value=risk, grad_norm=gnorm, ridge=ridge)


def fit_gradient(
    problem: MmrProblem,
    valid: Dataset,
    opts: FitOptions = FitOptions(),
) -> FitResult:
    """Full-batch Adam on the empirical risk with validation early stopping.

    Stops after ``opts.patience`` consecutive iterations without a new best
    validation risk (same kernel, validation Gram) and returns the
    best-validation parameters.
    """
    if not isinstance(problem.model, MlpModel):
        raise ConfigError("fit_gradient requires an MlpModel")
    ds = problem.dataset
    K = problem.K
    Kv = gram(problem.kernel, valid.z).entries
    n, nv = ds.n, valid.n

    model = problem.model
    theta = model.get_params()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    best_theta = theta.copy()
    best_val = np.inf
    best_iter = 0
    stale = 0
    t = 0
    for t in range(1, opts.max_iter + 1):
        model = problem.model.with_params(theta)
        r = ds.y - model.predict(ds.x)
        J = residual_grad_matrix(model, ds.x)
        g = (2.0 / (n * n)) * (J.T @ (K @ r))
        if not np.all(np.isfinite(g)):
            raise NumericalFailure(
                f"non-finite gradient at iteration {t} (kernel {problem.kernel.label})"
            )
        m = opts.beta1 * m + (1.0 - opts.beta1) * g
        v = opts.beta2 * v + (1.0 - opts.beta2) * g * g
        mhat = m / (1.0 - opts.beta1**t)
        vhat = v / (1.0 - opts.beta2**t)
        theta = theta - opts.step * mhat / (np.sqrt(vhat) + opts.eps)

        model = problem.model.with_params(theta)
        rv = valid.y - model.predict(valid.x)
        val = float(rv @ (Kv @ rv)) / (nv * nv)
        if not np.isfinite(val):
            raise NumericalFailure(
                f"non-finite validation risk at iteration {t} (kernel {problem.kernel.label})"
            )
        if val < best_val:
            best_val = val
            best_theta = theta.copy()
            best_iter = t
            stale = 0
        else:
            stale += 1
            if stale >= opts.patience:
                break

    risk = empirical_risk(problem, best_theta)
    gnorm = float(np.linalg.norm(risk_gradient(problem, best_theta)))
    return FitResult(
        theta=best_theta,
        risk_value=risk,
        iterations=t,
        grad_norm=gnorm,
        best_iteration=best_iter,
    )
