"""Kernel effective information criterion.

KEIC = n * R_cv + E_hat * log(n), where R_cv is a two-fold
cross-validated empirical risk and E_hat = Tr(K) / sqrt(Tr(K^2)) is the
empirical effective dimension of the instrument space on the full
sample.  Lower is better; the risk term screens out spaces whose moment
conditions the model cannot satisfy, and the penalty orders the valid
ones by complexity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .datagen import Dataset
from .errors import ConfigError, DegenerateKernel
from .kernels import GramMatrix, KernelSpec, gram
from .mmr import FitOptions, MmrProblem, empirical_risk, fit_gradient, fit_linear
from .models import ModelConfig
from .numerics import substream

__all__ = ["KeicReport", "effective_dimension", "cv_risk", "keic"]


@dataclass(frozen=True)
class KeicReport:
    """Criterion value with its two ingredients."""

    risk_cv: float
    eff_dim: float
    keic_value: float
    n: int

    def to_dict(self) -> dict:
        return {
            "risk_cv": self.risk_cv,
            "eff_dim": self.eff_dim,
            "keic": self.keic_value,
            "n": self.n,
        }


def effective_dimension(gram_matrix: GramMatrix) -> float:
    """Tr(K) / sqrt(Tr(K^2)); Tr(K^2) is the squared Frobenius sum (symmetry)."""
    K = gram_matrix.entries
    frob2 = float(np.sum(K * K))
    if frob2 <= 0.0:
        raise DegenerateKernel("kernel matrix is identically zero")
    return float(np.trace(K)) / math.sqrt(frob2)


def _fit_theta(
    train: Dataset,
    kernel: KernelSpec,
    template: ModelConfig,
    valid: Optional[Dataset],
    init_seed: int,
    opts: FitOptions,
) -> np.ndarray:
    if template.is_mlp:
        if valid is None:
            raise ConfigError("MLP fitting needs a validation dataset")
        model = template.build(substream(init_seed, "mlp-init"))
        problem = MmrProblem(dataset=train, kernel=kernel, model=model)
        return fit_gradient(problem, valid, opts).theta
    problem = MmrProblem(dataset=train, kernel=kernel, model=template.build())
    return fit_linear(problem).theta


def cv_risk(
    dataset: Dataset,
    kernel: KernelSpec,
    template: ModelConfig,
    fold_seed: int,
    valid: Optional[Dataset] = None,
    opts: FitOptions = FitOptions(),
) -> float:
    """Two-fold cross-validated risk: fit on one fold, evaluate on the other.

    The held-out risk uses the held-out fold's own Gram.  MLP folds early
    stop on the separate validation split (disjoint from both folds).
    """
    n = dataset.n
    if n < 4:
        raise ConfigError("cv_risk needs at least 4 samples")
    perm = substream(fold_seed, "cv-folds").permutation(n)
    folds = (np.sort(perm[: n // 2]), np.sort(perm[n // 2 :]))
    risks = []
    for held_out in (1, 0):
        fit_idx, eval_idx = folds[1 - held_out], folds[held_out]
        theta = _fit_theta(
            dataset.subset(fit_idx), kernel, template, valid, fold_seed, opts
        )
        eval_model = (
            template.build(substream(fold_seed, "mlp-init"))
            if template.is_mlp
            else template.build()
        )
        problem = MmrProblem(dataset=dataset.subset(eval_idx), kernel=kernel, model=eval_model)
        risks.append(empirical_risk(problem, theta))
    return float(np.mean(risks))


def keic(
    dataset: Dataset,
    kernel: KernelSpec,
    template: ModelConfig,
    fold_seed: int,
    valid: Optional[Dataset] = None,
    opts: FitOptions = FitOptions(),
) -> KeicReport:
    """Assemble n * cv_risk + effective_dimension * ln(n) on the full sample."""
    risk = cv_risk(dataset, kernel, template, fold_seed, valid, opts)
    eff = effective_dimension(gram(kernel, dataset.z))
    n = dataset.n
    return KeicReport(
        risk_cv=risk, eff_dim=eff, keic_value=n * risk + eff * math.log(n), n=n
    )
