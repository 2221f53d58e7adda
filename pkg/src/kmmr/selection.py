"""Instrument-space selection: two-step rule, ratio fallback, and baselines.

Two-step: keep the candidates the rank test declares identifiable, then
take the one with the least KEIC.  If nothing is identifiable, minimize
the ratio KEIC / ITC instead, excluding candidates whose variance
estimate degenerated (their criterion is 0, so the ratio is undefined).
If every candidate is excluded, fall back to plain min-KEIC and record a
warning on the result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .datagen import Dataset, true_function_value
from .errors import ConfigError
from .itc import ItcReport, itc
from .keic import KeicReport, keic
from .kernels import KernelSpec, median_heuristic_bandwidth, silverman_bandwidth
from .mmr import FitOptions, FitResult, MmrProblem, fit_gradient, fit_linear
from .models import ModelConfig
from .numerics import derive_seed, substream

__all__ = [
    "SelectionSeeds",
    "CandidateRecord",
    "SelectionResult",
    "decide_from_table",
    "candidate_table_csv",
    "lisc_select",
    "baseline_select",
    "evaluate_mse",
]

TWO_STEP = "two_step"
RATIO = "ratio"
BASELINE_MEDIAN = "baseline_median"
BASELINE_SILVERMAN = "baseline_silverman"


@dataclass(frozen=True)
class SelectionSeeds:
    """Labelled substream seeds, all derived from one base seed."""

    base: int

    @property
    def split(self) -> int:
        return derive_seed(self.base, "split")

    @property
    def folds(self) -> int:
        return derive_seed(self.base, "folds")

    @property
    def init(self) -> int:
        return derive_seed(self.base, "init")


@dataclass(frozen=True)
class CandidateRecord:
    """One row of the per-candidate table (baselines carry no criteria)."""

    kernel: KernelSpec
    fit: FitResult
    itc_report: Optional[ItcReport] = None
    keic_report: Optional[KeicReport] = None

    @property
    def label(self) -> str:
        return self.kernel.label

    @property
    def ratio(self) -> float:
        if self.itc_report is None or self.keic_report is None:
            return math.inf
        if self.itc_report.degenerate or self.itc_report.itc_value <= 0.0:
            return math.inf
        return self.keic_report.keic_value / self.itc_report.itc_value

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "itc": self.itc_report.to_dict() if self.itc_report else None,
            "keic": self.keic_report.to_dict() if self.keic_report else None,
            "ratio": self.ratio if math.isfinite(self.ratio) else None,
        }


@dataclass
class SelectionResult:
    """Chosen instrument space with the full decision table."""

    chosen: KernelSpec
    path: str
    candidates: List[CandidateRecord]
    model: object
    theta: np.ndarray
    alpha: float
    seeds: Optional[SelectionSeeds] = None
    warning: str = ""

    def predict(self, x) -> np.ndarray:
        return self.model.with_params(self.theta).predict(x)

    def to_dict(self) -> dict:
        return {
            "chosen": self.chosen.label,
            "path": self.path,
            "alpha": self.alpha,
            "warning": self.warning,
            "candidates": [rec.to_dict() for rec in self.candidates],
        }


def _fit_candidate(
    dataset: Dataset,
    kernel: KernelSpec,
    template: ModelConfig,
    seeds: SelectionSeeds,
    valid: Optional[Dataset],
    opts: FitOptions,
):
    if template.is_mlp:
        if valid is None:
            raise ConfigError("MLP selection needs a validation dataset")
        model = template.build(substream(seeds.init, "mlp-init"))
        problem = MmrProblem(dataset=dataset, kernel=kernel, model=model)
        return model, fit_gradient(problem, valid, opts)
    model = template.build()
    problem = MmrProblem(dataset=dataset, kernel=kernel, model=model)
    return model, fit_linear(problem)


def decide_from_table(records: List[CandidateRecord]):
    """Apply the selection rule to a finished candidate table.

    Returns (index, path, warning).  Two-step fires when any candidate is
    identifiable; otherwise the finite KEIC/ITC ratios compete, and if
    none is finite the least KEIC wins with a warning.
    """
    identifiable = [i for i, rec in enumerate(records) if rec.itc_report.identifiable]
    if identifiable:
        best = min(identifiable, key=lambda i: records[i].keic_report.keic_value)
        return best, TWO_STEP, ""
    finite = [i for i, rec in enumerate(records) if math.isfinite(rec.ratio)]
    if finite:
        best = min(finite, key=lambda i: records[i].ratio)
        return best, RATIO, ""
    best = min(range(len(records)), key=lambda i: records[i].keic_report.keic_value)
    return best, RATIO, "all candidates had degenerate or zero ITC; fell back to min KEIC"


def lisc_select(
    dataset: Dataset,
    candidates: List[KernelSpec],
    template: ModelConfig,
    alpha: float = 0.05,
    seeds: SelectionSeeds = SelectionSeeds(527),
    valid: Optional[Dataset] = None,
    opts: FitOptions = FitOptions(),
    itc_mask: Optional[str] = None,
) -> SelectionResult:
    """Fit every candidate, run both criteria, and apply the selection rule.

    MLP models use the output-layer gradient mask in the rank test by
    default (set ``itc_mask='full'`` to override on small networks).
    Ties break by candidate order.
    """
    if not candidates:
        raise ConfigError("need at least one candidate instrument space")
    mask = itc_mask if itc_mask is not None else ("output_layer" if template.is_mlp else "full")

    records: List[CandidateRecord] = []
    models = []
    for kernel in candidates:
        model, fit = _fit_candidate(dataset, kernel, template, seeds, valid, opts)
        report = itc(
            dataset, kernel, model, fit.theta, alpha=alpha, split_seed=seeds.split, mask=mask
        )
        keic_report = keic(dataset, kernel, template, seeds.folds, valid=valid, opts=opts)
        records.append(
            CandidateRecord(kernel=kernel, fit=fit, itc_report=report, keic_report=keic_report)
        )
        models.append(model)

    best, path, warning = decide_from_table(records)
    return SelectionResult(
        chosen=records[best].kernel,
        path=path,
        candidates=records,
        model=models[best],
        theta=records[best].fit.theta,
        alpha=alpha,
        seeds=seeds,
        warning=warning,
    )


def baseline_select(
    dataset: Dataset,
    rule: str,
    template: ModelConfig,
    seeds: SelectionSeeds = SelectionSeeds(527),
    valid: Optional[Dataset] = None,
    opts: FitOptions = FitOptions(),
) -> SelectionResult:
    """Gaussian-kernel baseline with a data-driven bandwidth (median or silverman)."""
    if rule == "median":
        bandwidth = median_heuristic_bandwidth(dataset.z)
        path = BASELINE_MEDIAN
    elif rule == "silverman":
        bandwidth = silverman_bandwidth(dataset.z)
        path = BASELINE_SILVERMAN
    else:
        raise ConfigError(f"unknown baseline rule {rule!r}")
    kernel = KernelSpec("gaussian", bandwidth=bandwidth)
    model, fit = _fit_candidate(dataset, kernel, template, seeds, valid, opts)
    return SelectionResult(
        chosen=kernel,
        path=path,
        candidates=[CandidateRecord(kernel=kernel, fit=fit)],
        model=model,
        theta=fit.theta,
        alpha=0.0,
        seeds=seeds,
    )


def evaluate_mse(result: SelectionResult, test: Dataset, true_function: str) -> float:
    """Mean squared error of the de-standardized fit against f* on the test X."""
    pred = test.destandardize(result.predict(test.x))
    truth = true_function_value(true_function, test.x)
    return float(np.mean((pred - truth) ** 2))


def candidate_table_csv(result: SelectionResult) -> str:
    """Per-candidate table as CSV: label,itc,identifiable,keic,ratio,chosen."""
    lines = ["label,itc,identifiable,keic,ratio,chosen"]
    for rec in result.candidates:
        itc_v = rec.itc_report.itc_value if rec.itc_report else ""
        ident = rec.itc_report.identifiable if rec.itc_report else ""
        keic_v = rec.keic_report.keic_value if rec.keic_report else ""
        ratio = rec.ratio if math.isfinite(rec.ratio) else ""
        chosen = rec.kernel == result.chosen
        lines.append(f"{rec.label},{itc_v},{ident},{keic_v},{ratio},{chosen}")
    return "\n".join(lines) + "\n"
