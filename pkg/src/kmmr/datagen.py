"""Simulated IV data for the LS / LW / NS scenarios.

The structural process is::

    Z ~ Uniform[-3, 3]^d
    X = mean_i g(Z_i) + e + gamma        g = identity (LS, LW), sin (NS)
    Y = f*(X) + e + delta

with e ~ N(0, 1) shared between both equations (the confounder) and
gamma, delta ~ N(0, 0.1^2).  Y is standardized to zero mean / unit
variance using constants from the training split, which every split
carries for later de-standardization.

Draws are consumed in the fixed order (Z_i, e_i, gamma_i, delta_i) within
each sample so that a seed pins the dataset bit-for-bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from .errors import ConfigError
from .numerics import rng_stream

__all__ = [
    "TRUE_FUNCTIONS",
    "true_function_value",
    "ScenarioSpec",
    "Dataset",
    "generate",
    "render_dataset_csv",
    "render_metadata",
    "write_dataset_csv",
    "write_metadata",
]

TRUE_FUNCTIONS = {
    "linear": lambda x: x,
    "quad": lambda x: x**2 + x,
    "abs": np.abs,
    "sin": np.sin,
}

_SCENARIOS = ("LS", "LW", "NS")


def true_function_value(name: str, x):
    """Evaluate a named ground-truth function; unknown names raise ConfigError."""
    try:
        f = TRUE_FUNCTIONS[name]
    except KeyError:
        raise ConfigError(f"unknown true function {name!r}") from None
    return f(np.asarray(x, dtype=float)) if np.ndim(x) else float(f(float(x)))


@dataclass(frozen=True)
class ScenarioSpec:
    """One data-generation setting.

    LS and NS are one-dimensional; LW averages d weak instruments
    (default 6, configurable for the network experiments).
    """

    scenario: str
    true_function: str
    n: int
    seed: int
    d: Optional[int] = None

    def __post_init__(self):
        if self.scenario not in _SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.true_function not in TRUE_FUNCTIONS:
            raise ConfigError(f"unknown true function {self.true_function!r}")
        if self.n < 1:
            raise ConfigError("n must be positive")
        d = self.d
        if d is None:
            d = 1 if self.scenario in ("LS", "NS") else 6
            object.__setattr__(self, "d", d)
        if self.scenario in ("LS", "NS") and d != 1:
            raise ConfigError(f"scenario {self.scenario} requires d=1, got d={d}")
        if d < 1:
            raise ConfigError("d must be positive")


@dataclass(frozen=True)
class Dataset:
    """Aligned sample (x_i, y_i, z_i) with Y-standardization metadata."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    y_mean: float
    y_std: float
    split: str

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.z.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return replace(self, x=self.x[idx], y=self.y[idx], z=self.z[idx])

    def destandardize(self, y_standardized):
        return np.asarray(y_standardized) * self.y_std + self.y_mean


def _draw_split(spec: ScenarioSpec, rng, e_sd, gamma_sd, delta_sd):
    n, d = spec.n, spec.d
    g = np.sin if spec.scenario == "NS" else (lambda v: v)
    f_star = TRUE_FUNCTIONS[spec.true_function]
    x = np.empty(n)
    y_raw = np.empty(n)
    z = np.empty((n, d))
    for i in range(n):
        z[i] = rng.uniform(-3.0, 3.0, size=d)
        e = e_sd * rng.standard_normal()
        gam = gamma_sd * rng.standard_normal()
        dlt = delta_sd * rng.standard_normal()
        x[i] = float(np.mean(g(z[i]))) + e + gam
        y_raw[i] = float(f_star(x[i])) + e + dlt
    return x, y_raw, z


def generate(
    spec: ScenarioSpec,
    e_sd: float = 1.0,
    gamma_sd: float = 0.1,
    delta_sd: float = 0.1,
) -> Tuple[Dataset, Dataset, Dataset]:
    """Draw independent train/valid/test splits of size n each.

    Standardization constants come from the training split and are applied
    to all three.  The noise scales exist as a test hook: setting them to
    zero leaves Y_raw = f*(X) exactly while consuming the same number of
    draws, so the Z sample is unchanged.
    """
    rng = rng_stream(spec.seed)
    raw = [_draw_split(spec, rng, e_sd, gamma_sd, delta_sd) for _ in range(3)]
    y_train = raw[0][1]
    y_mean = float(np.mean(y_train))
    y_std = float(np.std(y_train))
    if y_std == 0.0:
        y_std = 1.0  # constant Y: leave values centered only
    out = []
    for (x, y_raw, z), split in zip(raw, ("train", "valid", "test")):
        out.append(
            Dataset(
                x=x,
                y=(y_raw - y_mean) / y_std,
                z=z,
                y_mean=y_mean,
                y_std=y_std,
                split=split,
            )
        )
    return tuple(out)


def render_dataset_csv(ds: Dataset) -> str:
    """CSV text for one split with header ``x,y,z1..zd,split`` (full-precision floats)."""
    cols = ["x", "y"] + [f"z{j + 1}" for j in range(ds.d)] + ["split"]
    lines = [",".join(cols)]
    for i in range(ds.n):
        vals = [repr(float(ds.x[i])), repr(float(ds.y[i]))]
        vals += [repr(float(v)) for v in ds.z[i]]
        vals.append(ds.split)
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


def render_metadata(spec: ScenarioSpec, train: Dataset) -> str:
    """Sidecar JSON with the seed and standardization constants."""
    meta = {
        "scenario": spec.scenario,
        "true_function": spec.true_function,
        "n": spec.n,
        "d": spec.d,
        "seed": spec.seed,
        "y_mean": train.y_mean,
        "y_std": train.y_std,
    }
    return json.dumps(meta, indent=2, sort_keys=True) + "\n"


def write_dataset_csv(ds: Dataset, path) -> None:
    Path(path).write_text(render_dataset_csv(ds), encoding="utf-8", newline="\n")


def write_metadata(spec: ScenarioSpec, train: Dataset, path) -> None:
    Path(path).write_text(render_metadata(spec, train), encoding="utf-8", newline="\n")
