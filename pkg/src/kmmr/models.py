"""Parametric residual models: polynomial-basis linear models and small MLPs.

The residual is ``phi_theta(x, y) = y - f(x; theta)``, so its parameter
gradient is ``-grad f``.  Polynomial gradients are the (negated) basis
row; MLP gradients come from manual backpropagation.  The
``output_layer`` mask restricts an MLP gradient to the final affine
layer, treating the hidden stack as fixed basis functions.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Optional

import numpy as np

from .errors import ConfigError, DimensionError

__all__ = [
    "PolyModel",
    "MlpModel",
    "ModelConfig",
    "parse_model_config",
    "residual",
    "residual_grad",
    "residual_grad_matrix",
    "basis_matrix",
]

FULL = "full"
OUTPUT_LAYER = "output_layer"


def _sigmoid(t: np.ndarray) -> np.ndarray:
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass(frozen=True)
class PolyModel:
    """f(x) = sum_i coef[i] * x^i with parameter vector coef of length degree+1."""

    degree: int
    coef: np.ndarray

    @classmethod
    def zeros(cls, degree: int) -> "PolyModel":
        return cls(degree=degree, coef=np.zeros(degree + 1))

    @property
    def n_params(self) -> int:
        return self.degree + 1

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return basis_matrix(self, x) @ self.coef

    def get_params(self) -> np.ndarray:
        return self.coef.copy()

    def with_params(self, theta) -> "PolyModel":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.degree + 1,):
            raise DimensionError(
                f"expected {self.degree + 1} parameters, got shape {theta.shape}"
            )
        return replace(self, coef=theta.copy())


class MlpModel:
    """Feedforward network with sigmoid hidden layers and an affine output.

    ``widths`` lists layer sizes input-to-output, e.g. [1, 10, 1] or
    [1, 5, 5, 1].  Parameters flatten layer by layer as (W row-major, b).
    """

    def __init__(self, widths: List[int], weights, biases):
        if len(widths) < 2 or widths[-1] != 1:
            raise ConfigError(f"widths must end in a scalar output, got {widths}")
        self.widths = list(widths)
        self.weights = [np.asarray(W, dtype=float) for W in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]

    @classmethod
    def init(cls, widths: List[int], rng: Optional[np.random.Generator] = None) -> "MlpModel":
        """Fresh network: weights uniform on +-sqrt(6/(fan_in+fan_out)), biases zero."""
        rng = rng if rng is not None else np.random.default_rng(0)
        weights, biases = [], []
        for fi, fo in zip(widths[:-1], widths[1:]):
            a = np.sqrt(6.0 / (fi + fo))
            weights.append(rng.uniform(-a, a, size=(fo, fi)))
            biases.append(np.zeros(fo))
        return cls(widths, weights, biases)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    @property
    def hidden_width(self) -> int:
        return self.widths[-2]

    def _forward(self, x: np.ndarray) -> List[np.ndarray]:
        a = np.atleast_1d(np.asarray(x, dtype=float))
        if a.ndim == 1:
            a = a[:, None]
        acts = [a]
        for layer, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = acts[-1] @ W.T + b
            acts.append(z if layer == self.n_layers - 1 else _sigmoid(z))
        return acts

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self._forward(x)[-1][:, 0]

    def hidden_features(self, x) -> np.ndarray:
        """Activations of the last hidden layer, shape (n, hidden_width)."""
        x = np.asarray(x, dtype=float)
        return self._forward(x)[-2]

    def get_params(self) -> np.ndarray:
        parts = []
        for W, b in zip(self.weights, self.biases):
            parts.append(W.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def with_params(self, theta) -> "MlpModel":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise DimensionError(f"expected {self.n_params} parameters, got {theta.shape}")
        weights, biases, i = [], [], 0
        for W, b in zip(self.weights, self.biases):
            weights.append(theta[i : i + W.size].reshape(W.shape).copy())
            i += W.size
            biases.append(theta[i : i + b.size].copy())
            i += b.size
        return MlpModel(self.widths, weights, biases)

    def grad_matrix(self, x) -> np.ndarray:
        """Per-sample gradient of f(x) w.r.t. all parameters, shape (n, n_params).

        Backpropagates the scalar output through the sigmoid stack; row i
        is the gradient at sample i, laid out like ``get_params``.
        """
        x = np.asarray(x, dtype=float)
        acts = self._forward(x)
        n = acts[0].shape[0]
        L = self.n_layers
        deltas = [None] * L
        deltas[L - 1] = np.ones((n, 1))
        for layer in range(L - 2, -1, -1):
            a = acts[layer + 1]  # sigmoid output of this layer
            deltas[layer] = (deltas[layer + 1] @ self.weights[layer + 1]) * a * (1.0 - a)
        parts = []
        for layer in range(L):
            gw = np.einsum("ni,nj->nij", deltas[layer], acts[layer])
            parts.append(gw.reshape(n, -1))
            parts.append(deltas[layer])
        return np.hstack(parts)

    def output_grad_matrix(self, x) -> np.ndarray:
        """Gradient restricted to the output layer: rows (Phi(x), 1)."""
        x = np.asarray(x, dtype=float)
        phi = self.hidden_features(x)
        return np.hstack([phi, np.ones((phi.shape[0], 1))])


def basis_matrix(model: PolyModel, X) -> np.ndarray:
    """Design matrix with row i = (1, x_i, ..., x_i^degree)."""
    x = np.atleast_1d(np.asarray(X, dtype=float))
    return np.vander(x, N=model.degree + 1, increasing=True)


def residual(model, x, y):
    """phi_theta(x, y) = y - f(x; theta); vectorizes over samples."""
    scalar = np.asarray(y).ndim == 0
    out = np.asarray(y, dtype=float) - model.predict(x)
    return float(out[0]) if scalar else out


def residual_grad_matrix(model, x, mask: str = FULL) -> np.ndarray:
    """Rows grad_theta phi = -grad_theta f(x_i), shape (n, c).

    ``mask`` selects the full parameter vector or, for MLPs, only the
    output layer (length hidden_width + 1).
    """
    if isinstance(model, PolyModel):
        if mask != FULL:
            raise ConfigError("polynomial models support only the full mask")
        return -basis_matrix(model, x)
    if mask == FULL:
        return -model.grad_matrix(x)
    if mask == OUTPUT_LAYER:
        return -model.output_grad_matrix(x)
    raise ConfigError(f"unknown gradient mask {mask!r}")


def residual_grad(model, x, y, mask: str = FULL) -> np.ndarray:
    """Gradient of the residual at a single sample (y does not enter)."""
    return residual_grad_matrix(model, np.atleast_1d(np.asarray(x, dtype=float)), mask)[0]


@dataclass(frozen=True)
class ModelConfig:
    """Model template parsed from a config string like ``poly:4`` or ``mlp:5,5``."""

    kind: str
    degree: Optional[int] = None
    hidden: Optional[tuple] = None

    @property
    def is_mlp(self) -> bool:
        return self.kind == "mlp"

    def build(self, rng: Optional[np.random.Generator] = None):
        if self.kind == "poly":
            return PolyModel.zeros(self.degree)
        return MlpModel.init([1, *self.hidden, 1], rng)

    @property
    def text(self) -> str:
        if self.kind == "poly":
            return f"poly:{self.degree}"
        return "mlp:" + ",".join(str(w) for w in self.hidden)


def parse_model_config(text: str) -> ModelConfig:
    """Parse ``poly:<degree>`` or ``mlp:<w1>[,<w2>...]``."""
    try:
        kind, arg = text.strip().split(":", 1)
        if kind == "poly":
            degree = int(arg)
            if degree < 0:
                raise ValueError
            return ModelConfig(kind="poly", degree=degree)
        if kind == "mlp":
            hidden = tuple(int(w) for w in arg.split(","))
            if not hidden or any(w < 1 for w in hidden):
                raise ValueError
            return ModelConfig(kind="mlp", hidden=hidden)
    except ValueError as exc:
        raise ConfigError(f"cannot parse model config {text!r}") from exc
    raise ConfigError(f"cannot parse model config {text!r}")
