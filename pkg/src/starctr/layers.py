"""Dense and embedding layers with hand-written forward/backward passes.

Layers cache the tensors their backward pass needs in a single slot: by
construction every layer instance runs at most once per model pass, so a
forward overwrites the slot and the matching backward consumes it.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError, DimensionError, LookupIndexError, StateError
from .params import Matrix, Param, ParamStore

ACTIVATIONS = ("relu", "identity")


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax_rows(z: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-shift stabilization."""
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


class DenseLayer:
    """Affine map plus activation: out = phi(x @ W + b).

    ``weight`` is (in_dim, out_dim), ``bias`` is (1, out_dim).  Gradients
    accumulate into the params; the returned gradient is w.r.t. the input.
    """

    def __init__(self, weight: Param, bias: Param, activation: str = "relu") -> None:
        if activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {activation!r}")
        if bias.shape != (1, weight.shape[1]):
            raise ConfigError(
                f"bias shape {bias.shape} does not match weight shape {weight.shape}"
            )
        self.weight = weight
        self.bias = bias
        self.activation = activation
        self._cache: tuple[np.ndarray, np.ndarray] | None = None
        # Smallest |pre-activation| seen in the last forward; relu layers
        # report it so gradient checks can skip evaluations near the kink.
        self.last_min_abs_pre = math.inf

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]

    def forward(self, x: Matrix, cache: bool = True) -> Matrix:
        """With ``cache=False`` the call writes no state (thread-safe reads)."""
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise DimensionError(
                f"dense layer {self.weight.name!r} expects input (*, {self.in_dim}), "
                f"got {x.shape}"
            )
        pre = x @ self.weight.value + self.bias.value
        if self.activation == "relu":
            out = np.maximum(pre, 0.0)
            if cache:
                self.last_min_abs_pre = (
                    float(np.abs(pre).min()) if pre.size else math.inf
                )
        else:
            out = pre
        if cache:
            self._cache = (x, pre)
        return out

    def backward(self, upstream: Matrix) -> Matrix:
        if self._cache is None:
            raise StateError(
                f"backward called on dense layer {self.weight.name!r} without a "
                "cached forward"
            )
        x, pre = self._cache
        self._cache = None
        if upstream.shape != (x.shape[0], self.out_dim):
            raise DimensionError(
                f"upstream gradient shape {upstream.shape} does not match forward "
                f"output shape {(x.shape[0], self.out_dim)}"
            )
        dpre = upstream * (pre > 0.0) if self.activation == "relu" else upstream
        self.weight.grad += x.T @ dpre
        self.bias.grad += dpre.sum(axis=0, keepdims=True)
        return dpre @ self.weight.value.T


class EmbeddingTable:
    """Lookup table mapping categorical ids to learnable rows."""

    def __init__(self, table: Param, field_name: str) -> None:
        self.table = table
        self.field_name = field_name
        self._cache: np.ndarray | None = None

    @property
    def vocab_size(self) -> int:
        return self.table.shape[0]

    @property
    def dim(self) -> int:
        return self.table.shape[1]

    def forward(self, ids: np.ndarray, cache: bool = True) -> Matrix:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab_size):
            bad = ids[(ids < 0) | (ids >= self.vocab_size)][0]
            raise LookupIndexError(
                f"field {self.field_name!r}: id {int(bad)} outside vocab of size "
                f"{self.vocab_size}"
            )
        if cache:
            self._cache = ids
        return self.table.value[ids]

    def backward(self, upstream: Matrix) -> None:
        if self._cache is None:
            raise StateError(
                f"backward called on embedding {self.field_name!r} without a "
                "cached forward"
            )
        ids = self._cache
        self._cache = None
        np.add.at(self.table.grad, ids, upstream)


class TowerStack:
    """A plain stack of dense layers run in sequence."""

    def __init__(self, layers: list[DenseLayer]) -> None:
        self.layers = layers

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def forward(self, x: Matrix, cache: bool = True) -> Matrix:
        for layer in self.layers:
            x = layer.forward(x, cache=cache)
        return x

    def backward(self, upstream: Matrix) -> Matrix:
        for layer in reversed(self.layers):
            upstream = layer.backward(upstream)
        return upstream

    def kink_margin(self) -> float:
        margins = [l.last_min_abs_pre for l in self.layers if l.activation == "relu"]
        return min(margins) if margins else math.inf


def init_dense(
    store: ParamStore,
    name: str,
    in_dim: int,
    out_dim: int,
    activation: str,
    rng: np.random.Generator,
) -> DenseLayer:
    """Uniform(+-sqrt(6/(fan_in+fan_out))) weights, zero bias."""
    limit = math.sqrt(6.0 / (in_dim + out_dim))
    weight = store.create(f"{name}/weight", rng.uniform(-limit, limit, (in_dim, out_dim)))
    bias = store.create(f"{name}/bias", np.zeros((1, out_dim)))
    return DenseLayer(weight, bias, activation)


def init_embedding(
    store: ParamStore,
    name: str,
    field_name: str,
    vocab_size: int,
    dim: int,
    rng: np.random.Generator,
) -> EmbeddingTable:
    table = store.create(name, rng.normal(0.0, 0.01, (vocab_size, dim)))
    return EmbeddingTable(table, field_name)


def init_tower(
    store: ParamStore,
    name: str,
    in_dim: int,
    hidden_widths: list[int],
    out_dim: int,
    rng: np.random.Generator,
) -> TowerStack:
    """Hidden layers are relu, the output layer is identity."""
    dims = [in_dim, *hidden_widths, out_dim]
    layers = []
    for i in range(len(dims) - 1):
        activation = "relu" if i < len(dims) - 2 else "identity"
        layers.append(init_dense(store, f"{name}/layer{i}", dims[i], dims[i + 1], activation, rng))
    return TowerStack(layers)
