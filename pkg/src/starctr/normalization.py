"""Input-representation normalization: batch, layer, partition, or none.

The layer normalizes the concatenated embedding representation once,
before the towers.  Batch and partition kinds keep exponential moving
averages of their group statistics for inference; layer normalization is
per-row and needs none.  Partition normalization keeps statistics and an
extra scale/bias per domain on top of the global pair, combining them as
(gamma * gamma_p) and (beta + beta_p).
"""

from __future__ import annotations

import numpy as np

from .errors import (
    ConfigError,
    DegenerateBatchError,
    DimensionError,
    LookupIndexError,
    StateError,
)
from .params import Matrix, ParamStore

NORM_KINDS = ("none", "batch", "layer", "partition")


def _group_moments(x: Matrix, eps: float) -> tuple[Matrix, Matrix, Matrix, Matrix]:
    """Column-wise biased moments and the normalized values of one group."""
    mu = x.mean(axis=0, keepdims=True)
    var = x.var(axis=0, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    return xhat, mu, var, inv


def _group_input_grad(
    dxhat: Matrix, x: Matrix, mu: Matrix, inv: Matrix, n: int
) -> Matrix:
    """Gradient through one group's moments, column-wise over n rows."""
    xmu = x - mu
    dvar = (dxhat * xmu).sum(axis=0, keepdims=True) * (-0.5) * inv**3
    dmu = (-dxhat * inv).sum(axis=0, keepdims=True) + dvar * (-2.0 / n) * xmu.sum(
        axis=0, keepdims=True
    )
    return dxhat * inv + dvar * (2.0 / n) * xmu + dmu / n


class NormLayer:
    """Stateful normalization over the pre-tower representation."""

    def __init__(
        self,
        kind: str,
        dim: int,
        num_domains: int,
        store: ParamStore,
        momentum: float = 0.99,
        eps: float = 1e-5,
        shared_moments: bool = False,
        name: str = "norm",
    ) -> None:
        if kind not in NORM_KINDS:
            raise ConfigError(f"unknown normalization kind {kind!r}")
        if shared_moments and kind != "partition":
            raise ConfigError("shared_moments only applies to partition normalization")
        self.kind = kind
        self.dim = dim
        self.num_domains = num_domains
        self.momentum = momentum
        self.eps = eps
        self.shared_moments = shared_moments
        self.training = True
        self._cache = None

        self.gamma = self.beta = self.gamma_p = self.beta_p = None
        self.running_mean: Matrix | None = None
        self.running_var: Matrix | None = None
        if kind in ("batch", "layer", "partition"):
            self.gamma = store.create(f"{name}/gamma", np.ones((1, dim)))
            self.beta = store.create(f"{name}/beta", np.zeros((1, dim)))
        if kind == "partition":
            self.gamma_p = store.create(f"{name}/gamma_p", np.ones((num_domains, dim)))
            self.beta_p = store.create(f"{name}/beta_p", np.zeros((num_domains, dim)))
        if kind == "batch" or (kind == "partition" and shared_moments):
            self.running_mean = np.zeros((1, dim))
            self.running_var = np.ones((1, dim))
        elif kind == "partition":
            self.running_mean = np.zeros((num_domains, dim))
            self.running_var = np.ones((num_domains, dim))

    # -- helpers -----------------------------------------------------------

    def _check_input(self, x: Matrix, domain_ids: np.ndarray) -> None:
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise DimensionError(
                f"normalization expects input (*, {self.dim}), got {x.shape}"
            )
        if self.kind == "partition":
            if domain_ids.shape[0] != x.shape[0]:
                raise DimensionError(
                    f"domain ids length {domain_ids.shape[0]} does not match batch "
                    f"size {x.shape[0]}"
                )
            if domain_ids.size and (
                domain_ids.min() < 0 or domain_ids.max() >= self.num_domains
            ):
                bad = int(domain_ids[(domain_ids < 0) | (domain_ids >= self.num_domains)][0])
                raise LookupIndexError(
                    f"domain id {bad} outside [0, {self.num_domains})"
                )

    def _update_running(self, row: int, mu: Matrix, var: Matrix) -> None:
        m = self.momentum
        self.running_mean[row] = m * self.running_mean[row] + (1.0 - m) * mu[0]
        self.running_var[row] = m * self.running_var[row] + (1.0 - m) * var[0]

    # -- forward/backward ---------------------------------------------------

    def forward(self, x: Matrix, domain_ids: np.ndarray, cache: bool = True) -> Matrix:
        self._check_input(x, domain_ids)
        if self.kind == "none":
            if cache:
                self._cache = ("none",)
            return x
        if self.kind == "layer":
            return self._layer_forward(x, cache)
        if self.training:
            return self._grouped_train_forward(x, domain_ids, cache)
        return self._grouped_infer_forward(x, domain_ids, cache)

    def backward(self, upstream: Matrix) -> Matrix:
        if self._cache is None:
            raise StateError("normalization backward called without a cached forward")
        cache = self._cache
        self._cache = None
        kind = cache[0]
        if kind == "none":
            return upstream
        if kind == "layer":
            return self._layer_backward(upstream, cache)
        if kind == "grouped-train":
            return self._grouped_train_backward(upstream, cache)
        return self._grouped_infer_backward(upstream, cache)

    # -- layer kind ----------------------------------------------------------

    def _layer_forward(self, x: Matrix, cache: bool) -> Matrix:
        mu = x.mean(axis=1, keepdims=True)
        var = x.var(axis=1, keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu) * inv
        if cache:
            self._cache = ("layer", x, xhat, mu, inv)
        return self.gamma.value * xhat + self.beta.value

    def _layer_backward(self, upstream: Matrix, cache) -> Matrix:
        _, x, xhat, mu, inv = cache
        d = x.shape[1]
        self.gamma.grad += (upstream * xhat).sum(axis=0, keepdims=True)
        self.beta.grad += upstream.sum(axis=0, keepdims=True)
        dxhat = upstream * self.gamma.value
        xmu = x - mu
        dvar = (dxhat * xmu).sum(axis=1, keepdims=True) * (-0.5) * inv**3
        dmu = (-dxhat * inv).sum(axis=1, keepdims=True) + dvar * (-2.0 / d) * xmu.sum(
            axis=1, keepdims=True
        )
        return dxhat * inv + dvar * (2.0 / d) * xmu + dmu / d

    # -- batch / partition, training ------------------------------------------

    def _groups(self, x: Matrix, domain_ids: np.ndarray):
        """(running-stat row, affine domain, row indices) per normalized group."""
        if self.kind == "batch":
            return [(0, None, np.arange(x.shape[0]))]
        if self.shared_moments:
            # Single moment group, but the affine is still resolved per domain.
            return [(0, None, np.arange(x.shape[0]))]
        return [
            (int(d), int(d), np.nonzero(domain_ids == d)[0])
            for d in np.unique(domain_ids)
        ]

    def _affine(self, domain: int | None, domain_ids: np.ndarray, idx: np.ndarray):
        """Effective scale/bias for one group, shaped to broadcast over it."""
        if self.kind == "batch":
            return self.gamma.value, self.beta.value
        if domain is not None:
            gp = self.gamma_p.value[domain : domain + 1]
            bp = self.beta_p.value[domain : domain + 1]
        else:  # shared moments: per-row affine within the single group
            gp = self.gamma_p.value[domain_ids[idx]]
            bp = self.beta_p.value[domain_ids[idx]]
        return self.gamma.value * gp, self.beta.value + bp

    def _grouped_train_forward(
        self, x: Matrix, domain_ids: np.ndarray, cache: bool
    ) -> Matrix:
        out = np.empty_like(x)
        group_caches = []
        for stat_row, domain, idx in self._groups(x, domain_ids):
            xg = x[idx]
            if xg.shape[0] < 2:
                raise DegenerateBatchError(
                    f"normalized group (domain {domain if domain is not None else 'all'}) "
                    f"has {xg.shape[0]} row(s); training needs at least 2"
                )
            xhat, mu, var, inv = _group_moments(xg, self.eps)
            gamma_eff, beta_eff = self._affine(domain, domain_ids, idx)
            out[idx] = gamma_eff * xhat + beta_eff
            self._update_running(stat_row, mu, var)
            group_caches.append((domain, idx, xg, xhat, mu, inv, gamma_eff))
        if cache:
            self._cache = ("grouped-train", domain_ids, group_caches)
        return out

    def _grouped_train_backward(self, upstream: Matrix, cache) -> Matrix:
        _, domain_ids, group_caches = cache
        dx = np.empty_like(upstream)
        for domain, idx, xg, xhat, mu, inv, gamma_eff in group_caches:
            ug = upstream[idx]
            if self.kind == "batch":
                self.gamma.grad += (ug * xhat).sum(axis=0, keepdims=True)
                self.beta.grad += ug.sum(axis=0, keepdims=True)
            elif domain is not None:
                gp = self.gamma_p.value[domain : domain + 1]
                self.gamma.grad += (ug * xhat * gp).sum(axis=0, keepdims=True)
                self.beta.grad += ug.sum(axis=0, keepdims=True)
                self.gamma_p.grad[domain] += (ug * xhat * self.gamma.value).sum(axis=0)
                self.beta_p.grad[domain] += ug.sum(axis=0)
            else:  # shared moments: scatter affine grads per row's domain
                rows = domain_ids[idx]
                gp = self.gamma_p.value[rows]
                self.gamma.grad += (ug * xhat * gp).sum(axis=0, keepdims=True)
                self.beta.grad += ug.sum(axis=0, keepdims=True)
                np.add.at(self.gamma_p.grad, rows, ug * xhat * self.gamma.value)
                np.add.at(self.beta_p.grad, rows, ug)
            dxhat = ug * gamma_eff
            dx[idx] = _group_input_grad(dxhat, xg, mu, inv, xg.shape[0])
        return dx

    # -- batch / partition, inference -------------------------------------------

    def _grouped_infer_forward(
        self, x: Matrix, domain_ids: np.ndarray, cache: bool
    ) -> Matrix:
        if self.kind == "batch" or self.shared_moments:
            rm, rv = self.running_mean[0:1], self.running_var[0:1]
        else:
            rm, rv = self.running_mean[domain_ids], self.running_var[domain_ids]
        inv = 1.0 / np.sqrt(rv + self.eps)
        xhat = (x - rm) * inv
        if self.kind == "batch":
            gamma_eff, beta_eff = self.gamma.value, self.beta.value
        else:
            gamma_eff = self.gamma.value * self.gamma_p.value[domain_ids]
            beta_eff = self.beta.value + self.beta_p.value[domain_ids]
        if cache:
            self._cache = ("grouped-infer", domain_ids, xhat, inv, gamma_eff)
        return gamma_eff * xhat + beta_eff

    def _grouped_infer_backward(self, upstream: Matrix, cache) -> Matrix:
        _, domain_ids, xhat, inv, gamma_eff = cache
        if self.kind == "batch":
            self.gamma.grad += (upstream * xhat).sum(axis=0, keepdims=True)
            self.beta.grad += upstream.sum(axis=0, keepdims=True)
        else:
            gp = self.gamma_p.value[domain_ids]
            self.gamma.grad += (upstream * xhat * gp).sum(axis=0, keepdims=True)
            self.beta.grad += upstream.sum(axis=0, keepdims=True)
            np.add.at(self.gamma_p.grad, domain_ids, upstream * xhat * self.gamma.value)
            np.add.at(self.beta_p.grad, domain_ids, upstream)
        return upstream * gamma_eff * inv
