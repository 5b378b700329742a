"""Fusion strategies combining domain, shared, and auxiliary tower outputs.

Each strategy maps the three (B, k) tower outputs to one logit per row:

* add            -- fixed weighted sum of three per-tower scalar heads
* adaptive_add   -- the domain head weight is learned per domain through a
                    sigmoid; shared and auxiliary split the remainder evenly,
                    so the three weights always sum to exactly 1
* gate           -- a small network on the domain indicator emits softmax
                    weights that blend the k-dim tower outputs before a final
                    scalar head
* concat         -- the tower outputs are concatenated and reduced by a
                    small FCN
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, StateError
from .layers import DenseLayer, TowerStack, init_dense, init_tower, sigmoid, softmax_rows
from .params import Matrix, Param, ParamStore

FUSION_KINDS = ("add", "adaptive_add", "gate", "concat")


@dataclass(frozen=True)
class FusionSpec:
    """Configuration for one fusion strategy.

    Fields of unselected kinds are reset to their defaults, so two specs
    are equal exactly when they configure the same strategy.
    """

    kind: str
    c_d: float = 1.0
    c_s: float = 1.0
    c_a: float = 1.0
    gate_hidden: int = 8
    concat_widths: tuple[int, ...] = (32,)

    def __post_init__(self) -> None:
        if self.kind != "add":
            for name in ("c_d", "c_s", "c_a"):
                object.__setattr__(self, name, 1.0)
        if self.kind != "gate":
            object.__setattr__(self, "gate_hidden", 8)
        if self.kind != "concat":
            object.__setattr__(self, "concat_widths", (32,))
        else:
            object.__setattr__(self, "concat_widths", tuple(self.concat_widths))

    def validate(self) -> None:
        if self.kind not in FUSION_KINDS:
            raise ConfigError(f"unknown fusion kind {self.kind!r}")
        if self.kind == "add":
            for name, c in (("c_d", self.c_d), ("c_s", self.c_s), ("c_a", self.c_a)):
                if not math.isfinite(c):
                    raise ConfigError(f"add fusion constant {name} must be finite, got {c}")
        if self.kind == "gate" and self.gate_hidden < 1:
            raise ConfigError(f"gate_hidden must be >= 1, got {self.gate_hidden}")
        if self.kind == "concat" and any(w < 1 for w in self.concat_widths):
            raise ConfigError(f"concat widths must be >= 1, got {self.concat_widths}")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "add":
            d.update(c_d=self.c_d, c_s=self.c_s, c_a=self.c_a)
        elif self.kind == "gate":
            d["gate_hidden"] = self.gate_hidden
        elif self.kind == "concat":
            d["concat_widths"] = list(self.concat_widths)
        return d

    @staticmethod
    def from_dict(d: dict) -> "FusionSpec":
        spec = FusionSpec(
            kind=d["kind"],
            c_d=float(d.get("c_d", 1.0)),
            c_s=float(d.get("c_s", 1.0)),
            c_a=float(d.get("c_a", 1.0)),
            gate_hidden=int(d.get("gate_hidden", 8)),
            concat_widths=tuple(d.get("concat_widths", (32,))),
        )
        spec.validate()
        return spec


class AddFusion:
    """Fixed weighted sum of the three scalar head outputs."""

    kind = "add"

    def __init__(self, head_d: DenseLayer, head_s: DenseLayer, head_a: DenseLayer,
                 c_d: float, c_s: float, c_a: float) -> None:
        self.head_d, self.head_s, self.head_a = head_d, head_s, head_a
        self.c_d, self.c_s, self.c_a = c_d, c_s, c_a

    def forward(self, s_d: Matrix, s_s: Matrix, s_a: Matrix,
                domain_ids: np.ndarray, cache: bool = True) -> Matrix:
        return (
            self.c_d * self.head_d.forward(s_d, cache=cache)
            + self.c_s * self.head_s.forward(s_s, cache=cache)
            + self.c_a * self.head_a.forward(s_a, cache=cache)
        )

    def backward(self, dlogit: Matrix) -> tuple[Matrix, Matrix, Matrix]:
        return (
            self.head_d.backward(self.c_d * dlogit),
            self.head_s.backward(self.c_s * dlogit),
            self.head_a.backward(self.c_a * dlogit),
        )

    def kink_margin(self) -> float:
        return math.inf


class AdaptiveAddFusion:
    """Weighted sum with a learned per-domain weight on the domain head.

    Each domain owns one raw weight w; the effective weights are
    c_d = sigmoid(w) and c_s = c_a = (1 - sigmoid(w)) / 2, so they sum to 1
    by construction at every step.
    """

    kind = "adaptive_add"

    def __init__(self, head_d: DenseLayer, head_s: DenseLayer, head_a: DenseLayer,
                 domain_weight: Param) -> None:
        self.head_d, self.head_s, self.head_a = head_d, head_s, head_a
        self.domain_weight = domain_weight  # (M, 1), initialized to 0
        self._cache = None

    def weights_for_domains(self, domain_ids: np.ndarray) -> tuple[Matrix, Matrix, Matrix]:
        """(c_d, c_s, c_a) columns for the given domain ids."""
        c_d = sigmoid(self.domain_weight.value[domain_ids])
        c_rest = (1.0 - c_d) / 2.0
        return c_d, c_rest, c_rest

    def forward(self, s_d: Matrix, s_s: Matrix, s_a: Matrix,
                domain_ids: np.ndarray, cache: bool = True) -> Matrix:
        l_d = self.head_d.forward(s_d, cache=cache)
        l_s = self.head_s.forward(s_s, cache=cache)
        l_a = self.head_a.forward(s_a, cache=cache)
        c_d, c_rest, _ = self.weights_for_domains(domain_ids)
        if cache:
            self._cache = (domain_ids, l_d, l_s, l_a, c_d, c_rest)
        return c_d * l_d + c_rest * (l_s + l_a)

    def backward(self, dlogit: Matrix) -> tuple[Matrix, Matrix, Matrix]:
        if self._cache is None:
            raise StateError("adaptive add backward called without a cached forward")
        domain_ids, l_d, l_s, l_a, c_d, c_rest = self._cache
        self._cache = None
        ds_d = self.head_d.backward(c_d * dlogit)
        ds_s = self.head_s.backward(c_rest * dlogit)
        ds_a = self.head_a.backward(c_rest * dlogit)
        # d logit / d c_d = l_d - (l_s + l_a) / 2, chained through the sigmoid.
        dc_d = dlogit * (l_d - 0.5 * (l_s + l_a))
        dw = dc_d * c_d * (1.0 - c_d)
        np.add.at(self.domain_weight.grad, (domain_ids, np.zeros_like(domain_ids)), dw[:, 0])
        return ds_d, ds_s, ds_a

    def kink_margin(self) -> float:
        return math.inf


class GateFusion:
    """Instance-wise softmax blend driven by the domain indicator.

    The gate network consumes the one-hot domain indicator, so all rows of
    one domain share the same weights; the blended k-dim vector then passes
    through a single scalar head.
    """

    kind = "gate"

    def __init__(self, gate_net: TowerStack, head: DenseLayer, num_domains: int) -> None:
        self.gate_net = gate_net
        self.head = head
        self.num_domains = num_domains
        self._cache = None
        self.last_gate_weights: Matrix | None = None

    def forward(self, s_d: Matrix, s_s: Matrix, s_a: Matrix,
                domain_ids: np.ndarray, cache: bool = True) -> Matrix:
        batch = s_d.shape[0]
        onehot = np.zeros((batch, self.num_domains))
        onehot[np.arange(batch), domain_ids] = 1.0
        g = softmax_rows(self.gate_net.forward(onehot, cache=cache))  # (B, 3)
        fused = g[:, 0:1] * s_d + g[:, 1:2] * s_s + g[:, 2:3] * s_a
        logit = self.head.forward(fused, cache=cache)
        if cache:
            self._cache = (s_d, s_s, s_a, g)
            self.last_gate_weights = g
        return logit

    def backward(self, dlogit: Matrix) -> tuple[Matrix, Matrix, Matrix]:
        if self._cache is None:
            raise StateError("gate fusion backward called without a cached forward")
        s_d, s_s, s_a, g = self._cache
        self._cache = None
        dfused = self.head.backward(dlogit)
        ds_d = dfused * g[:, 0:1]
        ds_s = dfused * g[:, 1:2]
        ds_a = dfused * g[:, 2:3]
        dg = np.stack(
            [(dfused * s).sum(axis=1) for s in (s_d, s_s, s_a)], axis=1
        )  # (B, 3)
        # Softmax Jacobian: dz = g * (dg - sum(dg * g)).
        dz = g * (dg - (dg * g).sum(axis=1, keepdims=True))
        self.gate_net.backward(dz)  # one-hot input gradient is discarded
        return ds_d, ds_s, ds_a

    def kink_margin(self) -> float:
        return self.gate_net.kink_margin()


class ConcatFusion:
    """Concatenate the three tower outputs and reduce with a small FCN."""

    kind = "concat"

    def __init__(self, head: TowerStack, tower_dim: int) -> None:
        if head.in_dim != 3 * tower_dim:
            raise ConfigError(
                f"concat head expects input dim {3 * tower_dim}, got {head.in_dim}"
            )
        self.head = head
        self.tower_dim = tower_dim

    def forward(self, s_d: Matrix, s_s: Matrix, s_a: Matrix,
                domain_ids: np.ndarray, cache: bool = True) -> Matrix:
        return self.head.forward(np.concatenate([s_d, s_s, s_a], axis=1), cache=cache)

    def backward(self, dlogit: Matrix) -> tuple[Matrix, Matrix, Matrix]:
        ds = self.head.backward(dlogit)
        k = self.tower_dim
        return ds[:, :k], ds[:, k : 2 * k], ds[:, 2 * k :]

    def kink_margin(self) -> float:
        return self.head.kink_margin()


def build_fusion(
    spec: FusionSpec,
    tower_dim: int,
    num_domains: int,
    store: ParamStore,
    rng: np.random.Generator,
):
    """Create the params of the selected strategy; no other params exist."""
    spec.validate()
    if spec.kind in ("add", "adaptive_add"):
        heads = [
            init_dense(store, f"fusion/head_{t}", tower_dim, 1, "identity", rng)
            for t in ("d", "s", "a")
        ]
        if spec.kind == "add":
            return AddFusion(*heads, spec.c_d, spec.c_s, spec.c_a)
        domain_weight = store.create("fusion/domain_weight", np.zeros((num_domains, 1)))
        return AdaptiveAddFusion(*heads, domain_weight)
    if spec.kind == "gate":
        gate_net = init_tower(
            store, "fusion/gate", num_domains, [spec.gate_hidden], 3, rng
        )
        head = init_dense(store, "fusion/head", tower_dim, 1, "identity", rng)
        return GateFusion(gate_net, head, num_domains)
    head = init_tower(
        store, "fusion/concat", 3 * tower_dim, list(spec.concat_widths), 1, rng
    )
    return ConcatFusion(head, tower_dim)
