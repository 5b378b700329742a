"""Full multi-domain model graphs.

Two architectures share the same embedding assembly, normalization, and
auxiliary tower:

* ``star``: every layer of the effective per-domain tower uses the
  element-wise product of that domain's weights with the shared weights
  (and the sum of the biases).  Both the star head and the auxiliary head
  emit one scalar per row, combined as sigmoid(star + auxiliary).
* ``star_plus``: domain, shared, and auxiliary towers run independently;
  their (B, k) outputs are combined by a configurable fusion strategy
  into one logit per row, then squashed by the sigmoid.

Rows are routed to domain towers by grouping on the domain id, so a
domain absent from a batch contributes exactly zero gradient to its
tower (and to its partition-norm rows).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, StateError
from .fusion import FusionSpec, build_fusion
from .layers import DenseLayer, init_embedding, init_tower, sigmoid
from .normalization import NORM_KINDS, NormLayer
from .params import Matrix, ParamStore

ARCHITECTURES = ("star", "star_plus")


@dataclass(frozen=True)
class FieldSpec:
    name: str
    vocab_size: int
    embedding_dim: int


@dataclass(frozen=True)
class ModelConfig:
    """Complete architecture description; everything a rebuild needs."""

    num_domains: int
    fields: tuple[FieldSpec, ...]
    tower_widths: tuple[int, ...] = (64, 32)
    tower_output_dim: int = 16
    norm_kind: str = "none"
    fusion: FusionSpec | None = None
    architecture: str = "star_plus"
    seed: int = 0
    aux_embedding_dim: int = 8
    norm_momentum: float = 0.99
    norm_eps: float = 1e-5
    partition_shared_moments: bool = False

    def validate(self) -> None:
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {self.architecture!r}")
        if self.num_domains < 2:
            raise ConfigError(f"num_domains must be >= 2, got {self.num_domains}")
        if not self.fields:
            raise ConfigError("at least one feature field is required")
        for f in self.fields:
            if f.vocab_size < 1 or f.embedding_dim < 1:
                raise ConfigError(f"field {f.name!r} has invalid sizes: {f}")
        if self.tower_output_dim < 1:
            raise ConfigError(f"tower_output_dim must be >= 1, got {self.tower_output_dim}")
        if any(w < 1 for w in self.tower_widths):
            raise ConfigError(f"tower widths must all be >= 1, got {self.tower_widths}")
        if self.norm_kind not in NORM_KINDS:
            raise ConfigError(f"unknown normalization kind {self.norm_kind!r}")
        if self.aux_embedding_dim < 1:
            raise ConfigError(f"aux_embedding_dim must be >= 1, got {self.aux_embedding_dim}")
        if self.architecture == "star":
            if self.fusion is not None:
                raise ConfigError(
                    "the star architecture combines towers by weight products and a "
                    "sigmoid-sum head; it does not accept a fusion strategy"
                )
            if self.tower_output_dim != 1:
                raise ConfigError(
                    f"star towers emit scalar heads; set tower_output_dim=1, "
                    f"got {self.tower_output_dim}"
                )
        else:
            if self.fusion is None:
                raise ConfigError("star_plus requires a fusion strategy")
            self.fusion.validate()

    @property
    def input_dim(self) -> int:
        return sum(f.embedding_dim for f in self.fields)

    def to_dict(self) -> dict:
        return {
            "num_domains": self.num_domains,
            "fields": [[f.name, f.vocab_size, f.embedding_dim] for f in self.fields],
            "tower_widths": list(self.tower_widths),
            "tower_output_dim": self.tower_output_dim,
            "norm_kind": self.norm_kind,
            "fusion": None if self.fusion is None else self.fusion.to_dict(),
            "architecture": self.architecture,
            "seed": self.seed,
            "aux_embedding_dim": self.aux_embedding_dim,
            "norm_momentum": self.norm_momentum,
            "norm_eps": self.norm_eps,
            "partition_shared_moments": self.partition_shared_moments,
        }

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        cfg = ModelConfig(
            num_domains=int(d["num_domains"]),
            fields=tuple(FieldSpec(str(n), int(v), int(e)) for n, v, e in d["fields"]),
            tower_widths=tuple(int(w) for w in d.get("tower_widths", (64, 32))),
            tower_output_dim=int(d.get("tower_output_dim", 16)),
            norm_kind=str(d.get("norm_kind", "none")),
            fusion=(
                None if d.get("fusion") is None else FusionSpec.from_dict(d["fusion"])
            ),
            architecture=str(d.get("architecture", "star_plus")),
            seed=int(d.get("seed", 0)),
            aux_embedding_dim=int(d.get("aux_embedding_dim", 8)),
            norm_momentum=float(d.get("norm_momentum", 0.99)),
            norm_eps=float(d.get("norm_eps", 1e-5)),
            partition_shared_moments=bool(d.get("partition_shared_moments", False)),
        )
        cfg.validate()
        return cfg


class StarCombinedTower:
    """One domain's effective tower under element-wise weight combination.

    Layer L applies phi((W_domain * W_shared) @ x + (b_domain + b_shared));
    backward routes the combined weight gradient to both factors through
    the product rule.
    """

    def __init__(self, domain_layers: list[DenseLayer], shared_layers: list[DenseLayer]) -> None:
        if len(domain_layers) != len(shared_layers):
            raise ConfigError("domain and shared towers differ in depth")
        for dl, sl in zip(domain_layers, shared_layers):
            if dl.weight.shape != sl.weight.shape:
                raise ConfigError(
                    f"domain layer shape {dl.weight.shape} does not match shared "
                    f"layer shape {sl.weight.shape}"
                )
        self.domain_layers = domain_layers
        self.shared_layers = shared_layers
        self._cache = None
        self.last_min_abs_pre = math.inf

    def forward(self, x: Matrix, cache: bool = True) -> Matrix:
        contexts = []
        min_pre = math.inf
        h = x
        for dl, sl in zip(self.domain_layers, self.shared_layers):
            w = dl.weight.value * sl.weight.value
            b = dl.bias.value + sl.bias.value
            pre = h @ w + b
            if dl.activation == "relu":
                out = np.maximum(pre, 0.0)
                if pre.size:
                    min_pre = min(min_pre, float(np.abs(pre).min()))
            else:
                out = pre
            contexts.append((h, pre, w))
            h = out
        if cache:
            self._cache = contexts
            self.last_min_abs_pre = min_pre
        return h

    def backward(self, upstream: Matrix) -> Matrix:
        if self._cache is None:
            raise StateError("star tower backward called without a cached forward")
        contexts = self._cache
        self._cache = None
        for (x, pre, w), dl, sl in zip(
            reversed(contexts), reversed(self.domain_layers), reversed(self.shared_layers)
        ):
            dpre = upstream * (pre > 0.0) if dl.activation == "relu" else upstream
            dw = x.T @ dpre
            dl.weight.grad += dw * sl.weight.value
            sl.weight.grad += dw * dl.weight.value
            db = dpre.sum(axis=0, keepdims=True)
            dl.bias.grad += db
            sl.bias.grad += db
            upstream = dpre @ w.T
        return upstream


def star_final_score(s_star: Matrix, s_aux: Matrix) -> Matrix:
    """Element-wise sigmoid of the summed scalar heads."""
    if s_star.shape != s_aux.shape:
        raise DimensionError(
            f"star head shape {s_star.shape} does not match auxiliary head "
            f"shape {s_aux.shape}"
        )
    return sigmoid(s_star + s_aux)


class MultiDomainModel:
    """The assembled graph: embeddings, normalization, towers, fusion."""

    def __init__(self, config: ModelConfig) -> None:
        config.validate()
        self.config = config
        self.store = ParamStore()
        rng = np.random.default_rng(config.seed)

        self.tables = [
            init_embedding(self.store, f"emb/{f.name}", f.name, f.vocab_size,
                           f.embedding_dim, rng)
            for f in config.fields
        ]
        self.aux_table = init_embedding(
            self.store, "emb/domain_indicator", "domain_indicator",
            config.num_domains, config.aux_embedding_dim, rng,
        )
        dim = config.input_dim
        self.norm = NormLayer(
            config.norm_kind, dim, config.num_domains, self.store,
            momentum=config.norm_momentum, eps=config.norm_eps,
            shared_moments=config.partition_shared_moments,
        )
        widths = list(config.tower_widths)
        k = config.tower_output_dim
        self.domain_towers = [
            init_tower(self.store, f"domain_tower/{d}", dim, widths, k, rng)
            for d in range(config.num_domains)
        ]
        self.shared_tower = init_tower(self.store, "shared_tower", dim, widths, k, rng)
        self.aux_tower = init_tower(
            self.store, "aux_tower", dim + config.aux_embedding_dim, widths, k, rng
        )
        if config.architecture == "star":
            self.star_towers = [
                StarCombinedTower(t.layers, self.shared_tower.layers)
                for t in self.domain_towers
            ]
            self.fusion = None
        else:
            self.star_towers = None
            self.fusion = build_fusion(
                config.fusion, k, config.num_domains, self.store, rng
            )
        self._route = None
        self._input_offsets = np.cumsum(
            [0] + [f.embedding_dim for f in config.fields]
        )

    # -- mode ---------------------------------------------------------------

    @property
    def training(self) -> bool:
        return self.norm.training

    def set_training(self, flag: bool) -> None:
        self.norm.training = flag

    def params(self):
        return list(self.store)

    # -- forward / backward ---------------------------------------------------

    def assemble_input(self, feature_ids: np.ndarray, cache: bool = True) -> Matrix:
        """Concatenate per-field embedding rows; (B, sum of field dims)."""
        feature_ids = np.asarray(feature_ids, dtype=np.int64)
        if feature_ids.ndim != 2 or feature_ids.shape[1] != len(self.tables):
            raise DimensionError(
                f"expected feature ids (*, {len(self.tables)}), got {feature_ids.shape}"
            )
        return np.concatenate(
            [t.forward(feature_ids[:, j], cache=cache) for j, t in enumerate(self.tables)],
            axis=1,
        )

    def _route_domains(self, domain_ids: np.ndarray):
        return [
            (int(d), np.nonzero(domain_ids == d)[0]) for d in np.unique(domain_ids)
        ]

    def forward_logits(
        self, feature_ids: np.ndarray, domain_ids: np.ndarray, cache: bool = True
    ) -> Matrix:
        """One logit per row; with ``cache`` set, stores what backward() needs."""
        domain_ids = np.asarray(domain_ids, dtype=np.int64)
        z0 = self.assemble_input(feature_ids, cache=cache)
        z = self.norm.forward(z0, domain_ids, cache=cache)
        route = self._route_domains(domain_ids)
        batch = z.shape[0]
        k = self.config.tower_output_dim

        aux_in = np.concatenate(
            [z, self.aux_table.forward(domain_ids, cache=cache)], axis=1
        )
        s_a = self.aux_tower.forward(aux_in, cache=cache)

        if self.config.architecture == "star":
            s_star = np.empty((batch, k))
            for d, idx in route:
                s_star[idx] = self.star_towers[d].forward(z[idx], cache=cache)
            logits = s_star + s_a
        else:
            s_d = np.empty((batch, k))
            for d, idx in route:
                s_d[idx] = self.domain_towers[d].forward(z[idx], cache=cache)
            s_s = self.shared_tower.forward(z, cache=cache)
            logits = self.fusion.forward(s_d, s_s, s_a, domain_ids, cache=cache)
        if cache:
            self._route = route
        return logits

    def backward(self, dlogits: Matrix) -> None:
        """Accumulate gradients for the most recent forward_logits call."""
        if self._route is None:
            raise StateError("model backward called without a cached forward")
        route = self._route
        self._route = None

        if self.config.architecture == "star":
            ds_a = dlogits
            dz = np.zeros((dlogits.shape[0], self.config.input_dim))
            for d, idx in route:
                dz[idx] = self.star_towers[d].backward(dlogits[idx])
        else:
            ds_d, ds_s, ds_a = self.fusion.backward(dlogits)
            dz = self.shared_tower.backward(ds_s)
            dz_d = np.empty_like(dz)
            for d, idx in route:
                dz_d[idx] = self.domain_towers[d].backward(ds_d[idx])
            dz = dz + dz_d

        daux_in = self.aux_tower.backward(ds_a)
        dim = self.config.input_dim
        dz = dz + daux_in[:, :dim]
        self.aux_table.backward(daux_in[:, dim:])

        dz0 = self.norm.backward(dz)
        for j, t in enumerate(self.tables):
            t.backward(dz0[:, self._input_offsets[j] : self._input_offsets[j + 1]])

    def predict(self, feature_ids: np.ndarray, domain_ids: np.ndarray) -> Matrix:
        """Per-row click probabilities under inference-mode statistics.

        Writes no model state, so a frozen (inference-mode) model can serve
        predictions from many threads at once.
        """
        if self.training:
            self.set_training(False)
            try:
                return sigmoid(self.forward_logits(feature_ids, domain_ids, cache=False))
            finally:
                self.set_training(True)
        return sigmoid(self.forward_logits(feature_ids, domain_ids, cache=False))

    # -- diagnostics -----------------------------------------------------------

    def kink_margin(self) -> float:
        """Smallest |relu pre-activation| seen in the last forward pass."""
        margins = [self.aux_tower.kink_margin()]
        if self.config.architecture == "star":
            margins += [t.last_min_abs_pre for t in self.star_towers]
        else:
            margins.append(self.shared_tower.kink_margin())
            margins += [t.kink_margin() for t in self.domain_towers]
            margins.append(self.fusion.kink_margin())
        return min(margins)


def build_model(config: ModelConfig) -> MultiDomainModel:
    return MultiDomainModel(config)
