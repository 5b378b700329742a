"""Adam optimizer over a parameter registry."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import ConfigError
from .params import Param


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def validate(self) -> None:
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        for name, b in (("beta1", self.beta1), ("beta2", self.beta2)):
            if not 0.0 <= b < 1.0:
                raise ConfigError(f"{name} must be in [0, 1), got {b}")


def adam_step(params: Iterable[Param], cfg: AdamConfig) -> None:
    """One bias-corrected Adam update on every param's accumulated gradient."""
    for p in params:
        p.step_count += 1
        t = p.step_count
        g = p.grad
        p.m1 *= cfg.beta1
        p.m1 += (1.0 - cfg.beta1) * g
        p.m2 *= cfg.beta2
        p.m2 += (1.0 - cfg.beta2) * (g * g)
        m_hat = p.m1 / (1.0 - cfg.beta1**t)
        v_hat = p.m2 / (1.0 - cfg.beta2**t)
        p.value -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
