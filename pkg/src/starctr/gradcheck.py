"""Finite-difference verification of hand-written backward passes.

The closure must zero the gradients, run a full forward/backward on a
fixed batch, and return the scalar loss.  The checker then perturbs every
parameter entry with a central difference and compares against the
analytic gradient captured from the first call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .errors import NumericError
from .params import Param

# Evaluations whose smallest |relu pre-activation| falls below this margin
# straddle the kink, where central differences are meaningless.
KINK_MARGIN = 1e-4


@dataclass
class GradCheckFailure:
    param: str
    index: tuple[int, int]
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradCheckReport:
    max_rel_error: float
    checked: int
    skipped: int
    failures: list[GradCheckFailure] = field(default_factory=list)
    tolerance: float = 0.0

    @property
    def passed(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return (
            f"{status}: max rel error {self.max_rel_error:.3e} over {self.checked} "
            f"entries ({self.skipped} skipped near relu kinks), tolerance "
            f"{self.tolerance:.1e}"
        )


# Central differences resolve gradients down to roughly the machine-epsilon
# noise of the loss divided by the step; below this scale comparisons must be
# absolute, not relative.
GRAD_SCALE_FLOOR = 1e-5


def _rel_error(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), GRAD_SCALE_FLOOR)


def grad_check(
    closure: Callable[[], float],
    params: Iterable[Param],
    tolerance: float,
    kink_margin: Callable[[], float] | None = None,
    step: float = 1e-5,
) -> GradCheckReport:
    """Compare analytic gradients against central differences.

    ``kink_margin``, when given, reports the smallest |relu pre-activation|
    of the most recent closure evaluation; entries whose perturbed
    evaluations come within KINK_MARGIN of a kink are skipped rather than
    reported as failures.
    """
    params = list(params)
    base = closure()
    if not math.isfinite(base):
        raise NumericError(f"closure returned non-finite loss {base}")
    analytic = {p.name: p.grad.copy() for p in params}

    max_err = 0.0
    checked = 0
    skipped = 0
    failures: list[GradCheckFailure] = []
    for p in params:
        flat_value = p.value.reshape(-1)
        flat_grad = analytic[p.name].reshape(-1)
        for i in range(flat_value.size):
            original = flat_value[i]
            h = step * max(1.0, abs(original))
            near_kink = False

            flat_value[i] = original + h
            f_plus = closure()
            if kink_margin is not None and kink_margin() < KINK_MARGIN:
                near_kink = True
            flat_value[i] = original - h
            f_minus = closure()
            if kink_margin is not None and kink_margin() < KINK_MARGIN:
                near_kink = True
            flat_value[i] = original

            if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                raise NumericError(
                    f"closure returned non-finite loss while perturbing {p.name}[{i}]"
                )
            if near_kink:
                skipped += 1
                continue
            numeric = (f_plus - f_minus) / (2.0 * h)
            err = _rel_error(float(flat_grad[i]), numeric)
            max_err = max(max_err, err)
            checked += 1
            if err > tolerance:
                rows, cols = p.value.shape
                failures.append(
                    GradCheckFailure(
                        param=p.name,
                        index=(i // cols, i % cols),
                        analytic=float(flat_grad[i]),
                        numeric=numeric,
                        rel_error=err,
                    )
                )
    # Leave the params with their analytic gradients restored so callers can
    # inspect them after the check.
    closure()
    return GradCheckReport(
        max_rel_error=max_err,
        checked=checked,
        skipped=skipped,
        failures=failures,
        tolerance=tolerance,
    )
