"""Finite-difference gradient oracle.

Compares analytic gradients against central differences coordinate by
coordinate. The relative error for one coordinate is
|analytic - numeric| / max(|analytic|, |numeric|, 1), so tiny gradients are
compared on an absolute scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Union

import numpy as np

from .tensor import ParamGroup, Tensor


class ConfigError(ValueError):
    pass


LossFn = Callable[[bool], float]
Params = Union[ParamGroup, Iterable[tuple[str, Tensor]]]


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    worst_index: tuple[int, ...]
    coords_checked: int
    per_param: dict[str, float] = field(default_factory=dict)

    def __str__(self) -> str:
        return (
            f"max rel error {self.max_rel_error:.3e} at {self.worst_param}{list(self.worst_index)} "
            f"({self.coords_checked} coordinates)"
        )


def grad_check(loss_fn: LossFn, params: Params, eps: float = 1e-5) -> GradCheckReport:
    """Check analytic against numeric gradients for every parameter coordinate.

    loss_fn(with_grad) must return the scalar loss; when with_grad is true it
    must also accumulate analytic gradients into the parameters. Parameters
    are perturbed in place and restored exactly.
    """
    if eps <= 0:
        raise ConfigError(f"eps must be positive, got {eps}")
    items = params.items() if isinstance(params, ParamGroup) else list(params)

    for _, tensor in items:
        tensor.zero_grad()
    loss_fn(True)
    analytic = {
        name: (np.zeros_like(t.data) if t.grad is None else t.grad.copy()) for name, t in items
    }

    report = GradCheckReport(0.0, "", (), 0)
    for name, tensor in items:
        worst = 0.0
        for idx in np.ndindex(tensor.data.shape):
            original = tensor.data[idx]
            tensor.data[idx] = original + eps
            loss_plus = loss_fn(False)
            tensor.data[idx] = original - eps
            loss_minus = loss_fn(False)
            tensor.data[idx] = original
            numeric = (loss_plus - loss_minus) / (2.0 * eps)
            a = analytic[name][idx]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1.0)
            report.coords_checked += 1
            if rel > worst:
                worst = rel
            if rel > report.max_rel_error:
                report.max_rel_error = rel
                report.worst_param = name
                report.worst_index = idx
        report.per_param[name] = worst
    return report
