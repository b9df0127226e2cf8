"""Central finite-difference verification of analytic gradients.

grad_check perturbs every parameter entry (or a seeded sample of
entries) by +-h, evaluates a scalar loss closure, and compares the
numeric slope against the analytic gradient the closure produced.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ArgumentError
from .layers import Param

# Below this gradient magnitude the relative error degenerates: the
# finite-difference probe carries rounding noise around 1e-9 absolute,
# so a correct 1e-4 gradient would show a large relative deviation.
# Such entries are compared absolutely against the tolerance instead,
# which still flags any corrupted backward at or above tolerance size.
_ABS_FLOOR = 1e-2


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_param: str
    worst_index: tuple
    entries_checked: int
    tolerance: float
    passed: bool


def grad_check(loss_fn, params: dict, *, h=1e-6, tolerance=1e-6,
               max_entries_per_param=None, rng=None) -> GradCheckResult:
    """Compare analytic gradients against central differences.

    loss_fn() must evaluate the model at the current parameter values,
    returning a scalar loss, and leave d loss / d param in each
    Param.grad. Gradients are zeroed here before the analytic call.
    Parameter values are restored after probing.

    When max_entries_per_param is given, that many entries per tensor
    are probed, chosen by `rng`; otherwise every entry is probed.
    """
    if not params:
        raise ArgumentError("grad_check needs at least one parameter")
    if max_entries_per_param is not None and rng is None:
        raise ArgumentError("sampled grad_check needs an rng for entry choice")

    for p in params.values():
        p.zero_grad()
    loss_fn()
    analytic = {name: p.grad.copy() for name, p in params.items()}

    worst = 0.0
    worst_param = ""
    worst_index = ()
    checked = 0
    for name, p in params.items():
        flat = p.value.reshape(-1)
        n = flat.size
        if max_entries_per_param is None or max_entries_per_param >= n:
            idxs = range(n)
        else:
            idxs = rng.choice(n, size=max_entries_per_param, replace=False)
        ga = analytic[name].reshape(-1)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + h
            lp = loss_fn()
            flat[i] = orig - h
            lm = loss_fn()
            flat[i] = orig
            numeric = (lp - lm) / (2.0 * h)
            a = ga[i]
            scale = max(abs(a), abs(numeric))
            err = abs(a - numeric) if scale < _ABS_FLOOR else abs(a - numeric) / scale
            checked += 1
            if err > worst:
                worst = err
                worst_param = name
                worst_index = np.unravel_index(i, p.value.shape)

    # leave the analytic gradients in place for the caller
    for name, p in params.items():
        p.grad[...] = analytic[name]
    return GradCheckResult(
        max_rel_error=float(worst),
        worst_param=worst_param,
        worst_index=tuple(int(v) for v in worst_index),
        entries_checked=checked,
        tolerance=tolerance,
        passed=bool(worst <= tolerance),
    )
