"""Central-difference gradient verification."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .tensor import Tensor


@dataclass
class GradCheckReport:
    entries: list = field(default_factory=list)  # (name, index, analytic, numeric, rel_error)
    tolerance: float = 1e-4

    @property
    def max_rel_error(self) -> float:
        return max((e[4] for e in self.entries), default=0.0)

    @property
    def passed(self) -> bool:
        return bool(self.entries) and self.max_rel_error < self.tolerance

    def failures(self):
        return [e for e in self.entries if e[4] >= self.tolerance]


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-12)


def grad_check(loss_fn: Callable[[], Tensor], params: dict[str, Tensor], eps: float = 1e-6,
               tolerance: float = 1e-4, samples: int | None = None, seed: int = 0,
               exclude: Callable[[str, tuple], bool] | None = None) -> GradCheckReport:
    """Compare backprop gradients of ``loss_fn()`` with central differences.

    ``loss_fn`` must rebuild the graph from the current values in ``params``.
    With ``samples`` set, that many (name, index) entries are drawn uniformly
    over all parameter entries; otherwise every entry is checked.  Entries for
    which ``exclude(name, index)`` is true are skipped (e.g. ReLU kinks).
    Failures are reported, never raised.
    """
    for t in params.values():
        t.zero_grad()
    loss_fn().backward()
    analytic = {k: t.grad.copy() for k, t in params.items()}

    candidates = [(k, idx) for k, t in params.items() for idx in np.ndindex(t.shape)]
    if exclude is not None:
        candidates = [c for c in candidates if not exclude(*c)]
    if samples is not None and samples < len(candidates):
        rng = np.random.default_rng(seed)
        pick = rng.choice(len(candidates), size=samples, replace=False)
        candidates = [candidates[i] for i in sorted(pick)]

    report = GradCheckReport(tolerance=tolerance)
    for name, idx in candidates:
        data = params[name].data
        old = data[idx]
        data[idx] = old + eps
        f_plus = float(loss_fn().data)
        data[idx] = old - eps
        f_minus = float(loss_fn().data)
        data[idx] = old
        numeric = (f_plus - f_minus) / (2.0 * eps)
        a = float(analytic[name][idx])
        report.entries.append((name, idx, a, numeric, relative_error(a, numeric)))
    return report


def exclude_exact_zeros(params: dict[str, Tensor]) -> Callable[[str, tuple], bool]:
    """Exclusion rule skipping entries that sit exactly on a ReLU kink (value 0)."""
    zeros = {k: t.data == 0.0 for k, t in params.items()}
    return lambda name, idx: bool(zeros[name][idx])
