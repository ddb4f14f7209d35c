"""Two-parameter affine cost fit for range lookups.

Observed per-lookup counter cost is modelled as A + s*B where s is the
number of rows the range covers: A is the fixed traversal overhead of
reaching the first matching leaf, B the marginal cost per reported row.
Both coefficients are physically non-negative, so the fit is solved as a
non-negative least squares problem rather than a free linear regression.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from .errors import DegenerateSystem


@dataclass(frozen=True)
class CostFit:
    traversal: float
    intersect: float
    residual: float
    r_squared: float

    def predict(self, span) -> np.ndarray:
        s = np.asarray(span, dtype=np.float64)
        return self.traversal + s * self.intersect


def fit_cost_model(observations) -> CostFit:
    """Fit cost = traversal + span * intersect over (span, cost) pairs.

    observations is an iterable of (span, cost). Requires at least two
    distinct span values, otherwise the system is singular and
    DegenerateSystem is raised. Costs must be non-negative.
    """
    obs = list(observations)
    if len(obs) < 2:
        raise DegenerateSystem("need at least two observations to fit two parameters")
    spans = np.asarray([o[0] for o in obs], dtype=np.float64)
    costs = np.asarray([o[1] for o in obs], dtype=np.float64)
    if np.unique(spans).size < 2:
        raise DegenerateSystem("all observations share one span; the fit is singular")
    if np.any(costs < 0) or not np.all(np.isfinite(costs)) or not np.all(np.isfinite(spans)):
        raise ValueError("costs and spans must be finite and non-negative")
    design = np.column_stack([np.ones_like(spans), spans])
    coef, rnorm = nnls(design, costs)
    ss_res = float(rnorm) ** 2
    ss_tot = float(np.sum((costs - costs.mean()) ** 2))
    if ss_tot == 0.0:
        # No variance to explain: perfect when the residual is at float
        # noise level relative to the data, unexplained otherwise.
        scale = float(np.sum(costs**2)) or 1.0
        r2 = 1.0 if ss_res <= scale * 1e-24 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return CostFit(
        traversal=float(coef[0]),
        intersect=float(coef[1]),
        residual=float(rnorm),
        r_squared=r2,
    )
