"""Log-log power-law fits."""

from dataclasses import dataclass

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class ExponentFit:
    """Least-squares fit ``log y = slope * log x + intercept``.

    ``scales`` and ``values`` hold all samples; ``used`` marks those that
    entered the regression.
    """

    slope: float
    intercept: float
    r2: float
    scales: tuple
    values: tuple
    used: tuple

    def summary(self):
        return f"slope={self.slope:.6f} intercept={self.intercept:.6f} r2={self.r2:.6f}"

    def to_csv(self):
        lines = ["scale,value,used"]
        lines += [f"{s:.12g},{v:.12g},{int(u)}" for s, v, u in zip(self.scales, self.values, self.used)]
        return "\n".join(lines) + "\n"


def fit_power_law(scales, values, used=None):
    """Fit a power law to positive samples.

    Raises
    ------
    ValueError
        With fewer than two distinct usable scales or a non-positive value.
    """
    x = np.asarray(scales, dtype=float)
    y = np.asarray(values, dtype=float)
    mask = np.ones(x.shape, dtype=bool) if used is None else np.asarray(used, dtype=bool)
    if np.any(y[mask] <= 0) or np.any(x[mask] <= 0):
        raise ValueError("power-law fit needs positive scales and values")
    if np.unique(x[mask]).size < 2:
        raise ValueError("degenerate family: need at least two distinct scales")
    res = stats.linregress(np.log(x[mask]), np.log(y[mask]))
    return ExponentFit(float(res.slope), float(res.intercept), float(res.rvalue ** 2),
                       tuple(x.tolist()), tuple(y.tolist()), tuple(mask.tolist()))
