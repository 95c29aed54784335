"""Richardson tables, log-log slope fits and batched linear solves."""

import logging
from collections.abc import Sequence

import numpy as np
from numpy.typing import NDArray

log = logging.getLogger(__name__)


def richardson_extrapolate(
        base_values: Sequence[NDArray[np.float64] | float],
        p: int,
        r: float = 2.0,
) -> NDArray[np.float64] | float:
    """Richardson extrapolation on a sequence of approximations.

    Entries are approximations at step sizes shrinking by ``r``; the error
    expansion is assumed to run in powers p, 2p, 3p, ... of the step.

    Raises:
        ValueError: If ``base_values`` has fewer than two entries.
    """
    return richardson_diagonal(base_values, p, r)[-1]


def richardson_diagonal(
        base_values: Sequence[NDArray[np.float64] | float],
        p: int,
        r: float = 2.0,
) -> list:
    """Return the diagonal T_00, T_11, ... of the Richardson tableau.

    T_jj combines the first j+1 entries; successive differences along the
    diagonal are the usual a-posteriori error estimates.
    """
    n = len(base_values)
    if n < 2:
        raise ValueError("richardson_extrapolate requires at least two base values.")

    vals = [np.asarray(v, dtype=float) for v in base_values]
    diagonal = [vals[0].copy()]

    for j in range(1, n):
        factor = r ** (p * j)
        for k in range(n - 1, j - 1, -1):
            vals[k] = (factor * vals[k] - vals[k - 1]) / (factor - 1.0)
        diagonal.append(vals[j].copy())

    return [float(d) if d.ndim == 0 else d for d in diagonal]


def sliding_richardson(
        values: Sequence[NDArray[np.float64]],
        p: int,
        depth: int,
        r: float = 2.0,
) -> tuple[NDArray[np.float64], float]:
    """Extrapolate along a long geometric grid with fixed-depth windows.

    Every run of ``depth + 1`` consecutive entries is extrapolated on its own;
    the window whose estimate moved least from its predecessor wins. Large
    steps lose to truncation and tiny steps to cancellation, so the quietest
    window sits in between.

    Returns:
        (estimate, spread) where spread is the max-norm change that selected it.
    """
    vals = [np.asarray(v, dtype=float) for v in values]
    width = depth + 1
    if len(vals) < width:
        raise ValueError(f"need at least {width} values, got {len(vals)}")

    estimates = [np.asarray(richardson_extrapolate(vals[w:w + width], p, r))
                 for w in range(len(vals) - width + 1)]
    if len(estimates) == 1:
        diag = richardson_diagonal(vals, p, r)
        return estimates[0], float(np.max(np.abs(np.asarray(diag[-1]) - np.asarray(diag[-2]))))

    spreads = [float(np.max(np.abs(estimates[w] - estimates[w - 1])))
               for w in range(1, len(estimates))]
    best = int(np.argmin(spreads))
    return estimates[best + 1], spreads[best]


def fit_loglog_slope(ts, residuals, floor: float) -> tuple[float | None, bool]:
    """Least-squares slope of log(residual) against log(t).

    Only residuals above ``floor`` take part. With fewer than two such points
    the data is exact to noise level: returns (None, True).
    """
    ts = np.asarray(ts, dtype=float)
    res = np.asarray(residuals, dtype=float)
    mask = res > floor
    if int(mask.sum()) < 2:
        return None, True
    slope = np.polyfit(np.log(ts[mask]), np.log(res[mask]), 1)[0]
    return float(slope), False


def solve_batched(a: NDArray[np.float64], b: NDArray[np.float64]) -> NDArray[np.float64]:
    """Solve a x = b where a is (n, n, *batch) and b is (n, *batch)."""
    n = a.shape[0]
    batch = a.shape[2:]
    if not batch:
        return np.linalg.solve(a, b)
    a_ = np.moveaxis(a.reshape(n, n, -1), -1, 0)
    b_ = np.broadcast_to(b, (n,) + batch).reshape(n, -1).T[..., None]
    x = np.linalg.solve(a_, b_)[..., 0]
    return x.T.reshape((n,) + batch)


def inv_batched(a: NDArray[np.float64]) -> NDArray[np.float64]:
    """Invert (n, n, *batch) matrices along the first two axes."""
    n = a.shape[0]
    batch = a.shape[2:]
    if not batch:
        return np.linalg.inv(a)
    a_ = np.moveaxis(a.reshape(n, n, -1), -1, 0)
    inv = np.linalg.inv(a_)
    return np.moveaxis(inv, 0, -1).reshape((n, n) + batch)
