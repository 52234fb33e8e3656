"""Trial metrics and their aggregation."""
import numpy as np

from ..exceptions import DimensionError


def metric_nmse(est, truth):
    """Squared error and squared truth norms ``(||est - truth||^2, ||truth||^2)``."""
    est = np.asarray(est, dtype=np.complex128)
    truth = np.asarray(truth, dtype=np.complex128)
    if est.shape != truth.shape:
        raise DimensionError(f"estimate {est.shape} and truth {truth.shape} differ in shape")
    return float(np.sum(np.abs(est - truth) ** 2)), float(np.sum(np.abs(truth) ** 2))


def nearest_indices(angles, grid):
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    return np.abs(angles[:, None] - np.asarray(grid)[None, :]).argmin(axis=1)


def metric_angle_error(estimated, truth, grid):
    """1 when the grid-index sets of the estimate and the (snapped) truth differ."""
    est = set(nearest_indices(estimated, grid).tolist())
    ref = set(nearest_indices(truth, grid).tolist())
    return int(est != ref)


def nmse_db(num, den):
    """``10 log10(sum num / sum den)``; ``-inf`` for a perfect estimate."""
    if den <= 0:
        return float("nan")
    if num == 0:
        return float("-inf")
    return float(10.0 * np.log10(num / den))
