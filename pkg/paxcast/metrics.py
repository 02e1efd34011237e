from __future__ import annotations

import numpy as np

from paxcast.errors import EmptyInputError
from paxcast.errors import InvalidInputError

# ----- forecast error
# MAE is in persons; MAPE in percent over nonzero truths.


def remove_nan(forecast, truth):
    """
    Compare forecast array and truth array,
    Then remove both at steps where either or both have NaN

    Arguments
    ---------
    forecast: array-like
        Forecast values.
    truth: array-like
        Observed values.

    Returns
    -------
    forecast, truth: ndarray
        pair with NaN steps removed
    """
    forecast = np.asarray(forecast, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if forecast.shape != truth.shape:
        raise InvalidInputError(
            f"forecast and truth differ in shape ({forecast.shape}, {truth.shape})",
        )
    pairs = np.stack((forecast, truth), axis=1)
    pairs = pairs[~np.isnan(pairs).any(axis=1), :]
    return pairs[:, 0], pairs[:, 1]


def mae(forecast, truth):
    """
    Mean absolute error between two arrays.

    Returns
    -------
    mae: float
    """
    forecast, truth = remove_nan(forecast, truth)
    if truth.size == 0:
        raise EmptyInputError("MAE of an empty window")
    return float(np.mean(np.abs(truth - forecast)))


def mape(forecast, truth):
    """
    Mean absolute percentage error over nonzero truths.

    Returns
    -------
    mape: float or None
        None when every truth is zero
    excluded: int
        number of zero-truth steps left out
    """
    forecast, truth = remove_nan(forecast, truth)
    if truth.size == 0:
        raise EmptyInputError("MAPE of an empty window")
    nonzero = truth != 0
    excluded = int(truth.size - nonzero.sum())
    if not nonzero.any():
        return None, excluded
    ratio = np.abs(truth[nonzero] - forecast[nonzero]) / truth[nonzero]
    return float(np.mean(ratio) * 100), excluded


def relative_improvement(error, reference):
    """Percent by which error improves on reference, e.g. 80 vs 100 gives 20"""
    if reference == 0:
        return None
    return (reference - error) / reference * 100
