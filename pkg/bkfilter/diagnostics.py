import logging
from typing import NamedTuple

import numpy as np
import pandas as pd

from .exceptions import EmptyTrace

logger = logging.getLogger(__name__)

# |mean delta| above this many standard errors fails the validity check
DELTA_TOLERANCE = 4.0

# lag-1 autocorrelations are clipped to this magnitude in the standard error
MAX_AUTOCORR = 0.99

def running_mean(values):
    values = np.asarray(values, dtype=float)
    return np.cumsum(values) / np.arange(1, values.shape[0] + 1)

def lag1_autocorrelation(values):
    """
    Returns the lag-1 autocorrelation of a chain, or 0 when it is shorter
    than 3 draws or constant.
    """
    values = np.asarray(values, dtype=float)
    if values.shape[0] < 3:
        return 0.0
    centered = values - values.mean()
    denominator = centered @ centered
    if denominator == 0:
        return 0.0
    return float(centered[1:] @ centered[:-1] / denominator)

class DeltaCheck(NamedTuple):
    """
    The verdict on a trace of the knockoff validity statistic.

    ``flag`` is ``pass`` when ``|mean| <= 4 SE``, ``fail`` otherwise,
    ``degenerate`` when every draw is zero (knockoffs equal to the
    features) and ``insufficient`` for fewer than two draws.
    """
    mean: float
    sd: float
    lag1_autocorr: float
    se: float
    flag: str

def check_delta(delta):
    """
    Tests whether the validity statistic fluctuates around zero. The
    standard error is inflated for autocorrelation by
    ``sqrt((1 + r) / (1 - r))`` with ``r`` the lag-1 autocorrelation.

    :param delta:
        The statistic, one value per retained draw.
    """
    delta = np.asarray(delta, dtype=float)
    if delta.shape[0] == 0:
        raise EmptyTrace("the trace has no validity statistic draws")
    mean = float(delta.mean())
    if delta.shape[0] < 2:
        return DeltaCheck(mean, 0.0, 0.0, float("nan"), "insufficient")
    sd = float(delta.std(ddof=1))
    r = float(np.clip(lag1_autocorrelation(delta), -MAX_AUTOCORR, MAX_AUTOCORR))
    se = sd * np.sqrt((1.0 + r) / (1.0 - r)) / np.sqrt(delta.shape[0])
    if sd == 0:
        flag = "degenerate" if mean == 0 else "fail"
    else:
        flag = "pass" if abs(mean) <= DELTA_TOLERANCE * se else "fail"
    logger.info("validity statistic: mean %.4g, SE %.4g -> %s", mean, se, flag)
    return DeltaCheck(mean, sd, r, float(se), flag)

def summarize_parameters(trace):
    """
    Returns a :class:`pandas.DataFrame` with the mean, standard deviation
    and lag-1 autocorrelation of every traced parameter.
    """
    frame = trace.to_frame().drop(columns=["iter"])
    ddof = 1 if len(frame) > 1 else 0
    return pd.DataFrame({
        "parameter": frame.columns,
        "mean": frame.mean().to_numpy(),
        "sd": frame.std(ddof=ddof).to_numpy(),
        "lag1_autocorr": [lag1_autocorrelation(frame[c]) for c in frame.columns],
        })
