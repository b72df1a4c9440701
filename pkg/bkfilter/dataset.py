from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd

from .exceptions import DimensionMismatch, InvalidParameter, NonFiniteInput, ParseError

class ResponseKind(Enum):
    """
    The response model: a continuous response under the Gaussian linear
    model, or a binary response under the probit model.
    """
    LINEAR = "linear"
    PROBIT = "probit"

@dataclass(frozen=True)
class Dataset:
    """
    An ``n x p`` feature matrix with an ``n``-vector response.

    :param x:
        The feature matrix.

    :param y:
        The response, real for :attr:`ResponseKind.LINEAR`, 0/1 for
        :attr:`ResponseKind.PROBIT`.

    :param feature_names:
        One name per column. Defaults to ``x1 .. xp``.

    :param ResponseKind kind:
        The response model. Defaults to linear.
    """
    x: np.ndarray
    y: np.ndarray
    feature_names: tuple = None
    kind: ResponseKind = ResponseKind.LINEAR

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 2:
            raise DimensionMismatch("x must be a matrix, got shape {}".format(x.shape))
        if y.shape != (x.shape[0],):
            raise DimensionMismatch("y has shape {} but x has {} rows".format(y.shape, x.shape[0]))
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise NonFiniteInput("dataset contains non-finite values")
        kind = ResponseKind(self.kind)
        if kind is ResponseKind.PROBIT and not np.all((y == 0) | (y == 1)):
            raise InvalidParameter("a probit response must be 0 or 1")
        names = self.feature_names
        if names is None:
            names = tuple("x{}".format(j + 1) for j in range(x.shape[1]))
        names = tuple(str(name) for name in names)
        if len(names) != x.shape[1]:
            raise DimensionMismatch("{} feature names for {} columns".format(len(names), x.shape[1]))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "kind", kind)

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def p(self):
        return self.x.shape[1]

    def with_design(self, x):
        """
        Returns a copy with the feature matrix replaced, e.g. by its
        standardized or centered version.
        """
        return replace(self, x=x)

    def with_response(self, y):
        """
        Returns a copy with the response replaced.
        """
        return replace(self, y=y)

def load_dataset(path, response, kind=ResponseKind.LINEAR):
    """
    Reads a dataset from a UTF-8 CSV file with a header row. The column
    named ``response`` is the response; every other column is a numeric
    feature.

    :param path:
        The CSV file.

    :param str response:
        The name of the response column.

    :param kind:
        The response model, a :class:`ResponseKind` or its value.
    """
    path = Path(path)
    kind = ResponseKind(kind)
    if not path.is_file():
        raise FileNotFoundError("dataset file not found: {}".format(path))
    try:
        frame = pd.read_csv(path, encoding="utf-8", dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise ParseError("{}: {}".format(path, e)) from None

    if response not in frame.columns:
        raise ParseError("{}: response column '{}' not found (columns: {})".format(
            path, response, ", ".join(frame.columns)))
    features = [c for c in frame.columns if c != response]
    if not features:
        raise ParseError("{}: no feature columns besides '{}'".format(path, response))

    numeric = frame.apply(lambda col: pd.to_numeric(col.str.strip(), errors="coerce"))
    bad = numeric.isna() | ~np.isfinite(numeric.to_numpy(dtype=float))
    if bad.to_numpy().any():
        row, col = np.argwhere(bad.to_numpy())[0]
        # the header is row 1 of the file
        raise ParseError("{}: row {}, column '{}': value {!r} is not a finite number".format(
            path, row + 2, frame.columns[col], frame.iat[row, col]))

    y = numeric[response].to_numpy(dtype=float)
    if kind is ResponseKind.PROBIT and not np.all((y == 0) | (y == 1)):
        row = int(np.flatnonzero((y != 0) & (y != 1))[0])
        raise ParseError("{}: row {}, column '{}': probit response must be 0 or 1, got {!r}".format(
            path, row + 2, response, frame.at[row, response]))

    return Dataset(
        x=numeric[features].to_numpy(dtype=float),
        y=y,
        feature_names=tuple(features),
        kind=kind,
        )
