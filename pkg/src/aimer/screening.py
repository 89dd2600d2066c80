"""Centering, marginal correlations, and threshold-based column selection.

Screening ranks columns by the absolute marginal correlation with the
response and keeps the set A = {j : |t_j| > t_star}.  The kept columns are
moved to the front (strongest first, ties broken by ascending index) so the
design can be viewed as X_new = [X_A, X_Ac].
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ValidationError


class ZeroVarianceWarning(UserWarning):
    """Columns with no variation get marginal correlation 0 and are never selected."""


@dataclass
class ExpressionDataset:
    """Centered design and response plus the statistics needed to predict later."""

    x: np.ndarray                      # n x p, columns centered
    y: np.ndarray                      # length n, centered
    column_labels: tuple
    column_means: np.ndarray
    response_mean: float

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def p(self):
        return self.x.shape[1]


def default_labels(p):
    width = max(4, len(str(p)))
    return tuple(f"g{j + 1:0{width}d}" for j in range(p))


def center(x_raw, y_raw, labels=None):
    """Center columns and response, keeping the means for prediction.

    Raises on NaN entries and on a constant response (nothing to fit).
    """
    x_raw = np.asarray(x_raw, dtype=float)
    y_raw = np.asarray(y_raw, dtype=float).ravel()
    if x_raw.ndim != 2:
        raise DimensionError(f"design must be 2-d, got shape {x_raw.shape}")
    n, p = x_raw.shape
    if n < 2:
        raise DimensionError("need at least two rows to center")
    if y_raw.size != n:
        raise DimensionError(f"response has {y_raw.size} entries for {n} rows")
    if not np.all(np.isfinite(x_raw)) or not np.all(np.isfinite(y_raw)):
        raise ValidationError("input contains NaN or infinite entries")
    if np.ptp(y_raw) == 0:
        raise ValidationError("response is constant; nothing to fit")
    if labels is None:
        labels = default_labels(p)
    else:
        labels = tuple(str(l) for l in labels)
        if len(labels) != p:
            raise DimensionError(f"{len(labels)} labels for {p} columns")
        if len(set(labels)) != p:
            raise ValidationError("column labels are not unique")
    column_means = x_raw.mean(axis=0)
    response_mean = float(y_raw.mean())
    return ExpressionDataset(
        x=x_raw - column_means,
        y=y_raw - response_mean,
        column_labels=labels,
        column_means=column_means,
        response_mean=response_mean,
    )


def marginal_correlations(data):
    """Correlation of each column with the response.

    This equals the standardized univariate regression coefficient; the
    n-vs-(n-1) denominator convention cancels.  Zero-variance columns get 0
    with a ZeroVarianceWarning.
    """
    xc, yc = data.x, data.y
    y_norm = np.linalg.norm(yc)
    if y_norm == 0:
        raise ValidationError("response has zero variance")
    col_norms = np.linalg.norm(xc, axis=0)
    dead = col_norms == 0
    if dead.any():
        warnings.warn(
            f"{int(dead.sum())} zero-variance column(s) assigned correlation 0",
            ZeroVarianceWarning,
            stacklevel=2,
        )
    t = np.zeros(data.p)
    alive = ~dead
    t[alive] = (xc[:, alive].T @ yc) / (col_norms[alive] * y_norm)
    return np.clip(t, -1.0, 1.0)


@dataclass
class ScreeningPlan:
    """Selected set A and the column order [A (by |t| desc), A^c (by index)]."""

    marginals: np.ndarray
    threshold: float
    selected: np.ndarray               # A in rule order: |t| descending, index ascending
    order: np.ndarray = field(init=False)

    def __post_init__(self):
        p = self.marginals.size
        rest = np.setdiff1d(np.arange(p), self.selected, assume_unique=False)
        self.order = np.concatenate([self.selected, rest])

    @property
    def ell(self):
        return self.selected.size

    @property
    def p(self):
        return self.marginals.size

    def inverse_order(self):
        inv = np.empty(self.p, dtype=int)
        inv[self.order] = np.arange(self.p)
        return inv


def _rule_order(t):
    """Indices sorted by |t| descending, ties by ascending index."""
    mags = np.abs(t)
    return np.lexsort((np.arange(t.size), -mags))


def screen(t, t_star, max_count=None):
    """Select A = {j : |t_j| > t_star}.

    With ``max_count`` the selection is truncated to the first ``max_count``
    columns under the deterministic order (|t| descending, index ascending);
    this is how count-based selection stays exact when magnitudes tie at the
    cutoff.
    """
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise ValidationError("marginal correlations contain non-finite entries")
    if not np.isfinite(t_star) or t_star < 0:
        raise ValidationError(f"threshold must be a nonnegative real, got {t_star}")
    ranked = _rule_order(t)
    passing = ranked[np.abs(t[ranked]) > t_star]
    if passing.size == 0:
        raise ValidationError(
            f"no column passes |t| > {t_star}; lower the threshold"
        )
    if max_count is not None:
        passing = passing[:max_count]
    return ScreeningPlan(marginals=t, threshold=float(t_star), selected=passing)


def select_count(t, ell):
    """Plan selecting exactly the ``ell`` strongest columns under the tie rule."""
    t = np.asarray(t, dtype=float)
    p = t.size
    if not 1 <= ell <= p:
        raise DimensionError(f"requested {ell} columns out of {p}")
    ranked = _rule_order(t)
    boundary = abs(t[ranked[ell - 1]])
    if boundary == 0:
        raise ValidationError(
            f"cannot select {ell} columns: only {int(np.sum(np.abs(t) > 0))} "
            "have nonzero correlation"
        )
    t_star = np.nextafter(boundary, -np.inf)
    return screen(t, t_star, max_count=ell)


def threshold_for_count(t, ell):
    """The threshold just below the ell-th largest |t_j|."""
    return select_count(t, ell).threshold
