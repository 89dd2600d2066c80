"""Column-sketch approximation of symmetric nonnegative-definite matrices.

The sketch S = pi * tau picks ``width`` columns of a p x p PSD matrix M
through a permutation pi and a truncation tau, giving the low-rank
approximation

    M  ~  (M S) (S^T M S)^+ (M S)^T.

The approximation is exact whenever rank(M) <= width and the selected
columns span the range of M.  Because F = M S already contains everything
the approximation needs, the eigenstructure of the approximated M can be
read off the SVD of F alone: the left singular vectors of F approximate
the eigenvectors of M and the singular values of F approximate its
eigenvalues.  Downstream regression code only ever builds F, never M.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ValidationError

# relative tolerance for the symmetry check on sketched matrices
SYMMETRY_RTOL = 1e-8


def _rank_cutoff(singular_values, shape):
    """Singular values at or below max(shape) * eps * s_max count as zero."""
    if singular_values.size == 0:
        return 0
    tol = max(shape) * np.finfo(float).eps * singular_values[0]
    return int(np.sum(singular_values > tol))


@dataclass(frozen=True)
class SketchSelector:
    """A permutation of {0..p-1} plus a width; selects permutation[:width]."""

    permutation: np.ndarray
    width: int

    def __post_init__(self):
        perm = np.asarray(self.permutation, dtype=int)
        object.__setattr__(self, "permutation", perm)
        p = perm.size
        if p == 0 or np.any(np.sort(perm) != np.arange(p)):
            raise ValidationError("selector permutation must be a bijection on {0..p-1}")
        if not 1 <= self.width <= p:
            raise DimensionError(f"selector width {self.width} outside [1, {p}]")

    @property
    def p(self):
        return self.permutation.size

    @property
    def selected(self):
        return self.permutation[: self.width]

    def matrix(self):
        """Dense p x width selection matrix S = pi * tau (one unit entry per column)."""
        s = np.zeros((self.p, self.width))
        s[self.selected, np.arange(self.width)] = 1.0
        return s


@dataclass(frozen=True)
class SketchFactorization:
    """Reduced SVD of a sketch F = U diag(values) V^T, rank cutoff applied.

    ``left`` is p x r with orthonormal columns, ``values`` the nonincreasing
    positive singular values, ``right`` ell x r with orthonormal columns.
    The columns of ``left`` approximate eigenvectors of the sketched matrix
    and ``values`` its eigenvalues.
    """

    matrix: np.ndarray
    left: np.ndarray
    values: np.ndarray
    right: np.ndarray

    @property
    def rank(self):
        return self.values.size


def nystrom_approx(m, selector):
    """Approximate a symmetric PSD matrix through a column selection.

    Returns (M S)(S^T M S)^+ (M S)^T; exact when the selected columns span
    the range of M and rank(M) <= selector.width.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValidationError("matrix contains non-finite entries")
    scale = np.abs(m).max()
    if scale > 0 and np.abs(m - m.T).max() > SYMMETRY_RTOL * scale:
        raise ValidationError("matrix is not symmetric to tolerance")
    if selector.p != m.shape[0]:
        raise DimensionError(
            f"selector is over {selector.p} columns but matrix has {m.shape[0]}"
        )
    cols = selector.selected
    c = m[:, cols]                      # M S: the selected columns
    w = c[cols, :]                      # S^T M S
    rcond = max(m.shape[0], selector.width) * np.finfo(float).eps
    approx = c @ np.linalg.pinv(w, rcond=rcond, hermitian=True) @ c.T
    return 0.5 * (approx + approx.T)


def approx_eigvecs(f):
    """Reduced SVD of a sketch matrix F with small singular values dropped.

    A zero F yields an empty spectrum (rank 0) rather than an error.
    """
    f = np.asarray(f, dtype=float)
    if f.ndim != 2:
        raise DimensionError(f"expected a 2-d sketch matrix, got shape {f.shape}")
    if not np.all(np.isfinite(f)):
        raise ValidationError("sketch matrix contains non-finite entries")
    if not f.any():
        p, ell = f.shape
        return SketchFactorization(
            matrix=f,
            left=np.zeros((p, 0)),
            values=np.zeros(0),
            right=np.zeros((ell, 0)),
        )
    u, s, vt = np.linalg.svd(f, full_matrices=False)
    r = _rank_cutoff(s, f.shape)
    return SketchFactorization(matrix=f, left=u[:, :r], values=s[:r], right=vt[:r].T)
