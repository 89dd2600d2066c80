"""Latent-factor data generator, population quantities, and assumption audit.

The generative model draws n rows of

    x = V diag(sqrt(strengths)) u + feature_noise * e,
    y = u[:k] . weights       + response_noise * z,

with u, e, z independent standard normal and V a p x g matrix of
orthonormal factor loadings built from hand-specified support blocks.
Population identities used throughout:

    marginal covariance  cov(x, y) = V_k diag(sqrt(strengths_k)) weights
    regression vector    beta      = V_k diag(sqrt(s_k) / (s_k + fn^2)) weights

The audit half of the module measures how badly marginal screening would
miss truly relevant columns under a given sparse precision matrix: it forms
beta = precision @ sigma_xy and reports the fraction of nonzero beta_j whose
marginal covariance is zero (the false negative rate).
"""

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse

from .errors import DimensionError, ValidationError
from .estimators import _cd_lasso
from .screening import center

ZERO_TOL = 1e-12              # population quantities are exact algebraic zeros


@dataclass(frozen=True)
class FactorBlock:
    """Support of one factor loading plus optional seed values on it.

    ``values`` defaults to all ones; orthogonalization against earlier
    factors happens inside the declared support, so a later factor that
    should cancel against an earlier one must declare a support containing
    the earlier factor's.
    """

    support: tuple
    values: tuple = None

    def __post_init__(self):
        support = tuple(int(j) for j in self.support)
        object.__setattr__(self, "support", support)
        if len(support) == 0:
            raise ValidationError("factor support must be nonempty")
        if len(set(support)) != len(support):
            raise ValidationError("factor support has repeated indices")
        if self.values is not None:
            values = tuple(float(v) for v in self.values)
            object.__setattr__(self, "values", values)
            if len(values) != len(support):
                raise DimensionError(
                    f"{len(values)} seed values for a support of {len(support)}"
                )


@dataclass(frozen=True)
class LatentFactorConfig:
    n: int
    p: int
    n_factors: int                    # total factors driving x
    n_response_factors: int           # leading factors that drive y
    strengths: tuple                  # nonincreasing positive, one per factor
    weights: tuple                    # response weight per leading factor
    feature_noise: float
    response_noise: float
    blocks: tuple                     # FactorBlock per factor
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "strengths", tuple(float(s) for s in self.strengths))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if self.n < 1 or self.p < 1:
            raise DimensionError("n and p must be positive")
        g, k = self.n_factors, self.n_response_factors
        if not 1 <= k <= g:
            raise ValidationError(f"need 1 <= k <= g, got k={k}, g={g}")
        if g > self.p:
            raise DimensionError(f"{g} factors in {self.p} columns")
        if len(self.strengths) != g:
            raise DimensionError(f"{len(self.strengths)} strengths for {g} factors")
        if any(s <= 0 for s in self.strengths):
            raise ValidationError("factor strengths must be positive")
        if any(a < b for a, b in zip(self.strengths, self.strengths[1:])):
            raise ValidationError("factor strengths must be nonincreasing")
        if len(self.weights) != k:
            raise DimensionError(f"{len(self.weights)} weights for {k} response factors")
        if self.feature_noise <= 0 or self.response_noise <= 0:
            raise ValidationError("noise scales must be positive")
        if len(self.blocks) != g:
            raise DimensionError(f"{len(self.blocks)} blocks for {g} factors")
        for block in self.blocks:
            if max(block.support) >= self.p or min(block.support) < 0:
                raise ValidationError("factor support outside {0..p-1}")

    def with_weights(self, weights):
        return replace(self, weights=tuple(weights))


@dataclass
class SimulatedInstance:
    raw_x: np.ndarray
    raw_y: np.ndarray
    data: object                      # centered ExpressionDataset
    loadings: np.ndarray              # p x g orthonormal columns
    true_beta: np.ndarray
    true_sigma_xy: np.ndarray

    @property
    def beta_support(self):
        return np.flatnonzero(np.abs(self.true_beta) > ZERO_TOL)

    @property
    def marginal_support(self):
        return np.flatnonzero(np.abs(self.true_sigma_xy) > ZERO_TOL)


def build_loadings(blocks, p):
    """Orthonormal p x g loading matrix from support blocks.

    Each factor starts as its seed values on its support and is
    orthogonalized against all earlier factors, then normalized.  The
    result must stay inside the declared support; a spec whose projections
    leak outside it (or collapse to zero) is infeasible.
    """
    g = len(blocks)
    v = np.zeros((p, g))
    for k, block in enumerate(blocks):
        raw = np.zeros(p)
        vals = block.values if block.values is not None else (1.0,) * len(block.support)
        raw[list(block.support)] = vals
        norm0 = np.linalg.norm(raw)
        if norm0 == 0:
            raise ValidationError(f"factor {k + 1} has all-zero seed values")
        resid = raw - v[:, :k] @ (v[:, :k].T @ raw)
        norm = np.linalg.norm(resid)
        if norm <= 1e-10 * norm0:
            raise ValidationError(
                f"factor {k + 1} is linearly dependent on earlier factors"
            )
        col = resid / norm
        outside = np.ones(p, dtype=bool)
        outside[list(block.support)] = False
        if np.any(np.abs(col[outside]) > ZERO_TOL):
            raise ValidationError(
                f"factor {k + 1} leaks outside its declared support after "
                "orthogonalization; declare a support covering the overlap"
            )
        v[:, k] = col
    return v


def simulate(config):
    """Draw one dataset; bitwise deterministic given config.seed.

    Draw order is fixed: factor scores u, then feature noise e, then
    response noise z.
    """
    v = build_loadings(config.blocks, config.p)
    rng = np.random.default_rng(config.seed)
    g, k = config.n_factors, config.n_response_factors
    u = rng.standard_normal((config.n, g))
    e = rng.standard_normal((config.n, config.p))
    z = rng.standard_normal(config.n)
    scales = np.sqrt(np.asarray(config.strengths))
    raw_x = (u * scales) @ v.T + config.feature_noise * e
    raw_y = u[:, :k] @ np.asarray(config.weights) + config.response_noise * z
    return SimulatedInstance(
        raw_x=raw_x,
        raw_y=raw_y,
        data=center(raw_x, raw_y),
        loadings=v,
        true_beta=population_beta(config, loadings=v),
        true_sigma_xy=population_marginal_cov(config, loadings=v),
    )


def population_marginal_cov(config, loadings=None):
    """cov(x_j, y) for every column: V_k diag(sqrt(strengths_k)) weights."""
    v = build_loadings(config.blocks, config.p) if loadings is None else loadings
    k = config.n_response_factors
    scales = np.sqrt(np.asarray(config.strengths[:k]))
    return v[:, :k] @ (scales * np.asarray(config.weights))


def population_beta(config, loadings=None):
    """Population least-squares coefficients of y on x.

    Equals V_k diag(sqrt(s) / (s + feature_noise^2)) weights since the
    feature covariance is V diag(strengths) V^T + feature_noise^2 I.
    """
    v = build_loadings(config.blocks, config.p) if loadings is None else loadings
    k = config.n_response_factors
    s = np.asarray(config.strengths[:k])
    filt = np.sqrt(s) / (s + config.feature_noise**2)
    return v[:, :k] @ (filt * np.asarray(config.weights))


def population_feature_cov(config, loadings=None):
    """Dense p x p feature covariance V diag(strengths) V^T + fn^2 I (small p only)."""
    v = build_loadings(config.blocks, config.p) if loadings is None else loadings
    return (v * np.asarray(config.strengths)) @ v.T + config.feature_noise**2 * np.eye(
        config.p
    )


def solve_weight_for_zero_marginals(config, target_genes):
    """Weight for the last response factor cancelling cov(x_j, y) on targets.

    Targets must sit in the overlap between the last response factor and
    earlier ones, with a constant contribution ratio so a single weight can
    cancel them all.  Returns the full updated weight tuple.
    """
    targets = np.asarray(sorted(set(int(j) for j in target_genes)), dtype=int)
    if targets.size == 0:
        raise ValidationError("no target genes given")
    if targets.min() < 0 or targets.max() >= config.p:
        raise ValidationError("target genes outside {0..p-1}")
    k = config.n_response_factors
    if k < 2:
        raise ValidationError("cancellation needs at least two response factors")
    v = build_loadings(config.blocks, config.p)
    scales = np.sqrt(np.asarray(config.strengths[:k]))
    weights = np.asarray(config.weights)
    earlier = v[targets, : k - 1] @ (scales[: k - 1] * weights[: k - 1])
    last = scales[k - 1] * v[targets, k - 1]
    if np.any(np.abs(last) <= ZERO_TOL):
        raise ValidationError(
            "a target gene is outside the last response factor's support"
        )
    if np.all(np.abs(earlier) <= ZERO_TOL):
        raise ValidationError(
            "targets have no contribution from earlier factors; "
            "cancellation is impossible unless the weight is zero"
        )
    candidates = -earlier / last
    spread = candidates.max() - candidates.min()
    if spread > 1e-9 * max(1.0, np.abs(candidates).max()):
        raise ValidationError(
            "inconsistent system: the earlier-to-last factor ratio is not "
            "constant across targets"
        )
    new_weights = weights.copy()
    new_weights[k - 1] = candidates.mean()
    return tuple(new_weights)


@dataclass
class AssumptionAudit:
    """One column of the audit table: precision sparsity vs screening misses."""

    precision_sparsity: float         # fraction of zero off-diagonal entries
    beta_nonzero_fraction: float
    false_negative_rate: float        # None when beta is identically zero
    n_beta_nonzero: int
    n_false_negatives: int
    error: str = None


def assumption_fnr(precision, sigma_xy, zero_tol=ZERO_TOL):
    """Rate at which zero marginal covariance wrongly implies zero beta.

    Forms beta = precision @ sigma_xy and counts coordinates with nonzero
    beta but zero marginal covariance, as a fraction of all nonzero beta.
    """
    sigma_xy = np.asarray(sigma_xy, dtype=float).ravel()
    p = sigma_xy.size
    if scipy.sparse.issparse(precision):
        dense = precision.toarray()
    else:
        dense = np.asarray(precision, dtype=float)
    if dense.shape != (p, p):
        raise DimensionError(
            f"precision shape {dense.shape} does not match {p} marginals"
        )
    scale = np.abs(dense).max()
    if scale > 0 and np.abs(dense - dense.T).max() > 1e-8 * scale:
        raise ValidationError("precision matrix is not symmetric to tolerance")
    beta = dense @ sigma_xy
    beta_nz = np.abs(beta) > zero_tol
    off = dense.copy()
    np.fill_diagonal(off, 0.0)
    n_off = p * (p - 1)
    sparsity = 1.0 if n_off == 0 else 1.0 - np.count_nonzero(off) / n_off
    n_nz = int(beta_nz.sum())
    if n_nz == 0:
        return AssumptionAudit(
            precision_sparsity=sparsity,
            beta_nonzero_fraction=0.0,
            false_negative_rate=None,
            n_beta_nonzero=0,
            n_false_negatives=0,
            error="all regression coefficients are zero; rate undefined",
        )
    missed = beta_nz & (np.abs(sigma_xy) <= zero_tol)
    return AssumptionAudit(
        precision_sparsity=sparsity,
        beta_nonzero_fraction=n_nz / p,
        false_negative_rate=int(missed.sum()) / n_nz,
        n_beta_nonzero=n_nz,
        n_false_negatives=int(missed.sum()),
    )


def neighborhood_precision(data, lam):
    """Sparse precision estimate from per-column lasso regressions.

    Column j is regressed on all others; the (j, k) entry survives only when
    both directions keep a nonzero coefficient (AND rule) and is the average
    of the two directed estimates -gamma / residual_variance.  Diagonal
    entries are reciprocal residual variances.
    """
    if lam <= 0:
        raise ValidationError(f"neighborhood penalty must be positive, got {lam}")
    x = data.x
    n, p = x.shape
    gammas = np.zeros((p, p))          # gammas[j, k]: coefficient of x_k for target x_j
    inv_var = np.zeros(p)
    idx = np.arange(p)
    for j in range(p):
        others = idx != j
        target = x[:, j]
        coef, _ = _cd_lasso(x[:, others], target, lam)
        gammas[j, others] = coef
        resid = target - x[:, others] @ coef
        s2 = float(resid @ resid) / n
        if s2 <= 1e-12 * max(float(target @ target) / n, 1.0):
            raise ValidationError(
                f"column {j} is (near) perfectly explained by the others; "
                "residual variance too small for a precision estimate"
            )
        inv_var[j] = 1.0 / s2
    omega = scipy.sparse.lil_matrix((p, p))
    for j in range(p):
        omega[j, j] = inv_var[j]
        for k in range(j + 1, p):
            if gammas[j, k] != 0.0 and gammas[k, j] != 0.0:
                value = 0.5 * (-gammas[j, k] * inv_var[j] - gammas[k, j] * inv_var[k])
                omega[j, k] = value
                omega[k, j] = value
    return omega.tocsr()
