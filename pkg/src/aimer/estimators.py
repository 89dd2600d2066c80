"""Regression estimators: the screened-sketch estimator (AIMER) and baselines.

AIMER screens columns by marginal correlation, forms the tall-thin sketch
F = X_new^T X_A of the Gram matrix, and regresses the response on the
approximate principal components read off the SVD of F:

    V_hat = U_[d](F),   L_hat = diag(values_[d](F))^(1/2),
    U_hat = X_new V_hat L_hat^{-1},
    beta  = V_hat L_hat^{-1} U_hat^T y,

followed by a hard threshold at b.  Baselines: principal components
regression on all columns (PCR), PCR restricted to the screened columns
(SPC), lasso on the screened columns (SPC+lasso), ridge, and lasso.

Conventions: the lasso objective is (1/2n)||y - X beta||^2 + lam * ||beta||_1
while ridge minimizes ||y - X beta||^2 + lam * ||beta||^2 (no 1/n).
Coefficients are always reported in the original column order.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, DimensionError, ValidationError
from .screening import marginal_correlations, screen, select_count
from .sketch import approx_eigvecs, _rank_cutoff

METHODS = ("aimer", "pcr", "spc", "spc_lasso", "ridge", "lasso")

LASSO_MAX_SWEEPS = 100_000
LASSO_SWEEP_RTOL = 1e-7       # max coefficient change, relative to response scale
LASSO_KKT_RTOL = 5e-7         # internal KKT guard, relative to max |X^T y| / n

try:
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:          # pragma: no cover - numba is an optional speedup
    _HAVE_NUMBA = False


@dataclass
class FitResult:
    """A fitted linear model with coefficients in original column order."""

    method: str
    beta: np.ndarray
    intercept: float                  # training response mean
    hyperparams: dict
    column_means: np.ndarray

    @property
    def selected_genes(self):
        """Indices j with beta_j != 0."""
        return np.flatnonzero(self.beta)


@dataclass
class AimerInternals:
    """Screening plan and the sketch eigenstructure behind an AIMER fit."""

    plan: object
    v_hat: np.ndarray                 # p x d
    lam_hat: np.ndarray               # d positive, nonincreasing
    u_hat: np.ndarray                 # n x d


def hard_threshold(beta, b):
    """Zero every entry with |beta_j| <= b; strict inequality survives."""
    if not np.isfinite(b) or b < 0:
        raise ValidationError(f"threshold must be a nonnegative real, got {b}")
    beta = np.asarray(beta, dtype=float)
    return np.where(np.abs(beta) > b, beta, 0.0)


def predict(fit, x_new, column_means=None):
    """Center a raw observation with the training means and apply the fit.

    Accepts a single length-p vector or an m x p matrix of rows.
    """
    means = fit.column_means if column_means is None else np.asarray(column_means)
    x_new = np.asarray(x_new, dtype=float)
    single = x_new.ndim == 1
    rows = x_new[None, :] if single else x_new
    if rows.ndim != 2 or rows.shape[1] != means.size:
        raise DimensionError(
            f"new observations have {rows.shape[-1]} columns, model expects {means.size}"
        )
    if not np.all(np.isfinite(rows)):
        raise ValidationError("new observations contain non-finite entries")
    out = (rows - means) @ fit.beta + fit.intercept
    return float(out[0]) if single else out


def _selection_plan(data, t_star=None, ell=None):
    if (t_star is None) == (ell is None):
        raise ValidationError("give exactly one of t_star or ell")
    t = marginal_correlations(data)
    if ell is not None:
        return select_count(t, ell)
    return screen(t, t_star)


def _svd_rank(x):
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    r = _rank_cutoff(s, x.shape)
    return u[:, :r], s[:r], vt[:r].T


def _pcr_beta(x, y, d, what):
    u, s, v = _svd_rank(x)
    if not 1 <= d <= s.size:
        raise DimensionError(f"d={d} exceeds achievable rank {s.size} of {what}")
    return v[:, :d] @ ((u[:, :d].T @ y) / s[:d])


def fit_aimer(data, t_star=None, ell=None, d=1, b=0.0):
    """Screened-sketch regression with hard thresholding.

    Returns (FitResult, AimerInternals).  The coefficient vector is the
    literal closed form V_hat L_hat^{-1} U_hat^T y, thresholded at b and
    mapped back to the original column order.
    """
    plan = _selection_plan(data, t_star, ell)
    x_new = data.x[:, plan.order]
    x_a = x_new[:, : plan.ell]
    f = x_new.T @ x_a
    fact = approx_eigvecs(f)
    if not 1 <= d <= fact.rank:
        raise DimensionError(f"d={d} exceeds achievable rank {fact.rank} of the sketch")
    v_hat = fact.left[:, :d]
    lam_hat = np.sqrt(fact.values[:d])
    u_hat = (x_new @ v_hat) / lam_hat
    gamma = (u_hat.T @ data.y) / lam_hat
    beta_new = hard_threshold(v_hat @ gamma, b)
    beta = np.zeros(data.p)
    beta[plan.order] = beta_new
    fit = FitResult(
        method="aimer",
        beta=beta,
        intercept=data.response_mean,
        hyperparams={"t_star": plan.threshold, "ell": plan.ell, "d": d, "b": b},
        column_means=data.column_means,
    )
    return fit, AimerInternals(plan=plan, v_hat=v_hat, lam_hat=lam_hat, u_hat=u_hat)


def fit_pcr(data, d):
    """Regression on the top-d principal components of the design."""
    beta = _pcr_beta(data.x, data.y, d, "the design")
    return FitResult(
        method="pcr",
        beta=beta,
        intercept=data.response_mean,
        hyperparams={"d": d},
        column_means=data.column_means,
    )


def fit_spc(data, t_star=None, ell=None, d=1):
    """PCR restricted to the screened columns; zeros elsewhere."""
    plan = _selection_plan(data, t_star, ell)
    cols = plan.selected
    beta_a = _pcr_beta(data.x[:, cols], data.y, d, "the screened columns")
    beta = np.zeros(data.p)
    beta[cols] = beta_a
    return FitResult(
        method="spc",
        beta=beta,
        intercept=data.response_mean,
        hyperparams={"t_star": plan.threshold, "ell": plan.ell, "d": d},
        column_means=data.column_means,
    )


def fit_spc_lasso(data, t_star=None, ell=None, lam=0.0, d=None):
    """Lasso after screening; zeros outside the screened columns.

    With ``d`` omitted this is the lasso of the response on the screened
    columns.  With ``d`` given the lasso instead targets the fitted values
    of the d-component SPC regression (the preconditioned variant, which is
    what gives the method its reported component count).
    """
    plan = _selection_plan(data, t_star, ell)
    cols = plan.selected
    x_a = data.x[:, cols]
    if d is None:
        target = data.y
    else:
        target = x_a @ _pcr_beta(x_a, data.y, d, "the screened columns")
    beta_a, _ = _cd_lasso(x_a, target, lam)
    beta = np.zeros(data.p)
    beta[cols] = beta_a
    hyper = {"t_star": plan.threshold, "ell": plan.ell, "lam": lam}
    if d is not None:
        hyper["d"] = d
    return FitResult(
        method="spc_lasso",
        beta=beta,
        intercept=data.response_mean,
        hyperparams=hyper,
        column_means=data.column_means,
    )


def fit_ridge(data, lam):
    """Ridge regression via the SVD filter sigma / (sigma^2 + lam)."""
    if not np.isfinite(lam) or lam < 0:
        raise ValidationError(f"ridge penalty must be nonnegative, got {lam}")
    u, s, v = _svd_rank(data.x)
    if lam == 0 and s.size < data.p:
        raise ValidationError("lam=0 requires a full-column-rank design")
    beta = v @ ((s / (s**2 + lam)) * (u.T @ data.y))
    return FitResult(
        method="ridge",
        beta=beta,
        intercept=data.response_mean,
        hyperparams={"lam": lam},
        column_means=data.column_means,
    )


def fit_lasso(data, lam):
    """Cyclic coordinate descent for (1/2n)||y - X beta||^2 + lam ||beta||_1."""
    beta, _ = _cd_lasso(data.x, data.y, lam)
    return FitResult(
        method="lasso",
        beta=beta,
        intercept=data.response_mean,
        hyperparams={"lam": lam},
        column_means=data.column_means,
    )


def lasso_null_threshold(x, y):
    """Smallest penalty at which the lasso solution is identically zero."""
    return float(np.max(np.abs(x.T @ y)) / x.shape[0])


def lasso_path(x, y, lams):
    """Solutions along a penalty path (any order), warm-started high to low.

    Returns an array of shape (len(lams), p) matching the order of ``lams``.
    """
    lams = np.asarray(lams, dtype=float)
    desc = np.argsort(-lams)
    betas = np.zeros((lams.size, x.shape[1]))
    warm = None
    for i in desc:
        warm, _ = _cd_lasso(x, y, lams[i], beta0=warm)
        betas[i] = warm
    return betas


def kkt_violation(x, y, beta, lam):
    """Worst-case stationarity residual of a lasso solution.

    For beta_j = 0 the gradient may sit anywhere in [-lam, lam]; otherwise it
    must equal lam * sign(beta_j).  Returns the largest excess.
    """
    n = x.shape[0]
    g = x.T @ (y - x @ beta) / n
    active = beta != 0
    worst = 0.0
    if np.any(~active):
        worst = max(worst, float(np.max(np.abs(g[~active])) - lam))
    if np.any(active):
        worst = max(worst, float(np.max(np.abs(g[active] - lam * np.sign(beta[active])))))
    return worst


def _cd_sweeps_py(xt, lam_n, beta, r, col_ss, change_tol, budget):
    """Cyclic sweeps with active-set inner passes; updates beta and r in place.

    Works on unnormalized quantities: col_ss[j] = ||x_j||^2 and lam_n = n*lam.
    Converged means a full pass moved no coefficient by change_tol or more.
    """
    p = xt.shape[0]
    sweeps = 0

    def one_pass(active_only):
        max_delta = 0.0
        for j in range(p):
            ss = col_ss[j]
            if ss == 0.0 or (active_only and beta[j] == 0.0):
                continue
            bj = beta[j]
            xj = xt[j]
            z = xj @ r + ss * bj
            new = np.sign(z) * max(abs(z) - lam_n, 0.0) / ss
            if new != bj:
                d = new - bj
                np.subtract(r, d * xj, out=r)
                beta[j] = new
                if abs(d) > max_delta:
                    max_delta = abs(d)
        return max_delta

    while sweeps < budget:
        delta = one_pass(False)
        sweeps += 1
        if delta < change_tol:
            return sweeps, True
        while sweeps < budget:
            delta = one_pass(True)
            sweeps += 1
            if delta < change_tol:
                break
    return sweeps, False


if _HAVE_NUMBA:

    @_njit(cache=True)
    def _cd_sweeps_jit(xt, lam_n, beta, r, col_ss, change_tol, budget):  # pragma: no cover
        p, n = xt.shape
        sweeps = 0
        while sweeps < budget:
            delta = 0.0
            for j in range(p):
                ss = col_ss[j]
                if ss == 0.0:
                    continue
                bj = beta[j]
                z = ss * bj
                for i in range(n):
                    z += xt[j, i] * r[i]
                mag = abs(z) - lam_n
                new = 0.0
                if mag > 0.0:
                    new = mag / ss if z > 0.0 else -mag / ss
                if new != bj:
                    d = new - bj
                    for i in range(n):
                        r[i] -= d * xt[j, i]
                    beta[j] = new
                    if abs(d) > delta:
                        delta = abs(d)
            sweeps += 1
            if delta < change_tol:
                return sweeps, True
            while sweeps < budget:
                delta = 0.0
                for j in range(p):
                    ss = col_ss[j]
                    if ss == 0.0 or beta[j] == 0.0:
                        continue
                    bj = beta[j]
                    z = ss * bj
                    for i in range(n):
                        z += xt[j, i] * r[i]
                    mag = abs(z) - lam_n
                    new = 0.0
                    if mag > 0.0:
                        new = mag / ss if z > 0.0 else -mag / ss
                    if new != bj:
                        d = new - bj
                        for i in range(n):
                            r[i] -= d * xt[j, i]
                        beta[j] = new
                        if abs(d) > delta:
                            delta = abs(d)
                sweeps += 1
                if delta < change_tol:
                    break
        return sweeps, False

    _cd_sweeps = _cd_sweeps_jit
else:
    _cd_sweeps = _cd_sweeps_py


def _cd_lasso(x, y, lam, beta0=None):
    if not np.isfinite(lam) or lam < 0:
        raise ValidationError(f"lasso penalty must be nonnegative, got {lam}")
    n, p = x.shape
    xt = np.ascontiguousarray(x.T)    # contiguous columns speed up the sweeps
    col_ss = np.einsum("ij,ij->i", xt, xt)
    beta = np.zeros(p) if beta0 is None else np.asarray(beta0, dtype=float).copy()
    r = y - x @ beta if beta.any() else y.astype(float).copy()
    scale = float(np.std(y))
    change_tol = LASSO_SWEEP_RTOL * (scale if scale > 0 else 1.0)
    grad_scale = float(np.max(np.abs(x.T @ y))) / n if p else 0.0
    kkt_tol = LASSO_KKT_RTOL * max(1.0, grad_scale)

    total = 0
    tol = change_tol
    converged = False
    while total < LASSO_MAX_SWEEPS:
        used, converged = _cd_sweeps(
            xt, lam * n, beta, r, col_ss, tol, LASSO_MAX_SWEEPS - total
        )
        total += used
        if not converged:
            break
        if kkt_violation(x, y, beta, lam) <= kkt_tol:
            return beta, total
        tol *= 0.25               # sweep-converged but KKT not yet met: push further
    raise ConvergenceError(
        f"coordinate descent hit {LASSO_MAX_SWEEPS} sweeps at lam={lam}: "
        f"converged={converged}, "
        f"KKT residual {kkt_violation(x, y, beta, lam):.3e}, "
        f"residual norm {np.linalg.norm(r):.3e}"
    )
