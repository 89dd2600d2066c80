"""Cross-validation, splitting, metrics, ROC sweeps, and preprocessing.

The grid search is deterministic end to end: folds come from a seeded
shuffle, every grid point is scored as the mean held-fold prediction MSE,
and ties break toward sparser models (larger b, then stronger screening,
then smaller d, then larger lasso penalty) so permuting the grid order can
never change the winner.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ValidationError
from .estimators import (
    _cd_lasso,
    fit_ridge,
    hard_threshold,
    lasso_null_threshold,
    predict,
)
from .screening import center, marginal_correlations, screen, select_count
from .sketch import approx_eigvecs

N_LAMBDA = 50                 # default penalty path length
LAMBDA_FLOOR = 1e-3           # path runs from lam_max down to floor * lam_max
N_B_QUANTILES = 20            # default size of the auto threshold grid
B_QUANTILE_SPAN = (0.5, 1e-3)  # quantile levels 1 - geomspace(span) of |beta|


def replication_seeds(root_seed, index, count=2):
    """Independent child seeds for one replication, stable across processes."""
    ss = np.random.SeedSequence((int(root_seed), int(index)))
    return [int(child.generate_state(1, np.uint64)[0]) for child in ss.spawn(count)]


@dataclass
class CVPlan:
    """Fold assignment for k-fold cross-validation."""

    k: int
    fold_ids: np.ndarray
    seed: int

    def folds(self):
        ids = self.fold_ids
        for f in range(self.k):
            held = np.flatnonzero(ids == f)
            train = np.flatnonzero(ids != f)
            yield train, held


def kfold_split(n, k, seed):
    """Seeded uniform shuffle, then contiguous blocks of near-equal size."""
    if not 2 <= k <= n:
        raise DimensionError(f"need 2 <= k <= n, got k={k}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    base, extra = divmod(n, k)
    fold_ids = np.empty(n, dtype=int)
    start = 0
    for f in range(k):
        size = base + (1 if f < extra else 0)
        fold_ids[perm[start : start + size]] = f
        start += size
    return CVPlan(k=k, fold_ids=fold_ids, seed=seed)


def train_test_splits(n, n_splits, fraction, seed):
    """Seeded random train/test index pairs with train size round(fraction * n)."""
    if not 0 < fraction < 1:
        raise ValidationError(f"fraction must lie in (0, 1), got {fraction}")
    if n_splits < 1:
        raise ValidationError(f"need at least one split, got {n_splits}")
    n_train = int(round(fraction * n))
    if n_train < 1 or n_train > n - 1:
        raise DimensionError(
            f"fraction {fraction} of {n} rows leaves a degenerate split"
        )
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_splits):
        perm = rng.permutation(n)
        out.append((np.sort(perm[:n_train]), np.sort(perm[n_train:])))
    return out


def prediction_mse(fit, x_raw, y_raw):
    """Mean squared prediction error on raw (uncentered) test rows."""
    y_raw = np.asarray(y_raw, dtype=float).ravel()
    if y_raw.size == 0:
        raise ValidationError("empty test set")
    preds = predict(fit, np.atleast_2d(np.asarray(x_raw, dtype=float)))
    return float(np.mean((preds - y_raw) ** 2))


def estimation_mse(beta_hat, beta_true):
    """Mean squared coefficient error over all p coordinates."""
    beta_hat = np.asarray(beta_hat, dtype=float).ravel()
    beta_true = np.asarray(beta_true, dtype=float).ravel()
    if beta_hat.size != beta_true.size:
        raise DimensionError(
            f"coefficient vectors of length {beta_hat.size} vs {beta_true.size}"
        )
    return float(np.mean((beta_hat - beta_true) ** 2))


def roc_points(scores, true_support):
    """(FPR, TPR) at every distinct selection threshold, strictest first.

    Threshold v selects {j : score_j >= v}; v sweeps the distinct score
    values in decreasing order, so the last point selects everything.
    """
    scores = np.asarray(scores, dtype=float).ravel()
    if not np.all(np.isfinite(scores)):
        raise ValidationError("scores contain non-finite entries")
    p = scores.size
    truth = np.zeros(p, dtype=bool)
    support = np.asarray(sorted(set(int(j) for j in true_support)), dtype=int)
    if support.size == 0 or support.size >= p:
        raise ValidationError("true support must be a nonempty proper subset")
    if support.min() < 0 or support.max() >= p:
        raise ValidationError("true support indices outside {0..p-1}")
    truth[support] = True
    n_true = int(truth.sum())
    n_false = p - n_true
    points = []
    for v in np.unique(scores)[::-1]:
        sel = scores >= v
        tpr = float(np.sum(sel & truth)) / n_true
        fpr = float(np.sum(sel & ~truth)) / n_false
        points.append((fpr, tpr))
    return points


def roc_curve(scores, true_support):
    """ROC points anchored at the origin, so curves run (0,0) -> (1,1)."""
    return [(0.0, 0.0)] + roc_points(scores, true_support)


def preprocess_log2_shift(x_raw):
    """Per feature: shift so the minimum maps to 1, then take log2."""
    x = np.asarray(x_raw, dtype=float)
    shifted = x - x.min(axis=0) + 1.0
    return np.log2(shifted)


def orthonormalize_features(x_raw):
    """Replace the centered design by U V^T (all nonzero singular values -> 1)."""
    x = np.asarray(x_raw, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DimensionError("need an n x p matrix with n >= 2")
    centered = x - x.mean(axis=0)
    if not centered.any():
        raise ValidationError("matrix is zero after centering")
    u, s, vt = np.linalg.svd(centered, full_matrices=False)
    keep = s > max(x.shape) * np.finfo(float).eps * s[0]
    return u[:, keep] @ vt[keep]


def transform_response(survival_times):
    """log(time + 1); times must be nonnegative."""
    t = np.asarray(survival_times, dtype=float).ravel()
    if np.any(t < 0) or not np.all(np.isfinite(t)):
        raise ValidationError("survival times must be finite and nonnegative")
    return np.log1p(t)


def default_lambda_grid(lam_max, n_points=N_LAMBDA, floor=LAMBDA_FLOOR):
    """Log-spaced penalty path from lam_max down to floor * lam_max."""
    if lam_max <= 0:
        raise ValidationError("lam_max must be positive")
    return np.geomspace(lam_max, floor * lam_max, n_points)


def default_b_grid(beta, n_points=N_B_QUANTILES):
    """Threshold grid: quantiles of |beta| at log-spaced upper levels."""
    levels = 1.0 - np.geomspace(B_QUANTILE_SPAN[0], B_QUANTILE_SPAN[1], n_points)
    return np.quantile(np.abs(beta), levels)


def default_ridge_grid(x, n_points=N_LAMBDA):
    """Log-spaced ridge penalties around the mean column sum of squares."""
    scale = float(np.sum(x * x)) / max(x.shape[1], 1)
    if scale <= 0:
        raise ValidationError("design has no energy; cannot build a ridge grid")
    return scale * np.geomspace(1e-4, 1e2, n_points)


@dataclass
class CVResult:
    method: str
    best_params: dict
    best_mse: float
    surface: list                     # dicts {params, cv_mse, feasible}


def _tie_key(params):
    """Sparser-first ordering: larger b, stronger screening, smaller d, larger lam."""
    sel = -params["t_star"] if "t_star" in params else params.get("ell", 0)
    return (
        -params.get("b", 0.0),
        sel,
        params.get("d", 0),
        -params.get("lam", 0.0),
    )


def _fold_data(data, plan):
    """Per-fold re-centered training set plus raw held-out rows."""
    folds = []
    for train_idx, held_idx in plan.folds():
        raw_x = data.x + data.column_means
        raw_y = data.y + data.response_mean
        fold_train = center(raw_x[train_idx], raw_y[train_idx], data.column_labels)
        folds.append((fold_train, raw_x[held_idx], raw_y[held_idx]))
    return folds


def _selection_axis(grids):
    if ("ell" in grids) == ("t_star" in grids):
        raise ValidationError("give exactly one selection axis: ell or t_star")
    if "ell" in grids:
        return "ell", list(grids["ell"])
    return "t_star", list(grids["t_star"])


class _Scores:
    """Accumulates per-fold MSEs per grid point; infeasible folds poison the point."""

    def __init__(self, n_folds):
        self.n_folds = n_folds
        self.records = {}             # key -> (params, list of fold MSEs or None)

    def params_key(self, params):
        return tuple(sorted(params.items()))

    def add(self, params, fold, mse):
        key = self.params_key(params)
        if key not in self.records:
            self.records[key] = (dict(params), [None] * self.n_folds)
        self.records[key][1][fold] = mse

    def mark_infeasible(self, params):
        key = self.params_key(params)
        if key not in self.records:
            self.records[key] = (dict(params), [None] * self.n_folds)

    def finish(self, method):
        surface = []
        feasible = []
        for params, fold_mses in self.records.values():
            ok = all(m is not None for m in fold_mses)
            cv = float(np.mean(fold_mses)) if ok else None
            surface.append({"params": params, "cv_mse": cv, "feasible": ok})
            if ok:
                feasible.append((cv, _tie_key(params), params))
        if not feasible:
            raise ValidationError("every grid point was infeasible on some fold")
        best = min(feasible, key=lambda rec: (rec[0],) + tuple(rec[1]))
        surface.sort(key=lambda row: (_tie_key(row["params"]),))
        return CVResult(
            method=method, best_params=best[2], best_mse=best[0], surface=surface
        )


def _fold_mse(beta, intercept, col_means, x_raw, y_raw):
    preds = (x_raw - col_means) @ beta + intercept
    return float(np.mean((preds - y_raw) ** 2))


def _plan_for(train, sel_axis, sel_value):
    t = marginal_correlations(train)
    if sel_axis == "ell":
        return select_count(t, sel_value)
    return screen(t, sel_value)


def _cumulative_pcr_betas(x, y, d_values):
    """Map each feasible d to the rank-d PCR coefficients (shared SVD)."""
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    keep = s > max(x.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    u, s, v = u[:, keep], s[keep], vt[keep].T
    contrib = v * ((u.T @ y) / s)
    betas = np.cumsum(contrib, axis=1)
    return {d: betas[:, d - 1] for d in d_values if 1 <= d <= s.size}


def _cumulative_sketch_betas(train, plan, d_values):
    """Rank-d sketch-regression coefficients in original order (shared SVD)."""
    x_new = train.x[:, plan.order]
    x_a = x_new[:, : plan.ell]
    fact = approx_eigvecs(x_new.T @ x_a)
    out = {}
    if fact.rank == 0:
        return out
    lam_hat = np.sqrt(fact.values)
    u_hat = (x_new @ fact.left) / lam_hat
    contrib = fact.left * ((u_hat.T @ train.y) / lam_hat)
    betas_new = np.cumsum(contrib, axis=1)
    for d in d_values:
        if 1 <= d <= fact.rank:
            beta = np.zeros(train.p)
            beta[plan.order] = betas_new[:, d - 1]
            out[d] = beta
    return out


def cross_validate(data, method, grids, plan):
    """Mean held-fold prediction MSE over a hyperparameter grid.

    ``grids`` maps axis names to value lists; the selection axis is "ell"
    or "t_star", and "b" / "lam" accept the string "auto" for the default
    data-driven grids.  Grid points that fail on any fold (for example d
    beyond the achievable rank) are reported infeasible; if every point is
    infeasible the search errors out.
    """
    if not grids:
        raise ValidationError("empty hyperparameter grid")
    folds = _fold_data(data, plan)
    scores = _Scores(len(folds))

    if method == "ridge":
        grid = grids["lam"]
        lams = default_ridge_grid(data.x) if isinstance(grid, str) else list(grid)
        for f, (train, x_raw, y_raw) in enumerate(folds):
            for lam in lams:
                params = {"lam": float(lam)}
                try:
                    fit = fit_ridge(train, lam)
                except (ValidationError, DimensionError):
                    scores.mark_infeasible(params)
                    continue
                scores.add(params, f, _fold_mse(
                    fit.beta, fit.intercept, train.column_means, x_raw, y_raw))
        return scores.finish(method)

    if method == "lasso":
        grid = grids["lam"]
        if isinstance(grid, str):
            lams = default_lambda_grid(lasso_null_threshold(data.x, data.y))
        else:
            lams = np.asarray(list(grid), dtype=float)
        order = np.argsort(-lams)
        for f, (train, x_raw, y_raw) in enumerate(folds):
            warm = None
            for i in order:
                warm, _ = _cd_lasso(train.x, train.y, lams[i], beta0=warm)
                scores.add({"lam": float(lams[i])}, f, _fold_mse(
                    warm, train.response_mean, train.column_means, x_raw, y_raw))
        return scores.finish(method)

    if method == "pcr":
        d_values = [int(d) for d in grids["d"]]
        for f, (train, x_raw, y_raw) in enumerate(folds):
            betas = _cumulative_pcr_betas(train.x, train.y, d_values)
            for d in d_values:
                params = {"d": d}
                if d not in betas:
                    scores.mark_infeasible(params)
                    continue
                scores.add(params, f, _fold_mse(
                    betas[d], train.response_mean, train.column_means, x_raw, y_raw))
        return scores.finish(method)

    sel_axis, sel_values = _selection_axis(grids)

    if method == "spc":
        d_values = [int(d) for d in grids["d"]]
        for f, (train, x_raw, y_raw) in enumerate(folds):
            for sel in sel_values:
                base = {sel_axis: sel}
                try:
                    fold_plan = _plan_for(train, sel_axis, sel)
                except (ValidationError, DimensionError):
                    for d in d_values:
                        scores.mark_infeasible({**base, "d": d})
                    continue
                cols = fold_plan.selected
                betas = _cumulative_pcr_betas(train.x[:, cols], train.y, d_values)
                for d in d_values:
                    params = {**base, "d": d}
                    if d not in betas:
                        scores.mark_infeasible(params)
                        continue
                    beta = np.zeros(train.p)
                    beta[cols] = betas[d]
                    scores.add(params, f, _fold_mse(
                        beta, train.response_mean, train.column_means, x_raw, y_raw))
        return scores.finish(method)

    if method == "spc_lasso":
        d_values = [int(d) for d in grids["d"]] if "d" in grids else [None]
        for sel in sel_values:
            # resolve one penalty path per (selection, d) from the full data
            grid = grids["lam"]
            lam_grids = {}
            for d in d_values:
                if not isinstance(grid, str):
                    lam_grids[d] = np.asarray(list(grid), dtype=float)
                    continue
                try:
                    full_plan = _plan_for(data, sel_axis, sel)
                    x_a = data.x[:, full_plan.selected]
                    target = data.y if d is None else x_a @ _cumulative_pcr_betas(
                        x_a, data.y, [d])[d]
                    lam_grids[d] = default_lambda_grid(
                        lasso_null_threshold(x_a, target))
                except (ValidationError, DimensionError, KeyError):
                    pass
            for f, (train, x_raw, y_raw) in enumerate(folds):
                base = {sel_axis: sel}
                try:
                    fold_plan = _plan_for(train, sel_axis, sel)
                except (ValidationError, DimensionError):
                    fold_plan = None
                for d in d_values:
                    tag = dict(base) if d is None else {**base, "d": d}
                    if d not in lam_grids:
                        scores.mark_infeasible({**tag, "lam": 0.0})
                        continue
                    lams = lam_grids[d]
                    if fold_plan is None:
                        for lam in lams:
                            scores.mark_infeasible({**tag, "lam": float(lam)})
                        continue
                    cols = fold_plan.selected
                    x_a = train.x[:, cols]
                    if d is None:
                        target = train.y
                    else:
                        betas_a = _cumulative_pcr_betas(x_a, train.y, [d])
                        if d not in betas_a:
                            for lam in lams:
                                scores.mark_infeasible({**tag, "lam": float(lam)})
                            continue
                        target = x_a @ betas_a[d]
                    warm = None
                    for i in np.argsort(-lams):
                        warm, _ = _cd_lasso(x_a, target, lams[i], beta0=warm)
                        beta = np.zeros(train.p)
                        beta[cols] = warm
                        scores.add({**tag, "lam": float(lams[i])}, f, _fold_mse(
                            beta, train.response_mean, train.column_means,
                            x_raw, y_raw))
        return scores.finish(method)

    if method == "aimer":
        d_values = [int(d) for d in grids["d"]]
        b_spec = grids.get("b", [0.0])
        for sel in sel_values:
            # resolve the threshold grid per (selection, d) on the full data
            b_grids = {}
            if isinstance(b_spec, str):
                try:
                    full_plan = _plan_for(data, sel_axis, sel)
                    full = _cumulative_sketch_betas(data, full_plan, d_values)
                except (ValidationError, DimensionError):
                    full = {}
                for d in d_values:
                    if d in full:
                        b_grids[d] = np.concatenate([[0.0], default_b_grid(full[d])])
            else:
                for d in d_values:
                    b_grids[d] = np.asarray(list(b_spec), dtype=float)
            for f, (train, x_raw, y_raw) in enumerate(folds):
                base = {sel_axis: sel}
                try:
                    fold_plan = _plan_for(train, sel_axis, sel)
                    betas = _cumulative_sketch_betas(train, fold_plan, d_values)
                except (ValidationError, DimensionError):
                    betas = {}
                for d in d_values:
                    if d not in b_grids:
                        scores.mark_infeasible({**base, "d": d, "b": 0.0})
                        continue
                    for b in b_grids[d]:
                        params = {**base, "d": d, "b": float(b)}
                        if d not in betas:
                            scores.mark_infeasible(params)
                            continue
                        beta = hard_threshold(betas[d], b)
                        scores.add(params, f, _fold_mse(
                            beta, train.response_mean, train.column_means,
                            x_raw, y_raw))
        return scores.finish(method)

    raise ValidationError(f"unknown method {method!r}")
