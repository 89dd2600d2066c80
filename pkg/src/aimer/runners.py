"""Experiment runners: the five simulation studies and the split/CV protocol.

Every runner is deterministic given its root seed: replication r derives its
data and fold seeds from hash(root, r), replications are independent, and
aggregation happens in replication order, so reports are bitwise identical
across runs and across worker counts.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from joblib import Parallel, delayed
from threadpoolctl import threadpool_limits

from .errors import ValidationError
from .estimators import (
    fit_aimer,
    fit_lasso,
    fit_ridge,
    fit_spc,
    fit_spc_lasso,
    lasso_null_threshold,
    lasso_path,
)
from .evaluation import (
    cross_validate,
    default_lambda_grid,
    estimation_mse,
    kfold_split,
    prediction_mse,
    replication_seeds,
    roc_curve,
    train_test_splits,
)
from .screening import center, marginal_correlations, select_count
from .simulation import (
    FactorBlock,
    LatentFactorConfig,
    simulate,
    solve_weight_for_zero_marginals,
)

SIM_N = 200                   # rows per replication; first half trains
SIM_TRAIN = 100
SIM_P = 1000
SIM_FEATURE_NOISE = float(np.sqrt(0.1))
SIM_RESPONSE_NOISE = 0.1
SIM_ELL = 50                  # fixed screening budget in simulations 1-4
SIM_CV_K = 10
SIM5_ELL_GRID = (10, 25, 50, 75, 99)   # selected genes stay below the patient count
SIM4_STRENGTHS = (5.0, 10.0, 25.0, 50.0)
SIM4_D_GRID = (1, 2, 3)


@dataclass(frozen=True)
class SimSpec:
    sim_id: int
    config: LatentFactorConfig        # seed field is a placeholder
    d: int
    factor_groups: tuple              # gene index groups for coefficient summaries


def _blocks_two_overlapping(first, second):
    """First factor spans both gene runs; the second seeds only the later run."""
    span = tuple(range(first[0], second[1]))
    seed_vals = tuple(
        1.0 if j >= second[0] else 0.0 for j in range(first[0], second[1])
    )
    return (FactorBlock(span), FactorBlock(span, values=seed_vals))


def simulation_spec(sim_id, strength1=None):
    """Generative setup for one simulation study (seed filled in per replication)."""
    common = dict(
        n=SIM_N,
        p=SIM_P,
        feature_noise=SIM_FEATURE_NOISE,
        response_noise=SIM_RESPONSE_NOISE,
        seed=0,
    )
    if sim_id == 1:
        # three factors; the third cancels its marginal signal against the second
        blocks = (
            FactorBlock(tuple(range(0, 5))),
            FactorBlock(tuple(range(5, 15))),
            FactorBlock(tuple(range(5, 15)), values=(0.0,) * 5 + (1.0,) * 5),
        )
        config = LatentFactorConfig(
            n_factors=3,
            n_response_factors=3,
            strengths=(10.0, 5.0, 1.0),
            weights=(1.0, 1.0, 1.0),
            blocks=blocks,
            **common,
        )
        config = config.with_weights(
            solve_weight_for_zero_marginals(config, range(10, 15))
        )
        groups = (tuple(range(0, 5)), tuple(range(5, 10)), tuple(range(10, 15)))
        return SimSpec(1, config, d=3, factor_groups=groups)
    if sim_id in (2, 3):
        # same nested-support structure as factors 2 and 3 of simulation 1;
        # raising the second weight (simulation 3) nearly cancels the marginal
        # signal on the first gene run while leaving its coefficients large
        config = LatentFactorConfig(
            n_factors=2,
            n_response_factors=2,
            strengths=(10.0, 1.0),
            weights=(1.0, 1.0 if sim_id == 2 else 3.0),
            blocks=_blocks_two_overlapping((0, 5), (5, 10)),
            **common,
        )
        groups = (tuple(range(0, 5)), tuple(range(5, 10)))
        return SimSpec(sim_id, config, d=2, factor_groups=groups)
    if sim_id in (4, 5):
        lam1 = 10.0 if strength1 is None else float(strength1)
        blocks = _blocks_two_overlapping((0, 5), (5, 10))
        config = LatentFactorConfig(
            n_factors=2,
            n_response_factors=2,
            strengths=(lam1, 1.0),
            weights=(1.0, 1.0),
            blocks=blocks,
            **common,
        )
        config = config.with_weights(
            solve_weight_for_zero_marginals(config, range(5, 10))
        )
        groups = (tuple(range(0, 5)), tuple(range(5, 10)))
        return SimSpec(sim_id, config, d=2, factor_groups=groups)
    raise ValidationError(f"unknown simulation id {sim_id}")


@dataclass
class ExperimentReport:
    kind: str
    config: dict
    group_keys: tuple
    method_rows: list = field(default_factory=list)
    replication_rows: list = field(default_factory=list)
    roc_rows: list = field(default_factory=list)
    coefficient_rows: list = field(default_factory=list)

    def recompute_method_rows(self):
        return aggregate_rows(self.replication_rows, self.group_keys)

    def to_dict(self):
        return {
            "kind": self.kind,
            "config": self.config,
            "group_keys": list(self.group_keys),
            "method_rows": self.method_rows,
            "replication_rows": self.replication_rows,
            "roc_rows": self.roc_rows,
            "coefficient_rows": self.coefficient_rows,
        }


def aggregate_rows(rows, keys):
    """Group raw replication rows and average the reported metrics."""
    groups = {}
    for row in rows:
        groups.setdefault(tuple(row[k] for k in keys), []).append(row)
    out = []
    for key in sorted(groups):
        members = groups[key]
        agg = dict(zip(keys, key))
        agg["n_replications"] = len(members)
        for metric in ("prediction_mse", "estimation_mse", "selected_count", "d_used"):
            values = [m[metric] for m in members if m.get(metric) is not None]
            agg[metric] = float(np.mean(values)) if values else None
        counts = [m["selected_count"] for m in members if m.get("selected_count") is not None]
        agg["selected_count_sd"] = (
            float(np.std(counts, ddof=1)) if len(counts) > 1 else 0.0
        )
        out.append(agg)
    return out


def _metrics_row(method, rep, fit, x_test, y_test, true_beta, d_used, extra=None):
    row = {
        "replication": rep,
        "method": method,
        "prediction_mse": prediction_mse(fit, x_test, y_test),
        "estimation_mse": (
            estimation_mse(fit.beta, true_beta) if true_beta is not None else None
        ),
        "selected_count": int(fit.selected_genes.size),
        "d_used": d_used,
        "hyperparams": {k: _plain(v) for k, v in fit.hyperparams.items()},
    }
    if extra:
        row.update(extra)
    return row


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def _roc_rows(method, rep, scores, truth, extra=None):
    rows = []
    for fpr, tpr in roc_curve(scores, truth):
        row = {"method": method, "replication": rep, "fpr": fpr, "tpr": tpr,
               "kind": "curve"}
        if extra:
            row.update(extra)
        rows.append(row)
    return rows


def _coef_rows(method, rep, beta, true_beta, groups):
    rows = []
    for g, idx in enumerate(groups, start=1):
        idx = list(idx)
        rows.append({
            "replication": rep,
            "method": method,
            "group": g,
            "mean_beta": float(np.mean(beta[idx])),
            "true_mean_beta": float(np.mean(true_beta[idx])),
        })
    return rows


def _split_instance(spec, data_seed):
    inst = simulate(replace(spec.config, seed=data_seed))
    train = center(inst.raw_x[:SIM_TRAIN], inst.raw_y[:SIM_TRAIN])
    x_test = inst.raw_x[SIM_TRAIN:]
    y_test = inst.raw_y[SIM_TRAIN:]
    return inst, train, x_test, y_test


def _spc_lasso_pick_lambda(train, ell, d, cv_plan):
    """Penalty for the preconditioned lasso by 10-fold reconstruction CV.

    The lasso stage approximates the denoised fit, so its penalty is tuned
    on how well held-out denoised values are reproduced (that target is
    noise-free, which is what makes the chosen penalty stable across
    replications).  Ties break toward the larger penalty.
    """
    plan = select_count(marginal_correlations(train), ell)
    x_a_full = train.x[:, plan.selected]
    spc_full = fit_spc(train, ell=ell, d=d)
    lams = default_lambda_grid(
        lasso_null_threshold(x_a_full, x_a_full @ spc_full.beta[plan.selected])
    )
    errors = np.zeros(lams.size)
    for train_idx, held_idx in cv_plan.folds():
        raw_x = train.x + train.column_means
        raw_y = train.y + train.response_mean
        fold = center(raw_x[train_idx], raw_y[train_idx], train.column_labels)
        fold_plan = select_count(marginal_correlations(fold), ell)
        cols = fold_plan.selected
        x_a = fold.x[:, cols]
        spc_beta = fit_spc(fold, ell=ell, d=d).beta
        target_fold = x_a @ spc_beta[cols]
        held_centered = raw_x[held_idx] - fold.column_means
        held_target = held_centered @ spc_beta
        path = lasso_path(x_a, target_fold, lams)
        for i in range(lams.size):
            held_pred = held_centered[:, cols] @ path[i]
            errors[i] += float(np.mean((held_pred - held_target) ** 2))
    best = min(range(lams.size), key=lambda i: (errors[i], -lams[i]))
    return float(lams[best])


def _spc_lasso_entry_scores(train, ell, d):
    """Score screened columns by the penalty at which they enter the lasso path."""
    fit = fit_spc(train, ell=ell, d=d)
    plan = select_count(marginal_correlations(train), ell)
    x_a = train.x[:, plan.selected]
    target = x_a @ fit.beta[plan.selected]
    lams = default_lambda_grid(lasso_null_threshold(x_a, target))
    path = lasso_path(x_a, target, lams)           # lams descend, so rows do too
    scores = np.zeros(train.p)
    for k, col in enumerate(plan.selected):
        hits = np.flatnonzero(path[:, k])
        if hits.size:
            scores[col] = lams[hits[0]]
    return scores


def _sim123_replication(sim_id, rep, root_seed):
    spec = simulation_spec(sim_id)
    data_seed, cv_seed = replication_seeds(root_seed, rep)
    inst, train, x_test, y_test = _split_instance(spec, data_seed)
    truth = inst.beta_support
    d = spec.d
    cv_plan = kfold_split(SIM_TRAIN, SIM_CV_K, cv_seed)
    records, roc_rows, coef_rows = [], [], []

    spc = fit_spc(train, ell=SIM_ELL, d=d)
    records.append(_metrics_row("spc", rep, spc, x_test, y_test, inst.true_beta, d))
    coef_rows += _coef_rows("spc", rep, spc.beta, inst.true_beta, spec.factor_groups)
    # hard selection: one operating point, plus the best-case continuation
    sel = np.zeros(SIM_P, dtype=bool)
    sel[spc.selected_genes] = True
    is_true = np.zeros(SIM_P, dtype=bool)
    is_true[truth] = True
    tpr0 = float(np.sum(sel & is_true)) / truth.size
    fpr0 = float(np.sum(sel & ~is_true)) / (SIM_P - truth.size)
    roc_rows += [
        {"method": "spc", "replication": rep, "fpr": fpr0, "tpr": tpr0,
         "kind": "point"},
        {"method": "spc", "replication": rep, "fpr": fpr0, "tpr": 1.0,
         "kind": "best_case"},
        {"method": "spc", "replication": rep, "fpr": 1.0, "tpr": 1.0,
         "kind": "best_case"},
    ]

    lam_sl = _spc_lasso_pick_lambda(train, SIM_ELL, d, cv_plan)
    sl = fit_spc_lasso(train, ell=SIM_ELL, lam=lam_sl, d=d)
    records.append(_metrics_row("spc_lasso", rep, sl, x_test, y_test,
                                inst.true_beta, d))
    coef_rows += _coef_rows("spc_lasso", rep, sl.beta, inst.true_beta,
                            spec.factor_groups)
    roc_rows += _roc_rows("spc_lasso", rep,
                          _spc_lasso_entry_scores(train, SIM_ELL, d), truth)

    a0, _ = fit_aimer(train, ell=SIM_ELL, d=d, b=0.0)
    records.append(_metrics_row("aimer_b0", rep, a0, x_test, y_test,
                                inst.true_beta, d))
    coef_rows += _coef_rows("aimer_b0", rep, a0.beta, inst.true_beta,
                            spec.factor_groups)
    roc_rows += _roc_rows("aimer", rep, np.abs(a0.beta), truth)

    cv_a = cross_validate(
        train, "aimer", {"ell": [SIM_ELL], "d": [d], "b": "auto"}, cv_plan
    )
    af, _ = fit_aimer(train, ell=SIM_ELL, d=d, b=cv_a.best_params["b"])
    records.append(_metrics_row("aimer", rep, af, x_test, y_test,
                                inst.true_beta, d))
    coef_rows += _coef_rows("aimer", rep, af.beta, inst.true_beta,
                            spec.factor_groups)
    return records, roc_rows, coef_rows


def _sim4_replication(rep, root_seed):
    records = []
    data_seed, cv_seed = replication_seeds(root_seed, rep)
    for lam1 in SIM4_STRENGTHS:
        spec = simulation_spec(4, strength1=lam1)
        inst, train, x_test, y_test = _split_instance(spec, data_seed)
        cv_plan = kfold_split(SIM_TRAIN, SIM_CV_K, cv_seed)
        for d in SIM4_D_GRID:
            extra = {"d": d, "strength1": lam1}
            spc = fit_spc(train, ell=SIM_ELL, d=d)
            records.append(_metrics_row("spc", rep, spc, x_test, y_test,
                                        inst.true_beta, d, extra))
            a0, _ = fit_aimer(train, ell=SIM_ELL, d=d, b=0.0)
            records.append(_metrics_row("aimer_b0", rep, a0, x_test, y_test,
                                        inst.true_beta, d, extra))
            cv_a = cross_validate(
                train, "aimer", {"ell": [SIM_ELL], "d": [d], "b": "auto"}, cv_plan
            )
            af, _ = fit_aimer(train, ell=SIM_ELL, d=d, b=cv_a.best_params["b"])
            records.append(_metrics_row("aimer", rep, af, x_test, y_test,
                                        inst.true_beta, d, extra))
    return records, [], []


def _sim5_replication(rep, root_seed):
    spec = simulation_spec(5)
    data_seed, cv_seed = replication_seeds(root_seed, rep)
    inst, train, x_test, y_test = _split_instance(spec, data_seed)
    cv_plan = kfold_split(SIM_TRAIN, SIM_CV_K, cv_seed)
    d = spec.d
    ell_grid = list(SIM5_ELL_GRID)
    records = []

    cv_spc = cross_validate(train, "spc", {"ell": ell_grid, "d": [d]}, cv_plan)
    spc = fit_spc(train, ell=cv_spc.best_params["ell"], d=d)
    records.append(_metrics_row("spc", rep, spc, x_test, y_test,
                                inst.true_beta, d))

    cv_sl = cross_validate(train, "spc", {"ell": ell_grid, "d": [d]}, cv_plan)
    ell_sl = cv_sl.best_params["ell"]
    lam_sl = _spc_lasso_pick_lambda(train, ell_sl, d, cv_plan)
    sl = fit_spc_lasso(train, ell=ell_sl, lam=lam_sl, d=d)
    records.append(_metrics_row("spc_lasso", rep, sl, x_test, y_test,
                                inst.true_beta, d))

    cv_a0 = cross_validate(
        train, "aimer", {"ell": ell_grid, "d": [d], "b": [0.0]}, cv_plan
    )
    a0, _ = fit_aimer(train, ell=cv_a0.best_params["ell"], d=d, b=0.0)
    records.append(_metrics_row("aimer_b0", rep, a0, x_test, y_test,
                                inst.true_beta, d))

    cv_a = cross_validate(
        train, "aimer", {"ell": ell_grid, "d": [d], "b": "auto"}, cv_plan
    )
    af, _ = fit_aimer(train, ell=cv_a.best_params["ell"], d=d,
                      b=cv_a.best_params["b"])
    records.append(_metrics_row("aimer", rep, af, x_test, y_test,
                                inst.true_beta, d))
    return records, [], []


def _sim_replication(sim_id, rep, root_seed):
    # single-threaded BLAS keeps results bitwise identical across --jobs
    # settings (worker processes get different thread budgets otherwise)
    with threadpool_limits(limits=1, user_api="blas"):
        if sim_id in (1, 2, 3):
            return _sim123_replication(sim_id, rep, root_seed)
        if sim_id == 4:
            return _sim4_replication(rep, root_seed)
        if sim_id == 5:
            return _sim5_replication(rep, root_seed)
    raise ValidationError(f"unknown simulation id {sim_id}")


def run_simulation_suite(sim_id, replications, seed, jobs=1):
    """Run one simulation study and aggregate a report."""
    if replications < 1:
        raise ValidationError("need at least one replication")
    simulation_spec(sim_id)           # validate the id before spawning work
    if jobs == 1:
        results = [_sim_replication(sim_id, r, seed) for r in range(replications)]
    else:
        results = Parallel(n_jobs=jobs)(
            delayed(_sim_replication)(sim_id, r, seed) for r in range(replications)
        )
    rows, roc_rows, coef_rows = [], [], []
    for rec, roc, coef in results:
        rows += rec
        roc_rows += roc
        coef_rows += coef
    group_keys = ("method", "d", "strength1") if sim_id == 4 else ("method",)
    config = {
        "command": "simulate",
        "sim": sim_id,
        "replications": replications,
        "seed": seed,
        "n": SIM_N,
        "p": SIM_P,
        "train_rows": SIM_TRAIN,
        "feature_noise": SIM_FEATURE_NOISE,
        "response_noise": SIM_RESPONSE_NOISE,
        "ell": SIM_ELL if sim_id != 5 else list(SIM5_ELL_GRID),
        "cv_k": SIM_CV_K,
        "d": simulation_spec(sim_id).d if sim_id != 4 else list(SIM4_D_GRID),
        "strength1": list(SIM4_STRENGTHS) if sim_id == 4 else None,
    }
    return ExperimentReport(
        kind="simulation",
        config=config,
        group_keys=group_keys,
        method_rows=aggregate_rows(rows, group_keys),
        replication_rows=rows,
        roc_rows=roc_rows,
        coefficient_rows=coef_rows,
    )


@dataclass(frozen=True)
class RealDataProtocol:
    n_splits: int = 10
    train_fraction: float = 0.5
    cv_k: int = 10
    d_grid: tuple = (1, 2, 3, 4, 5)
    ell_grid: tuple = (10, 25, 50, 75, 100)

    def usable_ell(self, n_train, p):
        grid = [l for l in self.ell_grid if l < n_train and l <= p]
        if not grid:
            raise ValidationError(
                f"no usable screening sizes below n_train={n_train}, p={p}"
            )
        return grid


REAL_DATA_METHODS = ("lasso", "ridge", "spc", "spc_lasso", "aimer_b0", "aimer")


def _real_split(split_index, train_idx, test_idx, x_raw, y_raw, labels,
                protocol, root_seed):
    with threadpool_limits(limits=1, user_api="blas"):
        return _real_split_inner(split_index, train_idx, test_idx, x_raw, y_raw,
                                 labels, protocol, root_seed)


def _real_split_inner(split_index, train_idx, test_idx, x_raw, y_raw, labels,
                      protocol, root_seed):
    train = center(x_raw[train_idx], y_raw[train_idx], labels)
    x_test, y_test = x_raw[test_idx], y_raw[test_idx]
    cv_seed = replication_seeds(root_seed, split_index)[1]
    cv_plan = kfold_split(train.n, protocol.cv_k, cv_seed)
    ell_grid = protocol.usable_ell(train.n, train.p)
    d_grid = list(protocol.d_grid)
    rows = []

    def add(method, fit, d_used):
        rows.append(_metrics_row(method, split_index, fit, x_test, y_test,
                                 None, d_used))

    cv = cross_validate(train, "lasso", {"lam": "auto"}, cv_plan)
    add("lasso", fit_lasso(train, cv.best_params["lam"]), None)

    cv = cross_validate(train, "ridge", {"lam": "auto"}, cv_plan)
    add("ridge", fit_ridge(train, cv.best_params["lam"]), None)

    cv = cross_validate(train, "spc", {"ell": ell_grid, "d": d_grid}, cv_plan)
    add("spc", fit_spc(train, ell=cv.best_params["ell"], d=cv.best_params["d"]),
        cv.best_params["d"])

    cv = cross_validate(
        train, "spc_lasso", {"ell": ell_grid, "d": d_grid, "lam": "auto"}, cv_plan
    )
    add("spc_lasso",
        fit_spc_lasso(train, ell=cv.best_params["ell"], lam=cv.best_params["lam"],
                      d=cv.best_params["d"]),
        cv.best_params["d"])

    cv = cross_validate(
        train, "aimer", {"ell": ell_grid, "d": d_grid, "b": [0.0]}, cv_plan
    )
    fit, _ = fit_aimer(train, ell=cv.best_params["ell"], d=cv.best_params["d"], b=0.0)
    add("aimer_b0", fit, cv.best_params["d"])

    cv = cross_validate(
        train, "aimer", {"ell": ell_grid, "d": d_grid, "b": "auto"}, cv_plan
    )
    fit, _ = fit_aimer(train, ell=cv.best_params["ell"], d=cv.best_params["d"],
                       b=cv.best_params["b"])
    add("aimer", fit, cv.best_params["d"])
    return rows


def run_real_data(x_raw, y_raw, labels=None, protocol=None, seed=0, jobs=1):
    """Repeated train/test splits with per-split CV over all tuning parameters."""
    protocol = protocol or RealDataProtocol()
    x_raw = np.asarray(x_raw, dtype=float)
    y_raw = np.asarray(y_raw, dtype=float).ravel()
    splits = train_test_splits(
        y_raw.size, protocol.n_splits, protocol.train_fraction, seed
    )
    args = [
        (s, tr, te, x_raw, y_raw, labels, protocol, seed)
        for s, (tr, te) in enumerate(splits)
    ]
    if jobs == 1:
        results = [_real_split(*a) for a in args]
    else:
        results = Parallel(n_jobs=jobs)(delayed(_real_split)(*a) for a in args)
    rows = [row for split_rows in results for row in split_rows]
    config = {
        "command": "real-data",
        "seed": seed,
        "n_splits": protocol.n_splits,
        "train_fraction": protocol.train_fraction,
        "cv_k": protocol.cv_k,
        "d_grid": list(protocol.d_grid),
        "ell_grid": list(protocol.ell_grid),
        "n": int(y_raw.size),
        "p": int(x_raw.shape[1]),
    }
    return ExperimentReport(
        kind="real-data",
        config=config,
        group_keys=("method",),
        method_rows=aggregate_rows(rows, ("method",)),
        replication_rows=rows,
    )


def run_scaling_bench(p_values, n=100, ell=25, d=2, repeats=3, seed=0):
    """Wall-clock of screened fits as the column count grows at fixed ell."""
    import time

    rng = np.random.default_rng(seed)
    rows = []
    for p in p_values:
        x = rng.standard_normal((n, int(p)))
        y = rng.standard_normal(n)
        data = center(x, y)
        best_aimer = best_spc = float("inf")
        for _ in range(repeats):
            t0 = time.perf_counter()
            fit_aimer(data, ell=ell, d=d, b=0.0)
            best_aimer = min(best_aimer, time.perf_counter() - t0)
            t0 = time.perf_counter()
            fit_spc(data, ell=ell, d=d)
            best_spc = min(best_spc, time.perf_counter() - t0)
        rows.append({"p": int(p), "aimer_seconds": best_aimer,
                     "spc_seconds": best_spc})
    config = {"command": "bench", "n": n, "ell": ell, "d": d,
              "repeats": repeats, "seed": seed,
              "p_values": [int(p) for p in p_values]}
    return ExperimentReport(kind="bench", config=config, group_keys=("p",),
                            method_rows=rows, replication_rows=rows)
