"""Command-line surface.

Subcommands map one-to-one onto the library runners; every emitted artifact
embeds the full run configuration (including the root seed) so any output
can be reproduced from its own header.  On failure the process prints a
single machine-parsable "<error-class>: <message>" line to stderr and exits
nonzero.
"""

import argparse
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import dataio
from .errors import AimerError, ValidationError
from .estimators import (
    fit_aimer,
    fit_lasso,
    fit_pcr,
    fit_ridge,
    fit_spc,
    fit_spc_lasso,
    predict,
)
from .evaluation import (
    cross_validate,
    kfold_split,
    preprocess_log2_shift,
    orthonormalize_features,
    transform_response,
)
from .runners import (
    RealDataProtocol,
    run_real_data,
    run_scaling_bench,
    run_simulation_suite,
)
from .screening import center
from .simulation import assumption_fnr, neighborhood_precision

METHOD_FLAGS = {
    "aimer": "aimer",
    "spc": "spc",
    "spc-lasso": "spc_lasso",
    "pcr": "pcr",
    "ridge": "ridge",
    "lasso": "lasso",
}


@dataclass
class RunConfig:
    command: str
    input_paths: dict = field(default_factory=dict)
    output_path: str = None
    method_params: dict = field(default_factory=dict)
    root_seed: int = None
    preprocessing: dict = field(default_factory=dict)

    def to_dict(self):
        return dataio.jsonable(asdict(self))


def _add_data_flags(parser, need_y=True):
    parser.add_argument("--x", required=True, help="design matrix CSV/TSV")
    if need_y:
        parser.add_argument("--y", required=True, help="response CSV/TSV (one column)")
    parser.add_argument("--transpose", action="store_true",
                        help="input stores genes as rows; transpose on load")
    parser.add_argument("--log2shift", action="store_true",
                        help="per feature: shift minimum to 1, then log2")
    parser.add_argument("--orthonormalize", action="store_true",
                        help="replace the centered design by U V^T")
    if need_y:
        parser.add_argument("--log-survival", action="store_true",
                            help="response is a survival time; use log(t + 1)")


def _load_design(args):
    x, labels, _ = dataio.load_matrix(args.x)
    if args.transpose:
        # labels belonged to columns of the stored orientation; regenerate
        x = x.T
        labels = None
    if args.log2shift:
        x = preprocess_log2_shift(x)
    if args.orthonormalize:
        x = orthonormalize_features(x)
    return x, labels


def _load_response(args):
    y, _ = dataio.load_vector(args.y)
    if args.log_survival:
        y = transform_response(y)
    return y


def _preprocessing_dict(args, need_y=True):
    out = {
        "transpose": bool(getattr(args, "transpose", False)),
        "log2shift": bool(getattr(args, "log2shift", False)),
        "orthonormalize": bool(getattr(args, "orthonormalize", False)),
    }
    if need_y:
        out["log_survival"] = bool(getattr(args, "log_survival", False))
    return out


def _parse_grid(text):
    if text is None:
        return None
    if text.strip().lower() == "auto":
        return "auto"
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise ValidationError(f"could not parse grid {text!r}") from None


def _selection_kwargs(args):
    if (args.ell is None) == (args.tstar is None):
        raise ValidationError("give exactly one of --ell or --tstar")
    if args.ell is not None:
        return {"ell": args.ell}
    return {"t_star": args.tstar}


def _dispatch_fit(method, data, args):
    if method == "aimer":
        fit, _ = fit_aimer(data, d=args.d, b=args.b, **_selection_kwargs(args))
        return fit
    if method == "spc":
        return fit_spc(data, d=args.d, **_selection_kwargs(args))
    if method == "spc_lasso":
        return fit_spc_lasso(data, lam=args.lam, **_selection_kwargs(args))
    if method == "pcr":
        return fit_pcr(data, d=args.d)
    if method == "ridge":
        return fit_ridge(data, args.lam)
    if method == "lasso":
        return fit_lasso(data, args.lam)
    raise ValidationError(f"unknown method {method!r}")


def _cmd_fit(args):
    method = METHOD_FLAGS[args.method]
    x, labels = _load_design(args)
    y = _load_response(args)
    data = center(x, y, labels)
    fit = _dispatch_fit(method, data, args)
    config = RunConfig(
        command="fit",
        input_paths={"x": args.x, "y": args.y},
        output_path=args.out,
        method_params={"method": method, **fit.hyperparams},
        root_seed=args.seed,
        preprocessing=_preprocessing_dict(args),
    )
    if args.out:
        dataio.emit_report(fit, args.out, "json", config=config.to_dict(),
                           labels=data.column_labels)
    print(f"method: {method}")
    print(f"selected genes: {fit.selected_genes.size}")
    print(f"intercept: {fit.intercept:.4f}")
    for key, value in fit.hyperparams.items():
        shown = f"{value:.4f}" if isinstance(value, float) else value
        print(f"{key}: {shown}")
    return 0


def _cmd_cv(args):
    method = METHOD_FLAGS[args.method]
    x, labels = _load_design(args)
    y = _load_response(args)
    data = center(x, y, labels)
    grids = {}
    ell_grid = _parse_grid(args.ell_grid)
    tstar_grid = _parse_grid(args.tstar_grid)
    if method in ("aimer", "spc", "spc_lasso"):
        if (ell_grid is None) == (tstar_grid is None):
            raise ValidationError("give exactly one of --ell-grid or --tstar-grid")
        if ell_grid is not None:
            grids["ell"] = [int(v) for v in ell_grid]
        else:
            grids["t_star"] = tstar_grid
    if method in ("aimer", "spc", "pcr"):
        d_grid = _parse_grid(args.d_grid)
        if d_grid is None:
            raise ValidationError(f"--d-grid is required for {args.method}")
        grids["d"] = [int(v) for v in d_grid]
    if method == "aimer":
        grids["b"] = _parse_grid(args.b_grid) or "auto"
    if method in ("spc_lasso", "ridge", "lasso"):
        grids["lam"] = _parse_grid(args.lambda_grid) or "auto"
    plan = kfold_split(data.n, args.cv_k, args.seed)
    result = cross_validate(data, method, grids, plan)

    class _Best:
        pass

    best = _Best()
    best.ell = result.best_params.get("ell")
    best.tstar = result.best_params.get("t_star")
    best.d = result.best_params.get("d")
    best.b = result.best_params.get("b", 0.0)
    best.lam = result.best_params.get("lam")
    fit = _dispatch_fit(method, data, best)
    config = RunConfig(
        command="cv",
        input_paths={"x": args.x, "y": args.y},
        output_path=args.out,
        method_params={"method": method, "grids": dataio.jsonable(grids),
                       "cv_k": args.cv_k, "best": dataio.jsonable(result.best_params)},
        root_seed=args.seed,
        preprocessing=_preprocessing_dict(args),
    )
    payload = {
        "config": config.to_dict(),
        "method": method,
        "best_params": dataio.jsonable(result.best_params),
        "cv_mse": result.best_mse,
        "surface": dataio.jsonable(result.surface),
        "fit": dataio.fit_to_dict(fit, config.to_dict(), data.column_labels),
    }
    if args.out:
        dataio.write_json(payload, args.out)
    print(f"method: {method}")
    print("best:", " ".join(
        f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
        for k, v in sorted(result.best_params.items())
    ))
    print(f"cv mse: {result.best_mse:.4f}")
    return 0


def _cmd_predict(args):
    payload = dataio.read_json(args.model)
    fit, _labels = dataio.fit_from_dict(payload)
    x, _, _ = dataio.load_matrix(args.x)
    if getattr(args, "transpose", False):
        x = x.T
    preds = predict(fit, np.atleast_2d(x))
    rows = [{"row": i, "prediction": float(v)} for i, v in enumerate(preds)]
    if args.out:
        dataio.write_rows_csv(args.out, rows, ["row", "prediction"],
                              config=payload.get("config"))
    for row in rows:
        print(f"{row['row']},{row['prediction']:.6g}")
    return 0


def _cmd_simulate(args):
    report = run_simulation_suite(args.sim, args.reps, args.seed, jobs=args.jobs)
    paths = dataio.write_report(report, args.out)
    for row in report.method_rows:
        cells = [f"{row['method']:>10}"]
        for key in ("prediction_mse", "estimation_mse", "selected_count"):
            if row.get(key) is not None:
                cells.append(f"{key}={row[key]:.4f}")
        print("  ".join(cells))
    print(f"wrote {len(paths)} files to {args.out}")
    return 0


def _cmd_real_data(args):
    x, labels = _load_design(args)
    y = _load_response(args)
    protocol = RealDataProtocol(
        n_splits=args.splits,
        train_fraction=args.fraction,
        cv_k=args.cv_k,
        d_grid=tuple(range(1, args.d_max + 1)),
        ell_grid=tuple(int(v) for v in _parse_grid(args.ell_grid)),
    )
    report = run_real_data(x, y, labels=labels, protocol=protocol,
                           seed=args.seed, jobs=args.jobs)
    report.config["preprocessing"] = _preprocessing_dict(args)
    report.config["input_paths"] = {"x": args.x, "y": args.y}
    paths = dataio.write_report(report, args.out)
    for row in report.method_rows:
        d_txt = f"  d={row['d_used']:.1f}" if row.get("d_used") is not None else ""
        print(f"{row['method']:>10}  mse={row['prediction_mse']:.4f}  "
              f"genes={row['selected_count']:.1f}{d_txt}")
    print(f"wrote {len(paths)} files to {args.out}")
    return 0


def _cmd_audit(args):
    x, labels = _load_design(args)
    y = _load_response(args)
    data = center(x, y, labels)
    sigma_xy = data.x.T @ data.y / data.n
    topk = args.topk
    if not 1 <= topk <= data.p:
        raise ValidationError(f"--topk must lie in [1, {data.p}]")
    order = np.lexsort((np.arange(data.p), -np.abs(sigma_xy)))
    sparse_xy = np.zeros(data.p)
    keep = order[:topk]
    sparse_xy[keep] = sigma_xy[keep]
    columns = []
    for lam in args.lam:
        omega = neighborhood_precision(data, lam)
        audit = assumption_fnr(omega, sparse_xy)
        columns.append({
            "lam": lam,
            "sparsity": audit.precision_sparsity,
            "pct_nonzero_beta": audit.beta_nonzero_fraction,
            "fnr": audit.false_negative_rate,
            "error": audit.error,
        })
    config = RunConfig(
        command="audit",
        input_paths={"x": args.x, "y": args.y},
        output_path=args.out,
        method_params={"lambdas": list(args.lam), "topk": topk},
        root_seed=args.seed,
        preprocessing=_preprocessing_dict(args),
    )
    payload = {"config": config.to_dict(), "columns": columns}
    if args.out:
        dataio.write_json(payload, args.out)
    # three-row table: sparsity, fraction of nonzero coefficients, miss rate
    def row_of(key):
        cells = []
        for col in columns:
            value = col[key]
            cells.append("   n/a" if value is None else f"{value:.4f}")
        return "  ".join(cells)

    print("sparsity          " + row_of("sparsity"))
    print("% non-zero beta   " + row_of("pct_nonzero_beta"))
    print("false neg. rate   " + row_of("fnr"))
    return 0


def _cmd_bench(args):
    p_values = [int(v) for v in _parse_grid(args.p_list)]
    report = run_scaling_bench(p_values, n=args.n, ell=args.ell, d=args.d,
                               repeats=args.repeats, seed=args.seed)
    if args.out:
        dataio.write_json(report.to_dict(), args.out)
    for row in report.method_rows:
        print(f"p={row['p']:>7}  aimer={row['aimer_seconds']:.4f}s  "
              f"spc={row['spc_seconds']:.4f}s")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="aimer",
        description="Marginal-screening eigenvector regression and baselines",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one of the five simulation studies")
    p.add_argument("--sim", type=int, required=True, choices=range(1, 6))
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fit", help="fit one estimator at fixed hyperparameters")
    p.add_argument("--method", required=True, choices=sorted(METHOD_FLAGS))
    _add_data_flags(p)
    p.add_argument("--ell", type=int)
    p.add_argument("--tstar", type=float)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--b", type=float, default=0.0)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("cv", help="cross-validate hyperparameters, then fit")
    p.add_argument("--method", required=True, choices=sorted(METHOD_FLAGS))
    _add_data_flags(p)
    p.add_argument("--ell-grid", help="comma list, e.g. 10,25,50")
    p.add_argument("--tstar-grid", help="comma list of thresholds")
    p.add_argument("--d-grid", help="comma list of component counts")
    p.add_argument("--b-grid", help="comma list or 'auto'")
    p.add_argument("--lambda-grid", help="comma list or 'auto'")
    p.add_argument("--cv-k", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_cv)

    p = sub.add_parser("predict", help="predict responses for new rows")
    p.add_argument("--model", required=True, help="fit JSON from 'fit' or 'cv'")
    p.add_argument("--x", required=True)
    p.add_argument("--transpose", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("audit", help="marginal-screening false-negative audit")
    _add_data_flags(p)
    p.add_argument("--lambda", dest="lam", type=float, nargs="+", required=True)
    p.add_argument("--topk", type=int, default=120,
                   help="keep this many largest marginal covariances")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_audit)

    p = sub.add_parser("real-data", help="repeated-split protocol on a dataset")
    _add_data_flags(p)
    p.add_argument("--splits", type=int, default=10)
    p.add_argument("--fraction", type=float, default=0.5)
    p.add_argument("--cv-k", type=int, default=10)
    p.add_argument("--d-max", type=int, default=5)
    p.add_argument("--ell-grid", default="10,25,50,75,100")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_real_data)

    p = sub.add_parser("bench", help="wall-clock scaling at fixed screening size")
    p.add_argument("--p-list", default="500,1000,2000")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--ell", type=int, default=25)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AimerError as err:
        print(f"{err.code}: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"io-error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
