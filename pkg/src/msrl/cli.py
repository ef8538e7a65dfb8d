"""Command-line interface: ``msrl {fit,path,tune,simulate,verify}``.

Exit codes: 0 success, 2 usage, 3 data, 4 numerical.
"""
import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .admm import AdmmConfig
from .apgd import ApgdConfig, RankDeficient, hybrid_path_fit, solve
from .baselines import refit
from .datagen import SimDesign
from .linalg import DataError, center_and_normalize, read_matrix_csv, write_matrix_csv
from .penalties import PenaltyKind, PenaltySpec
from .simulation import METHODS, SimSettings, parse_methods, run_simulation, summarize
from .tuning import (CorollaryConstants, corollary_lambda, cross_validate, default_grid,
                     lambda_max, mc_tune, quantile)
from .verification import (RankDeficientResidual, kkt_residual, lemma1_check,
                           weighted_rss_identity)

EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 2, 3, 4


class UsageError(Exception):
    pass


def _threads(args):
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("MSRL_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"MSRL_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _penalty(name):
    try:
        return PenaltyKind.parse(name)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _load(args):
    x = read_matrix_csv(args.x)
    y = read_matrix_csv(args.y)
    if x.shape[0] != y.shape[0]:
        raise DataError(f"{args.x} has {x.shape[0]} rows but {args.y} has {y.shape[0]}")
    return x, y, center_and_normalize(y, x, not args.no_normalize)


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_rows(path, fields, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def _kkt_or_none(data, pen, b):
    try:
        return kkt_residual(data, pen, b)
    except RankDeficientResidual:
        return None


def _configs(args):
    return (AdmmConfig(eps_rel=args.eps_rel, max_iter=args.max_iter),
            ApgdConfig(max_iter=args.max_iter))


def _write_fit(out, data, pen, fit, b):
    write_matrix_csv(out / "beta.csv", data.raw_coef(b))
    write_matrix_csv(out / "intercept.csv", data.intercept(b)[None, :])
    _write_json(out / "fit.json", {
        "penalty": pen.kind.value, "lambda": pen.lam, "objective": fit.objective,
        "iterations": fit.iterations, "solver": fit.solver, "converged": fit.converged,
        "kkt_residual": _kkt_or_none(data, pen, fit.b_hat),
        "refit": b is not fit.b_hat,
    })


def cmd_fit(args):
    if args.lam is None and args.cv is None:
        raise UsageError("fit needs --lambda or --cv K")
    x, y, data = _load(args)
    cfg_admm, cfg_apgd = _configs(args)
    lam = args.lam
    if lam is None:
        grid = default_grid(data, args.penalty, args.nlambda, args.ratio)
        lam = cross_validate(data, args.penalty, grid, args.cv, args.seed, cfg_admm, cfg_apgd,
                             x_raw=x, y_raw=y).best_lambda
    pen = PenaltySpec(args.penalty, lam)
    fit = solve(data, pen, args.solver, cfg_admm, cfg_apgd)
    b = refit(data, fit.b_hat) if args.refit else fit.b_hat
    _write_fit(_out_dir(args), data, pen, fit, b)


def _residual_rank(data, b, tol=1e-8):
    d = np.linalg.svd(data.y - data.x @ b, compute_uv=False)
    return int(np.sum(d > tol * d[0])) if d.size and d[0] > 0 else 0


def cmd_path(args):
    x, y, data = _load(args)
    cfg_admm, cfg_apgd = _configs(args)
    grid = default_grid(data, args.penalty, args.nlambda, args.ratio)
    out = _out_dir(args)
    if args.cv is not None:
        result = cross_validate(data, args.penalty, grid, args.cv, args.seed, cfg_admm, cfg_apgd,
                                x_raw=x, y_raw=y)
        fits = result.fits
        _write_rows(out / "cv.csv", ("lambda", "mean_error", "standard_error"),
                    [{"lambda": float(l), "mean_error": float(m), "standard_error": float(s)}
                     for l, m, s in zip(grid, result.cv_mean, result.cv_se)])
        _write_json(out / "best-lambda.json", {
            "best_lambda": result.best_lambda, "best_index": result.best_index,
            "one_se_lambda": result.one_se_lambda, "folds": args.cv, "seed": args.seed})
    else:
        fits = hybrid_path_fit(data, args.penalty, grid, cfg_admm, cfg_apgd)
    rows = [{"lambda": float(f.lam), "objective": f.objective,
             "nonzeros": int(np.count_nonzero(f.b_hat)), "solver": f.solver,
             "converged": f.converged, "residual_rank": _residual_rank(data, f.b_hat)}
            for f in fits]
    _write_rows(out / "path.csv", ("lambda", "objective", "nonzeros", "solver", "converged",
                                   "residual_rank"), rows)


def _levels(text):
    try:
        levels = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"levels must be comma-separated reals, got {text!r}") from None
    if any(not 0 < v < 1 for v in levels):
        raise argparse.ArgumentTypeError("levels must lie in (0, 1)")
    return sorted(levels)


def cmd_tune(args):
    out = _out_dir(args)
    if args.mode == "mc":
        if args.x is None or args.y is None:
            raise UsageError("mc mode needs --x and --y")
        _, _, data = _load(args)
        if data.n < data.q:
            raise DataError(f"Monte-Carlo tuning draws from O(n, q), which needs n >= q; "
                            f"got n={data.n}, q={data.q}")
        dist = mc_tune(data, args.penalty, args.c, args.draws, args.seed)
        result = {"mode": "mc", "penalty": args.penalty.value, "c": args.c,
                  "draws": args.draws, "seed": args.seed,
                  "lambda": {f"{lv:g}": quantile(dist, lv) for lv in args.levels},
                  "lambda_max": lambda_max(data, args.penalty)}
        if args.samples:
            dist.to_csv(out / "samples.csv")
    else:
        if args.x is not None and args.y is not None:
            _, _, data = _load(args)
            n, p, q = data.n, data.p, data.q
            xnorm = float(np.linalg.norm(data.x, 2))
        elif None not in (args.n, args.p, args.q):
            n, p, q, xnorm = args.n, args.p, args.q, args.xnorm
        else:
            raise UsageError("corollary mode needs --x/--y or --n/--p/--q")
        consts = CorollaryConstants(args.c, args.c1, args.c2, args.c3)
        lam = corollary_lambda(args.penalty, n, p, q, consts, xnorm)
        result = {"mode": "corollary", "penalty": args.penalty.value, "n": n, "p": p, "q": q,
                  "c": args.c, "c1": args.c1, "c2": args.c2, "c3": args.c3, "lambda": lam}
    _write_json(out / "tune.json", result)


def cmd_simulate(args):
    try:
        methods = parse_methods(args.methods)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    try:
        with open(args.config) as fh:
            config = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read config {args.config}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{args.config} is not valid JSON: {exc}") from exc
    if not isinstance(config, dict):
        raise DataError(f"{args.config} must hold a JSON object of design fields")
    settings_keys = set(SimSettings.__dataclass_fields__)
    settings = SimSettings(**{k: config.pop(k) for k in list(config) if k in settings_keys})
    reps = args.reps if args.reps is not None else int(config.pop("reps", 1))
    config.pop("reps", None)
    if "seed" not in config or args.seed_given:
        config["seed"] = args.seed
    try:
        design = SimDesign.from_dict(config)
    except (TypeError, ValueError) as exc:
        raise DataError(f"invalid design: {exc}") from exc
    rows = run_simulation(design, reps, methods, settings, workers=_threads(args))
    out = _out_dir(args)
    fields = ("rep", "rep_seed", "method", "frob_sq_error", "tpr", "fpr",
              "weighted_pred_error", "nuclear_pred_error", "lambda", "grid_index")
    _write_rows(out / "metrics.csv", fields, rows)
    _write_rows(out / "timings.csv", ("rep", "method", "seconds"), rows)
    summary = summarize(rows)
    for entry in summary.values():
        entry.pop("seconds")
    _write_json(out / "summary.json", {"design": design.to_dict(), "reps": reps,
                                       "methods": methods, "summary": summary})


def cmd_verify(args):
    _, _, data = _load(args)
    pen = PenaltySpec(args.penalty, args.lam)
    if args.beta:
        b_raw = read_matrix_csv(args.beta)
        if b_raw.shape != (data.p, data.q):
            raise DataError(f"beta is {b_raw.shape}, expected {(data.p, data.q)}")
        b = b_raw * data.column_scales[:, None]
    else:
        cfg_admm, cfg_apgd = _configs(args)
        b = solve(data, pen, "auto", cfg_admm, cfg_apgd).b_hat
    lhs, rhs = weighted_rss_identity(data, b)
    report = {"kkt": _kkt_or_none(data, pen, b),
              "identityGap": abs(lhs - rhs) / max(abs(lhs), 1e-300)}
    try:
        rep = lemma1_check(data, pen, b, args.trials, np.random.default_rng(args.seed))
        report["lemma1Violations"] = rep["violations"]
    except RankDeficientResidual:
        report["lemma1Violations"] = None
    print(json.dumps(report, sort_keys=True))


def build_parser():
    parser = argparse.ArgumentParser(prog="msrl", description="Multivariate square-root lasso")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True, required=True):
        if data:
            p.add_argument("--x", required=required, help="predictor matrix CSV (n x p)")
            p.add_argument("--y", required=required, help="response matrix CSV (n x q)")
            p.add_argument("--no-normalize", action="store_true",
                           help="center only; do not scale predictor columns")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=None,
                       help="worker count (default: MSRL_THREADS or CPU count)")

    def solver_opts(p):
        p.add_argument("--eps-rel", type=float, default=AdmmConfig.eps_rel)
        p.add_argument("--max-iter", type=int, default=AdmmConfig.max_iter)

    def grid_opts(p):
        p.add_argument("--nlambda", type=int, default=100)
        p.add_argument("--ratio", type=float, default=1e-4,
                       help="smallest grid value as a fraction of lambda_max")

    p = sub.add_parser("fit", help="fit at one lambda")
    common(p)
    solver_opts(p)
    grid_opts(p)
    p.add_argument("--penalty", type=_penalty, required=True)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--cv", type=int, help="choose lambda by K-fold cross-validation")
    p.add_argument("--solver", choices=("auto", "admm", "apgd"), default="auto")
    p.add_argument("--refit", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("path", help="warm-started path, optionally cross-validated")
    common(p)
    solver_opts(p)
    grid_opts(p)
    p.add_argument("--penalty", type=_penalty, required=True)
    p.add_argument("--cv", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_path)

    p = sub.add_parser("tune", help="Monte-Carlo or closed-form lambda")
    common(p, required=False)
    p.add_argument("--mode", choices=("mc", "corollary"), default="mc")
    p.add_argument("--penalty", type=_penalty, required=True)
    p.add_argument("--c", type=float, default=1.01)
    p.add_argument("--draws", type=int, default=5000)
    p.add_argument("--levels", type=_levels, default=_levels("0.5,0.75,0.85,0.95"))
    p.add_argument("--samples", action="store_true", help="also write samples.csv")
    for name in ("c1", "c2", "c3"):
        p.add_argument(f"--{name}", type=float, default=1.01)
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--q", type=int)
    p.add_argument("--xnorm", type=float, help="spectral norm of X (nuclear penalty)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("simulate", help="replicated simulation study")
    common(p, data=False)
    p.add_argument("--config", required=True, help="design JSON")
    p.add_argument("--reps", type=int)
    p.add_argument("--methods", default="msr-cv,msr-q95,pls,calibrated",
                   help="comma-separated; valid: " + ",".join(METHODS))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="optimality and identity diagnostics as JSON")
    common(p)
    solver_opts(p)
    p.add_argument("--penalty", type=_penalty, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--beta", help="raw-scale coefficient CSV; fitted when omitted")
    p.add_argument("--trials", type=int, default=200)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(argv)
    args.seed_given = "--seed" in argv
    try:
        args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (DataError, OSError) as exc:
        print(f"msrl: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ArithmeticError, RankDeficient, np.linalg.LinAlgError) as exc:
        print(f"msrl: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"msrl: invalid input: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
