"""``akda`` command line: synth, fit, transform, eval, selfcheck, bench.

Exit codes: 0 success, 1 selfcheck failure, 2 usage error, 3 data error,
4 solver error. JSON goes to stdout (or --log); human summaries to stderr.
"""

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import checks, data, model, solvers
from .errors import (
    DataError,
    FitError,
    InputError,
    ModelFileError,
    SolverError,
    StateError,
)
from .kernels import KernelSpec

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_SOLVER = 4

BENCH_HEADER = [
    "solver",
    "n",
    "c",
    "kernel",
    "wall_time_s",
    "residual",
    "trace_criterion",
    "rank_condition",
    "accuracy",
]


class UsageError(Exception):
    pass


# -- argument helpers ----------------------------------------------------------


def _int_list(text):
    try:
        values = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _float_list(text):
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _solver_list(text):
    names = [tok.strip() for tok in text.split(",") if tok.strip()]
    try:
        return [model.solver_name(n) for n in names]
    except InputError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _solver_arg(text):
    try:
        return model.solver_name(text)
    except InputError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_kernel_flags(p, gamma_default=None):
    p.add_argument("--kernel", choices=["linear", "poly", "polynomial", "rbf"], default="rbf")
    p.add_argument("--gamma", type=float, default=gamma_default)
    p.add_argument("--degree", type=int, default=3)
    p.add_argument("--coef0", type=float, default=1.0)


def _add_solver_flags(p):
    p.add_argument("--solver", type=_solver_arg, default="spectral_regression")
    p.add_argument("--variant", type=str.upper, choices=model.VARIANTS, default="RAW")
    p.add_argument("--epsilon", type=float, default=1e-4)
    p.add_argument("--epsilon-mode", choices=solvers.EPSILON_MODES, default="trace_scaled")
    p.add_argument("--rank-tol", type=float, default=1e-10)
    p.add_argument("--pencil", choices=["total", "within"], default="total")


def _add_input_flags(p):
    p.add_argument("--label-col", default="last", help="'first', 'last' or a column index")
    p.add_argument("--format", choices=["auto", "csv", "libsvm"], default="auto")


def _kernel_spec(args, gamma=None):
    kind = "polynomial" if args.kernel == "poly" else args.kernel
    gamma = args.gamma if gamma is None else gamma
    if kind in ("rbf", "polynomial") and gamma is None:
        raise UsageError(f"--gamma is required for the {kind} kernel")
    try:
        return KernelSpec(kind, gamma=1.0 if gamma is None else gamma, degree=args.degree, coef0=args.coef0)
    except InputError as exc:
        raise UsageError(str(exc)) from None


def _solver_options(args):
    try:
        return solvers.SolverOptions(
            epsilon=args.epsilon, rank_tol_rel=args.rank_tol, epsilon_mode=args.epsilon_mode
        )
    except InputError as exc:
        raise UsageError(str(exc)) from None


def _label_col(text):
    if text in ("first", "last"):
        return text
    try:
        return int(text)
    except ValueError:
        raise UsageError(f"--label-col must be 'first', 'last' or an integer, got {text!r}") from None


def _load(path, args):
    fmt = getattr(args, "format", "auto")
    if fmt == "auto":
        fmt = "libsvm" if str(path).lower().endswith((".svm", ".libsvm")) else "csv"
    if fmt == "libsvm":
        return data.load_libsvm(path)
    return data.load_csv(path, label_col=_label_col(getattr(args, "label_col", "last")))


def _fit_variant(train, kernel, args, opts, diagnostics=True):
    needs_context = diagnostics or args.variant != "RAW"
    m = model.fit(train, kernel, args.solver, opts, pencil=args.pencil, diagnostics=needs_context)
    if args.variant != "RAW":
        m = model.apply_constraint(m, args.variant)
    return m


def _json_value(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _dump_json(obj):
    def clean(o):
        if isinstance(o, dict):
            return {k: clean(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [clean(v) for v in o]
        return _json_value(o)

    return json.dumps(clean(obj), sort_keys=True)


def _emit(line, path):
    if path:
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
    else:
        print(line)


# -- commands ------------------------------------------------------------------


def cmd_synth(args):
    if args.kind == "gaussians":
        if args.classes < 2:
            raise UsageError("--classes must be at least 2")
        if args.n_per_class < 1 or args.dim < 1:
            raise UsageError("--n-per-class and --dim must be positive")
        ds = data.gen_gaussians(args.classes, args.n_per_class, args.dim, args.separation, args.seed)
    else:
        if args.n < 8:
            raise UsageError("--n must be at least 8")
        if args.noise < 0:
            raise UsageError("--noise must be non-negative")
        gen = data.gen_circles if args.kind == "circles" else data.gen_xor
        ds = gen(args.n, args.noise, args.seed)
    if args.out:
        data.write_csv(ds, args.out)
    else:
        data.write_csv(ds, sys.stdout)
    print(f"wrote {ds.n_samples} rows, {ds.n_features} features", file=sys.stderr)
    return EXIT_OK


def cmd_fit(args):
    kernel = _kernel_spec(args)
    opts = _solver_options(args)
    train = _load(args.data, args)
    m = _fit_variant(train, kernel, args, opts, diagnostics=True)
    model.save_model(m, args.out)
    record = {
        "command": "fit",
        "data": str(args.data),
        "n": train.n_samples,
        "c": int(np.unique(train.labels).size),
        "kernel": kernel.kind,
        "variant": m.variant,
        "timings": m.timings,
        "model": str(args.out),
        "warnings": m.report.info.get("warnings", []),
    }
    record.update(m.report.summary())
    _emit(_dump_json(record), args.log)
    r = m.report
    print(
        f"{m.solver}/{m.variant}: N={train.n_samples} D={m.n_dims} residual={r.residual:.2e} "
        f"ranks t={r.rank_t} w={r.rank_w} b={r.rank_b} "
        f"rank_condition={'holds' if r.rank_condition_holds else 'fails'} -> {args.out}",
        file=sys.stderr,
    )
    return EXIT_OK


def _write_embedding(Z, labels, out):
    header = [f"z{j}" for j in range(Z.shape[1])] + (["label"] if labels is not None else [])
    fh = open(out, "w", newline="", encoding="utf-8") if out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, row in enumerate(Z):
            cells = [repr(float(v)) for v in row]
            if labels is not None:
                lab = labels[i]
                cells.append(str(lab.item() if hasattr(lab, "item") else lab))
            w.writerow(cells)
    finally:
        if out:
            fh.close()


def cmd_transform(args):
    m = model.load_model(args.model)
    if args.no_labels:
        X, _ = data.load_features_csv(args.data)
        labels = None
    else:
        ds = _load(args.data, args)
        X, labels = ds.X, ds.labels
    if X.shape[1] != m.n_features:
        raise DataError(
            f"{args.data}: model expects {m.n_features} features, data has {X.shape[1]}"
        )
    Z = m.transform(X)
    _write_embedding(Z, labels, args.out)
    print(f"embedded {Z.shape[0]} rows into {Z.shape[1]} dims", file=sys.stderr)
    return EXIT_OK


def _classify(Z_train, y_train, Z_test, args):
    if args.classifier == "ridge":
        clf = data.ridge_classifier_fit(Z_train, y_train, args.lam)
    else:
        clf = data.nearest_centroid_fit(Z_train, y_train)
    return clf.predict(Z_test)


def _da_accuracy(train, test, kernel, args, opts):
    m = _fit_variant(train, kernel, args, opts, diagnostics=False)
    pred = _classify(m.transform(train.X), train.labels, m.transform(test.X), args)
    return pred, m


def _select_gamma(train, args, opts):
    """Inner stratified split of the training part; best accuracy, ties to the first gamma."""
    inner_train, inner_val = data.split(train, 0.5, args.seed + 1)
    scores = []
    for g in args.gamma_grid:
        kernel = _kernel_spec(args, gamma=g)
        try:
            pred, _ = _da_accuracy(inner_train, inner_val, kernel, args, opts)
            acc = data.evaluate(pred, inner_val.labels).accuracy
        except (SolverError, FitError):
            acc = -1.0
        scores.append(acc)
    best = int(np.argmax(scores))
    return args.gamma_grid[best], dict(zip(map(float, args.gamma_grid), scores))


def cmd_eval(args):
    opts = _solver_options(args)
    full = _load(args.data, args)
    if args.test_data:
        train, test = full, _load(args.test_data, args)
        if test.n_features != train.n_features:
            raise DataError(
                f"{args.test_data}: expected {train.n_features} features, got {test.n_features}"
            )
        split_info = None
    else:
        if not 0 < args.test_fraction < 1:
            raise UsageError("--test-fraction must lie in (0, 1)")
        train, test = data.split(full, args.test_fraction, args.seed)
        split_info = {"test_fraction": args.test_fraction, "seed": args.seed}

    report = {"command": "eval", "n_train": train.n_samples, "n_test": test.n_samples}
    if split_info:
        report["split"] = split_info
    if args.no_da:
        pred = _classify(train.X, train.labels, test.X, args)
        report["pipeline"] = "raw-features"
    else:
        grid_scores = None
        if args.gamma_grid:
            gamma, grid_scores = _select_gamma(train, args, opts)
            kernel = _kernel_spec(args, gamma=gamma)
        else:
            kernel = _kernel_spec(args)
        pred, m = _da_accuracy(train, test, kernel, args, opts)
        report.update(
            pipeline="kernel-da",
            kernel={"kind": kernel.kind, "gamma": kernel.gamma, "degree": kernel.degree, "coef0": kernel.coef0},
            solver=m.solver,
            variant=m.variant,
            dims=m.n_dims,
        )
        if grid_scores is not None:
            report["gamma_grid"] = {repr(k): v for k, v in grid_scores.items()}
    report["classifier"] = args.classifier
    classes = np.unique(np.concatenate([train.labels, test.labels]))
    report["metrics"] = data.evaluate(pred, test.labels, classes).to_dict()
    line = _dump_json(report)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(line + "\n")
    print(line)
    print(f"accuracy {report['metrics']['accuracy']:.4f} on {test.n_samples} test rows", file=sys.stderr)
    return EXIT_OK


def cmd_selfcheck(args):
    if any(n < 4 for n in args.sizes):
        raise UsageError("every size must be at least 4")
    outcomes = checks.run_all(args.sizes, args.seed)
    sys.stdout.write(checks.format_report(outcomes))
    failed = [o for o in outcomes if not o.ok]
    print(f"{len(outcomes) - len(failed)}/{len(outcomes)} checks ok", file=sys.stderr)
    return EXIT_OK if not failed else EXIT_CHECK_FAILED


def _bench_cell(task):
    """One (solver, N) cell; returns a CSV row. Failures become an error row."""
    solver, n, args = task
    c = args.classes
    gamma = args.gamma if args.gamma is not None else 1.0 / args.dim
    kernel = KernelSpec(args.kernel, gamma=gamma, degree=args.degree, coef0=args.coef0)
    row = {"solver": solver, "n": n, "c": c, "kernel": kernel.kind}
    try:
        per_class = n // c
        train = data.gen_gaussians(c, per_class, args.dim, args.separation, args.seed)
        test = data.gen_gaussians(c, per_class, args.dim, args.separation, args.seed + 1)
        opts = solvers.SolverOptions(epsilon=args.epsilon)
        times = []
        for _ in range(args.repeats):
            m = model.fit(train, kernel, solver, opts, diagnostics=False)
            times.append(m.timings["prep_s"] + m.timings["solve_s"])
        model.attach_diagnostics(m, train, opts)
        report = m.report
        crit = solvers.trace_criterion(m.context.S_b, m.context.S_t, m.W)
        clf = data.nearest_centroid_fit(m.transform(train.X), train.labels)
        acc = data.evaluate(clf.predict(m.transform(test.X)), test.labels).accuracy
        row.update(
            wall_time_s=f"{float(np.median(times)):.6f}",
            residual=f"{report.residual:.3e}",
            trace_criterion=repr(float(crit)),
            rank_condition=str(bool(report.rank_condition_holds)).lower(),
            accuracy=f"{acc:.4f}",
        )
    except (SolverError, FitError, InputError, StateError, np.linalg.LinAlgError, MemoryError) as exc:
        reason = str(exc).splitlines()[0].replace(",", ";")
        for key in BENCH_HEADER[4:]:
            row[key] = f"error:{reason}"
    return row


def cmd_bench(args):
    grid = args.n_grid
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise UsageError("--n-grid must be strictly ascending")
    if args.classes < 2 or args.dim < 1 or args.repeats < 1:
        raise UsageError("--classes must be >= 2, --dim and --repeats >= 1")
    if any(n < 2 * args.classes or n % args.classes for n in grid):
        raise UsageError("every grid size must be a multiple of --classes with >= 2 samples per class")
    if args.kernel in ("poly", "polynomial"):
        args.kernel = "polynomial"
    tasks = [(s, n, args) for n in grid for s in args.solvers]
    if args.parallel and len(tasks) > 1:
        # cells run in separate processes; each timed region stays single-process
        with ProcessPoolExecutor() as pool:
            rows = list(pool.map(_bench_cell, tasks))
    else:
        rows = [_bench_cell(t) for t in tasks]

    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.DictWriter(fh, fieldnames=BENCH_HEADER, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    finally:
        if args.out:
            fh.close()
    for row in rows:
        _emit(_dump_json({"command": "bench", **row}), args.log) if args.log else None
        print(
            f"{row['solver']:<20} N={row['n']:<6} time={row['wall_time_s']} acc={row['accuracy']}",
            file=sys.stderr,
        )
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="akda", description="Kernel discriminant analysis toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled dataset as CSV")
    p.add_argument("kind", choices=["gaussians", "circles", "xor"])
    p.add_argument("--n", type=int, default=400, help="sample count (circles, xor)")
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--n-per-class", type=int, default=50)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--separation", type=float, default=3.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="fit a model and save it")
    p.add_argument("data")
    _add_kernel_flags(p)
    _add_solver_flags(p)
    _add_input_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="append the JSON record here instead of stdout")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("transform", help="embed a dataset with a saved model")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("--out")
    p.add_argument("--no-labels", action="store_true", help="input CSV has no label column")
    _add_input_flags(p)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("eval", help="split, fit, embed and classify; print metrics JSON")
    p.add_argument("data")
    p.add_argument("--test-data", help="use this file as the test set instead of splitting")
    _add_kernel_flags(p)
    _add_solver_flags(p)
    _add_input_flags(p)
    p.add_argument("--test-fraction", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--classifier", choices=["nc", "ridge"], default="nc")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--gamma-grid", type=_float_list)
    p.add_argument("--no-da", action="store_true", help="classify the raw features directly")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("selfcheck", help="run invariant and oracle-agreement checks")
    p.add_argument("--sizes", type=_int_list, default=[10, 20, 40])
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selfcheck)

    p = sub.add_parser("bench", help="time solvers on synthetic Gaussian data; CSV report")
    p.add_argument("--n-grid", type=_int_list, default=[200, 500, 1000])
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--dim", type=int, default=20)
    p.add_argument("--separation", type=float, default=3.0)
    _add_kernel_flags(p)
    p.add_argument("--epsilon", type=float, default=1e-4)
    p.add_argument("--solvers", type=_solver_list, default=["spectral_regression", "gsvd_cod"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out")
    p.add_argument("--log")
    p.add_argument("--parallel", action="store_true")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)  # argparse exits with 2 on usage errors
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (DataError, ModelFileError, OSError, InputError) as exc:
        print(f"akda: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SolverError, FitError, StateError) as exc:
        print(f"akda: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
