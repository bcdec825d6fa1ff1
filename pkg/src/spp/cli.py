"""Command-line front end.

    spp fit  --input data.txt --structure itemset --loss squared --lambda-ratio 0.1
    spp path --input data.txt --structure sequence --loss logistic --lambda-count 5 --kappa 0,0.1,1
    spp cv   --input data.txt --structure itemset --loss squared --folds loo

Every command writes ``coefficients.csv`` and ``path_report.csv`` into
``--out``; ``cv`` also writes ``cv_report.csv``.  Each file starts with one
``#`` header line carrying a timestamp; everything after it is deterministic
for fixed inputs and flags apart from the ``wall_time`` column.

Exit status: 0 on success, 1 when the solver or the input data fail, 2 for
invalid flags.  ``SPP_LOG`` (e.g. ``INFO``, ``DEBUG``) sets log verbosity.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import logging
import os
import sys
from pathlib import Path

from .data import CLASSIFICATION, REGRESSION, DatasetError, Hyperparams, load_dataset, null_reference
from .objective import get_loss
from .path import CellResult, FoldPlan, cv_path, lambda_max, make_grid, path_2d, select_hyperparams
from .solver import ConvergenceError, fit

logger = logging.getLogger("spp")

DEFAULT_KAPPAS = "0,0.01,0.1,1.0,10.0,100.0"


class ConfigError(ValueError):
    pass


def _num(x) -> str:
    return format(float(x), ".17g")


def _kappas(text: str):
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"bad --kappa list {text!r}") from None
    if not vals:
        raise ConfigError("--kappa needs at least one value")
    if vals[0] != 0.0 and len(vals) > 1:
        raise ConfigError("a kappa grid must start at 0")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ConfigError("--kappa values must be strictly increasing")
    if any(v < 0 for v in vals):
        raise ConfigError("--kappa values must be >= 0")
    return vals


def _folds(text: str, n: int, seed: int) -> FoldPlan:
    if text == "loo":
        return FoldPlan.loo(n)
    if text.startswith("k:"):
        try:
            k = int(text[2:])
        except ValueError:
            raise ConfigError(f"bad --folds {text!r}") from None
        if not 2 <= k <= n:
            raise ConfigError(f"--folds k:{k} needs 2 <= k <= n={n}")
        return FoldPlan.kfold(n, k, seed)
    raise ConfigError(f"--folds must be 'loo' or 'k:<int>', got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spp", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", required=True, help="instance file: '<label> <id> <id> ...' per line")
    common.add_argument("--structure", required=True, choices=["itemset", "sequence"])
    common.add_argument("--loss", default="squared", choices=["squared", "logistic"])
    common.add_argument("--lambda-count", type=int, default=10, help="number of lambda values (K)")
    common.add_argument("--lambda-ratio", type=float, default=0.01, help="smallest lambda as a fraction of lambda_max")
    common.add_argument("--kappa", default=None, help=f"comma-separated kappa values (default {DEFAULT_KAPPAS})")
    common.add_argument("--eps", type=float, default=1e-4, help="duality-gap tolerance")
    common.add_argument("--max-len", type=int, default=3, help="maximum pattern length")
    common.add_argument("--dyn-M", type=int, default=1, help="epochs of two-reference dynamic screening")
    common.add_argument("--dense-T", type=int, default=5, help="dense dynamic-screening cycles")
    common.add_argument("--threads", type=int, default=1, help="worker threads for cv folds")
    common.add_argument("--out", default="spp_out", help="output directory")
    common.add_argument("--seed", type=int, default=0)
    sub.add_parser("fit", parents=[common], help="single (lambda, kappa) fit at lambda-ratio * lambda_max")
    sub.add_parser("path", parents=[common], help="2-D (lambda, kappa) regularization path")
    cv = sub.add_parser("cv", parents=[common], help="cross-validated path and hyperparameter selection")
    cv.add_argument("--folds", default="loo", help="'loo' or 'k:<int>'")
    return parser


def _hyperparams(args, lam=1.0, kappa=0.0) -> Hyperparams:
    try:
        return Hyperparams(lam, kappa, args.eps, args.dyn_M, args.dense_T, args.max_len)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _check(args):
    if args.lambda_count < 2 and args.command != "fit":
        raise ConfigError("--lambda-count must be >= 2")
    if not 0.0 < args.lambda_ratio <= 1.0:
        raise ConfigError("--lambda-ratio must lie in (0, 1]")
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    _hyperparams(args)
    if not Path(args.input).is_file():
        raise ConfigError(f"input file not found: {args.input}")


class _Writer:
    def __init__(self, out: Path, command: str):
        self.out = out
        stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        self.header = f"# spp {command} {stamp}\n"

    def write(self, name, columns, rows, trailer=()):
        path = self.out / name
        with open(path, "w", newline="") as fh:
            fh.write(self.header)
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            w.writerows(rows)
            for line in trailer:
                fh.write(line + "\n")
        return path


COEF_COLUMNS = ["fold", "lambda_index", "kappa_index", "lambda", "kappa", "pattern", "coefficient"]
REPORT_COLUMNS = [
    "fold", "lambda_index", "kappa_index", "lambda", "kappa", "gap", "active_size", "nonzero",
    "nodes_visited", "nodes_pruned", "patterns_screened", "epochs", "refs", "intercept", "wall_time",
]


def _coef_rows(fold, k, kk, cell):
    sol = cell.solution
    for p in sorted(sol.beta, key=lambda p: (len(p.items), p.items)):
        yield [fold, k, kk, _num(cell.lam), _num(cell.kappa), str(p), _num(sol.beta[p])]


def _report_row(fold, k, kk, cell):
    st, sol = cell.result.stats, cell.solution
    return [
        fold, k, kk, _num(cell.lam), _num(cell.kappa), _num(sol.gap), st.active_final, len(sol.beta),
        st.traversal.visited, st.traversal.pruned, st.traversal.screened, st.epochs, max(len(cell.ref_cells), 1),
        _num(sol.beta0), f"{st.wall_time:.6f}",
    ]


def run(args) -> int:
    _check(args)
    task = CLASSIFICATION if args.loss == "logistic" else REGRESSION
    dataset = load_dataset(args.input, args.structure, task)
    loss = get_loss(args.loss)
    kappas = _kappas(args.kappa if args.kappa is not None else ("0" if args.command == "fit" else DEFAULT_KAPPAS))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    writer = _Writer(out, args.command)
    lam_max = lambda_max(dataset, loss, args.max_len)
    if lam_max <= 0.0:
        raise DatasetError("lambda_max is 0 (constant labels): every coefficient is zero")
    logger.info("n=%d lambda_max=%.6g", dataset.n, lam_max)

    if args.command == "fit":
        if len(kappas) != 1:
            raise ConfigError("fit takes a single --kappa value")
        lam = args.lambda_ratio * lam_max
        res = fit(dataset, loss, [null_reference(dataset.n)], _hyperparams(args, lam, kappas[0]))
        cell = CellResult(lam, kappas[0], res, (), 0)
        writer.write("coefficients.csv", COEF_COLUMNS, list(_coef_rows(0, 0, 0, cell)))
        writer.write("path_report.csv", REPORT_COLUMNS, [_report_row(0, 0, 0, cell)])
        return 0

    if args.command == "path":
        grid = make_grid(lam_max, args.lambda_count, tuple(kappas), args.lambda_ratio)
        cells = path_2d(dataset, loss, grid, _hyperparams(args, lam_max))
        coefs, report = [], []
        for (k, kk), cell in cells.items():
            coefs.extend(_coef_rows(0, k, kk, cell))
            report.append(_report_row(0, k, kk, cell))
        writer.write("coefficients.csv", COEF_COLUMNS, coefs)
        writer.write("path_report.csv", REPORT_COLUMNS, report)
        return 0

    plan = _folds(args.folds, dataset.n, args.seed)
    grid = make_grid(lam_max, args.lambda_count, (0.0,), args.lambda_ratio)
    records = []
    for kk, kappa in enumerate(kappas):
        recs = cv_path(dataset, loss, plan, grid.lambdas, kappa, _hyperparams(args, lam_max, kappa), threads=args.threads)
        records.extend((kk, r) for r in recs)
    coefs, report, cvrows = [], [], []
    for kk, r in records:
        if r.fold == 0:
            coefs.extend(_coef_rows(0, r.lam_index, kk, r.cell))
        report.append(_report_row(r.fold, r.lam_index, kk, r.cell))
        if r.fold > 0:
            cvrows.append([r.fold, r.lam_index, kk, _num(r.lam), _num(r.kappa), _num(r.metric)])
    lam_sel, kappa_sel = select_hyperparams([r for _, r in records])
    writer.write("coefficients.csv", COEF_COLUMNS, coefs)
    writer.write("path_report.csv", REPORT_COLUMNS, report)
    writer.write(
        "cv_report.csv",
        ["fold", "lambda_index", "kappa_index", "lambda", "kappa", "metric"],
        cvrows,
        trailer=[f"# selected lambda={_num(lam_sel)} kappa={_num(kappa_sel)}"],
    )
    return 0


def _configure_logging():
    level = os.environ.get("SPP_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return run(args)
    except ConfigError as exc:
        print(f"spp: configuration error: {exc}", file=sys.stderr)
        return 2
    except (DatasetError, ConvergenceError, ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"spp: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
