"""Command-line front end: ``mixdisc {select, classify, tune, simulate}``.

Errors print one line ``mixdisc: error[<code>]: <message>`` on stderr and exit
with 2 (usage), 3 (data), 4 (numerical) or 5 (I/O).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .classifier import capacity_report, fit_classifier, predict
from .data import load_csv
from .errors import MixdiscError, ParameterError
from .estimators import estimate
from .selection import PENALTIES, SelectionConfig, select_variables
from .simulation import SCENARIOS, load_scenario, named_scenario, resolve_workers
from .tuning import DEFAULT_ALPHAS, DEFAULT_BETAS, TuningGrid, loocv_alpha_beta, tune_lambda

EXIT_USAGE, EXIT_IO = 2, 5


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail("usage", f"{self.prog}: {message}", EXIT_USAGE)


def _fail(code: str, message: str, status: int):
    print(f"mixdisc: error[{code}]: {' '.join(str(message).split())}", file=sys.stderr)
    raise SystemExit(status)


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise ParameterError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise ParameterError(f"expected a comma-separated list of integers, got {text!r}") from None


def _add_data_flags(ap, *names):
    for name in names:
        ap.add_argument(f"--{name}", required=True, type=Path, help=f"{name} CSV with columns x1..xp, y1..yd and the group label")
    ap.add_argument("--p", type=int, required=True, help="number of continuous variables x1..xp")
    ap.add_argument("--d", type=int, required=True, help="number of binary variables y1..yd (M = 2^d cells)")
    ap.add_argument("--q", type=int, required=True, help="number of groups q; labels must lie in 1..q")
    ap.add_argument("--group-column", default="z", help="name of the group label column (default: z)")


def _add_selection_flags(ap):
    ap.add_argument("--alpha", type=float, default=0.25, help="ordering penalty exponent: f_n = n^-alpha / h(i), 0 < alpha < 1/2 (default 0.25)")
    ap.add_argument("--beta", type=float, default=0.5, help="dimension penalty exponent: g_n = n^-beta * h(i), 0 < beta < 1 (default 0.5)")
    ap.add_argument("--penalty", default="h7", choices=list(PENALTIES), help="penalty family h used in f_n and g_n (default h7 = ln(x+1)^0.1)")
    ap.add_argument("--estimator", default="empirical", choices=("empirical", "smoothed"), help="cell estimates: raw empirical or kernel-smoothed across cells")
    ap.add_argument("--lambda", dest="lam", type=float, default=None, help="smoothing parameter lambda in [0, 1); cell weights lambda^(Hamming distance)")


def _add_run_flags(ap, seed_required=True):
    ap.add_argument("--seed", type=int, required=seed_required, help="master random seed (mandatory)")
    ap.add_argument("--threads", type=int, default=None, help="maximum worker processes (default: $MIXDISC_THREADS or CPU count)")


def _config(args) -> SelectionConfig:
    lam = args.lam
    if args.estimator == "smoothed" and lam is None:
        raise ParameterError("--estimator smoothed needs --lambda")
    if args.estimator == "empirical" and lam not in (None, 0.0):
        raise ParameterError("--lambda needs --estimator smoothed")
    return SelectionConfig(args.alpha, args.beta, args.penalty, args.estimator, lam or 0.0)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="mixdisc", description="Variable selection and classification for mixed continuous/binary data.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress and count tables to stderr")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("select", help="estimate the adequate variable set I1 = {sigma(1..s)}")
    _add_data_flags(s, "input")
    _add_selection_flags(s)
    s.add_argument("--output", type=Path, help="write the selection report (sigma, s, phi, psi, xi values) as JSON")
    s.add_argument("--dump-estimates", type=Path, help="write the cell estimates p_m, p_l_given_m, mu_m, mu_lm, V_m as JSON")

    c = sub.add_parser("classify", help="fit the location-model rule on --train and score --test")
    _add_data_flags(c, "train", "test")
    _add_selection_flags(c)
    c.add_argument("--variables", help="comma-separated 1-based variables K; default: run selection on the training set")
    c.add_argument("--alpha-cost", type=float, default=1.0, help="cost/prior constant in the two-group threshold log(p_m2/p_m1) + log(alpha_cost)")
    c.add_argument("--output", type=Path, help="write per-row predictions as CSV (default: stdout)")

    t = sub.add_parser("tune", help="leave-one-out choice of (alpha, beta) and optionally lambda")
    _add_data_flags(t, "input")
    _add_selection_flags(t)
    t.add_argument("--grid-alpha", default=",".join(map(str, DEFAULT_ALPHAS)), help="alpha grid (comma-separated, each in (0, 1/2))")
    t.add_argument("--grid-beta", default=",".join(map(str, DEFAULT_BETAS)), help="beta grid (comma-separated, each in (0, 1))")
    t.add_argument("--grid-lambda", help="lambda grid for the smoothed estimator; lambda is tuned first at --alpha/--beta")
    t.add_argument("--output", type=Path, help="write the CV table alpha,beta,cv,failures (default: stdout)")
    _add_run_flags(t)

    m = sub.add_parser("simulate", help="run a Monte Carlo scenario and write its result table")
    src = m.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", help=f"named scenario: {', '.join(SCENARIOS)}")
    src.add_argument("--scenario-file", type=Path, help="key = value scenario file")
    m.add_argument("--reps", type=int, help="number of replications (default 1000, or the file's value)")
    m.add_argument("--n", help="comma-separated total training sizes n (split equally over the q groups)")
    m.add_argument("--output", type=Path, help="write the result CSV (default: stdout)")
    m.add_argument("--summary", type=Path, help="write a key: value run summary (default: stderr)")
    _add_run_flags(m)
    return ap


def _select(args) -> int:
    ds = load_csv(args.input, args.p, args.d, args.q, args.group_column)
    cfg = _config(args)
    if args.dump_estimates:
        args.dump_estimates.write_text(json.dumps(estimate(ds, cfg.smoothing).to_dict(), indent=2) + "\n")
    res = select_variables(ds, cfg)
    if args.output:
        args.output.write_text(res.to_json() + "\n")
    print("selected: " + " ".join(map(str, res.selected)))
    return 0


def _classify(args) -> int:
    train = load_csv(args.train, args.p, args.d, args.q, args.group_column)
    test = load_csv(args.test, args.p, args.d, args.q, args.group_column)
    cfg = _config(args)
    if args.variables:
        K = _ints(args.variables)
        if not K or min(K) < 1 or max(K) > args.p:
            raise ParameterError(f"--variables must lie in 1..{args.p}")
    else:
        K = select_variables(train, cfg).selected
    model = fit_classifier(train, K, cfg.smoothing, args.alpha_cost)
    pred = predict(model, test.X, test.Y)
    lines = ["row,z,predicted"] + [f"{i},{z},{g}" for i, (z, g) in enumerate(zip(test.z, pred), start=1)]
    _emit("\n".join(lines) + "\n", args.output)
    cc, undefined = capacity_report(model, test)
    print(f"variables: {' '.join(map(str, K))}  cc: {cc:.5f}  undefined: {undefined}  n_test: {test.n}")
    return 0


def _tune(args) -> int:
    ds = load_csv(args.input, args.p, args.d, args.q, args.group_column)
    resolve_workers(args.threads)
    cfg = _config(args)
    lam_line = ""
    if args.grid_lambda:
        if cfg.estimator != "smoothed":
            cfg = replace(cfg, estimator="smoothed", lam=0.0)
        lam, table = tune_lambda(ds, _floats(args.grid_lambda), cfg)
        cfg = replace(cfg, lam=lam)
        lam_line = f"  lambda: {lam:g}  lambda_cv: " + " ".join(f"{k:g}={v[0]:.5f}" for k, v in table.items())
    grid = TuningGrid(_floats(args.grid_alpha), _floats(args.grid_beta))
    rep = loocv_alpha_beta(ds, grid, cfg)
    _emit(rep.to_csv(), args.output)
    a, b = rep.best
    print(f"best alpha: {a:g}  beta: {b:g}  cv: {rep.cv_table[rep.best]:.5f}{lam_line}")
    return 0


def _simulate(args) -> int:
    if args.reps is not None and args.reps < 1:
        raise ParameterError("--reps must be >= 1")
    if args.scenario:
        if args.scenario not in SCENARIOS:
            raise ParameterError(f"unknown scenario {args.scenario!r}; valid names: {', '.join(SCENARIOS)}")
        sc = named_scenario(args.scenario, args.reps or 1000, args.seed)
    else:
        sc = load_scenario(args.scenario_file, args.reps, args.seed)
    if args.n:
        q = sc.spec.q
        sizes = _ints(args.n)
        if any(v < q or v % q for v in sizes):
            raise ParameterError(f"every --n must be a positive multiple of q={q}")
        sc = replace(sc, sizes=tuple(v // q for v in sizes))
    workers = resolve_workers(args.threads)
    table = sc.run(workers)
    _emit(table.to_csv(), args.output)
    summary = [
        f"scenario: {args.scenario or args.scenario_file}",
        f"kind: {sc.kind}",
        f"replications: {sc.spec.replications}",
        f"seed: {sc.spec.seed}",
        f"sizes: {' '.join(str(v * sc.spec.q) for v in sc.sizes)}",
    ]
    if sc.kind == "tuned-table" and len(table.rows) > 1:
        ordering = "decreasing" if table.decreasing_in_n else "not decreasing (reference results decrease with n)"
        summary.append(f"cc_ordering_in_n: {ordering}")
    text = "\n".join(summary) + "\n"
    if args.summary:
        args.summary.write_text(text)
    else:
        sys.stderr.write(text)
    return 0


def _emit(text: str, path: Path | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text)


COMMANDS = {"select": _select, "classify": _classify, "tune": _tune, "simulate": _simulate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except MixdiscError as exc:
        _fail(exc.code, exc, exc.exit_code)
    except OSError as exc:
        _fail("io", exc, EXIT_IO)


if __name__ == "__main__":
    sys.exit(main())
