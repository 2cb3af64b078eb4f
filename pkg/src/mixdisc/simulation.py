"""Monte Carlo harness: mixed-data generator, replicated train/test evaluation, result tables.

Random streams are keyed by ``(seed; n_group, replication, role, group, component)``
through :class:`numpy.random.SeedSequence`, so a replication's data depend
only on those keys and never on scheduling or worker count.
"""

from __future__ import annotations

import concurrent.futures
import configparser
import functools
import io
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .classifier import capacity_report, fit_parameters
from .criterion import subset_mask
from .data import Dataset, cell_patterns
from .errors import DataValidationError, MixdiscError, ParameterError
from .estimators import estimate
from .selection import PENALTIES, CriterionCache, SelectionConfig, select_from_estimates
from .tuning import DEFAULT_ALPHAS, DEFAULT_BETAS, DEFAULT_LAMBDAS, LeaveOneOut, TuningGrid, loocv_alpha_beta, tune_lambda

TRAIN, TEST = 0, 1
_X, _U = 0, 1


def exchangeable_covariance(p: int = 5) -> np.ndarray:
    """``(I + J) / 2``: unit variances, all correlations 1/2."""
    return 0.5 * (np.eye(p) + np.ones((p, p)))


REFERENCE_MEANS = np.array([[0.0, 0.0, 0.0, 0.0, 0.0], [0.25, 0.0, 0.5, 0.0, 0.75]])


def cholesky_factor(cov) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1] or not np.allclose(cov, cov.T):
        raise ParameterError("covariance must be a symmetric square matrix")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ParameterError("covariance is not positive definite") from None


def sample_mvn(mean, cov_factor, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """``mean + L z`` with ``z`` standard normal; ``size`` rows when given."""
    mean = np.asarray(mean, dtype=float)
    L = np.asarray(cov_factor, dtype=float)
    if size is None:
        return mean + L @ rng.standard_normal(mean.shape[0])
    return mean + rng.standard_normal((size, mean.shape[0])) @ L.T


@dataclass(frozen=True, eq=False)
class ExperimentSpec:
    """One simulation scenario at fixed training/test sizes.

    ``cell_distribution`` is ``None`` (uniform), an (M,) vector shared by all
    groups or a (q, M) array of group-specific cell probabilities.
    ``tune_alpha_beta`` picks (alpha, beta) per replication by leave-one-out
    over ``grid``; ``tune_lambda`` picks the smoothing parameter over
    ``grid.lambdas`` (smoothed estimator only).
    """

    group_means: np.ndarray = field(default_factory=lambda: REFERENCE_MEANS.copy())
    covariance: np.ndarray = field(default_factory=exchangeable_covariance)
    d: int = 3
    n_train: tuple[int, ...] = (50, 50)
    n_test: tuple[int, ...] | None = None
    replications: int = 1000
    seed: int = 0
    config: SelectionConfig = SelectionConfig()
    cell_distribution: np.ndarray | None = None
    tune_alpha_beta: bool = False
    tune_lambda: bool = False
    grid: TuningGrid = TuningGrid()
    alpha_cost: float = 1.0

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.group_means, dtype=float))
        object.__setattr__(self, "group_means", means)
        object.__setattr__(self, "covariance", np.asarray(self.covariance, dtype=float))
        object.__setattr__(self, "_factor", cholesky_factor(self.covariance))
        q, p = means.shape
        if self.covariance.shape != (p, p):
            raise ParameterError("covariance shape does not match the group means")
        if self.d < 1:
            raise ParameterError("d must be >= 1")
        n_train = tuple(int(v) for v in self.n_train)
        n_test = n_train if self.n_test is None else tuple(int(v) for v in self.n_test)
        if len(n_train) != q or len(n_test) != q or min(n_train + n_test) < 1:
            raise ParameterError("one positive training and test size per group is required")
        object.__setattr__(self, "n_train", n_train)
        object.__setattr__(self, "n_test", n_test)
        if self.replications < 1:
            raise ParameterError("replications must be >= 1")
        if self.cell_distribution is not None:
            cd = np.asarray(self.cell_distribution, dtype=float)
            cd = np.broadcast_to(cd, (q, 2**self.d)).copy()
            if (cd < 0).any() or not np.allclose(cd.sum(axis=1), 1.0):
                raise ParameterError("cell probabilities must be non-negative and sum to 1")
            object.__setattr__(self, "cell_distribution", cd)

    @property
    def q(self) -> int:
        return self.group_means.shape[0]

    @property
    def p(self) -> int:
        return self.group_means.shape[1]

    @property
    def M(self) -> int:
        return 2**self.d

    def with_size(self, n_per_group: int) -> "ExperimentSpec":
        return replace(self, n_train=(n_per_group,) * self.q, n_test=(n_per_group,) * self.q)


def _stream(spec: ExperimentSpec, n_group: int, rep: int, role: int, group: int, component: int):
    ss = np.random.SeedSequence(spec.seed, spawn_key=(n_group, rep, role, group, component))
    return np.random.default_rng(ss)


def _draw(spec: ExperimentSpec, rep: int, role: int, sizes) -> Dataset:
    pat = cell_patterns(spec.d)
    X, Y, z = [], [], []
    for l, n_l in enumerate(sizes):
        X.append(sample_mvn(spec.group_means[l], spec._factor, _stream(spec, n_l, rep, role, l, _X), n_l))
        rng_u = _stream(spec, n_l, rep, role, l, _U)
        if spec.cell_distribution is None:
            U = rng_u.integers(0, spec.M, n_l)
        else:
            U = rng_u.choice(spec.M, size=n_l, p=spec.cell_distribution[l])
        Y.append(pat[U])
        z.append(np.full(n_l, l + 1))
    return Dataset(np.vstack(X), np.vstack(Y), np.concatenate(z), q=spec.q)


def generate_dataset(spec: ExperimentSpec, replication_index: int) -> tuple[Dataset, Dataset]:
    """Independent training and test samples for one replication."""
    return _draw(spec, replication_index, TRAIN, spec.n_train), _draw(spec, replication_index, TEST, spec.n_test)


class Workspace:
    """Selections and test capacities for one (train, test) pair and smoothing parameter, memoised."""

    def __init__(self, train: Dataset, test: Dataset, lam: float = 0.0, alpha_cost: float = 1.0):
        self.train, self.test, self.lam = train, test, lam
        self.xi = CriterionCache(estimate(train, lam))
        self.params = fit_parameters(train, lam, alpha_cost)
        self._cc: dict[int, tuple[float, int]] = {}

    def select(self, cfg: SelectionConfig):
        return select_from_estimates(self.xi.est, self.train.n, cfg, self.xi)

    def capacity(self, K) -> tuple[float, int]:
        key = subset_mask(K)
        if key not in self._cc:
            self._cc[key] = capacity_report(self.params.restrict(K), self.test)
        return self._cc[key]


@dataclass
class ReplicationOutcome:
    index: int
    selected: tuple[int, ...] | None
    cc: float | None
    undefined: int = 0
    error: str | None = None
    alpha: float | None = None
    beta: float | None = None
    lam: float | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def _effective_config(spec: ExperimentSpec, train: Dataset) -> SelectionConfig:
    cfg = spec.config
    if spec.tune_lambda and cfg.estimator == "smoothed":
        lam, _ = tune_lambda(train, spec.grid.lambdas, cfg)
        cfg = replace(cfg, lam=lam)
    if spec.tune_alpha_beta:
        report = loocv_alpha_beta(train, spec.grid, cfg)
        cfg = replace(cfg, alpha=report.best[0], beta=report.best[1])
    return cfg


def run_replication(spec: ExperimentSpec, index: int) -> ReplicationOutcome:
    train, test = generate_dataset(spec, index)
    try:
        cfg = _effective_config(spec, train)
        ws = Workspace(train, test, cfg.smoothing, spec.alpha_cost)
        sel = ws.select(cfg)
        cc, undefined = ws.capacity(sel.selected)
    except MixdiscError as exc:
        return ReplicationOutcome(index, None, None, error=f"{type(exc).__name__}: {exc}")
    return ReplicationOutcome(index, sel.selected, cc, undefined, None, cfg.alpha, cfg.beta, cfg.smoothing)


def _map(fn, items, workers: int | None):
    items = list(items)
    workers = resolve_workers(workers)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        env = os.environ.get("MIXDISC_THREADS")
        workers = int(env) if env else (os.cpu_count() or 1)
    if workers < 1:
        raise ParameterError("worker count must be >= 1")
    return workers


def _mean_se(values) -> tuple[float, float]:
    v = np.asarray([x for x in values if x is not None], dtype=float)
    if v.size == 0:
        return float("nan"), float("nan")
    se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else float("nan")
    return float(v.mean()), se


@dataclass
class ExperimentReport:
    spec: ExperimentSpec
    outcomes: list[ReplicationOutcome]

    @property
    def mean_cc(self) -> float:
        return _mean_se(o.cc for o in self.outcomes)[0]

    @property
    def se_cc(self) -> float:
        return _mean_se(o.cc for o in self.outcomes)[1]

    @property
    def failures(self) -> int:
        return sum(o.failed for o in self.outcomes)

    def selection_frequency(self) -> np.ndarray:
        """Share of successful replications that selected each variable."""
        ok = [o for o in self.outcomes if not o.failed]
        freq = np.zeros(self.spec.p)
        for o in ok:
            freq[np.array(o.selected) - 1] += 1
        return freq / max(1, len(ok))


def run_experiment(spec: ExperimentSpec, workers: int | None = 1) -> ExperimentReport:
    """Generate, select on train, fit on train, score on test, for every replication.

    Failed replications are recorded and excluded from the mean capacity.
    """
    outcomes = _map(functools.partial(run_replication, spec), range(spec.replications), workers)
    return ExperimentReport(spec, outcomes)


# --- tables ---------------------------------------------------------------------------


def _penalty_rows_one(spec: ExperimentSpec, penalties, estimators, index: int):
    """Capacity per (estimator, penalty) for one replication: {(est, pen): (cc, lam) | None}."""
    train, test = generate_dataset(spec, index)
    out = {}
    spaces: dict[float, Workspace | None] = {}

    def space(lam):
        if lam not in spaces:
            try:
                spaces[lam] = Workspace(train, test, lam, spec.alpha_cost)
            except MixdiscError:
                spaces[lam] = None
        return spaces[lam]

    engines = {}
    if "smoothed" in estimators:
        for lam in spec.grid.lambdas:
            try:
                engines[lam] = LeaveOneOut(train, lam, spec.alpha_cost)
            except MixdiscError:
                engines[lam] = None
    for pen in penalties:
        for kind in estimators:
            cfg = replace(spec.config, penalty=pen, estimator="empirical", lam=0.0)
            lam = 0.0
            try:
                if kind == "smoothed":
                    usable = {k: v for k, v in engines.items() if v is not None}
                    if not usable:
                        raise DataValidationError("no usable smoothing parameter")
                    lam, _ = tune_lambda(train, tuple(usable), cfg, engines=usable)
                ws = space(lam)
                if ws is None:
                    raise DataValidationError("fit failed")
                cfg = replace(cfg, estimator="smoothed" if lam else "empirical", lam=lam)
                sel = ws.select(cfg)
                out[(kind, pen)] = (ws.capacity(sel.selected)[0], lam, len(sel.selected))
            except MixdiscError:
                out[(kind, pen)] = None
    return out


@dataclass
class PenaltyTable:
    """Mean capacity per (sample size, penalty family, estimator)."""

    rows: list[dict]
    estimators: tuple[str, ...]

    def to_csv(self) -> str:
        cols = ["n", "n_per_group", "penalty"]
        for e in self.estimators:
            cols += [f"cc_{e}", f"se_{e}", f"failures_{e}", f"mean_size_{e}"]
        if "smoothed" in self.estimators:
            cols.append("mean_lambda")
        return _csv(cols, self.rows)


def penalty_table(
    spec: ExperimentSpec,
    sizes=(50, 150, 250),
    penalties=tuple(PENALTIES),
    estimators=("empirical", "smoothed"),
    workers: int | None = 1,
) -> PenaltyTable:
    """Capacity for every penalty family at fixed alpha and beta; the smoothed column tunes lambda per replication."""
    rows = []
    for n_g in sizes:
        s = spec.with_size(n_g)
        reps = _map(functools.partial(_penalty_rows_one, s, tuple(penalties), tuple(estimators)), range(s.replications), workers)
        for pen in penalties:
            row = {"n": n_g * s.q, "n_per_group": n_g, "penalty": pen}
            for e in estimators:
                vals = [r[(e, pen)] for r in reps]
                good = [v for v in vals if v is not None]
                mean, se = _mean_se(v[0] for v in good)
                row.update(
                    {
                        f"cc_{e}": mean,
                        f"se_{e}": se,
                        f"failures_{e}": len(vals) - len(good),
                        f"mean_size_{e}": float(np.mean([v[2] for v in good])) if good else float("nan"),
                    }
                )
                if e == "smoothed":
                    row["mean_lambda"] = float(np.mean([v[1] for v in good])) if good else float("nan")
            rows.append(row)
    return PenaltyTable(rows, tuple(estimators))


@dataclass
class TunedTable:
    rows: list[dict]

    @property
    def decreasing_in_n(self) -> bool:
        cc = [r["cc"] for r in sorted(self.rows, key=lambda r: r["n"])]
        return all(a > b for a, b in zip(cc, cc[1:]))

    def to_csv(self) -> str:
        cols = ["n", "n_per_group", "cc", "se", "failures", "mean_alpha", "mean_beta"]
        cols += sorted((k for k in self.rows[0] if k.startswith("freq_x")), key=lambda k: int(k[6:]))
        return _csv(cols, self.rows)


def tuned_table(spec: ExperimentSpec, sizes=(50, 100, 150, 200, 250), workers: int | None = 1) -> TunedTable:
    """Capacity with (alpha, beta) chosen per replication by leave-one-out."""
    rows = []
    for n_g in sizes:
        rep = run_experiment(replace(spec.with_size(n_g), tune_alpha_beta=True), workers)
        ok = [o for o in rep.outcomes if not o.failed]
        row = {
            "n": n_g * spec.q,
            "n_per_group": n_g,
            "cc": rep.mean_cc,
            "se": rep.se_cc,
            "failures": rep.failures,
            "mean_alpha": float(np.mean([o.alpha for o in ok])) if ok else float("nan"),
            "mean_beta": float(np.mean([o.beta for o in ok])) if ok else float("nan"),
        }
        for j, f in enumerate(rep.selection_frequency(), start=1):
            row[f"freq_x{j}"] = float(f)
        rows.append(row)
    return TunedTable(rows)


def _sweep_one(spec: ExperimentSpec, alphas, betas, index: int):
    train, test = generate_dataset(spec, index)
    try:
        ws = Workspace(train, test, spec.config.smoothing, spec.alpha_cost)
    except MixdiscError:
        return None
    out = {}
    for a in alphas:
        for b in betas:
            try:
                sel = ws.select(replace(spec.config, alpha=a, beta=b))
                out[(a, b)] = ws.capacity(sel.selected)[0]
            except MixdiscError:
                out[(a, b)] = None
    return out


@dataclass
class CurveTable:
    rows: list[dict]

    def to_csv(self) -> str:
        return _csv(["n", "n_per_group", "alpha", "beta", "cc", "se", "failures"], self.rows)


def sweep_beta_curves(spec: ExperimentSpec, alphas, betas, sizes=None, workers: int | None = 1) -> CurveTable:
    """Mean capacity on an (alpha, beta) grid with the spec's penalty family; one row per grid point."""
    sizes = sizes or (spec.n_train[0],)
    rows = []
    for n_g in sizes:
        s = spec.with_size(n_g)
        reps = _map(functools.partial(_sweep_one, s, tuple(alphas), tuple(betas)), range(s.replications), workers)
        for a in alphas:
            for b in betas:
                vals = [None if r is None else r[(a, b)] for r in reps]
                mean, se = _mean_se(vals)
                failures = sum(v is None for v in vals)
                rows.append({"n": n_g * s.q, "n_per_group": n_g, "alpha": a, "beta": b, "cc": mean, "se": se, "failures": failures})
    return CurveTable(rows)


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if v != v else f"{v:.5f}"
    return str(v)


def _csv(cols, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(cols) + "\n")
    for r in rows:
        buf.write(",".join(_fmt(r[c]) for c in cols) + "\n")
    return buf.getvalue()


# --- scenarios ------------------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    """A named study: ``kind`` is ``penalty-table``, ``tuned-table`` or ``beta-curves``."""

    kind: str
    spec: ExperimentSpec
    sizes: tuple[int, ...]
    penalties: tuple[str, ...] = tuple(PENALTIES)
    estimators: tuple[str, ...] = ("empirical", "smoothed")
    alphas: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.45)
    betas: tuple[float, ...] = DEFAULT_BETAS

    def run(self, workers: int | None = 1):
        if self.kind == "penalty-table":
            return penalty_table(self.spec, self.sizes, self.penalties, self.estimators, workers)
        if self.kind == "tuned-table":
            return tuned_table(self.spec, self.sizes, workers)
        if self.kind == "beta-curves":
            return sweep_beta_curves(self.spec, self.alphas, self.betas, self.sizes, workers)
        raise ParameterError(f"unknown scenario kind {self.kind!r}")


def named_scenario(name: str, replications: int = 1000, seed: int = 0) -> Scenario:
    base = ExperimentSpec(replications=replications, seed=seed, grid=TuningGrid(lambdas=DEFAULT_LAMBDAS))
    if name == "paper-table1":
        return Scenario("penalty-table", base, (50, 150, 250))
    if name == "paper-table2":
        spec = replace(base, grid=TuningGrid(DEFAULT_ALPHAS, DEFAULT_BETAS, (0.0,)))
        return Scenario("tuned-table", spec, (50, 100, 150, 200, 250))
    if name == "paper-fig1":
        return Scenario("beta-curves", base, (50, 150, 250))
    raise ParameterError(f"unknown scenario {name!r}; valid names: {', '.join(SCENARIOS)}")


SCENARIOS = ("paper-table1", "paper-table2", "paper-fig1")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.replace(";", ",").split(",") if t.strip())


def _matrix(text: str) -> np.ndarray:
    return np.array([[float(t) for t in row.split(",")] for row in text.split(";") if row.strip()])


def load_scenario(path, replications: int | None = None, seed: int | None = None) -> Scenario:
    """Read a ``key = value`` scenario file.

    Keys: ``kind``, ``group_means`` (rows separated by ``;``), ``covariance``
    (rows separated by ``;``, or ``exchangeable``), ``d``, ``sizes`` (per-group
    sizes), ``replications``, ``seed``, ``alpha``, ``beta``, ``penalty``,
    ``estimator``, ``lambda``, ``penalties``, ``estimators``, ``alphas``,
    ``betas``, ``lambdas``, ``cell_distribution`` (rows separated by ``;``),
    ``alpha_cost``.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    text = Path(path).read_text(encoding="utf-8")
    try:
        parser.read_string("[scenario]\n" + text)
    except configparser.Error as exc:
        raise ParameterError(f"{path}: {exc}") from None
    kv = dict(parser["scenario"])
    try:
        return _scenario_from_keys(kv, replications, seed)
    except (ValueError, KeyError) as exc:
        if isinstance(exc, MixdiscError):
            raise
        raise ParameterError(f"{path}: {exc}") from None


def _scenario_from_keys(kv: dict, replications, seed) -> Scenario:
    known = {
        "kind", "group_means", "covariance", "d", "sizes", "replications", "seed", "alpha", "beta",
        "penalty", "estimator", "lambda", "penalties", "estimators", "alphas", "betas", "lambdas",
        "cell_distribution", "alpha_cost",
    }
    unknown = set(kv) - known
    if unknown:
        raise ParameterError(f"unknown scenario key(s): {', '.join(sorted(unknown))}")
    means = _matrix(kv["group_means"]) if "group_means" in kv else REFERENCE_MEANS
    cov = kv.get("covariance", "exchangeable")
    cov = exchangeable_covariance(means.shape[1]) if cov.strip() == "exchangeable" else _matrix(cov)
    lam = float(kv.get("lambda", 0.0))
    estimator = kv.get("estimator", "smoothed" if lam else "empirical")
    cfg = SelectionConfig(
        float(kv.get("alpha", 0.25)), float(kv.get("beta", 0.5)), kv.get("penalty", "h7"), estimator, lam
    )
    lambdas = _floats(kv["lambdas"]) if "lambdas" in kv else DEFAULT_LAMBDAS
    grid = TuningGrid(
        _floats(kv["alphas"]) if "alphas" in kv else DEFAULT_ALPHAS,
        _floats(kv["betas"]) if "betas" in kv else DEFAULT_BETAS,
        lambdas,
    )
    cd = _matrix(kv["cell_distribution"]) if "cell_distribution" in kv else None
    sizes = tuple(int(v) for v in _floats(kv.get("sizes", "50")))
    spec = ExperimentSpec(
        group_means=means,
        covariance=cov,
        d=int(kv.get("d", 3)),
        n_train=(sizes[0],) * means.shape[0],
        replications=int(replications or kv.get("replications", 1000)),
        seed=int(seed if seed is not None else kv.get("seed", 0)),
        config=cfg,
        cell_distribution=cd,
        grid=grid,
        alpha_cost=float(kv.get("alpha_cost", 1.0)),
    )
    kind = kv.get("kind", "penalty-table")
    extra = {}
    if "penalties" in kv:
        extra["penalties"] = tuple(t.strip() for t in kv["penalties"].split(",") if t.strip())
    if "estimators" in kv:
        extra["estimators"] = tuple(t.strip() for t in kv["estimators"].split(",") if t.strip())
    if "alphas" in kv:
        extra["alphas"] = grid.alphas
    if "betas" in kv:
        extra["betas"] = grid.betas
    return Scenario(kind, spec, sizes, **extra)
