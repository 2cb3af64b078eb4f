"""Leave-one-out cross-validation of the penalty exponents and of the smoothing parameter.

For a fold ``k`` the selection runs on the sample without observation ``k``,
the allocation rule is fitted on the same reduced sample restricted to the
selected variables, and observation ``k`` is classified. ``CV(alpha, beta)``
is the proportion of correctly allocated held-out observations; folds whose
selection or fit fails count as errors.

:class:`LeaveOneOut` evaluates all ``n`` folds at once. Every fold's cell
estimates come from :func:`~mixdisc.estimators.cell_moments` with the held-out
observation's weight set to zero, so no quantity of fold ``k`` ever touches
``X_k``. Criterion values and held-out allocations are cached per variable
subset, which makes a whole ``(alpha, beta)`` grid cost little more than
one point. :func:`loocv_reference` is the literal fold-by-fold loop.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .classifier import fit_classifier, classify
from .criterion import COND_LIMIT, _block_condition, criterion_batch, mask_subset, subset_mask
from .data import Dataset
from .errors import DataValidationError, MixdiscError, ParameterError
from .estimators import CellEstimates, cell_moments, check_lambda, observation_weights
from .selection import PENALTIES, SelectionConfig, check_alpha, check_beta, get_penalty, select_variables

DEFAULT_ALPHAS = tuple(round(0.05 * k, 2) for k in range(1, 10))
DEFAULT_BETAS = tuple(round(0.05 * k, 2) for k in range(1, 20))
DEFAULT_LAMBDAS = tuple(round(0.1 * k, 1) for k in range(10))

_BLOCK = 4_000_000  # floats per intermediate array when batching folds


@dataclass(frozen=True)
class TuningGrid:
    alphas: tuple[float, ...] = DEFAULT_ALPHAS
    betas: tuple[float, ...] = DEFAULT_BETAS
    lambdas: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        if not (self.alphas and self.betas and self.lambdas):
            raise ParameterError("tuning grid axes must be non-empty")
        object.__setattr__(self, "alphas", tuple(sorted(set(check_alpha(a) for a in self.alphas))))
        object.__setattr__(self, "betas", tuple(sorted(set(check_beta(b) for b in self.betas))))
        object.__setattr__(self, "lambdas", tuple(sorted(set(check_lambda(v) for v in self.lambdas))))


@dataclass
class CvReport:
    cv_table: dict  # (alpha, beta) -> CV
    failures: dict  # (alpha, beta) -> number of failed folds
    best: tuple[float, float]
    n: int
    lambda_best: float | None = None
    lambda_table: dict = field(default_factory=dict)

    def rows(self):
        for (a, b), cv in sorted(self.cv_table.items()):
            yield a, b, cv, self.failures[(a, b)]

    def to_csv(self) -> str:
        lines = ["alpha,beta,cv,failures"]
        lines += [f"{a:g},{b:g},{cv:.5f},{f}" for a, b, cv, f in self.rows()]
        return "\n".join(lines) + "\n"


def _check_loo_size(ds: Dataset) -> None:
    n_l = ds.counts().sum(axis=1)
    if ds.n < 10:
        raise DataValidationError(f"leave-one-out tuning needs n >= 10, got n={ds.n}")
    if (n_l < 3).any():
        raise DataValidationError("every group needs >= 3 observations so that folds keep >= 2")


def _loo_stratum_scatter(X: np.ndarray, members: np.ndarray):
    """For each member k of a stratum: its mean and scatter matrix without ``X_k``."""
    Xs = X[members]
    N = Xs.shape[0]
    keep = 1.0 - np.eye(N)
    if N == 1:
        return np.zeros((1, X.shape[1])), np.zeros((1, X.shape[1], X.shape[1]))
    means = keep @ Xs / (N - 1)
    dev = Xs[None, :, :] - means[:, None, :]  # (N, N, p)
    scatter = np.swapaxes(dev * keep[..., None], -1, -2) @ dev
    return means, scatter


class LeaveOneOut:
    """All leave-one-out folds of ``ds`` for one smoothing parameter.

    Attributes
    ----------
    est : batched :class:`CellEstimates`, leading axis = fold.
    """

    def __init__(self, ds: Dataset, lam: float = 0.0, alpha_cost: float = 1.0):
        _check_loo_size(ds)
        self.ds = ds
        self.lam = check_lambda(lam)
        self.alpha_cost = float(alpha_cost)
        self.n = ds.n
        self.est = self._fold_estimates()
        self._fit_fold_classifiers()
        self._xi: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._correct: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    # --- fold estimates -------------------------------------------------

    def _fold_estimates(self) -> CellEstimates:
        ds = self.ds
        A = observation_weights(ds, self.lam)
        per_fold = ds.M * ds.n * max(ds.p, ds.q)
        size = max(1, _BLOCK // per_fold)
        parts = []
        for start in range(0, ds.n, size):
            ks = np.arange(start, min(ds.n, start + size))
            Ab = np.repeat(A[None], ks.size, axis=0)
            Ab[np.arange(ks.size), :, ks] = 0.0
            parts.append(cell_moments(ds.X, ds.z, ds.q, Ab))
        fields = ("p_m", "p_lm", "mu_m", "mu_lm", "V_m", "weight_m", "weight_lm")
        return CellEstimates(*(np.concatenate([getattr(e, f) for e in parts]) for f in fields), lam=self.lam)

    def _fit_fold_classifiers(self) -> None:
        ds, n, q, p = self.ds, self.n, self.ds.q, self.ds.p
        zi, ui = ds.z - 1, ds.U - 1
        counts = ds.counts()
        strata = zi * ds.M + ui
        # within-stratum scatter of every stratum, and the total over all *other* strata
        C = np.zeros((q * ds.M, p, p))
        means = np.zeros((q * ds.M, p))
        loo_mean = np.zeros((n, p))
        loo_scatter = np.zeros((n, p, p))
        for s in np.unique(strata):
            members = np.flatnonzero(strata == s)
            Xs = ds.X[members]
            means[s] = Xs.mean(axis=0)
            dev = Xs - means[s]
            C[s] = dev.T @ dev
            loo_mean[members], loo_scatter[members] = _loo_stratum_scatter(ds.X, members)
        others = np.array([C[np.arange(len(C)) != s].sum(axis=0) for s in range(len(C))])
        S = (others[strata] + loo_scatter) / (n - 1)
        self.sigma = 0.5 * (S + np.swapaxes(S, -1, -2))  # (n, p, p)

        n_l = np.repeat(counts.sum(axis=1)[None], n, axis=0)
        n_l[np.arange(n), zi] -= 1
        self.group_missing = (n_l == 0).any(axis=1)
        self.beta = n_l / (n - 1)

        if self.lam > 0:
            w = self.est.weight_lm  # (n, q, M)
            tot = w.sum(axis=-1)
            self.p_ml = w[np.arange(n), :, ui] / np.where(tot > 0, tot, 1.0)
            self.mu = self.est.mu_lm[np.arange(n), :, ui]  # (n, q, p)
        else:
            cnt = counts[:, ui].T.astype(float)  # (n, q): N_{l, U_k}
            cnt[np.arange(n), zi] -= 1
            self.p_ml = cnt / np.where(n_l > 0, n_l, 1)
            mu = means.reshape(q, ds.M, p)[:, ui].transpose(1, 0, 2).copy()  # (n, q, p)
            mu[np.arange(n), zi] = loo_mean
            self.mu = mu

    # --- cached per-subset quantities -------------------------------------

    def xi(self, mask: int):
        """``(values, failed)`` of the criterion on subset ``mask`` for every fold."""
        if mask not in self._xi:
            self._xi[mask] = criterion_batch(self.est, mask_subset(mask))
        return self._xi[mask]

    def correct(self, mask: int):
        """``(correct, failed)`` allocation of every held-out observation using variables ``mask``."""
        if mask in self._correct:
            return self._correct[mask]
        ds, n = self.ds, self.n
        idx = np.array(mask_subset(mask)) - 1
        S = self.sigma[:, idx[:, None], idx[None, :]]
        cond = _block_condition(S)
        singular = ~(cond <= COND_LIMIT)
        S = np.where(singular[:, None, None], np.eye(idx.size), S)
        mu = self.mu[..., idx]  # (n, q, k)
        x = ds.X[:, idx]
        pm = self.p_ml
        with np.errstate(divide="ignore"):
            if ds.q == 2:
                diff = mu[:, 0] - mu[:, 1]
                a = np.linalg.solve(S, diff[..., None])[..., 0]
                score = np.einsum("nk,nk->n", a, x - 0.5 * (mu[:, 0] + mu[:, 1]))
                undefined = (pm <= 0).any(axis=1)
                ratio = np.where(undefined, 1.0, pm[:, 1]) / np.where(undefined, 1.0, pm[:, 0])
                pred = np.where(score >= np.log(ratio) + np.log(self.alpha_cost), 1, 2)
            else:
                a = np.linalg.solve(S[:, None], mu[..., None])[..., 0]  # (n, q, k)
                delta = (
                    np.einsum("nlk,nk->nl", a, x)
                    - 0.5 * np.einsum("nlk,nlk->nl", a, mu)
                    + np.log(pm)
                    + np.log(np.where(self.beta > 0, self.beta, 1.0))
                )
                delta = np.where(pm > 0, delta, -np.inf)
                undefined = ~(pm > 0).any(axis=1)
                pred = np.argmax(delta, axis=1) + 1
        failed = singular | undefined | self.group_missing
        ok = (pred == ds.z) & ~failed
        self._correct[mask] = (ok, failed)
        return self._correct[mask]

    # --- selection over all folds -----------------------------------------

    def select(self, alpha: float, beta: float, penalty="h7"):
        """Selected subset mask of every fold, and a fold-failure mask."""
        return self.select_many(alpha, [beta], penalty)[0]

    def select_many(self, alpha: float, betas, penalty="h7"):
        """Like :meth:`select` for several ``beta`` sharing one ``alpha``."""
        fam = get_penalty(penalty)
        n, p = self.n, self.ds.p
        m = n - 1  # fold sample size
        full = (1 << p) - 1
        drop = [self.xi(full & ~(1 << i)) for i in range(p)]
        xi_drop = np.stack([v for v, _ in drop], axis=1)  # (n, p)
        failed = np.any([f for _, f in drop], axis=0)
        idx = np.arange(1, p + 1, dtype=float)
        phi = xi_drop + float(m) ** -check_alpha(alpha) / fam.h(idx)
        sigma = np.argsort(-phi, axis=1, kind="stable")  # 0-based
        prefix = np.cumsum(1 << sigma, axis=1)  # (n, p) bit-masks of the nested sets
        nested = np.zeros((n, p))
        for key in np.unique(prefix):
            val, bad = self.xi(int(key))
            hit = prefix == key
            rows = hit.any(axis=1)
            nested[hit] = np.broadcast_to(val[:, None], (n, p))[hit]
            failed = failed | (bad & rows)
        h_sigma = fam.h(sigma + 1.0)
        out = []
        for beta in betas:
            psi = nested + float(m) ** -check_beta(beta) * h_sigma
            s_hat = np.argmin(psi, axis=1)
            out.append((prefix[np.arange(n), s_hat], failed))
        return out

    def outcomes(self, masks: np.ndarray, failed: np.ndarray):
        """Per-fold ``(correct, failed)`` given each fold's selected subset."""
        correct = np.zeros(self.n, dtype=bool)
        bad = failed.copy()
        for key in np.unique(masks):
            rows = masks == key
            ok, f = self.correct(int(key))
            correct[rows] = ok[rows]
            bad[rows] |= f[rows]
        correct &= ~failed
        return correct, bad

    def cv(self, alpha: float, beta: float, penalty="h7") -> tuple[int, int]:
        """Number of correctly allocated folds and number of failed folds."""
        correct, bad = self.outcomes(*self.select(alpha, beta, penalty))
        return int(correct.sum()), int(bad.sum())


def _best(table: dict):
    """Arg-max of a {key: count} table, ties to the smallest key."""
    best_key, best = None, -1
    for key in sorted(table):
        if table[key] > best:
            best_key, best = key, table[key]
    return best_key


def loocv_alpha_beta(
    ds: Dataset,
    grid: TuningGrid = TuningGrid(),
    cfg: SelectionConfig = SelectionConfig(),
    engine: LeaveOneOut | None = None,
) -> CvReport:
    """Leave-one-out ``CV(alpha, beta)`` over the grid; the best pair maximises CV.

    ``cfg`` supplies the penalty family and the smoothing parameter; its own
    alpha and beta are ignored.
    """
    engine = engine or LeaveOneOut(ds, cfg.smoothing)
    counts, failures = {}, {}
    for a in grid.alphas:
        for b, sel in zip(grid.betas, engine.select_many(a, grid.betas, cfg.penalty)):
            correct, bad = engine.outcomes(*sel)
            counts[(a, b)] = int(correct.sum())
            failures[(a, b)] = int(bad.sum())
    best = _best(counts)
    table = {k: v / ds.n for k, v in counts.items()}
    return CvReport(table, failures, best, ds.n)


def tune_lambda(ds: Dataset, lambdas=DEFAULT_LAMBDAS, cfg: SelectionConfig = SelectionConfig(), engines=None):
    """Smoothing parameter with the largest leave-one-out capacity at ``cfg``'s alpha and beta.

    Returns ``(lambda_best, {lambda: (cv, failures)})``; ties go to the smallest lambda.
    """
    lambdas = tuple(sorted(set(check_lambda(v) for v in lambdas)))
    if not lambdas:
        raise ParameterError("empty lambda grid")
    engines = engines or {}
    counts, table = {}, {}
    for lam in lambdas:
        eng = engines.get(lam) or LeaveOneOut(ds, lam)
        c, f = eng.cv(cfg.alpha, cfg.beta, cfg.penalty)
        counts[lam] = c
        table[lam] = (c / ds.n, f)
    return _best(counts), table


def loocv_reference(ds: Dataset, cfg: SelectionConfig, alpha_cost: float = 1.0) -> tuple[int, int]:
    """Fold-by-fold leave-one-out count of correct allocations (and failed folds)."""
    _check_loo_size(ds)
    correct = failed = 0
    for k in range(ds.n):
        train = ds.drop(k)
        try:
            sel = select_variables(train, cfg)
            model = fit_classifier(train, sel.selected, cfg.smoothing, alpha_cost)
            pred = classify(model, ds.X[k], ds.Y[k])
        except MixdiscError:
            failed += 1
            continue
        correct += int(pred == ds.z[k])
    return correct, failed
