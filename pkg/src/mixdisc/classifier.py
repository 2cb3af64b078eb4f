"""Location-model allocation rules restricted to a subset of continuous variables.

Two groups use the linear rule

    (mu_m1 - mu_m2)^T S^{-1} (x - (mu_m1 + mu_m2)/2) >= log(p_m2 / p_m1) + log(alpha)

(allocate to group 1 when it holds, boundary included); more groups use the
arg-max of ``mu_ml^T S^{-1} x - mu_ml^T S^{-1} mu_ml / 2 + log p_ml + log beta_l``.
``p_ml`` is P(U=m | Z=l), ``beta_l`` the group prior and ``S`` the pooled
within-(group, cell) covariance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.linalg

from .criterion import COND_LIMIT, _block_condition, as_subset
from .data import Dataset, encode_cell, encode_cells
from .errors import DataValidationError, ParameterError, SingularSubmatrix, UndefinedCell
from .estimators import check_lambda, estimate_empirical, estimate_smoothed, pooled_within_covariance


@dataclass(frozen=True, eq=False)
class ClassifierModel:
    K: tuple[int, ...]
    mu_ml: np.ndarray  # (q, M, |K|) group-cell means on K
    sigma_K: np.ndarray  # (|K|, |K|)
    p_ml: np.ndarray  # (M, q), P(U=m | Z=l); columns sum to 1
    beta_l: np.ndarray  # (q,)
    alpha_cost: float = 1.0
    lam: float = 0.0

    @property
    def q(self) -> int:
        return self.beta_l.shape[0]

    @property
    def M(self) -> int:
        return self.p_ml.shape[0]

    @property
    def precision(self) -> np.ndarray:
        c = scipy.linalg.cho_factor(self.sigma_K)
        return scipy.linalg.cho_solve(c, np.eye(len(self.K)))


@dataclass(frozen=True, eq=False)
class FittedParameters:
    """Rule parameters on all ``p`` variables; :meth:`restrict` yields a model on a subset."""

    mu_ml: np.ndarray  # (q, M, p)
    sigma: np.ndarray  # (p, p)
    p_ml: np.ndarray  # (M, q)
    beta_l: np.ndarray  # (q,)
    alpha_cost: float = 1.0
    lam: float = 0.0

    def restrict(self, K: Iterable[int]) -> ClassifierModel:
        K = as_subset(K, self.sigma.shape[0])
        idx = np.array(K) - 1
        S = self.sigma[np.ix_(idx, idx)]
        cond = float(_block_condition(S))
        if not cond <= COND_LIMIT:
            raise SingularSubmatrix(K, cond=cond)
        return ClassifierModel(K, self.mu_ml[..., idx], S, self.p_ml, self.beta_l, self.alpha_cost, self.lam)


def fit_parameters(ds: Dataset, lam: float = 0.0, alpha_cost: float = 1.0) -> FittedParameters:
    """Estimate the rule's parameters on every variable of ``ds``.

    With ``lam > 0`` the group-cell means and cell probabilities are the
    kernel-smoothed ones, so every cell receives positive probability; the
    common covariance is always the empirical pooled within-stratum one.
    """
    lam = check_lambda(lam)
    if alpha_cost <= 0:
        raise ParameterError("alpha_cost must be positive")
    counts = ds.counts()
    n_l = counts.sum(axis=1)
    if (n_l == 0).any():
        empty = [l + 1 for l in np.flatnonzero(n_l == 0)]
        raise DataValidationError(f"group(s) {empty} have no observations")
    emp = estimate_empirical(ds)
    S = pooled_within_covariance(ds, emp)
    if lam > 0:
        sm = estimate_smoothed(ds, lam)
        mu, w = sm.mu_lm, sm.weight_lm
    else:
        mu, w = emp.mu_lm, counts.astype(float)
    p_ml = (w / w.sum(axis=1, keepdims=True)).T
    return FittedParameters(mu, S, p_ml, n_l / ds.n, float(alpha_cost), lam)


def fit_classifier(ds: Dataset, K: Iterable[int], lam: float = 0.0, alpha_cost: float = 1.0) -> ClassifierModel:
    """Estimate the rule's parameters from ``ds`` on the variables ``K``."""
    return fit_parameters(ds, lam, alpha_cost).restrict(K)


def _restrict(model: ClassifierModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[..., np.array(model.K) - 1]


def classify_two_group(model: ClassifierModel, x, y) -> int:
    """Allocate one observation with the two-group linear rule."""
    if model.q != 2:
        raise ParameterError(f"the two-group rule needs q = 2, model has q = {model.q}")
    m = encode_cell(y)
    p1, p2 = model.p_ml[m - 1]
    if p1 <= 0 or p2 <= 0:
        raise UndefinedCell(m, [l + 1 for l, v in enumerate((p1, p2)) if v <= 0])
    mu1, mu2 = model.mu_ml[0, m - 1], model.mu_ml[1, m - 1]
    a = np.linalg.solve(model.sigma_K, mu1 - mu2)
    score = a @ (_restrict(model, x) - 0.5 * (mu1 + mu2))
    return 1 if score >= np.log(p2 / p1) + np.log(model.alpha_cost) else 2


def classify_multi_group(model: ClassifierModel, x, y) -> int:
    """Allocate one observation to the group with the largest discriminant score."""
    m = encode_cell(y)
    pm = model.p_ml[m - 1]
    if not (pm > 0).any():
        raise UndefinedCell(m, range(1, model.q + 1))
    xk = _restrict(model, x)
    best, best_score = 0, -np.inf
    for l in range(model.q):
        if pm[l] <= 0:
            continue
        mu = model.mu_ml[l, m - 1]
        a = np.linalg.solve(model.sigma_K, mu)
        score = a @ xk - 0.5 * a @ mu + np.log(pm[l]) + np.log(model.beta_l[l])
        if score > best_score:
            best, best_score = l + 1, score
    return best


def classify(model: ClassifierModel, x, y) -> int:
    return classify_two_group(model, x, y) if model.q == 2 else classify_multi_group(model, x, y)


def predict(model: ClassifierModel, X, Y, rule: str = "auto") -> np.ndarray:
    """Vectorised allocation; 0 marks observations whose cell is undefined.

    ``rule`` is ``"two-group"``, ``"multi-group"`` or ``"auto"`` (two-group when q = 2).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    m = encode_cells(np.atleast_2d(Y)) - 1
    if rule == "auto":
        rule = "two-group" if model.q == 2 else "multi-group"
    P = model.precision
    xk = _restrict(model, X)
    pm = model.p_ml[m]  # (n, q)
    mu = model.mu_ml[:, m]  # (q, n, k)
    if rule == "two-group":
        if model.q != 2:
            raise ParameterError("the two-group rule needs q = 2")
        diff = mu[0] - mu[1]
        mid = 0.5 * (mu[0] + mu[1])
        score = np.einsum("nk,kj,nj->n", diff, P, xk - mid)
        ok = (pm > 0).all(axis=1)
        with np.errstate(divide="ignore"):
            thr = np.log(np.where(ok, pm[:, 1], 1.0) / np.where(ok, pm[:, 0], 1.0)) + np.log(model.alpha_cost)
        return np.where(ok, np.where(score >= thr, 1, 2), 0)
    if rule != "multi-group":
        raise ParameterError(f"unknown rule {rule!r}")
    a = np.einsum("lnk,kj->lnj", mu, P)
    with np.errstate(divide="ignore"):
        delta = (
            np.einsum("lnj,nj->ln", a, xk)
            - 0.5 * np.einsum("lnj,lnj->ln", a, mu)
            + np.log(pm.T)
            + np.log(model.beta_l)[:, None]
        )
    delta = np.where(pm.T > 0, delta, -np.inf)
    ok = (pm > 0).any(axis=1)
    return np.where(ok, np.argmax(delta, axis=0) + 1, 0)


def capacity_report(model: ClassifierModel, test: Dataset, rule: str = "auto") -> tuple[float, int]:
    """Proportion of correctly allocated test observations and the undefined-cell count.

    Undefined observations count as errors.
    """
    if test.n < 1:
        raise DataValidationError("empty test set")
    pred = predict(model, test.X, test.Y, rule)
    return float(np.mean(pred == test.z)), int(np.sum(pred == 0))


def classification_capacity(model: ClassifierModel, test: Dataset, rule: str = "auto") -> float:
    return capacity_report(model, test, rule)[0]
