"""Penalised estimation of the variable ordering and of the number of adequate variables.

With ``K_i = I - {i}``, variables are ranked by ``phi_i = xi_{K_i} + f_n(i)``
(largest first, ties to the smaller index); the dimension is the first
minimiser of ``psi_i = xi_{J_i} + g_n(sigma(i))`` over the nested sets
``J_i = {sigma(1), ..., sigma(i)}``; the selection is ``J_s``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .criterion import criterion, subset_mask
from .data import Dataset
from .errors import ParameterError
from .estimators import CellEstimates, check_lambda, estimate


@dataclass(frozen=True)
class PenaltyFamily:
    id: str
    h: Callable[[np.ndarray], np.ndarray]


def _family(name, fn):
    return PenaltyFamily(name, fn)


# ln is evaluated as ln(x + 1) so every family is finite and positive at x = 1
PENALTIES: dict[str, PenaltyFamily] = {
    f.id: f
    for f in (
        _family("h1", lambda x: x),
        _family("h2", lambda x: x**0.1),
        _family("h3", lambda x: x**0.5),
        _family("h4", lambda x: x**0.9),
        _family("h5", lambda x: x**10),
        _family("h6", lambda x: np.log1p(x)),
        _family("h7", lambda x: np.log1p(x) ** 0.1),
        _family("h8", lambda x: np.log1p(x) ** 0.5),
        _family("h9", lambda x: np.log1p(x) ** 0.9),
        _family("h10", lambda x: x * np.log1p(x)),
        _family("h11", lambda x: (x * np.log1p(x)) ** 0.1),
        _family("h12", lambda x: (x * np.log1p(x)) ** 0.5),
        _family("h13", lambda x: (x * np.log1p(x)) ** 0.9),
    )
}


def get_penalty(fam) -> PenaltyFamily:
    if isinstance(fam, PenaltyFamily):
        return fam
    try:
        return PENALTIES[str(fam)]
    except KeyError:
        raise ParameterError(f"unknown penalty family {fam!r}; choose from {', '.join(PENALTIES)}") from None


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 0.5:
        raise ParameterError(f"alpha={alpha} outside the allowed range ]0, 1/2[")
    return alpha


def check_beta(beta: float) -> float:
    beta = float(beta)
    if not 0.0 < beta < 1.0:
        raise ParameterError(f"beta={beta} outside the allowed range ]0, 1[")
    return beta


def penalty_f(n: int, i, alpha: float, fam="h7"):
    """Ordering penalty ``n**-alpha / h(i)``, strictly decreasing in ``i``."""
    alpha = check_alpha(alpha)
    h = get_penalty(fam).h
    return float(n) ** -alpha / h(np.asarray(i, dtype=float))


def penalty_g(n: int, i, beta: float, fam="h7"):
    """Dimension penalty ``n**-beta * h(i)``, strictly increasing in ``i``."""
    beta = check_beta(beta)
    h = get_penalty(fam).h
    return float(n) ** -beta * h(np.asarray(i, dtype=float))


@dataclass(frozen=True)
class SelectionConfig:
    alpha: float = 0.25
    beta: float = 0.5
    penalty: str = "h7"
    estimator: str = "empirical"
    lam: float = 0.0

    def __post_init__(self):
        check_alpha(self.alpha)
        check_beta(self.beta)
        get_penalty(self.penalty)
        if self.estimator not in ("empirical", "smoothed"):
            raise ParameterError(f"estimator must be 'empirical' or 'smoothed', not {self.estimator!r}")
        check_lambda(self.lam)
        if self.estimator == "empirical" and self.lam != 0.0:
            raise ParameterError("lambda is only meaningful with the smoothed estimator")

    @property
    def smoothing(self) -> float:
        return self.lam if self.estimator == "smoothed" else 0.0


@dataclass(frozen=True, eq=False)
class SelectionResult:
    sigma: tuple[int, ...]
    s_hat: int
    selected: tuple[int, ...]
    phi: np.ndarray  # phi[i-1] for variable i
    psi: np.ndarray  # psi[i-1] for position i in sigma
    xi_drop: np.ndarray  # xi of K_i, per variable
    xi_nested: np.ndarray  # xi of J_i, per position

    def to_dict(self) -> dict:
        return {
            "sigma": list(self.sigma),
            "s_hat": self.s_hat,
            "selected": list(self.selected),
            "phi": self.phi.tolist(),
            "psi": self.psi.tolist(),
            "xi_drop": self.xi_drop.tolist(),
            "xi_nested": self.xi_nested.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def estimate_sigma(xi_drop, penalties) -> tuple[int, ...]:
    """Order variables by decreasing ``xi_drop + penalties``; exact ties go to the smaller index."""
    phi = np.asarray(xi_drop, dtype=float) + np.asarray(penalties, dtype=float)
    order = sorted(range(phi.size), key=lambda i: (-phi[i], i))
    return tuple(i + 1 for i in order)


def estimate_s(psi) -> int:
    """Smallest 1-based position attaining ``min(psi)``."""
    return int(np.argmin(np.asarray(psi, dtype=float))) + 1


@dataclass
class CriterionCache:
    """Memoised ``xi_K`` for one set of estimates, keyed by subset bit-mask."""

    est: CellEstimates
    values: dict = field(default_factory=dict)

    def __call__(self, K) -> float:
        key = subset_mask(K)
        if key not in self.values:
            self.values[key] = criterion(self.est, K)
        return self.values[key]


def select_from_estimates(est, n: int, cfg: SelectionConfig, xi: Callable | None = None) -> SelectionResult:
    """Run the ordering/dimension estimation on given estimates of sample size ``n``."""
    p = est.p
    if p < 2:
        raise ParameterError("variable selection needs p >= 2")
    xi = xi or CriterionCache(est)
    idx = np.arange(1, p + 1)
    full = set(idx.tolist())
    xi_drop = np.array([xi(full - {i}) for i in idx.tolist()])
    f = penalty_f(n, idx, cfg.alpha, cfg.penalty)
    sigma = estimate_sigma(xi_drop, f)
    xi_nested = np.array([xi(sigma[:i]) for i in range(1, p + 1)])
    psi = xi_nested + penalty_g(n, np.array(sigma), cfg.beta, cfg.penalty)
    s_hat = estimate_s(psi)
    return SelectionResult(
        sigma=sigma,
        s_hat=s_hat,
        selected=tuple(sorted(sigma[:s_hat])),
        phi=xi_drop + f,
        psi=psi,
        xi_drop=xi_drop,
        xi_nested=xi_nested,
    )


def select_variables(ds: Dataset, cfg: SelectionConfig = SelectionConfig()) -> SelectionResult:
    """Estimate the adequate variable set of ``ds``."""
    return select_from_estimates(estimate(ds, cfg.smoothing), ds.n, cfg)
