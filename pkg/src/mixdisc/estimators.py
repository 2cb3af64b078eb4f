"""Per-cell sufficient statistics of the location model.

Two families are provided: the plain empirical moments of each cell and
kernel-smoothed moments that borrow observations from neighbouring cells
with weights ``lam ** hamming(m, k)``. Both are computed by the same
observation-weighted routine :func:`cell_moments`; the empirical estimator
is the special case of identity cell weights. The routine also accepts a
stack of weight matrices, which is how leave-one-out folds are evaluated
in one pass (see :mod:`mixdisc.tuning`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, cell_patterns
from .errors import ParameterError


@dataclass(frozen=True, eq=False)
class SmoothingWeights:
    lam: float
    w: np.ndarray  # (M, M), w[m, k] = lam ** D[m, k]
    D: np.ndarray  # (M, M) integer Hamming distances between cell patterns


def check_lambda(lam: float) -> float:
    lam = float(lam)
    if not 0.0 <= lam < 1.0:
        raise ParameterError(f"smoothing parameter lambda={lam} outside [0, 1)")
    return lam


def smoothing_weights(d: int, lam: float) -> SmoothingWeights:
    lam = check_lambda(lam)
    pat = cell_patterns(d).astype(np.int64)
    D = ((pat[:, None, :] - pat[None, :, :]) ** 2).sum(axis=-1)
    # numpy evaluates 0.0 ** 0 as 1.0, so lam = 0 gives the identity
    w = np.power(lam, D.astype(float))
    return SmoothingWeights(lam, w, D)


@dataclass(frozen=True, eq=False)
class CellEstimates:
    """Cell probabilities and moments, possibly with leading batch axes.

    Shapes (``...`` is the optional batch shape):

    ``p_m`` (..., M); ``p_lm`` (..., q, M) holding P(Z=l | U=m);
    ``mu_m`` (..., M, p); ``mu_lm`` (..., q, M, p); ``V_m`` (..., M, p, p);
    ``weight_m`` (..., M) and ``weight_lm`` (..., q, M) are the (possibly
    smoothed) counts the moments were normalised by.

    Moments of cells with zero weight are stored as zeros and flagged by
    ``nonempty`` / ``defined_lm``; they never enter the criterion because
    their probabilities are zero.
    """

    p_m: np.ndarray
    p_lm: np.ndarray
    mu_m: np.ndarray
    mu_lm: np.ndarray
    V_m: np.ndarray
    weight_m: np.ndarray
    weight_lm: np.ndarray
    n_m: np.ndarray | None = None
    n_lm: np.ndarray | None = None
    lam: float = 0.0

    @property
    def nonempty(self) -> np.ndarray:
        return self.weight_m > 0

    @property
    def defined_lm(self) -> np.ndarray:
        return self.weight_lm > 0

    @property
    def q(self) -> int:
        return self.p_lm.shape[-2]

    @property
    def M(self) -> int:
        return self.p_m.shape[-1]

    @property
    def p(self) -> int:
        return self.mu_m.shape[-1]

    def to_dict(self) -> dict:
        """JSON-ready view of an unbatched estimate; empty cells carry ``null`` moments."""
        if self.p_m.ndim != 1:
            raise ValueError("only unbatched estimates can be serialised")
        cells = []
        for m in range(self.M):
            ok = bool(self.nonempty[m])
            cells.append(
                {
                    "m": m + 1,
                    "empty": not ok,
                    "N_m": None if self.n_m is None else int(self.n_m[m]),
                    "p_m": float(self.p_m[m]),
                    "p_l_given_m": self.p_lm[:, m].tolist(),
                    "mu_m": self.mu_m[m].tolist() if ok else None,
                    "mu_lm": [
                        self.mu_lm[l, m].tolist() if self.defined_lm[l, m] else None for l in range(self.q)
                    ],
                    "V_m": self.V_m[m].tolist() if ok else None,
                }
            )
        return {"lambda": self.lam, "p": self.p, "q": self.q, "M": self.M, "cells": cells}


def cell_moments(X: np.ndarray, z: np.ndarray, q: int, A: np.ndarray) -> CellEstimates:
    """Observation-weighted cell moments.

    ``A[..., m, i]`` is the weight observation ``i`` receives in cell ``m``
    (``w(m, U_i)``, times 0 for a held-out observation). Covariances use the
    weighted ``1 / sum(weights)`` normalisation. A single weight matrix is
    centred in two passes; batched weights (one matrix per fold) use raw
    second moments, which is much faster and accurate for data on a moderate
    scale.
    """
    X = np.asarray(X, dtype=float)
    A = np.asarray(A, dtype=float)
    G = np.zeros((X.shape[0], q))
    G[np.arange(X.shape[0]), np.asarray(z) - 1] = 1.0

    S0 = A.sum(axis=-1)  # (..., M)
    S0_lm = np.swapaxes(A @ G, -1, -2)  # (..., q, M)
    ok = S0 > 0
    ok_lm = S0_lm > 0
    safe = np.where(ok, S0, 1.0)
    safe_lm = np.where(ok_lm, S0_lm, 1.0)

    mu = (A @ X) / safe[..., None]
    mu = np.where(ok[..., None], mu, 0.0)
    # (..., q, M, p): sum_i A[m, i] G[i, l] X[i]
    n, p = X.shape
    GX = (G[:, :, None] * X[:, None, :]).reshape(n, q * p)
    mu_lm = np.swapaxes((A @ GX).reshape(A.shape[:-1] + (q, p)), -2, -3) / safe_lm[..., None]
    mu_lm = np.where(ok_lm[..., None], mu_lm, 0.0)

    if A.ndim == 2:
        dev = X - mu[..., None, :]  # (M, n, p)
        V = np.swapaxes(dev * A[..., None], -1, -2) @ dev / safe[..., None, None]
    else:
        # batched: raw second moments in one matmul; a zero weight still contributes exactly nothing
        outer = (X[:, :, None] * X[:, None, :]).reshape(X.shape[0], p * p)
        S2 = (A @ outer).reshape(A.shape[:-1] + (p, p))
        V = S2 / safe[..., None, None] - mu[..., :, None] * mu[..., None, :]
        V = np.where(ok[..., None, None], V, 0.0)
    V = 0.5 * (V + np.swapaxes(V, -1, -2))

    total = S0.sum(axis=-1, keepdims=True)
    p_m = S0 / total
    p_lm = np.where(ok[..., None, :], S0_lm / safe[..., None, :], 0.0)
    return CellEstimates(p_m, p_lm, mu, mu_lm, V, S0, S0_lm)


def _with_counts(est: CellEstimates, ds: Dataset, lam: float) -> CellEstimates:
    counts = ds.counts()
    return CellEstimates(
        est.p_m, est.p_lm, est.mu_m, est.mu_lm, est.V_m, est.weight_m, est.weight_lm,
        n_m=counts.sum(axis=0), n_lm=counts, lam=lam,
    )


def observation_weights(ds: Dataset, lam: float = 0.0) -> np.ndarray:
    """(M, n) matrix of ``w(m, U_i)``."""
    if lam == 0.0:
        A = np.zeros((ds.M, ds.n))
        A[ds.U - 1, np.arange(ds.n)] = 1.0
        return A
    return smoothing_weights(ds.d, lam).w[:, ds.U - 1]


def estimate_empirical(ds: Dataset) -> CellEstimates:
    """Cell frequencies, cell and group-cell means, and biased cell covariances."""
    return _with_counts(cell_moments(ds.X, ds.z, ds.q, observation_weights(ds, 0.0)), ds, 0.0)


def estimate_smoothed(ds: Dataset, lam: float) -> CellEstimates:
    """Kernel-smoothed analogue of :func:`estimate_empirical`.

    Every cell pools the observations of cell ``j`` with weight ``lam ** D(m, j)``;
    ``lam = 0`` reproduces the empirical estimates exactly.
    """
    lam = check_lambda(lam)
    return _with_counts(cell_moments(ds.X, ds.z, ds.q, observation_weights(ds, lam)), ds, lam)


def estimate(ds: Dataset, lam: float = 0.0) -> CellEstimates:
    return estimate_smoothed(ds, lam) if lam else estimate_empirical(ds)


def pooled_within_covariance(ds: Dataset, est: CellEstimates) -> np.ndarray:
    """Common covariance ``(1/n) sum_i (X_i - mu_{Z_i,U_i})(X_i - mu_{Z_i,U_i})^T``.

    ``est`` should hold empirical group-cell means.
    """
    centers = est.mu_lm[ds.z - 1, ds.U - 1]
    R = ds.X - centers
    S = R.T @ R / ds.n
    return 0.5 * (S + S.T)
