"""The discrimination criterion xi_K and its population counterpart.

For a variable subset ``K`` (1-based indices) and cell ``m``,

    xi_{K|m} = sum_l p_{l|m}^2 || (I - V_m Q_{K|m}) (mu_{l,m} - mu_m) ||^2,
    xi_K     = sum_m p_m^2 xi_{K|m},

where ``Q_{K|m}`` is the inverse of the ``K x K`` block of ``V_m`` scattered
back into a ``p x p`` matrix. The residual ``(I - V Q) v`` vanishes on ``K``
and equals ``v_C - V_{CK} V_{KK}^{-1} v_K`` on the complement ``C``, which is
how it is evaluated here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.linalg

from .errors import SingularSubmatrix

COND_LIMIT = 1e12
RANK_TOLERANCE = 1e-8


def as_subset(K: Iterable[int], p: int) -> tuple[int, ...]:
    """Validate a 1-based variable subset and return it sorted."""
    Ks = tuple(sorted(set(int(k) for k in K)))
    if any(k < 1 or k > p for k in Ks):
        raise ValueError(f"variable subset {Ks} not contained in 1..{p}")
    return Ks


def subset_mask(K: Iterable[int]) -> int:
    """Bit-mask encoding of a 1-based subset (bit ``k-1`` set for ``k`` in K)."""
    return sum(1 << (k - 1) for k in set(K))


def mask_subset(mask: int) -> tuple[int, ...]:
    return tuple(k + 1 for k in range(mask.bit_length()) if mask >> k & 1)


@dataclass(frozen=True, eq=False)
class PopulationSpec:
    """Exact location-model parameters, shaped like :class:`~mixdisc.estimators.CellEstimates`.

    ``V_m`` is the conditional covariance of X given the cell, i.e. the
    within-group covariance plus the between-group spread ``B_m``.
    """

    p_m: np.ndarray  # (M,)
    p_lm: np.ndarray  # (q, M)
    mu_lm: np.ndarray  # (q, M, p)
    V_m: np.ndarray  # (M, p, p)

    @classmethod
    def from_location_model(cls, p_m, p_lm, mu_lm, within) -> "PopulationSpec":
        """Build from group-cell means and a within-group covariance per cell (or one shared)."""
        p_m = np.asarray(p_m, dtype=float)
        p_lm = np.asarray(p_lm, dtype=float)
        mu_lm = np.asarray(mu_lm, dtype=float)
        within = np.asarray(within, dtype=float)
        if within.ndim == 2:
            within = np.broadcast_to(within, (p_m.shape[0],) + within.shape)
        mu_m = np.einsum("lm,lmp->mp", p_lm, mu_lm)
        dev = mu_lm - mu_m[None]
        B = np.einsum("lm,lmp,lmr->mpr", p_lm, dev, dev)
        return cls(p_m, p_lm, mu_lm, within + B)

    @property
    def mu_m(self) -> np.ndarray:
        return np.einsum("lm,lmp->mp", self.p_lm, self.mu_lm)

    @property
    def nonempty(self) -> np.ndarray:
        return self.p_m > 0

    @property
    def defined_lm(self) -> np.ndarray:
        return self.p_lm > 0

    @property
    def M(self) -> int:
        return self.p_m.shape[0]

    @property
    def p(self) -> int:
        return self.mu_lm.shape[-1]

    @property
    def B_m(self) -> np.ndarray:
        """Between-group covariance ``sum_l p_{l|m} (mu_{l,m}-mu_m)(mu_{l,m}-mu_m)^T`` per cell."""
        dev = self.mu_lm - self.mu_m[None]
        return np.einsum("lm,lmp,lmr->mpr", self.p_lm, dev, dev)


def _block_condition(Vkk: np.ndarray):
    """Condition numbers of a stack of symmetric blocks (inf when not positive definite)."""
    w = np.linalg.eigvalsh(Vkk)
    lo, hi = w[..., 0], w[..., -1]
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(lo > 0, hi / np.where(lo > 0, lo, 1.0), np.inf)
    cond = np.where(np.isfinite(w).all(axis=-1), cond, np.inf)
    return cond


def q_operator(V: np.ndarray, K: Iterable[int], cell: int | None = None) -> np.ndarray:
    """``A_K^* (A_K V A_K^*)^{-1} A_K``: the inverse of ``V[K, K]`` padded with zeros.

    Raises :class:`SingularSubmatrix` when the block is not positive definite
    or its condition number exceeds ``1e12``.
    """
    V = np.asarray(V, dtype=float)
    Ks = as_subset(K, V.shape[0])
    idx = np.array(Ks) - 1
    Vkk = V[np.ix_(idx, idx)]
    cond = float(_block_condition(Vkk))
    if not cond <= COND_LIMIT:
        raise SingularSubmatrix(Ks, cell=cell, cond=cond)
    inv = scipy.linalg.cho_solve(scipy.linalg.cho_factor(Vkk), np.eye(len(idx)))
    Q = np.zeros_like(V)
    Q[np.ix_(idx, idx)] = 0.5 * (inv + inv.T)
    return Q


def residuals(V: np.ndarray, dev: np.ndarray, K: tuple[int, ...]):
    """Batched ``(I - V Q_K) dev``.

    ``V`` is (..., p, p) and ``dev`` (..., r, p). Returns the residuals and a
    boolean (...) mask of blocks that failed the conditioning guard; residuals
    of failed blocks are meaningless.
    """
    p = V.shape[-1]
    idx = np.array(K, dtype=np.intp) - 1
    comp = np.setdiff1d(np.arange(p), idx)
    res = np.zeros(np.broadcast_shapes(V.shape[:-2], dev.shape[:-2]) + dev.shape[-2:])
    Vkk = V[..., idx[:, None], idx[None, :]]
    cond = _block_condition(Vkk)
    bad = ~(cond <= COND_LIMIT)
    if comp.size == 0:
        # K = I: V Q is the identity whenever V is invertible, so the residual is exactly zero
        return res, np.broadcast_to(bad, res.shape[:-2]).copy()
    if bad.any():
        Vkk = np.where(bad[..., None, None], np.eye(idx.size), Vkk)
    sol = np.linalg.solve(Vkk, np.swapaxes(dev[..., idx], -1, -2))  # (..., |K|, r)
    fit = np.swapaxes(V[..., comp[:, None], idx[None, :]] @ sol, -1, -2)  # (..., r, |C|)
    res[..., comp] = dev[..., comp] - fit
    return res, bad


def criterion_cells(est, K: Iterable[int]):
    """``xi_{K|m}`` for every cell (and every batch entry).

    Returns ``(values, failed)``, both shaped (..., M). Empty cells yield 0
    and never fail.
    """
    Ks = as_subset(K, est.p)
    dev = est.mu_lm - est.mu_m[..., None, :, :]  # (..., q, M, p)
    dev = np.where(est.defined_lm[..., None], dev, 0.0)
    dev = np.swapaxes(dev, -3, -2)  # (..., M, q, p)
    res, bad = residuals(est.V_m, dev, Ks)
    p_lm = np.swapaxes(est.p_lm, -1, -2)  # (..., M, q)
    vals = (p_lm**2 * (res**2).sum(axis=-1)).sum(axis=-1)
    ne = est.nonempty
    vals = np.where(ne & ~bad, vals, 0.0)
    return vals, bad & ne


def criterion_batch(est, K: Iterable[int]):
    """``xi_K`` over the batch axes of ``est``; returns ``(values, failed)``."""
    vals, bad = criterion_cells(est, K)
    return (est.p_m**2 * vals).sum(axis=-1), bad.any(axis=-1)


def _raise_first(bad: np.ndarray, K, est) -> None:
    m = int(np.argmax(bad))
    idx = np.array(as_subset(K, est.p)) - 1
    cond = float(_block_condition(est.V_m[m][np.ix_(idx, idx)]))
    raise SingularSubmatrix(as_subset(K, est.p), cell=m + 1, cond=cond)


def criterion_cell(est, m: int, K: Iterable[int]) -> float:
    """``xi_{K|m}`` for the 1-based cell ``m``."""
    vals, bad = criterion_cells(est, K)
    if bad[m - 1]:
        _raise_first(np.arange(est.M) == m - 1, K, est)
    return float(vals[m - 1])


def criterion(est, K: Iterable[int]) -> float:
    """``xi_K = sum_m p_m^2 xi_{K|m}`` (empty cells contribute nothing)."""
    vals, bad = criterion_cells(est, K)
    if bad.any():
        _raise_first(bad, K, est)
    return float((est.p_m**2 * vals).sum())


def population_adequate_set(spec: PopulationSpec, rank_tolerance: float = RANK_TOLERANCE) -> tuple[int, ...]:
    """Adequate variables ``I_1`` from the eigenvectors of ``V_m^{-1} B_m``.

    A variable belongs to ``I_{1,m}`` when some eigenvector with a non-negligible
    eigenvalue has a non-negligible coordinate on it (eigenvectors normalised to
    unit length); ``I_1`` is the union over cells with ``p_m > 0``. Eigenvalues
    of ``V^{-1} B`` lie in ``[0, 1]`` when ``V`` includes ``B``, so the
    eigenvalue cut is ``rank_tolerance * max(1, largest)``.
    """
    adequate: set[int] = set()
    p = spec.p
    for m in range(spec.M):
        if spec.p_m[m] <= 0:
            continue
        V = spec.V_m[m]
        cond = float(_block_condition(V))
        if not cond <= COND_LIMIT:
            raise SingularSubmatrix(tuple(range(1, p + 1)), cell=m + 1, cond=cond)
        lam, vec = scipy.linalg.eigh(spec.B_m[m], V)
        keep = lam > rank_tolerance * max(1.0, float(lam.max()))
        for v in vec[:, keep].T:
            v = v / np.linalg.norm(v)
            adequate.update(int(k) + 1 for k in np.flatnonzero(np.abs(v) > rank_tolerance))
    return tuple(sorted(adequate))


# name used by the command-line and external callers; returns the adequate set I_1
population_irrelevant_set = population_adequate_set
