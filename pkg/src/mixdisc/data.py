"""Mixed continuous/binary observations, the binary-to-cell encoding, CSV I/O.

Cells, groups and variables are numbered from 1 in every public function
(cell ``m`` in ``1..2**d``, group ``z`` in ``1..q``); arrays are indexed from 0.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DataValidationError

log = logging.getLogger(__name__)


def encode_cell(y: Sequence[int]) -> int:
    """Map a binary vector to its cell index ``1 + sum_j y_j 2**(j-1)``."""
    m = 1
    for j, v in enumerate(y):
        if v == 1:
            m += 1 << j
        elif v != 0:
            raise DataValidationError(f"binary entry y{j + 1} = {v!r} is not 0 or 1")
    return m


def decode_cell(m: int, d: int) -> tuple[int, ...]:
    """Inverse of :func:`encode_cell` for a ``d``-bit pattern."""
    if d < 0 or not 1 <= m <= 2**d:
        raise DataValidationError(f"cell index {m} outside 1..{2 ** d}")
    return tuple(((m - 1) >> j) & 1 for j in range(d))


def cell_patterns(d: int) -> np.ndarray:
    """All ``2**d`` binary patterns, row ``m-1`` holding ``decode_cell(m, d)``."""
    codes = np.arange(2**d)
    return ((codes[:, None] >> np.arange(d)[None, :]) & 1).astype(np.int8)


def encode_cells(Y: np.ndarray) -> np.ndarray:
    """Vectorised :func:`encode_cell` over the rows of ``Y``."""
    Y = np.asarray(Y)
    return 1 + (Y.astype(np.int64) << np.arange(Y.shape[1])).sum(axis=1)


@dataclass(frozen=True)
class MixedObservation:
    x: tuple[float, ...]
    y: tuple[int, ...]
    z: int

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.x):
            raise DataValidationError("continuous vector has non-finite entries")
        encode_cell(self.y)
        if self.z < 1:
            raise DataValidationError(f"group label {self.z} < 1")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable sample ``{(X_i, Y_i, Z_i)}``.

    Parameters
    ----------
    X : (n, p) array of continuous variables.
    Y : (n, d) array of 0/1 indicators.
    z : (n,) array of group labels in ``1..q``.
    q : number of groups; inferred as ``max(z)`` when omitted.
    """

    X: np.ndarray
    Y: np.ndarray
    z: np.ndarray
    q: int | None = None
    U: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        X = np.array(self.X, dtype=float, copy=True)
        Y = np.array(self.Y, copy=True)
        z = np.array(self.z, copy=True)
        if X.ndim != 2:
            raise DataValidationError("X must be a 2-d array")
        n, p = X.shape
        if Y.ndim != 2 or Y.shape[0] != n or z.shape != (n,):
            raise DataValidationError("X, Y and z disagree on the number of observations")
        if n < 1:
            raise DataValidationError("no observations")
        if p < 1:
            raise DataValidationError("at least one continuous variable is required")
        if Y.shape[1] < 1:
            raise DataValidationError("at least one binary variable is required (d >= 1)")
        bad = ~np.isfinite(X)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise DataValidationError(f"x{j + 1} is not finite", row=int(i) + 1)
        bad = (Y != 0) & (Y != 1)
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise DataValidationError(f"y{j + 1} = {Y[i, j]!r} is not 0 or 1", row=int(i) + 1)
        if not np.issubdtype(z.dtype, np.integer):
            if not np.all(np.mod(z, 1) == 0):
                raise DataValidationError("group labels must be integers")
        z = z.astype(np.int64)
        q = int(z.max()) if self.q is None else int(self.q)
        if q < 1:
            raise DataValidationError("q must be >= 1")
        out = (z < 1) | (z > q)
        if out.any():
            i = int(np.argmax(out))
            raise DataValidationError(f"group label {z[i]} outside 1..{q}", row=i + 1)
        Y = Y.astype(np.int8)
        for name, arr in (("X", X), ("Y", Y), ("z", z)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "q", q)
        U = encode_cells(Y)
        U.flags.writeable = False
        object.__setattr__(self, "U", U)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def d(self) -> int:
        return self.Y.shape[1]

    @property
    def M(self) -> int:
        return 2**self.d

    def __len__(self):
        return self.n

    def __iter__(self) -> Iterator[MixedObservation]:
        for i in range(self.n):
            yield self.observation(i)

    def observation(self, i: int) -> MixedObservation:
        return MixedObservation(tuple(self.X[i].tolist()), tuple(self.Y[i].tolist()), int(self.z[i]))

    @classmethod
    def from_observations(cls, observations: Iterable[MixedObservation], q: int | None = None) -> "Dataset":
        obs = list(observations)
        if not obs:
            raise DataValidationError("no observations")
        p, d = len(obs[0].x), len(obs[0].y)
        for i, o in enumerate(obs):
            if len(o.x) != p or len(o.y) != d:
                raise DataValidationError("inconsistent vector lengths", row=i + 1)
        return cls(
            np.array([o.x for o in obs], dtype=float).reshape(len(obs), p),
            np.array([o.y for o in obs]).reshape(len(obs), d),
            np.array([o.z for o in obs]),
            q=q,
        )

    def take(self, index) -> "Dataset":
        """Sub-sample by integer index or boolean mask, keeping ``q``."""
        return Dataset(self.X[index], self.Y[index], self.z[index], q=self.q)

    def drop(self, k: int) -> "Dataset":
        """The sample with observation ``k`` (0-based) removed."""
        keep = np.ones(self.n, dtype=bool)
        keep[k] = False
        return self.take(keep)

    def counts(self) -> np.ndarray:
        """(q, M) table of ``N_{l,m}``, the number of observations per group and cell."""
        table = np.zeros((self.q, self.M), dtype=np.int64)
        np.add.at(table, (self.z - 1, self.U - 1), 1)
        return table

    def same_as(self, other: "Dataset") -> bool:
        return (
            self.q == other.q
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.Y, other.Y)
            and np.array_equal(self.z, other.z)
        )


def csv_header(p: int, d: int, group_column: str = "z") -> list[str]:
    return [f"x{j}" for j in range(1, p + 1)] + [f"y{j}" for j in range(1, d + 1)] + [group_column]


def load_csv(path, p: int, d: int, q: int, group_column: str = "z") -> Dataset:
    """Read a ``x1..xp,y1..yd,z`` file into a validated :class:`Dataset`.

    Row numbers in error messages count the header as line 1.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataValidationError(f"{path}: empty file, header row missing") from None
        wanted = csv_header(p, d, group_column)
        missing = [c for c in wanted if c not in header]
        if missing:
            raise DataValidationError(f"{path}: missing column(s) {', '.join(missing)}", row=1)
        pos = [header.index(c) for c in wanted]
        X, Y, z = [], [], []
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(header):
                raise DataValidationError("missing field(s)", row=line)
            cells = [row[i].strip() for i in pos]
            for name, c in zip(wanted, cells):
                if c == "":
                    raise DataValidationError(f"empty value for {name}", row=line)
            try:
                xs = [float(c) for c in cells[:p]]
            except ValueError:
                raise DataValidationError(f"non-numeric continuous value in {cells[:p]}", row=line) from None
            if not all(math.isfinite(v) for v in xs):
                raise DataValidationError("non-finite continuous value", row=line)
            ys = []
            for j, c in enumerate(cells[p : p + d]):
                if c not in ("0", "1"):
                    raise DataValidationError(f"y{j + 1} = {c!r} is not 0 or 1", row=line)
                ys.append(int(c))
            try:
                label = int(cells[-1])
            except ValueError:
                raise DataValidationError(f"group label {cells[-1]!r} is not an integer", row=line) from None
            if not 1 <= label <= q:
                raise DataValidationError(f"unknown group label {label} (expected 1..{q})", row=line)
            X.append(xs)
            Y.append(ys)
            z.append(label)
    if not X:
        raise DataValidationError(f"{path}: no observations")
    ds = Dataset(np.array(X, dtype=float), np.array(Y, dtype=np.int8), np.array(z), q=q)
    log.info("loaded %s: n=%d p=%d d=%d q=%d; counts per (group, cell):\n%s", path, ds.n, p, d, ds.q, ds.counts())
    return ds


def write_csv(ds: Dataset, path, group_column: str = "z") -> None:
    """Write ``ds`` in the format read by :func:`load_csv`; floats round-trip exactly."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(csv_header(ds.p, ds.d, group_column))
        for x, y, z in zip(ds.X, ds.Y, ds.z):
            w.writerow([repr(float(v)) for v in x] + [int(v) for v in y] + [int(z)])
