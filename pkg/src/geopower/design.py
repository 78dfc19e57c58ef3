"""Design matrices, exact kernel bases and model specifications.

A log-linear model is given by a non-negative integer design matrix ``A``
(cells x parameters).  Its dual description uses an integer matrix ``D``
whose rows span the left kernel, ``D @ A == 0``.  All structural
computations (rank, kernel, overall effect) use exact rational arithmetic.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidDesign,
    NegativeEntry,
    NonPositiveCell,
    NonPositiveInput,
    RankDeficient,
)

MAX_CELLS = 10**4


def rref(rows: Sequence[Sequence]) -> tuple[list[list[Fraction]], list[int]]:
    """Reduced row echelon form over the rationals.

    Returns the non-zero rows of the reduced matrix and the pivot columns.
    """
    m = [[Fraction(v) for v in row] for row in rows]
    if not m:
        return [], []
    n_rows, n_cols = len(m), len(m[0])
    pivots: list[int] = []
    r = 0
    for c in range(n_cols):
        if r == n_rows:
            break
        piv = next((i for i in range(r, n_rows) if m[i][c] != 0), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        inv = 1 / m[r][c]
        m[r] = [v * inv for v in m[r]]
        for i in range(n_rows):
            if i != r and m[i][c] != 0:
                f = m[i][c]
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
    return m[:r], pivots


def exact_rank(rows: Sequence[Sequence]) -> int:
    return len(rref(rows)[1])


def _primitive_integer_row(row: Sequence[Fraction]) -> list[int]:
    """Scale a rational row to coprime integers with a positive leading entry."""
    lcm = 1
    for v in row:
        lcm = lcm * v.denominator // math.gcd(lcm, v.denominator)
    ints = [int(v * lcm) for v in row]
    g = 0
    for v in ints:
        g = math.gcd(g, v)
    ints = [v // g for v in ints] if g else ints
    lead = next((v for v in ints if v != 0), 0)
    return [-v for v in ints] if lead < 0 else ints


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DesignMatrix:
    """Validated non-negative integer design matrix (cells x parameters)."""

    entries: np.ndarray
    l1_norm: int
    has_overall: bool

    @property
    def n_cells(self) -> int:
        return self.entries.shape[0]

    @property
    def n_params(self) -> int:
        return self.entries.shape[1]

    @property
    def dof(self) -> int:
        return self.n_cells - self.n_params

    def normalized(self) -> np.ndarray:
        return l1_normalize(self)

    def digest(self) -> str:
        h = hashlib.sha256(np.ascontiguousarray(self.entries, dtype=np.int64).tobytes())
        h.update(str(self.entries.shape).encode())
        return h.hexdigest()[:12]


@dataclass(frozen=True)
class KernelBasis:
    """Integer matrix ``D`` (K x I) with ``D @ A == 0`` and independent rows."""

    matrix: np.ndarray

    @property
    def dof(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_rows(cls, design: DesignMatrix, rows) -> "KernelBasis":
        """Wrap a user-chosen kernel basis after checking it exactly."""
        d = np.array(rows, dtype=object).reshape(-1, design.n_cells) if len(rows) else \
            np.zeros((0, design.n_cells), dtype=object)
        if any(int(v) != v for v in d.ravel()):
            raise InvalidDesign("kernel basis entries must be integers")
        d = d.astype(np.int64)
        if d.shape[0] != design.dof:
            raise DimensionMismatch(
                f"kernel basis needs {design.dof} rows, got {d.shape[0]}")
        prod = d.astype(object) @ design.entries.astype(object)
        if np.any(prod != 0):
            raise InvalidDesign("rows are not in the kernel: D @ A != 0")
        if d.shape[0] and exact_rank(d.tolist()) != d.shape[0]:
            raise RankDeficient("kernel basis rows are linearly dependent")
        return cls(_readonly(d))


def validate_design(raw_entries) -> DesignMatrix:
    """Check and wrap a raw integer matrix as a design matrix.

    Raises NegativeEntry for negative entries and RankDeficient when the
    columns are linearly dependent (rank is computed exactly).
    """
    arr = np.asarray(raw_entries)
    if arr.ndim != 2 or arr.size == 0:
        raise InvalidDesign("design must be a non-empty 2-d matrix")
    if arr.dtype.kind == "f":
        if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
            raise InvalidDesign("design entries must be integers")
    elif arr.dtype.kind not in "iub":
        raise InvalidDesign("design entries must be integers")
    a = arr.astype(np.int64)
    if np.any(a < 0):
        raise NegativeEntry("design entries must be non-negative")
    n_cells, n_params = a.shape
    if n_cells > MAX_CELLS:
        raise InvalidDesign(f"at most {MAX_CELLS} cells supported")
    if n_params > n_cells:
        raise RankDeficient(f"{n_params} columns cannot be independent in {n_cells} cells")
    at = a.T.tolist()
    if exact_rank(at) != n_params:
        raise RankDeficient("design columns are linearly dependent")
    has_overall = exact_rank(at + [[1] * n_cells]) == n_params
    l1 = int(a.sum(axis=1).max())
    if l1 <= 0:
        raise InvalidDesign("design has no positive entry")
    return DesignMatrix(_readonly(a), l1, has_overall)


def l1_normalize(design: DesignMatrix) -> np.ndarray:
    """Design entries divided by the maximal row sum, so every row sums to <= 1."""
    return design.entries / float(design.l1_norm)


def kernel_basis(design: DesignMatrix) -> KernelBasis:
    """Canonical integer basis of ``{d : d @ A = 0}``.

    Built from the reduced echelon form of ``A'``: one row per free column,
    cleared of denominators and divided by the gcd of its entries.
    """
    n = design.n_cells
    reduced, pivots = rref(design.entries.T.tolist())
    free = [c for c in range(n) if c not in set(pivots)]
    rows = []
    for f in free:
        v = [Fraction(0)] * n
        v[f] = Fraction(1)
        for r, p in enumerate(pivots):
            v[p] = -reduced[r][f]
        rows.append(_primitive_integer_row(v))
    d = np.array(rows, dtype=np.int64).reshape(len(rows), n)
    return KernelBasis(_readonly(d))


def canonical_params(p, kernel: KernelBasis) -> np.ndarray:
    """Canonical (log odds-ratio) coordinates ``D @ log p``."""
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != kernel.matrix.shape[1]:
        raise DimensionMismatch("distribution length does not match the kernel basis")
    if np.any(~(p > 0)):
        raise NonPositiveCell("canonical parameters need strictly positive cells")
    return np.log(p) @ kernel.matrix.T.astype(float)


def mean_value_params(p, design: DesignMatrix) -> np.ndarray:
    """Mean-value coordinates (sufficient statistics) ``A' p``."""
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != design.n_cells:
        raise DimensionMismatch(
            f"vector of length {p.shape[-1]} for a design with {design.n_cells} cells")
    return p @ design.entries


@dataclass(frozen=True)
class Distribution:
    """Strictly positive vector over cells: a probability vector or intensities."""

    values: np.ndarray
    kind: str = "probability"

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if self.kind not in ("probability", "intensity"):
            raise ValueError(f"unknown kind {self.kind!r}")
        if v.ndim != 1 or np.any(~(v > 0)):
            raise NonPositiveCell("distribution entries must be strictly positive")
        if self.kind == "probability" and abs(v.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {v.sum()!r}, not 1")
        object.__setattr__(self, "values", _readonly(v))

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class ModelSpec:
    """Design, kernel basis and offset; offset all-ones gives the null model."""

    design: DesignMatrix
    kernel: KernelBasis
    offset: np.ndarray = field(default=None)
    kind: str = "probability"
    name: str = ""

    def __post_init__(self):
        n = self.design.n_cells
        xi = np.ones(n) if self.offset is None else np.array(self.offset, dtype=float)
        if xi.shape != (n,):
            raise DimensionMismatch(f"offset must have length {n}")
        if np.any(~(xi > 0)) or not np.all(np.isfinite(xi)):
            raise NonPositiveInput("offset entries must be finite and strictly positive")
        if self.kernel.matrix.shape != (self.design.dof, n):
            raise DimensionMismatch("kernel basis does not match the design")
        if self.kind not in ("probability", "intensity"):
            raise ValueError(f"unknown kind {self.kind!r}")
        object.__setattr__(self, "offset", _readonly(xi))

    @classmethod
    def from_design(cls, raw_entries, offset=None, kind="probability", name=""):
        design = validate_design(raw_entries)
        return cls(design, kernel_basis(design), offset, kind, name)

    @property
    def dof(self) -> int:
        return self.design.dof

    @property
    def is_null(self) -> bool:
        return bool(np.all(np.abs(self.offset_canonical()) < 1e-12))

    def offset_canonical(self) -> np.ndarray:
        """``D @ log xi``: the canonical parameters shared by the whole model."""
        return np.log(self.offset) @ self.kernel.matrix.T.astype(float)

    def null(self) -> "ModelSpec":
        return ModelSpec(self.design, self.kernel, None, self.kind, self.name)

    def with_offset(self, offset) -> "ModelSpec":
        return ModelSpec(self.design, self.kernel, offset, self.kind, self.name)

    def with_odds(self, odds) -> "ModelSpec":
        """Alternative whose kernel-row odds ratios ``exp(D log p)`` equal ``odds``."""
        return self.with_offset(offset_from_odds(self.kernel, odds))

    def digest(self) -> str:
        h = hashlib.sha256(self.design.digest().encode())
        h.update(np.ascontiguousarray(self.kernel.matrix).tobytes())
        h.update(np.ascontiguousarray(self.offset).tobytes())
        return h.hexdigest()[:12]


def offset_from_odds(kernel: KernelBasis, odds) -> np.ndarray:
    """Minimal-norm log-offset with ``D @ log xi = log(odds)``."""
    odds = np.asarray(odds, dtype=float).ravel()
    d = kernel.matrix.astype(float)
    if odds.shape != (d.shape[0],):
        raise DimensionMismatch(f"need {d.shape[0]} odds values, got {odds.size}")
    if np.any(~(odds > 0)):
        raise NonPositiveInput("odds ratios must be positive")
    if d.shape[0] == 0:
        return np.ones(d.shape[1])
    x = d.T @ np.linalg.solve(d @ d.T, np.log(odds))
    return np.exp(x)
