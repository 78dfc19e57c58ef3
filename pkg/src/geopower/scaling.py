"""Iterative scaling: IPF(gamma, xi), the two-loop G-IPF(xi) and MLE drivers.

The inner iteration multiplies every cell by a product of per-column
correction factors raised to the (L1-normalized) design entries::

    delta_i <- delta_i * prod_j [gamma * A_j'q / A_j'delta] ** a_ij

Because each update adds a vector from the column space of ``A`` to
``log delta``, the canonical parameters ``D log delta`` never move from
their starting value ``D log xi``.  The outer loop of G-IPF tunes ``gamma``
until the fitted vector sums to one.

Iterates are carried as ``log delta``; this is the same recursion written
additively and it cannot overflow or underflow.  All solvers work on a batch
of rows at once (shape ``(B, I)``); the single-problem functions are thin
wrappers around the batched ones.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .design import DesignMatrix, Distribution, KernelBasis, ModelSpec
from .errors import (
    BracketFailure,
    DimensionMismatch,
    MaxItersExceeded,
    NonPositiveInput,
    ZeroSufficientStatistic,
)

# per-row status codes of batched fits
OK = 0
ZERO_STAT = 1
MAX_ITERS = 2
NO_BRACKET = 3

_MAX_EXPANSIONS = 80


@dataclass(frozen=True)
class ScalingConfig:
    """Stopping rules for the scaling loops.

    ``tol_mean`` bounds ``max_j |A_j'delta - gamma A_j'q|`` (relative to the
    size of the targets once they exceed one); ``tol_total`` bounds
    ``|1'delta - 1|`` in G-IPF.  With ``extrapolate`` the inner loop tries a
    multiple of each scaling step and keeps it only when the Bregman
    divergence to the target drops at least as much as under the plain step.
    """

    tol_mean: float = 1e-10
    tol_total: float = 1e-9
    max_inner_iters: int = 10**6
    max_outer_iters: int = 200
    extrapolate: bool = True

    def __post_init__(self):
        if not (self.tol_mean > 0 and self.tol_total > 0):
            raise ValueError("tolerances must be positive")
        if self.max_inner_iters < 1 or self.max_outer_iters < 1:
            raise ValueError("iteration caps must be at least 1")


@dataclass
class FitResult:
    fitted: np.ndarray
    gamma: float
    inner_iters: int
    outer_iters: int
    residual_mean: float
    residual_dual: float
    residual_total: float
    kind: str = "probability"
    converged: bool = True

    def distribution(self) -> Distribution:
        values = self.fitted
        if self.kind == "probability":
            values = values / values.sum()
        return Distribution(values, self.kind)


@dataclass
class BatchFit:
    """Row-wise results of a batched fit; ``status`` uses the module codes."""

    fitted: np.ndarray
    gamma: np.ndarray
    inner_iters: np.ndarray
    outer_iters: np.ndarray
    residual_mean: np.ndarray
    residual_dual: np.ndarray
    residual_total: np.ndarray
    status: np.ndarray = field(default=None)

    @property
    def ok(self) -> np.ndarray:
        return self.status == OK

    def row(self, i: int, kind: str = "probability") -> FitResult:
        return FitResult(
            fitted=self.fitted[i].copy(),
            gamma=float(self.gamma[i]),
            inner_iters=int(self.inner_iters[i]),
            outer_iters=int(self.outer_iters[i]),
            residual_mean=float(self.residual_mean[i]),
            residual_dual=float(self.residual_dual[i]),
            residual_total=float(self.residual_total[i]),
            kind=kind,
            converged=bool(self.status[i] == OK),
        )


TraceFn = Callable[[int, np.ndarray, float], None]


def bregman_divergence(t, u) -> float:
    """``sum t log(t/u) - (sum t - sum u)``; zero iff ``t == u``."""
    t = np.asarray(t, dtype=float)
    u = np.asarray(u, dtype=float)
    if t.shape != u.shape:
        raise DimensionMismatch("arguments must have equal length")
    if np.any(~(t > 0)) or np.any(~(u > 0)):
        raise NonPositiveInput("Bregman divergence needs strictly positive vectors")
    return float(np.sum(t * np.log(t / u)) - (t.sum() - u.sum()))


def ipf_step(delta, q, gamma: float, a_norm) -> np.ndarray:
    """One multiplicative scaling update, written exactly as the product form."""
    delta = np.asarray(delta, dtype=float)
    q = np.asarray(q, dtype=float)
    a_norm = np.asarray(a_norm, dtype=float)
    sq = q @ a_norm
    if np.any(sq <= 0):
        raise ZeroSufficientStatistic("some column total A_j'q is zero")
    sd = delta @ a_norm
    factors = gamma * sq / sd
    return delta * np.prod(factors ** a_norm, axis=-1)


def _column_stats(q: np.ndarray, a_norm: np.ndarray) -> np.ndarray:
    return np.atleast_2d(q) @ a_norm


_OMEGA_MAX = 2.0 ** 16


def _scale_core(log_delta, log_target, a_norm, l1, tol, max_iters, trace=None,
                extrapolate=False):
    """Run the inner recursion in place on the rows of ``log_delta``.

    ``log_target`` is ``log(gamma * A_norm'q)`` per row.  A row stops once its
    raw-scale mean residual drops below ``tol * max(1, max target)``.
    Returns ``(iterations, residual, converged)`` per row.
    """
    n_rows = log_delta.shape[0]
    target = np.exp(log_target)
    thresh = tol * np.maximum(1.0, l1 * target.max(axis=1))
    iters = np.zeros(n_rows, dtype=np.int64)
    resid = np.full(n_rows, np.inf)
    omega = np.ones(n_rows)
    active = np.arange(n_rows)
    a_t = a_norm.T
    for n in range(max_iters + 1):
        ld = log_delta[active]
        m = ld.max(axis=1, keepdims=True)
        log_s = np.log(np.exp(ld - m) @ a_norm) + m
        r = l1 * np.abs(np.exp(log_s) - target[active]).max(axis=1)
        resid[active] = r
        if trace is not None:
            trace(n, ld[0], float(r[0]))
        keep = r > thresh[active]
        if n == max_iters or not keep.any():
            break
        active = active[keep]
        ld = ld[keep]
        beta = log_target[active] - log_s[keep]
        step = beta @ a_t
        if extrapolate:
            w = omega[active]
            gain = (target[active] * beta).sum(axis=1)
            delta = np.exp(ld)
            # objective change relative to the current iterate, for steps 1 and w
            f1 = (delta * np.expm1(step)).sum(axis=1) - gain
            with np.errstate(over="ignore", invalid="ignore"):
                fw = (delta * np.expm1(w[:, None] * step)).sum(axis=1) - w * gain
            take = fw <= f1  # NaN or inf trial steps are rejected
            omega[active] = np.where(take, np.minimum(2.0 * w, _OMEGA_MAX),
                                     np.maximum(1.0, 0.25 * w))
            step *= np.where(take, w, 1.0)[:, None]
        log_delta[active] = ld + step
        iters[active] += 1
    return iters, resid, resid <= thresh


def _dual_residual(log_delta, log_xi, kernel_matrix) -> np.ndarray:
    if kernel_matrix.shape[0] == 0:
        return np.zeros(log_delta.shape[0])
    d = kernel_matrix.T.astype(float)
    return np.abs((log_delta - log_xi) @ d).max(axis=1)


def _logsumexp(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=1)
    return np.log(np.exp(x - m[:, None]).sum(axis=1)) + m


def _prepare(design: DesignMatrix, q, xi):
    q = np.atleast_2d(np.asarray(q, dtype=float))
    if q.shape[1] != design.n_cells:
        raise DimensionMismatch(
            f"data of length {q.shape[1]} for a design with {design.n_cells} cells")
    if np.any(q < 0) or not np.all(np.isfinite(q)):
        raise NonPositiveInput("data must be finite and non-negative")
    xi = np.asarray(xi, dtype=float)
    if np.any(~(xi > 0)):
        raise NonPositiveInput("offset must be strictly positive")
    log_xi = np.broadcast_to(np.log(xi), q.shape).astype(float)
    a_norm = design.normalized()
    stats = q @ a_norm
    zero = np.any(stats <= 0, axis=1)
    return q, a_norm, stats, log_xi, zero


def _empty_batch(n_rows: int, n_cells: int) -> BatchFit:
    return BatchFit(
        fitted=np.full((n_rows, n_cells), np.nan),
        gamma=np.ones(n_rows),
        inner_iters=np.zeros(n_rows, dtype=np.int64),
        outer_iters=np.zeros(n_rows, dtype=np.int64),
        residual_mean=np.full(n_rows, np.nan),
        residual_dual=np.full(n_rows, np.nan),
        residual_total=np.full(n_rows, np.nan),
        status=np.full(n_rows, OK, dtype=np.int64),
    )


def ipf_gamma_xi_batch(design: DesignMatrix, kernel: KernelBasis, q, gamma, xi,
                       cfg: ScalingConfig = ScalingConfig(), start=None,
                       trace: Optional[TraceFn] = None) -> BatchFit:
    """IPF(gamma, xi) on each row of ``q``; rows may carry their own gamma."""
    q, a_norm, stats, log_xi, zero = _prepare(design, q, xi)
    n_rows = q.shape[0]
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (n_rows,))
    if np.any(~(gamma > 0)):
        raise NonPositiveInput("gamma must be positive")
    out = _empty_batch(n_rows, design.n_cells)
    out.gamma = gamma.copy()
    out.status[zero] = ZERO_STAT
    rows = np.flatnonzero(~zero)
    if rows.size == 0:
        return out
    log_delta = log_xi[rows].copy()
    if start is not None:
        log_delta = np.log(np.broadcast_to(np.asarray(start, dtype=float), q.shape))[rows].copy()
    log_target = np.log(stats[rows]) + np.log(gamma[rows])[:, None]
    its, res, conv = _scale_core(log_delta, log_target, a_norm, design.l1_norm,
                                 cfg.tol_mean, cfg.max_inner_iters, trace,
                                 cfg.extrapolate)
    fitted = np.exp(log_delta)
    out.fitted[rows] = fitted
    out.inner_iters[rows] = its
    out.outer_iters[rows] = 1
    out.residual_mean[rows] = res
    out.residual_dual[rows] = _dual_residual(log_delta, log_xi[rows], kernel.matrix)
    out.residual_total[rows] = np.abs(fitted.sum(axis=1) - 1.0)
    out.status[rows[~conv]] = MAX_ITERS
    return out


def g_ipf_batch(design: DesignMatrix, kernel: KernelBasis, q, xi,
                cfg: ScalingConfig = ScalingConfig(),
                trace: Optional[TraceFn] = None) -> BatchFit:
    """G-IPF(xi) on each row of ``q``: IPF(gamma, xi) plus a search over gamma.

    When the all-ones vector lies in the column span, gamma = 1 already gives
    a probability vector and a single core step is run.  Otherwise the
    adjustment step treats ``h(u) = log 1'delta_gamma`` with ``u = log gamma``
    as a root-finding problem: the first trial assumes unit slope, a
    multiplicative bracket is grown until ``h`` changes sign, and the bracket
    is then shrunk by regula falsi (Illinois variant) with a bisection
    safeguard.  Core steps are warm-started from the previous iterate, which
    keeps ``D log delta = D log xi`` exact.
    """
    if design.has_overall:
        return ipf_gamma_xi_batch(design, kernel, q, 1.0, xi, cfg, trace=trace)

    q, a_norm, stats, log_xi, zero = _prepare(design, q, xi)
    n_rows = q.shape[0]
    out = _empty_batch(n_rows, design.n_cells)
    out.status[zero] = ZERO_STAT
    rows = np.flatnonzero(~zero)
    if rows.size == 0:
        return out

    n = rows.size
    log_stats = np.log(stats[rows])
    log_delta = log_xi[rows].copy()
    u = np.zeros(n)
    lo_u = np.full(n, np.nan)
    lo_h = np.full(n, np.nan)
    hi_u = np.full(n, np.nan)
    hi_h = np.full(n, np.nan)
    last_side = np.zeros(n, dtype=np.int64)
    expansions = np.zeros(n, dtype=np.int64)
    inner = np.zeros(n, dtype=np.int64)
    outer = np.zeros(n, dtype=np.int64)
    resid = np.full(n, np.inf)
    h_last = np.full(n, np.nan)
    status = np.full(n, MAX_ITERS, dtype=np.int64)
    active = np.arange(n)

    for d in range(cfg.max_outer_iters):
        if active.size == 0:
            break
        final_tol = d >= 2
        tol_d = cfg.tol_mean * max(1.0, 10.0 ** (2 - d))
        ld = log_delta[active]
        log_target = log_stats[active] + u[active, None]
        its, res, conv = _scale_core(ld, log_target, a_norm, design.l1_norm, tol_d,
                                     cfg.max_inner_iters, trace, cfg.extrapolate)
        log_delta[active] = ld
        inner[active] += its
        outer[active] += 1
        resid[active] = res
        h = _logsumexp(ld)
        h_last[active] = h

        total_ok = np.abs(np.expm1(h)) <= cfg.tol_total
        done = total_ok & conv & final_tol
        stalled = ~conv & final_tol
        status[active[done]] = OK
        status[active[stalled]] = MAX_ITERS
        cont = ~(done | stalled)
        act = active[cont]
        h = h[cont]
        total_ok = total_ok[cont]
        ua = u[act]

        # update the bracket with the new point (total_ok rows only need polishing)
        upd = ~total_ok
        pos = upd & (h > 0)
        neg = upd & (h <= 0)
        ia, ib = act[pos], act[neg]
        # Illinois: halve the retained end when the same end is replaced twice
        both_pos = ia[~np.isnan(lo_u[ia]) & (last_side[ia] == 1)]
        lo_h[both_pos] *= 0.5
        both_neg = ib[~np.isnan(hi_u[ib]) & (last_side[ib] == -1)]
        hi_h[both_neg] *= 0.5
        hi_u[ia], hi_h[ia], last_side[ia] = u[ia], h[pos], 1
        lo_u[ib], lo_h[ib], last_side[ib] = u[ib], h[neg], -1

        new_u = ua.copy()
        has_lo = ~np.isnan(lo_u[act])
        has_hi = ~np.isnan(hi_u[act])
        bracketed = upd & has_lo & has_hi
        only_hi = upd & has_hi & ~has_lo
        only_lo = upd & has_lo & ~has_hi

        b = act[bracketed]
        if b.size:
            width = hi_u[b] - lo_u[b]
            denom = hi_h[b] - lo_h[b]
            cand = lo_u[b] - lo_h[b] * width / denom
            margin = 1e-12 * np.abs(width)
            inside = (cand > np.minimum(lo_u[b], hi_u[b]) + margin) & \
                (cand < np.maximum(lo_u[b], hi_u[b]) - margin)
            cand = np.where(np.isfinite(cand) & inside, cand, 0.5 * (lo_u[b] + hi_u[b]))
            new_u[bracketed] = cand
        for mask, sign in ((only_hi, -1.0), (only_lo, 1.0)):
            e = act[mask]
            if e.size:
                step = np.maximum(np.abs(h[mask]), 1e-15) * 2.0 ** expansions[e]
                new_u[mask] = u[e] + sign * step
                expansions[e] += 1
        runaway = (expansions[act] > _MAX_EXPANSIONS) | (np.abs(new_u) > 700)
        status[act[runaway]] = NO_BRACKET
        u[act] = new_u
        active = act[~runaway]

    fitted = np.exp(log_delta)
    r = rows
    out.fitted[r] = fitted
    out.gamma[r] = np.exp(u)
    out.inner_iters[r] = inner
    out.outer_iters[r] = outer
    out.residual_mean[r] = resid
    out.residual_dual[r] = _dual_residual(log_delta, log_xi[r], kernel.matrix)
    out.residual_total[r] = np.abs(fitted.sum(axis=1) - 1.0)
    out.status[r] = status
    return out


def _single(batch: BatchFit, kind: str) -> FitResult:
    code = int(batch.status[0])
    if code == ZERO_STAT:
        raise ZeroSufficientStatistic("some column total A_j'q is zero; no positive fit exists")
    result = batch.row(0, kind)
    if code == MAX_ITERS:
        raise MaxItersExceeded(
            f"no convergence: mean residual {result.residual_mean:.3g}, "
            f"total residual {result.residual_total:.3g}", result)
    if code == NO_BRACKET:
        raise BracketFailure("could not bracket the adjustment factor", result)
    return result


def _as_vector(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.ndim != 1:
        raise DimensionMismatch("expected a single vector")
    return q


def ipf_gamma_xi(design: DesignMatrix, kernel: KernelBasis, q, gamma: float = 1.0,
                 xi=None, cfg: ScalingConfig = ScalingConfig(), start=None,
                 trace: Optional[TraceFn] = None, kind: str = "intensity") -> FitResult:
    """Limit of IPF(gamma, xi) started at ``xi`` (or at ``start``).

    The limit solves ``A'delta = gamma A'q`` and ``D log delta = D log xi``.
    ``start`` must itself satisfy ``D log start = D log xi``.
    """
    q = _as_vector(q)
    xi = np.ones_like(q) if xi is None else xi
    batch = ipf_gamma_xi_batch(design, kernel, q, gamma, xi, cfg, start, trace)
    return _single(batch, kind)


def g_ipf(design: DesignMatrix, kernel: KernelBasis, q, xi=None,
          cfg: ScalingConfig = ScalingConfig(),
          trace: Optional[TraceFn] = None) -> FitResult:
    """Probability vector with ``A'delta = gamma* A'q`` and ``D log delta = D log xi``."""
    q = _as_vector(q)
    xi = np.ones_like(q) if xi is None else xi
    return _single(g_ipf_batch(design, kernel, q, xi, cfg, trace), "probability")


def _check_kind(kind: str) -> str:
    aliases = {"poisson": "poisson", "intensity": "poisson",
               "multinomial": "multinomial", "probability": "multinomial"}
    if kind not in aliases:
        raise ValueError(f"unknown sampling kind {kind!r}")
    return aliases[kind]


def mle_batch(model: ModelSpec, y, kind: str = "multinomial",
              cfg: ScalingConfig = ScalingConfig()) -> BatchFit:
    """MLE under ``model`` for each row of ``y``.

    Multinomial fits are returned as probabilities (``y / N`` scale).
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if _check_kind(kind) == "poisson":
        return ipf_gamma_xi_batch(model.design, model.kernel, y, 1.0, model.offset, cfg)
    totals = y.sum(axis=1, keepdims=True)
    q = np.divide(y, totals, out=np.zeros_like(y), where=totals > 0)
    return g_ipf_batch(model.design, model.kernel, q, model.offset, cfg)


def mle(model: ModelSpec, y, kind: str = "multinomial",
        cfg: ScalingConfig = ScalingConfig(),
        trace: Optional[TraceFn] = None) -> FitResult:
    """Maximum likelihood fit of counts ``y`` under ``model``.

    Poisson data are fitted with gamma = 1 on the counts themselves.  For
    multinomial data the fit is run on ``y / N``; models with an overall
    effect also take gamma = 1, the others need the G-IPF adjustment, and
    the returned ``gamma`` is the adjustment factor.
    """
    y = _as_vector(y)
    if _check_kind(kind) == "poisson":
        return ipf_gamma_xi(model.design, model.kernel, y, 1.0, model.offset, cfg,
                            trace=trace, kind="intensity")
    n = y.sum()
    if n <= 0:
        raise ZeroSufficientStatistic("empty sample")
    return g_ipf(model.design, model.kernel, y / n, model.offset, cfg, trace)
