"""Monte-Carlo geometric and cumulative geometric power.

Replicate ``u`` always uses ``RngStream(seed, u)``; replicates are processed
in fixed-size chunks so the arithmetic done for a replicate does not depend
on how many workers share the job.  Rates are integer counts divided by the
number of usable replicates, so any worker count gives identical output.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .design import ModelSpec, canonical_params
from .errors import DimensionMismatch, NonPositiveCell
from .gof import central_chi2_quantile
from .sampling import DirichletParams, RngStream, multinomial_draw, sample_alternatives
from .scaling import ScalingConfig, mle_batch

CHUNK = 1000
DEFAULT_SEED = 20240422
DEFAULT_NSIM = 10_000
MC_CONFIG = ScalingConfig()

CSV_HEADER = ["N", "alpha", "offset_label", "rate", "ci_lo", "ci_hi", "n_sim", "n_failed"]


@dataclass(frozen=True)
class PowerEstimate:
    rate: float
    n_sim: int
    n_failed: int
    ci95: tuple
    mode: str
    rejections: int = 0

    @classmethod
    def from_counts(cls, rejections: int, n_sim: int, n_failed: int, mode: str):
        n_used = n_sim - n_failed
        rate = rejections / n_used if n_used else float("nan")
        if n_used:
            half = 1.96 * math.sqrt(rate * (1.0 - rate) / n_used)
            ci = (max(0.0, rate - half), min(1.0, rate + half))
        else:
            ci = (float("nan"), float("nan"))
        return cls(rate, n_sim, n_failed, ci, mode, rejections)


def _check_pair(null: ModelSpec, alt: ModelSpec):
    if not np.array_equal(null.design.entries, alt.design.entries):
        raise DimensionMismatch("null and alternative must share the design matrix")
    if not np.array_equal(null.kernel.matrix, alt.kernel.matrix):
        raise DimensionMismatch("null and alternative must share the kernel basis")


def _chunks(n_sim: int) -> list[np.ndarray]:
    return [np.arange(s, min(s + CHUNK, n_sim)) for s in range(0, n_sim, CHUNK)]


def _run_chunks(fn, tasks: list, jobs: int) -> list:
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, *zip(*tasks)))


# geometric power --------------------------------------------------------------

def _geometric_chunk(null, alt, dirichlet, seed, ids, cfg):
    alt_fit = sample_alternatives(alt, dirichlet, seed, ids, cfg)
    x2 = np.full(len(ids), np.nan)
    ok = alt_fit.ok
    if ok.any():
        pi = alt_fit.fitted[ok]
        pi = pi / pi.sum(axis=1, keepdims=True)
        null_fit = mle_batch(null, pi, "multinomial", cfg)
        good = null_fit.ok
        pihat = null_fit.fitted[good]
        vals = np.full(pi.shape[0], np.nan)
        vals[good] = np.sum((pi[good] - pihat) ** 2 / pihat, axis=1)
        x2[ok] = vals
    return x2


def geometric_x2(null: ModelSpec, alt: ModelSpec, n_sim: int, dirichlet: DirichletParams,
                 seed: int = DEFAULT_SEED, cfg: ScalingConfig = MC_CONFIG,
                 jobs: int = 1) -> np.ndarray:
    """X^2 distance to the null of ``n_sim`` points drawn on the alternative.

    Failed replicates are NaN.
    """
    _check_pair(null, alt)
    tasks = [(null, alt, dirichlet, seed, ids, cfg) for ids in _chunks(n_sim)]
    return np.concatenate(_run_chunks(_geometric_chunk, tasks, jobs))


def _rate_from_stats(stats: np.ndarray, threshold: float, mode: str) -> PowerEstimate:
    failed = np.isnan(stats)
    rejections = int(np.count_nonzero(stats[~failed] >= threshold))
    return PowerEstimate.from_counts(rejections, stats.size, int(failed.sum()), mode)


def geometric_power_mc(null: ModelSpec, alt: ModelSpec, epsilon: float, n_sim: int,
                       dirichlet: DirichletParams, seed: int = DEFAULT_SEED,
                       cfg: ScalingConfig = MC_CONFIG, jobs: int = 1) -> PowerEstimate:
    """Share of sampled alternative points lying outside the X^2 < epsilon tube."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    return _rate_from_stats(geometric_x2(null, alt, n_sim, dirichlet, seed, cfg, jobs),
                            epsilon, "geometric")


def geometric_power_curve(null, alt, epsilons: Sequence[float], n_sim, dirichlet,
                          seed=DEFAULT_SEED, cfg=MC_CONFIG, jobs=1) -> list[PowerEstimate]:
    """Geometric power for several radii from one shared set of replicates."""
    x2 = geometric_x2(null, alt, n_sim, dirichlet, seed, cfg, jobs)
    return [_rate_from_stats(x2, e, "geometric") for e in epsilons]


# cumulative power -------------------------------------------------------------

def _cumulative_chunk(null, alt, dirichlet, seed, ids, sizes, cfg):
    alt_fit = sample_alternatives(alt, dirichlet, seed, ids, cfg)
    ok = alt_fit.ok
    pi = alt_fit.fitted
    out = {}
    for n in sizes:
        counts = np.zeros(pi.shape, dtype=np.int64)
        for row, u in enumerate(ids):
            if ok[row]:
                p = pi[row] / pi[row].sum()
                counts[row] = multinomial_draw(n, p, RngStream(seed, int(u)).generator(n))
        x2 = np.full(len(ids), np.nan)
        if ok.any():
            fit = mle_batch(null, counts[ok], "multinomial", cfg)
            good = fit.ok
            yhat = n * fit.fitted[good]
            vals = np.full(int(ok.sum()), np.nan)
            vals[good] = np.sum((counts[ok][good] - yhat) ** 2 / yhat, axis=1)
            x2[ok] = vals
        out[n] = x2
    return out


def cumulative_x2(null: ModelSpec, alt: ModelSpec, sizes: Iterable[int], n_sim: int,
                  dirichlet: DirichletParams, seed: int = DEFAULT_SEED,
                  cfg: ScalingConfig = MC_CONFIG, jobs: int = 1) -> dict:
    """Pearson X^2 of multinomial samples against their null MLE, per sample size.

    Each replicate draws one point on the alternative (shared by all sizes)
    and one independent multinomial sample per size.  Replicates whose
    alternative fit fails or whose null MLE does not exist are NaN.
    """
    _check_pair(null, alt)
    sizes = [int(n) for n in sizes]
    if any(n < 1 for n in sizes):
        raise ValueError("sample sizes must be positive")
    tasks = [(null, alt, dirichlet, seed, ids, sizes, cfg) for ids in _chunks(n_sim)]
    parts = _run_chunks(_cumulative_chunk, tasks, jobs)
    return {n: np.concatenate([p[n] for p in parts]) for n in sizes}


def critical_value(alpha: float, dof: int) -> float:
    return central_chi2_quantile(1.0 - alpha, dof)


def cumulative_power_mc(null: ModelSpec, alt: ModelSpec, n: int, alpha: float, n_sim: int,
                        dirichlet: DirichletParams, seed: int = DEFAULT_SEED,
                        cfg: ScalingConfig = MC_CONFIG, jobs: int = 1) -> PowerEstimate:
    """Empirical rejection rate of the level-alpha chi-square test."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    x2 = cumulative_x2(null, alt, [n], n_sim, dirichlet, seed, cfg, jobs)[int(n)]
    return _rate_from_stats(x2, critical_value(alpha, null.dof), "cumulative")


def posteriori_alternative(null: ModelSpec, f0) -> ModelSpec:
    """Alternative whose canonical parameters are those of the observed table."""
    f0 = np.asarray(f0, dtype=float)
    if np.any(~(f0 > 0)):
        raise NonPositiveCell("posteriori analysis needs strictly positive counts")
    p0 = f0 / f0.sum()
    alt = null.with_offset(p0)
    assert np.allclose(alt.offset_canonical(), canonical_params(p0, null.kernel))
    return alt


def posteriori_cumulative(null: ModelSpec, f0, alpha: float, n_sim: int,
                          dirichlet: DirichletParams, seed: int = DEFAULT_SEED,
                          cfg: ScalingConfig = MC_CONFIG, jobs: int = 1) -> PowerEstimate:
    """Cumulative power at the observed total against the observed odds ratios."""
    alt = posteriori_alternative(null, f0)
    n = int(round(float(np.sum(f0))))
    return cumulative_power_mc(null, alt, n, alpha, n_sim, dirichlet, seed, cfg, jobs)


# power tables -----------------------------------------------------------------

@dataclass(frozen=True)
class PowerRow:
    n: int
    alpha: float
    offset_label: str
    rate: float
    ci_lo: float
    ci_hi: float
    n_sim: int
    n_failed: int


@dataclass
class PowerTable:
    rows: list
    metadata: dict = field(default_factory=dict)

    def rate(self, label: str, n: int, alpha: float) -> float:
        for r in self.rows:
            if r.offset_label == label and r.n == n and math.isclose(r.alpha, alpha):
                return r.rate
        raise KeyError((label, n, alpha))

    def minimal_n(self, label: str, alpha: float, target: float) -> Optional[int]:
        """Smallest tabulated N reaching ``target``; None when it is never reached."""
        hits = [r.n for r in self.rows
                if r.offset_label == label and math.isclose(r.alpha, alpha) and r.rate >= target]
        return min(hits) if hits else None

    def to_csv(self) -> str:
        buf = io.StringIO()
        for k, v in self.metadata.items():
            buf.write(f"# {k}={v}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([r.n, f"{r.alpha:g}", r.offset_label, f"{r.rate:.4f}",
                        f"{r.ci_lo:.4f}", f"{r.ci_hi:.4f}", r.n_sim, r.n_failed])
        return buf.getvalue()

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "PowerTable":
        meta, body = {}, []
        for line in text.splitlines():
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k] = v
            elif line:
                body.append(line)
        reader = csv.DictReader(body)
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {reader.fieldnames}")
        rows = [PowerRow(int(d["N"]), float(d["alpha"]), d["offset_label"], float(d["rate"]),
                         float(d["ci_lo"]), float(d["ci_hi"]), int(d["n_sim"]),
                         int(d["n_failed"])) for d in reader]
        return cls(rows, meta)

    @classmethod
    def read(cls, path) -> "PowerTable":
        with open(path) as fh:
            return cls.from_csv(fh.read())


def power_table(null: ModelSpec, alternatives: Sequence[tuple], sizes: Sequence[int],
                alphas: Sequence[float], n_sim: int, dirichlet: DirichletParams,
                seed: int = DEFAULT_SEED, cfg: ScalingConfig = MC_CONFIG,
                jobs: int = 1) -> PowerTable:
    """Cumulative power for every (alternative, N, alpha) grid point.

    ``alternatives`` holds ``(label, ModelSpec)`` pairs.  All alphas at a
    given (alternative, N) are evaluated on the same replicates.
    """
    if not alternatives or not sizes or not alphas:
        raise ValueError("grids must be non-empty")
    labels = [lab for lab, _ in alternatives]
    if len(set(labels)) != len(labels):
        raise ValueError("alternative labels must be unique")
    crit = {a: critical_value(a, null.dof) for a in alphas}
    rows = []
    for label, alt in alternatives:
        stats = cumulative_x2(null, alt, sizes, n_sim, dirichlet, seed, cfg, jobs)
        for n in sizes:
            for a in alphas:
                est = _rate_from_stats(stats[int(n)], crit[a], "cumulative")
                rows.append(PowerRow(int(n), float(a), label, est.rate, est.ci95[0],
                                     est.ci95[1], n_sim, est.n_failed))
    alpha_desc = np.unique(dirichlet.alpha)
    meta = {
        "seed": seed,
        "dirichlet_alpha": ",".join(f"{v:g}" for v in alpha_desc),
        "model": null.name or "custom",
        "model_hash": null.design.digest(),
        "n_sim": n_sim,
    }
    return PowerTable(rows, meta)
