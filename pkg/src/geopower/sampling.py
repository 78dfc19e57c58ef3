"""Reproducible random draws: Dirichlet points, multinomial counts, alternatives.

Every replicate owns an :class:`RngStream`, a (seed, stream_id) pair mapped
onto the key of a Philox counter-based generator.  Distinct keys give
independent streams, so replicates can be produced in any order or on any
worker and still reproduce bit for bit.  A stream is further split into
substreams through the high word of the Philox counter (substream 0 draws
the Dirichlet point; substream ``N`` draws the multinomial sample of size N).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .design import Distribution, ModelSpec
from .errors import DegenerateDraw, DimensionMismatch, NonPositiveInput
from .scaling import ScalingConfig, _single, g_ipf_batch

_U64 = (1 << 64) - 1
MIN_COMPONENT = 1e-12
MAX_RETRIES = 100


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for v in (self.seed, self.stream_id):
            if not 0 <= int(v) <= _U64:
                raise ValueError("seed and stream_id must be unsigned 64-bit integers")

    def generator(self, substream: int = 0) -> np.random.Generator:
        key = (int(self.stream_id) << 64) | int(self.seed)
        counter = np.array([0, 0, 0, int(substream) & _U64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key, counter=counter))


Rng = Union[RngStream, np.random.Generator]


def _gen(rng: Rng, substream: int = 0) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator(substream)
    return rng


@dataclass(frozen=True)
class DirichletParams:
    alpha: np.ndarray

    def __post_init__(self):
        a = np.array(self.alpha, dtype=float).ravel()
        if a.size == 0 or np.any(~(a > 0)):
            raise NonPositiveInput("Dirichlet parameters must be positive")
        a.setflags(write=False)
        object.__setattr__(self, "alpha", a)

    @classmethod
    def symmetric(cls, value: float, n_cells: int) -> "DirichletParams":
        return cls(np.full(n_cells, float(value)))


def gamma_variate(gen: np.random.Generator, shape: float) -> float:
    """Gamma(shape, 1) by Marsaglia-Tsang squeeze/rejection.

    Shapes below one are boosted: ``G(a) = G(a + 1) * U ** (1 / a)``.
    """
    if shape < 1.0:
        return gamma_variate(gen, shape + 1.0) * gen.random() ** (1.0 / shape)
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = gen.standard_normal()
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = gen.random()
        x2 = x * x
        if u < 1.0 - 0.0331 * x2 * x2:
            return d * v
        if math.log(u) < 0.5 * x2 + d * (1.0 - v + math.log(v)):
            return d * v


def _dirichlet(gen: np.random.Generator, alpha: np.ndarray) -> np.ndarray:
    for _ in range(MAX_RETRIES):
        g = np.array([gamma_variate(gen, a) for a in alpha])
        p = g / g.sum()
        if p.min() >= MIN_COMPONENT:
            return p
    raise DegenerateDraw(f"{MAX_RETRIES} Dirichlet draws hit the simplex boundary")


def dirichlet_draw(params: DirichletParams, rng: Rng) -> Distribution:
    """Point of the open simplex: normalized independent gamma variates.

    Draws with a component below 1e-12 are discarded and redrawn.
    """
    return Distribution(_dirichlet(_gen(rng), params.alpha), "probability")


def multinomial_draw(n: int, p, rng: Rng) -> np.ndarray:
    """Counts summing to ``n`` via successive conditional binomial draws."""
    if n < 1 or int(n) != n:
        raise ValueError("sample size must be a positive integer")
    p = np.asarray(getattr(p, "values", p), dtype=float)
    if np.any(p < 0):
        raise NonPositiveInput("cell probabilities must be non-negative")
    gen = _gen(rng)
    counts = np.zeros(p.size, dtype=np.int64)
    left = int(n)
    mass = 1.0
    for i in range(p.size - 1):
        if left == 0:
            break
        prob = min(max(p[i] / mass, 0.0), 1.0) if mass > 0 else 0.0
        counts[i] = gen.binomial(left, prob)
        left -= counts[i]
        mass -= p[i]
    counts[-1] += left
    return counts


def draw_simplex_points(params: DirichletParams, seed: int, stream_ids) -> np.ndarray:
    """Dirichlet point of each replicate stream (substream 0), stacked row-wise."""
    return np.array([_dirichlet(RngStream(seed, int(u)).generator(0), params.alpha)
                     for u in stream_ids]).reshape(len(stream_ids), params.alpha.size)


def project_to_alternative(model: ModelSpec, points, cfg: ScalingConfig = ScalingConfig()):
    """Member of the alternative sharing each point's mean-value parameters."""
    return g_ipf_batch(model.design, model.kernel, points, model.offset, cfg)


def sample_alternatives(model: ModelSpec, params: DirichletParams, seed: int, stream_ids,
                        cfg: ScalingConfig = ScalingConfig()):
    """Batched two-step sampler over replicate streams; returns a ``BatchFit``."""
    if params.alpha.size != model.design.n_cells:
        raise DimensionMismatch("Dirichlet dimension does not match the model")
    return project_to_alternative(model, draw_simplex_points(params, seed, stream_ids), cfg)


def sample_from_alternative(model: ModelSpec, params: DirichletParams, rng: Rng,
                            cfg: ScalingConfig = ScalingConfig()) -> Distribution:
    """Draw ``p`` from the Dirichlet, then return the unique member of the model
    with canonical parameters ``D log xi`` and mean-value parameters of ``p``
    (up to the adjustment factor when there is no overall effect)."""
    if params.alpha.size != model.design.n_cells:
        raise DimensionMismatch("Dirichlet dimension does not match the model")
    p = _dirichlet(_gen(rng), params.alpha)
    fit = _single(project_to_alternative(model, p, cfg), "probability")
    return Distribution(fit.fitted / fit.fitted.sum(), "probability")
