"""Divergences, the two-sample exponent D*, and type-II exponent estimation.

Everything is in nats. ``dstar`` uses the closed form on finite alphabets,

    D*(P, Q, c) = min_R c D(R||P) + (1 - c) D(R||Q) = -ln sum_x P(x)^c Q(x)^(1-c),

attained by the geometric mixture R* proportional to P^c Q^(1-c).
:func:`dstar_by_minimization` recomputes it by direct search over the simplex.
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .distributions import DiscretePMF, stream
from .kernels import Kernel
from .ksd import SteinKernelCtx, ksd2_v, threshold_ksd
from .mmd import (mmd2_biased_one_sample, mmd2_biased_two_sample, mmd2_unbiased_one_sample,
                  mmd2_unbiased_two_sample, root, threshold_one_sample, threshold_two_sample)

CHUNK = 10_000  # trials per RNG stream; fixed so results do not depend on thread count


class EstimationError(ValueError):
    """Raised when no sample size produced a single type-II error."""


def _probs(P) -> np.ndarray:
    return P.p if isinstance(P, DiscretePMF) else DiscretePMF(P).p


def _pair(P, Q):
    p, q = _probs(P), _probs(Q)
    if p.size != q.size:
        raise ValueError(f"alphabet mismatch: {p.size} != {q.size}")
    return p, q


def kld(P, Q) -> float:
    """D(P||Q) in nats; ``math.inf`` when P is not absolutely continuous w.r.t. Q."""
    p, q = _pair(P, Q)
    mask = p > 0
    if np.any(q[mask] == 0):
        return math.inf
    return max(float(np.sum(p[mask] * np.log(p[mask] / q[mask]))), 0.0)


def _check_c(c):
    if not 0 < c < 1:
        raise ValueError(f"c must lie in (0, 1), got {c}")


def dstar(P, Q, c: float) -> float:
    _check_c(c)
    p, q = _pair(P, Q)
    z = float(np.sum(p ** c * q ** (1 - c)))
    if z <= 0:
        return math.inf
    return max(-math.log(z), 0.0)


def geometric_mixture(P, Q, c: float) -> DiscretePMF:
    """Minimizer R* of c D(R||P) + (1 - c) D(R||Q)."""
    _check_c(c)
    p, q = _pair(P, Q)
    w = p ** c * q ** (1 - c)
    if w.sum() <= 0:
        raise ValueError("P and Q have disjoint supports; the mixture is degenerate")
    return DiscretePMF(w / w.sum(), P.support if isinstance(P, DiscretePMF) else None)


def _objective(r, p, q, c):
    mask = r > 0
    return float(np.sum(r[mask] * (np.log(r[mask]) - c * np.log(p[mask])
                                   - (1 - c) * np.log(q[mask]))))


def dstar_by_minimization(P, Q, c: float, grid: int = 20) -> float:
    """D* by grid search over the simplex followed by local refinement."""
    _check_c(c)
    p, q = _pair(P, Q)
    common = (p > 0) & (q > 0)
    if not common.any():
        return math.inf
    p, q = p[common], q[common]
    t = p.size
    if t == 1:
        return _objective(np.ones(1), p, q, c)
    best, best_r = math.inf, None
    # compositions of `grid` into t parts enumerate a regular simplex grid
    for cuts in itertools.combinations(range(grid + t - 1), t - 1):
        parts = np.diff(np.concatenate([[-1], cuts, [grid + t - 1]])) - 1
        r = parts / grid
        val = _objective(r, p, q, c)
        if val < best:
            best, best_r = val, r

    def f(theta):
        z = np.concatenate([theta, [0.0]])
        r = np.exp(z - z.max())
        return _objective(r / r.sum(), p, q, c)

    # half-count smoothing keeps empty grid cells away from the flat region of the softmax
    start = np.log(best_r * grid + 0.5)
    res = minimize(f, start[:-1] - start[-1], method="BFGS", options={"gtol": 1e-12})
    return max(min(best, float(res.fun)), 0.0)


# --- test procedures for the exponent harness --------------------------------

def _is_discrete(*models) -> bool:
    return all(isinstance(mod, DiscretePMF) for mod in models)


def _counts(model: DiscretePMF, n, trials, rng):
    return rng.multinomial(n, model.p, size=trials).astype(float)


@dataclass(frozen=True)
class OneSampleMMD:
    """Plug-in MMD test with the distribution-free threshold."""

    kernel: Kernel
    alpha: float = 0.05
    variant: str = "biased"
    name: str = "one-mmd"

    def null_size(self, m: int) -> int:
        return 0

    def accepts(self, P, Q, m: int, trials: int, rng) -> int:
        K = self.kernel.bound
        gamma = threshold_one_sample(K, m, self.alpha)
        if _is_discrete(P, Q) and P.support == Q.support:
            G = self.kernel.gram(P.points)
            p = P.p
            cy = _counts(Q, m, trials, rng)
            if self.variant == "biased":
                diff = p[None, :] - cy / m
                stat = np.einsum("ti,ij,tj->t", diff, G, diff)
                return int(np.sum(np.sqrt(np.maximum(stat, 0.0)) <= gamma))
            syy = np.einsum("ti,ij,tj->t", cy, G, cy) - K * m
            stat = p @ G @ p + syy / (m * (m - 1)) - 2.0 * (cy @ G @ p) / m
            return int(np.sum(stat <= gamma ** 2 + K / m))
        accepted = 0
        for _ in range(trials):
            Y = Q.sample(m, rng)
            if self.variant == "biased":
                accepted += root(mmd2_biased_one_sample(P, Y, self.kernel).value) <= gamma
            else:
                accepted += (mmd2_unbiased_one_sample(P, Y, self.kernel).value
                             <= gamma ** 2 + K / m)
        return int(accepted)


@dataclass(frozen=True)
class TwoSampleMMD:
    """Two-sample MMD test with ``n = ratio * m`` null draws."""

    kernel: Kernel
    alpha: float = 0.05
    variant: str = "biased"
    ratio: float = 1.0
    name: str = "two-mmd"

    def null_size(self, m: int) -> int:
        return max(1, int(round(self.ratio * m)))

    def accepts(self, P, Q, m: int, trials: int, rng) -> int:
        K = self.kernel.bound
        n = self.null_size(m)
        gamma = threshold_two_sample(K, n, m, self.alpha)
        if _is_discrete(P, Q) and P.support == Q.support:
            G = self.kernel.gram(P.points)
            cx = _counts(P, n, trials, rng)
            cy = _counts(Q, m, trials, rng)
            if self.variant == "biased":
                diff = cx / n - cy / m
                stat = np.einsum("ti,ij,tj->t", diff, G, diff)
                return int(np.sum(np.sqrt(np.maximum(stat, 0.0)) <= gamma))
            sxx = np.einsum("ti,ij,tj->t", cx, G, cx) - K * n
            syy = np.einsum("ti,ij,tj->t", cy, G, cy) - K * m
            sxy = np.einsum("ti,ij,tj->t", cx, G, cy)
            stat = sxx / (n * (n - 1)) + syy / (m * (m - 1)) - 2.0 * sxy / (n * m)
            return int(np.sum(stat <= gamma ** 2 + K / n + K / m))
        accepted = 0
        for _ in range(trials):
            X = P.sample(n, rng)
            Y = Q.sample(m, rng)
            if self.variant == "biased":
                accepted += root(mmd2_biased_two_sample(X, Y, self.kernel).value) <= gamma
            else:
                accepted += (mmd2_unbiased_two_sample(X, Y, self.kernel).value
                             <= gamma ** 2 + K / n + K / m)
        return int(accepted)


@dataclass(frozen=True)
class KSDTest:
    """KSD V-statistic test with the vanishing threshold; P must be a target density."""

    kernel: Kernel
    alpha: float = 0.05
    name: str = "ksd"

    def null_size(self, m: int) -> int:
        return 0

    def accepts(self, P, Q, m: int, trials: int, rng) -> int:
        if isinstance(P, DiscretePMF):
            raise ValueError("KSD needs a differentiable target density for P")
        ctx = SteinKernelCtx(P, self.kernel)
        gamma = threshold_ksd(m, self.alpha)
        return int(sum(ksd2_v(ctx, Q.sample(m, rng)) <= gamma for _ in range(trials)))


# --- harness -------------------------------------------------------------------

@dataclass
class ExponentEstimate:
    sizes: list
    normalized_sizes: list
    beta_hat: list
    se: list
    censored: list
    trials: int
    normalizer: str
    slope: float
    slope_se: float
    fit_sizes: list = field(default_factory=list)

    def minus_log_beta_over_size(self) -> list:
        return [(-math.log(b) / s if b > 0 else math.inf)
                for b, s in zip(self.beta_hat, self.normalized_sizes)]


def terminal_slope(x, beta, se, points: int = 3):
    """Least-squares slope of -ln beta against x over the last ``points`` values.

    Returns ``(slope, slope_se)``, propagating binomial errors with the delta
    method; NaN when fewer than two points are available.
    """
    x = np.asarray(x, dtype=float)[-points:]
    beta = np.asarray(beta, dtype=float)[-points:]
    se = np.asarray(se, dtype=float)[-points:]
    if x.size < 2:
        return math.nan, math.nan
    y = -np.log(beta)
    xc = x - x.mean()
    w = xc / np.sum(xc ** 2)
    slope = float(w @ y)
    slope_se = float(math.sqrt(np.sum((w * se / beta) ** 2)))
    return slope, slope_se


def _resolve_threads(threads: int) -> int:
    if threads == 0:
        return os.cpu_count() or 1
    return max(1, threads)


def estimate_type2_exponent(test, P, Q, sizes, trials: int, normalizer: str = "m",
                            seed: int = 0, threads: int = 1) -> ExponentEstimate:
    """Monte Carlo estimate of beta_m and of its terminal exponential decay rate.

    ``P`` defines the null (closed-form integrals, a sampler or a score,
    depending on ``test``); alternative samples of size m come from ``Q``.
    Every (size, chunk) pair has its own RNG stream, so the counts are the
    same for any ``threads``.
    """
    sizes = [int(s) for s in sizes]
    if not sizes or any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("sizes must be non-empty and strictly increasing")
    if trials < 1000:
        raise ValueError("trials must be at least 1000")
    if normalizer not in ("m", "n_plus_m"):
        raise ValueError("normalizer must be 'm' or 'n_plus_m'")
    jobs = [(i, c, min(CHUNK, trials - c * CHUNK))
            for i in range(len(sizes)) for c in range(math.ceil(trials / CHUNK))]

    def run(job):
        i, c, count = job
        return test.accepts(P, Q, sizes[i], count, stream(seed, i, c))

    with ThreadPoolExecutor(max_workers=_resolve_threads(threads)) as pool:
        results = list(pool.map(run, jobs))
    accepted = [0] * len(sizes)
    for (i, _, _), a in zip(jobs, results):
        accepted[i] += a

    beta = [a / trials for a in accepted]
    se = [math.sqrt(b * (1 - b) / trials) for b in beta]
    norm = [s + test.null_size(s) if normalizer == "n_plus_m" else s for s in sizes]
    censored = [b == 0 for b in beta]
    keep = [i for i, cen in enumerate(censored) if not cen]
    if not keep:
        raise EstimationError("every size censored (no type-II errors observed); "
                              "use smaller sizes or closer distributions")
    fit = keep[-3:]
    slope, slope_se = terminal_slope([norm[i] for i in fit], [beta[i] for i in fit],
                                     [se[i] for i in fit])
    return ExponentEstimate(sizes, norm, beta, se, censored, trials, normalizer,
                            slope, slope_se, [sizes[i] for i in fit])
