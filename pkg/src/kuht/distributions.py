"""Samplers, target densities, finite-alphabet pmfs and the Blobs benchmark.

Randomness always comes in through an explicit ``numpy.random.Generator``.
:func:`stream` derives independent generators keyed by integers (trial index,
sample size, ...) so Monte Carlo results do not depend on scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .kernels import Kernel, _parse_params, as_sample


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``seed`` and an integer key path."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return stream(0 if seed is None else seed)


def sample_gaussian(mean, cov, n: int, seed=None) -> np.ndarray:
    """Draw ``n`` rows from N(mean, cov). Raises ValueError for non-SPD ``cov``."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    d = mean.shape[0]
    if cov.shape != (d, d):
        raise ValueError(f"covariance shape {cov.shape} does not match mean of length {d}")
    if not np.allclose(cov, cov.T):
        raise ValueError("covariance is not symmetric")
    if n < 1:
        raise ValueError("n must be at least 1")
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ValueError("covariance is not positive definite") from None
    z = as_rng(seed).standard_normal((n, d))
    return mean + z @ chol.T


# --- Blobs -----------------------------------------------------------------

BLOBS_SPACING = 10.0
BLOBS_CENTERS = np.array(
    [(i * BLOBS_SPACING, j * BLOBS_SPACING) for i in range(3) for j in range(3)]
)


def blobs_correlation(epsilon: float) -> float:
    return (epsilon - 1.0) / (epsilon + 1.0)


def blobs(which: str, epsilon: float = 1.0, n: int = 1, seed=None) -> np.ndarray:
    """Blobs benchmark sample of shape (n, 2).

    ``P`` is an equal-weight mixture of standard 2-D Gaussians centred on a 3x3
    grid with spacing 10. ``Q`` uses the same centres with within-component
    correlation ``(epsilon - 1) / (epsilon + 1)``; ``epsilon`` is ignored for P.
    """
    which = which.upper()
    if which not in ("P", "Q"):
        raise ValueError(f"which must be 'P' or 'Q', got {which!r}")
    if n < 1:
        raise ValueError("n must be at least 1")
    rho = 0.0
    if which == "Q":
        if not epsilon > 1:
            raise ValueError(f"Blobs Q needs epsilon > 1, got {epsilon}")
        rho = blobs_correlation(epsilon)
    rng = as_rng(seed)
    comp = rng.integers(0, 9, size=n)
    z = rng.standard_normal((n, 2))
    # Cholesky factor of [[1, rho], [rho, 1]]
    noise = np.column_stack([z[:, 0], rho * z[:, 0] + math.sqrt(1 - rho * rho) * z[:, 1]])
    return BLOBS_CENTERS[comp] + noise


# --- targets -----------------------------------------------------------------

@dataclass(frozen=True)
class TargetDensity:
    """A differentiable density on R^d known up to normalization.

    ``kernel_mean(kernel, Y)`` returns E_x k(x, Y_i) for each row and
    ``kernel_mean_norm(kernel)`` returns E_{x,x'} k(x, x'); both are optional
    closed forms and raise ``NotImplementedError`` when missing.
    """

    dim: int
    log_density: Callable[[np.ndarray], np.ndarray]
    score: Callable[[np.ndarray], np.ndarray]
    sampler: Callable[[int, np.random.Generator], np.ndarray] | None = None
    embedding: Callable[[Kernel, np.ndarray], np.ndarray] | None = None
    embedding_norm: Callable[[Kernel], float] | None = None
    name: str = "target"
    meta: dict = field(default_factory=dict, compare=False)

    def sample(self, n: int, seed=None) -> np.ndarray:
        if self.sampler is None:
            raise NotImplementedError(f"{self.name} has no sampler")
        if n < 1:
            raise ValueError("n must be at least 1")
        return self.sampler(n, as_rng(seed))

    def kernel_mean(self, kernel: Kernel, Y) -> np.ndarray:
        if self.embedding is None:
            raise NotImplementedError(f"{self.name} has no closed-form kernel integrals")
        return self.embedding(kernel, as_sample(Y))

    def kernel_mean_norm(self, kernel: Kernel) -> float:
        if self.embedding_norm is None:
            raise NotImplementedError(f"{self.name} has no closed-form kernel integrals")
        return self.embedding_norm(kernel)

    def scaled(self, factor: float) -> "TargetDensity":
        """Same target with its unnormalized density multiplied by ``factor``."""
        if not factor > 0:
            raise ValueError("factor must be positive")
        shift = math.log(factor)
        base = self.log_density
        return TargetDensity(
            self.dim, lambda x: base(x) + shift, self.score, self.sampler,
            self.embedding, self.embedding_norm, self.name, dict(self.meta),
        )


def gaussian_target(d: int = 1, mean=0.0, scale: float = 1.0) -> TargetDensity:
    """Isotropic N(mean, scale^2 I_d).

    Kernel integrals are closed-form for Gaussian kernels of any bandwidth:
    E_x k(x, y) = (g / (g + 2 s^2))^{d/2} exp(-||y - mean||^2 / (g + 2 s^2)) and
    E_{x,x'} k(x, x') = (g / (g + 4 s^2))^{d/2}.
    """
    if d < 1:
        raise ValueError("d must be at least 1")
    if not scale > 0:
        raise ValueError("scale must be positive")
    mu = np.broadcast_to(np.asarray(mean, dtype=float), (d,)).copy()
    s2 = float(scale) ** 2

    def log_density(x):
        x = as_sample(x)
        return -0.5 * np.sum((x - mu) ** 2, axis=1) / s2

    def score(x):
        return -(as_sample(x) - mu) / s2

    def sampler(n, rng):
        return mu + scale * rng.standard_normal((n, d))

    def _gauss_only(kernel):
        if kernel.family != "gaussian":
            raise NotImplementedError("closed-form integrals only for the Gaussian kernel")
        return kernel.gamma

    def embedding(kernel, Y):
        g = _gauss_only(kernel)
        if Y.shape[1] != d:
            raise ValueError(f"dimension mismatch: {Y.shape[1]} != {d}")
        sq = np.sum((Y - mu) ** 2, axis=1)
        return (g / (g + 2 * s2)) ** (d / 2) * np.exp(-sq / (g + 2 * s2))

    def embedding_norm(kernel):
        g = _gauss_only(kernel)
        return float((g / (g + 4 * s2)) ** (d / 2))

    name = f"gauss:d={d}" if (not mu.any() and s2 == 1.0) else f"gauss:d={d},mean={mu[0]!r},sd={scale!r}"
    return TargetDensity(d, log_density, score, sampler, embedding, embedding_norm, name,
                         {"mean": mu.tolist(), "sd": float(scale)})


def standard_gaussian_target() -> TargetDensity:
    """N(0, 1) on the real line."""
    return gaussian_target(1)


# --- finite alphabets --------------------------------------------------------

@dataclass(frozen=True)
class DiscretePMF:
    """Probability vector over a finite alphabet.

    Symbols are indexed ``0 .. t-1`` and embedded in R as ``support`` (defaults
    to the indices) whenever a kernel has to be evaluated on them.
    """

    probs: tuple
    support: tuple | None = None

    def __init__(self, probs, support=None):
        p = np.asarray(probs, dtype=float).ravel()
        if p.size == 0:
            raise ValueError("pmf needs at least one symbol")
        if np.any(~np.isfinite(p)) or np.any(p < 0):
            raise ValueError("pmf entries must be finite and nonnegative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"pmf entries sum to {p.sum()!r}, not 1")
        if support is None:
            support = np.arange(p.size, dtype=float)
        s = np.asarray(support, dtype=float).ravel()
        if s.size != p.size:
            raise ValueError("support and probs differ in length")
        object.__setattr__(self, "probs", tuple(p.tolist()))
        object.__setattr__(self, "support", tuple(s.tolist()))

    @property
    def p(self) -> np.ndarray:
        return np.asarray(self.probs)

    @property
    def size(self) -> int:
        return len(self.probs)

    @property
    def points(self) -> np.ndarray:
        return np.asarray(self.support)[:, None]

    def sample(self, n: int, seed=None) -> np.ndarray:
        """Sample as points in R^1 (support values), shape (n, 1)."""
        return self.points[sample_discrete(self, n, seed)]

    def counts(self, n: int, trials: int, seed=None) -> np.ndarray:
        """Symbol counts of ``trials`` independent samples of size ``n``."""
        return as_rng(seed).multinomial(n, self.p, size=trials)

    def kernel_mean(self, kernel: Kernel, Y) -> np.ndarray:
        return kernel.gram(as_sample(Y), self.points) @ self.p

    def kernel_mean_norm(self, kernel: Kernel) -> float:
        return float(self.p @ kernel.gram(self.points) @ self.p)


def bernoulli(p: float) -> DiscretePMF:
    """Bernoulli(p) on symbols {0, 1}."""
    if not 0 <= p <= 1:
        raise ValueError(f"Bernoulli parameter must lie in [0, 1], got {p}")
    return DiscretePMF([1.0 - p, p], [0.0, 1.0])


def sample_discrete(pmf: DiscretePMF, n: int, seed=None) -> np.ndarray:
    """``n`` i.i.d. symbol indices drawn from ``pmf``."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    return as_rng(seed).choice(pmf.size, size=n, p=pmf.p)


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Uniform measure on observed points, stored as distinct atoms and weights."""

    atoms: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_sample(cls, X) -> "EmpiricalMeasure":
        X = as_sample(X)
        atoms, counts = np.unique(X, axis=0, return_counts=True)
        return cls(atoms, counts / X.shape[0])

    @property
    def mass(self) -> float:
        return float(self.weights.sum())


# --- spec strings ------------------------------------------------------------

@dataclass(frozen=True)
class DistSpec:
    """Parsed distribution spec string used by the CLI."""

    text: str
    kind: str
    target: TargetDensity | None = None
    pmf: DiscretePMF | None = None
    epsilon: float | None = None

    def sample(self, n: int, seed=None) -> np.ndarray:
        if self.kind == "blobs":
            if self.epsilon is None:
                return blobs("P", n=n, seed=seed)
            return blobs("Q", self.epsilon, n, seed)
        if self.pmf is not None:
            return self.pmf.sample(n, seed)
        return self.target.sample(n, seed)

    @property
    def null_model(self):
        """Object exposing closed-form kernel integrals, if any."""
        return self.pmf if self.pmf is not None else self.target


def parse_distribution(text: str) -> DistSpec:
    """Parse ``gauss:d=1``, ``blobs:eps=6``, ``bern:p=0.5`` or ``discrete:0.2,0.3,0.5``.

    ``gauss`` also accepts ``mean=`` and ``sd=``; bare ``blobs`` is the P grid.
    """
    kind, _, rest = text.strip().partition(":")
    kind = kind.lower()
    try:
        if kind == "gauss":
            params = _parse_params(rest)
            unknown = set(params) - {"d", "mean", "sd"}
            if unknown:
                raise ValueError(f"unknown parameter(s) {sorted(unknown)}")
            target = gaussian_target(int(params.get("d", 1)), float(params.get("mean", 0.0)),
                                     float(params.get("sd", 1.0)))
            return DistSpec(text, kind, target=target)
        if kind == "blobs":
            params = _parse_params(rest)
            if set(params) - {"eps"}:
                raise ValueError("blobs takes only eps=<float>")
            eps = float(params["eps"]) if "eps" in params else None
            if eps is not None and not eps > 1:
                raise ValueError("blobs eps must exceed 1")
            return DistSpec(text, kind, epsilon=eps)
        if kind == "bern":
            params = _parse_params(rest)
            if set(params) != {"p"}:
                raise ValueError("bern takes exactly p=<float>")
            return DistSpec(text, kind, pmf=bernoulli(float(params["p"])))
        if kind == "discrete":
            probs = [float(v) for v in rest.split(",") if v.strip()]
            return DistSpec(text, kind, pmf=DiscretePMF(probs))
    except (ValueError, KeyError) as err:
        raise ValueError(f"bad distribution spec {text!r}: {err}") from None
    raise ValueError(f"bad distribution spec {text!r}: unknown kind {kind!r}")
