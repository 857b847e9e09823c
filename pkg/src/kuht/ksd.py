"""Kernel Stein discrepancy statistics and one-sample tests.

The Stein kernel is

    h_p(x, y) = s(x).s(y) k(x, y) + s(y).grad_x k(x, y) + s(x).grad_y k(x, y)
                + trace(grad_x grad_y k(x, y))

with ``s`` the score of the target. Only the score enters, so the target may
be unnormalized. For N(0, 1) and the Gaussian kernel with gamma = 2 this is
``(x y + 1 - 2 (x - y)^2) exp(-(x - y)^2 / 2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import TargetDensity, as_rng
from .kernels import Kernel, as_sample
from .mmd import TestReport, ThresholdSpec, decide, resampling_quantile

ASYMPTOTIC_NOTE = "level guarantee is asymptotic (m -> infinity) only"


@dataclass(frozen=True)
class SteinKernelCtx:
    target: TargetDensity
    kernel: Kernel

    def __post_init__(self):
        if not self.kernel.differentiable:
            raise ValueError(f"{self.kernel.family} kernel is not supported for KSD "
                             "(needs a twice differentiable kernel)")

    @property
    def dim(self) -> int:
        return self.target.dim


# row-block size (in entries) for Stein kernel sums over large samples
_BLOCK_ENTRIES = 2_000_000


def _scores(ctx: SteinKernelCtx, Y: np.ndarray) -> np.ndarray:
    if Y.shape[1] != ctx.dim:
        raise ValueError(f"dimension mismatch: {Y.shape[1]} != {ctx.dim}")
    return np.asarray(ctx.target.score(Y), dtype=float).reshape(Y.shape)


def _stein_block(ctx, A, SA, B, SB) -> np.ndarray:
    K, coeff, trace = ctx.kernel.stein_parts(A, B)
    # grad_x k(a_i, b_j) = coeff_ij (a_i - b_j) and grad_y k = -grad_x k, so the
    # two mixed terms combine into coeff_ij (s_j - s_i).(a_i - b_j)
    cross = (A @ SB.T - np.sum(SB * B, axis=1)[None, :]
             - np.sum(SA * A, axis=1)[:, None] + SA @ B.T)
    return (SA @ SB.T) * K + coeff * cross + trace


def stein_gram(ctx: SteinKernelCtx, Y) -> np.ndarray:
    """Matrix of h_p(Y_i, Y_j)."""
    Y = as_sample(Y, "Y")
    S = _scores(ctx, Y)
    return _stein_block(ctx, Y, S, Y, S)


def _stein_sums(ctx: SteinKernelCtx, Y) -> tuple[float, float, int]:
    """Total and diagonal sums of the Stein Gram matrix without storing it."""
    Y = as_sample(Y, "Y")
    S = _scores(ctx, Y)
    m = Y.shape[0]
    rows = max(1, _BLOCK_ENTRIES // m)
    total = diag = 0.0
    for start in range(0, m, rows):
        sl = slice(start, start + rows)
        H = _stein_block(ctx, Y[sl], S[sl], Y, S)
        total += H.sum()
        diag += np.trace(H, offset=start)
    return float(total), float(diag), m


def stein_pairs(ctx: SteinKernelCtx, X, Y) -> np.ndarray:
    """h_p(X_i, Y_i) for matching rows."""
    X, Y = as_sample(X, "X"), as_sample(Y, "Y")
    SX, SY = _scores(ctx, X), _scores(ctx, Y)
    K, coeff, trace = ctx.kernel.stein_parts_paired(X, Y)
    mixed = np.sum((SY - SX) * (X - Y), axis=1)
    return np.sum(SX * SY, axis=1) * K + coeff * mixed + trace


def h_p(ctx: SteinKernelCtx, x, y) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise ValueError("points must share dimension")
    return float(stein_gram(ctx, np.vstack([x, y]))[0, 1])


def ksd2_v(ctx: SteinKernelCtx, Y) -> float:
    total, _, m = _stein_sums(ctx, Y)
    return total / m ** 2


def ksd2_u(ctx: SteinKernelCtx, Y) -> float:
    total, diag, m = _stein_sums(ctx, Y)
    if m < 2:
        raise ValueError("U-statistic needs at least two points")
    return (total - diag) / (m * (m - 1))


def threshold_ksd(m: int, alpha: float) -> float:
    """Vanishing threshold sqrt(1/m) (1 + sqrt(ln(1/alpha))) for the V-statistic."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if m < 1:
        raise ValueError("m must be at least 1")
    return math.sqrt(1.0 / m) * (1.0 + math.sqrt(math.log(1.0 / alpha)))


def wild_bootstrap_statistics(H: np.ndarray, B: int, rng: np.random.Generator,
                              variant: str = "v") -> np.ndarray:
    """Replicates of the statistic with centred Rademacher multipliers."""
    m = H.shape[0]
    W = rng.choice([-1.0, 1.0], size=(B, m))
    W -= W.mean(axis=1, keepdims=True)
    if variant == "u":
        H = H - np.diag(np.diag(H))
        return np.einsum("bi,bi->b", W @ H, W) / (m * (m - 1))
    return np.einsum("bi,bi->b", W @ H, W) / m ** 2


def threshold_ksd_wild_bootstrap(ctx: SteinKernelCtx, Y, B: int = 500, alpha: float = 0.05,
                                 seed=None, variant: str = "v") -> float:
    if B < 100:
        raise ValueError("wild bootstrap needs B >= 100")
    H = stein_gram(ctx, Y)
    if H.shape[0] < 2:
        raise ValueError("wild bootstrap needs at least two points")
    return resampling_quantile(wild_bootstrap_statistics(H, B, as_rng(seed), variant), alpha)


def run_ksd_test(ctx: SteinKernelCtx, Y, spec: ThresholdSpec | None = None,
                 variant: str = "v", hp: float | None = None,
                 seed: int | None = 0) -> TestReport:
    """KSD goodness-of-fit test.

    ``v`` compares the V-statistic with ``threshold_ksd``; ``u`` compares the
    U-statistic with ``threshold_ksd + hp / m`` and so needs a bound ``hp`` on
    the Stein kernel whenever the distribution-free threshold is involved.
    """
    spec = spec or ThresholdSpec()
    if variant not in ("v", "u"):
        raise ValueError("variant must be 'v' or 'u'")
    if variant == "u" and spec.method != "perm" and hp is None:
        raise ValueError("the U-statistic with a distribution-free threshold needs hp")
    H = stein_gram(ctx, Y)
    m = H.shape[0]
    if variant == "v":
        statistic = float(H.mean())
        df = threshold_ksd(m, spec.alpha)
    else:
        if m < 2:
            raise ValueError("U-statistic needs at least two points")
        statistic = float((H.sum() - np.trace(H)) / (m * (m - 1)))
        df = threshold_ksd(m, spec.alpha) + (hp / m if hp is not None else math.inf)
    details = {"m": m, "kernel": ctx.kernel.spec, "target": ctx.target.name,
               "variant": variant, "df_threshold": df, "note": ASYMPTOTIC_NOTE}
    if hp is not None:
        details["hp"] = hp
    threshold = df
    if spec.method != "df":
        wild = resampling_quantile(wild_bootstrap_statistics(H, spec.B, as_rng(seed), variant),
                                   spec.alpha)
        details["resampling_threshold"] = wild
        threshold = wild if spec.method == "perm" else min(df, wild)
    return TestReport(statistic, threshold, decide(statistic, threshold), spec.alpha,
                      spec.label, "ksd", seed, details)
