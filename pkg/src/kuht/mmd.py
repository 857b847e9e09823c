"""MMD statistics, thresholds and level-alpha tests.

Statistic conventions
---------------------
The biased estimates are plug-in V-statistics; the tests compare their square
root, floored at zero, with the distribution-free thresholds
``gamma_m = sqrt(2K/m) (1 + sqrt(ln(1/alpha)))`` (one sample) and
``gamma_{n,m} = 2 sqrt(K/n) + 2 sqrt(K/m) + sqrt(-2 ln(alpha/2) (K/n + K/m))``
(two samples). The unbiased statistics are compared with ``gamma^2`` plus the
diagonal correction ``K/m`` (and ``K/n``). Equality with the threshold accepts.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .distributions import as_rng
from .kernels import Kernel, _check_pair, as_sample

ACCEPT = "accept_h0"
REJECT = "reject_h0"

VARIANTS = ("biased", "unbiased")

# block size (in kernel entries) for Gram sums that never materialize the matrix
_BLOCK_ENTRIES = 4_000_000


@dataclass(frozen=True)
class MmdStat:
    value: float
    variant: str
    n: int | None
    m: int
    kernel: Kernel

    def __float__(self):
        return self.value


@dataclass(frozen=True)
class ThresholdSpec:
    """How the rejection threshold is obtained.

    ``df`` is the distribution-free bound, ``perm`` a resampling threshold
    (permutation, Monte Carlo or wild bootstrap depending on the test) from
    ``B`` replicates, and ``min`` the smaller of the two.
    """

    method: str = "df"
    B: int = 500
    alpha: float = 0.05

    def __post_init__(self):
        if self.method not in ("df", "perm", "min"):
            raise ValueError(f"unknown threshold method {self.method!r}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.method != "df" and self.B < 100:
            raise ValueError(f"resampling thresholds need B >= 100, got {self.B}")

    @property
    def label(self) -> str:
        return "df" if self.method == "df" else f"{self.method}:B={self.B}"


def parse_threshold(text: str, alpha: float = 0.05) -> ThresholdSpec:
    """Parse ``df``, ``perm:B=500``, ``min:B=500``; ``wild`` and ``mc`` alias ``perm``."""
    head, _, rest = text.strip().partition(":")
    head = head.lower()
    head = {"wild": "perm", "mc": "perm"}.get(head, head)
    if head == "df":
        if rest:
            raise ValueError(f"bad threshold spec {text!r}: df takes no parameters")
        return ThresholdSpec("df", alpha=alpha)
    if head in ("perm", "min"):
        B = 500
        if rest:
            key, sep, value = rest.partition("=")
            if key.strip() != "B" or not sep:
                raise ValueError(f"bad threshold spec {text!r}: expected B=<int>")
            B = int(value)
        return ThresholdSpec(head, B=B, alpha=alpha)
    raise ValueError(f"bad threshold spec {text!r}")


@dataclass
class TestReport:
    """Outcome of one test: ``decision`` is reject iff ``statistic > threshold``."""

    __test__ = False  # not a pytest class

    statistic: float
    threshold: float
    decision: str
    alpha: float
    method: str
    test: str
    seed: int | None = None
    details: dict = field(default_factory=dict)

    @property
    def rejected(self) -> bool:
        return self.decision == REJECT

    def to_dict(self) -> dict:
        return asdict(self)


def decide(statistic: float, threshold: float) -> str:
    return REJECT if statistic > threshold else ACCEPT


# --- Gram sums ---------------------------------------------------------------

def _gram_sum(kernel: Kernel, X: np.ndarray, Y: np.ndarray | None = None) -> float:
    """Sum of all kernel entries, computed in row blocks."""
    other = X if Y is None else Y
    rows = max(1, _BLOCK_ENTRIES // other.shape[0])
    total = 0.0
    for start in range(0, X.shape[0], rows):
        stop = start + rows
        if Y is None:
            # symmetric: diagonal block once, the strip to its right twice
            total += kernel.gram(X[start:stop]).sum()
            if stop < X.shape[0]:
                total += 2.0 * kernel.gram(X[start:stop], X[stop:]).sum()
        else:
            total += kernel.gram(X[start:stop], other).sum()
    return float(total)


def _diag_sum(kernel: Kernel, X: np.ndarray) -> float:
    # translation-invariant kernels: k(x, x) = K for every x
    return kernel.bound * X.shape[0]


def mmd2_biased_two_sample(X, Y, kernel: Kernel) -> MmdStat:
    X, Y = _check_pair(X, Y)
    n, m = X.shape[0], Y.shape[0]
    value = (_gram_sum(kernel, X) / n ** 2 + _gram_sum(kernel, Y) / m ** 2
             - 2.0 * _gram_sum(kernel, X, Y) / (n * m))
    return MmdStat(float(value), "biased_two_sample", n, m, kernel)


def mmd2_unbiased_two_sample(X, Y, kernel: Kernel) -> MmdStat:
    X, Y = _check_pair(X, Y)
    n, m = X.shape[0], Y.shape[0]
    if n < 2 or m < 2:
        raise ValueError("unbiased statistic needs at least two points per sample")
    sxx = _gram_sum(kernel, X) - _diag_sum(kernel, X)
    syy = _gram_sum(kernel, Y) - _diag_sum(kernel, Y)
    value = sxx / (n * (n - 1)) + syy / (m * (m - 1)) - 2.0 * _gram_sum(kernel, X, Y) / (n * m)
    return MmdStat(float(value), "unbiased_two_sample", n, m, kernel)


def mmd2_biased_one_sample(target, Y, kernel: Kernel) -> MmdStat:
    """Plug-in statistic against a null with closed-form kernel integrals."""
    Y = as_sample(Y, "Y")
    m = Y.shape[0]
    value = (target.kernel_mean_norm(kernel) + _gram_sum(kernel, Y) / m ** 2
             - 2.0 * float(np.mean(target.kernel_mean(kernel, Y))))
    return MmdStat(float(value), "biased_one_sample", None, m, kernel)


def mmd2_unbiased_one_sample(target, Y, kernel: Kernel) -> MmdStat:
    Y = as_sample(Y, "Y")
    m = Y.shape[0]
    if m < 2:
        raise ValueError("unbiased statistic needs at least two points")
    syy = _gram_sum(kernel, Y) - _diag_sum(kernel, Y)
    value = (target.kernel_mean_norm(kernel) + syy / (m * (m - 1))
             - 2.0 * float(np.mean(target.kernel_mean(kernel, Y))))
    return MmdStat(float(value), "unbiased_one_sample", None, m, kernel)


def root(value: float) -> float:
    """Square root with negative round-off floored at zero."""
    return math.sqrt(max(value, 0.0))


# --- thresholds --------------------------------------------------------------

def _check_alpha(alpha):
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")


def threshold_one_sample(K: float, m: int, alpha: float) -> float:
    """Distribution-free threshold for the plug-in MMD (not squared)."""
    _check_alpha(alpha)
    if not K > 0 or m < 1:
        raise ValueError("need K > 0 and m >= 1")
    return math.sqrt(2.0 * K / m) * (1.0 + math.sqrt(math.log(1.0 / alpha)))


def threshold_two_sample(K: float, n: int, m: int, alpha: float) -> float:
    """Distribution-free threshold for the two-sample MMD (not squared)."""
    _check_alpha(alpha)
    if not K > 0 or n < 1 or m < 1:
        raise ValueError("need K > 0 and n, m >= 1")
    return (2.0 * math.sqrt(K / n) + 2.0 * math.sqrt(K / m)
            + math.sqrt(-2.0 * math.log(alpha / 2.0) * (K / m + K / n)))


def order_statistic_index(B: int, alpha: float) -> int:
    """1-based rank ceil((1 - alpha)(B + 1)) used for resampling thresholds."""
    # guard the ceil against float noise such as 0.95 * 101 = 95.95000000000002
    return math.ceil(round((1.0 - alpha) * (B + 1), 9))


def resampling_quantile(values, alpha: float) -> float:
    """The ceil((1 - alpha)(B + 1))-th smallest replicate, or +inf past B."""
    values = np.sort(np.asarray(values, dtype=float))
    k = order_statistic_index(values.size, alpha)
    if k > values.size:
        return math.inf
    return float(values[k - 1])


def _canonical_order(Z: np.ndarray) -> np.ndarray:
    return Z[np.lexsort(Z.T[::-1])]


def permutation_masks(rng: np.random.Generator, B: int, N: int, n: int) -> np.ndarray:
    """``B`` random 0/1 rows, each marking ``n`` of ``N`` pooled points as the X block."""
    idx = np.argsort(rng.random((B, N)), axis=1)
    S = np.zeros((B, N))
    np.put_along_axis(S, idx[:, :n], 1.0, axis=1)
    return S


def permutation_statistics(gram: np.ndarray, masks: np.ndarray, variant: str) -> np.ndarray:
    """Squared statistics of the relabelings in ``masks`` of a pooled Gram matrix."""
    N = gram.shape[0]
    n = int(round(masks[0].sum()))
    m = N - n
    if variant == "biased":
        A = masks / n - (1.0 - masks) / m
        return np.einsum("bi,bi->b", A @ gram, A)
    K0 = gram - np.diag(np.diag(gram))
    total = K0.sum()
    sx1 = masks @ K0.sum(axis=1)
    sxx = np.einsum("bi,bi->b", masks @ K0, masks)
    syy = total - 2.0 * sx1 + sxx
    sxy = sx1 - sxx
    return sxx / (n * (n - 1)) + syy / (m * (m - 1)) - 2.0 * sxy / (n * m)


def threshold_permutation(X, Y, kernel: Kernel, variant: str = "biased", B: int = 500,
                          alpha: float = 0.05, seed=None) -> float:
    """Permutation threshold for the squared statistic of ``variant``.

    The pooled sample is put in lexicographic order first, so the threshold
    depends only on the pooled multiset, the split sizes and the seed.
    """
    X, Y = _check_pair(X, Y)
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    if B < 100:
        raise ValueError("permutation thresholds need B >= 100")
    _check_alpha(alpha)
    n, m = X.shape[0], Y.shape[0]
    if n + m < 4:
        raise ValueError("pooled sample needs at least 4 points")
    if variant == "unbiased" and (n < 2 or m < 2):
        raise ValueError("unbiased statistic needs at least two points per sample")
    Z = _canonical_order(np.vstack([X, Y]))
    masks = permutation_masks(as_rng(seed), B, n + m, n)
    stats = permutation_statistics(kernel.gram(Z), masks, variant)
    return resampling_quantile(stats, alpha)


# --- tests -------------------------------------------------------------------

def run_two_sample_test(X, Y, kernel: Kernel, spec: ThresholdSpec | None = None,
                        variant: str = "biased", seed: int | None = 0) -> TestReport:
    """Two-sample MMD test.

    ``biased`` compares the MMD of the empirical measures with gamma_{n,m};
    ``unbiased`` compares d_u^2 with gamma_{n,m}^2 + K/n + K/m. Resampling
    thresholds are permutation quantiles of the same statistic.
    """
    spec = spec or ThresholdSpec()
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    X, Y = _check_pair(X, Y)
    n, m = X.shape[0], Y.shape[0]
    K = kernel.bound
    gamma = threshold_two_sample(K, n, m, spec.alpha)
    if variant == "biased":
        raw = mmd2_biased_two_sample(X, Y, kernel).value
        statistic = root(raw)
        df = gamma
    else:
        raw = mmd2_unbiased_two_sample(X, Y, kernel).value
        statistic = raw
        df = gamma ** 2 + K / n + K / m
    details = {"n": n, "m": m, "kernel": kernel.spec, "variant": variant,
               "squared_statistic": raw, "df_threshold": df}
    threshold = df
    if spec.method != "df":
        perm = threshold_permutation(X, Y, kernel, variant, spec.B, spec.alpha, seed)
        if variant == "biased":
            perm = root(perm) if math.isfinite(perm) else perm
        details["resampling_threshold"] = perm
        threshold = perm if spec.method == "perm" else min(df, perm)
    return TestReport(statistic, threshold, decide(statistic, threshold), spec.alpha,
                      spec.label, "two_sample_mmd", seed, details)


def run_one_sample_test(target, Y, kernel: Kernel, spec: ThresholdSpec | None = None,
                        variant: str = "biased", seed: int | None = 0) -> TestReport:
    """Plug-in one-sample MMD test against a null with closed-form integrals.

    Resampling thresholds simulate the null statistic on ``B`` samples drawn
    from ``target`` (requires a sampler).
    """
    spec = spec or ThresholdSpec()
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    Y = as_sample(Y, "Y")
    m = Y.shape[0]
    K = kernel.bound
    gamma = threshold_one_sample(K, m, spec.alpha)
    stat_fn = mmd2_biased_one_sample if variant == "biased" else mmd2_unbiased_one_sample
    raw = stat_fn(target, Y, kernel).value
    if variant == "biased":
        statistic, df = root(raw), gamma
    else:
        statistic, df = raw, gamma ** 2 + K / m
    details = {"m": m, "kernel": kernel.spec, "variant": variant,
               "squared_statistic": raw, "df_threshold": df}
    threshold = df
    if spec.method != "df":
        rng = as_rng(seed)
        sims = np.array([stat_fn(target, target.sample(m, rng), kernel).value
                         for _ in range(spec.B)])
        mc = resampling_quantile(sims, spec.alpha)
        if variant == "biased" and math.isfinite(mc):
            mc = root(mc)
        details["resampling_threshold"] = mc
        threshold = mc if spec.method == "perm" else min(df, mc)
    return TestReport(statistic, threshold, decide(statistic, threshold), spec.alpha,
                      spec.label, "one_sample_mmd", seed, details)


def default_draws(m: int) -> int:
    return 10 * m


def run_one_sample_via_two_sample(target, Y, kernel: Kernel, n_draws: int | None = None,
                                  spec: ThresholdSpec | None = None, variant: str = "biased",
                                  seed: int | None = 0) -> TestReport:
    """Draw ``n_draws`` points from ``target`` and run the two-sample test."""
    Y = as_sample(Y, "Y")
    m = Y.shape[0]
    n = default_draws(m) if n_draws is None else int(n_draws)
    if n < 1:
        raise ValueError("n_draws must be at least 1")
    rng = as_rng(seed)
    X = target.sample(n, rng)
    # permutation replicates get their own stream, independent of the draws
    perm_seed = rng.integers(0, 2 ** 63)
    report = run_two_sample_test(X, Y, kernel, spec, variant, int(perm_seed))
    report.test = "one_sample_via_two_sample_mmd"
    report.seed = seed
    report.details["n_draws"] = n
    return report
