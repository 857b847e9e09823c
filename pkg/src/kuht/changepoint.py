"""Off-line single change-point detection with a maximum-partition MMD scan.

For every split ``i`` in ``[a_n, b_n]`` the sequence is cut into
``z_1..z_i`` and ``z_{i+1}..z_n`` and the MMD of the two empirical measures
is computed. A change is declared when the largest value exceeds

    gamma_n = 2 sqrt(K/a_n) + 2 sqrt(K/(n - b_n)) + sqrt(2 K n ln(2n/alpha) / c_n),
    c_n = min(a_n (n - a_n), b_n (n - b_n)),

and the change index is estimated by the (first) argmax.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import Kernel, as_sample

NO_CHANGE = "no_change"
CHANGE = "change"


@dataclass(frozen=True)
class ScanConfig:
    u: float
    v: float
    alpha: float
    kernel: Kernel
    seed: int | None = None

    def __post_init__(self):
        if not 0 < self.u < self.v < 1:
            raise ValueError(f"need 0 < u < v < 1, got u={self.u}, v={self.v}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")

    def bounds(self, n: int) -> tuple[int, int]:
        """Search interval ``(ceil(u n), floor(v n))``; raises if it is not inside [2, n-2]."""
        a = math.ceil(round(self.u * n, 9))
        b = math.floor(round(self.v * n, 9))
        if a < 2 or b > n - 2 or a >= b:
            raise ValueError(f"sequence of length {n} too short for u={self.u}, v={self.v}: "
                             f"search interval [{a}, {b}] must satisfy 2 <= a < b <= n-2")
        return a, b


@dataclass
class ScanResult:
    decision: str
    statistic: float
    threshold: float
    index_hat: int | None
    a_n: int
    b_n: int
    curve: list = field(default_factory=list)

    @property
    def changed(self) -> bool:
        return self.decision == CHANGE

    def to_dict(self) -> dict:
        return {"decision": self.decision, "statistic": self.statistic,
                "threshold": self.threshold, "index_hat": self.index_hat,
                "a_n": self.a_n, "b_n": self.b_n,
                "curve": [{"index": self.a_n + j, "mmd": v} for j, v in enumerate(self.curve)]}


def scan_threshold(K: float, n: int, a_n: int, b_n: int, alpha: float) -> float:
    if not 2 <= a_n < b_n <= n - 2:
        raise ValueError(f"need 2 <= a_n < b_n <= n - 2, got a_n={a_n}, b_n={b_n}, n={n}")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    c_n = min(a_n * (n - a_n), b_n * (n - b_n))
    return (2.0 * math.sqrt(K / a_n) + 2.0 * math.sqrt(K / (n - b_n))
            + math.sqrt(2.0 * K * n * math.log(2.0 * n / alpha) / c_n))


def scan_curve(Z, kernel: Kernel, a_n: int, b_n: int) -> np.ndarray:
    """MMD between the first i and last n - i points for i = a_n..b_n.

    Block sums come from a two-dimensional prefix sum of the Gram matrix, so
    the whole curve costs O(n^2).
    """
    Z = as_sample(Z, "Z")
    n = Z.shape[0]
    G = kernel.gram(Z)
    prefix = np.cumsum(np.cumsum(G, axis=0), axis=1)
    row_prefix = np.cumsum(G.sum(axis=1))
    total = row_prefix[-1]
    i = np.arange(a_n, b_n + 1)
    left = prefix[i - 1, i - 1]               # sum over the i x i leading block
    cross = row_prefix[i - 1] - left          # sum over rows < i, columns >= i
    right = total - left - 2.0 * cross
    j = n - i
    d2 = left / i ** 2 + right / j ** 2 - 2.0 * cross / (i * j)
    return np.sqrt(np.maximum(d2, 0.0))


def scan(Z, config: ScanConfig) -> ScanResult:
    Z = as_sample(Z, "Z")
    n = Z.shape[0]
    if n < 8:
        raise ValueError(f"sequence of length {n} is too short (need at least 8)")
    a_n, b_n = config.bounds(n)
    curve = scan_curve(Z, config.kernel, a_n, b_n)
    threshold = scan_threshold(config.kernel.bound, n, a_n, b_n, config.alpha)
    top = int(np.argmax(curve))  # first maximum on ties
    statistic = float(curve[top])
    changed = statistic > threshold
    return ScanResult(CHANGE if changed else NO_CHANGE, statistic, threshold,
                      a_n + top if changed else None, a_n, b_n, curve.tolist())


def scan_windows(Z, config: ScanConfig, window: int, step: int | None = None) -> list[dict]:
    """Re-run :func:`scan` on sliding windows.

    A convenience for sequences with several changes; each window is an
    independent single-change test with no joint level guarantee.
    """
    Z = as_sample(Z, "Z")
    step = step or window
    if window < 8 or step < 1:
        raise ValueError("window must be at least 8 and step at least 1")
    out = []
    for start in range(0, max(Z.shape[0] - window, 0) + 1, step):
        res = scan(Z[start:start + window], config)
        out.append({"start": start,
                    "index_hat": None if res.index_hat is None else start + res.index_hat,
                    **{k: v for k, v in res.to_dict().items() if k not in ("index_hat", "curve")}})
    return out
