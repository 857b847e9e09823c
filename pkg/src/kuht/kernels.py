"""Translation-invariant kernels on R^d and their Gram matrices.

Three families are provided:

* Gaussian  ``k(x, y) = exp(-||x - y||^2 / gamma)``
* Laplace   ``k(x, y) = exp(-||x - y|| / gamma)``
* IMQ       ``k(x, y) = (c^2 + ||x - y||^2) ** eta`` with ``c > 0`` and ``-1 < eta < 0``

The Gaussian bandwidth follows the ``/gamma`` convention, not ``/(2 sigma^2)``.
Each kernel stores its upper bound ``K``, which the distribution-free
thresholds need explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

FAMILIES = ("gaussian", "laplace", "imq")


def as_sample(X, name="sample") -> np.ndarray:
    """Coerce ``X`` to a 2-D float array with one observation per row."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif X.ndim == 1:
        X = X[:, None]
    elif X.ndim != 2:
        raise ValueError(f"{name} must be 1-D or 2-D, got shape {X.shape}")
    if X.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    return X


def _check_pair(X, Y):
    X = as_sample(X, "X")
    Y = as_sample(Y, "Y")
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} != {Y.shape[1]}")
    return X, Y


@dataclass(frozen=True)
class Kernel:
    """A bounded, translation-invariant positive-definite kernel.

    Use the :func:`gaussian`, :func:`laplace` and :func:`imq` constructors, or
    :func:`parse_kernel` for CLI spec strings.
    """

    family: str
    gamma: float | None = None
    c: float | None = None
    eta: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.family in ("gaussian", "laplace"):
            if self.gamma is None or not (self.gamma > 0) or not math.isfinite(self.gamma):
                raise ValueError(f"{self.family} kernel needs gamma > 0, got {self.gamma}")
        else:
            if self.c is None or not (self.c > 0):
                raise ValueError(f"imq kernel needs c > 0, got {self.c}")
            if self.eta is None or not (-1 < self.eta < 0):
                raise ValueError(f"imq kernel needs -1 < eta < 0, got {self.eta}")

    @property
    def bound(self) -> float:
        """Upper bound K on k(x, y), attained at x = y."""
        if self.family == "imq":
            return float(self.c ** (2 * self.eta))
        return 1.0

    @property
    def differentiable(self) -> bool:
        return self.family != "laplace"

    @property
    def spec(self) -> str:
        if self.family == "imq":
            return f"imq:c={self.c!r},eta={self.eta!r}"
        return f"{self.family}:gamma={self.gamma!r}"

    def _profile(self, sq: np.ndarray) -> np.ndarray:
        # kernel value as a function of squared distance
        if self.family == "gaussian":
            return np.exp(-sq / self.gamma)
        if self.family == "laplace":
            return np.exp(-np.sqrt(sq) / self.gamma)
        return (self.c ** 2 + sq) ** self.eta

    def __call__(self, x, y) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if x.shape != y.shape or x.ndim != 1:
            raise ValueError(f"points must share dimension, got {x.shape} and {y.shape}")
        diff = x - y
        return float(self._profile(np.dot(diff, diff)))

    def gram(self, X, Y=None) -> np.ndarray:
        """Matrix of k(X_i, Y_j); ``Y`` defaults to ``X``."""
        if Y is None:
            X = as_sample(X, "X")
            sq = cdist(X, X, "sqeuclidean")
        else:
            X, Y = _check_pair(X, Y)
            sq = cdist(X, Y, "sqeuclidean")
        return self._profile(sq)

    def profile_from_sqdist(self, sq: np.ndarray) -> np.ndarray:
        """Kernel values from precomputed squared distances."""
        return self._profile(np.asarray(sq, dtype=float))

    # Derivatives used by the Stein kernel. For translation-invariant kernels
    # grad_x k(x, y) = coeff(x, y) * (x - y) and grad_y k = -grad_x k.

    def _require_differentiable(self):
        if not self.differentiable:
            raise ValueError("laplace kernel is not twice differentiable")

    def grad_coeff(self, X, Y) -> np.ndarray:
        self._require_differentiable()
        X, Y = _check_pair(X, Y)
        sq = cdist(X, Y, "sqeuclidean")
        return self._grad_coeff(sq)

    def _grad_coeff(self, sq):
        if self.family == "gaussian":
            return -2.0 / self.gamma * np.exp(-sq / self.gamma)
        return 2.0 * self.eta * (self.c ** 2 + sq) ** (self.eta - 1)

    def grad_x(self, X, Y) -> np.ndarray:
        """Array of shape (n, m, d) holding grad_x k(X_i, Y_j)."""
        X, Y = _check_pair(X, Y)
        coeff = self.grad_coeff(X, Y)
        return coeff[:, :, None] * (X[:, None, :] - Y[None, :, :])

    def grad_y(self, X, Y) -> np.ndarray:
        return -self.grad_x(X, Y)

    def cross_trace(self, X, Y) -> np.ndarray:
        """trace of the mixed Hessian d^2 k / dx dy at (X_i, Y_j)."""
        self._require_differentiable()
        X, Y = _check_pair(X, Y)
        sq = cdist(X, Y, "sqeuclidean")
        return self._cross_trace(sq, X.shape[1])

    def _cross_trace(self, sq, d):
        if self.family == "gaussian":
            g = self.gamma
            return (2.0 * d / g - 4.0 * sq / g ** 2) * np.exp(-sq / g)
        c2, eta = self.c ** 2, self.eta
        return (-2.0 * eta * d * (c2 + sq) ** (eta - 1)
                - 4.0 * eta * (eta - 1) * sq * (c2 + sq) ** (eta - 2))

    def stein_parts(self, X, Y=None):
        """Gram matrix, gradient coefficient and cross trace between X and Y (default X)."""
        self._require_differentiable()
        if Y is None:
            X = Y = as_sample(X)
        else:
            X, Y = _check_pair(X, Y)
        sq = cdist(X, Y, "sqeuclidean")
        return self._profile(sq), self._grad_coeff(sq), self._cross_trace(sq, X.shape[1])

    def stein_parts_paired(self, X, Y):
        """As :meth:`stein_parts` but for matching rows (X_i, Y_i) only."""
        self._require_differentiable()
        X, Y = _check_pair(X, Y)
        if X.shape[0] != Y.shape[0]:
            raise ValueError("paired evaluation needs equally many rows")
        sq = np.sum((X - Y) ** 2, axis=1)
        return self._profile(sq), self._grad_coeff(sq), self._cross_trace(sq, X.shape[1])


def gaussian(gamma: float) -> Kernel:
    return Kernel("gaussian", gamma=float(gamma))


def laplace(gamma: float) -> Kernel:
    return Kernel("laplace", gamma=float(gamma))


def imq(c: float = 1.0, eta: float = -0.5) -> Kernel:
    return Kernel("imq", c=float(c), eta=float(eta))


def _parse_params(text: str) -> dict[str, str]:
    params = {}
    for item in filter(None, (p.strip() for p in text.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"expected key=value, got {item!r}")
        params[key.strip()] = value.strip()
    return params


def parse_kernel(spec: str) -> Kernel:
    """Parse ``gaussian:gamma=2``, ``laplace:gamma=1`` or ``imq:c=1,eta=-0.5``."""
    family, _, rest = spec.strip().partition(":")
    family = family.lower()
    params = _parse_params(rest)
    try:
        if family in ("gaussian", "laplace"):
            if set(params) != {"gamma"}:
                raise ValueError(f"{family} kernel takes exactly gamma=<float>")
            return Kernel(family, gamma=float(params["gamma"]))
        if family == "imq":
            if not set(params) <= {"c", "eta"}:
                raise ValueError("imq kernel takes c=<float>,eta=<float>")
            return imq(float(params.get("c", 1.0)), float(params.get("eta", -0.5)))
    except ValueError as err:
        raise ValueError(f"bad kernel spec {spec!r}: {err}") from None
    raise ValueError(f"bad kernel spec {spec!r}: unknown family {family!r}")
