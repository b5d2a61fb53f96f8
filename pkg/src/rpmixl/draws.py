"""Halton quasi-random standard-normal draws for the simulation estimator."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .errors import DrawError


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return False
        f += 2
    return True


def first_primes(k: int) -> tuple[int, ...]:
    out = []
    n = 2
    while len(out) < k:
        if is_prime(n):
            out.append(n)
        n += 1
    return tuple(out)


@dataclass(frozen=True)
class DrawConfig:
    n_draws: int = 1000
    burn_in: int = 10
    primes: tuple[int, ...] | None = None  # None: 2, 3, 5, ... as many as needed
    shuffle_seed: int | None = None

    def __post_init__(self):
        if self.n_draws < 1:
            raise DrawError("n_draws must be at least 1")
        if self.burn_in < 0:
            raise DrawError("burn_in must be non-negative")
        if self.primes is not None:
            object.__setattr__(self, "primes", tuple(int(p) for p in self.primes))
            if len(set(self.primes)) != len(self.primes):
                raise DrawError("primes must be distinct")
            bad = [p for p in self.primes if not is_prime(p)]
            if bad:
                raise DrawError(f"not prime: {bad}")

    def bases(self, n_random: int) -> tuple[int, ...]:
        if self.primes is None:
            return first_primes(n_random)
        if n_random > len(self.primes):
            raise DrawError(
                f"{n_random} random dimensions but only {len(self.primes)} primes configured"
            )
        return self.primes[:n_random]

    def to_dict(self) -> dict:
        return {
            "n_draws": self.n_draws,
            "burn_in": self.burn_in,
            "primes": None if self.primes is None else list(self.primes),
            "shuffle_seed": self.shuffle_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DrawConfig":
        primes = d.get("primes")
        return cls(
            n_draws=d["n_draws"],
            burn_in=d["burn_in"],
            primes=None if primes is None else tuple(primes),
            shuffle_seed=d.get("shuffle_seed"),
        )


def halton_value(base: int, index: int) -> float:
    """Radical inverse of ``index`` in ``base``, rounded once from the exact fraction."""
    if base < 2 or index < 1:
        raise DrawError("need base >= 2 and index >= 1")
    num, den = 0, 1
    while index:
        index, digit = divmod(index, base)
        num = num * base + digit
        den *= base
    return num / den


def halton_points(base: int, indices) -> np.ndarray:
    """Vectorized :func:`halton_value` over an integer array of indices."""
    n = np.asarray(indices, dtype=np.int64).copy()
    if n.size and n.min() < 1:
        raise DrawError("Halton indices start at 1")
    num = np.zeros_like(n)
    den = np.ones_like(n)
    while np.any(n):
        live = n > 0
        digit = n % base
        num = np.where(live, num * base + digit, num)
        den = np.where(live, den * base, den)
        n //= base
    if den.size and den.max() >= 2**62 // base:
        raise DrawError("Halton index too large for exact integer arithmetic")
    return num / den


# Rational approximation for the lower region of the normal quantile
# (P. J. Acklam), polished below with one Halley step on erfc.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _lower_quantile(q: np.ndarray) -> np.ndarray:
    """Quantile for q in (0, 0.5]; negative or zero."""
    z = np.empty_like(q)
    tail = q < _P_LOW
    if np.any(tail):
        t = np.sqrt(-2.0 * np.log(q[tail]))
        z[tail] = (((((_C[0] * t + _C[1]) * t + _C[2]) * t + _C[3]) * t + _C[4]) * t + _C[5]) / (
            (((_D[0] * t + _D[1]) * t + _D[2]) * t + _D[3]) * t + 1.0
        )
    mid = ~tail
    if np.any(mid):
        u = q[mid] - 0.5
        r = u * u
        z[mid] = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * u / (
            ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        )
    # Halley refinement; erfc keeps full relative accuracy in the lower tail.
    e = 0.5 * erfc(-z / math.sqrt(2.0)) - q
    u = e * math.sqrt(2.0 * math.pi) * np.exp(0.5 * z * z)
    z = z - u / (1.0 + 0.5 * z * u)
    return np.minimum(z, 0.0)


def inv_normal_cdf(p):
    """Standard-normal quantile. Accepts a scalar or array with 0 < p < 1.

    Exactly antisymmetric: the upper half is evaluated as the negated lower
    quantile of ``1 - p``.
    """
    arr = np.asarray(p, dtype=np.float64)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        raise ValueError("inv_normal_cdf is defined only for 0 < p < 1")
    flat = arr.reshape(-1)
    upper = flat > 0.5
    q = np.where(upper, 1.0 - flat, flat)
    z = _lower_quantile(q)
    z = np.where(upper, -z, z)
    z = np.where(flat == 0.5, 0.0, z)
    out = z.reshape(arr.shape)
    return float(out) if np.ndim(p) == 0 else out


def normal_cdf(z):
    """Standard-normal CDF via erfc (accurate in both tails)."""
    return 0.5 * erfc(-np.asarray(z, dtype=np.float64) / math.sqrt(2.0))


@dataclass(frozen=True, eq=False)
class DrawBlock:
    values: np.ndarray  # (n_obs, n_draws, n_random)
    config: DrawConfig

    def __post_init__(self):
        self.values.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    def __eq__(self, other):
        return (
            isinstance(other, DrawBlock)
            and self.config == other.config
            and self.values.shape == other.values.shape
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def halton_indices(n_obs: int, config: DrawConfig) -> np.ndarray:
    """Halton index matrix (n_obs, n_draws): observation n owns the contiguous
    block burn_in + n*R + 1 .. burn_in + (n+1)*R."""
    R = config.n_draws
    start = config.burn_in + 1 + np.arange(n_obs, dtype=np.int64)[:, None] * R
    return start + np.arange(R, dtype=np.int64)[None, :]


def generate_draw_block(n_obs: int, n_random: int, config: DrawConfig | None = None) -> DrawBlock:
    config = config or DrawConfig()
    if n_obs < 0 or n_random < 0:
        raise DrawError("counts must be non-negative")
    bases = config.bases(n_random)
    R = config.n_draws
    values = np.empty((n_obs, R, n_random))
    idx = halton_indices(n_obs, config)
    rng = np.random.default_rng(config.shuffle_seed) if config.shuffle_seed is not None else None
    for d, base in enumerate(bases):
        z = inv_normal_cdf(halton_points(base, idx)) if n_obs else np.empty((0, R))
        if rng is not None:
            z = rng.permuted(z, axis=1)
        values[:, :, d] = z
    return DrawBlock(values, config)
