"""Core domain types and bias arithmetic.

Residues are stored canonically in ``[0, q)``.  Wherever magnitudes matter
they are read as signed representatives: the smallest element of the class,
the positive one on a tie (so ``q/2`` stays positive for even ``q``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Union

import numpy as np


# --------------------------------------------------------------------------
# residue helpers


def residue_dtype(q: int) -> np.dtype:
    """Smallest signed integer dtype that holds differences of residues mod q."""
    if q < 2**15:
        return np.dtype(np.int16)
    if q < 2**31:
        return np.dtype(np.int32)
    if q < 2**62:
        return np.dtype(np.int64)
    raise ValueError(f"modulus {q} too large for vectorised residues")


def signed(a, q: int):
    """Map residues in [0, q) to representatives in (-q/2, q/2]."""
    a = np.asarray(a)
    return np.where(a > q // 2, a - q, a)


def signed_real(x, q: float):
    """Real analogue of :func:`signed` for scalars in R/qZ."""
    x = np.mod(np.asarray(x, dtype=np.float64), q)
    return np.where(x > q / 2, x - q, x)


def round_half_up(x):
    """Nearest integer, halves rounded toward +inf."""
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5).astype(np.int64)


def dot_mod(A, s, q: int) -> np.ndarray:
    """Row-wise ``<a, s> mod q`` without int64 overflow."""
    A = np.asarray(A)
    s = np.asarray(s)
    n = A.shape[-1]
    if q < 2**20 and n < 2**20:
        return np.mod(A.astype(np.int64) @ np.mod(s, q).astype(np.int64), q)
    s_obj = [int(x) % q for x in s.ravel()]
    rows = A.reshape(-1, n)
    return np.array([sum(int(x) * y for x, y in zip(r, s_obj)) % q for r in rows], dtype=np.float64)


# --------------------------------------------------------------------------
# noise models


@dataclass(frozen=True)
class DiscreteGaussian:
    """D_{Z,s} with ``s = sigma * sqrt(2 pi)``: mass proportional to exp(-x^2 / (2 sigma^2))."""

    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")

    def bias(self, q: int) -> float:
        if self.sigma == 0:
            return 1.0
        t = int(math.ceil(12 * self.sigma)) + 1
        x = np.arange(-t, t + 1, dtype=np.float64)
        w = np.exp(-(x**2) / (2 * self.sigma**2))
        return float(np.sum(w * np.cos(2 * np.pi * x / q)) / np.sum(w))

    @property
    def stddev(self) -> float:
        return self.sigma


@dataclass(frozen=True)
class RoundedGaussian:
    """Continuous Gaussian of standard deviation ``sigma`` rounded to the nearest integer."""

    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")

    def bias(self, q: int) -> float:
        if self.sigma == 0:
            return 1.0
        from scipy.stats import norm

        t = int(math.ceil(12 * self.sigma)) + 1
        x = np.arange(-t, t + 1, dtype=np.float64)
        p = norm.cdf((x + 0.5) / self.sigma) - norm.cdf((x - 0.5) / self.sigma)
        return float(np.sum(p * np.cos(2 * np.pi * x / q)) / np.sum(p))

    @property
    def stddev(self) -> float:
        return math.sqrt(self.sigma**2 + 1 / 12)


@dataclass(frozen=True)
class Bernoulli:
    """LPN noise: 1 with probability ``p``; only meaningful for q = 2."""

    p: float

    def __post_init__(self):
        if not 0 <= self.p <= 0.5:
            raise ValueError("Bernoulli rate must lie in [0, 1/2]")

    def bias(self, q: int) -> float:
        if q != 2:
            raise ValueError("Bernoulli noise requires q = 2")
        return 1 - 2 * self.p

    @property
    def stddev(self) -> float:
        return math.sqrt(self.p * (1 - self.p))


@dataclass(frozen=True)
class BoundedUniform:
    """Uniform integer noise on [-radius, radius]."""

    radius: int

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("radius must be >= 0")

    def bias(self, q: int) -> float:
        x = np.arange(-self.radius, self.radius + 1, dtype=np.float64)
        return float(np.mean(np.cos(2 * np.pi * x / q)))

    @property
    def stddev(self) -> float:
        return math.sqrt(self.radius * (self.radius + 1) / 3)


@dataclass(frozen=True)
class Exact:
    """Noise-free samples."""

    def bias(self, q: int) -> float:
        return 1.0

    @property
    def stddev(self) -> float:
        return 0.0


NoiseModel = Union[DiscreteGaussian, RoundedGaussian, Bernoulli, BoundedUniform, Exact]


# --------------------------------------------------------------------------
# secret models


@dataclass(frozen=True)
class Uniform:
    pass


@dataclass(frozen=True)
class Binary:
    pass


@dataclass(frozen=True)
class BoundedPerCoordinate:
    bounds: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "bounds", tuple(int(b) for b in self.bounds))
        if any(b < 1 for b in self.bounds):
            raise ValueError("all coordinate bounds must be >= 1")

    @property
    def non_increasing(self) -> bool:
        return all(x >= y for x, y in zip(self.bounds, self.bounds[1:]))


@dataclass(frozen=True)
class RoundedNoise:
    """Secret drawn from the (rounded) noise distribution, as after secret-error switching."""


SecretModel = Union[Uniform, Binary, BoundedPerCoordinate, RoundedNoise]


# --------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class LweParams:
    n: int
    q: int
    noise: NoiseModel = field(default_factory=Exact)
    secret: SecretModel = field(default_factory=Uniform)
    epsilon: float = 0.0

    def __post_init__(self):
        if self.q < 2:
            raise ValueError("modulus q must be >= 2")
        if self.n < 0:
            raise ValueError("dimension n must be >= 0")
        if self.epsilon > 1 or self.epsilon < 0:
            raise ValueError("distortion epsilon must lie in [0, 1]")
        if isinstance(self.noise, Bernoulli) and self.q != 2:
            raise ValueError("Bernoulli noise requires q = 2")
        if isinstance(self.secret, BoundedPerCoordinate) and len(self.secret.bounds) != self.n:
            raise ValueError("need one bound per secret coordinate")

    @property
    def noise_bias(self) -> float:
        return self.noise.bias(self.q)

    @property
    def alpha(self) -> float:
        """Noise parameter: the bias of the error is exp(-alpha^2)."""
        b = self.noise_bias
        if b <= 0:
            return math.inf
        return math.sqrt(max(0.0, -math.log(b)))

    @property
    def beta(self) -> float:
        return beta_of(self.alpha, self.n)

    def secret_bounds(self) -> np.ndarray:
        """Per-coordinate magnitude bound on the signed secret."""
        s = self.secret
        if isinstance(s, Binary):
            return np.ones(self.n)
        if isinstance(s, BoundedPerCoordinate):
            return np.asarray(s.bounds, dtype=np.float64)
        if isinstance(s, RoundedNoise):
            # tail bound used throughout for Gaussian-like noise
            return np.full(self.n, max(1.0, math.ceil(4 * self.noise.stddev)))
        return np.full(self.n, float(self.q // 2))

    def secret_second_moment(self) -> float:
        """E[s_j^2] of the signed secret coordinates."""
        s = self.secret
        if isinstance(s, Binary):
            return 0.5
        if isinstance(s, BoundedPerCoordinate):
            b = np.asarray(s.bounds, dtype=np.float64)
            return float(np.mean(b * (b + 1) / 3))
        if isinstance(s, RoundedNoise):
            return self.noise.stddev**2
        return self.q**2 / 12


# --------------------------------------------------------------------------
# samples


class Sample(NamedTuple):
    a: np.ndarray
    b: float


@dataclass(frozen=True, eq=False)
class SampleList:
    """Homogeneous list of LWE-shaped samples ``(a, b)``.

    ``A`` holds one sample per row with residues in [0, q); ``b`` is real in
    [0, q).  ``depth`` counts the reduction steps applied so far.
    """

    A: np.ndarray
    b: np.ndarray
    q: int
    depth: int = 0
    independent: bool = True

    def __post_init__(self):
        A = np.asarray(self.A)
        if A.ndim != 2:
            A = A.reshape(len(self.b), -1)
        b = np.mod(np.asarray(self.b, dtype=np.float64), self.q)
        if A.shape[0] != b.shape[0]:
            raise ValueError("A and b must have the same number of samples")
        if self.depth < 0:
            raise ValueError("depth must be >= 0")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def __len__(self) -> int:
        return self.A.shape[0]

    def __iter__(self) -> Iterator[Sample]:
        for a, b in zip(self.A, self.b):
            yield Sample(a, float(b))

    def __getitem__(self, idx) -> "SampleList":
        if isinstance(idx, (int, np.integer)):
            idx = slice(idx, idx + 1)
        return SampleList(self.A[idx], self.b[idx], self.q, self.depth, self.independent)

    def errors(self, secret) -> np.ndarray:
        """Signed real error terms ``b - <a, s>`` for a known secret."""
        return signed_real(self.b - dot_mod(self.A, secret, self.q), self.q)

    def replace(self, **kw) -> "SampleList":
        fields = dict(A=self.A, b=self.b, q=self.q, depth=self.depth, independent=self.independent)
        fields.update(kw)
        return SampleList(**fields)


# --------------------------------------------------------------------------
# bias arithmetic


def bias_of_gaussian(sigma_over_q: float) -> float:
    """Bias of a centred Gaussian of standard deviation ``q * sigma_over_q``."""
    if sigma_over_q < 0:
        raise ValueError("sigma_over_q must be >= 0")
    return math.exp(-2 * math.pi**2 * sigma_over_q**2)


def empirical_bias(values, q) -> complex:
    """Mean of exp(2 i pi x / q) over ``values``."""
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("no samples")
    z = np.exp(2j * np.pi * np.mod(x, q) / q)
    return complex(z.mean())


def beta_of(alpha: float, n: int) -> float:
    if alpha == 0:
        raise ValueError("noise-free: beta undefined for alpha = 0")
    if alpha < 0:
        raise ValueError("alpha must be positive")
    return math.sqrt(n / 2) / alpha


def alpha_from_stddev(sigma_over_q: float) -> float:
    """Noise parameter of a Gaussian with relative standard deviation ``sigma_over_q``."""
    if sigma_over_q < 0:
        raise ValueError("sigma_over_q must be >= 0")
    return math.sqrt(2) * math.pi * sigma_over_q


def regev_stddev(n: int, q: int) -> float:
    """Standard deviation q / (sqrt(2 pi n) log^2 n) of the Regev parameter family."""
    return q / (math.sqrt(2 * math.pi * n) * math.log2(n) ** 2)
