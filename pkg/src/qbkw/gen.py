"""Instance generation and instance transformations.

Gaussian widths: :func:`discrete_gaussian_int` takes a standard deviation.
The lattice-facing routines here (:func:`modulus_switch`,
:func:`expand_samples`) take the *width* ``s`` of ``rho_s(x) = exp(-pi x^2 / s^2)``,
whose standard deviation is ``s / sqrt(2 pi)``; use :func:`width_to_stddev`
to convert.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .model import (
    Bernoulli,
    Binary,
    BoundedPerCoordinate,
    BoundedUniform,
    DiscreteGaussian,
    Exact,
    LweParams,
    RoundedGaussian,
    RoundedNoise,
    SampleList,
    Uniform,
    dot_mod,
    residue_dtype,
)

TAIL_CUT = 12.0
_TABLE_LIMIT = 1 << 22


# --------------------------------------------------------------------------
# randomness


@dataclass(frozen=True)
class RngSeed:
    seed: int
    algorithm: str = "PCG64"

    def generator(self) -> np.random.Generator:
        bitgen = getattr(np.random, self.algorithm)
        return np.random.Generator(bitgen(self.seed & (2**64 - 1)))

    def spawn(self, chunk: int) -> "RngSeed":
        """Independent stream for parallel chunk ``chunk``: sha256(seed xor chunk)."""
        h = hashlib.sha256(((self.seed ^ chunk) & (2**64 - 1)).to_bytes(8, "little")).digest()
        return RngSeed(int.from_bytes(h[:8], "little"), self.algorithm)


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngSeed):
        return rng.generator()
    return np.random.default_rng(rng)


def width_to_stddev(s: float) -> float:
    return s / math.sqrt(2 * math.pi)


# --------------------------------------------------------------------------
# discrete Gaussians


@lru_cache(maxsize=64)
def _cdf_table(sigma: float) -> tuple[int, np.ndarray]:
    t = int(math.ceil(TAIL_CUT * sigma))
    x = np.arange(-t, t + 1, dtype=np.float64)
    w = np.exp(-(x**2) / (2 * sigma**2))
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    return t, cdf


def discrete_gaussian_int(sigma: float, rng, size=None):
    """Draw from D_Z with mass proportional to exp(-x^2 / (2 sigma^2)).

    ``sigma`` is a standard deviation; the tail is cut at 12 sigma.  Small
    and moderate widths invert a cumulative table; very wide ones fall back
    to rejection from a uniform proposal over the truncated support.
    """
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    gen = as_generator(rng)
    shape = () if size is None else size
    if 2 * TAIL_CUT * sigma + 1 <= _TABLE_LIMIT:
        t, cdf = _cdf_table(float(sigma))
        u = gen.random(shape)
        out = np.searchsorted(cdf, u, side="right").astype(np.int64) - t
        out = np.minimum(out, t)
    else:
        out = discrete_gaussian_coset(np.zeros(shape), sigma, gen)
        out = np.rint(out).astype(np.int64)
    return int(out) if size is None else out


def discrete_gaussian_coset(centers, sigma: float, rng) -> np.ndarray:
    """Draw z in Z with mass proportional to exp(-(z - c)^2 / (2 sigma^2)) per centre c.

    Shifted rejection: propose uniformly over the 12-sigma window around each
    centre and accept with the Gaussian weight.  Coordinates are independent.
    """
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    gen = as_generator(rng)
    c = np.asarray(centers, dtype=np.float64)
    flat = c.ravel()
    out = np.empty(flat.shape, dtype=np.float64)
    todo = np.arange(flat.size)
    half = math.ceil(TAIL_CUT * sigma)
    while todo.size:
        lo = np.ceil(flat[todo] - half)
        z = lo + gen.integers(0, 2 * half + 1, size=todo.size)
        acc = gen.random(todo.size) < np.exp(-((z - flat[todo]) ** 2) / (2 * sigma**2))
        out[todo[acc]] = z[acc]
        todo = todo[~acc]
    return out.reshape(c.shape)


# --------------------------------------------------------------------------
# instances


def sample_noise(noise, q: int, m: int, rng) -> np.ndarray:
    gen = as_generator(rng)
    if isinstance(noise, Exact):
        return np.zeros(m, dtype=np.int64)
    if isinstance(noise, DiscreteGaussian):
        if noise.sigma == 0:
            return np.zeros(m, dtype=np.int64)
        return discrete_gaussian_int(noise.sigma, gen, m)
    if isinstance(noise, RoundedGaussian):
        return np.rint(gen.normal(0.0, noise.sigma, m)).astype(np.int64)
    if isinstance(noise, Bernoulli):
        return (gen.random(m) < noise.p).astype(np.int64)
    if isinstance(noise, BoundedUniform):
        return gen.integers(-noise.radius, noise.radius + 1, size=m)
    raise TypeError(f"unknown noise model {noise!r}")


def sample_secret(params: LweParams, rng) -> np.ndarray:
    """Secret in [0, q) drawn according to ``params.secret``."""
    gen = as_generator(rng)
    n, q, sm = params.n, params.q, params.secret
    if isinstance(sm, Uniform):
        s = gen.integers(0, q, size=n)
    elif isinstance(sm, Binary):
        s = gen.integers(0, 2, size=n)
    elif isinstance(sm, BoundedPerCoordinate):
        b = np.asarray(sm.bounds)
        s = gen.integers(-b, b + 1)
    elif isinstance(sm, RoundedNoise):
        s = sample_noise(params.noise, q, n, gen)
    else:
        raise TypeError(f"unknown secret model {sm!r}")
    return np.mod(s, q).astype(np.int64)


def sample_lwe(params: LweParams, s, m: int, rng) -> SampleList:
    """``m`` samples ``(a, <a, s> + e mod q)`` with uniform ``a``."""
    gen = as_generator(rng)
    n, q = params.n, params.q
    s = np.asarray(s)
    if s.shape != (n,):
        raise ValueError(f"secret must have length {n}")
    A = gen.integers(0, q, size=(m, n), dtype=np.int64)
    e = sample_noise(params.noise, q, m, gen)
    b = np.mod(dot_mod(A, s, q) + e, q)
    return SampleList(A.astype(residue_dtype(q)) if q < 2**31 else A, b, q)


def sample_uniform(params: LweParams, m: int, rng) -> SampleList:
    gen = as_generator(rng)
    n, q = params.n, params.q
    A = gen.integers(0, q, size=(m, n), dtype=np.int64)
    b = gen.integers(0, q, size=m)
    return SampleList(A.astype(residue_dtype(q)) if q < 2**31 else A, b, q)


# --------------------------------------------------------------------------
# modular linear algebra


def _egcd(a: int, b: int) -> tuple[int, int, int]:
    x0, x1, y0, y1 = 1, 0, 0, 1
    while b:
        t = a // b
        a, b = b, a - t * b
        x0, x1 = x1, x0 - t * x1
        y0, y1 = y1, y0 - t * y1
    return a, x0, y0


def inverse_mod_matrix(A, q: int) -> np.ndarray:
    """Inverse of a square integer matrix over Z/qZ for any modulus.

    Column elimination uses unimodular 2x2 row operations built from the
    extended gcd, so no division by non-units is ever needed.
    """
    M = [[int(x) % q for x in row] for row in np.asarray(A)]
    n = len(M)
    I = [[int(i == j) for j in range(n)] for i in range(n)]
    for c in range(n):
        for r in range(c + 1, n):
            if M[r][c] == 0:
                continue
            a, b = M[c][c], M[r][c]
            g, x, y = _egcd(a, b)
            u, v = a // g, b // g
            rc, rr, ic, ir = M[c], M[r], I[c], I[r]
            M[c] = [(x * p + y * s) % q for p, s in zip(rc, rr)]
            M[r] = [(-v * p + u * s) % q for p, s in zip(rc, rr)]
            I[c] = [(x * p + y * s) % q for p, s in zip(ic, ir)]
            I[r] = [(-v * p + u * s) % q for p, s in zip(ic, ir)]
        piv = M[c][c]
        if math.gcd(piv, q) != 1:
            raise ValueError("matrix is not invertible mod q")
        inv = pow(piv, -1, q)
        M[c] = [p * inv % q for p in M[c]]
        I[c] = [p * inv % q for p in I[c]]
    for c in range(n - 1, -1, -1):
        for r in range(c):
            f = M[r][c]
            if f:
                M[r] = [(p - f * s) % q for p, s in zip(M[r], M[c])]
                I[r] = [(p - f * s) % q for p, s in zip(I[r], I[c])]
    return np.array(I, dtype=np.int64 if q < 2**62 else object)


def _prime_factors(q: int) -> list[int]:
    out, d = [], 2
    while d * d <= q:
        if q % d == 0:
            out.append(d)
            while q % d == 0:
                q //= d
        d += 1
    if q > 1:
        out.append(q)
    return out


class _EchelonModP:
    """Incremental row echelon form over GF(p) for independence tests."""

    def __init__(self, n: int, p: int):
        self.p = p
        self.rows: dict[int, list[int]] = {}

    def try_add(self, v, commit: bool = True) -> bool:
        p = self.p
        v = [int(x) % p for x in v]
        for piv, row in self.rows.items():
            if v[piv]:
                f = v[piv]
                v = [(a - f * b) % p for a, b in zip(v, row)]
        lead = next((i for i, x in enumerate(v) if x), None)
        if lead is None:
            return False
        if commit:
            inv = pow(v[lead], -1, p)
            v = [x * inv % p for x in v]
            for piv, row in self.rows.items():
                if row[lead]:
                    f = row[lead]
                    self.rows[piv] = [(a - f * b) % p for a, b in zip(row, v)]
            self.rows[lead] = v
        return True


class SwitchFailure(RuntimeError):
    def __init__(self, consumed: int):
        super().__init__(f"no invertible basis found after consuming {consumed} samples")
        self.consumed = consumed


@dataclass(frozen=True, eq=False)
class SwitchedInstance:
    """Result of secret-error switching.

    Fresh samples ``(a', b')`` map to ``(-A^{-T} a', b' - <A^{-T} a', b>)``; the
    mapped stream has secret ``e = b - A s`` and the original secret is
    ``A^{-1} (b - e)``.
    """

    A: np.ndarray
    A_inv: np.ndarray
    b: np.ndarray
    q: int
    consumed: int

    def transform(self, samples: SampleList) -> SampleList:
        q = self.q
        C = np.mod(np.asarray(samples.A, dtype=np.int64) @ self.A_inv, q) if q < 2**20 else _matmul_mod(samples.A, self.A_inv, q)
        shift = dot_mod(C, self.b, q)
        A_new = np.mod(-C, q)
        b_new = np.mod(samples.b - shift, q)
        return SampleList(A_new.astype(samples.A.dtype) if q < 2**31 else A_new, b_new, q, samples.depth, samples.independent)

    def recover(self, e) -> np.ndarray:
        q = self.q
        diff = np.mod(self.b - np.asarray(e, dtype=np.int64), q)
        return dot_mod(self.A_inv, diff, q).astype(np.int64)


def _matmul_mod(X, Y, q: int) -> np.ndarray:
    Xo = np.asarray(X, dtype=object)
    Yo = np.asarray(Y, dtype=object)
    return np.mod(Xo.dot(Yo), q).astype(np.int64)


def secret_error_switch(samples: SampleList, k_extra: int = 8, rng=None) -> SwitchedInstance:
    """Select n independent samples from the front of the list.

    The budget is ``n + k_extra`` candidates for a prime modulus and
    ``n + ceil(4 n log log q)`` otherwise.  Rows must stay independent
    modulo every prime factor of q, which makes the square matrix a unit
    mod q.  Scalars are rounded to integers.
    """
    n, q = samples.dim, samples.q
    primes = _prime_factors(q)
    if len(primes) == 1 and primes[0] == q:
        budget = n + k_extra
    else:
        budget = n + math.ceil(4 * n * max(1.0, math.log(max(2.0, math.log(q)))))
    echelons = [_EchelonModP(n, p) for p in primes]
    chosen: list[int] = []
    consumed = 0
    for i in range(min(budget, len(samples))):
        consumed = i + 1
        row = samples.A[i]
        if all(e.try_add(row, commit=False) for e in echelons):
            for e in echelons:
                e.try_add(row)
            chosen.append(i)
            if len(chosen) == n:
                break
    if len(chosen) < n:
        raise SwitchFailure(consumed)
    A = np.asarray(samples.A[chosen], dtype=np.int64)
    b = np.mod(np.floor(samples.b[chosen] + 0.5).astype(np.int64), q)
    A_inv = inverse_mod_matrix(A, q)
    # transform uses the row-vector form a'^T A^{-1} = (A^{-T} a')^T
    return SwitchedInstance(A, A_inv, b, q, consumed)


# --------------------------------------------------------------------------
# modulus switching and the sample expander


def modulus_switch(samples: SampleList, p: int, varsigma: float | None = None, rng=None) -> SampleList:
    """Rescale samples from modulus q to modulus p >= q.

    Each vectorial coordinate becomes the integer ``(p/q) a + x`` where x is
    drawn from the Gaussian of width ``varsigma`` on the coset
    ``Z - (p/q) a``; the scalar becomes ``(p/q) b``.  The default width is the
    floor ``sqrt(n) p / q``.
    """
    q, n = samples.q, samples.dim
    if p < q:
        raise ValueError("target modulus p must be >= q")
    floor = math.sqrt(n) * p / q
    if varsigma is None:
        varsigma = floor
    if varsigma < floor * (1 - 1e-12):
        raise ValueError(f"varsigma must be >= sqrt(n) p / q = {floor:g}")
    gen = as_generator(rng)
    scaled = np.asarray(samples.A, dtype=np.float64) * (p / q)
    A_new = discrete_gaussian_coset(scaled, width_to_stddev(varsigma), gen)
    A_new = np.mod(np.rint(A_new).astype(np.int64), p)
    b_new = np.mod(samples.b * (p / q), p)
    return SampleList(A_new.astype(residue_dtype(p)), b_new, p, samples.depth, samples.independent)


def expand_samples(A, b, sigma: float, count: int, rng, *, q: int) -> SampleList:
    """Generate ``count`` samples ``(A^T x + y, <x, b>)`` from one small instance.

    x (length m) and y (length n) are drawn coordinate-wise from the discrete
    Gaussian of width ``sigma``.  If ``b = A s + e`` the new error is
    ``<x, e> - <y, s>``.
    """
    if count <= 0:
        raise ValueError("count must be positive")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    A = np.mod(np.asarray(A, dtype=np.int64), q)
    b = np.asarray(b, dtype=np.float64)
    if np.any(np.mod(b, 1) != 0):
        raise ValueError("expander needs integer scalars")
    b = np.mod(b.astype(np.int64), q)
    m, n = A.shape
    gen = as_generator(rng)
    sd = width_to_stddev(sigma)
    X = discrete_gaussian_int(sd, gen, (count, m))
    Y = discrete_gaussian_int(sd, gen, (count, n))
    A_new = np.mod(np.mod(X, q) @ A + Y, q)
    b_new = np.mod(np.mod(X, q) @ b, q)
    return SampleList(A_new.astype(residue_dtype(q)), b_new, q)


def expander_width(n: int, m: int, q: int) -> float:
    """Width ``2 q^((n+2)/(n+m-1))`` that makes expanded vectorial parts near uniform."""
    return 2 * q ** ((n + 2) / (n + m - 1))
