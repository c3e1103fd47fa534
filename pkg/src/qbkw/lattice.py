"""Lattice machinery and the reductions from lattice problems to LWE.

Bases are stored by columns with exact rational entries, and Gram-Schmidt
data is computed exactly from the Gram matrix.  Floating point only enters
when a sampler needs per-coordinate widths and centres, which are rounded
from the exact values.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .gen import as_generator, discrete_gaussian_coset
from .model import SampleList


class HeuristicSamplingWarning(RuntimeWarning):
    """The sampling width could not be certified above the smoothing parameter."""


def _frac(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int, np.integer)):
        return Fraction(int(v))
    if isinstance(v, str):
        return Fraction(v)
    return Fraction(v).limit_denominator(1 << 64) if isinstance(v, float) else Fraction(v)


def _solve_exact(M: list[list[Fraction]], rhs: list[list[Fraction]]) -> list[list[Fraction]]:
    """Gauss-Jordan solve of M X = rhs over the rationals."""
    n = len(M)
    width = len(rhs[0])
    aug = [list(M[i]) + list(rhs[i]) for i in range(n)]
    for col in range(n):
        piv = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if piv is None:
            raise ValueError("singular matrix")
        aug[col], aug[piv] = aug[piv], aug[col]
        inv = 1 / aug[col][col]
        aug[col] = [v * inv for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[col])]
    return [row[n : n + width] for row in aug]


@dataclass(frozen=True)
class GSO:
    """Exact Gram-Schmidt data: ``b_j = sum_i mu[j][i] * b~_i`` with ``mu[j][j] = 1``."""

    mu: tuple[tuple[Fraction, ...], ...]
    norms2: tuple[Fraction, ...]
    vectors: tuple[tuple[Fraction, ...], ...] | None = None

    @property
    def norms(self) -> np.ndarray:
        return np.sqrt(np.array([float(v) for v in self.norms2]))

    @property
    def mu_float(self) -> np.ndarray:
        return np.array([[float(v) for v in row] for row in self.mu])


def _ldl(G: list[list[Fraction]]) -> tuple[list[list[Fraction]], list[Fraction]]:
    n = len(G)
    mu = [[Fraction(0)] * n for _ in range(n)]
    d: list[Fraction] = []
    for j in range(n):
        for i in range(j):
            acc = G[j][i] - sum(mu[j][k] * mu[i][k] * d[k] for k in range(i))
            mu[j][i] = acc / d[i]
        mu[j][j] = Fraction(1)
        dj = G[j][j] - sum(mu[j][k] ** 2 * d[k] for k in range(j))
        if dj <= 0:
            raise ValueError("basis columns are linearly dependent")
        d.append(dj)
    return mu, d


class LatticeBasis:
    """Lattice spanned by the columns of a ``dim x n`` rational matrix."""

    def __init__(self, B):
        rows = [[_frac(v) for v in row] for row in (B.tolist() if isinstance(B, np.ndarray) else B)]
        if not rows or not rows[0]:
            raise ValueError("empty basis")
        width = len(rows[0])
        if any(len(r) != width for r in rows):
            raise ValueError("ragged basis matrix")
        if width > len(rows):
            raise ValueError("more basis vectors than ambient dimension")
        self.cols: tuple[tuple[Fraction, ...], ...] = tuple(
            tuple(rows[i][j] for i in range(len(rows))) for j in range(width)
        )
        self._gso: GSO | None = None
        self._gram: list[list[Fraction]] | None = None
        self.gso  # validates independence

    @classmethod
    def from_columns(cls, cols) -> "LatticeBasis":
        cols = [list(c) for c in cols]
        return cls([[cols[j][i] for j in range(len(cols))] for i in range(len(cols[0]))])

    @property
    def n(self) -> int:
        return len(self.cols)

    @property
    def dim(self) -> int:
        return len(self.cols[0])

    @property
    def integral(self) -> bool:
        return all(v.denominator == 1 for c in self.cols for v in c)

    def matrix(self) -> np.ndarray:
        """Float copy of the basis, one column per basis vector."""
        return np.array([[float(c[i]) for c in self.cols] for i in range(self.dim)])

    def int_matrix(self) -> np.ndarray:
        if not self.integral:
            raise ValueError("basis is not integral")
        return np.array([[int(c[i]) for c in self.cols] for i in range(self.dim)], dtype=object)

    def gram(self) -> list[list[Fraction]]:
        if self._gram is None:
            self._gram = [
                [sum((a * b for a, b in zip(ci, cj)), Fraction(0)) for cj in self.cols] for ci in self.cols
            ]
        return self._gram

    @property
    def gso(self) -> GSO:
        if self._gso is None:
            mu, d = _ldl(self.gram())
            self._gso = GSO(tuple(map(tuple, mu)), tuple(d))
        return self._gso

    @property
    def max_gs_norm(self) -> float:
        return float(np.max(self.gso.norms))

    def apply(self, z) -> list[Fraction]:
        """The lattice point ``B z`` for integer coefficients ``z``."""
        z = [int(v) for v in z]
        return [sum((c[i] * zj for c, zj in zip(self.cols, z)), Fraction(0)) for i in range(self.dim)]

    def coordinates(self, x) -> list[Fraction]:
        """Least-squares coefficients of ``x`` in this basis (exact)."""
        x = [_frac(v) for v in x]
        rhs = [[sum((a * b for a, b in zip(c, x)), Fraction(0))] for c in self.cols]
        return [r[0] for r in _solve_exact(self.gram(), rhs)]

    def dual(self) -> "LatticeBasis":
        """Basis ``B (B^T B)^-1`` of the dual lattice within the span of ``B``."""
        n = self.n
        eye = [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]
        inv = _solve_exact(self.gram(), eye)
        rows = [
            [sum((self.cols[k][i] * inv[k][j] for k in range(n)), Fraction(0)) for j in range(n)]
            for i in range(self.dim)
        ]
        return LatticeBasis(rows)

    def scaled_column(self, i: int, factor: int) -> "LatticeBasis":
        cols = [list(c) for c in self.cols]
        cols[i] = [v * factor for v in cols[i]]
        return LatticeBasis.from_columns(cols)

    def __eq__(self, other) -> bool:
        return isinstance(other, LatticeBasis) and self.cols == other.cols

    def __repr__(self) -> str:
        return f"LatticeBasis(n={self.n}, dim={self.dim})"


def _as_basis(B) -> LatticeBasis:
    return B if isinstance(B, LatticeBasis) else LatticeBasis(B)


def gram_schmidt(B) -> GSO:
    """Gram-Schmidt data of the columns of ``B``, including the exact vectors."""
    basis = _as_basis(B)
    g = basis.gso
    vecs: list[list[Fraction]] = []
    for j, col in enumerate(basis.cols):
        v = list(col)
        for i in range(j):
            coef = g.mu[j][i]
            v = [a - coef * b for a, b in zip(v, vecs[i])]
        vecs.append(v)
    return GSO(g.mu, g.norms2, tuple(map(tuple, vecs)))


def _gs_coordinates(basis: LatticeBasis, x) -> list[Fraction]:
    """Coordinates of ``x`` along each Gram-Schmidt direction."""
    g = basis.gso
    x = [_frac(v) for v in x]
    proj = [sum((a * b for a, b in zip(c, x)), Fraction(0)) for c in basis.cols]
    tau: list[Fraction] = []
    for j in range(basis.n):
        acc = proj[j] - sum((g.mu[j][i] * g.norms2[i] * tau[i] for i in range(j)), Fraction(0))
        tau.append(acc / g.norms2[j])
    return tau


def _round_half_up(v: Fraction) -> int:
    return math.floor(v + Fraction(1, 2))


def babai_nearest_plane(B, target) -> np.ndarray:
    """Integer coefficients of the nearest-plane lattice point to ``target``."""
    basis = _as_basis(B)
    g = basis.gso
    tau = _gs_coordinates(basis, target)
    n = basis.n
    z = [0] * n
    for i in range(n - 1, -1, -1):
        c = tau[i] - sum((z[j] * g.mu[j][i] for j in range(i + 1, n)), Fraction(0))
        z[i] = _round_half_up(c)
    return np.array(z, dtype=object)


def _klein_coefficients(basis: LatticeBasis, sigma: float, rng, size: int, center=None) -> np.ndarray:
    g = basis.gso
    mu = g.mu_float
    widths = sigma / g.norms
    n = basis.n
    tau = np.zeros(n) if center is None else np.array([float(v) for v in _gs_coordinates(basis, center)])
    z = np.zeros((size, n), dtype=np.int64)
    for i in range(n - 1, -1, -1):
        c = tau[i] - z[:, i + 1 :] @ mu[i + 1 :, i] if i + 1 < n else np.full(size, tau[i])
        # widths are in the rho_s convention, the sampler takes a deviation
        z[:, i] = discrete_gaussian_coset(c, widths[i] / math.sqrt(2 * math.pi), rng).astype(np.int64)
    return z


def klein_floor(basis, c: float = 2.0) -> float:
    """Smallest width accepted by the randomized nearest-plane sampler."""
    basis = _as_basis(basis)
    return c * math.sqrt(math.log(max(basis.n, 2))) * basis.max_gs_norm


def sample_lattice_gaussian(B, sigma: float, rng=None, size: int | None = None, *, c: float = 2.0, center=None):
    """Draw from the discrete Gaussian of width ``sigma`` over the lattice.

    Returns float lattice vectors, one per row when ``size`` is given.  The
    width follows ``rho_s(x) = exp(-pi |x|^2 / s^2)``.
    """
    basis = _as_basis(B)
    floor = klein_floor(basis, c)
    if sigma < floor:
        raise ValueError(f"sigma {sigma:g} below the sampler floor {floor:g}")
    gen = as_generator(rng)
    z = _klein_coefficients(basis, sigma, gen, 1 if size is None else size, center)
    vecs = z @ basis.matrix().T
    return vecs[0] if size is None else vecs


def gaussian_tail_bound(n: int, t: float) -> tuple[float, float]:
    """Mass fraction of a shifted lattice outside radius ``t sqrt(n / 2 pi)``: sharp and weak forms."""
    if t < 1:
        raise ValueError("t must be >= 1")
    sharp = math.exp(-n * (t * t - 2 * math.log(t) - 1) / 2)
    weak = math.exp(-n * (t - 1) ** 2 / 2)
    return sharp, weak


def smoothing_width(n: int, lam1: float, t: float = 2.0) -> float:
    """Width ``t sqrt(n / 2 pi) / lam1``, above the dual smoothing parameter for epsilon = 2 tail(t)."""
    return t * math.sqrt(n / (2 * math.pi)) / lam1


# --------------------------------------------------------------------------
# bounded distance decoding


@dataclass
class BddInstance:
    basis: LatticeBasis
    x: tuple[Fraction, ...]
    B_bound: float = math.inf
    beta: float = 2.0
    norm: str = "inf"
    lambda1: float | None = None
    promise: bool = True

    def __post_init__(self):
        self.basis = _as_basis(self.basis)
        self.x = tuple(_frac(v) for v in self.x)
        if len(self.x) != self.basis.dim:
            raise ValueError("target dimension does not match the basis")
        if self.norm not in ("inf", "l2"):
            raise ValueError("norm must be 'inf' or 'l2'")

    def distance(self, s) -> float:
        p = self.basis.apply(s)
        return math.sqrt(float(sum((a - b) ** 2 for a, b in zip(p, self.x))))


def bdd_to_lwe_samples(inst: BddInstance, q: int, sigma: float, count: int, rng=None, *, t: float = 2.0) -> SampleList:
    """LWE samples ``(A^T y mod q, <y, x> mod q)`` with ``y`` from the dual Gaussian.

    The secret of the samples is the coefficient vector ``s`` of the lattice
    point closest to ``x`` (reduced mod q); their error is ``-<y, v>``.
    """
    if count <= 0:
        raise ValueError("count must be positive")
    basis = inst.basis
    if inst.lambda1 is None:
        warnings.warn("dual smoothing cannot be certified without lambda1", HeuristicSamplingWarning, stacklevel=2)
    elif sigma < q * smoothing_width(basis.n, inst.lambda1, t):
        warnings.warn("sampling width below the certified smoothing bound", HeuristicSamplingWarning, stacklevel=2)
    dual = _dual_of(basis)
    gen = as_generator(rng)
    floor = klein_floor(dual)
    if sigma < floor:
        raise ValueError(f"sigma {sigma:g} below the sampler floor {floor:g}")
    z = _klein_coefficients(dual, sigma, gen, count)
    # A^T y = z exactly; <y, x> = <z, w> with w the coordinates of x in the basis
    w = basis.coordinates(inst.x)
    w_int = np.array([math.floor(v) for v in w], dtype=object)
    w_frac = np.array([float(v - math.floor(v)) for v in w])
    b_int = np.mod(z.astype(object) @ w_int, q).astype(np.float64)
    b = np.mod(b_int + z @ w_frac, q)
    return SampleList(np.mod(z, q), b, q)


_DUAL_CACHE: dict[int, tuple[LatticeBasis, LatticeBasis]] = {}


def _dual_of(basis: LatticeBasis) -> LatticeBasis:
    hit = _DUAL_CACHE.get(id(basis))
    if hit is not None and hit[0] is basis:
        return hit[1]
    dual = basis.dual()
    if len(_DUAL_CACHE) > 64:
        _DUAL_CACHE.clear()
    _DUAL_CACHE[id(basis)] = (basis, dual)
    return dual


LweSolver = Callable[[SampleList, float, np.ndarray], np.ndarray]


class BddFailure(RuntimeError):
    def __init__(self, message: str, trace: list):
        super().__init__(message)
        self.trace = trace


def _centered(v: np.ndarray, q: int) -> np.ndarray:
    r = np.mod(v.astype(np.int64), q)
    return np.where(r > q // 2, r - q, r)


def fft_lwe_solver(samples: SampleList, bias: float, bounds: np.ndarray) -> np.ndarray:
    """LWE oracle for small dimensions: one Fourier transform over the whole secret."""
    from .solve import find_secret_fft

    return find_secret_fft(samples).s


def bkw_lwe_solver(tail: int = 2, m_max: float = 2**20, binary: bool = False) -> LweSolver:
    """LWE oracle running the reduction pipeline with practical plans."""
    from .model import Binary, BoundedPerCoordinate, DiscreteGaussian, LweParams, Uniform
    from .reduce import plan
    from .solve import find_secret_fft, solve_lwe

    def solver(samples: SampleList, bias: float, bounds: np.ndarray) -> np.ndarray:
        n, q = samples.dim, samples.q
        if n <= tail:
            return find_secret_fft(samples).s
        stddev = q * math.sqrt(max(-math.log(bias), 1e-12) / (2 * math.pi**2))

        def params(d):
            if binary:
                secret = Binary()
            elif np.all(bounds[:d] < q / 4):
                secret = BoundedPerCoordinate(tuple(float(v) for v in bounds[:d]))
            else:
                secret = Uniform()
            return LweParams(d, q, DiscreteGaussian(stddev), secret)

        def replan(d):
            return plan(params(d), model="practical", tail=min(tail, d), m_max=m_max)

        first = replan(n)
        if first.m > len(samples):
            raise ValueError(f"oracle needs {first.m} samples, got {len(samples)}")
        return solve_lwe(samples, first, "find_secret", replan=replan).s

    solver.samples_needed = lambda n, q, bias, bounds: _oracle_budget(n, q, bias, bounds, tail, m_max, binary)
    return solver


def _oracle_budget(n, q, bias, bounds, tail, m_max, binary) -> int:
    from .model import Binary, BoundedPerCoordinate, DiscreteGaussian, LweParams, Uniform
    from .reduce import final_requirement, plan

    if n <= tail:
        return math.ceil(final_requirement(n, q, 0.01) / bias**2)
    stddev = q * math.sqrt(max(-math.log(bias), 1e-12) / (2 * math.pi**2))
    if binary:
        secret = Binary()
    elif np.all(bounds < q / 4):
        secret = BoundedPerCoordinate(tuple(float(v) for v in bounds))
    else:
        secret = Uniform()
    return plan(LweParams(n, q, DiscreteGaussian(stddev), secret), model="practical", tail=tail, m_max=m_max).m


def _default_budget(n: int, q: int, bias: float) -> int:
    from .reduce import final_requirement

    return math.ceil(final_requirement(n, q, 0.01) / bias**2)


def _descend(inst, q, sigma, bias, top, solver, gen, t, depth, count, max_samples) -> np.ndarray:
    basis = inst.basis
    n = basis.n
    x = list(inst.x)
    total = np.zeros(n, dtype=object)
    scale = 1
    bounds = top.copy()
    for _ in range(depth):
        budget = count
        if budget is None:
            need = getattr(solver, "samples_needed", None)
            budget = need(n, q, bias, bounds) if need else _default_budget(n, q, bias)
        if budget > max_samples:
            raise ValueError(f"scale needs {budget} samples, cap is {max_samples}")
        cur = BddInstance(basis, x, inst.B_bound, inst.beta, inst.norm, inst.lambda1)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", HeuristicSamplingWarning)
            samples = bdd_to_lwe_samples(cur, q, sigma, budget, gen, t=t)
        r = _centered(np.asarray(solver(samples, bias, bounds)), q).astype(object)
        total = total + scale * r
        shift = basis.apply(r)
        x = [(a - b) / q for a, b in zip(x, shift)]
        scale *= q
        bounds = np.maximum(1.0, np.ceil(bounds / q))
        if not any(r):
            break
    return total + scale * babai_nearest_plane(basis, x)


@dataclass
class BddResult:
    s: np.ndarray
    distance: float
    trace: list = field(default_factory=list)


def solve_bdd(
    inst: BddInstance,
    q: int,
    lwe_solver: LweSolver | None = None,
    rng=None,
    *,
    t: float = 2.0,
    lambda_start: float | None = None,
    steps: int | None = None,
    depth: int | None = None,
    stop_radius: float | None = None,
    count: int | None = None,
    max_samples: int = 1 << 21,
) -> BddResult:
    """Decode ``inst.x`` with LWE calls over a decreasing schedule of guesses for lambda_1.

    For each guess ``lam`` the dual width is ``t q sqrt(n / 2 pi) / lam``.
    Each LWE call recovers the secret modulo ``q`` (centred residues), the
    target is shifted and divided by ``q``, and after ``depth`` rounds the
    remainder is decoded by nearest plane.  The schedule starts at the
    shortest basis column unless ``lambda_start`` is given, which assumes a
    reduced input basis.  The closest candidate over all guesses is
    returned; ``stop_radius`` ends the search as soon as a candidate is at
    least that close.
    """
    basis = inst.basis
    n = basis.n
    solver = lwe_solver or fft_lwe_solver
    gen = as_generator(rng)
    if lambda_start is None:
        lambda_start = min(math.sqrt(float(sum(v * v for v in c))) for c in basis.cols)
    steps = n * n if steps is None else steps
    depth = n if depth is None else depth
    top = np.full(n, inst.B_bound if math.isfinite(inst.B_bound) else q / 2)
    best: BddResult | None = None
    trace: list = []
    floor = klein_floor(_dual_of(basis))
    for i in range(steps + 1):
        lam = lambda_start * (1 - 1 / n) ** i
        sigma = t * q * math.sqrt(n / (2 * math.pi)) / lam
        if sigma < floor:
            trace.append({"lambda": lam, "skipped": "below sampler floor"})
            continue
        # error norm at most lambda_1 / beta, with lambda_1 ~ lam when unknown
        ratio = 1.0 if inst.lambda1 is None else inst.lambda1 / lam
        bias = math.exp(-(t**2) * n * ratio**2 / (2 * inst.beta**2))
        try:
            total = _descend(inst, q, sigma, bias, top, solver, gen, t, depth, count, max_samples)
        except (ValueError, RuntimeError) as exc:
            trace.append({"lambda": lam, "error": str(exc)})
            continue
        dist = inst.distance(total)
        trace.append({"lambda": lam, "distance": dist})
        if best is None or dist < best.distance:
            best = BddResult(np.array([int(v) for v in total], dtype=object), dist)
        if stop_radius is not None and dist <= stop_radius:
            break
    if best is None:
        raise BddFailure("LWE oracle failed at every scale", trace)
    best.trace = trace
    return best


def babai_oracle(basis: LatticeBasis, target) -> np.ndarray:
    """BDD oracle by nearest plane; exact whenever the error is below half the smallest GS norm."""
    return babai_nearest_plane(basis, target)


def lwe_bdd_oracle(
    q: int, lwe_solver: LweSolver | None = None, rng=None, *, beta: float = 2.0, B_bound: float = math.inf, **kw
) -> Callable:
    """BDD oracle backed by :func:`solve_bdd` with a fixed modulus and LWE solver."""
    gen = as_generator(rng)

    def oracle(basis: LatticeBasis, target) -> np.ndarray:
        inst = BddInstance(basis, target, B_bound=B_bound, beta=beta)
        return solve_bdd(inst, q, lwe_solver, gen, **kw).s

    return oracle


# --------------------------------------------------------------------------
# unique and gap shortest vector


def _is_prime(p: int) -> bool:
    if p < 2:
        return False
    return all(p % f for f in range(2, math.isqrt(p) + 1))


def prime_between(lo: float, hi: float) -> int:
    p = max(2, math.ceil(lo))
    while p <= hi:
        if _is_prime(p):
            return p
        p += 1
    raise ValueError(f"no prime in [{lo:g}, {hi:g}]")


@dataclass
class UniqueSvpResult:
    s: np.ndarray
    norm: float
    calls: int


def _norm(basis: LatticeBasis, s) -> float:
    return math.sqrt(float(sum(v * v for v in basis.apply(s))))


def unique_svp(basis, B: float, beta: float, bdd: Callable | None = None) -> UniqueSvpResult:
    """Shortest vector through BDD calls on the sublattices with one column scaled by a prime.

    For every index ``i`` and residue ``r`` the oracle decodes ``r a_i`` in
    the sublattice whose ``i``-th column is multiplied by ``p``; the answer
    ``z`` gives the candidate ``r e_i - z'`` with ``z'_i = p z_i``.
    """
    basis = _as_basis(basis)
    oracle = bdd or babai_oracle
    p = prime_between(beta, 2 * beta)
    n = basis.n
    best: UniqueSvpResult | None = None
    calls = 0
    for i in range(n):
        sub = basis.scaled_column(i, p)
        col = basis.cols[i]
        for r in range(1, p):
            calls += 1
            try:
                z = oracle(sub, [r * v for v in col])
            except (ValueError, RuntimeError):
                continue
            s = [-int(v) for v in z]
            s[i] = r - p * int(z[i])
            if not any(s) or max(abs(v) for v in s) > max(B, 1) * p:
                continue
            nrm = _norm(basis, s)
            if best is None or nrm < best.norm:
                best = UniqueSvpResult(np.array(s, dtype=object), nrm, 0)
    if best is None:
        raise RuntimeError("every BDD call failed")
    best.calls = calls
    return best


class GapVerdict:
    SMALL_VECTOR_EXISTS = "SmallVectorExists"
    LAMBDA_LARGE = "LambdaLarge"


def ball_uniform(n: int, radius: float, rng, size: int | None = None) -> np.ndarray:
    """Uniform points in the n-ball: Gaussian direction times radius U^(1/n)."""
    gen = as_generator(rng)
    m = 1 if size is None else size
    g = gen.standard_normal((m, n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * gen.random(m) ** (1 / n)
    out = g * r[:, None]
    return out[0] if size is None else out


def box_gaussian(n: int, sigma: float, box: int, rng, size: int | None = None) -> np.ndarray:
    """Integer vectors with mass proportional to exp(-|x|^2 / (2 sigma^2)) on the box |x_i| <= box."""
    gen = as_generator(rng)
    m = 1 if size is None else size
    support = np.arange(-box, box + 1)
    w = np.exp(-(support.astype(np.float64) ** 2) / (2 * sigma**2))
    out = gen.choice(support, size=(m, n), p=w / w.sum())
    return out[0] if size is None else out


def box_acceptance_bound(n: int, sigma: float, box: float, R: float) -> float:
    """Lower bound on Pr[|x|_inf <= box - R] for the box Gaussian."""
    return math.exp(-2 * n * math.exp(-(((box - R) / sigma - 1) ** 2) / 2))


def gap_trials(n: int, R: float, d: float, sigma: float, box: float, factor: float = 1.0) -> int:
    """Trial count d n / (eps xi) (1 - d^2)^(-n/2) of the gap test."""
    xi = math.exp(-n * R * R / (2 * sigma**2) - 2 * math.sqrt(n) * R / sigma)
    eps = box_acceptance_bound(n, sigma, box, R) / 2
    return max(1, math.ceil(factor * d * n / eps / xi * (1 - d * d) ** (-n / 2)))


def gap_svp_test(
    basis,
    R: float,
    d: float,
    sigma: float,
    bdd: Callable | None = None,
    rng=None,
    *,
    box: int | None = None,
    trials: int | None = None,
    budget: int = 1 << 20,
) -> str:
    """Decide between a short lattice vector and a large minimum by checking BDD answers.

    Each trial draws ``x`` from the box Gaussian and ``e`` uniformly in the
    ball of radius ``1/d`` and asks the oracle to decode ``A x + e``.  Any
    wrong answer means a short vector exists.
    """
    if not 0 < d < 1:
        raise ValueError("d must lie in (0, 1)")
    basis = _as_basis(basis)
    n = basis.n
    box = math.ceil(R + 3 * sigma) if box is None else box
    if box - R < 2 * sigma:
        raise ValueError("box must exceed R by at least 2 sigma")
    K = gap_trials(n, R, d, sigma, box) if trials is None else trials
    if K > budget:
        raise ValueError(f"gap test needs {K} trials, budget is {budget}")
    oracle = bdd or babai_oracle
    gen = as_generator(rng)
    for _ in range(K):
        x = box_gaussian(n, sigma, box, gen)
        e = ball_uniform(basis.dim, 1 / d, gen)
        point = [_frac(v) for v in basis.apply(x)]
        target = [a + Fraction(float(b)) for a, b in zip(point, e)]
        got = oracle(basis, target)
        if any(int(a) != int(b) for a, b in zip(got, x)):
            return GapVerdict.SMALL_VECTOR_EXISTS
    return GapVerdict.LAMBDA_LARGE


# --------------------------------------------------------------------------
# subset sum


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def ball_point_bound(n: int, r: float) -> float:
    """Upper bound V_n (r + sqrt(n)/2)^n on the integer points of norm at most r."""
    return unit_ball_volume(n) * (r + math.sqrt(n) / 2) ** n


def subset_sum_constant_floor(n: int, density: float, c: float) -> float:
    return c * 2 ** (1 / density) * math.sqrt(n) / 2


_C_LIMIT = math.sqrt(2 / math.pi / math.e)


def subset_sum_embed(a: Sequence[int], t: int, C: int, *, c: float | None = None, M: int | None = None) -> BddInstance:
    """Embed ``<a, s> = t`` as decoding ``(1/2, ..., 1/2, C t)`` in the lattice of ``[I; C a]``.

    ``c`` (below sqrt(2 / (pi e))) and the modulus bound ``M`` fix the
    density and the minimum admissible ``C``; without them no floor is
    enforced.
    """
    a = [int(v) for v in a]
    n = len(a)
    if n == 0:
        raise ValueError("empty instance")
    if c is not None:
        if not 0 < c < _C_LIMIT:
            raise ValueError(f"c must lie in (0, {_C_LIMIT:.4f})")
        bound = M if M is not None else max(max(a) + 1, 2)
        density = n / math.log2(bound)
        floor = subset_sum_constant_floor(n, density, c)
        if C <= floor:
            raise ValueError(f"C = {C} is not above the floor {floor:g}")
    cols = []
    for j in range(n):
        col = [0] * (n + 1)
        col[j] = 1
        col[n] = C * a[j]
        cols.append(col)
    basis = LatticeBasis.from_columns(cols)
    half = Fraction(1, 2)
    x = [half] * n + [Fraction(C * int(t))]
    beta = C / (math.sqrt(n) / 2)
    return BddInstance(basis, x, B_bound=1, beta=beta, norm="inf")


def embedding_distance2(inst: BddInstance, s) -> Fraction:
    """Exact squared distance between the lattice point of ``s`` and the target."""
    p = inst.basis.apply(s)
    return sum(((u - v) ** 2 for u, v in zip(p, inst.x)), Fraction(0))


def short_kernel_probability(n: int, M: int, beta: float) -> float:
    """B_n(beta sqrt(n)/2) / M, the chance that a short kernel vector exists."""
    return ball_point_bound(n, beta * math.sqrt(n) / 2) / M


class SubsetSumFailure(RuntimeError):
    pass


@dataclass
class SubsetSumResult:
    s: np.ndarray
    wraps: int
    trace: list


def _verify(a, s, t: int, M: int | None) -> bool:
    if any(v not in (0, 1) for v in s):
        return False
    total = sum(int(x) * int(y) for x, y in zip(a, s))
    return total == t if M is None else total % M == t % M


def _solve_single(a, t, C, q, solver, gen, lambda_start, count) -> tuple[np.ndarray | None, list]:
    n = len(a)
    if t == sum(a):
        return np.ones(n, dtype=np.int64), [{"shortcut": "all ones"}]
    if t == 0:
        return np.zeros(n, dtype=np.int64), [{"shortcut": "empty"}]
    inst = subset_sum_embed(a, t, C)
    radius = math.sqrt(n) / 2 + 1e-9
    try:
        res = solve_bdd(
            inst, q, solver, gen, lambda_start=lambda_start, steps=n, depth=2,
            stop_radius=radius, count=count,
        )
    except BddFailure as exc:
        return None, exc.trace
    s = np.array([int(v) for v in res.s], dtype=np.int64)
    return s, res.trace


def solve_subset_sum(
    a: Sequence[int],
    t: int,
    *,
    M: int | None = None,
    modular: bool = False,
    C: int | None = None,
    c: float = 0.45,
    q: int | None = None,
    lwe_solver: LweSolver | None = None,
    count: int | None = None,
    rng=None,
) -> SubsetSumResult:
    """Find ``s`` in {0,1}^n with ``<a, s> = t`` (or ``= t mod M`` when ``modular``).

    The embedding scale defaults to the smallest admissible ``C`` for the
    density ``n / log2 M``; the decoding schedule starts at ``C``, a lower
    bound on the first minimum unless a short kernel vector exists.
    """
    a = [int(v) for v in a]
    n = len(a)
    bound = M if M is not None else max(max(a) + 1, 2)
    if C is None:
        C = math.floor(subset_sum_constant_floor(n, n / math.log2(bound), c)) + 1
    if q is None:
        q = max(2 ** n + 1, 3)
        while not _is_prime(q):
            q += 1
    solver = lwe_solver or bkw_lwe_solver(tail=2, binary=True)
    gen = as_generator(rng)
    trace: list = []
    wraps = range(n) if modular else range(1)
    if modular and M is None:
        raise ValueError("modular instances need M")
    for j in wraps:
        target = t % M + j * M if modular else t
        s, tr = _solve_single(a, target, C, q, solver, gen, C, count)
        trace.append({"wrap": j, "trace": tr})
        if s is not None and _verify(a, s, t, M if modular else None):
            return SubsetSumResult(s, j, trace)
    raise SubsetSumFailure("no candidate passed verification")
