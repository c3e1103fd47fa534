"""Quantized dimension reduction.

A reduction step looks at a block of coordinates ``[d_lo, d_hi)``, rounds
each signed coordinate to the nearest multiple of ``D`` and combines samples
that land in the same cell.  The block coordinates of the combination are
then bounded by ``D`` while the noise of the scalar doubles.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .gen import as_generator
from .model import Bernoulli, LweParams, SampleList, round_half_up, signed


class StarvationWarning(RuntimeWarning):
    """The L2 step ran out of occupied cells early; its output is partial."""


@dataclass(frozen=True)
class Quantizer:
    D: float
    lo: int
    hi: int

    def __post_init__(self):
        if self.D < 1:
            raise ValueError("quantization coefficient D must be >= 1")
        if self.hi <= self.lo:
            raise ValueError("empty block: need d_hi > d_lo")

    def cells(self, A: np.ndarray, q: int) -> np.ndarray:
        """Rounded block coordinates, one row per sample."""
        S = signed(np.asarray(A[:, self.lo : self.hi], dtype=np.int64), q)
        if self.D == 1:
            return S
        return round_half_up(S / self.D)

    def cell_count(self, q: int) -> int:
        """Number of distinct rounded values per coordinate."""
        top = int(round_half_up((q // 2) / self.D))
        bottom = int(round_half_up(-((q - 1) // 2) / self.D))
        return top - bottom + 1


def _keys(R: np.ndarray) -> np.ndarray:
    """Collapse rows of small integers into one int64 key per row."""
    if R.shape[1] == 0:
        return np.zeros(R.shape[0], dtype=np.int64)
    lo = R.min(axis=0)
    span = R.max(axis=0) - lo + 1
    if np.sum(np.log2(span.astype(np.float64))) < 62:
        key = np.zeros(R.shape[0], dtype=np.int64)
        for j in range(R.shape[1]):
            key = key * int(span[j]) + (R[:, j] - lo[j])
        return key
    _, inv = np.unique(R, axis=0, return_inverse=True)
    return inv.astype(np.int64).ravel()


def _check_block(lst: SampleList, D: float, d_lo: int, d_hi: int) -> Quantizer:
    if d_hi <= d_lo:
        raise ValueError("empty block: need d_hi > d_lo")
    if d_lo < 0 or d_hi > lst.dim:
        raise ValueError("block out of range")
    return Quantizer(D, d_lo, d_hi)


def _combine(lst: SampleList, first: np.ndarray, second: np.ndarray, sign=None, independent=None) -> SampleList:
    q = lst.q
    A1 = lst.A[first].astype(np.int64)
    A2 = lst.A[second].astype(np.int64)
    if sign is None:
        A = np.mod(A1 - A2, q)
        b = np.mod(lst.b[first] - lst.b[second], q)
    else:
        sg = sign.astype(np.int64)[:, None]
        A = np.mod(A1 - sg * A2, q)
        b = np.mod(lst.b[first] - sign * lst.b[second], q)
    return SampleList(
        A.astype(lst.A.dtype),
        b,
        q,
        lst.depth + 1,
        lst.independent if independent is None else independent,
    )


def reduce_step(lst: SampleList, D: float, d_lo: int, d_hi: int) -> SampleList:
    """One exact step: pair consecutive occupants of each cell, each sample used once.

    Processing follows input order: the second occupant of a cell is paired
    with the first, the fourth with the third, and so on.  Outputs appear in
    the order of their later member, which is exactly what a sequential
    single-table scan produces.
    """
    quant = _check_block(lst, D, d_lo, d_hi)
    if len(lst) < 2:
        return lst.replace(A=lst.A[:0], b=lst.b[:0], depth=lst.depth + 1)
    key = _keys(quant.cells(lst.A, lst.q))
    order = np.argsort(key, kind="stable")
    ks = key[order]
    start = np.r_[True, ks[1:] != ks[:-1]]
    group_start = np.maximum.accumulate(np.where(start, np.arange(len(ks)), 0))
    rank = np.arange(len(ks)) - group_start
    later = np.flatnonzero(rank % 2 == 1)
    first = order[later - 1]
    second = order[later]
    out_order = np.argsort(second, kind="stable")
    return _combine(lst, second[out_order], first[out_order])


def _negation_keys(quant: Quantizer, lst: SampleList) -> tuple[np.ndarray, np.ndarray]:
    R = quant.cells(lst.A, lst.q)
    negA = np.mod(-lst.A.astype(np.int64), lst.q)
    Rn = quant.cells(negA, lst.q)
    both = _keys(np.vstack([R, Rn]))
    return both[: len(lst)], both[len(lst) :]


def reduce_step_greedy(
    lst: SampleList,
    D: float,
    d_lo: int,
    d_hi: int,
    keep: int | None = None,
    bucket_cap: int = 256,
    negate: bool = True,
) -> SampleList:
    """Keep the ``keep`` smallest in-cell combinations by L2 norm over the block.

    Every sample is entered in its own cell and, with ``negate``, in the cell
    of its negation, so sums ``a_i + a_j`` compete with differences.  Cells
    hold at most ``bucket_cap`` entries.  Outputs are no longer independent.
    """
    quant = _check_block(lst, D, d_lo, d_hi)
    q, m = lst.q, len(lst)
    use_neg = negate and q > 2
    if use_neg:
        kp, kn = _negation_keys(quant, lst)
        key = np.concatenate([kp, kn])
        idx = np.concatenate([np.arange(m), np.arange(m)])
        sgn = np.concatenate([np.ones(m, np.int8), -np.ones(m, np.int8)])
    else:
        key = _keys(quant.cells(lst.A, q))
        idx = np.arange(m)
        sgn = np.ones(m, np.int8)

    order = np.argsort(key, kind="stable")
    ks, idx, sgn = key[order], idx[order], sgn[order]
    start = np.r_[True, ks[1:] != ks[:-1]] if len(ks) else np.zeros(0, bool)
    gs = np.maximum.accumulate(np.where(start, np.arange(len(ks)), 0)) if len(ks) else start.astype(np.int64)
    rank = np.arange(len(ks)) - gs
    live = rank < bucket_cap
    ks, idx, sgn, gs = ks[live], idx[live], sgn[live], gs[live]
    starts = np.flatnonzero(np.r_[True, ks[1:] != ks[:-1]]) if len(ks) else np.zeros(0, np.int64)
    sizes = np.diff(np.r_[starts, len(ks)])
    max_size = int(sizes.max(initial=0))

    I, J, S = [], [], []
    pos = np.arange(len(ks))
    for off in range(1, max_size):
        u = pos[: len(ks) - off]
        v = u + off
        ok = ks[u] == ks[v]
        u, v = u[ok], v[ok]
        # entry u is +/- a_i, entry v is +/- a_j; combination = s_u a_i - s_v a_j
        i, j = idx[u], idx[v]
        s = (sgn[u] * sgn[v]).astype(np.int8)
        ok2 = i != j
        I.append(i[ok2]); J.append(j[ok2]); S.append(s[ok2])
    if I:
        I, J, S = np.concatenate(I), np.concatenate(J), np.concatenate(S)
    else:
        I = J = np.zeros(0, np.int64); S = np.zeros(0, np.int8)
    # canonical form (min index first) to drop mirrored duplicates
    lo_i, hi_j = np.minimum(I, J), np.maximum(I, J)
    code = (lo_i.astype(np.int64) * m + hi_j) * 2 + (S > 0)
    _, first = np.unique(code, return_index=True)
    I, J, S = lo_i[first], hi_j[first], S[first]

    blockA = signed(lst.A[:, d_lo:d_hi].astype(np.int64), q)
    comb = signed(np.mod(blockA[I] - S[:, None].astype(np.int64) * blockA[J], q), q)
    norms = np.einsum("ij,ij->i", comb.astype(np.float64), comb.astype(np.float64))
    if keep is None:
        keep = len(norms)
    sel = np.lexsort((J, I, norms))[:keep]
    return _combine(lst, I[sel], J[sel], sign=S[sel].astype(np.float64), independent=False)


# --------------------------------------------------------------------------
# L2 variant


def _offset_envelope(sigma: float) -> tuple[np.ndarray, np.ndarray]:
    """Offsets u with mass proportional to max over [u, u+1] of exp(-pi t^2 / sigma^2)."""
    half = int(math.ceil(12 * sigma)) + 1
    u = np.arange(-half, half + 1)
    w = np.exp(-np.pi * np.minimum(u**2, (u + 1) ** 2) / sigma**2)
    return u, np.cumsum(w) / w.sum()


def accept_probability(u, frac, sigma: float):
    """Rejection weight turning envelope offsets into a discrete Gaussian.

    ``frac`` is the low part over the step, in [0, 1).  The weight is
    ``exp(-pi ((u + frac)^2 - min(u^2, (u+1)^2)) / sigma^2)`` per coordinate.
    """
    u = np.asarray(u, dtype=np.float64)
    frac = np.asarray(frac, dtype=np.float64)
    e = (u + frac) ** 2 - np.minimum(u**2, (u + 1) ** 2)
    return np.exp(-np.pi * np.sum(np.atleast_1d(e), axis=-1) / sigma**2)


def reduce_step_l2(
    lst: SampleList,
    D: int,
    d_lo: int,
    d_hi: int,
    sigma_i: float,
    rng=None,
    batch: int = 4096,
) -> SampleList:
    """Pairing by two-sided rejection sampling so that block coordinates become Gaussian.

    Samples sit in cells ``floor(a / D)`` of ``(Z/(q/D))^w``.  Each round draws
    a common uniform centre and two offsets from the step envelope, pops one
    sample from each offset cell and keeps each with :func:`accept_probability`.
    An accepted sample's block equals ``D * offset + (a mod D)`` relative to
    the centre and is distributed as the discrete Gaussian of width
    ``sigma_i * D``; the output is the difference of the two.  The loop runs
    while at least a third of the cells are occupied.
    """
    q = lst.q
    D = int(D)
    if D < 1 or q % D:
        raise ValueError("D must divide q")
    if d_hi <= d_lo:
        raise ValueError("empty block: need d_hi > d_lo")
    if sigma_i < 2:
        raise ValueError("sigma_i must be >= 2")
    if D == 1:
        return reduce_step(lst, 1, d_lo, d_hi)
    gen = as_generator(rng)
    K = q // D
    w = d_hi - d_lo
    block = lst.A[:, d_lo:d_hi].astype(np.int64)
    cell = block // D
    low = (block % D) / D
    radix = K ** np.arange(w - 1, -1, -1, dtype=np.int64) if w * math.log2(K) < 62 else None
    if radix is None:
        raise ValueError("block too wide for the L2 step")
    key = cell @ radix
    order = np.argsort(key, kind="stable")
    skey = key[order]
    uniq, first, counts = np.unique(skey, return_index=True, return_counts=True)
    total_cells = K**w
    slot_of = {int(k): i for i, k in enumerate(uniq)}
    ptr = first.copy()
    end = first + counts
    occupied = len(uniq)
    if occupied < total_cells / 3:
        warnings.warn("L2 step starved before its first pair; output is partial", StarvationWarning)
    off_vals, off_cdf = _offset_envelope(sigma_i)

    out_i, out_j = [], []
    while occupied >= total_cells / 3:
        centres = gen.integers(0, K, size=(batch, w))
        u = off_vals[np.searchsorted(off_cdf, gen.random((batch, w)), side="right").clip(max=len(off_vals) - 1)]
        v = off_vals[np.searchsorted(off_cdf, gen.random((batch, w)), side="right").clip(max=len(off_vals) - 1)]
        coin = gen.random((batch, 2))
        ku = np.mod(centres + u, K) @ radix
        kv = np.mod(centres + v, K) @ radix
        for t in range(batch):
            su = slot_of.get(int(ku[t]))
            sv = slot_of.get(int(kv[t]))
            if su is None or sv is None or ptr[su] >= end[su] or ptr[sv] >= end[sv]:
                continue
            if su == sv and end[su] - ptr[su] < 2:
                continue
            i = order[ptr[su]]; ptr[su] += 1
            j = order[ptr[sv]]; ptr[sv] += 1
            occupied -= (ptr[su] == end[su]) + (sv != su and ptr[sv] == end[sv])
            if coin[t, 0] < accept_probability(u[t], low[i], sigma_i) and coin[t, 1] < accept_probability(v[t], low[j], sigma_i):
                out_i.append(i)
                out_j.append(j)
            if occupied < total_cells / 3:
                break
    out_i = np.asarray(out_i, dtype=np.int64)
    out_j = np.asarray(out_j, dtype=np.int64)
    return _combine(lst, out_i, out_j)


# --------------------------------------------------------------------------
# chi-square radius predictor


def chi2_cdf_even(x: float, dim: int) -> float:
    """P[chi^2_dim <= x] for even ``dim`` via the finite Poisson sum."""
    if dim < 2 or dim % 2:
        raise ValueError("dim must be even and >= 2")
    if x <= 0:
        return 0.0
    h = x / 2
    term, total = 1.0, 1.0
    for i in range(1, dim // 2):
        term *= h / i
        total += term
    return max(0.0, 1.0 - math.exp(-h) * total) if h < 700 else 1.0


def predict_chi2_radius(dim: int, proportion: float, tol: float = 1e-9) -> float:
    """Radius R such that a fraction ``proportion`` of unit Gaussian vectors has norm <= R."""
    if dim < 2 or dim % 2:
        raise ValueError("dim must be even and >= 2")
    if not 0 < proportion < 1:
        raise ValueError("proportion must lie strictly between 0 and 1")
    lo, hi = 0.0, float(dim)
    while chi2_cdf_even(hi, dim) < proportion:
        lo, hi = hi, 2 * hi
        if hi > 1e300:
            return math.inf
    while hi - lo > tol * max(1.0, hi):
        mid = (lo + hi) / 2
        if chi2_cdf_even(mid, dim) < proportion:
            lo = mid
        else:
            hi = mid
    return math.sqrt((lo + hi) / 2)


# --------------------------------------------------------------------------
# planning


class PlanInfeasible(ValueError):
    """The requested parameters admit no reduction plan."""


MODES = ("general", "smallmod", "lpn")
MODELS = ("theory", "practical")
REDUCERS = ("exact", "greedy", "l2")


@dataclass(frozen=True)
class ReductionPlan:
    """Schedule of reduction steps.

    Step ``i`` reduces coordinates ``[d[i], d[i+1])`` with coefficient
    ``D[i]``.  The last ``tail`` coordinates are never reduced and are left
    for the Fourier finisher, so ``d[k] + tail == n``.
    """

    n: int
    q: int
    x: float
    k: int
    d: tuple[int, ...]
    D: tuple[float, ...]
    m: int
    predicted_final_bias: float
    predicted_cost_bits: float
    mode: str = "general"
    model: str = "theory"
    reducer: str = "exact"
    tail: int = 0
    keep: int | None = None
    sigma: tuple[float, ...] | None = None
    step_bias: tuple[float, ...] = ()
    step_sizes: tuple[float, ...] = ()
    log_m: float | None = None
    log_N: float = 0.0
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "d", tuple(int(v) for v in self.d))
        object.__setattr__(self, "D", tuple(float(v) for v in self.D))
        if self.sigma is not None:
            object.__setattr__(self, "sigma", tuple(float(v) for v in self.sigma))
        if self.k < 0 or len(self.d) != self.k + 1 or len(self.D) != self.k:
            raise ValueError("plan needs k+1 boundaries and k coefficients")
        if self.d[0] != 0 or any(b < a for a, b in zip(self.d, self.d[1:])):
            raise ValueError("boundaries must start at 0 and be non-decreasing")
        if self.tail < 0 or self.d[-1] + self.tail != self.n:
            raise ValueError("boundaries plus tail must cover all n coordinates")
        if any(v < 1 for v in self.D):
            raise ValueError("coefficients D must be >= 1")
        if self.m < 0:
            raise ValueError("sample budget must be non-negative")
        if self.mode not in MODES or self.model not in MODELS or self.reducer not in REDUCERS:
            raise ValueError("unknown mode, model or reducer")
        if self.reducer == "l2":
            if self.sigma is None or len(self.sigma) != self.k:
                raise ValueError("l2 plans need one sigma per step")
            if any(self.q % int(v) or v != int(v) for v in self.D):
                raise ValueError("l2 plans need integer D dividing q")
        if self.log_m is None:
            object.__setattr__(self, "log_m", math.log2(self.m) if self.m > 0 else -math.inf)

    @property
    def blocks(self) -> list[tuple[int, int]]:
        return list(zip(self.d[:-1], self.d[1:]))

    def to_dict(self) -> dict:
        out = {
            name: getattr(self, name)
            for name in self.__dataclass_fields__
            if name != "diagnostics"
        }
        out["d"] = list(self.d)
        out["D"] = list(self.D)
        out["sigma"] = None if self.sigma is None else list(self.sigma)
        out["step_bias"] = list(self.step_bias)
        out["step_sizes"] = list(self.step_sizes)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ReductionPlan":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        for key in ("d", "D", "step_bias", "step_sizes"):
            if key in known and known[key] is not None:
                known[key] = tuple(known[key])
        if known.get("sigma") is not None:
            known["sigma"] = tuple(known["sigma"])
        return cls(**known)


def _ceil_pow2(log_m: float) -> int:
    """Smallest integer >= 2**log_m, exact for huge exponents."""
    if log_m < 60:
        return max(0, math.ceil(2.0**log_m))
    e = math.floor(log_m)
    return math.ceil(2.0 ** (log_m - e) * 2.0**52) << (e - 52)


def cost_bits(log_m: float, n: int, q: int, log_N: float = 0.0) -> float:
    """log2 of the operation count: list size times pair selection times an n log q word cost."""
    return log_m + log_N + math.log2(max(n, 1)) + math.log2(max(math.log2(q), 1.0))


def _widths_for_rate(n: int, q: int, x: float, coeffs, target: int) -> list[int]:
    """Block boundaries from the rate recursion; ``coeffs`` is a list or maps (step, start) to D."""
    d = [0]
    for i in range(coeffs.steps if callable(coeffs) else len(coeffs)):
        D = coeffs(i, d[-1]) if callable(coeffs) else coeffs[i]
        w = math.floor(n * x / math.log2(1 + q / D))
        d.append(min(d[-1] + w, target))
    return d


def _min_rate(n: int, q: int, coeffs, target: int, x_max: float) -> tuple[float, list[int]]:
    """Smallest rate x for which the recursion reaches ``target``."""
    d = _widths_for_rate(n, q, x_max, coeffs, target)
    if d[-1] < target:
        raise PlanInfeasible("no admissible rate: boundaries never reach n for x <= x_max")
    lo, hi = 0.0, x_max
    for _ in range(80):
        mid = (lo + hi) / 2
        if _widths_for_rate(n, q, mid, coeffs, target)[-1] >= target:
            hi = mid
        else:
            lo = mid
    return hi, _widths_for_rate(n, q, hi, coeffs, target)


class _Coeffs:
    """Coefficient rule D(step, block start) with a fixed step count."""

    def __init__(self, steps: int, rule):
        self.steps = steps
        self.rule = rule

    def __call__(self, i: int, start: int) -> float:
        return max(1.0, float(self.rule(i, start)))


def _check_bounds(B, n: int) -> np.ndarray:
    B = np.asarray(B, dtype=np.float64)
    if B.shape != (n,):
        raise ValueError(f"need {n} secret bounds, got shape {B.shape}")
    if np.any(B < 1):
        raise ValueError("secret bounds must be >= 1")
    if np.any(np.diff(B) > 0):
        raise ValueError("secret bounds must be non-increasing")
    return B


def _schedule_noise(alpha2: float, k: int, d, D, B, q: int) -> tuple[float, list[float]]:
    """Worst-case final noise parameter of the truncated-secret argument, with per-step values."""
    a2 = alpha2
    per_step = []
    for i in range(k):
        block = B[d[i] : d[i + 1]]
        extra = 0.0 if D[i] <= 1 else 4 * math.pi**2 * float(np.sum((block * D[i] / q) ** 2))
        a2 = 2 * a2 + extra
        per_step.append(a2)
    return a2, per_step


def _require_precondition(d, D, B, q: int) -> None:
    for i, Di in enumerate(D):
        if Di <= 1 or d[i + 1] == d[i]:
            continue
        worst = float(B[d[i]]) * Di
        if worst >= 0.23 * q:
            raise PlanInfeasible(
                f"step {i}: secret bound {B[d[i]]:g} times D={Di:g} reaches 0.23q"
            )


def _theory_step_count(beta: float) -> int:
    if not math.isfinite(beta):
        return 0
    if beta <= 1:
        raise PlanInfeasible("noise too large: beta <= 1")
    k = math.floor(math.log2(beta**2 / (12 * math.log(1 + math.log2(beta)))))
    if k <= 0:
        raise PlanInfeasible(f"noise too large: step count formula gives k = {k}")
    return k


def _theory_lwe(params: LweParams, B: np.ndarray, mode: str, x_max: float) -> ReductionPlan:
    n, q = params.n, params.q
    alpha = params.alpha
    beta = params.beta
    k = _theory_step_count(beta)
    if k == 0:
        raise PlanInfeasible("noise-free instance: use Gaussian elimination instead")
    diag = {}
    if mode == "general":
        coeffs = _Coeffs(k, lambda i, start: q / (B[min(start, n - 1)] * k * 2 ** ((k - i) / 2)))
    else:
        logn = math.log2(n)
        Bmax = float(B[0])
        c, dq, b = math.log2(beta) / logn, math.log2(q) / logn, math.log2(Bmax) / logn
        if dq < b or c + b < dq:
            raise PlanInfeasible("small-modulus regime needs b <= d <= b + c")
        first = math.ceil(2 * (c - dq + b) * logn)
        # the constant 5 keeps B*D below 0.23q on every step
        coeffs = _Coeffs(
            k, lambda i, start: 1.0 if i < first else q / (5 * B[min(start, n - 1)] * 2 ** ((k - i) / 2))
        )
        diag.update(c=c, d=dq, b=b, zero_forcing_steps=first)
    x, d = _min_rate(n, q, coeffs, n, x_max)
    D = [coeffs(i, d[i]) for i in range(k)]
    _require_precondition(d, D, B, q)
    eps_step = 1 / (beta**2 * x) ** math.log2(3)
    eps_total = beta**-4
    diag.update(epsilon=params.epsilon, epsilon_step_bound=eps_step, epsilon_total_bound=eps_total)
    if params.epsilon > eps_step:
        raise PlanInfeasible(f"distortion {params.epsilon:g} exceeds the admissible {eps_step:g}")
    a2, per_step = _schedule_noise(alpha**2, k, d, D, B, q)
    log_m = math.log2(n) + k + n * x
    return ReductionPlan(
        n=n, q=q, x=x, k=k, d=d, D=D, m=_ceil_pow2(log_m),
        predicted_final_bias=math.exp(-a2),
        predicted_cost_bits=cost_bits(log_m, n, q),
        mode=mode, model="theory",
        step_bias=tuple(math.exp(-v) for v in per_step),
        log_m=log_m, diagnostics=diag,
    )


def _lpn_noise(params: LweParams) -> float:
    noise = params.noise
    p = noise.p if isinstance(noise, Bernoulli) else (1 - params.noise_bias) / 2
    if not 0 <= p < 0.5:
        raise PlanInfeasible("error rate must lie in [0, 1/2)")
    return p


def _lpn_steps(n: int, p: float) -> tuple[int, float]:
    if p == 0:
        return 1, 1.0
    a2 = -math.log(1 - 2 * p)
    beta = math.sqrt(n / (2 * a2))
    if beta <= 1:
        raise PlanInfeasible("noise too large: beta <= 1")
    k = math.floor(math.log2(beta**2 / math.log2(beta) / 3)) if beta > 2 else 0
    if k <= 0:
        raise PlanInfeasible(f"noise too large: step count formula gives k = {k}")
    return k, 1 / k + 1 / n


def expected_pairs(size: float, cells: float) -> float:
    """Mean number of disjoint pairs when ``size`` samples fall uniformly into ``cells`` cells."""
    if cells <= 0 or size <= 0:
        return 0.0
    lam = size / cells
    if lam > 1e-6:
        loss = cells * (1 - math.exp(-2 * lam)) / 2
    else:
        loss = size - size * size / cells
    return max(0.0, (size - loss) / 2)


def _list_sizes(log_m: float, cells) -> list[float]:
    sizes = [2.0**log_m]
    for c in cells:
        sizes.append(expected_pairs(sizes[-1], c))
    return sizes


def _size_for(requirement: float, cells, lo: float = 0.0, hi: float = 80.0) -> float | None:
    """Smallest log2 m whose final expected list size reaches ``requirement``."""
    if _list_sizes(hi, cells)[-1] < requirement:
        return None
    for _ in range(60):
        mid = (lo + hi) / 2
        if _list_sizes(mid, cells)[-1] >= requirement:
            hi = mid
        else:
            lo = mid
    return hi


def final_requirement(tail: int, q: int, delta: float) -> float:
    """Required size times squared bias for the finisher to succeed with probability 1 - delta."""
    if tail:
        return 2 * (math.sqrt(tail * math.log(q)) + math.sqrt(math.log(1 / delta))) ** 2
    return 8 * math.log(2 / delta)


def _lpn_plan(params: LweParams, model: str, delta: float) -> ReductionPlan:
    n = params.n
    p = _lpn_noise(params)
    k, x = _lpn_steps(n, p)
    w = math.floor(n * x)
    d = [min(i * w, n) for i in range(k + 1)]
    if d[-1] < n:
        raise PlanInfeasible("no admissible rate: boundaries never reach n")
    bias = (1 - 2 * p) ** (2**k)
    per_step = [(1 - 2 * p) ** (2 ** (i + 1)) for i in range(k)]
    if model == "theory":
        log_m = math.log2(n) + k + n * x
        sizes = ()
    else:
        cells = [2.0 ** (b - a) for a, b in zip(d, d[1:])]
        log_m = _size_for(final_requirement(0, 2, delta) / bias**2, cells)
        if log_m is None:
            raise PlanInfeasible("no admissible sample budget below 2^80")
        sizes = tuple(_list_sizes(log_m, cells))
    return ReductionPlan(
        n=n, q=2, x=x, k=k, d=d, D=[1.0] * k, m=_ceil_pow2(log_m),
        predicted_final_bias=bias,
        predicted_cost_bits=cost_bits(log_m, n, 2),
        mode="lpn", model=model, step_bias=tuple(per_step), step_sizes=sizes, log_m=log_m,
    )


def _practical_exact(
    params: LweParams, tail: int, delta: float, m_max: float | None, k_max: int | None
) -> ReductionPlan:
    """Search step count and quantization scale for the smallest expected sample budget."""
    n, q = params.n, params.q
    alpha2 = params.alpha**2
    if not math.isfinite(alpha2):
        raise PlanInfeasible("noise has no bias")
    s2 = params.secret_second_moment()
    target = n - tail
    need = final_requirement(tail, q, delta)
    log_cap = 80.0 if m_max is None else math.log2(m_max)
    if target == 0:
        log_m = math.log2(need) + 2 * alpha2 / math.log(2)
        return ReductionPlan(
            n=n, q=q, x=0.0, k=0, d=[0], D=[], m=_ceil_pow2(log_m),
            predicted_final_bias=math.exp(-alpha2),
            predicted_cost_bits=cost_bits(log_m, n, q), mode="general",
            model="practical", tail=tail, log_m=log_m,
        )
    if k_max is None:
        k_max = 1 + int(math.log2(2 / alpha2)) if alpha2 > 0 else 40
    k_max = max(1, min(k_max, target, 40))
    scales = np.exp(np.linspace(0.0, math.log(q / 2), 48))
    best = None
    for k in range(1, k_max + 1):
        for c in scales:
            D = [max(1.0, float(c) * 2 ** ((i - k + 1) / 2)) for i in range(k)]
            try:
                x, d = _min_rate(n, q, D, target, math.log2(1 + q) + 1)
            except PlanInfeasible:
                continue
            if any(b == a for a, b in zip(d, d[1:])):
                continue
            quant = 0.0
            a2 = alpha2
            per_step = []
            for i in range(k):
                w = d[i + 1] - d[i]
                quant = 2 * quant + (w * (D[i] ** 2 - 1) / 6 if D[i] > 1 else 0.0)
                a2 = 2 * a2
                per_step.append(a2 + 2 * math.pi**2 * s2 * quant / q**2)
            # the finisher alone would need more than the cap (and the bias may underflow)
            if math.log2(need) + 2 * per_step[-1] / math.log(2) > log_cap:
                continue
            bias = math.exp(-per_step[-1])
            cells = [
                float(Quantizer(D[i], 0, 1).cell_count(q)) ** (d[i + 1] - d[i]) for i in range(k)
            ]
            log_m = _size_for(need / bias**2, cells, hi=log_cap)
            if log_m is None:
                continue
            if best is None or log_m < best[0] - 1e-9:
                best = (log_m, k, x, d, D, bias, per_step, cells)
    if best is None:
        raise PlanInfeasible("no admissible rate within the sample cap")
    log_m, k, x, d, D, bias, per_step, cells = best
    return ReductionPlan(
        n=n, q=q, x=x, k=k, d=d, D=D, m=_ceil_pow2(log_m),
        predicted_final_bias=bias,
        predicted_cost_bits=cost_bits(log_m, n, q),
        mode="general", model="practical", tail=tail,
        step_bias=tuple(math.exp(-v) for v in per_step),
        step_sizes=tuple(_list_sizes(log_m, cells)),
        log_m=log_m,
    )


def plan(
    params: LweParams,
    B=None,
    mode: str = "general",
    *,
    model: str = "theory",
    reducer: str = "exact",
    tail: int = 0,
    delta: float = 0.05,
    m_max: float | None = None,
    k_max: int | None = None,
    x_max: float | None = None,
    knobs=None,
) -> ReductionPlan:
    """Build a reduction schedule.

    ``model="theory"`` applies the closed-form step count, coefficients and
    budget of the asymptotic analysis.  ``model="practical"`` sizes the
    sample budget from the expected list shrinkage so that the finisher
    succeeds with probability about ``1 - delta``; with ``reducer="greedy"``
    it follows the selection-based cost model of :mod:`qbkw.estimate`.
    ``tail`` coordinates are left unreduced for the Fourier finisher.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}")
    if reducer not in ("exact", "greedy"):
        raise ValueError("automatic planning supports the exact and greedy reducers")
    if not 0 <= tail <= params.n:
        raise ValueError("tail must lie in [0, n]")
    if mode == "lpn":
        if params.q != 2:
            raise ValueError("lpn mode needs q = 2")
        return _lpn_plan(params, model, delta)
    if model == "theory":
        if tail:
            raise ValueError("theory plans reduce every coordinate")
        bounds = _check_bounds(params.secret_bounds() if B is None else B, params.n)
        return _theory_lwe(params, bounds, mode, x_max or math.log2(1 + params.q) + 1)
    if B is not None:
        _check_bounds(B, params.n)
    if reducer == "greedy":
        from .estimate import greedy_plan

        return greedy_plan(params, knobs=knobs, tail=tail)
    return _practical_exact(params, tail, delta, m_max, k_max)
