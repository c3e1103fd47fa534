"""Solvers built on the reduction steps.

Finishers: :func:`distinguish` decides LWE against uniform from the cosine
statistic of the scalars; :func:`find_secret_fft` recovers a low-dimensional
secret from the real part of a full Fourier transform.  :func:`solve_lwe`
drives the reduction and, given a re-planner, iterates block by block until
the whole secret is known.
"""
from __future__ import annotations

import bisect
import enum
import math
import os
import tempfile
import time
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .gen import SwitchFailure, as_generator, secret_error_switch
from .model import LweParams, SampleList, dot_mod, empirical_bias

FFT_CAP = 1 << 30
_IN_MEMORY_CELLS = 1 << 26


class Decision(enum.Enum):
    LWE = "lwe"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class Verdict:
    decision: Decision
    statistic: float
    threshold: float
    count: int

    def __post_init__(self):
        if (self.statistic >= self.threshold) != (self.decision is Decision.LWE):
            raise ValueError("decision inconsistent with statistic and threshold")

    @property
    def is_lwe(self) -> bool:
        return self.decision is Decision.LWE


@dataclass(frozen=True)
class RecoveredSecret:
    s: np.ndarray
    score: float
    gap: float

    def __post_init__(self):
        if self.gap < 0:
            raise ValueError("score must dominate the runner-up")


class PipelineExhausted(RuntimeError):
    def __init__(self, trace: list[int]):
        super().__init__(f"sample list emptied during reduction; sizes per step: {trace}")
        self.trace = trace


class SolverFailure(RuntimeError):
    pass


# --------------------------------------------------------------------------
# finishers


def distinguish(b_values, q: int, bias_floor: float) -> Verdict:
    """LWE iff the mean of cos(2 pi b / q) is at least ``bias_floor / 2``."""
    b = np.asarray(b_values, dtype=np.float64).ravel()
    if b.size == 0:
        raise ValueError("no samples")
    if not 0 < bias_floor <= 1:
        raise ValueError("bias floor must lie in (0, 1]")
    if q == 2:
        x = 1.0 - 2.0 * float(np.mean(np.mod(b, 2)))
    else:
        x = float(np.mean(np.cos(2 * np.pi * b / q)))
    thr = bias_floor / 2
    return Verdict(Decision.LWE if x >= thr else Decision.UNIFORM, x, thr, int(b.size))


def hoeffding_error(m: int, bias: float) -> float:
    """Bound 2 exp(-m b^2 / 8) on a wrong decision at threshold b/2."""
    return min(1.0, 2 * math.exp(-m * bias * bias / 8))


def _fft_all_axes(table: np.ndarray, chunk: int = 1 << 22) -> None:
    """In-place n-dimensional FFT, one axis at a time in bounded slabs."""
    shape = table.shape
    for ax in range(table.ndim):
        moved = np.moveaxis(table, ax, -1)
        flat = moved.reshape(-1, shape[ax]) if moved.flags.c_contiguous else None
        if flat is not None:
            rows = max(1, chunk // shape[ax])
            for r in range(0, flat.shape[0], rows):
                flat[r : r + rows] = np.fft.fft(flat[r : r + rows], axis=-1)
        else:
            it = np.ndindex(*moved.shape[:-1])
            for idx in it:
                moved[idx] = np.fft.fft(moved[idx])


def find_secret_fft(lst: SampleList, cap: int = FFT_CAP) -> RecoveredSecret:
    """Secret maximizing Re sum_j exp(2 i pi (b_j - <a_j, s>) / q), via one FFT.

    Scores are normalized by the sample count.  Tables above 2^26 cells are
    backed by a temporary memory-mapped file.
    """
    n, q, m = lst.dim, lst.q, len(lst)
    if m == 0:
        raise ValueError("no samples")
    cells = q**n
    if cells > cap:
        raise ValueError(
            f"Fourier table of {q}^{n} cells exceeds the cap of {cap}; reduce the dimension first"
        )
    phase = np.exp(2j * np.pi * lst.b / q)
    if n == 0:
        score = float(phase.real.mean())
        return RecoveredSecret(np.zeros(0, dtype=np.int64), score, score)
    idx = np.ravel_multi_index(tuple(np.asarray(lst.A, dtype=np.int64).T), (q,) * n)
    f_re = np.bincount(idx, weights=phase.real, minlength=cells)
    f_im = np.bincount(idx, weights=phase.imag, minlength=cells)
    spill = None
    if cells > _IN_MEMORY_CELLS:
        fd, spill = tempfile.mkstemp(suffix=".fft")
        os.close(fd)
        table = np.memmap(spill, dtype=np.complex128, mode="w+", shape=(q,) * n)
        table.reshape(-1).real[:] = f_re
        table.reshape(-1).imag[:] = f_im
    else:
        table = (f_re + 1j * f_im).reshape((q,) * n)
    del f_re, f_im
    try:
        if spill is None:
            table = np.fft.fftn(table)
        else:
            _fft_all_axes(table)
        flat = table.reshape(-1).real
        best = int(np.argmax(flat))
        score = float(flat[best])
        if cells > 1:
            second = float(np.partition(flat, -2)[-2]) if best is not None else score
        else:
            second = -math.inf
    finally:
        if spill is not None:
            del table
            os.unlink(spill)
    s = np.array(np.unravel_index(best, (q,) * n), dtype=np.int64)
    gap = (score - second) / m if math.isfinite(second) else math.inf
    return RecoveredSecret(s, score / m, gap)


def exhaustive_secret(lst: SampleList) -> np.ndarray:
    """Reference argmax over all q^n candidates (small instances only)."""
    n, q = lst.dim, lst.q
    cands = np.array(list(np.ndindex(*(q,) * n)), dtype=np.int64).reshape(-1, n)
    A = np.asarray(lst.A, dtype=np.int64)
    scores = np.cos(2 * np.pi * (lst.b[None, :] - (cands @ A.T) % q) / q).sum(axis=1)
    return cands[int(np.argmax(scores))]


# --------------------------------------------------------------------------
# driver


def _step_fn(reducer: str):
    from . import reduce as R

    if reducer == "exact":
        return lambda L, D, lo, hi, plan, i, rng: R.reduce_step(L, D, lo, hi)
    if reducer == "greedy":
        return lambda L, D, lo, hi, plan, i, rng: R.reduce_step_greedy(
            L, D, lo, hi, keep=plan.keep or len(L)
        )
    if reducer == "l2":
        return lambda L, D, lo, hi, plan, i, rng: R.reduce_step_l2(
            L, int(D), lo, hi, plan.sigma[i], rng
        )
    raise ValueError(f"unknown reducer {reducer!r}")


def reduce_per_plan(lst: SampleList, plan, log: Callable[[dict], None] | None = None, rng=None, secret=None) -> SampleList:
    """Apply every reduction step of ``plan`` and return the final list."""
    step = _step_fn(plan.reducer)
    gen = as_generator(rng)
    L = lst
    trace = [len(L)]
    for i in range(plan.k):
        t0 = time.perf_counter()
        L = step(L, plan.D[i], plan.d[i], plan.d[i + 1], plan, i, gen)
        trace.append(len(L))
        if log is not None:
            rec = {"step": i + 1, "size": len(L)}
            if len(L):
                vals = L.errors(secret) if secret is not None else L.b
                rec["bias_re"] = empirical_bias(vals, L.q).real
            else:
                rec["bias_re"] = None
            rec["bias_pred"] = plan.step_bias[i] if plan.step_bias else None
            rec["ms"] = round(1000 * (time.perf_counter() - t0), 3)
            log(rec)
        if len(L) == 0:
            raise PipelineExhausted(trace)
    return L


def solve_lwe(
    lst: SampleList,
    plan,
    finisher: str = "distinguish",
    *,
    replan: Callable[[int], object] | None = None,
    threshold: float | None = None,
    fft_cap: int = FFT_CAP,
    log: Callable[[dict], None] | None = None,
    rng=None,
    secret=None,
):
    """Run the reductions of ``plan`` and finish.

    ``finisher="distinguish"`` returns a :class:`Verdict` with bias floor
    ``threshold`` (default: the plan's predicted final bias).
    ``finisher="find_secret"`` recovers the ``plan.tail`` unreduced
    coordinates.  With ``replan`` (dimension -> plan) the recovered block is
    substituted back into the input samples and the pipeline reruns on the
    remaining coordinates until the whole secret is known.  ``secret`` is only
    used for diagnostics.
    """
    if len(lst) < plan.m:
        raise ValueError(f"plan needs {plan.m} samples, got {len(lst)}")
    if finisher == "distinguish":
        L = reduce_per_plan(lst, plan, log, rng, secret)
        floor = plan.predicted_final_bias if threshold is None else threshold
        return distinguish(L.b, L.q, floor)
    if finisher != "find_secret":
        raise ValueError(f"unknown finisher {finisher!r}")
    if replan is None:
        L = reduce_per_plan(lst, plan, log, rng, secret)
        lo = plan.d[-1]
        sub = SampleList(L.A[:, lo:], L.b, L.q, L.depth, L.independent)
        return find_secret_fft(sub, fft_cap)

    gen = as_generator(rng)
    q = lst.q
    cur = lst
    found: list[np.ndarray] = []
    scores, gaps = [], []
    cur_plan = plan
    while cur.dim > 0:
        n_cur = cur.dim
        if cur_plan is None:
            cur_plan = replan(n_cur)
        sub_secret = None if secret is None else np.asarray(secret)[:n_cur]
        if cur_plan.k == 0:
            res = find_secret_fft(cur[: cur_plan.m] if cur_plan.m else cur, fft_cap)
        else:
            budget = cur if not cur_plan.m or cur_plan.m >= len(cur) else cur[: cur_plan.m]
            L = reduce_per_plan(budget, cur_plan, log, gen, sub_secret)
            lo = cur_plan.d[-1]
            res = find_secret_fft(SampleList(L.A[:, lo:], L.b, q), fft_cap)
        t = len(res.s)
        if log is not None:
            log({"step": "fft", "size": n_cur, "block": [n_cur - t, n_cur], "score": res.score, "gap": res.gap})
        found.insert(0, res.s)
        scores.append(res.score)
        gaps.append(res.gap)
        tail = np.asarray(cur.A[:, n_cur - t :], dtype=np.int64)
        b = np.mod(cur.b - dot_mod(tail, res.s, q), q)
        cur = SampleList(cur.A[:, : n_cur - t], b, q)
        cur_plan = None
    s = np.concatenate(found) if found else np.zeros(0, dtype=np.int64)
    return RecoveredSecret(s, float(min(scores)), float(min(gaps)))


# --------------------------------------------------------------------------
# dimension one


def _as_pairs(stream) -> Iterator[tuple[int, int]]:
    if isinstance(stream, SampleList):
        for a, b in zip(stream.A[:, 0], stream.b):
            yield int(a), int(round(float(b)))
        return
    for a, b in stream:
        a = a[0] if isinstance(a, (list, tuple, np.ndarray)) else a
        yield int(a), int(b)


def _signed_int(a: int, q: int) -> int:
    a %= q
    return a - q if a > q // 2 else a


def _largest_odd_below(x: float) -> int:
    r = int(math.floor(x))
    if r % 2 == 0:
        r -= 1
    return max(1, r)


def _ball_reduce(pairs: list[tuple[int, int]], radius_in: int, radius_out: int, q: int, gen) -> list[tuple[int, int]]:
    """Pair each sample with a uniformly chosen stored one within ``radius_out``."""
    keys: list[int] = []
    vals: list[tuple[int, int]] = []
    out = []
    for a, b in pairs:
        lo, hi = a - radius_out, a + radius_out
        inside = lo >= -radius_in and hi <= radius_in
        i = bisect.bisect_left(keys, lo)
        j = bisect.bisect_right(keys, hi)
        if inside and j > i:
            pick = i + int(gen.integers(0, j - i))
            a2, b2 = vals.pop(pick)
            keys.pop(pick)
            out.append((a - a2, (b - b2) % q))
        else:
            pos = bisect.bisect_left(keys, a)
            keys.insert(pos, a)
            vals.insert(pos, (a, b))
    return out


def _scores_on_grid(pairs, q: int, centre: int, step_num: int, step_den: int, count: int) -> np.ndarray:
    """Re sum exp(2 i pi (a x - b) / q) for x = centre + j * step_num / step_den, |j| <= count."""
    j = np.arange(-count, count + 1, dtype=np.float64)
    total = np.zeros(j.shape)
    for start in range(0, len(pairs), 4096):
        chunk = pairs[start : start + 4096]
        base = np.array([((a * centre - b) % q) / q for a, b in chunk])
        freq = np.array([((a * step_num) % (q * step_den)) / (q * step_den) for a, _ in chunk])
        total += np.cos(2 * np.pi * (base[:, None] + freq[:, None] * j[None, :])).sum(axis=0)
    return total


def solve_dim1(stream, q: int, noise, rng=None, r_cap: int = 1 << 22, steps: int | None = None) -> int:
    """Recover a scalar secret from samples ``(a, a s + e mod q)``.

    Reduction rounds shrink the coordinate to balls of radii ``q / R^i``
    (largest odd integer below), pairing each sample with a stored one in a
    window around it.  The deepest list locates the secret to within
    ``q / R`` on a grid of about ``2R`` points; each shallower list then
    refines the estimate by another factor R until it is exact.
    """
    gen = as_generator(rng)
    bias = noise.bias(q)
    alpha2 = -math.log(bias) if bias < 1 else 0.0
    if steps is None:
        if alpha2 > 0:
            beta2 = math.log2(q) / alpha2
            beta = math.sqrt(beta2)
            steps = int(math.floor(math.log2(beta2 / max(math.log2(beta), 1e-9) / 3))) if beta > 2 else 1
        else:
            steps = 2
        steps = max(1, steps)
    while q ** (1 / (steps + 1)) > r_cap:
        steps += 1
    R = q ** (1 / (steps + 1))
    radii = [q // 2] + [_largest_odd_below(q / R**i) for i in range(1, steps + 1)]

    final_bias = math.exp(-(2**steps) * alpha2) * 0.6
    need_final = int(math.ceil(16 * math.log(8 * R + 8) / final_bias**2)) + 16
    need = int(2**steps * (need_final + 4 * R) * 1.3)

    it = _as_pairs(stream)
    pairs = []
    for _ in range(need):
        try:
            a, b = next(it)
        except StopIteration:
            break
        pairs.append((_signed_int(a, q), b % q))
    if len(pairs) < need:
        raise ValueError(f"insufficient stream: need about {need} samples, got {len(pairs)}")

    lists = [pairs]
    for i in range(steps):
        lists.append(_ball_reduce(lists[-1], radii[i], radii[i + 1], q, gen))
        if len(lists[-1]) < 8:
            raise ValueError("insufficient stream: reduction starved")

    # coarse stage: grid step q / (2 r_k + 1) covers the circle
    rk = radii[-1]
    M = 2 * rk + 1
    f = np.zeros(M, dtype=np.complex128)
    for a, b in lists[-1]:
        f[a % M] += np.exp(-2j * np.pi * b / q)
    scores = (np.fft.ifft(f) * M).real
    j = int(np.argmax(scores))
    est = int(round(j * q / M)) % q
    bound = int(math.ceil(2 * q / M)) + 1

    for i in range(steps - 1, -1, -1):
        r_i = max(radii[i], 1)
        # grid spacing below q / (2 r_i), window |x - est| <= bound
        den = 2 * r_i + 1
        count = int(math.ceil(bound * den / q)) + 1
        sc = _scores_on_grid(lists[i], q, est, q, den, count)
        jbest = int(np.argmax(sc)) - count
        est = (est + int(round(jbest * q / den))) % q
        bound = int(math.ceil(2 * q / den)) + 1
    # final integer sweep on the raw samples
    sc = _scores_on_grid(lists[0], q, est, 1, 1, bound)
    est = (est + int(np.argmax(sc)) - bound) % q
    return est


# --------------------------------------------------------------------------
# LPN


def solve_lpn_decision(p: float, lst: SampleList, plan=None, log=None) -> Verdict:
    """Distinguish LPN samples of rate ``p`` from uniform bits."""
    from .model import Bernoulli
    from .reduce import plan as make_plan

    if lst.q != 2:
        raise ValueError("LPN requires q = 2")
    if plan is None:
        params = LweParams(lst.dim, 2, Bernoulli(p))
        plan = make_plan(params, mode="lpn", model="practical")
    if p == 0:
        floor = 1.0
    else:
        floor = (1 - 2 * p) ** (2**plan.k)
    if len(lst) < plan.m:
        raise ValueError(f"plan needs {plan.m} samples, got {len(lst)}")
    L = reduce_per_plan(lst, plan, log)
    return distinguish(L.b, 2, floor)


@dataclass(frozen=True)
class SparseLpnResult:
    s: np.ndarray
    trials: int


def solve_lpn_sparse(p: float, source, n: int, rng=None, max_trials: int | None = None) -> SparseLpnResult:
    """Search-LPN for small rates by switching until the new secret is zero.

    ``source(count)`` must return a :class:`SampleList` of fresh samples.
    Each trial switches over ``34 n`` samples (``n`` form the basis) and
    distinguishes on the remaining scalars; a positive verdict means the
    error of the basis samples was zero, so the secret solves ``A s = b``.
    """
    if not 0 <= p <= 0.25:
        raise ValueError("sparse search needs p <= 1/4")
    if max_trials is None:
        max_trials = int(math.ceil(n * (1 - p) ** (-n)))
    floor = 1 - 2 * p
    for trial in range(1, max_trials + 1):
        try:
            batch = source(34 * n)
        except (StopIteration, ValueError) as exc:
            raise SolverFailure(f"source exhausted after {trial - 1} trials") from exc
        if len(batch) < 34 * n:
            raise SolverFailure(f"source exhausted after {trial - 1} trials")
        try:
            sw = secret_error_switch(batch[: 34 * n], k_extra=n)
        except SwitchFailure:
            continue
        rest = batch[sw.consumed : 34 * n]
        if len(rest) == 0:
            continue
        moved = sw.transform(rest)
        v = distinguish(moved.b, 2, floor)
        if v.is_lwe:
            s = sw.recover(np.zeros(n, dtype=np.int64))
            return SparseLpnResult(np.mod(s, 2), trial)
    raise SolverFailure(f"no zero switched secret within {max_trials} trials")
