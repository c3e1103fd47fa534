"""Analytic cost models for BKW, lattice attacks, LPN and subset sum."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gammainc, gammaincinv

TWO_PI_E_OVER_12 = 2 * math.pi * math.e / 12

# Additive offset (bits) fitted once so that the reasonable-knob estimate of
# the n = 64, q = 4099 Regev row equals its published 39.6 bits.  Every other
# row is a prediction.
CALIBRATION_BITS = 2.10

CSV_HEADER = ["n", "q", "sigma", "k", "log_m", "log_N", "bits_reasonable", "bits_optimistic", "bits_pessimistic"]
CONTOUR_HEADER = ["a", "b", "best", "bits"]
CONTOUR_LEVELS = tuple(round(0.3 * i, 1) for i in range(17))


class EstimateInfeasible(ValueError):
    """No schedule in the search range reaches a usable final bias."""


@dataclass(frozen=True)
class CostModelKnobs:
    reduction_multiplier: float = 1.1
    quantizer_variance_gain: float = 1.3
    svp_exponent: float = 0.2972

    def __post_init__(self):
        if self.reduction_multiplier < 1:
            raise ValueError("reduction_multiplier must be >= 1")
        if self.quantizer_variance_gain < 1:
            raise ValueError("quantizer_variance_gain must be >= 1")
        if self.svp_exponent <= 0:
            raise ValueError("svp_exponent must be positive")

    @classmethod
    def preset(cls, name: str) -> "CostModelKnobs":
        try:
            return PRESETS[name]
        except KeyError:
            raise ValueError(f"unknown knob preset {name!r}; choose from {sorted(PRESETS)}") from None


REASONABLE = CostModelKnobs(1.1, 1.3)
OPTIMISTIC = CostModelKnobs(1.0, TWO_PI_E_OVER_12)
PESSIMISTIC = CostModelKnobs(2.0, 1.0)
PRESETS = {"reasonable": REASONABLE, "optimistic": OPTIMISTIC, "pessimistic": PESSIMISTIC}


@dataclass(frozen=True)
class CostRow:
    n: int
    q: int
    sigma: float
    secret: str
    k: int
    log_m: float
    log_N: int
    bits: float
    tail: int = 0
    scale: float = 1.0
    final_bias: float = 0.0

    def __post_init__(self):
        if self.bits < self.log_m:
            raise ValueError("cost cannot be below the list size")


@dataclass(frozen=True)
class CostReport:
    rows: tuple
    knobs: CostModelKnobs = REASONABLE
    notes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"knobs": asdict(self.knobs), "rows": [asdict(r) for r in self.rows], "notes": dict(self.notes)}


# --------------------------------------------------------------------------
# secret models


def secret_moments(secret: str, sigma: float) -> tuple[float, float]:
    """(E[s^2], entropy in bits per coordinate) of the secret the reduction sees.

    A uniform secret is first moved to the error distribution, so it inherits
    the error's width.
    """
    if secret in ("uniform", "gaussian", "noise"):
        return sigma * sigma, max(1.0, math.log2(sigma * math.sqrt(2 * math.pi * math.e)))
    if secret == "binary":
        return 0.5, 1.0
    if secret.startswith("bounded:"):
        b = int(secret.split(":", 1)[1])
        if b < 1:
            raise ValueError("bound must be positive")
        return b * (b + 1) / 3, math.log2(2 * b + 1)
    raise ValueError(f"unknown secret model {secret!r}")


# --------------------------------------------------------------------------
# BKW norm-evolution model


@lru_cache(maxsize=256)
def _selection_table(n: int, log_N: int, multiplier: float) -> np.ndarray:
    """Fraction of the squared norm left after keeping the best 2^-log_N of
    chi-square distributed candidates, indexed by dimension 0..n."""
    d = np.arange(n + 1, dtype=float)
    if log_N <= 0:
        return np.ones(n + 1)
    p = 2.0**-log_N
    dd = np.maximum(d, 1.0)
    radius = 2 * gammaincinv(dd / 2, p)
    kept = gammainc(dd / 2 + 1, radius / 2) / p
    out = np.minimum(1.0, multiplier * kept)
    out[0] = 1.0
    return out




class _BkwModel:
    """Predicts, for a list of 2^log_m samples, which quantization scales let
    k greedy steps cover the secret while keeping enough bias."""

    def __init__(self, n, q, sigma, secret, knobs, tail=None):
        self.n, self.q, self.knobs = n, q, knobs
        self.noise_a2 = 2 * math.pi**2 * sigma**2 / q**2
        self.secret_var, self.entropy = secret_moments(secret, sigma)
        self.fixed_tail = tail
        self.scales = np.exp(np.linspace(0.0, math.log(q / 2), 300))[:, None]

    def tail_for(self, log_m):
        if self.fixed_tail is not None:
            return np.full_like(np.asarray(log_m, dtype=float), self.fixed_tail)
        return np.floor(np.asarray(log_m) / self.entropy)

    def evaluate(self, k, log_N, log_m):
        """Per-scale (feasible, slack, coverage) at one list size."""
        n, q = self.n, self.q
        table = _selection_table(n, int(log_N), self.knobs.reduction_multiplier)
        covered = np.zeros(self.scales.shape)
        widths, variances = [], []
        for i in range(k):
            D = np.minimum(np.maximum(1.0, self.scales * 2 ** ((i - k + 1) / 2)), q / 2)
            w = log_m / np.log2(q / D)
            variances = [2 * v for v in variances]
            fresh = np.where(D <= 1, 0.0, D * D / (6 * self.knobs.quantizer_variance_gain))
            covered = covered + w
            widths.append(w)
            variances.append(fresh)
            factor = table[np.round(np.minimum(covered, n)).astype(int)]
            variances = [v * factor for v in variances]
        quant = sum(w * v for w, v in zip(widths, variances))
        noise = 2**k * self.noise_a2 + 2 * math.pi**2 * self.secret_var / q**2 * quant
        budget = math.log(2) * log_m / 2
        need = n - self.tail_for(log_m)
        ok = (noise <= budget) & (covered >= need)
        return ok.ravel(), (budget - noise).ravel(), covered.ravel()

    def feasible(self, k, log_N, log_m) -> bool:
        return bool(self.evaluate(k, log_N, log_m)[0].any())

    def best(self, ks, max_log_N=40, lo=1.0, hi=600.0, tol=0.02):
        found = []
        for k in ks:
            prev = None
            for log_N in range(max_log_N + 1):
                if not self.feasible(k, log_N, hi):
                    continue
                a, b = lo, hi
                if self.feasible(k, log_N, a):
                    b = a
                while b - a > tol:
                    mid = (a + b) / 2
                    if self.feasible(k, log_N, mid):
                        b = mid
                    else:
                        a = mid
                total = b + log_N
                found.append((total, k, b, log_N))
                if prev is not None and total > prev + 3:
                    break
                prev = total if prev is None else min(prev, total)
        if not found:
            raise EstimateInfeasible(f"no feasible schedule for n={self.n}, q={self.q}")
        return min(found)

    def schedule(self, k, log_N, log_m):
        """Scale with the largest bias slack among the feasible ones, with its steps."""
        ok, slack, _ = self.evaluate(k, log_N, log_m)
        idx = int(np.argmax(np.where(ok, slack, -np.inf)))
        scale = float(self.scales[idx, 0])
        D = [min(max(1.0, scale * 2 ** ((i - k + 1) / 2)), self.q / 2) for i in range(k)]
        widths = [log_m / math.log2(self.q / v) for v in D]
        return scale, D, widths, float(slack[idx])


def _step_range(n, q, sigma):
    alpha = math.sqrt(2 * math.pi) * sigma / q
    beta = math.sqrt(n / 2) / alpha
    return range(1, max(2, int(2 * math.log2(max(beta, 2.0)) + 4)) + 1)


def estimate_bkw(n: int, q: int, sigma: float, secret: str = "uniform", knobs: CostModelKnobs = REASONABLE,
                 *, tail: int | None = None) -> CostRow:
    """Cheapest (k, log m, log N) for the greedy BKW variant under ``knobs``.

    ``sigma`` is the error standard deviation.  ``tail`` fixes the number of
    coordinates left to exhaustive search; by default the model takes as many
    as the list size pays for.
    """
    if n < 1 or q < 2 or sigma <= 0:
        raise ValueError("need n >= 1, q >= 2 and sigma > 0")
    model = _BkwModel(n, q, sigma, secret, knobs, tail)
    total, k, log_m, log_N = model.best(_step_range(n, q, sigma))
    scale, _, _, slack = model.schedule(k, log_N, log_m)
    bits = total + math.log2(n) + math.log2(max(math.log2(q), 1.0)) + CALIBRATION_BITS
    noise = math.log(2) * log_m / 2 - slack
    return CostRow(n, q, sigma, secret, k, round(log_m, 2), log_N, round(bits, 2),
                   int(model.tail_for(log_m)), scale, math.exp(-noise))


def estimate_row(n, q, sigma, secret="uniform") -> dict:
    """One CSV row with all three knob presets."""
    r = estimate_bkw(n, q, sigma, secret, REASONABLE)
    o = estimate_bkw(n, q, sigma, secret, OPTIMISTIC)
    p = estimate_bkw(n, q, sigma, secret, PESSIMISTIC)
    return {"n": n, "q": q, "sigma": sigma, "k": r.k, "log_m": r.log_m, "log_N": r.log_N,
            "bits_reasonable": r.bits, "bits_optimistic": o.bits, "bits_pessimistic": p.bits}


def greedy_plan(params, knobs: CostModelKnobs = REASONABLE, tail: int | None = 0):
    """Executable greedy-reducer plan from the cost model."""
    from .model import DiscreteGaussian, RoundedGaussian, Binary, BoundedPerCoordinate
    from .reduce import ReductionPlan

    knobs = knobs or REASONABLE
    noise = params.noise
    if not isinstance(noise, (DiscreteGaussian, RoundedGaussian)):
        raise ValueError("the greedy cost model needs Gaussian errors")
    sigma = noise.stddev
    if isinstance(params.secret, Binary):
        secret = "binary"
    elif isinstance(params.secret, BoundedPerCoordinate):
        secret = f"bounded:{int(max(params.secret_bounds()))}"
    else:
        secret = "uniform"
    n, q = params.n, params.q
    model = _BkwModel(n, q, sigma, secret, knobs, tail)
    total, k, log_m, log_N = model.best(_step_range(n, q, sigma))
    scale, D, widths, slack = model.schedule(k, log_N, log_m)
    use_tail = int(model.tail_for(log_m))
    target = n - use_tail
    bounds, acc = [0], 0.0
    for w in widths:
        acc += w
        bounds.append(min(target, int(round(acc))))
    bounds[-1] = target
    for i in range(len(bounds) - 2, -1, -1):
        bounds[i] = min(bounds[i], bounds[i + 1])
    m = math.ceil(2.0**log_m) if log_m < 60 else 1 << math.ceil(log_m)
    noise_total = math.log(2) * log_m / 2 - slack
    bits = total + math.log2(n) + math.log2(max(math.log2(q), 1.0)) + CALIBRATION_BITS
    return ReductionPlan(
        n=n, q=q, x=1.0 / max(k, 1), k=k, d=tuple(bounds), D=tuple(D), m=m,
        predicted_final_bias=math.exp(-noise_total), predicted_cost_bits=bits,
        mode="general", model="practical", reducer="greedy", tail=use_tail, keep=m,
        log_m=log_m, log_N=float(log_N),
        diagnostics={"scale": scale, "knobs": asdict(knobs)},
    )


# --------------------------------------------------------------------------
# published table rows: (n, q, sigma or None, published k, log m, log N, reasonable, optimistic, pessimistic, previous)


def regev_sigma(n: int, q: int) -> float:
    return q / (math.sqrt(2 * math.pi * n) * math.log2(n) ** 2)


TABLE_REGEV = (
    (64, 4099, 16, 30, 0, 39.6, 39.6, 40.6, 56.2),
    (80, 6421, 17, 38, 0, 47.9, 46.0, 48.0, 66.9),
    (96, 9221, 18, 45, 0, 55.3, 54.3, 56.3, 77.4),
    (112, 12547, 18, 54, 0, 64.6, 60.6, 65.6, 89.6),
    (128, 16411, 19, 60, 0, 70.8, 67.8, 72.8, 98.8),
    (160, 25601, 20, 75, 0, 86.2, 82.2, 88.2, 119.7),
    (224, 50177, 21, 93, 13, 117.8, 111.8, 121.8, 164.3),
    (256, 65537, 22, 106, 15, 133.0, 125.0, 137.0, 182.7),
    (384, 147457, 24, 164, 18, 194.7, 183.7, 201.7, 273.3),
    (512, 262147, 25, 219, 25, 257.2, 242.2, 266.2, 361.6),
)
# Lindner-Peikert rows carry the Gaussian width s (standard deviation s / sqrt(2 pi)).
TABLE_LINDNER_PEIKERT = (
    (192, 4099, 8.87, 19, 68, 5, 84.2, 79.2, 84.2),
    (256, 6421, 8.35, 20, 82, 8, 101.7, 95.7, 103.7),
    (320, 9221, 8.00, 22, 98, 9, 119.0, 112.0, 122.0),
)
TABLE_BINARY = (
    (128, 16411, 16, 28, 0, 38.8, 38.8, 39.8, 74.2),
    (256, 65537, 19, 52, 0, 64.0, 62.0, 67.0, 132.5),
    (512, 262147, 22, 99, 0, 112.2, 104.2, 117.2, 241.8),
)


def table_instances():
    """(label, n, q, sigma, secret, published row) for every published row."""
    out = []
    for row in TABLE_REGEV:
        n, q = row[:2]
        out.append(("regev", n, q, regev_sigma(n, q), "uniform", row))
    for row in TABLE_LINDNER_PEIKERT:
        n, q, s = row[:3]
        out.append(("lindner-peikert", n, q, s / math.sqrt(2 * math.pi), "uniform", row))
    for row in TABLE_BINARY:
        n, q = row[:2]
        out.append(("binary", n, q, regev_sigma(n, q), "binary", row))
    return out


def write_csv(rows, stream) -> None:
    w = csv.DictWriter(stream, fieldnames=CSV_HEADER, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: r[k] for k in CSV_HEADER})


# --------------------------------------------------------------------------
# lattice attacks, parameterized by alpha = n^-a and q = n^b


def lattice_exponents(n: int, q: float, alpha: float) -> tuple[float, float]:
    a = -math.log(alpha) / math.log(n)
    b = math.log(q) / math.log(n)
    return a, b


def primal_ratio(a: float, b: float) -> float:
    """Block size over dimension for the primal (decoding) attack."""
    if a <= 0:
        return math.inf
    return 2 * b / (a * a)


def dual_ratio(a: float, b: float) -> float:
    """Block size over dimension for the dual (distinguishing) attack."""
    return 8 * b / (1 + 2 * a) ** 2


def estimate_lattice_primal(n: int, q: float, alpha: float, c: float = 0.2972) -> float:
    """Asymptotic bits with o(1) terms dropped."""
    a, b = lattice_exponents(n, q, alpha)
    return c * n * primal_ratio(a, b)


def estimate_lattice_dual(n: int, q: float, alpha: float, c: float = 0.2972) -> float:
    """Asymptotic bits with o(1) terms dropped."""
    a, b = lattice_exponents(n, q, alpha)
    return c * n * dual_ratio(a, b)


def bkw_exponent(a: float, b: float) -> float:
    """Asymptotic BKW cost exponent (bits / n) with q = n^b and alpha = n^-a."""
    if a >= b:
        return 0.0
    if a <= 0:
        return math.inf
    return 1.0 / (1.0 / b + 2 * math.log(b / (b - a)))


def contour_grid(a_values=None, b_values=None, knobs: CostModelKnobs = REASONABLE):
    """Row-major (a, b, best, bits/n) cells, best of BKW and the dual attack."""
    if a_values is None:
        a_values = [round(0.1 * i, 2) for i in range(1, 41)]
    if b_values is None:
        b_values = [round(0.1 * i, 2) for i in range(1, 61)]
    rows = []
    for b in b_values:
        for a in a_values:
            bkw = bkw_exponent(a, b)
            dual = knobs.svp_exponent * dual_ratio(a, b)
            best, bits = ("bkw", bkw) if bkw <= dual else ("dual", dual)
            rows.append((float(a), float(b), best, float(bits)))
    return rows


def emit_contours(a_values=None, b_values=None, knobs: CostModelKnobs = REASONABLE, stream=None) -> str:
    rows = contour_grid(a_values, b_values, knobs)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CONTOUR_HEADER)
    for a, b, best, bits in rows:
        w.writerow([repr(a), repr(b), best, repr(bits)])
    text = buf.getvalue()
    if stream is not None:
        stream.write(text)
    return text


def parse_contours(text: str):
    reader = csv.reader(io.StringIO(text))
    if next(reader) != CONTOUR_HEADER:
        raise ValueError("not a contour table")
    return [(float(a), float(b), best, float(bits)) for a, b, best, bits in reader]


def contour_level(bits_per_n: float) -> float:
    """Highest default level not above the cell's exponent."""
    idx = int(np.searchsorted(CONTOUR_LEVELS, bits_per_n, side="right")) - 1
    return CONTOUR_LEVELS[max(idx, 0)]


# --------------------------------------------------------------------------
# LPN and subset sum


def estimate_lpn(n: int, p: float) -> float:
    """Asymptotic Decision-LPN bits, n / log2(n / -log2(1 - 2p))."""
    if not 0 < p < 0.5:
        raise ValueError("p must lie in (0, 1/2)")
    inner = n / -math.log2(1 - 2 * p)
    if inner <= 1:
        raise ValueError("noise too high for this asymptotic formula")
    return n / math.log2(inner)


def estimate_subset_sum(n: int, density: float) -> float:
    """Asymptotic bits (n/2) / ln(1/density) for low-density instances."""
    if not 0 < density < 1:
        raise ValueError("density must lie in (0, 1)")
    return (n / 2) / math.log(1 / density)


def subset_sum_failure_bound(n: int, density: float, c: float) -> float:
    """(sqrt(pi e / 2) (c + 2^(-1/density)))^n."""
    if density >= 1:
        raise ValueError("density must be below 1")
    if density <= 0:
        raise ValueError("density must be positive")
    ratio = math.sqrt(math.pi * math.e / 2) * (c + 2.0 ** (-1.0 / density))
    return ratio**n
