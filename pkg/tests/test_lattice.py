import itertools
import math
import warnings
from fractions import Fraction

import numpy as np
import pytest
from scipy.stats import chisquare

from qbkw.lattice import (
    BddFailure,
    BddInstance,
    GapVerdict,
    HeuristicSamplingWarning,
    LatticeBasis,
    babai_nearest_plane,
    ball_point_bound,
    ball_uniform,
    bdd_to_lwe_samples,
    box_acceptance_bound,
    box_gaussian,
    embedding_distance2,
    fft_lwe_solver,
    gap_svp_test,
    gaussian_tail_bound,
    gram_schmidt,
    klein_floor,
    sample_lattice_gaussian,
    short_kernel_probability,
    solve_bdd,
    solve_subset_sum,
    subset_sum_embed,
    SubsetSumFailure,
    unique_svp,
    unit_ball_volume,
)
from qbkw.model import empirical_bias, signed


def pooled_chisquare(observed, expected, floor=5.0):
    observed = np.asarray(observed, dtype=float)
    expected = np.asarray(expected, dtype=float)
    ok = expected >= floor
    obs = np.append(observed[ok], observed[~ok].sum())
    exp = np.append(expected[ok], expected[~ok].sum())
    if exp[-1] == 0:
        obs, exp = obs[:-1], exp[:-1]
    exp *= obs.sum() / exp.sum()
    return chisquare(obs, exp).pvalue


def random_basis(n, rng, spread=10, diag=30):
    while True:
        M = rng.integers(-spread, spread + 1, (n, n)) + diag * np.eye(n, dtype=np.int64)
        if abs(np.linalg.det(M)) > 0.5:
            return LatticeBasis(M)


def brute_lambda1(basis, box=3):
    best = math.inf
    for z in itertools.product(range(-box, box + 1), repeat=basis.n):
        if any(z):
            best = min(best, math.sqrt(float(sum(v * v for v in basis.apply(z)))))
    return best


# --------------------------------------------------------------------------
# Gram-Schmidt and nearest plane


def test_gso_identity():
    g = gram_schmidt(np.eye(3, dtype=int))
    assert list(g.norms) == [1.0, 1.0, 1.0]
    assert [list(v) for v in g.vectors] == [[1, 0, 0], [0, 1, 0], [0, 0, 1]]


def test_gso_hand_example():
    g = gram_schmidt([[2, 1], [0, 1]])
    assert list(g.norms) == [2.0, 1.0]
    assert list(g.vectors[1]) == [0, 1]


def test_gso_orthogonal(rng):
    for _ in range(5):
        basis = random_basis(8, rng, spread=20, diag=0)
        vecs = gram_schmidt(basis).vectors
        for i in range(8):
            for j in range(i):
                assert sum(a * b for a, b in zip(vecs[i], vecs[j])) == 0


def test_dependent_columns_rejected():
    with pytest.raises(ValueError):
        LatticeBasis([[1, 2], [2, 4]])


def test_babai_examples():
    basis = LatticeBasis([[3, 1], [1, 4]])
    assert list(babai_nearest_plane(basis, basis.apply([2, -5]))) == [2, -5]
    assert list(babai_nearest_plane(np.eye(2, dtype=int), [0.4, -0.6])) == [0, -1]


def test_babai_matches_brute_force(rng):
    for _ in range(30):
        basis = random_basis(3, rng)
        z = rng.integers(-4, 5, 3)
        limit = float(min(gram_schmidt(basis).norms)) / 2
        offset = rng.standard_normal(3)
        offset *= 0.9 * limit * rng.random() / np.linalg.norm(offset)
        target = [Fraction(v) + Fraction(float(o)) for v, o in zip(basis.apply(z), offset)]
        best = min(
            (sum((a - b) ** 2 for a, b in zip(basis.apply(c), target)), c)
            for c in itertools.product(*(range(v - 2, v + 3) for v in z))
        )[1]
        assert list(babai_nearest_plane(basis, target)) == list(best)


def test_basis_dual_is_integral_on_lattice(rng):
    basis = random_basis(4, rng)
    dual = basis.dual()
    for _ in range(10):
        y = dual.apply(rng.integers(-5, 6, 4))
        x = basis.apply(rng.integers(-5, 6, 4))
        assert sum(a * b for a, b in zip(y, x)).denominator == 1


# --------------------------------------------------------------------------
# lattice Gaussian sampling


def test_sampler_floor():
    with pytest.raises(ValueError, match="floor"):
        sample_lattice_gaussian([[10]], 1.0)
    assert klein_floor(LatticeBasis([[10]])) == pytest.approx(2 * math.sqrt(math.log(2)) * 10)


def test_sampler_integers(rng):
    s, m = 8.0, 10**6
    x = sample_lattice_gaussian([[1]], s, rng, size=m)[:, 0].astype(np.int64)
    support = np.arange(-40, 41)
    mass = np.exp(-np.pi * support**2 / s**2)
    obs = np.array([np.count_nonzero(x == v) for v in support])
    assert pooled_chisquare(obs, mass / mass.sum() * m) > 1e-3
    assert abs(x.mean()) <= 4 * s / math.sqrt(m)


def test_sampler_marginals(rng):
    s, m = 12.0, 2 * 10**5
    v = sample_lattice_gaussian([[2, 0], [0, 3]], s, rng, size=m)
    for coord, step in ((0, 2), (1, 3)):
        vals = np.rint(v[:, coord]).astype(np.int64)
        assert np.all(vals % step == 0)
        support = np.arange(-60, 61) * step
        support = support[np.abs(support) <= 60]
        mass = np.exp(-np.pi * support**2 / s**2)
        obs = [np.count_nonzero(vals == u) for u in support]
        assert pooled_chisquare(obs, mass / mass.sum() * m) > 1e-3


def test_dual_sampler_chi_square(rng):
    basis = LatticeBasis([[2, 1], [0, 3]])
    dual = basis.dual()
    s, m = 3.0, 2 * 10**5
    v = sample_lattice_gaussian(dual, s, rng, size=m)
    z = np.rint(np.array([[float(c) for c in dual.coordinates(list(row))] for row in v[:2000]])).astype(int)
    assert np.allclose(z @ dual.matrix().T, v[:2000])
    # exact mass over an enumeration box of dual coefficients
    D = dual.matrix()
    coeffs = np.array(list(itertools.product(range(-25, 26), repeat=2)))
    pts = coeffs @ D.T
    mass = np.exp(-np.pi * np.sum(pts**2, axis=1) / s**2)
    keys = {tuple(np.round(p, 6)): i for i, p in enumerate(pts)}
    obs = np.zeros(len(pts))
    for p in np.round(v, 6):
        obs[keys[tuple(p)]] += 1
    assert pooled_chisquare(obs, mass / mass.sum() * m) > 1e-3


def test_box_gaussian_chi_square(rng):
    n, sigma, box, m = 2, 1.5, 4, 10**5
    x = box_gaussian(n, sigma, box, rng, size=m)
    assert np.abs(x).max() <= box
    pts = list(itertools.product(range(-box, box + 1), repeat=n))
    mass = np.array([math.exp(-(a * a + b * b) / (2 * sigma**2)) for a, b in pts])
    idx = {p: i for i, p in enumerate(pts)}
    obs = np.zeros(len(pts))
    for row in x:
        obs[idx[tuple(row)]] += 1
    assert pooled_chisquare(obs, mass / mass.sum() * m) > 1e-3


def test_box_acceptance_bound(rng):
    n, sigma, box, R = 4, 1.0, 6, 3.0
    x = box_gaussian(n, sigma, box, rng, size=10**5)
    rate = np.mean(np.abs(x).max(axis=1) <= box - R)
    assert rate >= box_acceptance_bound(n, sigma, box, R)


def test_ball_uniform(rng):
    pts = ball_uniform(3, 2.0, rng, size=50000)
    r = np.linalg.norm(pts, axis=1)
    assert r.max() <= 2.0
    # radial cdf of the uniform ball is (r / R)^n
    assert np.mean(r <= 1.0) == pytest.approx(1 / 8, abs=0.01)


def test_tail_bound():
    assert gaussian_tail_bound(10, 1.0) == (1.0, 1.0)
    sharp, weak = gaussian_tail_bound(100, 2.0)
    assert sharp == pytest.approx(math.exp(-50 * (3 - 2 * math.log(2))))
    assert math.log(sharp) == pytest.approx(-80.685, abs=1e-3)
    assert weak == pytest.approx(math.exp(-50))
    assert gaussian_tail_bound(100, 2.5)[0] < sharp > gaussian_tail_bound(120, 2.0)[0]
    with pytest.raises(ValueError):
        gaussian_tail_bound(5, 0.5)


# --------------------------------------------------------------------------
# BDD through LWE


def test_bdd_samples_exact_lattice_point(rng):
    basis = random_basis(2, rng)
    s = np.array([3, -2])
    inst = BddInstance(basis, basis.apply(s), lambda1=brute_lambda1(basis))
    q = 11
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HeuristicSamplingWarning)
        L = bdd_to_lwe_samples(inst, q, 4 * q * klein_floor(basis.dual()), 400, rng)
    assert np.allclose(np.mod(signed(np.mod(L.b - (np.asarray(L.A) @ np.mod(s, q)), q).round().astype(int), q), q), 0)
    assert np.array_equal(fft_lwe_solver(L, 1.0, np.full(2, 5.0)), np.mod(s, q))


def test_bdd_samples_identity_bias(rng):
    n, q, sigma = 3, 31, 40.0
    s = np.array([2, -1, 4])
    v = np.array([0.05, -0.1, 0.08])
    inst = BddInstance(np.eye(n, dtype=int), [Fraction(int(a)) + Fraction(float(b)) for a, b in zip(s, v)], lambda1=1.0)
    with pytest.warns(HeuristicSamplingWarning):
        L = bdd_to_lwe_samples(inst, q, sigma, 10**5, rng)
    err = L.b - np.asarray(L.A) @ np.mod(s, q)
    bias = empirical_bias(err, q).real
    assert bias >= math.exp(-math.pi * sigma**2 * float(v @ v) / q**2) * 0.95


def test_bdd_samples_vector_part_uniform(rng):
    basis = random_basis(4, rng, spread=3, diag=6)
    q = 5
    sigma = 4 * q * basis.dual().max_gs_norm * math.sqrt(math.log(4))
    inst = BddInstance(basis, [Fraction(1, 3)] * 4, lambda1=brute_lambda1(basis, 2))
    L = bdd_to_lwe_samples(inst, q, sigma, 10**5, rng)
    idx = np.ravel_multi_index(tuple(np.asarray(L.A, dtype=np.int64).T), (q,) * 4)
    counts = np.bincount(idx, minlength=q**4)
    assert chisquare(counts).pvalue > 1e-3


def test_bdd_samples_warn_without_certificate(rng):
    inst = BddInstance(np.eye(2, dtype=int), [0, 0])
    with pytest.warns(HeuristicSamplingWarning):
        bdd_to_lwe_samples(inst, 7, 20.0, 10, rng)
    with pytest.raises(ValueError):
        bdd_to_lwe_samples(inst, 7, 20.0, 0, rng)


def test_solve_bdd_lattice_point(rng):
    basis = random_basis(3, rng)
    s = np.array([1, -2, 2])
    inst = BddInstance(basis, basis.apply(s), B_bound=2, lambda1=brute_lambda1(basis))
    res = solve_bdd(inst, 11, rng=rng, steps=0)
    assert [int(v) for v in res.s] == s.tolist()
    assert res.distance == 0


def test_solve_bdd_planted(rng):
    n, q = 4, 17
    wins = 0
    for _ in range(10):
        basis = random_basis(n, rng)
        lam1 = brute_lambda1(basis, 2)
        s = rng.integers(-2, 3, n)
        v = rng.standard_normal(basis.dim)
        v *= lam1 / 10 * rng.random() / np.linalg.norm(v)
        x = [p + Fraction(float(e)) for p, e in zip(basis.apply(s), v)]
        inst = BddInstance(basis, x, B_bound=2, beta=10, lambda1=lam1)
        res = solve_bdd(inst, q, rng=rng, steps=2, stop_radius=lam1 / 10)
        wins += [int(a) for a in res.s] == s.tolist()
    assert wins >= 8


def test_solve_bdd_descent_shrinks_error(rng):
    # the error of the samples at the next scale is that of the current scale divided by q
    n, q = 3, 13
    basis = random_basis(n, rng)
    lam1 = brute_lambda1(basis)
    s = np.array([40, -31, 25])  # beyond q / 2 so the descent needs two scales
    v = np.array([0.3, -0.2, 0.25])
    x = [p + Fraction(float(e)) for p, e in zip(basis.apply(s), v)]
    spreads = []

    def solver(samples, bias, bounds):
        r = fft_lwe_solver(samples, bias, bounds)
        err = np.mod(samples.b - np.asarray(samples.A) @ r + q / 2, q) - q / 2
        spreads.append(float(np.sqrt(np.mean(err**2))))
        return r

    inst = BddInstance(basis, x, lambda1=lam1, beta=4)
    res = solve_bdd(inst, q, solver, rng, steps=0, depth=2, count=20000)
    assert [int(a) for a in res.s] == s.tolist()
    assert len(spreads) == 2
    assert spreads[1] <= 1.5 * spreads[0] / q


def test_solve_bdd_failure(rng):
    def broken(samples, bias, bounds):
        raise RuntimeError("no")

    inst = BddInstance(np.eye(2, dtype=int), [Fraction(1, 3), 0])
    with pytest.raises(BddFailure) as info:
        solve_bdd(inst, 7, broken, rng, steps=1, count=10)
    assert len(info.value.trace) == 2


# --------------------------------------------------------------------------
# unique and gap SVP


def test_unique_svp_unit_vector():
    basis = LatticeBasis([[1, 0, 0], [0, 50, 7], [0, 0, 60]])
    res = unique_svp(basis, B=1, beta=5)
    assert abs(int(res.s[0])) == 1 and res.norm == 1.0
    assert res.calls <= 3 * 7


def test_unique_svp_toy_gap(rng):
    for _ in range(5):
        short = rng.integers(-2, 3, 3)
        if not short.any():
            short[0] = 1
        M = np.array([short, [0, 40, 3], [0, 0, 45]]).T
        M[:, 1] += rng.integers(-5, 6, 3)
        try:
            basis = LatticeBasis(M)
        except ValueError:
            continue
        lam1 = brute_lambda1(basis, 3)
        res = unique_svp(basis, B=3, beta=3)
        assert res.norm == pytest.approx(lam1)
        assert res.calls <= 3 * 5


def test_gap_lambda_large(rng):
    basis = LatticeBasis((np.eye(3, dtype=np.int64) * 10**6))
    assert gap_svp_test(basis, 2.0, 0.5, 1.0, rng=rng, trials=50) == GapVerdict.LAMBDA_LARGE


def test_gap_planted_short_vector(rng):
    hits = 0
    for _ in range(10):
        M = np.diag([1, 40, 40, 40]) + np.triu(rng.integers(-5, 6, (4, 4)), 1)
        hits += gap_svp_test(M, 2.0, 0.5, 1.0, rng=rng, trials=200) == GapVerdict.SMALL_VECTOR_EXISTS
    assert hits >= 9


def test_gap_never_false_alarm_on_large_minimum(rng):
    d, R = 0.5, 2.0
    for _ in range(10):
        basis = random_basis(3, rng, spread=4, diag=40)
        assert brute_lambda1(basis, 2) > 4 * R / d
        # nearest plane decodes every error of norm below half the smallest GS norm
        assert min(gram_schmidt(basis).norms) / 2 > 1 / d
        assert gap_svp_test(basis, R, d, 1.0, rng=rng, trials=100) == GapVerdict.LAMBDA_LARGE


def test_gap_argument_checks(rng):
    with pytest.raises(ValueError):
        gap_svp_test(np.eye(2, dtype=int), 1.0, 1.5, 1.0)
    with pytest.raises(ValueError, match="budget"):
        gap_svp_test(np.eye(2, dtype=int), 1.0, 0.9, 1.0, budget=1)


# --------------------------------------------------------------------------
# subset sum


def test_embed_single():
    inst = subset_sum_embed([7], 7, 5)
    assert list(inst.x) == [Fraction(1, 2), 35]
    assert embedding_distance2(inst, [1]) == Fraction(1, 4)


def test_embed_distance_exact(rng):
    for _ in range(100):
        a = rng.integers(1, 2**32, 16)
        s = rng.integers(0, 2, 16)
        t = int(sum(int(x) * int(y) for x, y in zip(a, s)))
        inst = subset_sum_embed(a, t, 1000)
        assert embedding_distance2(inst, s) == 4


def test_embed_floor():
    with pytest.raises(ValueError):
        subset_sum_embed([3, 5, 9, 17], 8, 1, c=0.4, M=2**8)
    with pytest.raises(ValueError):
        subset_sum_embed([3, 5], 8, 100, c=0.9)


def test_ball_point_bound():
    assert unit_ball_volume(4) == pytest.approx(math.pi**2 / 2)
    assert ball_point_bound(4, 0) == pytest.approx(math.pi**2 / 2)
    assert ball_point_bound(4, 1) == pytest.approx(8 * math.pi**2)
    count = sum(1 for z in itertools.product(range(-1, 2), repeat=4) if sum(v * v for v in z) <= 1)
    assert count == 9 and ball_point_bound(4, 1) >= count
    assert ball_point_bound(6, 2.0) < ball_point_bound(6, 2.5)
    # Stirling gives V_n <= (2 pi e / n)^(n / 2); the tighter base pi e / n fails already at n = 10
    for n in range(4, 40):
        assert unit_ball_volume(n) <= math.sqrt(2 * math.pi * math.e / n) ** n
    assert unit_ball_volume(10) > math.sqrt(math.pi * math.e / 10) ** 10


def test_short_kernel_probability_below_asymptotic():
    n, c = 40, 0.4
    M = 2**400
    d = n / math.log2(M)
    beta = c * 2 ** (1 / d)
    lhs = short_kernel_probability(n, M, beta)
    rhs = (math.sqrt(math.pi * math.e / 2) * (c + 2 ** (-1 / d))) ** n
    assert lhs <= rhs < 1


def test_subset_sum_shortcut_and_unsolvable(rng):
    a = [3, 9, 27, 81]
    res = solve_subset_sum(a, sum(a))
    assert res.s.tolist() == [1, 1, 1, 1]
    a = rng.integers(1, 2**32, 8).tolist()
    sums = {sum(x * y for x, y in zip(a, s)) for s in itertools.product((0, 1), repeat=8)}
    t = 1
    while t in sums:
        t += 1
    with pytest.raises(SubsetSumFailure):
        solve_subset_sum(a, t, M=2**32, lwe_solver=fft_lwe_solver, count=2000, rng=rng)
