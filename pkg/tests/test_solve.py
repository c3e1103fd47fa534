import math

import numpy as np
import pytest

from qbkw.gen import sample_lwe, sample_secret, sample_uniform
from qbkw.model import Bernoulli, Binary, DiscreteGaussian, Exact, LweParams, SampleList, regev_stddev
from qbkw.reduce import plan
from qbkw.solve import (
    Decision,
    PipelineExhausted,
    RecoveredSecret,
    SolverFailure,
    Verdict,
    _scores_on_grid,
    distinguish,
    exhaustive_secret,
    find_secret_fft,
    hoeffding_error,
    reduce_per_plan,
    solve_dim1,
    solve_lpn_decision,
    solve_lpn_sparse,
    solve_lwe,
)


def sigma_for_bias(bias, q):
    return q * math.sqrt(-math.log(bias) / (2 * math.pi**2))


# --------------------------------------------------------------------------
# distinguish


def test_distinguish_zero_values():
    v = distinguish(np.zeros(10), 97, 0.3)
    assert v.is_lwe and v.statistic == pytest.approx(1.0)


def test_distinguish_errors_and_verdict_invariant():
    with pytest.raises(ValueError):
        distinguish([], 97, 0.5)
    with pytest.raises(ValueError):
        distinguish([1.0], 97, 0.0)
    with pytest.raises(ValueError):
        Verdict(Decision.LWE, 0.1, 0.2, 5)


def test_distinguish_uniform(rng):
    q, b, m = 97, 0.1, 10**6
    assert hoeffding_error(m, b) < 1e-500 or hoeffding_error(m, b) == pytest.approx(2 * math.exp(-m * b * b / 8))
    v = distinguish(rng.integers(0, q, m), q, b)
    assert v.decision is Decision.UNIFORM


def test_distinguish_gaussian_errors(rng):
    q = 257
    noise = DiscreteGaussian(sigma_for_bias(0.5, q))
    assert noise.bias(q) == pytest.approx(0.5, rel=1e-6)
    from qbkw.gen import sample_noise

    hits = sum(distinguish(sample_noise(noise, q, 10**4, rng), q, 0.5).is_lwe for _ in range(100))
    assert hits >= 99


def test_distinguish_negation_invariance(rng):
    q = 101
    b = rng.integers(0, q, 5000).astype(float)
    assert distinguish(b, q, 0.5).statistic == pytest.approx(distinguish(np.mod(-b, q), q, 0.5).statistic, abs=1e-12)


def test_lpn_statistic_is_integer_arithmetic(rng):
    b = rng.integers(0, 2, 999)
    assert distinguish(b, 2, 0.5).statistic == pytest.approx(1 - 2 * b.mean(), abs=1e-15)


# --------------------------------------------------------------------------
# Fourier secret recovery


def test_find_secret_noise_free():
    A = np.arange(200).reshape(-1, 1) % 5
    L = SampleList(A, (3 * A[:, 0]) % 5, 5)
    res = find_secret_fft(L)
    assert res.s.tolist() == [3] and res.score == pytest.approx(1.0)
    assert isinstance(res, RecoveredSecret) and res.gap >= 0


def test_find_secret_matches_exhaustive_q7(rng):
    q, n = 7, 2
    params = LweParams(n, q, DiscreteGaussian(sigma_for_bias(0.8, q)))
    for _ in range(100):
        s = sample_secret(params, rng)
        L = sample_lwe(params, s, 4000, rng)
        assert np.array_equal(find_secret_fft(L).s, exhaustive_secret(L))


def test_find_secret_cap():
    L = SampleList(np.zeros((3, 3), dtype=np.int64), np.zeros(3), 101)
    with pytest.raises(ValueError, match="reduce the dimension"):
        find_secret_fft(L, cap=1000)


def test_wrong_secret_suppression(rng):
    q, n, m = 11, 2, 20000
    L = sample_uniform(LweParams(n, q, DiscreteGaussian(1.0)), m, rng)
    b = 8 * math.sqrt(n * math.log2(q) / m)
    assert find_secret_fft(L).score < b / 2


# --------------------------------------------------------------------------
# pipeline


def binary_params(n, q):
    return LweParams(n, q, DiscreteGaussian(regev_stddev(n, q)), Binary())


def test_pipeline_depth_and_exhaustion(rng):
    params = binary_params(16, 257)
    pl = plan(params, model="practical", tail=2)
    s = sample_secret(params, rng)
    L = sample_lwe(params, s, pl.m, rng)
    out = reduce_per_plan(L, pl)
    assert out.depth == pl.k
    with pytest.raises(PipelineExhausted) as info:
        reduce_per_plan(L[:3], pl)
    assert info.value.trace[0] == 3
    with pytest.raises(ValueError):
        solve_lwe(L[:10], pl, "find_secret")


def test_pipeline_outputs_are_sums_of_two_to_k(rng):
    # track provenance by appending unit columns that the plan never touches
    q, n, m = 257, 6, 4000
    params = binary_params(n, q)
    pl = plan(params, model="practical", tail=0)
    A = rng.integers(0, q, (m, n))
    ident = np.eye(m, dtype=np.int64)
    big = SampleList(np.hstack([A, ident]), np.zeros(m), q)
    from qbkw.reduce import reduce_step

    out = big
    for i in range(pl.k):
        out = reduce_step(out, pl.D[i], pl.d[i], pl.d[i + 1])
    tags = np.asarray(out.A[:, n:], dtype=np.int64) % q
    used = (tags != 0).sum(axis=1)
    assert np.all(used == 2**pl.k)
    assert out.depth == pl.k


def test_full_secret_recovery_small(rng):
    params = binary_params(16, 257)
    replan = lambda d: plan(binary_params(d, 257), model="practical", tail=min(2, d))
    pl = replan(16)
    s = sample_secret(params, rng)
    L = sample_lwe(params, s, pl.m * 3, rng)
    res = solve_lwe(L, pl, "find_secret", replan=replan, rng=rng)
    assert np.array_equal(res.s, s)


def test_uniform_input_gives_uniform_verdict(rng):
    params = binary_params(16, 257)
    pl = plan(params, model="practical", tail=0)
    wrong = 0
    for _ in range(100):
        U = sample_uniform(params, pl.m, rng)
        wrong += solve_lwe(U, pl, "distinguish").is_lwe
    size = len(reduce_per_plan(sample_uniform(params, pl.m, rng), pl))
    bound = hoeffding_error(size, pl.predicted_final_bias)
    # 100 trials; allow three standard deviations above the bound
    assert wrong <= 100 * bound + 3 * math.sqrt(100 * max(bound, 0.01))


# --------------------------------------------------------------------------
# dimension one


def test_solve_dim1_exact_large_modulus(rng):
    q, s = 1 << 20, 12345
    a = rng.integers(0, q, 200000)
    stream = zip(a.tolist(), ((a * s) % q).tolist())
    est = solve_dim1(stream, q, Exact(), rng=rng)
    held = rng.integers(0, q, 50)
    assert est == s
    assert np.all((held * est) % q == (held * s) % q)


def test_solve_dim1_noisy(rng):
    q, s = 1 << 16, 4321
    noise = DiscreteGaussian(q * 0.004)
    a = rng.integers(0, q, 400000)
    from qbkw.gen import discrete_gaussian_int

    b = (a * s + discrete_gaussian_int(noise.sigma, rng, len(a))) % q
    assert solve_dim1(zip(a.tolist(), b.tolist()), q, noise, rng=rng, steps=2) == s


def test_solve_dim1_short_stream(rng):
    with pytest.raises(ValueError, match="insufficient"):
        solve_dim1(iter([(1, 1)] * 10), 1 << 20, Exact(), rng=rng)


def test_candidate_spacing_kernel():
    # with every a in [-r, r] present once, the score at offset t from the secret is
    # the Dirichlet kernel sin(pi t R / q) / sin(pi t / q) with R = 2r + 1
    q, s, r = 10007, 777, 40
    R = 2 * r + 1
    pairs = [(a, (a * s) % q) for a in range(-r, r + 1)]
    sc = _scores_on_grid(pairs, q, s, 1, 1, 300)
    t = np.arange(-300, 301)
    kernel = np.where(t == 0, R, np.sin(np.pi * t * R / q) / np.where(t == 0, 1, np.sin(np.pi * t / q)))
    assert np.allclose(sc, kernel, atol=1e-6)
    # the argmax is the secret and the kernel is positive for |t| < q / R
    assert t[np.argmax(sc)] == 0
    assert np.all(sc[np.abs(t) < q / R] > 0)


def test_refinement_shrinks_bound():
    q, R = 1 << 20, 101
    first, second = q / R, q / R**2
    assert second == pytest.approx(first / R)


# --------------------------------------------------------------------------
# LPN


def test_lpn_decision_noise_free(rng):
    params = LweParams(32, 2, Bernoulli(0.0))
    s = sample_secret(params, rng)
    pl = plan(LweParams(32, 2, Bernoulli(0.125)), mode="lpn", model="practical")
    L = sample_lwe(params, s, pl.m, rng)
    assert solve_lpn_decision(0.0, L, plan=pl).is_lwe


def test_lpn_decision_uniform_bits(rng):
    params = LweParams(32, 2, Bernoulli(0.125))
    pl = plan(params, mode="lpn", model="practical")
    hits = sum(not solve_lpn_decision(0.125, sample_uniform(params, pl.m, rng), plan=pl).is_lwe for _ in range(20))
    assert hits >= 18


def test_lpn_decision_requires_binary_modulus(rng):
    with pytest.raises(ValueError):
        solve_lpn_decision(0.1, SampleList(np.zeros((4, 2), dtype=np.int64), np.zeros(4), 3))


def lpn_source(params, s, rng):
    return lambda count: sample_lwe(params, s, count, rng)


def test_sparse_lpn_noise_free(rng):
    params = LweParams(16, 2, Bernoulli(0.0))
    s = sample_secret(params, rng)
    res = solve_lpn_sparse(0.0, lpn_source(params, s, rng), 16, rng=rng)
    assert res.trials == 1 and np.array_equal(res.s, s)


def test_sparse_lpn_errors(rng):
    with pytest.raises(ValueError):
        solve_lpn_sparse(0.3, None, 8)

    def empty(count):
        raise ValueError("dry")

    with pytest.raises(SolverFailure, match="after 0 trials"):
        solve_lpn_sparse(0.1, empty, 8)


def test_nonzero_switched_secret_rejected(rng):
    # a switched instance whose secret is a nonzero noise vector looks uniform on 33n scalars
    n, p = 16, 0.1
    params = LweParams(n, 2, Bernoulli(p))
    false_pos = 0
    for _ in range(200):
        A = rng.integers(0, 2, (33 * n, n))
        s = rng.integers(0, 2, n)
        if not s.any():
            s[0] = 1
        e = (rng.random(33 * n) < p).astype(np.int64)
        b = (A @ s + e) % 2
        false_pos += distinguish(b, 2, 1 - 2 * p).is_lwe
    assert false_pos / 200 <= max(2 ** (-33 * n / 32), 0.02)
    assert params.q == 2
