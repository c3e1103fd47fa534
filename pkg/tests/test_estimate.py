import io
import math

import numpy as np
import pytest

from qbkw.estimate import (
    CONTOUR_LEVELS,
    CSV_HEADER,
    OPTIMISTIC,
    PESSIMISTIC,
    REASONABLE,
    CostModelKnobs,
    CostRow,
    EstimateInfeasible,
    bkw_exponent,
    contour_grid,
    contour_level,
    dual_ratio,
    emit_contours,
    estimate_bkw,
    estimate_lattice_dual,
    estimate_lattice_primal,
    estimate_lpn,
    estimate_row,
    estimate_subset_sum,
    parse_contours,
    regev_sigma,
    secret_moments,
    subset_sum_failure_bound,
    table_instances,
    write_csv,
)


def test_knob_presets_and_validation():
    assert CostModelKnobs.preset("reasonable") == REASONABLE
    assert OPTIMISTIC.quantizer_variance_gain == pytest.approx(2 * math.pi * math.e / 12)
    with pytest.raises(ValueError):
        CostModelKnobs(0.9, 1.3)
    with pytest.raises(ValueError):
        CostModelKnobs(1.1, 0.5)
    with pytest.raises((KeyError, ValueError)):
        CostModelKnobs.preset("wild")


def test_cost_row_invariant():
    with pytest.raises(ValueError):
        CostRow(n=8, q=17, sigma=1.0, secret="uniform", k=1, log_m=10.0, log_N=0, bits=9.0,
                tail=0, scale=1.0, final_bias=0.5)


def test_secret_moments():
    assert secret_moments("binary", 3.0) == (0.5, 1.0)
    var, _ = secret_moments("uniform", 3.0)
    assert var == pytest.approx(9.0)
    with pytest.raises(ValueError):
        secret_moments("ternary-ish", 1.0)


def test_bkw_first_row():
    row = estimate_bkw(64, 4099, regev_sigma(64, 4099))
    assert row.k == 16
    assert abs(row.bits - 39.6) <= 1.5
    assert row.bits >= row.log_m


def test_bkw_n256_row():
    row = estimate_bkw(256, 65537, regev_sigma(256, 65537))
    assert abs(row.bits - 133.0) <= 2
    assert abs(row.k - 22) <= 1


def test_bkw_lindner_peikert_row():
    row = estimate_bkw(192, 4099, 8.87 / math.sqrt(2 * math.pi))
    assert abs(row.bits - 84.2) <= 2


def test_bkw_deterministic():
    a = estimate_bkw(80, 6421, regev_sigma(80, 6421))
    b = estimate_bkw(80, 6421, regev_sigma(80, 6421))
    assert a == b


def test_bkw_infeasible():
    with pytest.raises(EstimateInfeasible):
        estimate_bkw(16, 17, 40.0)


def test_knob_ordering_small_rows():
    for n, q in ((64, 4099), (80, 6421)):
        sd = regev_sigma(n, q)
        o, r, p = (estimate_bkw(n, q, sd, knobs=k).bits for k in (OPTIMISTIC, REASONABLE, PESSIMISTIC))
        assert o <= r <= p


def test_csv_output():
    buf = io.StringIO()
    write_csv([estimate_row(64, 4099, regev_sigma(64, 4099))], buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert lines[1].startswith("64,4099,")


def test_table_instances():
    rows = table_instances()
    assert len(rows) == 16
    assert sum(label == "regev" for label, *_ in rows) == 10
    lp = [r for r in rows if r[0] == "lindner-peikert"][0]
    assert lp[3] == pytest.approx(8.87 / math.sqrt(2 * math.pi))


# --------------------------------------------------------------------------
# lattice attacks


def test_primal_limits():
    n = 1000
    assert estimate_lattice_primal(n, n, 1 / n, c=1.0) == pytest.approx(2 * n)
    # binary mode: alpha q constant, so a = b and the exponent constant is 2c / b
    q = n**1.5
    assert estimate_lattice_primal(n, q, 1 / q, c=0.3) / n == pytest.approx(2 * 0.3 / 1.5)
    vals = [estimate_lattice_primal(n, n**2, n**-1.5, c=c) for c in (0.286, 0.2972, 1, 2)]
    assert all(x < y for x, y in zip(vals, vals[1:]))


def test_dual_limits():
    n = 1000
    q = n**1.5
    assert estimate_lattice_dual(n, q, 1 / q, c=0.3) / n == pytest.approx(2 * 0.3 * 1.5 / (0.5 + 1.5) ** 2)
    assert dual_ratio(1.0, 1e-9) < 1e-8


def test_dual_never_above_primal():
    n = 500
    for a in np.linspace(0.3, 2, 20):
        for b in np.linspace(0.3, 2, 20):
            q, alpha = n**b, n**-a
            assert estimate_lattice_dual(n, q, alpha) <= estimate_lattice_primal(n, q, alpha) + 1e-9


def test_bkw_exponent_edges():
    assert bkw_exponent(2.0, 1.0) == 0.0
    assert bkw_exponent(0.0, 1.0) == math.inf
    assert bkw_exponent(0.5, 1.0) == pytest.approx(1 / (1 + 2 * math.log(2)))


# --------------------------------------------------------------------------
# contours


def test_contour_cells_are_minimum():
    for a, b, best, bits in contour_grid([0.5, 1.0, 2.0], [1.0, 2.0, 3.0]):
        bkw, dual = bkw_exponent(a, b), REASONABLE.svp_exponent * dual_ratio(a, b)
        assert bits == min(bkw, dual)
        assert best == ("bkw" if bkw <= dual else "dual")


def test_contour_round_trip():
    text = emit_contours([0.3, 1.1, 2.7], [0.5, 1.9])
    assert text.splitlines()[0] == "a,b,best,bits"
    assert parse_contours(text) == contour_grid([0.3, 1.1, 2.7], [0.5, 1.9])
    with pytest.raises(ValueError):
        parse_contours("x,y\n1,2\n")


def test_contour_boundary_monotone():
    rows = contour_grid()
    by_a = {}
    for a, b, best, _ in rows:
        by_a.setdefault(a, []).append(best)
    for seq in by_a.values():
        assert sum(x != y for x, y in zip(seq, seq[1:])) <= 1


def test_contour_levels():
    assert CONTOUR_LEVELS[0] == 0 and CONTOUR_LEVELS[-1] == pytest.approx(4.8)
    assert all(y - x == pytest.approx(0.3) for x, y in zip(CONTOUR_LEVELS, CONTOUR_LEVELS[1:]))
    assert contour_level(1.0) == pytest.approx(0.9)
    assert contour_level(100) == pytest.approx(4.8)


# --------------------------------------------------------------------------
# LPN and subset sum


def test_lpn_formula():
    n = 1024
    p = 0.5 - 2 ** (-math.sqrt(n))
    inner = n / -math.log2(1 - 2 * p)
    assert estimate_lpn(n, p) == pytest.approx(n / math.log2(inner))
    # 1 - 2p = 2^(1 - sqrt(n))
    assert estimate_lpn(n, p) == pytest.approx(n / math.log2(n / (math.sqrt(n) - 1)))
    with pytest.raises(ValueError):
        estimate_lpn(n, 0.5)


def test_subset_sum_formula():
    assert estimate_subset_sum(100, 1 / math.e) == pytest.approx(50)
    with pytest.raises(ValueError):
        estimate_subset_sum(100, 1.0)


def test_failure_bound_ratios():
    ratio = lambda c, d: subset_sum_failure_bound(1, d, c)
    assert ratio(0.4, 0.1) == pytest.approx(math.sqrt(math.pi * math.e / 2) * (0.4 + 2**-10))
    assert ratio(0.4, 0.1) == pytest.approx(0.828, abs=1e-3)
    assert subset_sum_failure_bound(50, 0.1, 0.4) == pytest.approx(ratio(0.4, 0.1) ** 50)
    # as the density vanishes with c = 0.5 the base tends to sqrt(pi e / 2) / 2 ~ 1.033 > 1
    assert ratio(0.5, 1e-3) == pytest.approx(1.033, abs=1e-3)
    assert math.sqrt(2 / math.pi / math.e) == pytest.approx(0.484, abs=1e-3)
    for bad in (1.0, 1.5, 0.0):
        with pytest.raises(ValueError):
            subset_sum_failure_bound(10, bad, 0.4)
