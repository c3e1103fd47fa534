import numpy as np
import pytest
from sklearn.base import clone

from qbkw.estimators import BKWReducer, BKWSecretRecovery, check_lwe_samples
from qbkw.gen import sample_lwe, sample_secret
from qbkw.model import Binary, DiscreteGaussian, LweParams, regev_stddev


@pytest.fixture
def instance(rng):
    params = LweParams(16, 257, DiscreteGaussian(regev_stddev(16, 257)), Binary())
    s = sample_secret(params, rng)
    L = sample_lwe(params, s, 1 << 15, rng)
    return np.asarray(L.A, dtype=np.int64), np.asarray(L.b, dtype=np.int64), s


def test_check_samples():
    A, b = check_lwe_samples([[1, 2, 300]], q=257)
    assert A.tolist() == [[1, 2]] and b.tolist() == [43]
    with pytest.raises(ValueError):
        check_lwe_samples([[1]], q=257)
    with pytest.raises(ValueError):
        check_lwe_samples([[1, 2]], [1, 2], q=257)
    with pytest.raises(ValueError):
        check_lwe_samples([[1, 2]], q=1)


def test_params_round_trip():
    est = BKWSecretRecovery(q=257, secret="binary", tail=3)
    assert est.get_params()["tail"] == 3
    assert clone(est).get_params() == est.get_params()


def test_reducer_transform(instance):
    A, b, s = instance
    red = BKWReducer(q=257, secret="binary", tail=2).fit(A, b)
    out = red.transform(A, b)
    pl = red.plan_
    assert out.shape[1] == 17
    assert len(out) <= len(A) // 2**pl.k
    assert np.all(out[:, : pl.d[-1]] == 0) or pl.D[0] > 1
    with pytest.raises(ValueError):
        red.transform(A[:, :5], b)


def test_recovery(instance):
    A, b, s = instance
    est = BKWSecretRecovery(q=257, secret="binary", random_state=0).fit(A, b)
    assert np.array_equal(est.secret_, s)
    assert np.array_equal(est.predict(A[:5]), (A[:5] @ s) % 257)
    assert est.score(A, b) > 0.99
    augmented = np.column_stack([A, b])
    again = BKWSecretRecovery(q=257, secret="binary", random_state=0).fit(augmented)
    assert np.array_equal(again.secret_, s)
