"""scikit-learn style wrappers around planning, reduction and secret recovery.

Samples are passed either as ``(A, b)`` or as one augmented matrix whose last
column is ``b``.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .gen import as_generator
from .model import Binary, BoundedPerCoordinate, DiscreteGaussian, LweParams, SampleList, Uniform, residue_dtype, signed


def check_lwe_samples(X, y=None, *, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Validate and reduce samples mod ``q``; returns ``(A, b)`` as int64 arrays."""
    if q < 2:
        raise ValueError("q must be >= 2")
    X = check_array(X, dtype=np.int64, ensure_min_features=1)
    if y is None:
        if X.shape[1] < 2:
            raise ValueError("augmented samples need at least two columns")
        A, b = X[:, :-1], X[:, -1]
    else:
        b = check_array(np.asarray(y).reshape(-1, 1), dtype=np.int64).ravel()
        if len(b) != len(X):
            raise ValueError(f"A has {len(X)} rows but b has {len(b)} entries")
        A = X
    return np.mod(A, q), np.mod(b, q)


def to_sample_list(A, b, q: int) -> SampleList:
    return SampleList(np.asarray(A).astype(residue_dtype(q)), np.asarray(b, dtype=np.int64), q)


def _secret_model(name: str, n: int):
    if name == "uniform":
        return Uniform()
    if name == "binary":
        return Binary()
    if name.startswith("bounded:"):
        return BoundedPerCoordinate(tuple([int(name.split(":", 1)[1])] * n))
    raise ValueError(f"unknown secret model {name!r}")


def _params(n, q, sigma, secret) -> LweParams:
    from .model import regev_stddev

    sd = regev_stddev(n, q) if sigma is None else float(sigma)
    return LweParams(n, q, DiscreteGaussian(sd), _secret_model(secret, n))


class BKWReducer(TransformerMixin, BaseEstimator):
    """Plans on ``fit`` and applies every reduction step on ``transform``.

    The output is the augmented matrix of the final list.
    """

    def __init__(self, q=1031, sigma=None, secret="uniform", tail=0, reducer="exact", random_state=None):
        self.q = q
        self.sigma = sigma
        self.secret = secret
        self.tail = tail
        self.reducer = reducer
        self.random_state = random_state

    def fit(self, X, y=None):
        from .reduce import plan

        A, _ = check_lwe_samples(X, y, q=self.q)
        self.n_features_in_ = A.shape[1] + (0 if y is not None else 1)
        params = _params(A.shape[1], self.q, self.sigma, self.secret)
        self.plan_ = plan(params, model="practical", reducer=self.reducer, tail=self.tail)
        return self

    def transform(self, X, y=None):
        from .solve import reduce_per_plan

        check_is_fitted(self, "plan_")
        A, b = check_lwe_samples(X, y, q=self.q)
        if A.shape[1] != self.plan_.n:
            raise ValueError(f"fitted for dimension {self.plan_.n}, got {A.shape[1]}")
        out = reduce_per_plan(to_sample_list(A, b, self.q), self.plan_, rng=as_generator(self.random_state))
        return np.column_stack([np.asarray(out.A, dtype=np.int64), np.asarray(out.b, dtype=np.int64)])


class BKWSecretRecovery(BaseEstimator):
    """Recovers the secret on ``fit``; ``predict`` returns the noiseless ``<a, s>``."""

    def __init__(self, q=1031, sigma=None, secret="uniform", tail=2, random_state=None):
        self.q = q
        self.sigma = sigma
        self.secret = secret
        self.tail = tail
        self.random_state = random_state

    def fit(self, X, y=None):
        from .reduce import plan
        from .solve import solve_lwe

        A, b = check_lwe_samples(X, y, q=self.q)
        n = A.shape[1]
        cache = {}

        def replan(dim):
            if dim not in cache:
                cache[dim] = plan(_params(dim, self.q, self.sigma, self.secret), model="practical",
                                  tail=min(self.tail, dim))
            return cache[dim]

        self.plan_ = replan(n)
        res = solve_lwe(to_sample_list(A, b, self.q), self.plan_, "find_secret", replan=replan,
                        rng=as_generator(self.random_state))
        self.secret_ = np.mod(res.s, self.q)
        self.score_ = res.score
        self.n_features_in_ = n
        return self

    def predict(self, X):
        check_is_fitted(self, "secret_")
        A = check_array(X, dtype=np.int64)
        return np.mod(A @ self.secret_, self.q)

    def score(self, X, y):
        """Fraction of samples whose centred error is below q/4."""
        err = signed(np.mod(np.asarray(y, dtype=np.int64) - self.predict(X), self.q), self.q)
        return float(np.mean(np.abs(err) < self.q / 4))
