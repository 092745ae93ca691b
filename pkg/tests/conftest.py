"""Shared oracle helpers for the test suite.

Dense-matrix references computed the obvious way (explicit inverses,
slogdet, np.kron) so the structured implementations are checked against
an independent path.
"""

import numpy as np

from mnkit.covmodels import (
    Ar1,
    BlockScaled,
    CovSpec,
    Diagonal,
    FullRank,
    Identity,
    Isotropic,
    KronCov,
    LowRankPlus,
    SqExp,
)

LOG2PI = np.log(2.0 * np.pi)


def dense_vec_normal_logpdf(x, mean, cov):
    """Multivariate normal log density via slogdet + solve."""
    x = np.asarray(x, float).ravel()
    mean = np.asarray(mean, float).ravel()
    d = x.size
    sign, ld = np.linalg.slogdet(cov)
    assert sign > 0
    r = x - mean
    return -0.5 * (d * LOG2PI + ld + r @ np.linalg.solve(cov, r))


def matnorm_dense_logpdf(x, mean, row_dense, col_dense):
    """Matrix-normal density through the vec / Kronecker equivalence."""
    cov = np.kron(col_dense, row_dense)
    return dense_vec_normal_logpdf(
        np.asarray(x).ravel(order="F"), np.asarray(mean).ravel(order="F"), cov
    )


def random_cov_model(rng, kind, dim):
    """A covariance model of the given family with random parameters."""
    if kind == "identity":
        return Identity(dim)
    if kind == "isotropic":
        return Isotropic(dim).with_params(rng.normal(0, 0.5, 1))
    if kind == "diagonal":
        return Diagonal(dim).with_params(rng.normal(0, 0.5, dim))
    if kind == "full_rank":
        return FullRank(dim).with_params(
            rng.normal(0, 0.3, dim * (dim + 1) // 2)
        )
    if kind == "ar1":
        return Ar1(dim).with_params(rng.normal(0, 0.5, 2))
    if kind == "sq_exp":
        return SqExp(dim).with_params(rng.normal(0, 0.3, 2))
    if kind == "lowrank_plus":
        c, r = 2, min(2, dim)
        base = Ar1(dim).with_params(rng.normal(0, 0.3, 2))
        u = FullRank(c).with_params(rng.normal(0, 0.3, 3))
        f = rng.standard_normal((dim, c))
        l = 0.3 * rng.standard_normal((dim, r))
        return LowRankPlus(base, f, u, l=l)
    if kind == "kron":
        d0 = 2
        d1 = max(dim // 2, 1)
        f0 = Diagonal(d0).with_params(rng.normal(0, 0.4, d0))
        f1 = Ar1(d1).with_params(rng.normal(0, 0.4, 2))
        model = KronCov([f0, f1])
        return model
    if kind == "block_scaled":
        nb = 2
        v = max(dim // 2, 1)
        block = Diagonal(v).with_params(rng.normal(0, 0.4, v))
        model = BlockScaled(block, nb)
        return model.with_params(rng.normal(0, 0.4, model.n_params))
    raise ValueError(kind)


ALL_KINDS = [
    "identity",
    "isotropic",
    "diagonal",
    "full_rank",
    "ar1",
    "sq_exp",
    "lowrank_plus",
    "kron",
    "block_scaled",
]


def model_dim(kind, target):
    """Usable dimension closest to target for families with structure."""
    if kind == "kron":
        return 2 * max(target // 2, 1)
    if kind == "block_scaled":
        return 2 * max(target // 2, 1)
    return target
