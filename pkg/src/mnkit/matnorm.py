"""Matrix-normal density, sampling, marginalization, and conditioning.

A matrix-normal variable X (m x n) with mean M, row covariance R and
column covariance C has vec(X) ~ N(vec(M), C kron R). All density work
here goes through the covariance models' solve/logdet only, so nothing
is ever materialized at m*n scale.

The density uses the standard normalizer

    log p(X) = -(mn/2) log 2pi - (m/2) log|C| - (n/2) log|R|
               - (1/2) Tr[C^{-1} (X-M)^T R^{-1} (X-M)]

which is the unique constant consistent with the vec equivalence above.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .covmodels import CovModel, LowRankPlus, full_rank_from_dense
from .exceptions import ContractError, InputError

__all__ = [
    "MatnormDist",
    "marginalize_factor",
    "condition_columns",
]

LOG2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class MatnormDist:
    """Mean matrix plus row/column covariance models."""

    mean: np.ndarray
    row_cov: CovModel
    col_cov: CovModel

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        if mean.ndim != 2:
            raise InputError("mean must be a 2-D matrix")
        if mean.shape != (self.row_cov.dim, self.col_cov.dim):
            raise InputError(
                f"mean shape {mean.shape} does not match covariances "
                f"({self.row_cov.dim}, {self.col_cov.dim})"
            )
        object.__setattr__(self, "mean", mean)

    @property
    def shape(self):
        return self.mean.shape

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != self.shape:
            raise InputError(f"observation shape {x.shape} != {self.shape}")
        m, n = self.shape
        e = x - self.mean
        re = self.row_cov.solve(e)
        ec = self.col_cov.solve(e.T).T
        quad = float(np.sum(re * ec))
        return -0.5 * (
            m * n * LOG2PI
            + m * self.col_cov.logdet()
            + n * self.row_cov.logdet()
            + quad
        )

    def sample(self, seed):
        """Draw M + A Z B^T with A, B square roots of the covariances.

        ``seed`` may be an int or a numpy Generator; an explicit source
        is required so runs are reproducible.
        """
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        m, n = self.shape
        z = rng.standard_normal((m, n))
        az = self.row_cov.chol_apply(z)
        return self.mean + self.col_cov.chol_apply(az.T).T


def marginalize_factor(
    prior_mean,
    prior_rowcov,
    x_factor,
    noise_rowcov,
    shared_colcov,
    offset=None,
    prior_colcov=None,
):
    """Marginal of Z where Z | Y ~ MN(X Y + C, noise_rowcov, shared_colcov)
    and Y ~ MN(prior_mean, prior_rowcov, shared_colcov).

    Returns MN(X B + C, noise_rowcov + X prior_rowcov X^T, shared_colcov),
    with the row covariance held in low-rank-update form so solves stay
    cheap. The identity only applies when the marginalized variable's
    column covariance equals the conditional's; pass ``prior_colcov`` to
    have that obligation checked.
    """
    x_factor = np.asarray(x_factor, dtype=float)
    prior_mean = np.asarray(prior_mean, dtype=float)
    if x_factor.ndim != 2:
        raise InputError("factor must be a 2-D matrix")
    i, j = x_factor.shape
    if prior_rowcov.dim != j or prior_mean.shape[0] != j:
        raise InputError("prior dimensions do not match the factor's columns")
    if prior_mean.shape[1] != shared_colcov.dim:
        raise InputError("prior mean columns must match the shared column covariance")
    if noise_rowcov.dim != i:
        raise InputError("noise row covariance must match the factor's rows")
    if prior_colcov is not None:
        if prior_colcov.dim != shared_colcov.dim or not np.allclose(
            prior_colcov.dense(), shared_colcov.dense(), atol=1e-10
        ):
            raise ContractError(
                "marginalization requires the prior's column covariance to "
                "equal the conditional's column covariance"
            )
    mean = x_factor @ prior_mean
    if offset is not None:
        offset = np.asarray(offset, dtype=float)
        if offset.shape != mean.shape:
            raise InputError("offset shape mismatch")
        mean = mean + offset
    rowcov = LowRankPlus(noise_rowcov, x_factor, prior_rowcov, rank=0)
    return MatnormDist(mean, rowcov, shared_colcov)


def condition_columns(
    mean_a, mean_b, row_cov, colcov_a, colcov_b, col_cross, y_obs
):
    """Condition the left column block of [A | B] on an observed B.

    The blocks share the row covariance; the joint column covariance is
    partitioned as [[colcov_a, col_cross], [col_cross^T, colcov_b]].
    Returns MN(mean_a + (Y - mean_b) colcov_b^{-1} col_cross^T,
    row_cov, colcov_a - col_cross colcov_b^{-1} col_cross^T). Condition
    on a row block by applying the transpose rule to the inputs.
    """
    mean_a = np.asarray(mean_a, dtype=float)
    mean_b = np.asarray(mean_b, dtype=float)
    col_cross = np.asarray(col_cross, dtype=float)
    y_obs = np.asarray(y_obs, dtype=float)
    m = row_cov.dim
    if mean_a.shape != (m, colcov_a.dim) or mean_b.shape != (m, colcov_b.dim):
        raise InputError("block means must share rows and match their column covariances")
    if col_cross.shape != (colcov_a.dim, colcov_b.dim):
        raise InputError("cross-covariance block has the wrong shape")
    if y_obs.shape != mean_b.shape:
        raise InputError("observed block shape mismatch")
    # Sigma_b^{-1} Sigma_ba  (b-dim x a-dim)
    sol = colcov_b.solve(col_cross.T)
    cond_mean = mean_a + (y_obs - mean_b) @ sol
    schur = colcov_a.dense() - col_cross @ sol
    cond_col = full_rank_from_dense(schur)
    return MatnormDist(cond_mean, row_cov, cond_col)
