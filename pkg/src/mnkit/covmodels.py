"""Structured covariance families behind a small common surface.

Every family exposes ``solve`` (Sigma^{-1} X) and ``logdet`` plus
parameter-direction derivatives, which is all the matrix-normal densities
and their gradients need. Parameters live in unconstrained space (log
variances, tanh-squashed correlations, log-Cholesky factors) so
optimizers never see constraints; the implied covariance is positive
definite for every parameter vector.

Models are immutable values: ``with_params`` returns a new model and all
reads are safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular, toeplitz

from . import kron as _kron
from .exceptions import ConditioningError, InputError

__all__ = [
    "CovModel",
    "CovSpec",
    "make_cov",
    "Identity",
    "Isotropic",
    "Diagonal",
    "FullRank",
    "Ar1",
    "SqExp",
    "LowRankPlus",
    "KronCov",
    "BlockScaled",
    "full_rank_from_dense",
]

SQ_EXP_JITTER = 1e-6


def _as_matrix(x, dim, what="operand"):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
        squeezed = True
    else:
        squeezed = False
    if x.ndim != 2 or x.shape[0] != dim:
        raise InputError(f"{what} has shape {x.shape}, expected leading dim {dim}")
    return x, squeezed


class CovModel:
    """Base class; subclasses fill in the structure-specific pieces."""

    dim: int

    @property
    def params(self):
        return self._params.copy()

    @property
    def n_params(self):
        return self._params.size

    def with_params(self, v):
        v = np.asarray(v, dtype=float).ravel()
        if v.size != self.n_params:
            raise InputError(
                f"expected {self.n_params} parameters, got {v.size}"
            )
        return self._rebuild(v)

    def _rebuild(self, v):
        raise NotImplementedError

    def solve(self, x):
        """Sigma^{-1} @ x for a vector or a (dim, m) stack of columns."""
        x, squeezed = _as_matrix(x, self.dim)
        out = self._solve(x)
        return out[:, 0] if squeezed else out

    def apply(self, x):
        """Sigma @ x."""
        x, squeezed = _as_matrix(x, self.dim)
        out = self._apply(x)
        return out[:, 0] if squeezed else out

    def logdet(self):
        raise NotImplementedError

    def dense(self):
        raise NotImplementedError

    def dsigma_apply(self, k, x):
        """(d Sigma / d theta_k) @ x in unconstrained parameter space."""
        if not 0 <= k < self.n_params:
            raise InputError(f"parameter index {k} out of range")
        x, squeezed = _as_matrix(x, self.dim)
        out = self._dsigma(k, x)
        return out[:, 0] if squeezed else out

    def chol_apply(self, z):
        """A @ z with A a square root of Sigma (lower Cholesky)."""
        z, squeezed = _as_matrix(z, self.dim)
        out = np.linalg.cholesky(self.dense()) @ z
        return out[:, 0] if squeezed else out

    # gradient accumulation hooks -------------------------------------

    def grad_from_psi_dense(self, psi):
        """Vector of Tr[psi * dSigma/dtheta_k] for a dense symmetric psi."""
        eye = np.eye(self.dim)
        out = np.empty(self.n_params)
        for k in range(self.n_params):
            out[k] = float(np.sum(psi * self._dsigma(k, eye)))
        return out

    def grad_from_psi_parts(self, c, a, b):
        """Same as above for psi = c * Sigma^{-1} + 0.5 * a.T @ b.

        ``a`` and ``b`` have shape (m, dim); families with many parameters
        along the diagonal override this to avoid densifying psi.
        """
        psi = c * self._solve(np.eye(self.dim)) + 0.5 * (a.T @ b)
        return self.grad_from_psi_dense(0.5 * (psi + psi.T))

    # default structure fallbacks --------------------------------------

    def _solve(self, x):
        raise NotImplementedError

    def _apply(self, x):
        return self.dense() @ x

    def _dsigma(self, k, x):
        raise NotImplementedError


class Identity(CovModel):
    """Fixed identity covariance; no parameters."""

    def __init__(self, dim):
        if dim < 1:
            raise InputError("dim must be positive")
        self.dim = int(dim)
        self._params = np.zeros(0)

    def _rebuild(self, v):
        return Identity(self.dim)

    def _solve(self, x):
        return x.copy()

    def _apply(self, x):
        return x.copy()

    def logdet(self):
        return 0.0

    def dense(self):
        return np.eye(self.dim)

    def chol_apply(self, z):
        return np.asarray(z, dtype=float).copy()

    def grad_from_psi_parts(self, c, a, b):
        return np.zeros(0)


class Isotropic(CovModel):
    """Sigma = exp(a) * I."""

    def __init__(self, dim, params=None):
        if dim < 1:
            raise InputError("dim must be positive")
        self.dim = int(dim)
        self._params = np.zeros(1) if params is None else np.asarray(params, float)

    def _rebuild(self, v):
        return Isotropic(self.dim, v)

    @property
    def _var(self):
        return np.exp(self._params[0])

    def _solve(self, x):
        return x / self._var

    def _apply(self, x):
        return self._var * x

    def logdet(self):
        return self.dim * float(self._params[0])

    def dense(self):
        return self._var * np.eye(self.dim)

    def _dsigma(self, k, x):
        return self._var * x

    def chol_apply(self, z):
        return np.sqrt(self._var) * np.asarray(z, dtype=float)

    def grad_from_psi_dense(self, psi):
        return np.array([self._var * np.trace(psi)])

    def grad_from_psi_parts(self, c, a, b):
        return np.array([c * self.dim + 0.5 * self._var * float(np.sum(a * b))])


class Diagonal(CovModel):
    """Sigma = diag(exp(a_i))."""

    def __init__(self, dim, params=None):
        if dim < 1:
            raise InputError("dim must be positive")
        self.dim = int(dim)
        self._params = np.zeros(dim) if params is None else np.asarray(params, float)
        if self._params.size != dim:
            raise InputError("diagonal parameter length must equal dim")

    def _rebuild(self, v):
        return Diagonal(self.dim, v)

    @property
    def _d(self):
        return np.exp(self._params)

    def _solve(self, x):
        return x / self._d[:, None]

    def _apply(self, x):
        return self._d[:, None] * x

    def logdet(self):
        return float(self._params.sum())

    def dense(self):
        return np.diag(self._d)

    def _dsigma(self, k, x):
        out = np.zeros_like(x)
        out[k] = self._d[k] * x[k]
        return out

    def chol_apply(self, z):
        z = np.asarray(z, dtype=float)
        root = np.sqrt(self._d)
        return root[:, None] * z if z.ndim == 2 else root * z

    def grad_from_psi_dense(self, psi):
        return self._d * np.diag(psi)

    def grad_from_psi_parts(self, c, a, b):
        return c + 0.5 * self._d * np.einsum("ki,ki->i", a, b)


def _tril_order(dim):
    rows, cols = np.tril_indices(dim)
    return rows, cols, rows == cols


class FullRank(CovModel):
    """Sigma = L L^T with a log-Cholesky parametrization.

    Parameters pack the lower triangle row-major; diagonal entries are
    exponentiated so any parameter vector yields a PD covariance.
    """

    def __init__(self, dim, params=None):
        if dim < 1:
            raise InputError("dim must be positive")
        self.dim = int(dim)
        n = dim * (dim + 1) // 2
        self._params = np.zeros(n) if params is None else np.asarray(params, float)
        if self._params.size != n:
            raise InputError("full-rank parameter length mismatch")
        rows, cols, diag = _tril_order(dim)
        l = np.zeros((dim, dim))
        l[rows, cols] = self._params
        l[np.diag_indices(dim)] = np.exp(np.diag(l))
        self._l = l
        self._rows, self._cols, self._diag = rows, cols, diag

    def _rebuild(self, v):
        return FullRank(self.dim, v)

    def _solve(self, x):
        z = solve_triangular(self._l, x, lower=True)
        return solve_triangular(self._l.T, z, lower=False)

    def _apply(self, x):
        return self._l @ (self._l.T @ x)

    def logdet(self):
        return 2.0 * float(self._params[self._diag].sum())

    def dense(self):
        return self._l @ self._l.T

    def chol_apply(self, z):
        return self._l @ np.asarray(z, dtype=float)

    def _dsigma(self, k, x):
        i, j = self._rows[k], self._cols[k]
        scale = self._l[i, i] if i == j else 1.0
        out = np.zeros_like(x)
        out[i] += scale * (self._l.T @ x)[j]
        out += np.outer(self._l[:, j], scale * x[i])
        return out

    def grad_from_psi_dense(self, psi):
        g = 2.0 * psi @ self._l
        out = g[self._rows, self._cols]
        out[self._diag] *= np.diag(self._l)
        return out


class Ar1(CovModel):
    """First-order autoregressive kernel: Sigma_ij = s2 * rho^|i-j|.

    Parameters (a, z) with s2 = exp(a), rho = tanh(z). The inverse is
    tridiagonal, giving O(t) solves and a closed-form log-determinant.
    """

    def __init__(self, dim, params=None):
        if dim < 1:
            raise InputError("dim must be positive")
        self.dim = int(dim)
        self._params = np.zeros(2) if params is None else np.asarray(params, float)
        if self._params.size != 2:
            raise InputError("ar1 takes exactly 2 parameters")

    def _rebuild(self, v):
        return Ar1(self.dim, v)

    @property
    def _s2(self):
        return np.exp(self._params[0])

    @property
    def _rho(self):
        return np.tanh(self._params[1])

    def _solve(self, x):
        s2, rho = self._s2, self._rho
        if self.dim == 1:
            return x / s2
        out = x.copy()
        out[1:-1] *= 1.0 + rho * rho
        out[:-1] -= rho * x[1:]
        out[1:] -= rho * x[:-1]
        return out / (s2 * (1.0 - rho * rho))

    def logdet(self):
        a = float(self._params[0])
        rho = self._rho
        return self.dim * a + (self.dim - 1) * float(np.log1p(-rho * rho))

    def dense(self):
        return self._s2 * toeplitz(self._rho ** np.arange(self.dim))

    def _apply(self, x):
        return self.dense() @ x

    def _dsigma(self, k, x):
        if k == 0:
            return self.dense() @ x
        d = np.abs(np.subtract.outer(np.arange(self.dim), np.arange(self.dim)))
        rho = self._rho
        with np.errstate(divide="ignore", invalid="ignore"):
            m = d * np.where(d > 0, rho ** np.maximum(d - 1, 0), 0.0)
        m = self._s2 * (1.0 - rho * rho) * m
        return m @ x

    def grad_from_psi_dense(self, psi):
        g0 = float(np.sum(psi * self.dense()))
        rho, s2 = self._rho, self._s2
        t = self.dim
        band = np.array([np.trace(psi, offset=d) for d in range(1, t)])
        pows = rho ** np.arange(t - 1)  # rho^(d-1) for d = 1..t-1
        g1 = 2.0 * s2 * (1.0 - rho * rho) * float(
            np.sum(np.arange(1, t) * pows * band)
        )
        return np.array([g0, g1])


class SqExp(CovModel):
    """Squared-exponential kernel over unit-spaced indices.

    Sigma = exp(a) * (exp(-(i-j)^2 / (2 l^2)) + jitter * I) with
    l = exp(b); params are (b, a) = (log length-scale, log scale). The
    fixed jitter keeps the Gram matrix factorizable.
    """

    def __init__(self, dim, params=None):
        if dim < 1:
            raise InputError("dim must be positive")
        self.dim = int(dim)
        self._params = np.zeros(2) if params is None else np.asarray(params, float)
        if self._params.size != 2:
            raise InputError("sq_exp takes exactly 2 parameters")
        idx = np.arange(dim, dtype=float)
        self._d2 = np.subtract.outer(idx, idx) ** 2
        self._cho = None

    def _rebuild(self, v):
        return SqExp(self.dim, v)

    def _kernel(self):
        ell2 = np.exp(2.0 * self._params[0])
        return np.exp(-self._d2 / (2.0 * ell2))

    def dense(self):
        scale = np.exp(self._params[1])
        return scale * (self._kernel() + SQ_EXP_JITTER * np.eye(self.dim))

    def _factor(self):
        if self._cho is None:
            try:
                self._cho = cho_factor(self.dense(), lower=True)
            except np.linalg.LinAlgError as exc:  # pragma: no cover
                raise ConditioningError(f"sq_exp covariance not PD: {exc}") from exc
        return self._cho

    def _solve(self, x):
        return cho_solve(self._factor(), x)

    def logdet(self):
        c, _ = self._factor()
        return 2.0 * float(np.sum(np.log(np.diag(c))))

    def _dsigma(self, k, x):
        if k == 1:
            return self.dense() @ x
        ell2 = np.exp(2.0 * self._params[0])
        scale = np.exp(self._params[1])
        m = scale * self._kernel() * (self._d2 / ell2)
        return m @ x

    def grad_from_psi_dense(self, psi):
        eye = np.eye(self.dim)
        return np.array(
            [
                float(np.sum(psi * self._dsigma(0, eye))),
                float(np.sum(psi * self.dense())),
            ]
        )


class LowRankPlus(CovModel):
    """Sigma = Base + F U F^T + L L^T.

    ``base`` is any covariance model, ``F`` a fixed design-like matrix,
    ``U`` a nested covariance model over the design columns, and ``L`` a
    free low-rank loading matrix. Solves go through the Woodbury
    identity against the combined factor [F L]; the log-determinant uses
    the matching determinant lemma, so the cost is governed by the base
    structure plus a (c + r)-sized capacitance system.
    """

    def __init__(self, base, f, u_cov, l=None, rank=None):
        self.base = base
        self.dim = base.dim
        f = np.asarray(f, dtype=float)
        if f.ndim != 2 or f.shape[0] != self.dim:
            raise InputError(f"fixed factor has shape {f.shape}, expected ({self.dim}, c)")
        if u_cov.dim != f.shape[1]:
            raise InputError("U dimension must match fixed factor columns")
        self.f = f
        self.u_cov = u_cov
        if l is None:
            rank = 0 if rank is None else int(rank)
            if rank < 0:
                raise InputError("rank must be non-negative")
            l = np.zeros((self.dim, rank))
        else:
            l = np.asarray(l, dtype=float)
            if l.ndim != 2 or l.shape[0] != self.dim:
                raise InputError("low-rank loading shape mismatch")
        self.l = l
        self.rank = l.shape[1]
        self._params = np.concatenate(
            [base.params, u_cov.params, l.ravel()]
        )
        self._cache = None

    def _rebuild(self, v):
        nb, nu = self.base.n_params, self.u_cov.n_params
        base = self.base.with_params(v[:nb])
        u_cov = self.u_cov.with_params(v[nb : nb + nu])
        l = v[nb + nu :].reshape(self.dim, self.rank)
        return LowRankPlus(base, self.f, u_cov, l=l)

    def _factor(self):
        if self._cache is None:
            c, r = self.f.shape[1], self.rank
            ft = np.hstack([self.f, self.l]) if r else self.f
            bift = self.base.solve(ft)
            cap = ft.T @ bift
            cap[:c, :c] += self.u_cov.solve(np.eye(c))
            if r:
                cap[c:, c:] += np.eye(r)
            try:
                cho = cho_factor(0.5 * (cap + cap.T), lower=True)
            except np.linalg.LinAlgError as exc:
                raise ConditioningError(
                    f"low-rank capacitance not PD: {exc}"
                ) from exc
            self._cache = (ft, bift, cho)
        return self._cache

    def _solve(self, x):
        ft, bift, cho = self._factor()
        bix = self.base.solve(x)
        return bix - bift @ cho_solve(cho, ft.T @ bix)

    def logdet(self):
        _, _, cho = self._factor()
        cap_ld = 2.0 * float(np.sum(np.log(np.diag(cho[0]))))
        return self.base.logdet() + self.u_cov.logdet() + cap_ld

    def dense(self):
        out = self.base.dense() + self.f @ self.u_cov.dense() @ self.f.T
        if self.rank:
            out = out + self.l @ self.l.T
        return out

    def _apply(self, x):
        out = self.base.apply(x) + self.f @ self.u_cov.apply(self.f.T @ x)
        if self.rank:
            out += self.l @ (self.l.T @ x)
        return out

    def _dsigma(self, k, x):
        nb, nu = self.base.n_params, self.u_cov.n_params
        if k < nb:
            return self.base.dsigma_apply(k, x)
        if k < nb + nu:
            return self.f @ self.u_cov.dsigma_apply(k - nb, self.f.T @ x)
        i, j = divmod(k - nb - nu, self.rank)
        out = np.outer(self.l[:, j], x[i])
        out[i] += self.l[:, j] @ x
        return out

    def grad_from_psi_dense(self, psi):
        parts = [
            self.base.grad_from_psi_dense(psi),
            self.u_cov.grad_from_psi_dense(self.f.T @ psi @ self.f),
        ]
        if self.rank:
            parts.append((2.0 * psi @ self.l).ravel())
        else:
            parts.append(np.zeros(0))
        return np.concatenate(parts)


class KronCov(CovModel):
    """Kronecker product of factor covariances, optionally masked.

    The implied covariance is K K^T with K the Kronecker product of the
    factor Cholesky factors (restricted to kept grid positions when a
    mask is present). Without a mask that equals the plain Kronecker
    product of the factor covariances. With a mask the operator matches
    the kept principal submatrix of the unmasked covariance whenever the
    mask keeps a leading block of each factor; for general masks it is
    the masked-factor operator itself (see the masked tests for the
    measured boundary).
    """

    def __init__(self, factors, mask=None, params=None):
        if not factors:
            raise InputError("kron covariance needs at least one factor")
        self.factors = list(factors)
        self.full_dim = int(np.prod([f.dim for f in self.factors]))
        if mask is not None:
            mask = np.asarray(mask)
            if mask.dtype != bool or mask.shape != (self.full_dim,):
                raise InputError("mask must be boolean with product length")
            if not mask.any():
                raise InputError("mask must keep at least one entry")
            self.dim = int(mask.sum())
        else:
            self.dim = self.full_dim
        self.mask = mask
        if params is not None:
            v = np.asarray(params, float)
            out, off = [], 0
            for f in self.factors:
                out.append(f.with_params(v[off : off + f.n_params]))
                off += f.n_params
            if off != v.size:
                raise InputError("kron parameter length mismatch")
            self.factors = out
        self._params = np.concatenate([np.zeros(0)] + [f.params for f in self.factors])
        self._chols = None

    def _rebuild(self, v):
        return KronCov(self.factors, mask=self.mask, params=v)

    def _chol_factors(self):
        if self._chols is None:
            self._chols = [np.linalg.cholesky(f.dense()) for f in self.factors]
        return self._chols

    def _solve(self, x):
        ls = self._chol_factors()
        if self.mask is None:
            z = _kron.kron_tri_solve(ls, x)
            return _kron._tri_solve_t(ls, z)
        z = _kron.kron_tri_solve_masked(ls, self.mask, x)
        return _kron._tri_solve_t(ls, z, mask=self.mask)

    def logdet(self):
        return _kron.kron_logdet(self._chol_factors(), self.mask)

    def dense(self):
        if self.mask is None:
            return reduce(np.kron, [f.dense() for f in self.factors])
        k = self._masked_chol()
        return k @ k.T

    def _masked_chol(self):
        k = reduce(np.kron, self._chol_factors())
        idx = np.flatnonzero(self.mask)
        return k[np.ix_(idx, idx)]

    def _apply(self, x):
        if self.mask is None:
            return _kron.kron_matvec([f.dense() for f in self.factors], x)
        return self.dense() @ x

    def chol_apply(self, z):
        z = np.asarray(z, dtype=float)
        squeeze = z.ndim == 1
        zz = z[:, None] if squeeze else z
        if self.mask is None:
            out = _kron.kron_matvec(self._chol_factors(), zz)
        else:
            out = self._masked_chol() @ zz
        return out[:, 0] if squeeze else out

    def _factor_param_index(self, k):
        off = 0
        for i, f in enumerate(self.factors):
            if k < off + f.n_params:
                return i, k - off
            off += f.n_params
        raise InputError(f"parameter index {k} out of range")

    def _dsigma(self, k, x):
        i, kk = self._factor_param_index(k)
        if self.mask is None:
            mats = [f.dense() for f in self.factors]
            mats[i] = self.factors[i].dsigma_apply(kk, np.eye(self.factors[i].dim))
            return _kron.kron_matvec(mats, x)
        # differentiate through the masked Cholesky product
        ls = self._chol_factors()
        dsig = self.factors[i].dsigma_apply(kk, np.eye(self.factors[i].dim))
        li = ls[i]
        m = solve_triangular(li, dsig, lower=True)
        m = solve_triangular(li, m.T, lower=True).T
        phi = np.tril(m, -1) + 0.5 * np.diag(np.diag(m))
        dli = li @ phi
        mats = list(ls)
        mats[i] = dli
        dk = reduce(np.kron, mats)
        idx = np.flatnonzero(self.mask)
        dkk = dk[np.ix_(idx, idx)]
        kk_ = self._masked_chol()
        dsig_m = dkk @ kk_.T + kk_ @ dkk.T
        return dsig_m @ x


class BlockScaled(CovModel):
    """Block-diagonal covariance: subject j gets Sigma_block / tau2_j.

    Parameters are log precisions for subjects 2..n (the first is pinned
    to 1 to resolve the scale trade against the block covariance)
    followed by the block covariance's own parameters.
    """

    def __init__(self, block, n_blocks, params=None):
        if n_blocks < 1:
            raise InputError("need at least one block")
        self.block = block
        self.n_blocks = int(n_blocks)
        self.dim = block.dim * self.n_blocks
        n = (self.n_blocks - 1) + block.n_params
        self._params = np.zeros(n) if params is None else np.asarray(params, float)
        if self._params.size != n:
            raise InputError("block-scaled parameter length mismatch")
        self.block = block.with_params(self._params[self.n_blocks - 1 :])

    def _rebuild(self, v):
        return BlockScaled(self.block, self.n_blocks, v)

    @property
    def tau2(self):
        return np.concatenate([[1.0], np.exp(self._params[: self.n_blocks - 1])])

    def _blocks(self, x):
        return x.reshape(self.n_blocks, self.block.dim, -1)

    def _solve(self, x):
        xb = self._blocks(x)
        out = np.empty_like(xb)
        for j, t2 in enumerate(self.tau2):
            out[j] = t2 * self.block.solve(xb[j])
        return out.reshape(x.shape)

    def _apply(self, x):
        xb = self._blocks(x)
        out = np.empty_like(xb)
        for j, t2 in enumerate(self.tau2):
            out[j] = self.block.apply(xb[j]) / t2
        return out.reshape(x.shape)

    def logdet(self):
        v = self.block.dim
        return -v * float(np.log(self.tau2).sum()) + self.n_blocks * self.block.logdet()

    def dense(self):
        return np.kron(np.diag(1.0 / self.tau2), self.block.dense())

    def chol_apply(self, z):
        z = np.asarray(z, dtype=float)
        squeeze = z.ndim == 1
        zz = z[:, None] if squeeze else z
        zb = self._blocks(zz)
        out = np.empty_like(zb)
        for j, t2 in enumerate(self.tau2):
            out[j] = self.block.chol_apply(zb[j]) / np.sqrt(t2)
        out = out.reshape(zz.shape)
        return out[:, 0] if squeeze else out

    def _dsigma(self, k, x):
        xb = self._blocks(x)
        out = np.zeros_like(xb)
        if k < self.n_blocks - 1:
            j = k + 1
            out[j] = -self.block.apply(xb[j]) / self.tau2[j]
        else:
            kk = k - (self.n_blocks - 1)
            for j, t2 in enumerate(self.tau2):
                out[j] = self.block.dsigma_apply(kk, xb[j]) / t2
        return out.reshape(x.shape)


def full_rank_from_dense(sigma):
    """Wrap a dense PSD matrix as a FullRank model (exact log-Cholesky)."""
    sigma = np.asarray(sigma, dtype=float)
    sigma = 0.5 * (sigma + sigma.T)
    try:
        l = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(f"matrix is not positive definite: {exc}") from exc
    dim = sigma.shape[0]
    rows, cols, diag = _tril_order(dim)
    params = l[rows, cols]
    params[diag] = np.log(np.diag(l))
    return FullRank(dim, params)


@dataclass
class CovSpec:
    """Declarative covariance description; ``make_cov`` builds the model.

    ``kind`` selects the family; the remaining fields apply only to the
    kinds that need them (factor specs and mask for ``kron``; base spec,
    fixed factor, learned rank for ``lowrank_plus``; block spec and
    count for ``block_scaled``).
    """

    kind: str
    dim: int = 0
    factors: list = field(default_factory=list)
    mask: np.ndarray | None = None
    base: "CovSpec | None" = None
    design: np.ndarray | None = None
    rank: int = 0
    l_init: np.ndarray | None = None
    block: "CovSpec | None" = None
    n_blocks: int = 1
    init_params: np.ndarray | None = None


_SIMPLE_KINDS = {
    "identity": Identity,
    "isotropic": Isotropic,
    "diagonal": Diagonal,
    "full_rank": FullRank,
    "ar1": Ar1,
    "sq_exp": SqExp,
}


def make_cov(spec):
    """Build a covariance model from a spec (or a plain dict of fields)."""
    if isinstance(spec, dict):
        spec = CovSpec(**spec)
    kind = spec.kind
    if kind in _SIMPLE_KINDS:
        model = _SIMPLE_KINDS[kind](spec.dim)
    elif kind == "kron":
        factors = [make_cov(f) for f in spec.factors]
        full = int(np.prod([f.dim for f in factors]))
        if spec.dim and spec.dim != full:
            raise InputError(
                f"kron factor dims multiply to {full}, spec says {spec.dim}"
            )
        model = KronCov(factors, mask=spec.mask)
    elif kind == "lowrank_plus":
        if spec.base is None or spec.design is None:
            raise InputError("lowrank_plus needs a base spec and a design matrix")
        if spec.rank < 0:
            raise InputError("rank must be non-negative")
        base = make_cov(spec.base)
        f = np.asarray(spec.design, dtype=float)
        u_cov = FullRank(f.shape[1])
        if spec.l_init is not None:
            l = np.asarray(spec.l_init, dtype=float)
        else:
            l = 0.01 * np.random.default_rng(0).standard_normal(
                (base.dim, spec.rank)
            )
        model = LowRankPlus(base, f, u_cov, l=l)
    elif kind == "block_scaled":
        if spec.block is None:
            raise InputError("block_scaled needs a block spec")
        model = BlockScaled(make_cov(spec.block), spec.n_blocks)
    else:
        raise InputError(f"unknown covariance kind {kind!r}")
    if spec.init_params is not None:
        model = model.with_params(spec.init_params)
    return model
