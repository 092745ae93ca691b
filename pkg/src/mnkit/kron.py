"""Triangular solves and log-determinants for Kronecker products of
lower-triangular Cholesky factors, with optional masking of grid points.

A covariance built as a Kronecker product of small factors has a Cholesky
factor that is the Kronecker product of the factor Cholesky factors, so
solves against the big matrix reduce to a recursive block
forward-substitution over the factor list. The masked variants restrict
the system to a subset of the product grid (e.g. grid positions that
carry data) without ever forming the large matrix.

Factor order convention: the leftmost factor indexes the slowest-varying
(outermost) block of the product grid, matching C-order reshapes.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

from .exceptions import InputError, SingularFactorError

__all__ = [
    "kron_matvec",
    "kron_tri_solve",
    "kron_tri_solve_masked",
    "kron_logdet",
]


def _check_factors(factors):
    if len(factors) == 0:
        raise InputError("factor list must be non-empty")
    mats = []
    for i, f in enumerate(factors):
        f = np.asarray(f, dtype=float)
        if f.ndim != 2 or f.shape[0] != f.shape[1]:
            raise InputError(f"factor {i} is not square: shape {f.shape}")
        if np.any(np.diag(f) <= 0.0):
            raise SingularFactorError(
                f"factor {i} has a non-positive diagonal entry"
            )
        mats.append(f)
    return mats


def _check_mask(mask, n):
    mask = np.asarray(mask)
    if mask.dtype != bool:
        raise InputError("mask must be a boolean vector")
    if mask.shape != (n,):
        raise InputError(f"mask length {mask.shape} does not match product dim {n}")
    if not mask.any():
        raise InputError("mask must keep at least one entry")
    return mask


def kron_matvec(mats, x):
    """Multiply (mats[0] kron mats[1] kron ...) @ x without forming the product.

    ``x`` has shape (N, m) with N the product of factor dims; columns are
    independent right-hand sides.
    """
    n, m = x.shape
    out = x
    for a in mats:
        d = a.shape[0]
        v = out.reshape(d, n // d, m)
        v = np.einsum("ab,bcm->acm", a, v)
        out = np.moveaxis(v, 0, 1).reshape(n, m)
    return out


def _solve_lower(factors, x):
    """In-place block forward substitution for kron(factors) @ out = x."""
    if len(factors) == 1:
        x[:] = solve_triangular(factors[0], x, lower=True)
        return
    l0 = factors[0]
    na = l0.shape[0]
    nb = x.shape[0] // na
    xb = x.reshape(na, nb, -1)
    for i in range(na):
        t = xb[i] / l0[i, i]
        xi = t.copy()
        _solve_lower(factors[1:], xi)
        xb[i] = xi
        if i + 1 < na:
            xb[i + 1 :] -= l0[i + 1 :, i][:, None, None] * t[None, :, :]


def _solve_lower_masked(factors, mask, x):
    """Masked variant of :func:`_solve_lower`.

    Solves the principal submatrix system on the kept grid positions;
    masked rows of ``x`` are zeroed. The off-diagonal block updates use
    the re-multiplied solved block (a full-row product of the trailing
    sub-product with the zero-padded solution) so that each later block
    sees exactly the kept-column contribution it needs.
    """
    if len(factors) == 1:
        idx = np.flatnonzero(mask)
        sol = solve_triangular(factors[0][np.ix_(idx, idx)], x[idx], lower=True)
        x[:] = 0.0
        x[idx] = sol
        return
    l0 = factors[0]
    na = l0.shape[0]
    nb = x.shape[0] // na
    xb = x.reshape(na, nb, -1)
    mb = mask.reshape(na, nb)
    for i in range(na):
        xi = xb[i] / l0[i, i]
        if mb[i].any():
            _solve_lower_masked(factors[1:], mb[i], xi)
        else:
            xi[:] = 0.0
        xb[i] = xi
        if i + 1 < na:
            t = kron_matvec(factors[1:], xi)
            xb[i + 1 :] -= l0[i + 1 :, i][:, None, None] * t[None, :, :]


def _solve_upper(factors, x):
    """Back substitution for kron of upper-triangular factors."""
    if len(factors) == 1:
        x[:] = solve_triangular(factors[0], x, lower=False)
        return
    u0 = factors[0]
    na = u0.shape[0]
    nb = x.shape[0] // na
    xb = x.reshape(na, nb, -1)
    for i in range(na - 1, -1, -1):
        t = xb[i] / u0[i, i]
        xi = t.copy()
        _solve_upper(factors[1:], xi)
        xb[i] = xi
        if i > 0:
            xb[:i] -= u0[:i, i][:, None, None] * t[None, :, :]


def _solve_upper_masked(factors, mask, x):
    if len(factors) == 1:
        idx = np.flatnonzero(mask)
        sol = solve_triangular(factors[0][np.ix_(idx, idx)], x[idx], lower=False)
        x[:] = 0.0
        x[idx] = sol
        return
    u0 = factors[0]
    na = u0.shape[0]
    nb = x.shape[0] // na
    xb = x.reshape(na, nb, -1)
    mb = mask.reshape(na, nb)
    for i in range(na - 1, -1, -1):
        xi = xb[i] / u0[i, i]
        if mb[i].any():
            _solve_upper_masked(factors[1:], mb[i], xi)
        else:
            xi[:] = 0.0
        xb[i] = xi
        if i > 0:
            t = kron_matvec(factors[1:], xi)
            xb[:i] -= u0[:i, i][:, None, None] * t[None, :, :]


def _as_rhs(y, n, what):
    y = np.asarray(y, dtype=float)
    squeeze = y.ndim == 1
    if squeeze:
        y = y[:, None]
    if y.ndim != 2 or y.shape[0] != n:
        raise InputError(f"{what} has shape {y.shape}, expected leading dim {n}")
    return y, squeeze


def kron_tri_solve(factors, y):
    """Solve (L_0 kron L_1 kron ...) x = y with lower-triangular factors.

    ``y`` may be a vector of length N = prod(dims) or an (N, m) array of
    stacked right-hand sides. Only the lower triangles of the factors are
    referenced.
    """
    mats = _check_factors(factors)
    n = int(np.prod([m.shape[0] for m in mats]))
    y, squeeze = _as_rhs(y, n, "right-hand side")
    x = y.copy()
    _solve_lower(mats, x)
    return x[:, 0] if squeeze else x


def kron_tri_solve_masked(factors, mask, y):
    """Masked lower-triangular Kronecker solve.

    ``mask`` is a boolean vector over the full product grid; ``y`` holds
    right-hand-side entries for the kept positions only (length
    ``mask.sum()``). Returns the solution restricted to kept positions,
    i.e. the solve against the kept principal submatrix of the product.
    """
    mats = _check_factors(factors)
    n = int(np.prod([m.shape[0] for m in mats]))
    mask = _check_mask(mask, n)
    kept = int(mask.sum())
    y, squeeze = _as_rhs(y, kept, "masked right-hand side")
    x = np.zeros((n, y.shape[1]))
    x[mask] = y
    _solve_lower_masked(mats, mask, x)
    out = x[mask]
    return out[:, 0] if squeeze else out


def _tri_solve_t(factors, y, mask=None):
    """Solve with the transposed product (upper-triangular mirror)."""
    mats = [m.T for m in factors]
    n = int(np.prod([m.shape[0] for m in mats]))
    if mask is None:
        y, squeeze = _as_rhs(y, n, "right-hand side")
        x = y.copy()
        _solve_upper(mats, x)
        return x[:, 0] if squeeze else x
    kept = int(mask.sum())
    y, squeeze = _as_rhs(y, kept, "masked right-hand side")
    x = np.zeros((n, y.shape[1]))
    x[mask] = y
    _solve_upper_masked(mats, mask, x)
    out = x[mask]
    return out[:, 0] if squeeze else out


def kron_logdet(factors, mask=None):
    """Log-determinant of (L kron ...)(L kron ...)^T, optionally masked.

    Unmasked this is 2 * sum_i(log|L_i| * prod_{j != i} dim_j). With a
    mask, each factor diagonal entry is weighted by the number of kept
    grid positions that use it, which equals the log-determinant of the
    kept principal submatrix of the triangular product (squared).
    """
    mats = _check_factors(factors)
    dims = [m.shape[0] for m in mats]
    n = int(np.prod(dims))
    logs = [np.log(np.diag(m)) for m in mats]
    if mask is None:
        total = sum(lg.sum() * (n // d) for lg, d in zip(logs, dims))
    else:
        mask = _check_mask(mask, n)
        grid = mask.reshape(dims)
        total = 0.0
        for i, lg in enumerate(logs):
            axes = tuple(ax for ax in range(len(dims)) if ax != i)
            counts = grid.sum(axis=axes) if axes else grid.astype(int)
            total += float(lg @ counts)
    return 2.0 * float(total)
