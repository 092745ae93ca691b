import numpy as np
import pytest
from conftest import ALL_KINDS, model_dim, random_cov_model

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
    full_rank_from_dense,
    make_cov,
)
from mnkit.exceptions import ConditioningError, InputError


# ---------------------------------------------------------------- make_cov


def test_make_cov_identity():
    m = make_cov(CovSpec("identity", dim=5))
    assert m.n_params == 0
    assert m.logdet() == 0.0


def test_make_cov_ar1_default_is_identity():
    m = make_cov(CovSpec("ar1", dim=4))
    assert np.allclose(m.dense(), np.eye(4))


def test_make_cov_kron_matches_explicit_kron():
    spec = CovSpec(
        "kron", factors=[CovSpec("diagonal", dim=3), CovSpec("ar1", dim=4)]
    )
    m = make_cov(spec)
    assert m.dim == 12
    ref = np.kron(np.eye(3), np.eye(4))
    assert np.allclose(m.dense(), ref)
    m2 = m.with_params(np.random.default_rng(0).normal(0, 0.3, m.n_params))
    d0 = np.diag(np.exp(m2.factors[0].params))
    assert np.allclose(m2.dense(), np.kron(d0, m2.factors[1].dense()), atol=1e-10)


def test_make_cov_from_dict():
    m = make_cov({"kind": "diagonal", "dim": 3})
    assert m.dim == 3


def test_make_cov_rejects_bad_specs():
    with pytest.raises(InputError):
        make_cov(CovSpec("nope", dim=2))
    with pytest.raises(InputError):
        make_cov(
            CovSpec(
                "kron",
                dim=5,
                factors=[CovSpec("identity", dim=2), CovSpec("identity", dim=3)],
            )
        )
    with pytest.raises(InputError):
        make_cov(
            CovSpec(
                "lowrank_plus",
                base=CovSpec("identity", dim=4),
                design=np.ones((4, 1)),
                rank=-1,
            )
        )


# ------------------------------------------------------------ solve/logdet


def test_identity_solve_passthrough():
    x = np.arange(6.0).reshape(3, 2)
    assert np.allclose(Identity(3).solve(x), x)


def test_diagonal_solve_example():
    m = Diagonal(2).with_params(np.log([1.0, 4.0]))
    assert np.allclose(m.solve(np.array([1.0, 1.0])), [1.0, 0.25])


def test_isotropic_logdet_example():
    m = Isotropic(3).with_params([np.log(2.0)])
    assert m.logdet() == pytest.approx(3 * np.log(2.0), abs=1e-12)


def test_ar1_closed_forms_match_dense():
    m = Ar1(5).with_params([0.0, np.arctanh(0.5)])
    dense = m.dense()
    assert np.allclose(dense, 0.5 ** np.abs(np.subtract.outer(np.arange(5), np.arange(5))))
    assert m.logdet() == pytest.approx(np.linalg.slogdet(dense)[1], abs=1e-10)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((5, 3))
    assert np.allclose(m.solve(x), np.linalg.solve(dense, x), atol=1e-10)


def test_ar1_dim_one():
    m = Ar1(1).with_params([np.log(2.0), 0.7])
    assert np.allclose(m.solve(np.array([4.0])), [2.0])
    assert m.logdet() == pytest.approx(np.log(2.0))


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_solve_and_logdet_match_dense_oracle(kind):
    rng = np.random.default_rng(42)
    for trial in range(50):
        dim = model_dim(kind, int(rng.integers(2, 13)))
        m = random_cov_model(rng, kind, dim)
        dense = m.dense()
        x = rng.standard_normal((m.dim, 3))
        ref = np.linalg.solve(dense, x)
        got = m.solve(x)
        assert np.linalg.norm(got - ref) <= 1e-8 * max(np.linalg.norm(ref), 1.0)
        ld_ref = np.linalg.slogdet(dense)[1]
        assert abs(m.logdet() - ld_ref) <= 1e-8 * max(abs(ld_ref), 1.0)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_positive_definite_by_construction(kind):
    rng = np.random.default_rng(7)
    for trial in range(10):
        dim = model_dim(kind, int(rng.integers(2, 10)))
        m = random_cov_model(rng, kind, dim)
        np.linalg.cholesky(m.dense())  # raises if not PD


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_solve_consistency_sigma_times_solve(kind):
    rng = np.random.default_rng(11)
    dim = model_dim(kind, 8)
    m = random_cov_model(rng, kind, dim)
    x = rng.standard_normal((m.dim, 2))
    back = m.apply(m.solve(x))
    assert np.linalg.norm(back - x) <= 1e-8 * np.linalg.norm(x)


# ------------------------------------------------------------------ params


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_params_round_trip(kind):
    rng = np.random.default_rng(3)
    dim = model_dim(kind, 6)
    m = random_cov_model(rng, kind, dim)
    v = rng.normal(0, 0.3, m.n_params)
    assert np.array_equal(m.with_params(v).params, v)


def test_full_rank_zero_params_is_identity():
    assert np.allclose(FullRank(2).with_params(np.zeros(3)).dense(), np.eye(2))


def test_with_params_wrong_length():
    with pytest.raises(InputError):
        Diagonal(3).with_params(np.zeros(2))


# ------------------------------------------------------------------ dsigma


def finite_diff_dsigma(model, k, x, step=1e-5):
    p = model.params
    ep = np.zeros_like(p)
    ep[k] = step
    up = model.with_params(p + ep).dense()
    dn = model.with_params(p - ep).dense()
    return (up - dn) / (2 * step) @ x


def test_isotropic_dsigma_analytic():
    m = Isotropic(3).with_params([0.4])
    x = np.arange(6.0).reshape(3, 2)
    assert np.allclose(m.dsigma_apply(0, x), np.exp(0.4) * x)


def test_diagonal_dsigma_analytic():
    m = Diagonal(3).with_params([0.1, 0.2, 0.3])
    x = np.ones((3, 2))
    out = m.dsigma_apply(1, x)
    expect = np.zeros((3, 2))
    expect[1] = np.exp(0.2)
    assert np.allclose(out, expect)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_dsigma_matches_finite_differences(kind):
    rng = np.random.default_rng(19)
    dim = model_dim(kind, 8)
    m = random_cov_model(rng, kind, dim)
    x = rng.standard_normal((m.dim, 2))
    for k in range(m.n_params):
        ref = finite_diff_dsigma(m, k, x)
        got = m.dsigma_apply(k, x)
        denom = max(np.linalg.norm(ref), 1e-8)
        assert np.linalg.norm(got - ref) / denom < 1e-6, (kind, k)


def test_dsigma_index_out_of_range():
    with pytest.raises(InputError):
        Isotropic(2).dsigma_apply(1, np.ones(2))


# -------------------------------------------------- psi gradient machinery


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_grad_from_psi_parts_matches_direct_traces(kind):
    rng = np.random.default_rng(23)
    dim = model_dim(kind, 6)
    m = random_cov_model(rng, kind, dim)
    a = rng.standard_normal((4, m.dim))
    b = a + 0.1 * rng.standard_normal((4, m.dim))
    c = -1.3
    psi = c * np.linalg.inv(m.dense()) + 0.5 * (a.T @ b)
    psi = 0.5 * (psi + psi.T)
    eye = np.eye(m.dim)
    expect = np.array(
        [float(np.sum(psi * m.dsigma_apply(k, eye))) for k in range(m.n_params)]
    )
    # a.T@b need not be symmetric; Tr[psi dSigma] only sees its symmetric
    # part since every dSigma is symmetric, so the comparison is exact
    got = m.grad_from_psi_parts(c, a, b)
    assert np.allclose(got, expect, atol=1e-8)


# ----------------------------------------------------------- woodbury path


@pytest.mark.parametrize("rank", [0, 1, 5])
def test_lowrank_plus_woodbury_matches_dense(rank):
    rng = np.random.default_rng(rank)
    dim, c = 50, 3
    base = Diagonal(dim).with_params(rng.normal(0, 0.4, dim))
    u = FullRank(c).with_params(rng.normal(0, 0.4, 6))
    f = rng.standard_normal((dim, c))
    l = 0.5 * rng.standard_normal((dim, rank))
    m = LowRankPlus(base, f, u, l=l)
    dense = m.dense()
    x = rng.standard_normal((dim, 4))
    assert np.allclose(m.solve(x), np.linalg.solve(dense, x), atol=1e-8)
    assert m.logdet() == pytest.approx(np.linalg.slogdet(dense)[1], abs=1e-8)


def test_lowrank_plus_det_lemma_example():
    rng = np.random.default_rng(5)
    dim, c = 10, 2
    base = Ar1(dim).with_params([0.2, 0.3])
    u = FullRank(c).with_params(rng.normal(0, 0.5, 3))
    f = rng.standard_normal((dim, c))
    m = LowRankPlus(base, f, u, rank=0)
    assert m.logdet() == pytest.approx(np.linalg.slogdet(m.dense())[1], abs=1e-10)


# ------------------------------------------------------- masked kron cases


def test_masked_kron_prefix_mask_matches_principal_submatrix():
    # per-factor prefix masks: masking commutes with factorization exactly
    rng = np.random.default_rng(31)
    f0 = FullRank(3).with_params(rng.normal(0, 0.3, 6))
    f1 = Ar1(4).with_params(rng.normal(0, 0.3, 2))
    mask = np.kron(
        np.array([True, True, False]), np.array([True, True, True, False])
    )
    m = KronCov([f0, f1], mask=mask)
    full = np.kron(f0.dense(), f1.dense())
    idx = np.flatnonzero(mask)
    sub = full[np.ix_(idx, idx)]
    assert np.allclose(m.dense(), sub, atol=1e-10)
    x = rng.standard_normal(m.dim)
    assert np.allclose(m.solve(x), np.linalg.solve(sub, x), atol=1e-8)
    assert m.logdet() == pytest.approx(np.linalg.slogdet(sub)[1], abs=1e-8)


def test_masked_kron_general_mask_is_consistent_but_not_submatrix():
    # for masks that are not leading blocks, the masked operator is the
    # masked-Cholesky product: internally consistent (solve inverts
    # dense) yet different from the principal submatrix of the unmasked
    # covariance. This documents the exactness boundary.
    rng = np.random.default_rng(37)
    f0 = FullRank(3).with_params(rng.normal(0, 0.4, 6))
    f1 = FullRank(2).with_params(rng.normal(0, 0.4, 3))
    mask = np.array([True, False, True, True, False, True])
    m = KronCov([f0, f1], mask=mask)
    x = rng.standard_normal((m.dim, 2))
    assert np.allclose(m.apply(m.solve(x)), x, atol=1e-8)
    assert m.logdet() == pytest.approx(np.linalg.slogdet(m.dense())[1], abs=1e-8)
    full = np.kron(f0.dense(), f1.dense())
    idx = np.flatnonzero(mask)
    sub = full[np.ix_(idx, idx)]
    assert not np.allclose(m.dense(), sub, atol=1e-6)


def test_masked_kron_all_true_equals_unmasked():
    rng = np.random.default_rng(41)
    f0 = Diagonal(2).with_params(rng.normal(0, 0.3, 2))
    f1 = Ar1(3).with_params(rng.normal(0, 0.3, 2))
    full = KronCov([f0, f1])
    masked = KronCov([f0, f1], mask=np.ones(6, dtype=bool))
    x = rng.standard_normal(6)
    assert np.allclose(full.solve(x), masked.solve(x), atol=1e-12)
    assert full.logdet() == pytest.approx(masked.logdet(), abs=1e-12)


# ------------------------------------------------------------- block scaled


def test_block_scaled_anchors_first_precision():
    block = Diagonal(3)
    m = BlockScaled(block, 2)
    assert m.n_params == 1 + 3
    assert m.tau2[0] == 1.0
    m2 = m.with_params(np.array([np.log(2.0), 0.0, 0.0, 0.0]))
    assert m2.tau2[1] == pytest.approx(2.0)
    expect = np.kron(np.diag([1.0, 0.5]), np.eye(3))
    assert np.allclose(m2.dense(), expect)


# ------------------------------------------------------------------- misc


def test_full_rank_from_dense_round_trip():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((4, 4))
    sigma = a @ a.T + 4 * np.eye(4)
    m = full_rank_from_dense(sigma)
    assert np.allclose(m.dense(), sigma, atol=1e-10)


def test_full_rank_from_dense_rejects_indefinite():
    with pytest.raises(ConditioningError):
        full_rank_from_dense(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_solve_shape_mismatch():
    with pytest.raises(InputError):
        Diagonal(3).solve(np.ones(4))


def test_sq_exp_is_smooth_kernel():
    m = SqExp(5)
    dense = m.dense()
    assert dense[0, 1] == pytest.approx(np.exp(-0.5), abs=1e-6)
    np.linalg.cholesky(dense)
