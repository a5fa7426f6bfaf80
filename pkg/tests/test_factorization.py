"""Tests for factorization building, sparse assembly and parameter accounting."""

import numpy as np
import pytest

from messi import (
    Clustering,
    EmOptions,
    ParameterError,
    Subspace,
    assemble_sparse,
    best_fit_subspace,
    build_factorization,
    em_multi_restart,
    equal_budget_j,
    forward,
    param_count,
    project,
    reconstruct,
    svd_baseline_params,
    truncated_svd,
)


def make_clustering(pts, k, j, seed=0, restarts=4):
    return em_multi_restart(pts, k, j, EmOptions(restarts=restarts, seed=seed))


def planted_20x10(seed=0, noise=0.01):
    rng = np.random.default_rng(seed)
    basis0 = best_fit_subspace(rng.standard_normal((3, 10)), 3).basis
    basis1 = best_fit_subspace(rng.standard_normal((3, 10)), 3).basis
    coeffs = rng.uniform(-1, 1, (20, 3))
    pts = np.empty((20, 10))
    pts[:10] = coeffs[:10] @ basis0
    pts[10:] = coeffs[10:] @ basis1
    return pts + noise * rng.standard_normal((20, 10))


class TestBuildFactorization:
    def test_20x10_k2_j3_stores_120_values(self):
        pts = planted_20x10()
        fact = build_factorization(pts, make_clustering(pts, 2, 3))
        assert fact.n == 20 and fact.d == 10 and fact.k == 2
        assert sum(fact.block_sizes()) == 20
        assert fact.param_count() == 120  # 20*3 + 2*3*10

    def test_exact_data_reconstructs_exactly(self):
        pts = planted_20x10(noise=0.0)
        fact = build_factorization(pts, make_clustering(pts, 2, 3, restarts=8))
        recon = reconstruct(fact)
        assert np.max(np.abs(recon - pts)) <= 1e-9 * max(1.0, np.max(np.abs(pts)))

    def test_rows_reconstruct_to_their_projections(self):
        rng = np.random.default_rng(1)
        pts = rng.standard_normal((15, 6))
        clus = make_clustering(pts, 3, 2, seed=2)
        fact = build_factorization(pts, clus)
        recon = reconstruct(fact)
        for z in range(15):
            expected = project(pts[z], clus.subspaces[clus.assignment[z]])
            np.testing.assert_allclose(recon[z], expected, rtol=1e-12, atol=1e-12)

    def test_rejects_q_not_two(self):
        rng = np.random.default_rng(2)
        pts = rng.standard_normal((10, 4))
        from messi import em_run

        clus = em_run(pts, 2, 1, EmOptions(seed=0, q=1.0))
        with pytest.raises(ParameterError):
            build_factorization(pts, clus)

    def test_rejects_shape_mismatch(self):
        rng = np.random.default_rng(3)
        pts = rng.standard_normal((10, 4))
        clus = make_clustering(pts, 2, 1)
        with pytest.raises(ParameterError):
            build_factorization(rng.standard_normal((11, 4)), clus)

    def test_empty_cluster_yields_zero_row_block(self):
        pts = np.outer(np.arange(1.0, 6.0), [1.0, 0.0, 0.0])
        clus = Clustering(
            k=2,
            assignment=np.zeros(5, dtype=int),
            subspaces=(Subspace(np.array([[1.0, 0, 0]])), Subspace(np.array([[0.0, 1.0, 0]]))),
            cost=0.0,
            q=2.0,
            iterations=1,
            converged=True,
        )
        fact = build_factorization(pts, clus)
        assert fact.block_sizes() == (5, 0)
        assert fact.blocks[1].u.shape == (0, 1)
        # The empty cluster still contributes its basis parameters.
        assert fact.param_count() == 5 * 1 + 2 * 1 * 3


class TestSparseAssembly:
    def test_k1_is_dense(self):
        rng = np.random.default_rng(4)
        pts = rng.standard_normal((8, 5))
        fact = build_factorization(pts, make_clustering(pts, 1, 2))
        sa = assemble_sparse(fact)
        assert sa.shape == (8, 2)
        np.testing.assert_array_equal(sa.offsets, [0])
        np.testing.assert_array_equal(sa.row_widths(), np.full(8, 2))
        np.testing.assert_allclose(sa.u_dense(), fact.blocks[0].u)

    def test_block_pattern_7x7(self):
        # Rows 3 and 5 (0-indexed) assigned to the first of two rank-3
        # subspaces: their nonzeros occupy the first 3 columns of U.
        rng = np.random.default_rng(5)
        pts = rng.standard_normal((7, 7))
        assignment = np.array([1, 1, 1, 0, 1, 0, 1])
        subs = (
            best_fit_subspace(pts[assignment == 0], 3),
            best_fit_subspace(pts[assignment == 1], 3),
        )
        clus = Clustering(
            k=2, assignment=assignment, subspaces=subs,
            cost=0.0, q=2.0, iterations=1, converged=True,
        )
        fact = build_factorization(pts, clus)
        sa = assemble_sparse(fact)
        u = sa.u_dense()
        assert sa.shape == (7, 6)
        for z in (3, 5):
            assert sa.col_offsets[z] == 0
            assert np.count_nonzero(u[z, 3:]) == 0
        for z in (0, 1, 2, 4, 6):
            assert sa.col_offsets[z] == 3
            assert np.count_nonzero(u[z, :3]) == 0

    def test_product_matches_dense_multiply(self):
        rng = np.random.default_rng(6)
        pts = rng.standard_normal((20, 8))
        fact = build_factorization(pts, make_clustering(pts, 3, 2, seed=1))
        sa = assemble_sparse(fact)
        recon = reconstruct(fact)
        dense = sa.u_dense() @ sa.v_stacked
        assert np.max(np.abs(dense - recon)) <= 1e-9 * max(1.0, np.max(np.abs(recon)))
        assert np.max(np.abs(sa.product() - recon)) <= 1e-9 * max(1.0, np.max(np.abs(recon)))

    def test_nonzero_count(self):
        rng = np.random.default_rng(7)
        pts = rng.standard_normal((12, 6))
        fact = build_factorization(pts, make_clustering(pts, 2, 2, seed=3))
        sa = assemble_sparse(fact)
        sizes = fact.block_sizes()
        assert sa.values.size == sizes[0] * 2 + sizes[1] * 2
        assert int(sa.row_widths().sum()) == sa.values.size

    def test_nonuniform_dims_pattern(self):
        pts = planted_20x10()
        assignment = np.repeat([0, 1], 10)
        subs = (best_fit_subspace(pts[:10], 2), best_fit_subspace(pts[10:], 4))
        clus = Clustering(
            k=2, assignment=assignment, subspaces=subs,
            cost=0.0, q=2.0, iterations=1, converged=True,
        )
        fact = build_factorization(pts, clus)
        sa = assemble_sparse(fact)
        assert sa.total_dims == 6
        np.testing.assert_array_equal(sa.offsets, [0, 2])
        assert np.all(sa.row_widths()[:10] == 2)
        assert np.all(sa.row_widths()[10:] == 4)


class TestForwardReconstruct:
    def test_row_on_subspace_returned_exactly(self):
        pts = np.outer(np.arange(1.0, 7.0), [1.0, 0.0, 0.0])
        fact = build_factorization(pts, make_clustering(pts, 1, 1))
        for z in range(6):
            np.testing.assert_allclose(forward(fact, z), pts[z], rtol=1e-12, atol=1e-12)

    def test_k1_matches_truncated_svd(self):
        rng = np.random.default_rng(8)
        pts = rng.standard_normal((14, 6))
        fact = build_factorization(pts, make_clustering(pts, 1, 3))
        svd_recon = truncated_svd(pts, 3).reconstruction()
        recon = reconstruct(fact)
        assert np.linalg.norm(recon - svd_recon) <= 1e-9 * np.linalg.norm(svd_recon)

    def test_forward_agrees_with_sparse_product(self):
        rng = np.random.default_rng(9)
        pts = rng.standard_normal((10, 5))
        fact = build_factorization(pts, make_clustering(pts, 2, 2, seed=5))
        sa = assemble_sparse(fact)
        prod = sa.product()
        for z in range(10):
            np.testing.assert_allclose(forward(fact, z), prod[z], rtol=1e-12, atol=1e-12)

    def test_residual_equals_cost(self):
        rng = np.random.default_rng(10)
        pts = rng.standard_normal((25, 7))
        clus = make_clustering(pts, 3, 2, seed=6)
        fact = build_factorization(pts, clus)
        residual = float(np.sum((pts - reconstruct(fact)) ** 2))
        assert residual == pytest.approx(clus.cost, rel=1e-9)

    def test_index_out_of_range(self):
        pts = np.eye(3)
        fact = build_factorization(pts, make_clustering(pts, 1, 1))
        with pytest.raises(ParameterError):
            forward(fact, 3)
        with pytest.raises(ParameterError):
            forward(fact, -1)


class TestParamCounts:
    def test_golden_counts(self):
        assert param_count(20, 10, 2, [3, 3]) == 120
        assert param_count(120, 3, 3, [1, 1, 1]) == 129
        assert param_count(120, 3, 1, [2]) == 246
        assert svd_baseline_params(20, 10, 4) == 120

    def test_uniform_scalar_dims(self):
        assert param_count(20, 10, 2, 3) == 120

    def test_nonuniform_requires_sizes(self):
        with pytest.raises(ParameterError):
            param_count(20, 10, 2, [2, 4])
        assert param_count(20, 10, 2, [2, 4], cluster_sizes=[10, 10]) == 10 * 2 + 10 * 4 + 10 * 6

    def test_svd_baseline(self):
        assert svd_baseline_params(20, 10, 4) == 120
        assert svd_baseline_params(5, 7, 0) == 0
        assert svd_baseline_params(30522, 768, 384) == 12_015_360

    def test_matches_factorization_accounting(self):
        rng = np.random.default_rng(11)
        pts = rng.standard_normal((18, 6))
        fact = build_factorization(pts, make_clustering(pts, 3, 2, seed=7))
        assert fact.param_count() == param_count(
            18, 6, 3, fact.dims, cluster_sizes=fact.block_sizes()
        )


class TestEqualBudgetJ:
    def test_inverts_golden_counts(self):
        assert equal_budget_j(20, 10, 2, 120) == 3
        assert equal_budget_j(20, 10, 1, 120) == 4

    def test_bracketing(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            n = int(rng.integers(5, 500))
            d = int(rng.integers(2, 100))
            k = int(rng.integers(1, 9))
            budget = int(rng.integers(n + k * d, 4 * (n + k * d)))
            j = equal_budget_j(n, d, k, budget)
            assert param_count(n, d, k, j) <= budget < param_count(n, d, k, j + 1)

    def test_budget_too_small(self):
        with pytest.raises(ParameterError):
            equal_budget_j(20, 10, 2, 39)
