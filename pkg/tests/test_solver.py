import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_orthonormal, unit_columns
from uoslearn.errors import ConfigError, DataError, DimensionError
from uoslearn.metrics import clustering_accuracy
from uoslearn.solver import (
    FeatureMatrix,
    SolverConfig,
    build_affinity,
    build_weight_matrix,
    cslrr_solve,
    init_state,
    threshold_coefficients,
    update_e,
    update_f,
    update_q,
    update_z,
)
from uoslearn.spectral import spectral_cluster
from uoslearn.synth import UosSynthConfig, generate_synthetic_uos


def small_config(**kw):
    base = dict(l_max=2, alpha=1.0, beta=0.5, lam=1.0, max_iters=50)
    base.update(kw)
    return SolverConfig(**base)


# --- independent single-purpose reference loops (plain numpy throughout) ---


def _svt_ref(a, tau):
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    s = np.maximum(s - tau, 0.0)
    return (u * s) @ vt


def _col_prox_ref(c, tau):
    out = np.zeros_like(c)
    for j in range(c.shape[1]):
        norm = np.linalg.norm(c[:, j])
        if norm > tau:
            out[:, j] = c[:, j] * (1 - tau / norm)
    return out


def reference_lrr_iterates(x, lam, n_iters, weights=None, alpha=0.0):
    """Standalone LADM loop for the low-rank program, optionally with the
    structure-weighted shrink step (alpha > 0). Returns Z, Q, E per iteration."""
    n = x.shape[1]
    eta = 1.02 * np.linalg.svd(x, compute_uv=False)[0] ** 2
    rho, mu, mu_max = 1.1, 0.1, 1e30
    z = np.zeros((n, n))
    q = np.zeros((n, n))
    e = np.zeros_like(x)
    g1 = np.zeros_like(x)
    g2 = np.zeros((n, n))
    if weights is None:
        weights = np.zeros((n, n))
    iterates = []
    for _ in range(n_iters):
        grad = x.T @ (x @ z - x + e - g1 / mu) + (z - q + g2 / mu)
        z = _svt_ref(z - grad / eta, 1.0 / (eta * mu))
        a = z + g2 / mu
        thr = alpha * weights / mu
        q = np.maximum(a - thr, 0.0) + np.minimum(a + thr, 0.0)
        c = x - x @ z + g1 / mu
        e = _col_prox_ref(c, lam / mu)
        g1 = g1 + mu * (x - x @ z - e)
        g2 = g2 + mu * (z - q)
        mu = min(mu_max, rho * mu)
        iterates.append((z.copy(), q.copy(), e.copy()))
    return iterates


class TestBuildWeightMatrix:
    def test_parallel_columns_give_zero_weight(self):
        x = unit_columns(np.array([[1.0, -1.0, 0.0], [0.0, 0.0, 1.0]]))
        b = build_weight_matrix(x)
        assert b[0, 1] == pytest.approx(0.0)

    def test_two_orthogonal_columns(self):
        b = build_weight_matrix(np.eye(2))
        assert b[0, 1] == pytest.approx(1.0 - np.exp(-1.0))

    def test_zero_diagonal_symmetric_range(self, rng):
        x = unit_columns(rng.standard_normal((6, 10)))
        b = build_weight_matrix(x)
        assert np.array_equal(b, b.T)
        assert np.all(np.diag(b) == 0)
        assert b.min() >= 0 and b.max() < 1

    def test_degenerate_sigma(self):
        x = np.array([[1.0, 1.0], [0.0, 0.0]])
        with pytest.raises(DataError):
            build_weight_matrix(x)


class TestUpdates:
    def test_z_zero_gradient_fixpoint(self):
        x = FeatureMatrix(np.eye(3))
        cfg = small_config(l_max=3)
        state = init_state(x, cfg)
        state.e = x.data.copy()  # makes X - XZ - E + G1/mu vanish at Z=0
        z = update_z(state, x, cfg)
        assert np.array_equal(z, np.zeros((3, 3)))

    def test_z_surrogate_decrease(self, rng):
        # the majorized objective at the new Z never exceeds its value at Z^t
        x = FeatureMatrix(unit_columns(rng.standard_normal((8, 12))))
        cfg = small_config(l_max=3)
        state = init_state(x, cfg)
        state.z = rng.standard_normal((12, 12)) * 0.1
        state.q = rng.standard_normal((12, 12)) * 0.1
        state.e = rng.standard_normal((8, 12)) * 0.1

        def surrogate(znew):
            grad = state.mu * (
                x.data.T @ (x.data @ state.z - x.data + state.e - state.g1 / state.mu)
                + (state.z - state.q + state.g2 / state.mu)
            )
            nuc = np.linalg.svd(znew, compute_uv=False).sum()
            lin = np.sum(grad * (znew - state.z))
            quad = state.eta * state.mu / 2 * np.sum((znew - state.z) ** 2)
            return nuc + lin + quad

        z_new = update_z(state, x, cfg)
        assert surrogate(z_new) <= surrogate(state.z) + 1e-10

    def test_z_step_shrinks_with_larger_eta(self, rng):
        x = FeatureMatrix(unit_columns(rng.standard_normal((6, 9))))
        cfg = small_config(l_max=3)
        state = init_state(x, cfg)
        state.z = rng.standard_normal((9, 9)) * 0.2
        step1 = np.linalg.norm(update_z(state, x, cfg) - state.z)
        state.eta *= 10
        step2 = np.linalg.norm(update_z(state, x, cfg) - state.z)
        assert step2 <= step1 + 1e-12

    def test_q_identity_when_thresholds_vanish(self, rng):
        x = FeatureMatrix(unit_columns(rng.standard_normal((5, 8))))
        cfg = small_config(l_max=2, alpha=0.0, beta=0.0)
        state = init_state(x, cfg)
        state.z = rng.standard_normal((8, 8))
        state.g2 = rng.standard_normal((8, 8))
        q, v = update_q(state, np.zeros((8, 8)), cfg)
        assert np.allclose(q, state.z + state.g2 / state.mu)
        absq = np.abs(q)
        assert np.allclose(v, (absq.sum(0) + absq.sum(1)) / 2)

    def test_q_small_entries_zeroed(self):
        x = FeatureMatrix(np.eye(4))
        cfg = small_config(l_max=2, alpha=2.0, beta=1.0)
        state = init_state(x, cfg)
        state.z = np.full((4, 4), 0.01)
        state.theta = np.ones((4, 4))
        weights = np.ones((4, 4))
        # per-entry threshold (2*1 + 1*1)/0.1 = 30 >> |z|
        q, _ = update_q(state, weights, cfg)
        assert np.array_equal(q, np.zeros((4, 4)))

    def test_f_block_diagonal_indicator(self):
        # Q with two disconnected blocks: embedding rows coincide inside blocks
        x = FeatureMatrix(np.eye(4))
        cfg = small_config(l_max=2, beta=1.0)
        state = init_state(x, cfg)
        q = np.zeros((4, 4))
        q[0, 1] = q[1, 0] = 0.9
        q[2, 3] = q[3, 2] = 0.7
        state.q = q
        absq = np.abs(q)
        state.v = (absq.sum(0) + absq.sum(1)) / 2
        f, theta = update_f(state, cfg)
        assert np.abs(f.T @ f - np.eye(2)).max() < 1e-10
        assert theta[0, 1] == pytest.approx(0.0, abs=1e-12)
        assert theta[2, 3] == pytest.approx(0.0, abs=1e-12)
        assert theta[0, 2] > 0.1

    def test_f_trace_equals_smallest_eigenvalue_sum(self, rng):
        x = FeatureMatrix(unit_columns(rng.standard_normal((5, 7))))
        cfg = small_config(l_max=3)
        state = init_state(x, cfg)
        state.q = rng.standard_normal((7, 7))
        absq = np.abs(state.q)
        state.v = (absq.sum(0) + absq.sum(1)) / 2
        f, _ = update_f(state, cfg)
        m = np.diag(state.v) - (absq + absq.T) / 2
        expected = np.sort(np.linalg.eigvalsh(m))[:3].sum()
        assert np.trace(f.T @ m @ f) == pytest.approx(expected, abs=1e-8)

    def test_e_zero_input(self):
        x = FeatureMatrix(np.eye(3))
        cfg = small_config(l_max=2)
        state = init_state(x, cfg)
        state.z = np.eye(3)  # C = X - XZ + 0 = 0
        assert np.array_equal(update_e(state, x, cfg), np.zeros((3, 3)))

    def test_e_full_shrinkage(self, rng):
        x = FeatureMatrix(unit_columns(rng.standard_normal((4, 5))))
        cfg = small_config(l_max=2, lam=100.0)
        state = init_state(x, cfg)
        # C = X at Z=0, columns have unit norm; lam/mu = 1000 >= all norms
        assert np.array_equal(update_e(state, x, cfg), np.zeros((4, 5)))

    def test_e_blockwise_matches_per_row_shrink(self, rng):
        data = unit_columns(rng.standard_normal((6, 4)))
        x = FeatureMatrix(data, block_shape=(3, 2))
        cfg = small_config(l_max=2, lam=0.05, error_mode="blockwise")
        state = init_state(x, cfg)
        out = update_e(state, x, cfg)
        tau = cfg.lam / state.mu
        c = data.copy()  # C = X at the initial state
        for i in range(4):
            block = c[:, i].reshape(3, 2)
            for r in range(3):
                norm = np.linalg.norm(block[r])
                block[r] *= max(1 - tau / norm, 0.0) if norm > 0 else 0.0
            assert np.allclose(out[:, i], block.reshape(-1))

    def test_e_blockwise_requires_block_shape(self, rng):
        x = FeatureMatrix(unit_columns(rng.standard_normal((6, 4))))
        cfg = small_config(l_max=2, error_mode="blockwise")
        with pytest.raises(ConfigError):
            cslrr_solve(x, cfg)


class TestSolve:
    def test_identity_limit(self):
        x = FeatureMatrix(np.eye(2))
        cfg = SolverConfig(l_max=2, alpha=0.0, beta=0.0, lam=100.0, max_iters=500)
        res = cslrr_solve(x, cfg)
        assert res.converged
        assert np.abs(res.z - np.eye(2)).max() < 1e-4

    def test_independent_subspaces_cluster(self):
        cfg = UosSynthConfig(
            m=50, subspaces=5, dim=4, points_per_subspace=40, noise=0.0, seed=7
        )
        fm, truth = generate_synthetic_uos(cfg)
        scfg = SolverConfig(l_max=5, alpha=1.0, beta=0.5, lam=10.0, max_iters=500)
        res = cslrr_solve(fm, scfg)
        assert res.converged
        w = build_affinity(threshold_coefficients(res.z, 0.05))
        labels = spectral_cluster(w, 5, seed=0)
        assert clustering_accuracy(labels, truth) >= 0.99

    def test_lrr_degeneration_iterates(self):
        r = np.random.default_rng(42)
        x = unit_columns(r.standard_normal((8, 14)))
        fm = FeatureMatrix(x)
        n_iters = 30
        cfg = SolverConfig(
            l_max=3, alpha=0.0, beta=0.0, lam=0.7, max_iters=n_iters, epsilon=1e-16
        )
        seen = []
        cslrr_solve(
            fm, cfg, callback=lambda st: seen.append((st.z.copy(), st.q.copy(), st.e.copy()))
        )
        reference = reference_lrr_iterates(x, 0.7, n_iters)
        assert len(seen) == len(reference)
        for (z, q, e), (zr, qr, er) in zip(seen, reference):
            assert np.abs(z - zr).max() < 1e-10
            assert np.abs(q - qr).max() < 1e-10
            assert np.abs(e - er).max() < 1e-10

    def test_sclrr_degeneration_iterates(self):
        r = np.random.default_rng(77)
        x = unit_columns(r.standard_normal((8, 12)))
        fm = FeatureMatrix(x)
        n_iters = 30
        cfg = SolverConfig(
            l_max=3, alpha=0.9, beta=0.0, lam=0.7, max_iters=n_iters, epsilon=1e-16
        )
        seen = []
        cslrr_solve(
            fm, cfg, callback=lambda st: seen.append((st.z.copy(), st.q.copy(), st.e.copy()))
        )
        weights = build_weight_matrix(fm)
        reference = reference_lrr_iterates(x, 0.7, n_iters, weights=weights, alpha=0.9)
        for (z, q, e), (zr, qr, er) in zip(seen, reference):
            assert np.abs(z - zr).max() < 1e-10
            assert np.abs(q - qr).max() < 1e-10
            assert np.abs(e - er).max() < 1e-10

    def test_converged_run_satisfies_residual_checks(self, rng):
        x = FeatureMatrix(unit_columns(rng.standard_normal((6, 10))))
        cfg = small_config(l_max=3, lam=5.0, max_iters=500)
        res = cslrr_solve(x, cfg)
        assert res.converged
        r1, r2 = res.residual_history[-1]
        assert r1 <= cfg.epsilon and r2 <= cfg.epsilon

    def test_nonconvergence_flagged_not_raised(self, rng):
        x = FeatureMatrix(unit_columns(rng.standard_normal((6, 10))))
        cfg = small_config(l_max=3, max_iters=2)
        res = cslrr_solve(x, cfg)
        assert not res.converged
        assert res.iterations == 2

    def test_column_permutation_conjugates_z(self):
        # beta = 0 keeps the embedding step inert; with beta > 0 the first
        # iteration eigendecomposes M = 0, an unavoidable degeneracy that
        # the covariance claim excludes.
        r = np.random.default_rng(5)
        x = unit_columns(r.standard_normal((10, 12)))
        perm = r.permutation(12)
        cfg = small_config(l_max=3, beta=0.0, lam=2.0, max_iters=120)
        z1 = cslrr_solve(FeatureMatrix(x), cfg).z
        z2 = cslrr_solve(FeatureMatrix(x[:, perm]), cfg).z
        assert np.abs(z2 - z1[np.ix_(perm, perm)]).max() < 1e-8

    def test_mu_nondecreasing_and_capped(self, rng):
        x = FeatureMatrix(unit_columns(rng.standard_normal((5, 8))))
        cfg = small_config(l_max=2, mu_max=0.3, max_iters=30, epsilon=1e-16)
        mus = []
        cslrr_solve(x, cfg, callback=lambda st: mus.append(st.mu))
        assert all(b >= a for a, b in zip(mus, mus[1:]))
        assert max(mus) <= 0.3

    def test_residual_log_lines(self, rng, capsys):
        import io

        x = FeatureMatrix(unit_columns(rng.standard_normal((5, 8))))
        cfg = small_config(l_max=2, max_iters=3, epsilon=1e-16)
        stream = io.StringIO()
        cslrr_solve(x, cfg, log_stream=stream)
        lines = stream.getvalue().strip().splitlines()
        assert len(lines) == 3
        assert lines[0].startswith("iter=1 r1=")
        assert " mu=" in lines[0]

    def test_blockwise_solve_converges(self, rng):
        data = unit_columns(rng.standard_normal((12, 10)))
        x = FeatureMatrix(data, block_shape=(4, 3))
        cfg = small_config(l_max=3, lam=5.0, error_mode="blockwise", max_iters=500)
        res = cslrr_solve(x, cfg)
        assert res.converged
        r1, r2 = res.residual_history[-1]
        assert max(r1, r2) <= cfg.epsilon

    def test_l_max_exceeding_samples(self, rng):
        x = FeatureMatrix(unit_columns(rng.standard_normal((5, 4))))
        with pytest.raises(DimensionError):
            cslrr_solve(x, small_config(l_max=5))


class TestThresholdAndAffinity:
    def test_threshold_zero_keeps_all(self, rng):
        z = rng.standard_normal((5, 5))
        assert np.array_equal(threshold_coefficients(z, 0.0), z)

    def test_threshold_one_keeps_only_peak(self):
        z = np.array([[0.5, -2.0], [1.0, 2.0]])
        out = threshold_coefficients(z, 1.0)
        assert np.array_equal(out, np.array([[0.0, -2.0], [0.0, 2.0]]))

    def test_threshold_identity_stable(self):
        assert np.array_equal(threshold_coefficients(np.eye(3), 0.5), np.eye(3))

    def test_affinity_zero(self):
        assert np.array_equal(build_affinity(np.zeros((3, 3))), np.zeros((3, 3)))

    def test_affinity_antisymmetric(self):
        z = np.array([[0.0, 1.0], [-1.0, 0.0]])
        w = build_affinity(z)
        assert w[0, 1] == pytest.approx(1.0)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_affinity_symmetric_nonnegative(self, seed):
        z = np.random.default_rng(seed).standard_normal((6, 6))
        w = build_affinity(z)
        assert np.array_equal(w, w.T)
        assert w.min() >= 0


class TestFeatureMatrixValidation:
    def test_non_unit_columns_rejected(self):
        with pytest.raises(DataError):
            FeatureMatrix(np.array([[2.0, 0.0], [0.0, 1.0]]))

    def test_block_shape_mismatch(self):
        with pytest.raises(DimensionError):
            FeatureMatrix(np.eye(4), block_shape=(3, 2))

    def test_theta_nonneg_zero_diagonal_symmetric(self, rng):
        basis = random_orthonormal(6, 2, rng)
        x = FeatureMatrix(np.eye(6))
        cfg = small_config(l_max=2)
        state = init_state(x, cfg)
        state.q = rng.standard_normal((6, 6))
        absq = np.abs(state.q)
        state.v = (absq.sum(0) + absq.sum(1)) / 2
        _, theta = update_f(state, cfg)
        assert np.all(theta >= 0)
        assert np.all(np.diag(theta) == 0)
        assert np.allclose(theta, theta.T)
