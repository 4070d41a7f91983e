"""Consistency matrix, power iteration, weighted Procrustes, and the two
registration front ends."""

import time

import numpy as np
import pytest

from conftest import random_rotation, random_transform, rotation_about_z
from submaploc.errors import (DegenerateGeometry, EmptyInput,
                              InsufficientCorrespondences)
from submaploc.evalharness import make_correspondence_problem
from submaploc.features import CorrespondenceSet, oracle_describe
from submaploc.geometry import RigidTransform, is_success, rre_degrees, rte_meters
from submaploc.registration import (RegistrationConfig,
                                    build_consistency_matrix,
                                    leading_eigenvector,
                                    ransac_from_correspondences,
                                    register_ransac, register_spectral,
                                    spectral_from_correspondences,
                                    weighted_lsq_fit)


def _corr(qa, qp):
    qa = np.asarray(qa, dtype=np.float64)
    qp = np.asarray(qp, dtype=np.float64)
    n = len(qa)
    return CorrespondenceSet(qa=qa, qp=qp, feature_distance=np.zeros(n),
                             ia=np.arange(n), ip=np.arange(n))


class TestConsistencyMatrix:
    def test_shared_rigid_motion_gives_ones(self):
        rng = np.random.default_rng(0)
        qa = rng.uniform(-5, 5, (6, 3))
        t = random_transform(rng)
        m = build_consistency_matrix(_corr(qa, t.apply(qa)))
        np.testing.assert_allclose(m, np.ones((6, 6)), atol=1e-12)

    def test_hinge_boundary_is_zero(self):
        # segment lengths 1.0 vs 1.5 differ by exactly d_thr = 0.5
        qa = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        qp = np.array([[0.0, 0.0, 0.0], [1.5, 0.0, 0.0]])
        m = build_consistency_matrix(_corr(qa, qp))
        assert m[0, 1] == 0.0 and m[1, 0] == 0.0

    def test_quarter_meter_stretch_scores_three_quarters(self):
        qa = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        qp = np.array([[0.0, 0.0, 0.0], [1.25, 0.0, 0.0]])
        m = build_consistency_matrix(_corr(qa, qp))
        assert abs(m[0, 1] - 0.75) < 1e-12

    def test_structure_on_random_sets(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            n = int(rng.integers(2, 40))
            qa = rng.uniform(-10, 10, (n, 3))
            qp = rng.uniform(-10, 10, (n, 3))
            m = build_consistency_matrix(_corr(qa, qp))
            assert m.shape == (n, n)
            np.testing.assert_allclose(m, m.T, atol=1e-12)
            assert np.all(m >= 0.0) and np.all(m <= 1.0)
            np.testing.assert_array_equal(np.diag(m), np.ones(n))

    def test_invariant_under_common_rigid_motion(self):
        rng = np.random.default_rng(2)
        qa = rng.uniform(-10, 10, (20, 3))
        qp = rng.uniform(-10, 10, (20, 3))
        base = build_consistency_matrix(_corr(qa, qp))
        for _ in range(20):
            g = random_transform(rng)
            moved = build_consistency_matrix(_corr(g.apply(qa), g.apply(qp)))
            assert np.max(np.abs(moved - base)) < 1e-9

    def test_empty_rejected(self):
        with pytest.raises(EmptyInput):
            build_consistency_matrix(_corr(np.empty((0, 3)), np.empty((0, 3))))


class TestLeadingEigenvector:
    def test_identity_matrix_returns_uniform_weights(self):
        e, converged = leading_eigenvector(np.eye(8))
        np.testing.assert_array_equal(e, np.ones(8))
        assert converged

    def test_two_by_two_closed_form(self):
        m = np.array([[1.0, 0.9], [0.9, 1.0]])
        e, converged = leading_eigenvector(m)
        assert converged
        np.testing.assert_allclose(e, [1.0, 1.0], atol=1e-9)
        np.testing.assert_allclose(m @ e, 1.9 * e, atol=1e-9)

    def test_clique_dominates_isolated_entries(self):
        m = np.eye(10)
        m[:5, :5] = 1.0
        e, converged = leading_eigenvector(m, max_iters=500)
        assert converged
        np.testing.assert_allclose(e[:5], 1.0, atol=1e-9)
        assert np.all(e[5:] < 1e-6)

    def test_matches_dense_eigensolver(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            n = int(rng.integers(2, 32))
            vals = np.sort(rng.uniform(0.0, 1.0, n))
            if vals[-1] - vals[-2] if n > 1 else 1.0 <= 1e-3:
                vals[-1] = vals[-2] + 0.1
            q, _ = np.linalg.qr(rng.normal(size=(n, n)))
            m = q @ np.diag(vals) @ q.T
            m = 0.5 * (m + m.T)
            e, _ = leading_eigenvector(m, max_iters=20000, tol=1e-12)
            w, v = np.linalg.eigh(m)
            truth = v[:, -1]
            cosang = abs(truth @ (e / np.linalg.norm(e)))
            assert np.arccos(min(cosang, 1.0)) < 1e-6


class TestWeightedFit:
    def test_identity_recovery(self):
        rng = np.random.default_rng(4)
        qa = rng.uniform(-5, 5, (30, 3))
        t = weighted_lsq_fit(_corr(qa, qa), np.ones(30))
        assert np.max(np.abs(t.matrix() - np.eye(4))) < 1e-9

    def test_constructed_transform_recovery(self):
        rng = np.random.default_rng(5)
        qa = rng.uniform(-5, 5, (50, 3))
        truth = RigidTransform(rotation=rotation_about_z(90.0),
                               translation=np.array([1.0, 2.0, 3.0]))
        t = weighted_lsq_fit(_corr(qa, truth.apply(qa)), np.ones(50))
        assert np.max(np.abs(t.matrix() - truth.matrix())) < 1e-9

    def test_zero_weight_pairs_are_bit_exactly_excluded(self):
        rng = np.random.default_rng(6)
        qa = rng.uniform(-5, 5, (10, 3))
        truth = random_transform(rng)
        qp = truth.apply(qa)
        junk_a = rng.uniform(-5, 5, (10, 3))
        junk_p = rng.uniform(-5, 5, (10, 3))
        full = _corr(np.vstack([qa, junk_a]), np.vstack([qp, junk_p]))
        weights = np.concatenate([np.ones(10), np.zeros(10)])
        with_junk = weighted_lsq_fit(full, weights)
        without = weighted_lsq_fit(_corr(qa, qp), np.ones(10))
        assert with_junk.rotation.tobytes() == without.rotation.tobytes()
        assert with_junk.translation.tobytes() == without.translation.tobytes()

    def test_weight_scaling_invariance(self):
        rng = np.random.default_rng(7)
        qa = rng.uniform(-5, 5, (40, 3))
        qp = rng.uniform(-5, 5, (40, 3))
        c = _corr(qa, qp)
        e = rng.uniform(0.1, 1.0, 40)  # clear of the tau cut at any scale here
        base = weighted_lsq_fit(c, e)
        for exact_scale in (2.0, 0.25):
            scaled = weighted_lsq_fit(c, exact_scale * e)
            assert scaled.rotation.tobytes() == base.rotation.tobytes()
            assert scaled.translation.tobytes() == base.translation.tobytes()
        loose = weighted_lsq_fit(c, 3.7 * e)
        assert np.max(np.abs(loose.matrix() - base.matrix())) < 1e-12

    def test_rotations_always_valid(self):
        rng = np.random.default_rng(8)
        for _ in range(300):
            n = int(rng.integers(3, 30))
            qa = rng.uniform(-5, 5, (n, 3))
            qp = rng.uniform(-5, 5, (n, 3))
            w = rng.uniform(0.06, 1.0, n)
            t = weighted_lsq_fit(_corr(qa, qp), w)
            r = t.rotation
            assert np.linalg.norm(r.T @ r - np.eye(3)) < 1e-9
            assert np.linalg.det(r) > 0

    def test_too_few_survivors_raise(self):
        qa = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        with pytest.raises(InsufficientCorrespondences):
            weighted_lsq_fit(_corr(qa, qa), np.array([1.0, 1.0, 0.01]))

    def test_collinear_points_raise(self):
        qa = np.stack([np.linspace(0, 5, 8), np.zeros(8), np.zeros(8)], axis=1)
        with pytest.raises(DegenerateGeometry):
            weighted_lsq_fit(_corr(qa, qa + 1.0), np.ones(8))


class TestSpectralRegistration:
    def test_identical_correspondences_give_identity(self):
        rng = np.random.default_rng(9)
        qa = rng.uniform(-8, 8, (40, 3))
        result = spectral_from_correspondences(_corr(qa, qa))
        assert np.max(np.abs(result.transform.matrix() - np.eye(4))) < 1e-6
        np.testing.assert_allclose(result.inlier_weights, 1.0, atol=1e-9)
        assert result.kept_count == 40
        assert result.converged

    def test_recovers_known_transform_with_outliers(self):
        for seed in range(10):
            corr, gt = make_correspondence_problem(seed, n=128,
                                                   inlier_fraction=0.5)
            result = spectral_from_correspondences(corr)
            assert is_success(result.transform, gt)

    def test_equivariance_under_global_motion(self):
        rng = np.random.default_rng(10)
        corr, _ = make_correspondence_problem(3, n=96, inlier_fraction=0.6)
        base = spectral_from_correspondences(corr).transform
        for _ in range(10):
            g = random_transform(rng)
            moved = CorrespondenceSet(qa=g.apply(corr.qa), qp=g.apply(corr.qp),
                                      feature_distance=corr.feature_distance,
                                      ia=corr.ia, ip=corr.ip)
            got = spectral_from_correspondences(moved).transform
            expected = g.compose(base).compose(g.inverse())
            assert np.max(np.abs(got.matrix() - expected.matrix())) < 1e-6

    def test_all_outliers_never_claim_success(self):
        """With zero signal the solver must raise or miss, never both
        return and match the ground truth."""
        silent_wins = 0
        for seed in range(50):
            corr, gt = make_correspondence_problem(seed, n=64,
                                                   inlier_fraction=0.0)
            try:
                result = spectral_from_correspondences(corr)
            except (InsufficientCorrespondences, DegenerateGeometry):
                continue
            if is_success(result.transform, gt):
                silent_wins += 1
        assert silent_wins == 0

    def test_quadratic_time_growth_bound(self):
        def best_time(n):
            corr, _ = make_correspondence_problem(0, n=n, inlier_fraction=0.5)
            times = []
            for _ in range(5):
                t0 = time.perf_counter()
                spectral_from_correspondences(corr)
                times.append(time.perf_counter() - t0)
            return min(times)

        assert best_time(256) / best_time(64) < 32.0


class TestRansacRegistration:
    def test_identity_recovery(self):
        rng = np.random.default_rng(11)
        qa = rng.uniform(-8, 8, (32, 3))
        result = ransac_from_correspondences(_corr(qa, qa), iterations=100)
        assert np.max(np.abs(result.transform.matrix() - np.eye(4))) < 1e-9

    def test_seed_determinism(self):
        corr, _ = make_correspondence_problem(5, n=96, inlier_fraction=0.4)
        a = ransac_from_correspondences(corr, iterations=500, seed=7)
        b = ransac_from_correspondences(corr, iterations=500, seed=7)
        assert a.transform.rotation.tobytes() == b.transform.rotation.tobytes()
        assert a.transform.translation.tobytes() == b.transform.translation.tobytes()
        assert a.kept_count == b.kept_count

    def test_too_few_pairs_raise(self):
        qa = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        with pytest.raises(InsufficientCorrespondences):
            ransac_from_correspondences(_corr(qa, qa))


def test_keypoint_level_front_ends_agree_on_identity():
    rng = np.random.default_rng(12)
    cloud = rng.uniform(0, 12, (800, 3))
    eye = RigidTransform.identity()
    _, kp = oracle_describe(cloud, eye, seed=1)
    spectral = register_spectral(kp, kp)
    assert np.max(np.abs(spectral.transform.matrix() - np.eye(4))) < 1e-6
    np.testing.assert_allclose(spectral.inlier_weights, 1.0, atol=1e-9)
    ransac = register_ransac(kp, kp, iterations=200)
    assert np.max(np.abs(ransac.transform.matrix() - np.eye(4))) < 1e-9
    assert spectral.elapsed >= 0.0 and ransac.elapsed >= 0.0


def test_registration_config_validation():
    with pytest.raises(ValueError):
        RegistrationConfig(d_thr=0.0)
    with pytest.raises(ValueError):
        RegistrationConfig(tau=1.5)
