import numpy as np
from django.test import SimpleTestCase, tag

from jfto_app import grasp_model, se3
from jfto_app.conf import GraspTrainingConfig, GripperSpec
from jfto_app.demo_io import box_cloud, side_grasps
from jfto_app.diff_net import Mlp
from jfto_app.exceptions import DegenerateNoise, EmptyDemoGrasps, NoGraspsFound, ValidationFailure


def saturated_classifier(k, bias=50.0):
    net = Mlp.zeros((12 * k, 4, 1))
    return Mlp(net.widths, net.weights, (np.zeros(4), np.array([bias])))


class AntipodalTests(SimpleTestCase):
    def setUp(self):
        self.cloud = box_cloud()
        self.gripper = GripperSpec()

    def test_side_grasp_is_antipodal(self):
        for pose in side_grasps():
            self.assertTrue(grasp_model.antipodal_check(pose, self.cloud, self.gripper))

    def test_off_center_grasp_rejected(self):
        pose = side_grasps()[1]
        shifted = se3.Pose(pose.rotation, pose.translation + np.array([0.0, 0.015, 0.0]))
        self.assertFalse(grasp_model.antipodal_check(shifted, self.cloud, self.gripper))

    def test_grasp_away_from_object_rejected(self):
        pose = side_grasps()[1]
        far = se3.Pose(pose.rotation, [0.3, 0.0, 0.0])
        self.assertFalse(grasp_model.antipodal_check(far, self.cloud, self.gripper))

    def test_sampled_grasps_close_along_face_normals(self):
        grasps = grasp_model.sample_antipodal_grasps(self.cloud, self.gripper, count=40, seed=0)
        self.assertGreaterEqual(len(grasps), 4)
        cos_tol = np.cos(np.radians(self.gripper.antipodal_tolerance_deg))
        for pose in grasps:
            self.assertTrue(grasp_model.antipodal_check(pose, self.cloud, self.gripper))
            closing = pose.rotation_matrix()[:, 1]
            self.assertGreaterEqual(np.abs(closing).max(), cos_tol)
            self.assertLessEqual(abs(pose.translation[np.abs(closing).argmax()]), 0.003)

    def test_sparse_cloud_has_no_grasps(self):
        points = self.cloud.points[:10]
        cloud = grasp_model.ObjectCloud(points, self.cloud.normals[:10])
        with self.assertRaises(NoGraspsFound):
            grasp_model.sample_antipodal_grasps(cloud, self.gripper, count=10)

    def test_normals_must_be_unit(self):
        with self.assertRaises(ValidationFailure):
            grasp_model.ObjectCloud(np.zeros((2, 3)), np.ones((2, 3)))


class NegativeTests(SimpleTestCase):
    def setUp(self):
        self.cloud = box_cloud()
        self.gripper = GripperSpec()
        self.positives = side_grasps()

    def test_zero_noise_is_degenerate(self):
        config = GraspTrainingConfig(sigma_translation=0.0, sigma_rotation=0.0)
        with self.assertRaises(DegenerateNoise):
            grasp_model.make_negatives(self.positives, self.cloud, self.gripper, config, n_hard=5, n_soft=0)

    def test_default_noise_mostly_breaks_grasps(self):
        config = GraspTrainingConfig()
        with self.assertLogs('jfto_app.grasp_model', level='INFO') as logs:
            hard, _ = grasp_model.make_negatives(self.positives, self.cloud, self.gripper, config, seed=0, n_hard=300, n_soft=0)
        n_hard, attempts = logs.records[-1].args
        self.assertEqual(n_hard, len(hard))
        self.assertGreaterEqual(n_hard / attempts, 0.8)

    def test_negatives_fail_check_and_stay_near_object(self):
        config = GraspTrainingConfig()
        hard, soft = grasp_model.make_negatives(self.positives, self.cloud, self.gripper, config, seed=1, n_hard=20, n_soft=30)
        self.assertEqual((len(hard), len(soft)), (20, 30))
        lo, hi = self.cloud.bounds()
        half = 0.5 * (hi - lo) * config.soft_inflation
        for pose in hard + soft:
            self.assertFalse(grasp_model.antipodal_check(pose, self.cloud, self.gripper))
        for pose in soft:
            self.assertTrue(np.all(np.abs(pose.translation - 0.5 * (lo + hi)) <= half + 1e-12))

    def test_needs_positives(self):
        with self.assertRaises(NoGraspsFound):
            grasp_model.make_negatives([], self.cloud, self.gripper)


class FourierTests(SimpleTestCase):
    def test_zero_input(self):
        features = grasp_model.fourier_features(np.zeros(6), 3)[0].reshape(3, 12)
        np.testing.assert_array_equal(features[:, :6], 0.0)
        np.testing.assert_array_equal(features[:, 6:], 1.0)

    def test_hand_evaluated_entry(self):
        pose = se3.Pose(translation=[0.5, 0.0, 0.0])
        encoded = grasp_model.fourier_encode(pose, 1)
        self.assertAlmostEqual(encoded[0], 1.0, places=12)
        self.assertAlmostEqual(encoded[6], 0.0, places=12)

    def test_encoding_length(self):
        for k in (1, 4, 8):
            self.assertEqual(grasp_model.fourier_encode(se3.Pose(), k).shape, (12 * k,))

    def test_jacobian_matches_finite_differences(self):
        u = np.random.default_rng(0).uniform(-0.9, 0.9, size=(3, 6))
        jac = grasp_model.fourier_features_jacobian(u, 3)
        eps = 1e-6
        for d in range(6):
            step = np.zeros(6)
            step[d] = eps
            numeric = (grasp_model.fourier_features(u + step, 3) - grasp_model.fourier_features(u - step, 3)) / (2 * eps)
            np.testing.assert_allclose(jac[:, :, d], numeric, atol=1e-6)

    def test_bounds_clip_and_mask(self):
        bounds = grasp_model.EncodingBounds.unit()
        u, inside = bounds.normalize(np.array([[2.0, -0.5, 0.0, 0.0, -3.0, 1.0]]))
        np.testing.assert_array_equal(u, [[1.0, -0.5, 0.0, 0.0, -1.0, 1.0]])
        np.testing.assert_array_equal(inside, [[False, True, True, True, False, True]])


class ClassifierTests(SimpleTestCase):
    config = GraspTrainingConfig(steps=400, batch=64, widths_hidden=(32,), lr=5e-3)

    def toy_set(self, seed=0):
        rng = np.random.default_rng(seed)

        def poses(lo, hi, count):
            return tuple(
                se3.Pose.from_rotvec(rng.normal(scale=0.05, size=3), [rng.uniform(lo, hi), *rng.normal(scale=0.002, size=2)])
                for _ in range(count)
            )

        return grasp_model.GraspCandidateSet(poses(0.005, 0.02, 60), poses(-0.02, -0.005, 60))

    def bounds(self):
        return grasp_model.EncodingBounds(
            np.array([-0.05, -0.05, -0.05, -np.pi, -np.pi, -np.pi]),
            np.array([0.05, 0.05, 0.05, np.pi, np.pi, np.pi]),
        )

    def test_separable_set(self):
        _, auc = grasp_model.train_classifier(self.toy_set(), 2, self.bounds(), self.config, seed=0)
        self.assertGreaterEqual(auc, 0.99)

    def test_flipped_labels(self):
        cands = self.toy_set()
        flipped = grasp_model.GraspCandidateSet(cands.hard, cands.positives)
        net, _ = grasp_model.train_classifier(flipped, 2, self.bounds(), self.config, seed=0)
        report = grasp_model.evaluate_classifier(net, cands, 2, self.bounds())
        self.assertLessEqual(report['auc'], 0.10)

    def test_needs_both_classes(self):
        cands = grasp_model.GraspCandidateSet(self.toy_set().positives)
        with self.assertRaises(ValidationFailure):
            grasp_model.train_classifier(cands, 2, self.bounds(), self.config)

    def test_roc_auc(self):
        self.assertEqual(grasp_model.roc_auc([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]), 1.0)
        self.assertEqual(grasp_model.roc_auc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]), 0.5)

    def test_split_keeps_every_candidate(self):
        cands = self.toy_set()
        train, test = grasp_model.split_candidates(cands, 0.3, seed=2)
        self.assertEqual(len(train.positives) + len(test.positives), 60)
        self.assertEqual(len(test.hard), 18)


class ScoreTests(SimpleTestCase):
    def setUp(self):
        self.human = tuple(side_grasps())
        self.bounds = grasp_model.EncodingBounds.around_cloud(box_cloud())

    def scorer(self, net, lam=0.5):
        return grasp_model.GraspScorer(net, 2, self.bounds, self.human, lam)

    def test_human_grasp_with_saturated_classifier(self):
        scorer = self.scorer(saturated_classifier(2))
        self.assertAlmostEqual(grasp_model.grasp_score(scorer, self.human[0]), 1.0, places=9)

    def test_zero_weight_is_feasibility_only(self):
        net = Mlp.initialize((24, 8, 1), np.random.default_rng(0))
        scorer = self.scorer(net, lam=0.0)
        pose = se3.Pose.from_rotvec([0.1, 0.0, 0.2], [0.01, 0.0, 0.0])
        chart = se3.log_se3(pose)[None]
        self.assertAlmostEqual(grasp_model.grasp_score(scorer, pose), grasp_model.feasibility_charts(scorer, chart)[0])

    def test_equidistant_pair_differs_by_feasibility(self):
        net = Mlp.initialize((24, 8, 1), np.random.default_rng(1))
        scorer = grasp_model.GraspScorer(net, 2, self.bounds, (se3.Pose(),), 0.7)
        a, b = se3.Pose(translation=[0.01, 0.0, 0.0]), se3.Pose(translation=[-0.01, 0.0, 0.0])
        feas = grasp_model.feasibility_charts(scorer, np.array([se3.log_se3(a), se3.log_se3(b)]))
        diff = grasp_model.grasp_score(scorer, a) - grasp_model.grasp_score(scorer, b)
        self.assertAlmostEqual(diff, feas[0] - feas[1], places=12)

    def test_empty_human_set(self):
        scorer = grasp_model.GraspScorer(saturated_classifier(2), 2, self.bounds, (), 0.5)
        with self.assertRaises(EmptyDemoGrasps):
            grasp_model.grasp_score(scorer, se3.Pose())

    def test_analytic_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        net = Mlp.initialize((24, 16, 1), rng)
        scorer = self.scorer(net, lam=0.3)
        charts = np.column_stack([rng.uniform(-0.02, 0.02, size=(10, 3)), rng.uniform(-1.0, 1.0, size=(10, 3))])
        analytic = grasp_model.grasp_score_grad_charts(scorer, charts)
        eps = 1e-6
        numeric = np.column_stack([
            (grasp_model.grasp_score_charts(scorer, charts + eps * e) - grasp_model.grasp_score_charts(scorer, charts - eps * e)) / (2 * eps)
            for e in np.eye(6)
        ])
        rel = np.linalg.norm(analytic - numeric, axis=1) / np.maximum(np.linalg.norm(numeric, axis=1), 1e-8)
        self.assertLess(rel.max(), 1e-2)

    def test_checkpoint_round_trip(self):
        net = Mlp.initialize((24, 8, 1), np.random.default_rng(3))
        scorer = self.scorer(net)
        again = grasp_model.GraspScorer.from_dict(scorer.to_dict())
        pose = se3.Pose.from_rotvec([0.2, -0.1, 0.0], [0.005, 0.0, 0.01])
        self.assertEqual(grasp_model.grasp_score(again, pose), grasp_model.grasp_score(scorer, pose))
        self.assertEqual(len(again.human_grasps), 3)

    def test_checkpoint_input_width_checked(self):
        payload = self.scorer(saturated_classifier(2)).to_dict()
        payload['fourier_k'] = 3
        with self.assertRaises(ValidationFailure):
            grasp_model.GraspScorer.from_dict(payload)


@tag('slow')
class BoxClassifierTests(SimpleTestCase):
    def test_box_fixture_auc_and_ordering(self):
        cloud = box_cloud()
        gripper = GripperSpec()
        config = GraspTrainingConfig()
        positives = grasp_model.sample_antipodal_grasps(cloud, gripper, count=200, seed=0)
        hard, soft = grasp_model.make_negatives(positives, cloud, gripper, config, seed=1, n_hard=300, n_soft=300)
        cands = grasp_model.GraspCandidateSet(tuple(positives), tuple(hard), tuple(soft))
        train, test = grasp_model.split_candidates(cands, 0.3, seed=0)
        bounds = grasp_model.EncodingBounds.around_cloud(cloud, inflation=config.soft_inflation + 0.5)
        net, _ = grasp_model.train_classifier(train, config.fourier_k, bounds, config, seed=0)
        report = grasp_model.evaluate_classifier(net, test, config.fourier_k, bounds)
        self.assertGreaterEqual(report['auc'], 0.90)
        self.assertGreater(report['mean_positive'], report['mean_hard'])
        self.assertGreater(report['mean_hard'], report['mean_soft'])
