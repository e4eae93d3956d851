import numpy as np
from django.test import SimpleTestCase
from scipy.spatial.transform import Rotation

from jfto_app import se3
from jfto_app.exceptions import ChartSingularity


def rot_z(angle, translation=(0.0, 0.0, 0.0)):
    return se3.Pose.from_rotvec([0.0, 0.0, angle], translation)


class PoseAlgebraTests(SimpleTestCase):
    def setUp(self):
        self.p = se3.Pose.from_rotvec([0.3, -0.2, 0.5], [0.1, 0.2, -0.3])

    def test_identity_composition(self):
        self.assertTrue(se3.compose(se3.Pose.identity(), self.p).isclose(self.p))
        self.assertTrue(se3.compose(self.p, se3.inverse(self.p)).isclose(se3.Pose.identity()))

    def test_compose_matches_matrix_product(self):
        a = rot_z(np.pi / 2, (1.0, 0.0, 0.0))
        b = rot_z(np.pi / 2)
        result = se3.compose(a, b)
        np.testing.assert_allclose(result.as_matrix(), a.as_matrix() @ b.as_matrix(), atol=1e-12)
        np.testing.assert_allclose(result.translation, [1.0, 0.0, 0.0], atol=1e-12)
        self.assertAlmostEqual(result.angle(), np.pi, places=9)

    def test_double_cover_is_canonical(self):
        q = self.p.rotation
        flipped = se3.Pose(-q, self.p.translation)
        np.testing.assert_array_equal(flipped.rotation, self.p.rotation)
        self.assertEqual(se3.rotation_angle(q, -q), 0.0)

    def test_array7_round_trip(self):
        again = se3.Pose.from_array7(self.p.to_array7())
        np.testing.assert_array_equal(again.to_array7(), self.p.to_array7())

    def test_from_matrix(self):
        again = se3.Pose.from_matrix(self.p.as_matrix())
        self.assertTrue(again.isclose(self.p, atol=1e-12))


class ExpLogTests(SimpleTestCase):
    def test_exp_zero_is_identity(self):
        self.assertTrue(se3.exp_se3(np.zeros(6)).isclose(se3.Pose.identity()))

    def test_exp_quarter_turn_about_z(self):
        pose = se3.exp_se3([0.0, 0.0, 0.0, 0.0, 0.0, np.pi / 2])
        np.testing.assert_allclose(pose.rotation, [np.cos(np.pi / 4), 0.0, 0.0, np.sin(np.pi / 4)], atol=1e-12)
        expected = Rotation.from_rotvec([0.0, 0.0, np.pi / 2]).as_matrix()
        np.testing.assert_allclose(pose.rotation_matrix(), expected, atol=1e-12)

    def test_log_inverts_exp(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            axis = rng.normal(size=3)
            xi = np.concatenate([rng.normal(size=3), axis / np.linalg.norm(axis) * rng.uniform(0.0, 3.0)])
            np.testing.assert_allclose(se3.log_se3(se3.exp_se3(xi)), xi, atol=1e-9)

    def test_small_angle_branch(self):
        xi = np.array([0.0, 0.0, 0.0, 1e-8, -2e-8, 3e-8])
        np.testing.assert_allclose(se3.log_se3(se3.exp_se3(xi)), xi, atol=1e-15)

    def test_log_at_half_turn_is_singular(self):
        with self.assertRaises(ChartSingularity):
            se3.log_se3(rot_z(np.pi))

    def test_chart_relative_to_center(self):
        center = rot_z(2.0).rotation
        pose = rot_z(2.5, (0.1, 0.0, 0.0))
        vec = se3.chart(pose, center)
        np.testing.assert_allclose(vec, [0.1, 0.0, 0.0, 0.0, 0.0, 0.5], atol=1e-12)
        self.assertTrue(se3.from_chart(vec, center).isclose(pose))

    def test_batched_charts_match_single(self):
        poses = [se3.Pose.from_rotvec([0.1 * i, -0.2, 0.3], [i, 0.0, 1.0]) for i in range(4)]
        batched = se3.charts_from_matrices(np.array([p.as_matrix() for p in poses]))
        np.testing.assert_allclose(batched, [se3.log_se3(p) for p in poses], atol=1e-12)

    def test_left_jacobian_inverse_batched(self):
        rotvecs = np.array([[0.0, 0.0, 0.0], [0.4, -0.1, 0.2], [1e-9, 0.0, 0.0], [2.0, 1.0, -0.5]])
        batched = se3.left_jacobians_inverse(rotvecs)
        for vec, jac in zip(rotvecs, batched):
            np.testing.assert_allclose(jac, se3.left_jacobian_inverse(vec), atol=1e-12)


class DistanceTests(SimpleTestCase):
    def test_zero_for_same_pose(self):
        p = se3.Pose.from_rotvec([0.1, 0.2, 0.3], [1.0, 2.0, 3.0])
        self.assertEqual(se3.pose_distance(p, p, se3.DistanceWeights(0.3)), 0.0)

    def test_translation_only(self):
        a = se3.Pose(translation=[0.0, 0.0, 0.0])
        b = se3.Pose(translation=[3.0, 4.0, 0.0])
        self.assertAlmostEqual(se3.pose_distance(a, b, se3.DistanceWeights(1.0)), 5.0, places=12)

    def test_weighted_mix(self):
        a = se3.Pose()
        b = se3.Pose.from_rotvec([0.2, 0.1, 0.0], [1.0, 0.0, 0.0])
        self.assertAlmostEqual(se3.pose_distance(a, b, se3.DistanceWeights(0.5)), 0.65, places=9)

    def test_weight_range(self):
        with self.assertRaises(ValueError):
            se3.DistanceWeights(1.5)

    def test_rotation_angle(self):
        self.assertAlmostEqual(se3.rotation_angle(se3.IDENTITY_QUAT, rot_z(np.pi / 2).rotation), np.pi / 2, places=12)

    def test_karcher_mean_of_symmetric_pair(self):
        quats = np.array([rot_z(0.4).rotation, rot_z(-0.4).rotation])
        np.testing.assert_allclose(se3.karcher_mean(quats), se3.IDENTITY_QUAT, atol=1e-9)
