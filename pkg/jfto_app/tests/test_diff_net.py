import numpy as np
from django.test import SimpleTestCase

from jfto_app.diff_net import AdamState, Mlp, adam_step, bce_with_logits_loss, grad_params, mse_loss, sigmoid
from jfto_app.exceptions import ShapeMismatch, ValidationFailure


def numeric_param_grads(net, loss_fn, inputs, eps=1e-6):
    params = net.parameters()
    grads = []
    for index, p in enumerate(params):
        grad = np.zeros_like(p)
        for flat in range(p.size):
            shifted = []
            for sign in (1.0, -1.0):
                moved = [q.copy() for q in params]
                moved[index].flat[flat] += sign * eps
                shifted.append(loss_fn(net.with_parameters(moved).forward(inputs))[0])
            grad.flat[flat] = (shifted[0] - shifted[1]) / (2.0 * eps)
        grads.append(grad)
    return grads


class ForwardTests(SimpleTestCase):
    def test_zero_net_returns_last_bias(self):
        net = Mlp.zeros((3, 5, 2))
        biases = (np.zeros(5), np.array([0.7, -1.2]))
        net = Mlp(net.widths, net.weights, biases)
        np.testing.assert_array_equal(net.forward(np.array([10.0, -3.0, 2.0])), [0.7, -1.2])

    def test_identity_layer(self):
        net = Mlp((3, 3), (np.eye(3),), (np.zeros(3),))
        x = np.array([0.1, -2.0, 5.0])
        np.testing.assert_array_equal(net.forward(x), x)
        np.testing.assert_array_equal(net.jacobian_input(x), np.eye(3))

    def test_finite_for_large_inputs(self):
        net = Mlp.initialize((4, 32, 32, 3), np.random.default_rng(0))
        x = np.random.default_rng(1).uniform(-1e3, 1e3, size=(50, 4))
        self.assertTrue(np.all(np.isfinite(net.forward(x))))

    def test_input_width_checked(self):
        net = Mlp.zeros((3, 2))
        with self.assertRaises(ShapeMismatch):
            net.forward(np.zeros(4))

    def test_checkpoint_round_trip(self):
        net = Mlp.initialize((4, 8, 2), np.random.default_rng(2))
        again = Mlp.from_dict(net.to_dict())
        x = np.random.default_rng(3).normal(size=(5, 4))
        np.testing.assert_array_equal(again.forward(x), net.forward(x))

    def test_checkpoint_with_wrong_weight_count(self):
        payload = Mlp.zeros((2, 3)).to_dict()
        payload['weights'][0] = payload['weights'][0][:-1]
        with self.assertRaises(ValidationFailure):
            Mlp.from_dict(payload)


class GradientTests(SimpleTestCase):
    def test_linear_jacobian_is_weight(self):
        w = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        net = Mlp((3, 2), (w,), (np.zeros(2),), activation='identity')
        np.testing.assert_array_equal(net.jacobian_input(np.ones(3)), w.T)

    def test_param_gradients_match_finite_differences(self):
        rng = np.random.default_rng(4)
        for trial in range(5):
            net = Mlp.initialize((3, 6, 5, 2), rng)
            inputs = rng.normal(size=(7, 3))
            loss_fn = mse_loss(rng.normal(size=(7, 2)))
            _, grads = grad_params(net, loss_fn, inputs)
            for analytic, numeric in zip(grads, numeric_param_grads(net, loss_fn, inputs)):
                scale = max(np.abs(numeric).max(), 1e-8)
                self.assertLess(np.abs(analytic - numeric).max() / scale, 1e-4)

    def test_input_jacobian_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        net = Mlp.initialize((4, 16, 3), rng)
        x = rng.normal(size=4)
        eps = 1e-6
        numeric = np.column_stack([
            (net.forward(x + eps * e) - net.forward(x - eps * e)) / (2.0 * eps) for e in np.eye(4)
        ])
        np.testing.assert_allclose(net.jacobian_input(x), numeric, atol=1e-8)

    def test_trace_of_square_block(self):
        rng = np.random.default_rng(6)
        net = Mlp.initialize((5, 12, 3), rng)
        x = rng.normal(size=(4, 5))
        _, trace = net.forward_with_trace(x, np.arange(3))
        jac = net.jacobian_input(x)
        np.testing.assert_allclose(trace, np.trace(jac[:, :, :3], axis1=1, axis2=2), atol=1e-12)

    def test_zero_weights_give_no_weight_gradient(self):
        net = Mlp.zeros((3, 4, 2))

        def half_square(outputs):
            return float(0.5 * (outputs ** 2).sum()), outputs

        _, grads = grad_params(net, half_square, np.ones((2, 3)))
        for grad in grads[0::2]:
            np.testing.assert_array_equal(grad, 0.0)

    def test_bce_gradient(self):
        logits = np.array([[0.3], [-1.2], [2.0]])
        labels = np.array([1.0, 0.0, 1.0])
        loss, grad = bce_with_logits_loss(labels)(logits)
        expected = -np.mean(labels * np.log(sigmoid(logits[:, 0])) + (1 - labels) * np.log(1 - sigmoid(logits[:, 0])))
        self.assertAlmostEqual(loss, expected, places=12)
        np.testing.assert_allclose(grad[:, 0], (sigmoid(logits[:, 0]) - labels) / 3)


class AdamTests(SimpleTestCase):
    def test_zero_gradient_keeps_parameters(self):
        params = [np.array([1.0, -2.0])]
        state = AdamState.for_params(params, lr=0.1)
        new_params, state = adam_step(params, [np.zeros(2)], state)
        np.testing.assert_array_equal(new_params[0], params[0])
        self.assertEqual(state.step, 1)

    def test_first_step_moves_by_learning_rate(self):
        params = [np.array([0.0, 0.0])]
        state = AdamState.for_params(params, lr=0.01)
        new_params, _ = adam_step(params, [np.array([3.0, -0.5])], state)
        np.testing.assert_allclose(new_params[0], [-0.01, 0.01], rtol=1e-6)

    def test_inputs_untouched_and_deterministic(self):
        params = [np.array([0.5, 0.25])]
        grads = [np.array([0.1, -0.3])]
        state = AdamState.for_params(params, lr=0.05)
        first, _ = adam_step(params, grads, state)
        second, _ = adam_step(params, grads, state)
        np.testing.assert_array_equal(first[0], second[0])
        np.testing.assert_array_equal(params[0], [0.5, 0.25])
        np.testing.assert_array_equal(state.m[0], 0.0)

    def test_converges_on_quadratic_regression(self):
        xs = np.linspace(-1.0, 1.0, 10)
        inputs = np.column_stack([xs, xs ** 2])
        targets = (3.0 * xs ** 2 - xs + 0.5)[:, None]
        net = Mlp.zeros((2, 1), activation='identity')
        params = net.parameters()
        state = AdamState.for_params(params, lr=0.01)
        loss = np.inf
        for _ in range(5000):
            loss, grads = grad_params(net, mse_loss(targets), inputs)
            params, state = adam_step(params, grads, state)
            net = net.with_parameters(params)
        self.assertLess(loss, 1e-6)

    def test_shape_mismatch(self):
        params = [np.zeros(2)]
        with self.assertRaises(ShapeMismatch):
            adam_step(params, [np.zeros(3)], AdamState.for_params(params))
