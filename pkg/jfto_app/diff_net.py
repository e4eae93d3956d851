"""Feed-forward tanh network with exact reverse-mode parameter gradients and
forward-mode input Jacobians, plus a functional Adam optimizer.

Weights are stored as ``(fan_in, fan_out)`` matrices so a batch ``X`` of
shape ``(N, n)`` maps through ``X @ W + b``.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import ShapeMismatch, ValidationFailure

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 'jfto-mlp/1'

ACTIVATIONS = {
    'tanh': (np.tanh, lambda post: 1.0 - post * post),
    'identity': (lambda pre: pre, lambda post: np.ones_like(post)),
}


@dataclass(frozen=True, eq=False)
class Mlp:
    widths: tuple
    weights: tuple
    biases: tuple
    activation: str = 'tanh'

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        if len(widths) < 2 or any(w <= 0 for w in widths):
            raise ShapeMismatch(f'layer widths must be >= 2 positive integers, got {widths}')
        if self.activation not in ACTIVATIONS:
            raise ShapeMismatch(f'unknown activation {self.activation!r}')
        weights = tuple(np.asarray(w, dtype=float) for w in self.weights)
        biases = tuple(np.asarray(b, dtype=float) for b in self.biases)
        if len(weights) != len(widths) - 1 or len(biases) != len(widths) - 1:
            raise ShapeMismatch('one weight matrix and bias per layer transition')
        for index, (w, b) in enumerate(zip(weights, biases)):
            expected = (widths[index], widths[index + 1])
            if w.shape != expected or b.shape != (widths[index + 1],):
                raise ShapeMismatch(f'layer {index}: expected {expected}, got {w.shape} / {b.shape}')
        object.__setattr__(self, 'widths', widths)
        object.__setattr__(self, 'weights', weights)
        object.__setattr__(self, 'biases', biases)

    @classmethod
    def initialize(cls, widths, rng, activation='tanh'):
        """Scaled-uniform fan-in initialization from a seeded ``numpy`` Generator."""
        weights, biases = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(tuple(widths), tuple(weights), tuple(biases), activation)

    @classmethod
    def zeros(cls, widths, activation='tanh'):
        return cls(
            tuple(widths),
            tuple(np.zeros((a, b)) for a, b in zip(widths[:-1], widths[1:])),
            tuple(np.zeros(b) for b in widths[1:]),
            activation,
        )

    @property
    def n_inputs(self):
        return self.widths[0]

    @property
    def n_outputs(self):
        return self.widths[-1]

    def parameters(self):
        """Flat list ``[W0, b0, W1, b1, ...]``."""
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params

    def with_parameters(self, params):
        return replace(self, weights=tuple(params[0::2]), biases=tuple(params[1::2]))

    def _check_input(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n_inputs:
            raise ShapeMismatch(f'input width {x.shape[-1]} does not match network input {self.n_inputs}')
        return x

    def forward(self, x):
        x = self._check_input(x)
        squeeze = x.ndim == 1
        y, _ = self.forward_cached(np.atleast_2d(x))
        return y[0] if squeeze else y

    def forward_cached(self, x):
        act, _ = ACTIVATIONS[self.activation]
        activations = [x]
        h = x
        last = len(self.weights) - 1
        for index, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if index < last:
                h = act(h)
            activations.append(h)
        return h, activations

    def backward(self, activations, grad_out):
        """Reverse-mode pass; returns ``(param_grads, grad_input)``."""
        _, dact = ACTIVATIONS[self.activation]
        grads = [None] * (2 * len(self.weights))
        delta = np.asarray(grad_out, dtype=float)
        for index in reversed(range(len(self.weights))):
            grads[2 * index] = activations[index].T @ delta
            grads[2 * index + 1] = delta.sum(axis=0)
            delta = delta @ self.weights[index].T
            if index > 0:
                delta = delta * dact(activations[index])
        return grads, delta

    def _forward_tangent(self, x, columns):
        act, dact = ACTIVATIONS[self.activation]
        # tangents: (N, k, width), one per selected input direction
        tangent = np.broadcast_to(np.eye(self.n_inputs)[columns], (x.shape[0], len(columns), self.n_inputs))
        h = x
        last = len(self.weights) - 1
        for index, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            tangent = tangent @ w
            if index < last:
                h = act(h)
                tangent = tangent * dact(h)[:, None, :]
        return h, tangent

    def jacobian_input(self, x, columns=None):
        """Forward-mode input Jacobian, ``(m, n)`` for one input or ``(N, m, n)`` for a batch.

        ``columns`` restricts the tangent directions to a subset of input indices.
        """
        x = self._check_input(x)
        squeeze = x.ndim == 1
        columns = np.arange(self.n_inputs) if columns is None else np.asarray(columns)
        _, tangent = self._forward_tangent(np.atleast_2d(x), columns)
        jac = np.swapaxes(tangent, 1, 2)
        return jac[0] if squeeze else jac

    def forward_with_trace(self, x, columns):
        """Outputs and the trace of the square Jacobian block ``d y[columns] / d x[columns]``.

        Output ``i`` is paired with input ``columns[i]``; used for the flow divergence.
        """
        columns = np.asarray(columns)
        h, tangent = self._forward_tangent(self._check_input(np.atleast_2d(x)), columns)
        trace = np.einsum('nkk->n', tangent[:, :, :len(columns)])
        return h, trace

    def to_dict(self):
        return {
            'version': CHECKPOINT_VERSION,
            'widths': list(self.widths),
            'activation': self.activation,
            'weights': [w.ravel().tolist() for w in self.weights],
            'biases': [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, payload):
        from .serializers import MlpCheckpointSerializer, load_payload

        data = load_payload(MlpCheckpointSerializer, payload)
        widths = data['widths']
        weights = []
        for index, flat in enumerate(data['weights']):
            expected = widths[index] * widths[index + 1]
            if len(flat) != expected:
                raise ValidationFailure(
                    f'weights[{index}]: expected {expected} values, got {len(flat)}',
                    field_path=f'weights[{index}]',
                )
            weights.append(np.asarray(flat, dtype=float).reshape(widths[index], widths[index + 1]))
        biases = [np.asarray(b, dtype=float) for b in data['biases']]
        try:
            return cls(tuple(widths), tuple(weights), tuple(biases), data['activation'])
        except ShapeMismatch as exc:
            raise ValidationFailure(str(exc), field_path='biases') from exc


def grad_params(net, loss_fn, inputs):
    """Loss and parameter gradients of a scalar ``loss_fn``.

    ``loss_fn(outputs)`` returns ``(loss, d loss / d outputs)``.
    """
    outputs, activations = net.forward_cached(net._check_input(np.atleast_2d(inputs)))
    loss, grad_out = loss_fn(outputs)
    grads, _ = net.backward(activations, grad_out)
    return loss, grads


def mse_loss(targets):
    """Mean over the batch of the squared error summed over output dims."""
    def loss_fn(outputs):
        residual = outputs - targets
        n = outputs.shape[0]
        return float((residual ** 2).sum() / n), 2.0 * residual / n
    return loss_fn


def bce_with_logits_loss(labels):
    """Mean binary cross-entropy on raw logits (one output column)."""
    labels = np.asarray(labels, dtype=float).reshape(-1, 1)

    def loss_fn(logits):
        n = logits.shape[0]
        # log(1 + e^z) - y z, numerically stable
        loss = np.logaddexp(0.0, logits) - labels * logits
        return float(loss.sum() / n), (sigmoid(logits) - labels) / n
    return loss_fn


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, **kwargs):
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            **kwargs,
        )


def adam_step(params, grads, state):
    """One Adam descent update; returns ``(new_params, new_state)``.

    Inputs are left untouched so two identical runs stay bitwise identical.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeMismatch('params, grads and moments must have equal length')
    step = state.step + 1
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeMismatch(f'parameter {p.shape} vs gradient {np.shape(g)}')
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1 ** step)
        v_hat = v / (1.0 - state.beta2 ** step)
        new_params.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
        new_m.append(m)
        new_v.append(v)
    return new_params, replace(state, step=step, m=new_m, v=new_v)
