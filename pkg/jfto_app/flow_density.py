"""Flow matching over the SE(3) chart.

Each demonstration timestep ``t`` gets its own pose distribution. A single
velocity network conditioned on ``t / T`` transports a standard Gaussian to
all of them. Poses enter through the per-timestep chart (translation, rotation
vector relative to the timestep's chart center), are standardized with the
timestep mean and a pooled per-dimension scale, and the log-density is
recovered with the instantaneous change of variables integrated backward
from flow time 1 to 0 with fixed-step RK4.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np

from . import se3
from .conf import FlowTrainingConfig
from .diff_net import AdamState, Mlp, adam_step, grad_params, mse_loss
from .exceptions import ChartSingularity, DegenerateDemos, EmptyDemoSet, ValidationFailure

logger = logging.getLogger(__name__)

CHART_DIMS = 6
CHART_COLUMNS = np.arange(CHART_DIMS)
CHECKPOINT_VERSION = 'jfto-flow/1'
LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class DemoSet:
    """``n`` demonstrated object trajectories of ``T + 1`` poses each."""

    demos: tuple
    centers: tuple = None

    def __post_init__(self):
        demos = tuple(tuple(traj) for traj in self.demos)
        if not demos:
            raise EmptyDemoSet('a demo set needs at least one trajectory')
        lengths = {len(traj) for traj in demos}
        if len(lengths) != 1:
            raise ValidationFailure(f'demos have mixed lengths {sorted(lengths)}', field_path='demos')
        object.__setattr__(self, 'demos', demos)
        if self.centers is not None:
            object.__setattr__(self, 'centers', tuple(np.asarray(c, dtype=float) for c in self.centers))

    @property
    def n(self):
        return len(self.demos)

    @property
    def horizon(self):
        return len(self.demos[0]) - 1

    def poses_at(self, t):
        return [traj[t] for traj in self.demos]

    def recentered(self, recenter_angle=2.5):
        """Attach per-timestep chart centers.

        The center is identity unless some demo rotation at that timestep lies
        farther than ``recenter_angle`` from identity; then it is the Karcher mean.
        """
        centers = []
        for t in range(self.horizon + 1):
            poses = self.poses_at(t)
            if max(p.angle() for p in poses) > recenter_angle:
                center = se3.karcher_mean(np.array([p.rotation for p in poses]))
                logger.info('timestep %d: chart re-centered at the Karcher mean', t)
            else:
                center = se3.IDENTITY_QUAT.copy()
            centers.append(center)
        return replace(self, centers=tuple(centers))

    def charts(self):
        """``(n, T + 1, 6)`` chart coordinates; requires centers."""
        if self.centers is None:
            raise ValueError('call recentered() before charting a demo set')
        return np.array([
            [se3.chart(pose, self.centers[t]) for t, pose in enumerate(traj)]
            for traj in self.demos
        ])


@dataclass(frozen=True, eq=False)
class FlowDensityModel:
    """Trained velocity field plus the chart metadata it was trained in.

    ``mean`` is ``(T + 1, 6)``, ``scale`` is ``(6,)``, ``centers`` are
    ``T + 1`` chart-center quaternions.
    """

    net: Mlp
    horizon: int
    centers: tuple
    mean: np.ndarray
    scale: np.ndarray
    ode_steps: int = 40
    final_loss: float = float('nan')

    def __post_init__(self):
        object.__setattr__(self, 'mean', np.asarray(self.mean, dtype=float).reshape(self.horizon + 1, CHART_DIMS))
        object.__setattr__(self, 'scale', np.asarray(self.scale, dtype=float).reshape(CHART_DIMS))
        object.__setattr__(self, 'centers', tuple(np.asarray(c, dtype=float) for c in self.centers))

    @classmethod
    def untrained(cls, horizon, mean=None, scale=None, widths=(8, 64, 64, 6), ode_steps=40):
        """Zero-weight flow: the density is the base Gaussian itself."""
        mean = np.zeros((horizon + 1, CHART_DIMS)) if mean is None else mean
        scale = np.ones(CHART_DIMS) if scale is None else scale
        centers = tuple(se3.IDENTITY_QUAT.copy() for _ in range(horizon + 1))
        return cls(Mlp.zeros(widths), horizon, centers, mean, scale, ode_steps)

    def center_matrices(self):
        return np.array([se3.quat_to_matrix(c) for c in self.centers])

    def phase(self, t):
        return np.asarray(t, dtype=float) / max(self.horizon, 1)

    def chart(self, pose, t):
        return se3.chart(pose, self.centers[t])

    def log_scale_sum(self):
        return float(np.log(self.scale).sum())

    def to_dict(self):
        return {
            'version': CHECKPOINT_VERSION,
            'net': self.net.to_dict(),
            'horizon': self.horizon,
            'centers': [c.tolist() for c in self.centers],
            'mean': self.mean.tolist(),
            'scale': self.scale.tolist(),
            'ode_steps': self.ode_steps,
            'final_loss': None if np.isnan(self.final_loss) else self.final_loss,
        }

    @classmethod
    def from_dict(cls, payload):
        from .serializers import FlowCheckpointSerializer, load_payload

        data = load_payload(FlowCheckpointSerializer, payload)
        horizon = data['horizon']
        if len(data['centers']) != horizon + 1 or len(data['mean']) != horizon + 1:
            raise ValidationFailure('centers and mean need horizon + 1 rows', field_path='centers')
        final_loss = data.get('final_loss')
        return cls(
            net=Mlp.from_dict(data['net']),
            horizon=horizon,
            centers=tuple(np.asarray(c) for c in data['centers']),
            mean=np.asarray(data['mean']),
            scale=np.asarray(data['scale']),
            ode_steps=data['ode_steps'],
            final_loss=float('nan') if final_loss is None else final_loss,
        )


def _velocity(net, z, tau, phase):
    inputs = np.column_stack([z, np.full(len(z), tau), phase])
    return net.forward(inputs)


def _velocity_and_divergence(net, z, tau, phase):
    inputs = np.column_stack([z, np.full(len(z), tau), phase])
    return net.forward_with_trace(inputs, CHART_COLUMNS)


def _standard_log_pdf(z):
    return -0.5 * (z * z).sum(axis=1) - 0.5 * CHART_DIMS * LOG_2PI


def train_flow(demos, config=None, seed=0):
    """Fit the velocity field by regressing onto straight-line chart velocities.

    Pairs ``x0 ~ N(0, I)`` with a standardized demo pose ``x1`` at a random
    timestep; the target for ``x_tau = (1 - tau) x0 + tau x1`` is ``x1 - x0``.
    """
    config = config or FlowTrainingConfig()
    if demos.n < 2:
        raise EmptyDemoSet(f'flow training needs at least 2 demos, got {demos.n}')
    if demos.horizon < 1:
        raise ValidationFailure('flow training needs horizon T >= 1', field_path='demos')
    if demos.centers is None:
        demos = demos.recentered(config.recenter_angle)

    charts = demos.charts()
    mean = charts.mean(axis=0)
    residual = charts - mean[None]
    per_step_spread = residual.std(axis=0).max(axis=1)
    for t in np.flatnonzero(per_step_spread < config.min_scale):
        logger.warning(DegenerateDemos(f'all demos coincide at timestep {t}; density will be sharply peaked').message)
    scale = np.maximum(residual.reshape(-1, CHART_DIMS).std(axis=0), config.min_scale)
    standardized = residual / scale

    rng = np.random.default_rng(seed)
    widths = tuple(config.widths)
    if widths[0] != CHART_DIMS + 2 or widths[-1] != CHART_DIMS:
        raise ValidationFailure(f'flow network must map 8 inputs to 6 outputs, got {widths}', field_path='widths')
    net = Mlp.initialize(widths, rng)
    params = net.parameters()
    state = AdamState.for_params(params, lr=config.lr)
    horizon = demos.horizon
    loss = float('nan')

    for step in range(config.steps):
        demo_index = rng.integers(0, demos.n, size=config.batch)
        timestep = rng.integers(0, horizon + 1, size=config.batch)
        x1 = standardized[demo_index, timestep]
        x0 = rng.standard_normal((config.batch, CHART_DIMS))
        tau = rng.uniform(0.0, 1.0, size=(config.batch, 1))
        x_tau = (1.0 - tau) * x0 + tau * x1
        inputs = np.column_stack([x_tau, tau, timestep / horizon])
        loss, grads = grad_params(net, mse_loss(x1 - x0), inputs)
        params, state = adam_step(params, grads, state)
        net = net.with_parameters(params)
        if step % 500 == 0 or step == config.steps - 1:
            logger.info('flow step %d/%d loss %.5f', step + 1, config.steps, loss)

    return FlowDensityModel(
        net=net,
        horizon=horizon,
        centers=demos.centers,
        mean=mean,
        scale=scale,
        ode_steps=config.ode_steps,
        final_loss=loss,
    )


def _transport(model, z, t, ode_steps=None):
    """Forward RK4 of base points ``z`` from tau = 0 to 1 at timestep ``t``."""
    steps = ode_steps or model.ode_steps
    phase = np.full(len(z), model.phase(t))
    h = 1.0 / steps
    for i in range(steps):
        tau = i * h
        k1 = _velocity(model.net, z, tau, phase)
        k2 = _velocity(model.net, z + 0.5 * h * k1, tau + 0.5 * h, phase)
        k3 = _velocity(model.net, z + 0.5 * h * k2, tau + 0.5 * h, phase)
        k4 = _velocity(model.net, z + h * k3, tau + h, phase)
        z = z + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return model.mean[t] + model.scale * z


def sample_charts(model, t, count, seed=0, ode_steps=None):
    """Forward RK4 from tau = 0 to 1; returns ``(count, 6)`` chart vectors."""
    rng = np.random.default_rng(seed)
    return _transport(model, rng.standard_normal((count, CHART_DIMS)), t, ode_steps)


def sample_trajectory_charts(model, count, seed=0, ode_steps=None):
    """``(count, T + 1, 6)`` chart trajectories.

    Each trajectory transports one base point through every timestep, so a
    trajectory stays with the demo mode its base point maps to.
    """
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((count, CHART_DIMS))
    return np.stack([_transport(model, z, t, ode_steps) for t in range(model.horizon + 1)], axis=1)


def wrap_chart(vec):
    """Same pose with the rotation vector reduced into the open ball of radius pi."""
    vec = np.array(vec, dtype=float)
    norm = np.linalg.norm(vec[3:])
    if norm >= np.pi:
        angle = np.mod(norm + np.pi, 2.0 * np.pi) - np.pi
        vec[3:] *= angle / norm
    return vec


def sample(model, t, count, seed=0):
    """Draw ``count`` poses from the timestep-``t`` distribution."""
    if not 0 <= t <= model.horizon:
        raise ValueError(f'timestep {t} outside 0..{model.horizon}')
    return [se3.from_chart(wrap_chart(vec), model.centers[t]) for vec in sample_charts(model, t, count, seed)]


def sample_trajectories(model, count, seed=0):
    """``count`` pose trajectories of ``T + 1`` poses, one base point each."""
    charts = sample_trajectory_charts(model, count, seed)
    return [
        [se3.from_chart(wrap_chart(vec), model.centers[t]) for t, vec in enumerate(traj)]
        for traj in charts
    ]


def log_density_charts(model, charts, timesteps, ode_steps=None):
    """Log-density of chart vectors ``(N, 6)`` at integer timesteps ``(N,)``.

    Integrates ``dz/dtau = v`` and ``da/dtau = div v`` backward from
    ``tau = 1`` (``a = 0``) to ``tau = 0``; then
    ``log p1(z1) = log p0(z0) + a(0)`` and the affine standardization adds
    ``-sum(log scale)``.
    """
    charts = np.atleast_2d(np.asarray(charts, dtype=float))
    timesteps = np.broadcast_to(np.asarray(timesteps, dtype=int), (len(charts),))
    if np.any(np.linalg.norm(charts[:, 3:], axis=1) >= np.pi - se3.SINGULAR_MARGIN):
        raise ChartSingularity('rotation vector outside the chart domain')
    steps = ode_steps or model.ode_steps
    z = (charts - model.mean[timesteps]) / model.scale
    phase = model.phase(timesteps)
    a = np.zeros(len(z))
    h = -1.0 / steps
    for i in range(steps):
        tau = 1.0 + i * h
        k1, d1 = _velocity_and_divergence(model.net, z, tau, phase)
        k2, d2 = _velocity_and_divergence(model.net, z + 0.5 * h * k1, tau + 0.5 * h, phase)
        k3, d3 = _velocity_and_divergence(model.net, z + 0.5 * h * k2, tau + 0.5 * h, phase)
        k4, d4 = _velocity_and_divergence(model.net, z + h * k3, tau + h, phase)
        z = z + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        a = a + h / 6.0 * (d1 + 2.0 * d2 + 2.0 * d3 + d4)
    return _standard_log_pdf(z) + a - model.log_scale_sum()


def log_density(model, x, t, ode_steps=None):
    """``f_den(x, t)``: log-density of pose ``x`` at timestep ``t``."""
    return float(log_density_charts(model, model.chart(x, t)[None], [t], ode_steps)[0])


def log_density_grad_charts(model, charts, timesteps, eps=1e-4, ode_steps=None):
    """Central-difference gradient w.r.t. the 6 chart coordinates, ``(N, 6)``.

    All ``12 N`` perturbed charts are evaluated in one batched integration.
    """
    charts = np.atleast_2d(np.asarray(charts, dtype=float))
    timesteps = np.broadcast_to(np.asarray(timesteps, dtype=int), (len(charts),))
    offsets = np.concatenate([np.eye(CHART_DIMS), -np.eye(CHART_DIMS)]) * eps
    perturbed = (charts[:, None, :] + offsets[None]).reshape(-1, CHART_DIMS)
    values = log_density_charts(model, perturbed, np.repeat(timesteps, 2 * CHART_DIMS), ode_steps)
    values = values.reshape(len(charts), 2, CHART_DIMS)
    return (values[:, 0] - values[:, 1]) / (2.0 * eps)


def log_density_grad(model, x, t, eps=1e-4, ode_steps=None):
    return log_density_grad_charts(model, model.chart(x, t)[None], [t], eps, ode_steps)[0]


def density_slice(model, t, dims=(0, 1), bounds=None, resolution=50, ode_steps=None):
    """Log-density on a 2D grid through the timestep mean.

    Returns ``(xs, ys, values)`` with ``values[j, i]`` at ``(xs[i], ys[j])``;
    the other four chart coordinates are held at the timestep mean.
    """
    d0, d1 = dims
    if bounds is None:
        spread = 4.0 * model.scale
        bounds = (
            (model.mean[t, d0] - spread[d0], model.mean[t, d0] + spread[d0]),
            (model.mean[t, d1] - spread[d1], model.mean[t, d1] + spread[d1]),
        )
    xs = np.linspace(*bounds[0], resolution)
    ys = np.linspace(*bounds[1], resolution)
    grid_x, grid_y = np.meshgrid(xs, ys)
    charts = np.tile(model.mean[t], (grid_x.size, 1))
    charts[:, d0] = grid_x.ravel()
    charts[:, d1] = grid_y.ravel()
    values = log_density_charts(model, charts, t, ode_steps)
    return xs, ys, values.reshape(grid_x.shape)
