"""Joint optimization of the grasp and the joint-space trajectory.

A candidate is a joint trajectory ``Q`` of shape ``(T + 1, d)``. Its first
state fixes the grasp ``T_go = x̂_0^-1 r(q_0)``; every later state carries the
object along as ``x_t = r(q_t) T_go^-1``. The total score

    alpha * S_T + beta * S_G - gamma * S_C

rewards demo-like object motion (S_T), a feasible demo-like grasp (S_G) and
penalizes body points entering the safety margin (S_C). Candidates start on
object paths proposed by the trajectory term, mapped to joint states by IK; a
batch is ascended with Adam and the best collision-free iterate is returned.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import arm_kinematics, se3
from .conf import OptimizerConfig, SettingsConfig
from .diff_net import AdamState, adam_step
from .exceptions import EmptyDemoSet, LengthMismatch, ShapeMismatch, ValidationFailure
from .flow_density import (
    DemoSet, log_density, log_density_charts, log_density_grad_charts, sample_trajectory_charts, wrap_chart,
)
from .grasp_model import grasp_score_charts, grasp_score_grad_charts
from .scene_field import hinge

logger = logging.getLogger(__name__)

# charts this close to the rotation-vector boundary are scored at the floor
SINGULAR_GUARD = 1e-3
LOG_DENSITY_FLOOR = -1e3


@dataclass(frozen=True)
class ObjectiveWeights(SettingsConfig):
    settings_section = 'OPTIMIZER'

    alpha: float = 0.5
    beta: float = 0.8
    gamma: float = 1.0

    def __post_init__(self):
        values = (self.alpha, self.beta, self.gamma)
        if any(v < 0.0 for v in values):
            raise ValidationFailure('objective weights must be non-negative', field_path='weights')
        if not any(values):
            raise ValidationFailure('objective weights must not all be zero', field_path='weights')

    def combine(self, s_t, s_g, s_c):
        return self.alpha * s_t + self.beta * s_g - self.gamma * s_c


@dataclass(frozen=True)
class RolloutScore:
    s_t: float
    s_g: float
    s_c: float
    total: float
    log_densities: tuple
    objective: str = 'flow'

    def as_dict(self):
        return {
            's_t': self.s_t,
            's_g': self.s_g,
            's_c': self.s_c,
            'total': self.total,
            'log_densities': list(self.log_densities),
            'objective': self.objective,
        }


@dataclass(frozen=True, eq=False)
class OptimizationResult:
    trajectory: arm_kinematics.JointTrajectory
    score: RolloutScore
    grasp: se3.Pose
    object_traj: tuple
    trace: tuple = ()
    member_totals: tuple = ()
    capped: bool = False

    def trace_rows(self):
        return [{'step': i, 'best_total': value} for i, value in enumerate(self.trace)]


@dataclass(frozen=True, eq=False)
class BatchScores:
    step_values: np.ndarray   # (B, T + 1)
    s_t: np.ndarray
    s_g: np.ndarray
    s_c: np.ndarray

    def objective(self, coef):
        a, b, c = coef
        return a * self.s_t + b * self.s_g - c * self.s_c

    def member(self, index, weights, kind):
        return RolloutScore(
            s_t=float(self.s_t[index]),
            s_g=float(self.s_g[index]),
            s_c=float(self.s_c[index]),
            total=float(weights.combine(self.s_t[index], self.s_g[index], self.s_c[index])),
            log_densities=tuple(float(v) for v in self.step_values[index]),
            objective=kind,
        )

    @classmethod
    def concatenate(cls, parts):
        return cls(*(np.concatenate([getattr(p, name) for p in parts]) for name in ('step_values', 's_t', 's_g', 's_c')))


# Trajectory terms

class FlowTrajectoryTerm:
    """Per-step log-density under the learned demonstration flow."""

    kind = 'flow'

    def __init__(self, flow, density_steps=None, fd_eps=1e-4):
        self.flow = flow
        self.horizon = flow.horizon
        self.density_steps = density_steps
        self.fd_eps = fd_eps
        self.centers = flow.center_matrices()

    def _rows(self, charts, first=0):
        flat = charts.reshape(-1, 6)
        steps = np.tile(np.arange(first, first + charts.shape[1]), charts.shape[0])
        valid = np.linalg.norm(flat[:, 3:], axis=1) < np.pi - SINGULAR_GUARD
        return flat, steps, valid

    def values(self, charts, ode_steps=None):
        flat, steps, valid = self._rows(charts)
        out = np.full(len(flat), LOG_DENSITY_FLOOR)
        if valid.any():
            out[valid] = log_density_charts(self.flow, flat[valid], steps[valid], ode_steps or self.density_steps)
        return out.reshape(charts.shape[:2])

    def final_values(self, charts):
        """Per-step log-density at the checkpoint's own ODE resolution."""
        return self.values(charts, self.flow.ode_steps)

    def gradients(self, charts, first=0):
        """Chart gradients for timesteps ``first, first + 1, ...``."""
        flat, steps, valid = self._rows(charts, first)
        out = np.zeros_like(flat)
        if valid.any():
            out[valid] = log_density_grad_charts(self.flow, flat[valid], steps[valid], self.fd_eps, self.density_steps)
        return out.reshape(charts.shape)

    def proposals(self, rng, count):
        """``(count, T + 1, 4, 4)`` object paths drawn from the flow."""
        seed = int(rng.integers(2 ** 31))
        charts = sample_trajectory_charts(self.flow, count, seed, self.density_steps)
        out = np.empty(charts.shape[:2] + (4, 4))
        for b, traj in enumerate(charts):
            for t, vec in enumerate(traj):
                out[b, t] = se3.from_chart(wrap_chart(vec), self.flow.centers[t]).as_matrix()
        return out


class DistanceTrajectoryTerm:
    """Squared pose distance to every demo at the matching timestep.

    Per step the value is ``-mean_i D_i^2 / (2 scale^2)`` with ``D_i`` the
    weighted pose distance to demo ``i``; its maximizer is the demo mean.
    """

    kind = 'distance'
    centers = None

    def __init__(self, demos, weights=None, scale=0.01):
        demos = list(demos.demos if isinstance(demos, DemoSet) else demos)
        if not demos:
            raise EmptyDemoSet('the distance objective needs at least one demo')
        if scale <= 0.0:
            raise ValidationFailure(f'distance scale must be positive, got {scale}', field_path='distance_scale')
        self.demo_matrices = np.array([[p.as_matrix() for p in traj] for traj in demos])
        self.demo_charts = se3.charts_from_matrices(self.demo_matrices, strict=False)
        self.horizon = self.demo_charts.shape[1] - 1
        self.weights = weights or se3.DistanceWeights()
        self.scale = scale

    def _distances(self, charts, first):
        diff = charts[:, None] - self.demo_charts[None, :, first:first + charts.shape[1]]   # (B, n, steps, 6)
        trans = np.linalg.norm(diff[..., :3], axis=-1)
        w = self.weights.w_trans
        return diff, trans, w * trans + (1.0 - w) * np.abs(diff[..., 3:]).sum(axis=-1)

    def values(self, charts):
        _, _, dist = self._distances(charts, 0)
        return -0.5 * (dist ** 2).mean(axis=1) / self.scale ** 2

    final_values = values

    def gradients(self, charts, first=0):
        diff, trans, dist = self._distances(charts, first)
        w = self.weights.w_trans
        with np.errstate(invalid='ignore', divide='ignore'):
            d_trans = np.where(trans[..., None] > 0.0, diff[..., :3] / trans[..., None], 0.0)
        d_dist = np.concatenate([w * d_trans, (1.0 - w) * np.sign(diff[..., 3:])], axis=-1)
        return -(dist[..., None] * d_dist).mean(axis=1) / self.scale ** 2

    def proposals(self, rng, count):
        """Demos drawn with replacement, ``(count, T + 1, 4, 4)``."""
        return self.demo_matrices[rng.integers(0, len(self.demo_matrices), size=count)]


# Rigid-transform helpers over (..., 4, 4) stacks

def _rigid_inverse(m):
    rot_t = np.swapaxes(m[..., :3, :3], -1, -2)
    out = np.zeros_like(m)
    out[..., :3, :3] = rot_t
    out[..., :3, 3] = -(rot_t @ m[..., :3, 3, None])[..., 0]
    out[..., 3, 3] = 1.0
    return out


def _perturb(q, h):
    """``(N, d)`` -> ``(N, 2d, d)``: ``+h e_j`` for all ``j``, then ``-h e_j``."""
    steps = np.concatenate([np.eye(q.shape[-1]), -np.eye(q.shape[-1])]) * h
    return q[:, None, :] + steps[None]


def _central(values, d):
    """Central difference over the trailing ``2d`` axis laid out by ``_perturb``."""
    return values[:, :d] - values[:, d:]


@dataclass(frozen=True, eq=False)
class _Kinematics:
    cumulative: np.ndarray   # (B (T + 1), d + 1, 4, 4)
    ee: np.ndarray           # (B, T + 1, 4, 4)
    carry: np.ndarray        # (B, 4, 4): E_0^-1 x̂_0
    objects: np.ndarray      # (B, T + 1, 4, 4)
    charts: np.ndarray       # (B, T + 1, 6)
    grasps: np.ndarray       # (B, 4, 4)
    grasp_charts: np.ndarray # (B, 6)
    body: np.ndarray         # (B, T + 1, P, 3)


class JointFlowOptimizer:
    """Batched gradient ascent over joint trajectories for one scene."""

    def __init__(self, arm, scene, grasp, x0, term, weights=None, config=None):
        self.arm = arm
        self.scene = scene
        self.grasp = grasp
        self.x0 = x0
        self.x0_matrix = x0.as_matrix()
        self.x0_inverse = _rigid_inverse(self.x0_matrix)
        self.term = term
        self.horizon = term.horizon
        self.weights = weights or ObjectiveWeights.from_settings()
        self.config = config or OptimizerConfig.from_settings()

    # scoring

    def _centers(self, steps):
        return None if self.term.centers is None else self.term.centers[steps]

    def _charts(self, transforms, steps):
        centers = self._centers(steps)
        return se3.charts_from_matrices(transforms, centers, strict=False)

    def _kinematics(self, q):
        batch, n, d = q.shape
        flat = q.reshape(-1, d)
        cumulative = arm_kinematics.frames(self.arm, flat)
        ee = arm_kinematics.ee_matrices(self.arm, flat, cumulative).reshape(batch, n, 4, 4)
        carry = _rigid_inverse(ee[:, 0]) @ self.x0_matrix
        objects = ee @ carry[:, None]
        grasps = self.x0_inverse @ ee[:, 0]
        body = arm_kinematics.body_point_positions(self.arm, flat, cumulative).reshape(batch, n, -1, 3)
        return _Kinematics(
            cumulative=cumulative,
            ee=ee,
            carry=carry,
            objects=objects,
            charts=self._charts(objects, np.arange(n)),
            grasps=grasps,
            grasp_charts=se3.charts_from_matrices(grasps, strict=False),
            body=body,
        )

    def _step_collisions(self, body):
        clearance = self.scene.distance(body) - self.arm.point_radii
        return hinge(clearance, self.scene.margin).sum(axis=-1)

    def _scores(self, kin, coef, final=False):
        batch, n = kin.charts.shape[:2]
        a, b, c = coef
        if not a:
            step_values = np.zeros((batch, n))
        elif final:
            step_values = self.term.final_values(kin.charts)
        else:
            step_values = self.term.values(kin.charts)
        s_g = grasp_score_charts(self.grasp, kin.grasp_charts) if b else np.zeros(batch)
        s_c = self._step_collisions(kin.body).sum(axis=1) / max(n - 1, 1) if c else np.zeros(batch)
        return BatchScores(step_values, step_values.mean(axis=1), s_g, s_c)

    def scores(self, q):
        """Every score component for a ``(B, T + 1, d)`` batch."""
        q = self._check(q)
        kin = self._kinematics(q)
        return self._scores(kin, (1.0, 1.0, 1.0))

    def _check(self, q):
        q = np.asarray(q, dtype=float)
        if q.ndim == 2:
            q = q[None]
        if q.shape[1:] != (self.horizon + 1, self.arm.dof):
            raise ShapeMismatch(f'expected (B, {self.horizon + 1}, {self.arm.dof}) joint states, got {q.shape}')
        return q

    # chart Jacobians

    def _chart_jacobians_fd(self, q, kin):
        """``dc_t/dq_t`` and ``dc_t/dq_0`` for ``t >= 1``, each ``(B, T, 6, d)``."""
        batch, n, d = q.shape
        h = self.config.joint_fd_eps
        steps = np.arange(1, n)
        moved = _perturb(q[:, 1:].reshape(-1, d), h).reshape(-1, d)
        ee = arm_kinematics.ee_matrices(self.arm, moved).reshape(batch, n - 1, 2 * d, 4, 4)
        objects = ee @ kin.carry[:, None, None]
        centers = None if self.term.centers is None else self.term.centers[steps][None, :, None]
        charts = se3.charts_from_matrices(objects, centers, strict=False)
        own = (charts[:, :, :d] - charts[:, :, d:]) / (2.0 * h)          # (B, T, d, 6)

        starts = _perturb(q[:, 0], h).reshape(-1, d)
        ee0 = arm_kinematics.ee_matrices(self.arm, starts).reshape(batch, 2 * d, 4, 4)
        carry = _rigid_inverse(ee0) @ self.x0_matrix
        objects = kin.ee[:, None, 1:] @ carry[:, :, None]                # (B, 2d, T, 4, 4)
        centers = None if self.term.centers is None else self.term.centers[steps][None, None]
        charts = se3.charts_from_matrices(objects, centers, strict=False)
        start = (charts[:, :d] - charts[:, d:]) / (2.0 * h)              # (B, d, T, 6)
        return np.swapaxes(own, -1, -2), np.moveaxis(start, 1, -1)

    def _chart_jacobians_analytic(self, q, kin):
        batch, n, d = q.shape
        cumulative = kin.cumulative.reshape(batch, n, d + 1, 4, 4)
        objects = kin.objects[:, 1:]
        origin = objects[..., :3, 3]                                     # (B, T, 3)
        rotvecs = kin.charts[:, 1:, 3:]
        jl_inv = se3.left_jacobians_inverse(rotvecs)                     # (B, T, 3, 3)
        if self.term.centers is not None:
            jl_inv = jl_inv @ np.swapaxes(self.term.centers[1:], -1, -2)[None]

        axes, joint_origins = arm_kinematics.joint_axes(cumulative[:, 1:].reshape(-1, d + 1, 4, 4))
        axes = axes.reshape(batch, n - 1, d, 3)
        joint_origins = joint_origins.reshape(batch, n - 1, d, 3)
        lin = np.cross(axes, origin[:, :, None] - joint_origins)
        ang = np.einsum('btij,btkj->btik', jl_inv, axes)
        own = np.concatenate([np.swapaxes(lin, -1, -2), ang], axis=2)

        # a start-joint twist reaches x_t through A = E_t E_0^-1, reversed
        axes0, origins0 = arm_kinematics.joint_axes(cumulative[:, 0])
        relative = kin.ee[:, 1:] @ _rigid_inverse(kin.ee[:, 0])[:, None]  # (B, T, 4, 4)
        omega = -np.einsum('btij,bkj->btki', relative[..., :3, :3], axes0)
        moved_origins = np.einsum('btij,bkj->btki', relative[..., :3, :3], origins0) + relative[:, :, None, :3, 3]
        lin0 = np.cross(omega, origin[:, :, None] - moved_origins)
        ang0 = np.einsum('btij,btkj->btik', jl_inv, omega)
        start = np.concatenate([np.swapaxes(lin0, -1, -2), ang0], axis=2)
        return own, start

    # per-term gradients, each (B, T + 1, d)

    def _trajectory_gradient(self, q, kin):
        batch, n, d = q.shape
        grad = np.zeros_like(q)
        if n < 2:
            return grad
        d_chart = self.term.gradients(kin.charts[:, 1:], first=1) / n           # (B, T, 6)
        if self.config.gradient == 'analytic':
            own, start = self._chart_jacobians_analytic(q, kin)
        else:
            own, start = self._chart_jacobians_fd(q, kin)
        grad[:, 1:] = np.einsum('btc,btcj->btj', d_chart, own)
        grad[:, 0] = np.einsum('btc,btcj->bj', d_chart, start)
        return grad

    def _grasp_gradient(self, q, kin):
        batch, _, d = q.shape
        grad = np.zeros_like(q)
        if self.config.gradient == 'analytic':
            d_chart = grasp_score_grad_charts(self.grasp, kin.grasp_charts)   # (B, 6)
            axes0, origins0 = arm_kinematics.joint_axes(kin.cumulative.reshape(batch, -1, d + 1, 4, 4)[:, 0])
            rot = self.x0_inverse[:3, :3]
            omega = axes0 @ rot.T
            pivots = origins0 @ rot.T + self.x0_inverse[:3, 3]
            lin = np.cross(omega, kin.grasps[:, None, :3, 3] - pivots)
            jl_inv = se3.left_jacobians_inverse(kin.grasp_charts[:, 3:])
            ang = np.einsum('bij,bkj->bki', jl_inv, omega)
            grad[:, 0] = np.einsum('bc,bkc->bk', d_chart, np.concatenate([lin, ang], axis=2))
            return grad
        h = self.config.joint_fd_eps
        starts = _perturb(q[:, 0], h).reshape(-1, d)
        grasps = self.x0_inverse @ arm_kinematics.ee_matrices(self.arm, starts)
        values = grasp_score_charts(self.grasp, se3.charts_from_matrices(grasps, strict=False))
        grad[:, 0] = _central(values.reshape(batch, 2 * d), d) / (2.0 * h)
        return grad

    def _collision_gradient(self, q, kin):
        batch, n, d = q.shape
        divisor = max(n - 1, 1)
        if self.config.gradient == 'analytic':
            dist, d_dist = self.scene.distance_and_gradient(kin.body)
            active = (self.scene.margin - (dist - self.arm.point_radii)) > 0.0
            d_point = -(d_dist * active[..., None]) / self.scene.margin
            flat_body = kin.body.reshape(batch * n, -1, 3)
            jac = arm_kinematics.point_jacobians(self.arm, flat_body, kin.cumulative, self.arm.point_links)
            grad = np.einsum('npc,npcj->nj', d_point.reshape(batch * n, -1, 3), jac)
            return grad.reshape(batch, n, d) / divisor
        h = self.config.joint_fd_eps
        moved = _perturb(q.reshape(-1, d), h).reshape(-1, d)
        body = arm_kinematics.body_point_positions(self.arm, moved)
        values = self._step_collisions(body).reshape(batch * n, 2 * d)
        return (_central(values, d) / (2.0 * h)).reshape(batch, n, d) / divisor

    def gradient(self, q, coef=None, frozen_start=False):
        """Scores and ``d objective / dQ`` for ``objective = a S_T + b S_G - c S_C``."""
        q = self._check(q)
        coef = coef or (self.weights.alpha, self.weights.beta, self.weights.gamma)
        kin = self._kinematics(q)
        scores = self._scores(kin, coef)
        a, b, c = coef
        grad = np.zeros_like(q)
        if a:
            grad += a * self._trajectory_gradient(q, kin)
        if b:
            grad += b * self._grasp_gradient(q, kin)
        if c:
            grad -= c * self._collision_gradient(q, kin)
        if frozen_start:
            grad[:, 0] = 0.0
        return scores, grad

    def _parallel_gradient(self, q, coef, frozen_start):
        workers = min(self.config.workers, len(q))
        if workers <= 1:
            return self.gradient(q, coef, frozen_start)
        chunks = np.array_split(np.arange(len(q)), workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda idx: self.gradient(q[idx], coef, frozen_start), chunks))
        return BatchScores.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])

    # search

    def start_states(self, rng, batch):
        """Top-``batch`` random configurations by grasp score."""
        count = max(self.config.init_candidates, batch)
        candidates = self.arm.sample_configurations(rng, count)
        grasps = self.x0_inverse @ arm_kinematics.ee_matrices(self.arm, candidates)
        scores = grasp_score_charts(self.grasp, se3.charts_from_matrices(grasps, strict=False))
        return candidates[np.argsort(-scores, kind='stable')[:batch]]

    def rollouts_from(self, starts, rng):
        """Trajectories from ``starts`` that follow object paths proposed by the trajectory term.

        A proposed path ``X_t`` becomes the end-effector targets
        ``X_t x̂_0^-1 r(q_0)``, which keep the grasp fixed by ``q_0``; damped
        least-squares IK tracks them one step at a time. With
        ``init='constant'`` every state repeats its start.
        """
        states = np.repeat(np.asarray(starts, dtype=float)[:, None, :], self.horizon + 1, axis=1)
        if self.config.init == 'constant' or self.horizon == 0:
            return states
        objects = self.term.proposals(rng, len(states))
        targets = objects @ self.x0_inverse @ arm_kinematics.ee_matrices(self.arm, states[:, 0])[:, None]
        for t in range(1, self.horizon + 1):
            states[:, t], residual = arm_kinematics.solve_ik(
                self.arm, targets[:, t], states[:, t - 1], self.config.ik_iterations,
            )
        logger.debug('initial rollouts: last-step IK residual mean %.4f', residual.mean())
        return states

    def initial_batch(self, rng, batch):
        return self.rollouts_from(self.start_states(rng, batch), rng)

    def ascend(self, q, steps, coef=None, frozen_start=False):
        """Adam ascent with clamping; returns running-best states, values and trace.

        A member's running best is its best collision-free iterate once it
        has one, and its best iterate overall until then.
        """
        q = self._check(q).copy()
        start = q[:, 0].copy()
        coef = coef or (self.weights.alpha, self.weights.beta, self.weights.gamma)
        state = AdamState.for_params([q], lr=self.config.lr)
        best_q = q.copy()
        best = np.full(len(q), -np.inf)
        best_free = np.zeros(len(q), dtype=bool)
        trace = []

        def track(scores, current):
            values = scores.objective(coef)
            free = scores.s_c <= 0.0
            better = (free & ~best_free) | ((free == best_free) & (values > best))
            best[better] = values[better]
            best_free[better] = free[better]
            best_q[better] = current[better]
            trace.append(float(best.max()))

        for step in range(steps):
            scores, grad = self._parallel_gradient(q, coef, frozen_start)
            track(scores, q)
            (q,), state = adam_step([q], [-grad], state)
            q = np.clip(q, self.arm.lower, self.arm.upper)
            if frozen_start:
                q[:, 0] = start
            logger.debug('step %d best %.6f mean %.6f', step, best.max(), scores.objective(coef).mean())
        track(self._scores(self._kinematics(q), coef), q)
        return best_q, best, trace

    def select(self, best_q):
        """Index of the returned member and every member's final total.

        Totals use the flow's own ODE resolution. Collision-free members
        rank ahead of colliding ones.
        """
        scores = self._scores(self._kinematics(best_q), (1.0, 1.0, 1.0), final=True)
        totals = self.weights.combine(scores.s_t, scores.s_g, scores.s_c)
        free = scores.s_c <= 0.0
        if not free.any():
            logger.warning('no collision-free candidate in the batch; returning the best total')
            free = np.ones_like(free)
        pool = np.flatnonzero(free)
        return int(pool[np.argmax(totals[pool])]), totals

    def finish(self, best_q, trace):
        index, totals = self.select(best_q)
        states, capped = cap_joint_steps(best_q[index], self.config.max_joint_step)
        states = states[None]
        kin = self._kinematics(states)
        score = self._scores(kin, (1.0, 1.0, 1.0), final=True).member(0, self.weights, self.term.kind)
        return OptimizationResult(
            trajectory=arm_kinematics.JointTrajectory(states[0]),
            score=score,
            grasp=se3.Pose.from_matrix(kin.grasps[0]),
            object_traj=tuple(se3.Pose.from_matrix(m) for m in kin.objects[0]),
            trace=tuple(trace),
            member_totals=tuple(float(v) for v in totals),
            capped=capped,
        )


def cap_joint_steps(states, limit):
    """Limit per-joint displacement between consecutive states to ``limit`` radians."""
    states = np.array(states, dtype=float)
    if limit is None:
        return states, False
    steps = np.diff(states, axis=0)
    if np.all(np.abs(steps) <= limit):
        return states, False
    logger.warning('joint step %.4f rad exceeds cap %.4f rad; trajectory rescaled', np.abs(steps).max(), limit)
    for t in range(1, len(states)):
        states[t] = states[t - 1] + np.clip(states[t] - states[t - 1], -limit, limit)
    return states, True


# Public operations

def induced_object_traj(arm, traj, x0):
    """``x_t = r(q_t) T_go^-1`` with ``T_go = x̂_0^-1 r(q_0)``; ``x_0`` is ``x̂_0``."""
    states = arm_kinematics.check_limits(arm, traj.states)
    ee = arm_kinematics.ee_matrices(arm, states)
    carry = _rigid_inverse(ee[0]) @ x0.as_matrix()
    poses = [x0] + [se3.Pose.from_matrix(m @ carry) for m in ee[1:]]
    return poses


def grasp_pose(arm, traj, x0):
    """``T_go``: the gripper pose in the object frame fixed by the first state."""
    q0 = arm_kinematics.check_limits(arm, traj.states[0])
    return se3.compose(se3.inverse(x0), arm_kinematics.fk(arm, q0))


def trajectory_score(model, object_traj):
    """``S_T``: mean over ``t = 0..T`` of the log-density of ``x_t``."""
    if len(object_traj) != model.horizon + 1:
        raise LengthMismatch(f'trajectory has {len(object_traj)} poses, flow expects {model.horizon + 1}')
    charts = np.array([model.chart(pose, t) for t, pose in enumerate(object_traj)])
    return float(log_density_charts(model, charts, np.arange(len(charts))).mean())


def _resolve(config, **overrides):
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if config is None:
        return OptimizerConfig.from_settings(**overrides)
    return replace(config, **overrides)


def _run(optimizer, seed, batch, steps):
    rng = np.random.default_rng(seed)
    q = optimizer.initial_batch(rng, batch)
    best_q, _, trace = optimizer.ascend(q, steps)
    return optimizer.finish(best_q, trace)


def optimize(arm, scene, flow, grasp, x0, weights=None, batch=None, steps=None, seed=None, config=None):
    """Joint ascent on ``alpha S_T + beta S_G - gamma S_C``; best of batch."""
    config = _resolve(config, batch=batch, steps=steps, seed=seed)
    term = FlowTrajectoryTerm(flow, config.density_steps, config.fd_eps)
    optimizer = JointFlowOptimizer(arm, scene, grasp, x0, term, weights, config)
    logger.info('joint optimization: batch %d, %d steps, seed %d', config.batch, config.steps, config.seed)
    return _run(optimizer, config.seed, config.batch, config.steps)


def optimize_sequential(arm, scene, flow, grasp, x0, weights=None, batch=None, steps=None, seed=None, config=None):
    """Grasp first (``S_G`` over ``q_0``), then the trajectory with ``q_0`` frozen."""
    config = _resolve(config, batch=batch, steps=steps, seed=seed)
    term = FlowTrajectoryTerm(flow, config.density_steps, config.fd_eps)
    optimizer = JointFlowOptimizer(arm, scene, grasp, x0, term, weights, config)
    w = optimizer.weights
    rng = np.random.default_rng(config.seed)
    starts = optimizer.start_states(rng, config.batch)
    q = np.repeat(starts[:, None], optimizer.horizon + 1, axis=1)
    logger.info('sequential stage 1: grasp only')
    start_q, _, _ = optimizer.ascend(q, config.steps, coef=(0.0, 1.0, 0.0))
    q = optimizer.rollouts_from(start_q[:, 0], rng)
    logger.info('sequential stage 2: trajectory with frozen grasp')
    best_q, _, trace = optimizer.ascend(q, config.steps, coef=(w.alpha, 0.0, w.gamma), frozen_start=True)
    return optimizer.finish(best_q, trace)


def optimize_distance_baseline(arm, scene, demos, grasp, x0, weights=None, distance_weights=None,
                               batch=None, steps=None, seed=None, config=None):
    """Joint optimization with ``S_T`` replaced by the squared demo-distance term."""
    config = _resolve(config, batch=batch, steps=steps, seed=seed)
    term = DistanceTrajectoryTerm(demos, distance_weights, config.distance_scale)
    optimizer = JointFlowOptimizer(arm, scene, grasp, x0, term, weights, config)
    logger.info('distance baseline: batch %d, %d steps, seed %d', config.batch, config.steps, config.seed)
    return _run(optimizer, config.seed, config.batch, config.steps)


def nearest_demo(object_traj, demos):
    """Index of the demo with the smallest mean translation error."""
    demos = list(demos.demos if isinstance(demos, DemoSet) else demos)
    if not demos:
        raise EmptyDemoSet('no demos to compare against')
    errors = []
    for traj in demos:
        if len(traj) != len(object_traj):
            raise LengthMismatch(f'demo has {len(traj)} poses, trajectory has {len(object_traj)}')
        errors.append(np.mean([np.linalg.norm(a.translation - b.translation) for a, b in zip(traj, object_traj)]))
    return int(np.argmin(errors))


def evaluate(object_traj_exec, object_traj_demo, flow=None):
    """Average translation / rotation error against a demo, and average log density."""
    if len(object_traj_exec) != len(object_traj_demo):
        raise LengthMismatch(f'{len(object_traj_exec)} executed poses vs {len(object_traj_demo)} demo poses')
    dist = [np.linalg.norm(d.translation - e.translation) for d, e in zip(object_traj_demo, object_traj_exec)]
    rot = [se3.rotation_angle(d.rotation, e.rotation) for d, e in zip(object_traj_demo, object_traj_exec)]
    record = {
        'delta_dist_avg': float(np.mean(dist)),
        'delta_rot_avg': float(np.mean(rot)),
        'avg_log_density': None,
    }
    if flow is not None:
        record['avg_log_density'] = float(np.mean([log_density(flow, x, t) for t, x in enumerate(object_traj_exec)]))
    return record
