"""Convex allocation costs and their gradient-descent flows.

Two cost families steer the nullspace parameter theta along the solution
manifold xi_d = xi_p + Q @ theta:

* min_squared_norm: 0.5 * xi_d^T W xi_d, whose minimizer over theta is
  the origin, recovering the weighted right-inverse allocation.
* azimuth_penalty: per-thruster w * (|z| - lam * <ref, z>), trading force
  magnitude against deviation from a preferred direction (a unit azimuth
  vector for steerable units, a force sign for fixed units).

The descent flow is upsilon = -gamma * grad_theta(J); for the azimuth
penalty the norm gradient z/|z| is regularized to z/(|z| + epsilon) so
the flow stays defined through zero force.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import TaskKind, ThrusterKind, VesselConfig
from .geometry import AllocationGeometry


@dataclass(frozen=True)
class DynamicTask:
    """Cost-family selection plus per-thruster parameters.

    Arrays follow the geometry's thruster order: ``weights`` and ``lam``
    have one entry per thruster, ``azimuth_refs`` one unit row per
    steerable thruster, ``force_sign_refs`` one entry (+-1) per fixed
    thruster.  Reference vectors are normalized on construction.
    """

    kind: TaskKind
    gamma: float
    epsilon: float
    weights: np.ndarray
    lam: np.ndarray
    azimuth_refs: np.ndarray
    force_sign_refs: np.ndarray

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError(f"gamma={self.gamma} must be > 0")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon={self.epsilon} must be > 0")
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "lam", np.asarray(self.lam, dtype=float))
        if np.any(self.weights <= 0):
            raise ValueError("thruster weights must be positive")
        if np.any((self.lam < 0) | (self.lam > 1)):
            raise ValueError("lam entries must lie in [0, 1]")
        refs = np.asarray(self.azimuth_refs, dtype=float).reshape(-1, 2)
        norms = np.linalg.norm(refs, axis=1)
        if refs.size and np.any(norms == 0):
            raise ValueError("azimuth reference vectors must be nonzero")
        object.__setattr__(
            self, "azimuth_refs", refs / norms[:, None] if refs.size else refs
        )
        signs = np.asarray(self.force_sign_refs, dtype=float)
        if np.any(np.abs(signs) != 1):
            raise ValueError("force sign references must be +1 or -1")
        object.__setattr__(self, "force_sign_refs", signs)


def task_from_config(cfg: VesselConfig) -> DynamicTask:
    """Build the DynamicTask selected by a vessel configuration."""
    az = [t for t in cfg.thrusters if t.kind is ThrusterKind.VARYING_AZIMUTH]
    fx = [t for t in cfg.thrusters if t.kind is ThrusterKind.FIXED_DIRECTION]
    refs = np.array(
        [[np.cos(t.azimuth_ref), np.sin(t.azimuth_ref)] for t in az]
    ).reshape(-1, 2)
    return DynamicTask(
        kind=cfg.task,
        gamma=cfg.gains.gamma,
        epsilon=cfg.gains.epsilon,
        weights=np.array([t.weight for t in cfg.thrusters]),
        lam=np.array([t.lam for t in cfg.thrusters]),
        azimuth_refs=refs,
        force_sign_refs=np.array([float(t.force_sign_ref) for t in fx]),
    )


def _split(geom: AllocationGeometry, x: np.ndarray):
    """View a p-vector as ((m1, 2) steerable block, (m2,) fixed block)."""
    cut = 2 * geom.m1
    return x[:cut].reshape(geom.m1, 2), x[cut:]


def cost_value(task: DynamicTask, geom: AllocationGeometry, xi_d: np.ndarray) -> float:
    """Evaluate the selected cost at a manifold point xi_d."""
    xi_d = np.asarray(xi_d, dtype=float)
    if task.kind is TaskKind.MIN_SQUARED_NORM:
        return 0.5 * float(xi_d @ (geom.W_diag * xi_d))

    z_az, z_fx = _split(geom, xi_d)
    w_az, w_fx = task.weights[: geom.m1], task.weights[geom.m1 :]
    lam_az, lam_fx = task.lam[: geom.m1], task.lam[geom.m1 :]
    cost = float(
        w_az
        @ (
            np.linalg.norm(z_az, axis=1)
            - lam_az * np.einsum("ij,ij->i", task.azimuth_refs, z_az)
        )
    )
    cost += float(w_fx @ (np.abs(z_fx) - lam_fx * task.force_sign_refs * z_fx))
    return cost


def gradient_theta(
    task: DynamicTask,
    geom: AllocationGeometry,
    theta: np.ndarray,
    xi_p: np.ndarray,
) -> np.ndarray:
    """Gradient of the cost with respect to theta, as a q-vector.

    Uses the same epsilon-regularized norm gradient as the descent flow,
    so it matches finite differences of cost_value only away from zero
    force on each thruster.
    """
    xi_d = xi_p + geom.Q @ np.asarray(theta, dtype=float)
    if task.kind is TaskKind.MIN_SQUARED_NORM:
        return (geom.W_diag * xi_d) @ geom.Q

    z_az, z_fx = _split(geom, xi_d)
    r = np.empty(geom.p)
    r_az, r_fx = _split(geom, r)
    mags = np.linalg.norm(z_az, axis=1)
    r_az[:] = z_az / (mags + task.epsilon)[:, None]
    r_az -= task.lam[: geom.m1, None] * task.azimuth_refs
    r_fx[:] = z_fx / (np.abs(z_fx) + task.epsilon)
    r_fx -= task.lam[geom.m1 :] * task.force_sign_refs
    return (np.repeat(task.weights, geom.block_dims) * r) @ geom.Q


def upsilon(
    task: DynamicTask,
    geom: AllocationGeometry,
    theta: np.ndarray,
    xi_p: np.ndarray,
) -> np.ndarray:
    """Dynamic assignment: the descent flow -gamma * grad_theta(J).

    For min_squared_norm this reduces to -gamma * Q^T W Q theta, which
    is the same flow with the (identically zero) Q^T W B_pinv_W term
    dropped.
    """
    theta = np.asarray(theta, dtype=float)
    if task.kind is TaskKind.MIN_SQUARED_NORM:
        return -task.gamma * ((geom.W_diag * (geom.Q @ theta)) @ geom.Q)
    return -task.gamma * gradient_theta(task, geom, theta, xi_p)
