"""Dynamic thrust-allocation reference filter.

Integrates a virtual force state xi (stacked per-thruster forces) and a
nullspace parameter theta so that xi converges to the cost-optimal point
of the solution manifold for the commanded load, while per-thruster
safety constraints keep |xi_i| inside the saturation limit.  Each step
consumes the commanded load and its time derivative and emits magnitude
and azimuth setpoints for the local thruster controllers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import (
    CbfVariant,
    IntegratorMethod,
    ThrusterKind,
    ThrusterSpec,
    VesselConfig,
)
from .errors import SimulationError
from .geometry import AllocationGeometry, geometry_from_config
from .tasks import DynamicTask, cost_value, task_from_config, upsilon

# Norm-barrier direction b ~ xi/|xi| is regularized near the origin; the
# origin is strictly interior to the safe set so the value of b there is
# immaterial.
EPS_CBF = 1e-9


@dataclass(frozen=True)
class FilterState:
    """Virtual force state xi, nullspace parameter theta, filter clock t."""

    xi: np.ndarray
    theta: np.ndarray
    t: float = 0.0


@dataclass(frozen=True)
class ThrusterSetpoint:
    """Commanded magnitude and direction for one thruster.

    Steerable units get force >= 0 with angle in (-pi, pi]; fixed units
    get a signed force along their constant mounting angle.
    """

    id: str
    force: float
    angle: float


@dataclass(frozen=True)
class StepDiagnostics:
    """Telemetry for one step, evaluated at the pre-step state."""

    cbf_active: np.ndarray            # per thruster: projection engaged
    nominal_in_safe_set: np.ndarray   # per thruster: nominal control already safe
    clf_value: float
    cost: float
    tau_residual: float               # |B xi - tau_cmd|


@dataclass(frozen=True)
class StepResult:
    state: FilterState
    setpoints: tuple[ThrusterSetpoint, ...]
    diagnostics: StepDiagnostics


def nominal_control(
    rate_limit: float,
    zeta: float,
    xi_i: np.ndarray,
    xi_d_i: np.ndarray,
    xi_p_dot_i: np.ndarray,
    Qi_upsilon: np.ndarray,
) -> np.ndarray:
    """Per-thruster nominal control: saturated tracking feedback plus
    manifold feedforward.  The feedback norm stays strictly below
    rate_limit for any error."""
    err = np.asarray(xi_i, dtype=float) - np.asarray(xi_d_i, dtype=float)
    return (
        -rate_limit * err / (np.linalg.norm(err) + zeta)
        + np.asarray(xi_p_dot_i, dtype=float)
        + np.asarray(Qi_upsilon, dtype=float)
    )


def theta_dot(
    task: DynamicTask,
    geom: AllocationGeometry,
    mu: float,
    xi_err: np.ndarray,
    upsilon_value: np.ndarray,
) -> np.ndarray:
    """Parameter update: descent flow plus mu-weighted pull toward the
    projection of the tracking error onto the nullspace."""
    c = np.repeat(task.weights, geom.block_dims)
    return upsilon_value + mu * ((c * xi_err) @ geom.Q)


def clf_value(task: DynamicTask, geom: AllocationGeometry, xi_err: np.ndarray) -> float:
    """Tracking Lyapunov value: sum of c_i/2 |xi_i - xi_d_i|^2 with c_i
    the task weights."""
    c = np.repeat(task.weights, geom.block_dims)
    return 0.5 * float(xi_err @ (c * xi_err))


def clf_theta_gradient(
    task: DynamicTask, geom: AllocationGeometry, xi_err: np.ndarray
) -> np.ndarray:
    """Gradient of clf_value with respect to theta (a q-vector)."""
    c = np.repeat(task.weights, geom.block_dims)
    return -(c * xi_err) @ geom.Q


def cbf_constraint(
    variant: CbfVariant, f_max: float, rho: float, xi_i: np.ndarray
) -> tuple[float, np.ndarray]:
    """Half-space description {phi : a + b.phi <= 0} of the safe controls
    keeping |xi_i| <= f_max."""
    xi_i = np.atleast_1d(np.asarray(xi_i, dtype=float))
    if variant is CbfVariant.QUADRATIC:
        return float(xi_i @ xi_i - f_max**2), 2.0 * rho * xi_i
    mag = np.linalg.norm(xi_i)
    return float(mag - f_max), rho * xi_i / (mag + EPS_CBF)


def safe_control(
    kappa: np.ndarray,
    a: float,
    b: np.ndarray,
    Gamma: np.ndarray | None = None,
) -> np.ndarray:
    """Minimal Gamma-weighted correction of kappa into {u : a + b.u <= 0}.

    Closed form: kappa unchanged when already safe, otherwise shifted
    along Gamma^-1 b onto the constraint boundary.  Gamma is a diagonal
    (given as a vector) and defaults to identity.
    """
    kappa = np.atleast_1d(np.asarray(kappa, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    slack = a + b @ kappa
    if slack <= 0:
        return kappa.copy()
    ginv_b = b if Gamma is None else b / np.asarray(Gamma, dtype=float)
    denom = b @ ginv_b
    if denom <= 0:
        raise SimulationError(
            "infeasible safety constraint: violated half-space with zero gradient"
        )
    return kappa - (slack / denom) * ginv_b


class ReferenceFilter:
    """Steps (xi, theta) under the nominal law, the parameter update, and
    the per-thruster safety projection.

    Instances hold only immutable configuration; `step` is a pure
    function of its inputs, so independent runs can share one filter.
    """

    def __init__(
        self,
        geom: AllocationGeometry,
        task: DynamicTask,
        specs: tuple[ThrusterSpec, ...],
        mu: float = 0.1,
        cbf_variant: CbfVariant = CbfVariant.QUADRATIC,
        method: IntegratorMethod = IntegratorMethod.RK4,
        cbf_weights: np.ndarray | None = None,
    ):
        if len(specs) != geom.m:
            raise ValueError("one ThrusterSpec per geometry block required")
        if tuple(s.dim for s in specs) != geom.block_dims:
            raise ValueError("ThrusterSpec kinds do not match geometry blocks")
        if mu < 0:
            raise ValueError("mu must be >= 0")
        self.geom = geom
        self.task = task
        self.specs = tuple(specs)
        self.mu = float(mu)
        self.cbf_variant = cbf_variant
        self.method = method

        m1, cut = geom.m1, 2 * geom.m1
        self._cut = cut
        self._ids = tuple(s.id for s in specs)
        self._omega_az = np.array([s.rate_limit for s in specs[:m1]])
        self._zeta_az = np.array([s.zeta for s in specs[:m1]])
        self._fmax_az = np.array([s.f_max for s in specs[:m1]])
        self._rho_az = np.array([s.rho for s in specs[:m1]])
        self._omega_fx = np.array([s.rate_limit for s in specs[m1:]])
        self._zeta_fx = np.array([s.zeta for s in specs[m1:]])
        self._fmax_fx = np.array([s.f_max for s in specs[m1:]])
        self._rho_fx = np.array([s.rho for s in specs[m1:]])
        self._fixed_angles = np.array([s.fixed_angle for s in specs[m1:]])
        self._c_diag = np.repeat(task.weights, geom.block_dims)
        if cbf_weights is None:
            self._ginv = np.ones(geom.p)
        else:
            cbf_weights = np.asarray(cbf_weights, dtype=float)
            if cbf_weights.shape != (geom.p,) or np.any(cbf_weights <= 0):
                raise ValueError("cbf_weights must be p positive diagonal entries")
            self._ginv = 1.0 / cbf_weights
        self._ginv_az = self._ginv[:cut].reshape(m1, 2)
        self._ginv_fx = self._ginv[cut:]

    @classmethod
    def from_config(cls, cfg: VesselConfig) -> "ReferenceFilter":
        return cls(
            geom=geometry_from_config(cfg),
            task=task_from_config(cfg),
            specs=cfg.thrusters,
            mu=cfg.gains.mu,
            cbf_variant=cfg.cbf_variant,
            method=cfg.integrator.method,
        )

    def initial_state(
        self,
        xi: np.ndarray | None = None,
        theta: np.ndarray | None = None,
        t: float = 0.0,
    ) -> FilterState:
        xi = np.zeros(self.geom.p) if xi is None else np.asarray(xi, dtype=float)
        theta = (
            np.zeros(self.geom.q) if theta is None else np.asarray(theta, dtype=float)
        )
        if xi.shape != (self.geom.p,) or theta.shape != (self.geom.q,):
            raise ValueError(
                f"state shapes {xi.shape}/{theta.shape} do not match "
                f"geometry (p={self.geom.p}, q={self.geom.q})"
            )
        return FilterState(xi=xi.copy(), theta=theta.copy(), t=float(t))

    # -- dynamics ----------------------------------------------------------

    def _rhs(self, xi, theta, tau_cmd, tau_cmd_dot, want_flags=False):
        geom = self.geom
        cut = self._cut
        xi_p = geom.B_pinv_W @ tau_cmd
        xi_p_dot = geom.B_pinv_W @ tau_cmd_dot
        xi_d = xi_p + geom.Q @ theta
        ups = upsilon(self.task, geom, theta, xi_p)
        xi_err = xi - xi_d
        ff = xi_p_dot + geom.Q @ ups  # feedforward shared by all thrusters

        e_az = xi_err[:cut].reshape(-1, 2)
        e_mag = np.sqrt(np.einsum("ij,ij->i", e_az, e_az))
        kap_az = (
            -(self._omega_az / (e_mag + self._zeta_az))[:, None] * e_az
            + ff[:cut].reshape(-1, 2)
        )
        e_fx = xi_err[cut:]
        kap_fx = (
            -self._omega_fx * e_fx / (np.abs(e_fx) + self._zeta_fx) + ff[cut:]
        )

        x_az = xi[:cut].reshape(-1, 2)
        x_fx = xi[cut:]
        if self.cbf_variant is CbfVariant.QUADRATIC:
            a_az = np.einsum("ij,ij->i", x_az, x_az) - self._fmax_az**2
            b_az = (2.0 * self._rho_az)[:, None] * x_az
            a_fx = x_fx**2 - self._fmax_fx**2
            b_fx = 2.0 * self._rho_fx * x_fx
        else:
            n_az = np.sqrt(np.einsum("ij,ij->i", x_az, x_az))
            a_az = n_az - self._fmax_az
            b_az = (self._rho_az / (n_az + EPS_CBF))[:, None] * x_az
            n_fx = np.abs(x_fx)
            a_fx = n_fx - self._fmax_fx
            b_fx = self._rho_fx * x_fx / (n_fx + EPS_CBF)

        gb_az = self._ginv_az * b_az
        gb_fx = self._ginv_fx * b_fx
        slack_az = a_az + np.einsum("ij,ij->i", b_az, kap_az)
        slack_fx = a_fx + b_fx * kap_fx
        act_az = slack_az > 0
        act_fx = slack_fx > 0
        den_az = np.einsum("ij,ij->i", b_az, gb_az)
        den_fx = b_fx * gb_fx
        if np.any(act_az & (den_az <= 0)) or np.any(act_fx & (den_fx <= 0)):
            raise SimulationError(
                "state outside safe set with vanishing barrier gradient"
            )
        scale_az = np.where(act_az, slack_az, 0.0) / np.where(act_az, den_az, 1.0)
        scale_fx = np.where(act_fx, slack_fx, 0.0) / np.where(act_fx, den_fx, 1.0)
        phi_az = kap_az - scale_az[:, None] * gb_az
        phi_fx = kap_fx - scale_fx * gb_fx

        xi_dot = np.concatenate([phi_az.ravel(), phi_fx])
        th_dot = ups + self.mu * ((self._c_diag * xi_err) @ geom.Q)
        if not want_flags:
            return xi_dot, th_dot
        return xi_dot, th_dot, np.concatenate([act_az, act_fx])

    def step(
        self,
        state: FilterState,
        tau_cmd: np.ndarray,
        tau_cmd_dot: np.ndarray,
        dt: float,
        command=None,
    ) -> StepResult:
        """Advance the filter by dt and emit setpoints for the new state.

        ``command``, when given, is a callable t -> (tau_cmd, tau_cmd_dot)
        evaluated at the integrator's stage times; without it the command
        is extrapolated linearly inside the step from the two arguments.
        Rejects non-finite inputs without touching the state.
        """
        if dt <= 0:
            raise ValueError("dt must be > 0")
        tau_cmd = np.asarray(tau_cmd, dtype=float)
        tau_cmd_dot = np.asarray(tau_cmd_dot, dtype=float)
        if tau_cmd.shape != (self.geom.n,) or tau_cmd_dot.shape != (self.geom.n,):
            raise ValueError("commanded load must be a 3-vector with derivative")
        finite = (
            np.isfinite(tau_cmd).all()
            and np.isfinite(tau_cmd_dot).all()
            and np.isfinite(state.xi).all()
            and np.isfinite(state.theta).all()
        )
        if not finite:
            raise SimulationError("non-finite input to reference-filter step")

        t0 = state.t
        if command is None:
            def command(t):
                return tau_cmd + (t - t0) * tau_cmd_dot, tau_cmd_dot

        xi0, th0 = state.xi, state.theta
        dxi1, dth1, flags = self._rhs(xi0, th0, tau_cmd, tau_cmd_dot, want_flags=True)

        if self.method is IntegratorMethod.EULER:
            xi1 = xi0 + dt * dxi1
            th1 = th0 + dt * dth1
        else:
            tau_h, taud_h = command(t0 + 0.5 * dt)
            tau_f, taud_f = command(t0 + dt)
            dxi2, dth2 = self._rhs(
                xi0 + 0.5 * dt * dxi1, th0 + 0.5 * dt * dth1, tau_h, taud_h
            )
            dxi3, dth3 = self._rhs(
                xi0 + 0.5 * dt * dxi2, th0 + 0.5 * dt * dth2, tau_h, taud_h
            )
            dxi4, dth4 = self._rhs(xi0 + dt * dxi3, th0 + dt * dth3, tau_f, taud_f)
            xi1 = xi0 + (dt / 6.0) * (dxi1 + 2.0 * (dxi2 + dxi3) + dxi4)
            th1 = th0 + (dt / 6.0) * (dth1 + 2.0 * (dth2 + dth3) + dth4)

        if not (np.isfinite(xi1).all() and np.isfinite(th1).all()):
            raise SimulationError(f"filter state diverged at t={t0:.6g}")

        new_state = FilterState(xi=xi1, theta=th1, t=t0 + dt)

        xi_p = self.geom.B_pinv_W @ tau_cmd
        xi_d = xi_p + self.geom.Q @ th0
        xi_err = xi0 - xi_d
        diagnostics = StepDiagnostics(
            cbf_active=flags,
            nominal_in_safe_set=~flags,
            clf_value=clf_value(self.task, self.geom, xi_err),
            cost=cost_value(self.task, self.geom, xi_d),
            tau_residual=float(np.linalg.norm(self.geom.B @ xi0 - tau_cmd)),
        )
        return StepResult(
            state=new_state,
            setpoints=self.setpoints(new_state),
            diagnostics=diagnostics,
        )

    # -- output map ---------------------------------------------------------

    def setpoints(self, state: FilterState) -> tuple[ThrusterSetpoint, ...]:
        """Map the force state to per-thruster (force, angle) commands."""
        cut = self._cut
        out = []
        x_az = state.xi[:cut].reshape(-1, 2)
        for i in range(self.geom.m1):
            out.append(
                ThrusterSetpoint(
                    id=self._ids[i],
                    force=float(np.hypot(x_az[i, 0], x_az[i, 1])),
                    angle=float(math.atan2(x_az[i, 1], x_az[i, 0])),
                )
            )
        for j, val in enumerate(state.xi[cut:]):
            out.append(
                ThrusterSetpoint(
                    id=self._ids[self.geom.m1 + j],
                    force=float(val),
                    angle=float(self._fixed_angles[j]),
                )
            )
        return tuple(out)
