"""Scenario runner, trace capture, metrics, and plot-data emission."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .config import VesselConfig
from .errors import ThrustAllocError
from .reference_filter import FilterState, ReferenceFilter
from .scenarios import (
    CommandDifferentiator,
    DerivativeMode,
    Scenario,
    generate_command,
)

# Fallback per-thruster saturation when metrics are computed from a bare
# trace file (no vessel config at hand); matches the benchmark vessel.
DEFAULT_F_MAX = 1.0


@dataclass(frozen=True)
class TraceSample:
    """One retained integrator step: inputs, states, outputs, flags."""

    t: float
    tau_cmd: np.ndarray      # (3,)
    tau: np.ndarray          # (3,) realized load B @ xi
    xi: np.ndarray           # (p,)
    xi_d: np.ndarray         # (p,)
    theta: np.ndarray        # (q,)
    forces: np.ndarray       # (m,) magnitudes (signed for fixed thrusters)
    angles: np.ndarray       # (m,) rad
    cbf_active: np.ndarray   # (m,) 0/1
    clf_value: float
    cost: float


@dataclass(frozen=True)
class RunMetrics:
    steady_state_residual: float       # max |tau - tau_cmd| over final 20%
    max_force_ratio: float             # max_i,t |xi_i| / f_max_i
    theta_settle_time: float           # first t with |theta| <= 5% of |theta(0)|
    azimuth_total_variation: np.ndarray  # per thruster, sum of |wrapped dalpha|


@dataclass(frozen=True)
class RunResult:
    trace: list[TraceSample]
    metrics: RunMetrics


def _wrap_angle(a: np.ndarray) -> np.ndarray:
    return (a + np.pi) % (2.0 * np.pi) - np.pi


def run(cfg: VesselConfig, scenario: Scenario, decimate: int = 1) -> RunResult:
    """Simulate a scenario and return the retained trace plus metrics.

    The trace keeps every ``decimate``-th step (plus the final one);
    retained samples are identical to a full-rate trace at those times.
    Deterministic: equal inputs give bitwise-equal traces.
    """
    if decimate < 1:
        raise ValueError("decimate must be >= 1")
    flt = ReferenceFilter.from_config(cfg)
    dt = cfg.integrator.dt
    n_steps = max(1, int(math.floor(scenario.duration / dt + 1e-9)))
    state = flt.initial_state(scenario.initial_xi, scenario.initial_theta)

    analytic = scenario.derivative_mode is DerivativeMode.ANALYTIC
    differ = None
    if not analytic:
        differ = CommandDifferentiator(
            scenario.derivative_mode, scenario.lowpass_time_constant
        )

    def stage_command(t):
        # integrator stages may land a rounding error beyond the end
        return generate_command(scenario, min(t, scenario.duration))

    trace: list[TraceSample] = []
    setpoints = flt.setpoints(state)

    def record(sample_state, tau_cmd, diag):
        forces = np.array([sp.force for sp in setpoints])
        angles = np.array([sp.angle for sp in setpoints])
        xi_p = flt.geom.B_pinv_W @ tau_cmd
        trace.append(
            TraceSample(
                t=sample_state.t,
                tau_cmd=tau_cmd,
                tau=flt.geom.B @ sample_state.xi,
                xi=sample_state.xi,
                xi_d=xi_p + flt.geom.Q @ sample_state.theta,
                theta=sample_state.theta,
                forces=forces,
                angles=angles,
                cbf_active=diag.cbf_active.astype(int),
                clf_value=diag.clf_value,
                cost=diag.cost,
            )
        )

    for k in range(n_steps):
        tau_cmd, tau_dot = generate_command(scenario, state.t)
        if differ is not None:
            tau_dot = differ.update(tau_cmd, dt)
        result = flt.step(
            state,
            tau_cmd,
            tau_dot,
            dt,
            command=stage_command if analytic else None,
        )
        if k % decimate == 0:
            record(state, tau_cmd, result.diagnostics)
        state = result.state
        setpoints = result.setpoints

    # final sample: evaluate a probe step for its flags without advancing
    tau_cmd, tau_dot = generate_command(scenario, min(state.t, scenario.duration))
    if differ is not None:
        tau_dot = differ.update(tau_cmd, dt)
    probe = flt.step(state, tau_cmd, tau_dot, dt)
    record(state, tau_cmd, probe.diagnostics)

    return RunResult(trace=trace, metrics=compute_metrics(trace))


def compute_metrics(
    trace: list[TraceSample], f_max: np.ndarray | float = DEFAULT_F_MAX
) -> RunMetrics:
    """Summary metrics over a trace.

    ``f_max`` supplies the per-thruster saturation limits for the force
    ratio (scalar broadcast allowed); traces do not carry limits.
    """
    if not trace:
        raise ValueError("empty trace")
    t = np.array([s.t for s in trace])
    residual = np.array([np.linalg.norm(s.tau - s.tau_cmd) for s in trace])
    steady = t >= t[0] + 0.8 * (t[-1] - t[0])
    steady_residual = float(residual[steady].max())

    forces = np.abs(np.array([s.forces for s in trace]))
    ratios = forces / np.broadcast_to(
        np.asarray(f_max, dtype=float), forces.shape[1:]
    )
    max_ratio = float(ratios.max())

    theta_norm = np.array([np.linalg.norm(s.theta) for s in trace])
    if theta_norm[0] == 0.0:
        settle = math.nan
    else:
        below = np.nonzero(theta_norm <= 0.05 * theta_norm[0])[0]
        settle = float(t[below[0]]) if below.size else math.inf

    angles = np.array([s.angles for s in trace])
    variation = np.abs(_wrap_angle(np.diff(angles, axis=0))).sum(axis=0)

    return RunMetrics(
        steady_state_residual=steady_residual,
        max_force_ratio=max_ratio,
        theta_settle_time=settle,
        azimuth_total_variation=variation,
    )


# --- trace serialization ------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.17g}"


def trace_header(p: int, q: int, m: int) -> list[str]:
    return (
        ["t", "tau_cmd_x", "tau_cmd_y", "tau_cmd_n", "tau_x", "tau_y", "tau_n"]
        + [f"xi_{i + 1}" for i in range(p)]
        + [f"xid_{i + 1}" for i in range(p)]
        + [f"theta_{i + 1}" for i in range(q)]
        + [f"F_{i + 1}" for i in range(m)]
        + [f"alpha_{i + 1}" for i in range(m)]
        + [f"cbf_{i + 1}" for i in range(m)]
        + ["V", "J"]
    )


def write_trace(trace: list[TraceSample], path) -> None:
    """Write a trace as CSV with 17-significant-digit floats."""
    if not trace:
        raise ValueError("refusing to write an empty trace")
    first = trace[0]
    header = trace_header(len(first.xi), len(first.theta), len(first.forces))
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for s in trace:
                row = (
                    [_fmt(s.t)]
                    + [_fmt(v) for v in s.tau_cmd]
                    + [_fmt(v) for v in s.tau]
                    + [_fmt(v) for v in s.xi]
                    + [_fmt(v) for v in s.xi_d]
                    + [_fmt(v) for v in s.theta]
                    + [_fmt(v) for v in s.forces]
                    + [_fmt(v) for v in s.angles]
                    + [str(int(v)) for v in s.cbf_active]
                    + [_fmt(s.clf_value), _fmt(s.cost)]
                )
                writer.writerow(row)
    except OSError as exc:
        raise OSError(f"cannot write trace to {path}: {exc}") from exc


def read_trace(path) -> list[TraceSample]:
    """Parse a trace CSV back into samples (inverse of write_trace)."""
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise ThrustAllocError(f"trace {path} is empty")
            p = sum(1 for h in header if h.startswith("xi_"))
            q = sum(1 for h in header if h.startswith("theta_"))
            m = sum(1 for h in header if h.startswith("F_"))
            if header != trace_header(p, q, m):
                raise ThrustAllocError(f"trace {path} has an unexpected header")
            samples = []
            for row in reader:
                vals = [float(v) for v in row]
                pos = 7
                xi = np.array(vals[pos : pos + p]); pos += p
                xi_d = np.array(vals[pos : pos + p]); pos += p
                theta = np.array(vals[pos : pos + q]); pos += q
                forces = np.array(vals[pos : pos + m]); pos += m
                angles = np.array(vals[pos : pos + m]); pos += m
                cbf = np.array([int(v) for v in vals[pos : pos + m]]); pos += m
                samples.append(
                    TraceSample(
                        t=vals[0],
                        tau_cmd=np.array(vals[1:4]),
                        tau=np.array(vals[4:7]),
                        xi=xi,
                        xi_d=xi_d,
                        theta=theta,
                        forces=forces,
                        angles=angles,
                        cbf_active=cbf,
                        clf_value=vals[pos],
                        cost=vals[pos + 1],
                    )
                )
    except OSError as exc:
        raise OSError(f"cannot read trace from {path}: {exc}") from exc
    if not samples:
        raise ThrustAllocError(f"trace {path} has no data rows")
    return samples


def emit_plot_data(trace: list[TraceSample], out_dir) -> list[str]:
    """Write per-figure column files for generic plotting tools.

    Produces tau_timeseries.csv, tau_xy.csv, forces.csv (actual and
    manifold-desired magnitudes), theta.csv under out_dir; returns the
    paths written.
    """
    import os

    if not trace:
        raise ValueError("empty trace")
    os.makedirs(out_dir, exist_ok=True)
    m = len(trace[0].forces)
    p = len(trace[0].xi)
    m1 = p - m  # steerable thrusters occupy pairs, fixed ones scalars

    def desired_forces(s: TraceSample) -> list[float]:
        vals = []
        for i in range(m1):
            vals.append(float(np.hypot(s.xi_d[2 * i], s.xi_d[2 * i + 1])))
        vals.extend(float(v) for v in s.xi_d[2 * m1 :])
        return vals

    files = {
        "tau_timeseries.csv": (
            ["t", "tau_cmd_x", "tau_cmd_y", "tau_cmd_n", "tau_x", "tau_y", "tau_n"],
            lambda s: [s.t, *s.tau_cmd, *s.tau],
        ),
        "tau_xy.csv": (
            ["tau_cmd_x", "tau_cmd_y", "tau_x", "tau_y"],
            lambda s: [s.tau_cmd[0], s.tau_cmd[1], s.tau[0], s.tau[1]],
        ),
        "forces.csv": (
            ["t"]
            + [f"F_{i + 1}" for i in range(m)]
            + [f"Fd_{i + 1}" for i in range(m)],
            lambda s: [s.t, *s.forces, *desired_forces(s)],
        ),
        "theta.csv": (
            ["t"] + [f"theta_{i + 1}" for i in range(len(trace[0].theta))],
            lambda s: [s.t, *s.theta],
        ),
    }
    written = []
    for name, (header, rower) in files.items():
        target = os.path.join(out_dir, name)
        try:
            with open(target, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(header)
                for s in trace:
                    writer.writerow([_fmt(float(v)) for v in rower(s)])
        except OSError as exc:
            raise OSError(f"cannot write plot data to {target}: {exc}") from exc
        written.append(target)
    return written
