"""Commanded-load scenarios and command-derivative estimation.

A scenario pairs a time-parameterized load signal with a duration and an
optional filter initial state.  Smooth signals expose exact derivatives;
tabulated signals are held zero-order and differentiated numerically via
a configurable estimator.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import ConfigError


class DerivativeMode(enum.Enum):
    ANALYTIC = "analytic"
    LOWPASS = "lowpass"
    BACKWARD_DIFFERENCE = "backward_difference"
    ZERO = "zero"


@dataclass(frozen=True)
class ConstantSignal:
    tau: tuple[float, float, float]

    def evaluate(self, t: float):
        return np.array(self.tau, dtype=float), np.zeros(3)


@dataclass(frozen=True)
class RampOscillateSignal:
    """Steadily ramped surge force with a sinusoidal yaw moment."""

    fx_rate: float = 0.005       # N/s
    mz_amplitude: float = 0.2    # N*m
    mz_period: float = 20.0      # s

    def evaluate(self, t: float):
        w = 2.0 * math.pi / self.mz_period
        tau = np.array([self.fx_rate * t, 0.0, self.mz_amplitude * math.sin(w * t)])
        dot = np.array([self.fx_rate, 0.0, self.mz_amplitude * w * math.cos(w * t)])
        return tau, dot


@dataclass(frozen=True)
class SpiralSignal:
    """Outward-spiraling planar force of growing magnitude, constant moment."""

    radius_rate: float = 0.02    # N/s
    angular_rate: float = 0.1    # rad/s
    mz: float = 0.0              # N*m

    def evaluate(self, t: float):
        c, s = math.cos(self.angular_rate * t), math.sin(self.angular_rate * t)
        r, w = self.radius_rate, self.angular_rate
        tau = np.array([r * t * c, r * t * s, self.mz])
        dot = np.array([r * c - r * t * w * s, r * s + r * t * w * c, 0.0])
        return tau, dot


@dataclass(frozen=True)
class PiecewiseTableSignal:
    """Zero-order hold over tabulated (time, load) samples.

    evaluate() returns a zero derivative; the run loop estimates the
    derivative with the scenario's configured mode instead.
    """

    times: tuple[float, ...]
    taus: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        if len(self.times) != len(self.taus) or not self.times:
            raise ConfigError("table signal needs matching, non-empty times/taus")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ConfigError("table times must be strictly increasing")

    def evaluate(self, t: float):
        idx = int(np.searchsorted(np.asarray(self.times), t, side="right")) - 1
        idx = max(idx, 0)
        return np.array(self.taus[idx], dtype=float), np.zeros(3)


Signal = ConstantSignal | RampOscillateSignal | SpiralSignal | PiecewiseTableSignal


@dataclass(frozen=True)
class Scenario:
    name: str
    duration: float
    signal: Signal
    initial_xi: np.ndarray | None = None
    initial_theta: np.ndarray | None = None
    derivative_mode: DerivativeMode = DerivativeMode.ANALYTIC
    lowpass_time_constant: float = 1.0

    def __post_init__(self):
        if self.duration <= 0:
            raise ConfigError(f"scenario {self.name!r}: duration must be > 0")
        if (
            self.derivative_mode is DerivativeMode.ANALYTIC
            and isinstance(self.signal, PiecewiseTableSignal)
        ):
            # Held samples have no analytic derivative to evaluate.
            object.__setattr__(
                self, "derivative_mode", DerivativeMode.BACKWARD_DIFFERENCE
            )
        if self.lowpass_time_constant <= 0:
            raise ConfigError("lowpass time constant must be > 0")
        for attr in ("initial_xi", "initial_theta"):
            value = getattr(self, attr)
            if value is not None:
                object.__setattr__(self, attr, np.asarray(value, dtype=float))


def generate_command(scenario: Scenario, t: float):
    """Commanded load and derivative at time t in [0, duration].

    For table signals the returned derivative is zero; run loops apply
    the scenario's derivative estimator over the sample history instead.
    """
    if not 0.0 <= t <= scenario.duration:
        raise ValueError(
            f"t={t} outside scenario {scenario.name!r} range [0, {scenario.duration}]"
        )
    return scenario.signal.evaluate(t)


class CommandDifferentiator:
    """Streaming estimator for the commanded-load derivative.

    backward_difference: first-order difference of consecutive samples
    (zero on the first sample).  lowpass: ds/dt = (tau - s)/T with output
    (tau - s)/T, seeded at the first sample.  zero: always zero.
    """

    def __init__(self, mode: DerivativeMode, time_constant: float = 1.0):
        if mode is DerivativeMode.ANALYTIC:
            raise ValueError("analytic derivatives come from the signal itself")
        if time_constant <= 0:
            raise ValueError("time constant must be > 0")
        self.mode = mode
        self.time_constant = time_constant
        self._prev: np.ndarray | None = None
        self._filter_state: np.ndarray | None = None

    def update(self, tau: np.ndarray, dt: float) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        if self.mode is DerivativeMode.ZERO:
            return np.zeros_like(tau)
        if self.mode is DerivativeMode.BACKWARD_DIFFERENCE:
            prev, self._prev = self._prev, tau
            if prev is None:
                return np.zeros_like(tau)
            return (tau - prev) / dt
        # lowpass
        if self._filter_state is None:
            self._filter_state = tau.copy()
        estimate = (tau - self._filter_state) / self.time_constant
        self._filter_state = self._filter_state + dt * estimate
        return estimate


def differentiate_command(
    history,
    dt: float,
    mode: DerivativeMode,
    time_constant: float = 1.0,
) -> np.ndarray:
    """Derivative estimate from a history of equally spaced load samples.

    Replays the streaming estimator over the history and returns the
    final estimate.  Raises on insufficient history (zero/lowpass need
    one sample, backward differences two).
    """
    history = [np.asarray(h, dtype=float) for h in history]
    minimum = 2 if mode is DerivativeMode.BACKWARD_DIFFERENCE else 1
    if len(history) < minimum:
        raise ValueError(
            f"{mode.value} needs at least {minimum} sample(s), got {len(history)}"
        )
    diff = CommandDifferentiator(mode, time_constant)
    estimate = np.zeros_like(history[0])
    for sample in history:
        estimate = diff.update(sample, dt)
    return estimate


# --- construction from names and files ---------------------------------------

_SIGNAL_TYPES = {
    "constant": ConstantSignal,
    "ramp_oscillate": RampOscillateSignal,
    "spiral": SpiralSignal,
    "table": PiecewiseTableSignal,
}


def builtin_scenario(name: str, duration: float | None = None) -> Scenario:
    """Named stock scenarios mirroring the simulator's standard runs."""
    if name == "zero":
        scn = Scenario("zero", 10.0, ConstantSignal((0.0, 0.0, 0.0)))
    elif name == "constant":
        scn = Scenario("constant", 30.0, ConstantSignal((0.5, 0.2, 0.05)))
    elif name == "ramp_oscillate":
        scn = Scenario("ramp_oscillate", 120.0, RampOscillateSignal())
    elif name == "spiral":
        scn = Scenario("spiral", 400.0, SpiralSignal())
    elif name == "spiral_transient":
        # Spiral with the non-trivial start used in the saturation studies;
        # state shapes fit the reference three-thruster layout (p=5, q=2).
        scn = Scenario(
            "spiral_transient",
            400.0,
            SpiralSignal(),
            initial_xi=np.array([0.5, 0.0, 0.5, 0.0, 0.5]),
            initial_theta=np.array([0.5, 0.5]),
        )
    else:
        raise ConfigError(
            f"unknown scenario {name!r}; built-ins: zero, constant, "
            f"ramp_oscillate, spiral, spiral_transient"
        )
    if duration is not None:
        if duration <= 0:
            raise ConfigError("duration override must be > 0")
        scn = Scenario(
            scn.name,
            float(duration),
            scn.signal,
            scn.initial_xi,
            scn.initial_theta,
            scn.derivative_mode,
            scn.lowpass_time_constant,
        )
    return scn


def parse_scenario(text: str) -> Scenario:
    """Parse a YAML scenario document.

    Keys: name, duration, signal {type, ...parameters}, optional
    initial_state {xi, theta}, optional derivative {mode, time_constant}.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = (
            f" at line {mark.line + 1}, column {mark.column + 1}"
            if mark is not None
            else ""
        )
        raise ConfigError(f"scenario syntax error{where}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("scenario document must be a mapping")
    for key in ("name", "duration", "signal"):
        if key not in doc:
            raise ConfigError(f"scenario missing required key {key!r}")
    sig_raw = dict(doc["signal"])
    sig_type = sig_raw.pop("type", None)
    if sig_type not in _SIGNAL_TYPES:
        raise ConfigError(
            f"signal type {sig_type!r} not one of {sorted(_SIGNAL_TYPES)}"
        )
    if sig_type == "constant":
        tau = sig_raw.pop("tau", None)
        if tau is None or len(tau) != 3:
            raise ConfigError("constant signal needs tau: [fx, fy, mz]")
        signal = ConstantSignal(tuple(float(v) for v in tau))
    elif sig_type == "table":
        samples = sig_raw.pop("samples", None)
        if not samples:
            raise ConfigError("table signal needs samples: [[t, fx, fy, mz], ...]")
        times = tuple(float(row[0]) for row in samples)
        taus = tuple(tuple(float(v) for v in row[1:4]) for row in samples)
        signal = PiecewiseTableSignal(times, taus)
    else:
        try:
            signal = _SIGNAL_TYPES[sig_type](**{
                k: float(v) for k, v in sig_raw.items()
            })
        except TypeError as exc:
            raise ConfigError(f"bad {sig_type} signal parameters: {exc}") from exc
        sig_raw = {}
    if sig_raw:
        raise ConfigError(f"unknown signal parameter(s) {sorted(sig_raw)}")

    init = doc.get("initial_state", {}) or {}
    deriv = doc.get("derivative", {}) or {}
    mode = DerivativeMode(deriv.get("mode", DerivativeMode.ANALYTIC.value))
    return Scenario(
        name=str(doc["name"]),
        duration=float(doc["duration"]),
        signal=signal,
        initial_xi=init.get("xi"),
        initial_theta=init.get("theta"),
        derivative_mode=mode,
        lowpass_time_constant=float(deriv.get("time_constant", 1.0)),
    )
