"""Vessel and thruster configuration: parsing, validation, effector model.

A vessel is described by an ordered list of thrusters (steerable azimuth
units first, fixed-direction units after), solver gains, and integrator
settings.  The configuration compiles into the constant 3 x p thrust
configuration matrix B mapping stacked thruster forces to the body-frame
load [surge force, sway force, yaw moment].
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import yaml

from .errors import ConfigError, GeometryError

# Relative singular-value cutoff for declaring B rank deficient.
RANK_TOL = 1e-9

DOF = 3  # surge, sway, yaw


class ThrusterKind(enum.Enum):
    VARYING_AZIMUTH = "varying_azimuth"
    FIXED_DIRECTION = "fixed_direction"


class CbfVariant(enum.Enum):
    QUADRATIC = "quadratic"
    NORM = "norm"


class TaskKind(enum.Enum):
    MIN_SQUARED_NORM = "min_squared_norm"
    AZIMUTH_PENALTY = "azimuth_penalty"


class IntegratorMethod(enum.Enum):
    EULER = "euler"
    RK4 = "rk4"


@dataclass(frozen=True)
class ThrusterSpec:
    """Geometry, limits, and cost parameters for a single thruster.

    Angles are radians here; the file format uses degrees.  ``lever_arm``
    is the body-frame displacement (x forward, y starboard) from the
    vessel coordinate origin to the thruster.
    """

    id: str
    kind: ThrusterKind
    lever_arm: tuple[float, float]
    f_max: float                      # force saturation magnitude [N]
    rate_limit: float                 # feedback rate bound [N/s]
    fixed_angle: float = 0.0          # constant thrust direction [rad], fixed kind only
    zeta: float = 0.01                # feedback slope shaping near zero error [N]
    rho: float = 0.1                  # barrier time constant [s]
    weight: float = 1.0               # allocation priority weight
    lam: float = 0.0                  # direction-penalty strength in [0, 1]
    azimuth_ref: float = 0.0          # preferred azimuth [rad], steerable kind only
    force_sign_ref: int = 1           # preferred force sign, fixed kind only

    def __post_init__(self):
        if not self.id:
            raise ConfigError("thruster id must be a non-empty string")
        checks = [
            ("f_max", self.f_max, self.f_max > 0),
            ("rate_limit", self.rate_limit, self.rate_limit > 0),
            ("zeta", self.zeta, self.zeta > 0),
            ("rho", self.rho, self.rho > 0),
            ("weight", self.weight, self.weight > 0),
            ("lambda", self.lam, 0.0 <= self.lam <= 1.0),
        ]
        for name, value, ok in checks:
            if not ok:
                raise ConfigError(
                    f"thruster {self.id!r}: {name}={value!r} out of range"
                )
        if self.force_sign_ref not in (1, -1):
            raise ConfigError(
                f"thruster {self.id!r}: force_sign_ref must be +1 or -1"
            )
        if len(self.lever_arm) != 2 or not all(
            math.isfinite(v) for v in self.lever_arm
        ):
            raise ConfigError(
                f"thruster {self.id!r}: lever_arm must be a finite 2-vector"
            )

    @property
    def dim(self) -> int:
        """Number of force components: 2 for steerable, 1 for fixed."""
        return 2 if self.kind is ThrusterKind.VARYING_AZIMUTH else 1


@dataclass(frozen=True)
class GainSettings:
    mu: float = 0.1        # tracking-gradient gain (>= 0)
    gamma: float = 0.1     # cost descent gain (> 0)
    epsilon: float = 1e-6  # norm regularization in the descent flow (> 0)

    def __post_init__(self):
        if self.mu < 0:
            raise ConfigError(f"gains: mu={self.mu!r} must be >= 0")
        if self.gamma <= 0:
            raise ConfigError(f"gains: gamma={self.gamma!r} must be > 0")
        if self.epsilon <= 0:
            raise ConfigError(f"gains: epsilon={self.epsilon!r} must be > 0")


@dataclass(frozen=True)
class IntegratorSettings:
    dt: float = 0.001
    method: IntegratorMethod = IntegratorMethod.RK4

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError(f"integrator: dt={self.dt!r} must be > 0")


@dataclass(frozen=True)
class VesselConfig:
    """Validated vessel description; thrusters ordered steerable-first."""

    thrusters: tuple[ThrusterSpec, ...]
    gains: GainSettings = field(default_factory=GainSettings)
    cbf_variant: CbfVariant = CbfVariant.QUADRATIC
    task: TaskKind = TaskKind.MIN_SQUARED_NORM
    integrator: IntegratorSettings = field(default_factory=IntegratorSettings)

    def __post_init__(self):
        ids = [t.id for t in self.thrusters]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate thruster ids: {ids}")
        kinds = [t.kind for t in self.thrusters]
        split = kinds.count(ThrusterKind.VARYING_AZIMUTH)
        if any(k is ThrusterKind.VARYING_AZIMUTH for k in kinds[split:]):
            raise ConfigError(
                "thrusters must be ordered with all varying-azimuth units first"
            )
        if self.m < 2:
            raise ConfigError(f"need at least 2 thrusters, got {self.m}")
        if self.p <= DOF:
            raise ConfigError(
                f"under-actuated: p={self.p} force components cannot span "
                f"{DOF} degrees of freedom (need p > {DOF})"
            )

    @property
    def m1(self) -> int:
        return sum(
            1 for t in self.thrusters if t.kind is ThrusterKind.VARYING_AZIMUTH
        )

    @property
    def m2(self) -> int:
        return len(self.thrusters) - self.m1

    @property
    def m(self) -> int:
        return len(self.thrusters)

    @property
    def p(self) -> int:
        return 2 * self.m1 + self.m2

    @property
    def n(self) -> int:
        return DOF

    @property
    def q(self) -> int:
        return self.p - self.n


@dataclass(frozen=True)
class GeometryDims:
    n: int
    p: int
    q: int


# --- file format ------------------------------------------------------------
#
# YAML document with top-level keys:
#   thrusters:  list of mappings with ThrusterSpec field names
#               ("lambda" for the direction-penalty strength); angles
#               (fixed_angle, azimuth_ref) in degrees
#   gains:      {mu, gamma, epsilon}
#   cbf:        "quadratic" | "norm"
#   task:       "min_squared_norm" | "azimuth_penalty"
#   integrator: {dt, method: "euler"|"rk4"}

_THRUSTER_REQUIRED = {"id", "kind", "lever_arm", "f_max", "rate_limit"}
_THRUSTER_OPTIONAL = {
    "fixed_angle",
    "zeta",
    "rho",
    "weight",
    "lambda",
    "azimuth_ref",
    "force_sign_ref",
}


def _float_field(raw: dict, key: str, owner: str) -> float:
    try:
        return float(raw[key])
    except (TypeError, ValueError):
        raise ConfigError(f"{owner}: field {key!r}={raw[key]!r} is not a number")


def _parse_thruster(raw: dict, index: int) -> ThrusterSpec:
    if not isinstance(raw, dict):
        raise ConfigError(f"thrusters[{index}] must be a mapping, got {raw!r}")
    ident = str(raw.get("id", f"thrusters[{index}]"))
    missing = _THRUSTER_REQUIRED - raw.keys()
    if missing:
        raise ConfigError(
            f"thruster {ident!r}: missing required field(s) {sorted(missing)}"
        )
    unknown = raw.keys() - _THRUSTER_REQUIRED - _THRUSTER_OPTIONAL
    if unknown:
        raise ConfigError(
            f"thruster {ident!r}: unknown field(s) {sorted(unknown)}"
        )

    kind_raw = raw["kind"]
    try:
        kind = ThrusterKind(kind_raw)
    except ValueError:
        choices = [k.value for k in ThrusterKind]
        raise ConfigError(
            f"thruster {ident!r}: kind={kind_raw!r} not one of {choices}"
        )

    lever = raw["lever_arm"]
    if not isinstance(lever, Sequence) or len(lever) != 2:
        raise ConfigError(
            f"thruster {ident!r}: lever_arm must be a 2-element list"
        )
    if kind is ThrusterKind.FIXED_DIRECTION and "fixed_angle" not in raw:
        raise ConfigError(
            f"thruster {ident!r}: fixed_direction requires fixed_angle"
        )

    kwargs = dict(
        id=ident,
        kind=kind,
        lever_arm=(float(lever[0]), float(lever[1])),
        f_max=_float_field(raw, "f_max", f"thruster {ident!r}"),
        rate_limit=_float_field(raw, "rate_limit", f"thruster {ident!r}"),
    )
    for key, attr in (
        ("zeta", "zeta"),
        ("rho", "rho"),
        ("weight", "weight"),
        ("lambda", "lam"),
    ):
        if key in raw:
            kwargs[attr] = _float_field(raw, key, f"thruster {ident!r}")
    for key in ("fixed_angle", "azimuth_ref"):
        if key in raw:
            kwargs[key] = math.radians(_float_field(raw, key, f"thruster {ident!r}"))
    if "force_sign_ref" in raw:
        kwargs["force_sign_ref"] = int(raw["force_sign_ref"])
    return ThrusterSpec(**kwargs)


def parse_config(text: str) -> VesselConfig:
    """Parse a YAML vessel document into a validated VesselConfig.

    Angles in the document are degrees and are converted to radians.
    Thruster ordering is normalized so steerable units come first.
    Raises ConfigError with the document position on syntax errors and
    with the offending thruster id on schema violations.
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
        raise ConfigError(f"config syntax error{where}: {exc}") from exc

    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping at top level")
    unknown = doc.keys() - {"thrusters", "gains", "cbf", "task", "integrator"}
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {sorted(unknown)}")
    raw_thrusters = doc.get("thrusters")
    if not isinstance(raw_thrusters, list) or not raw_thrusters:
        raise ConfigError("config must define a non-empty 'thrusters' list")

    thrusters = [_parse_thruster(raw, i) for i, raw in enumerate(raw_thrusters)]
    # Normalize ordering: steerable azimuth units first, fixed units after,
    # preserving relative order within each group.
    azimuth = [t for t in thrusters if t.kind is ThrusterKind.VARYING_AZIMUTH]
    fixed = [t for t in thrusters if t.kind is ThrusterKind.FIXED_DIRECTION]

    gains_raw = doc.get("gains", {})
    if not isinstance(gains_raw, dict):
        raise ConfigError("'gains' must be a mapping {mu, gamma, epsilon}")
    unknown = gains_raw.keys() - {"mu", "gamma", "epsilon"}
    if unknown:
        raise ConfigError(f"gains: unknown key(s) {sorted(unknown)}")
    gains = GainSettings(**{k: float(v) for k, v in gains_raw.items()})

    try:
        cbf = CbfVariant(doc.get("cbf", CbfVariant.QUADRATIC.value))
    except ValueError:
        raise ConfigError(
            f"cbf={doc['cbf']!r} not one of {[v.value for v in CbfVariant]}"
        )
    try:
        task = TaskKind(doc.get("task", TaskKind.MIN_SQUARED_NORM.value))
    except ValueError:
        raise ConfigError(
            f"task={doc['task']!r} not one of {[v.value for v in TaskKind]}"
        )

    integ_raw = doc.get("integrator", {})
    if not isinstance(integ_raw, dict):
        raise ConfigError("'integrator' must be a mapping {dt, method}")
    unknown = integ_raw.keys() - {"dt", "method"}
    if unknown:
        raise ConfigError(f"integrator: unknown key(s) {sorted(unknown)}")
    integ_kwargs = {}
    if "dt" in integ_raw:
        integ_kwargs["dt"] = float(integ_raw["dt"])
    if "method" in integ_raw:
        try:
            integ_kwargs["method"] = IntegratorMethod(integ_raw["method"])
        except ValueError:
            raise ConfigError(
                f"integrator: method={integ_raw['method']!r} not one of "
                f"{[v.value for v in IntegratorMethod]}"
            )

    return VesselConfig(
        thrusters=tuple(azimuth + fixed),
        gains=gains,
        cbf_variant=cbf,
        task=task,
        integrator=IntegratorSettings(**integ_kwargs),
    )


def serialize_config(cfg: VesselConfig) -> str:
    """Render a VesselConfig back to the YAML file format (angles in degrees)."""
    thrusters = []
    for t in cfg.thrusters:
        raw = {
            "id": t.id,
            "kind": t.kind.value,
            "lever_arm": [t.lever_arm[0], t.lever_arm[1]],
            "f_max": t.f_max,
            "rate_limit": t.rate_limit,
            "zeta": t.zeta,
            "rho": t.rho,
            "weight": t.weight,
            "lambda": t.lam,
        }
        if t.kind is ThrusterKind.VARYING_AZIMUTH:
            raw["azimuth_ref"] = math.degrees(t.azimuth_ref)
        else:
            raw["fixed_angle"] = math.degrees(t.fixed_angle)
            raw["force_sign_ref"] = t.force_sign_ref
        thrusters.append(raw)
    doc = {
        "thrusters": thrusters,
        "gains": {
            "mu": cfg.gains.mu,
            "gamma": cfg.gains.gamma,
            "epsilon": cfg.gains.epsilon,
        },
        "cbf": cfg.cbf_variant.value,
        "task": cfg.task.value,
        "integrator": {
            "dt": cfg.integrator.dt,
            "method": cfg.integrator.method.value,
        },
    }
    return yaml.safe_dump(doc, sort_keys=False)


def build_configuration_matrix(cfg: VesselConfig) -> np.ndarray:
    """Assemble the 3 x p thrust configuration matrix B.

    Steerable thrusters contribute a column pair acting on their (X, Y)
    force components; fixed thrusters one column along their constant
    direction.  The yaw row carries the moment arm (-ly, lx) so that the
    third component of B @ xi equals lx*Fy - ly*Fx summed over thrusters.
    """
    cols = []
    for t in cfg.thrusters:
        lx, ly = t.lever_arm
        if t.kind is ThrusterKind.VARYING_AZIMUTH:
            cols.append([1.0, 0.0, -ly])
            cols.append([0.0, 1.0, lx])
        else:
            ca, sa = math.cos(t.fixed_angle), math.sin(t.fixed_angle)
            cols.append([ca, sa, -ly * ca + lx * sa])
    return np.array(cols, dtype=float).T


def validate_geometry(B: np.ndarray, rank_tol: float = RANK_TOL) -> GeometryDims:
    """Check that B has full row rank and return its dimensions (n, p, q).

    Rank is judged from singular values: sigma_min > rank_tol * sigma_max.
    Raises GeometryError with the singular-value ratio otherwise.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n, p = B.shape
    sigma = np.linalg.svd(B, compute_uv=False)
    sigma_max = sigma[0]
    sigma_min = sigma[n - 1] if p >= n else 0.0
    if p < n or sigma_min <= rank_tol * sigma_max:
        raise GeometryError(
            "thrust configuration matrix is rank deficient: "
            f"sigma_min={sigma_min:.3e}, sigma_max={sigma_max:.3e} "
            f"(ratio {sigma_min / sigma_max if sigma_max else 0.0:.3e})"
        )
    return GeometryDims(n=n, p=p, q=p - n)


def with_overrides(cfg: VesselConfig, **thruster_fields) -> VesselConfig:
    """Copy cfg applying the given ThrusterSpec field values to every thruster.

    Convenience for parameter sweeps (e.g. setting lam or rho across the
    board); validation reruns on the copies.
    """
    return replace(
        cfg,
        thrusters=tuple(replace(t, **thruster_fields) for t in cfg.thrusters),
    )
