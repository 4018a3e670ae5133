"""Radial ODE integration from the singular origin, with event detection."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING, Iterator, List, Mapping, Optional, Tuple

import numpy as np
from scipy.integrate import DOP853, RK45, OdeSolution
from scipy.optimize import brentq

from .errors import ConfigError, DomainError
from .params import ProblemParams

if TYPE_CHECKING:  # pragma: no cover
    from .shooting import DecayEstimate


logger = logging.getLogger(__name__)

_SOLVERS = {"DOP853": DOP853, "RK45": RK45}


@dataclass(frozen=True)
class RadialState:
    r: float
    u: float
    du: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.r) and self.r >= 0.0):
            raise DomainError(f"radius must be finite and >= 0, got {self.r!r}")


@dataclass(frozen=True)
class IntegratorConfig:
    """Integrator tolerances, horizon and classification thresholds.

    ``zero_threshold`` and ``blowup_threshold`` are absolute overrides; when left
    unset they scale with the initial amplitude through ``zero_fraction`` and
    ``blowup_factor``. ``decay_slack`` is how far the tail log-slope of a horizon
    trajectory may exceed N - 2 before it stops counting as a ground-state
    candidate (M >= 0 only).
    """

    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    r0: float = 1e-4
    r_max: float = 100.0
    max_steps: int = 200_000
    n_samples: int = 2000
    zero_fraction: float = 0.25
    blowup_factor: float = 1e8
    decay_slack: float = 0.05
    zero_threshold: Optional[float] = None
    blowup_threshold: Optional[float] = None
    method: str = "DOP853"

    def __post_init__(self) -> None:
        if not (0.0 < self.r0 < self.r_max):
            raise ConfigError(f"need 0 < r0 < r_max, got r0={self.r0}, r_max={self.r_max}")
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ConfigError("tolerances must be positive")
        if self.max_steps < 1 or self.n_samples < 2:
            raise ConfigError("max_steps must be >= 1 and n_samples >= 2")
        if not (0.0 < self.zero_fraction < 1.0):
            raise ConfigError("zero_fraction must lie in (0, 1)")
        if self.blowup_factor <= 1.0:
            raise ConfigError("blowup_factor must exceed 1")
        if self.decay_slack < 0.0:
            raise ConfigError("decay_slack must be >= 0")
        if self.method not in _SOLVERS:
            raise ConfigError(f"unknown integration method {self.method!r}")

    def zero_threshold_for(self, a: float) -> float:
        if self.zero_threshold is not None:
            return self.zero_threshold
        return self.zero_fraction * a

    def blowup_threshold_for(self, a: float, params: ProblemParams) -> float:
        if self.blowup_threshold is not None:
            return self.blowup_threshold
        # |u'| of a decreasing solution scales like a^((p+1)/2), not like a.
        return self.blowup_factor * max(a, a ** ((params.p + 1.0) / 2.0))

    def with_overrides(self, **overrides) -> "IntegratorConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def as_dict(self) -> dict:
        return {
            "rel_tol": self.rel_tol,
            "abs_tol": self.abs_tol,
            "r0": self.r0,
            "r_max": self.r_max,
            "max_steps": self.max_steps,
            "n_samples": self.n_samples,
            "zero_fraction": self.zero_fraction,
            "blowup_factor": self.blowup_factor,
            "decay_slack": self.decay_slack,
            "zero_threshold": self.zero_threshold,
            "blowup_threshold": self.blowup_threshold,
            "method": self.method,
        }

    @classmethod
    def from_mapping(cls, config: Mapping[str, object], **overrides) -> "IntegratorConfig":
        """Build a config from ``RADIALLAB_*`` keys (Flask config or a plain dict)."""

        def _get(key, cast, default):
            value = config.get(key)
            if value in (None, ""):
                return default
            try:
                return cast(value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid value for {key}: {value!r}") from exc

        base = cls()
        cfg = cls(
            rel_tol=_get("RADIALLAB_RTOL", float, base.rel_tol),
            abs_tol=_get("RADIALLAB_ATOL", float, base.abs_tol),
            r0=_get("RADIALLAB_R0", float, base.r0),
            r_max=_get("RADIALLAB_RMAX", float, base.r_max),
            max_steps=_get("RADIALLAB_MAX_STEPS", int, base.max_steps),
            n_samples=_get("RADIALLAB_SAMPLES", int, base.n_samples),
            zero_fraction=_get("RADIALLAB_ZERO_FRACTION", float, base.zero_fraction),
            blowup_factor=_get("RADIALLAB_BLOWUP_FACTOR", float, base.blowup_factor),
            decay_slack=_get("RADIALLAB_DECAY_SLACK", float, base.decay_slack),
            method=_get("RADIALLAB_METHOD", str, base.method),
        )
        return cfg.with_overrides(**overrides)


class ClassificationTag(str, Enum):
    CROSSING = "Crossing"
    POSITIVE_MINIMUM = "PositiveMinimum"
    GROUND_STATE_CANDIDATE = "GroundStateCandidate"
    BLOW_UP = "BlowUp"
    UNDETERMINED = "Undetermined"


# Outcomes that make a valid shooting-bracket endpoint.
DICHOTOMY_TAGS = frozenset(
    {ClassificationTag.CROSSING, ClassificationTag.POSITIVE_MINIMUM, ClassificationTag.BLOW_UP}
)


@dataclass(frozen=True)
class Classification:
    tag: ClassificationTag
    r_event: Optional[float] = None
    u_event: Optional[float] = None
    decay_estimate: Optional["DecayEstimate"] = None

    @property
    def is_candidate(self) -> bool:
        return self.tag is ClassificationTag.GROUND_STATE_CANDIDATE


class Termination(str, Enum):
    HORIZON = "horizon"
    U_ZERO = "u_zero"
    DU_ZERO = "du_zero"
    BLOWUP = "blowup"
    NON_FINITE = "non_finite"
    STEP_UNDERFLOW = "step_underflow"
    STEP_BUDGET = "step_budget"


@dataclass(frozen=True)
class Event:
    kind: str
    r: float


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A sampled radial solution. Arrays are read-only once constructed."""

    params: ProblemParams
    a: float
    config: IntegratorConfig
    r: np.ndarray
    u: np.ndarray
    du: np.ndarray
    events: Tuple[Event, ...]
    termination: Termination
    classification: Classification = Classification(ClassificationTag.UNDETERMINED)
    crossing_bracket: Optional[Tuple[float, float, float, float]] = None
    n_steps: int = 0
    dense: Optional[OdeSolution] = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        for name in ("r", "u", "du"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.r.size and np.any(np.diff(self.r) <= 0):
            raise DomainError("trajectory radii must be strictly increasing")

    @property
    def samples(self) -> List[RadialState]:
        return [RadialState(float(r), float(u), float(du)) for r, u, du in zip(self.r, self.u, self.du)]

    def states(self) -> Iterator[RadialState]:
        for r, u, du in zip(self.r, self.u, self.du):
            yield RadialState(float(r), float(u), float(du))

    @property
    def r_end(self) -> float:
        return float(self.r[-1])

    def evaluate(self, r) -> Tuple[np.ndarray, np.ndarray]:
        """(u, u') at arbitrary radii inside the integrated range, from the dense output."""

        if self.dense is None:
            raise DomainError("trajectory carries no dense output")
        values = np.asarray(self.dense(np.asarray(r, dtype=float)))
        return values[0], values[1]

    def resample(self, r_grid) -> "Trajectory":
        r_grid = np.asarray(r_grid, dtype=float)
        u, du = self.evaluate(r_grid)
        return replace(self, r=r_grid, u=u, du=du)

    def with_classification(self, classification: Classification) -> "Trajectory":
        return replace(self, classification=classification)


def rhs(state: RadialState, params: ProblemParams) -> Tuple[float, float]:
    """(u', u'') from the radial equation at ``state``."""

    if state.r <= 0.0:
        raise DomainError("rhs is singular at r = 0; start from series_start")
    u, du = state.u, state.du
    ddu = -((params.N - 1) / state.r) * du - abs(u) ** (params.p - 1.0) * u - params.M * abs(du) ** params.q
    return du, ddu


def _vector_field(params: ProblemParams):
    n1, p, q, M = params.N - 1.0, params.p, params.q, params.M

    def fun(r, y):
        u, du = y[0], y[1]
        return np.array([du, -(n1 / r) * du - abs(u) ** (p - 1.0) * u - M * abs(du) ** q])

    return fun


def series_start(a: float, r0: float, params: ProblemParams) -> RadialState:
    """Second-order Taylor data at r0 for u(0) = a, u'(0) = 0."""

    if a <= 0:
        raise DomainError(f"initial amplitude must be positive, got {a}")
    if r0 <= 0:
        raise DomainError(f"series radius must be positive, got {r0}")
    ap = a**params.p
    return RadialState(r=r0, u=a - ap * r0 * r0 / (2.0 * params.N), du=-ap * r0 / params.N)


def series_residual(a: float, r0: float, params: ProblemParams) -> float:
    """Residual of the radial equation for the quadratic series at r0."""

    start = series_start(a, r0, params)
    ddu_series = -(a**params.p) / params.N
    return ddu_series - rhs(start, params)[1]


def aubin_talenti_lambda(a: float, N: int) -> float:
    """Concentration parameter of the critical bubble with u(0) = a."""

    if N < 3:
        raise DomainError("the critical bubble needs N >= 3")
    return N * (N - 2.0) * a ** (-4.0 / (N - 2.0))


def exact_aubin_talenti(r, lam: float, N: int):
    if N < 3:
        raise DomainError("the critical bubble needs N >= 3")
    if lam <= 0:
        raise DomainError("lambda must be positive")
    r = np.asarray(r, dtype=float)
    value = (N * (N - 2.0) * lam) ** ((N - 2.0) / 4.0) / (lam + r * r) ** ((N - 2.0) / 2.0)
    return float(value) if value.ndim == 0 else value


def exact_singular(r, X: float, p: float):
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise DomainError("X r^(-2/(p-1)) is singular at r = 0")
    value = X * r ** (-2.0 / (p - 1.0))
    return float(value) if value.ndim == 0 else value


def singular_profile_residual(r, X: float, params: ProblemParams) -> np.ndarray:
    """Relative residual of the radial equation for u = X r^(-2/(p-1))."""

    r = np.asarray(r, dtype=float)
    beta = 2.0 / (params.p - 1.0)
    u = X * r ** (-beta)
    du = -beta * X * r ** (-beta - 1.0)
    ddu = beta * (beta + 1.0) * X * r ** (-beta - 2.0)
    source = u**params.p
    gradient = params.M * np.abs(du) ** params.q
    laplace = ddu + (params.N - 1.0) / r * du
    scale = np.maximum.reduce([np.abs(ddu), np.abs((params.N - 1.0) / r * du), np.abs(source), np.abs(gradient)])
    return np.abs(laplace + source + gradient) / scale


def _locate(interp, index: int, r_lo: float, r_hi: float, target: float, xtol: float) -> float:
    def g(r):
        return float(interp(r)[index]) - target

    g_lo, g_hi = g(r_lo), g(r_hi)
    if g_lo == 0.0:
        return r_lo
    if g_hi == 0.0 or g_lo * g_hi > 0:
        return r_hi
    return brentq(g, r_lo, r_hi, xtol=xtol)


def integrate(params: ProblemParams, a: float, cfg: Optional[IntegratorConfig] = None) -> Trajectory:
    """Integrate from the series start at r0 to the first terminal event or r_max."""

    cfg = cfg or IntegratorConfig()
    start = series_start(a, cfg.r0, params)
    blowup = cfg.blowup_threshold_for(a, params)

    solver = _SOLVERS[cfg.method](
        _vector_field(params),
        cfg.r0,
        np.array([start.u, start.du]),
        cfg.r_max,
        rtol=cfg.rel_tol,
        atol=cfg.abs_tol,
    )

    ts: List[float] = [cfg.r0]
    interpolants = []
    events: List[Event] = []
    termination = Termination.HORIZON
    steps = 0

    while True:
        if steps >= cfg.max_steps:
            termination = Termination.STEP_BUDGET
            break
        t_old = solver.t
        y_old = solver.y.copy()
        message = solver.step()
        steps += 1

        if solver.status == "failed":
            termination = (
                Termination.NON_FINITE if not np.all(np.isfinite(solver.y)) else Termination.STEP_UNDERFLOW
            )
            logger.warning(
                "Radial integration stopped early",
                extra={"reason": termination.value, "r": float(t_old), "detail": message, "a": a},
            )
            if termination is Termination.NON_FINITE:
                events.append(Event(Termination.BLOWUP.value, float(t_old)))
            break

        y_new = solver.y
        if not np.all(np.isfinite(y_new)):
            termination = Termination.NON_FINITE
            events.append(Event(Termination.BLOWUP.value, float(t_old)))
            break

        interp = solver.dense_output()
        hits: List[Tuple[float, Termination]] = []
        if y_old[0] > 0.0 and y_new[0] <= 0.0:
            hits.append((_locate(interp, 0, t_old, solver.t, 0.0, cfg.abs_tol), Termination.U_ZERO))
        if y_old[1] < 0.0 and y_new[1] >= 0.0:
            hits.append((_locate(interp, 1, t_old, solver.t, 0.0, cfg.abs_tol), Termination.DU_ZERO))
        size_old = max(abs(y_old[0]), abs(y_old[1]))
        size_new = max(abs(y_new[0]), abs(y_new[1]))
        if size_old < blowup <= size_new:
            index = 0 if abs(y_new[0]) >= abs(y_new[1]) else 1
            target = math.copysign(blowup, y_new[index])
            hits.append((_locate(interp, index, t_old, solver.t, target, cfg.abs_tol), Termination.BLOWUP))

        if hits:
            r_hit, kind = min(hits, key=lambda hit: hit[0])
            r_hit = max(r_hit, np.nextafter(t_old, np.inf))
            ts.append(float(r_hit))
            interpolants.append(interp)
            events.append(Event(kind.value, float(r_hit)))
            termination = kind
            break

        ts.append(float(solver.t))
        interpolants.append(interp)
        if solver.status == "finished":
            events.append(Event(Termination.HORIZON.value, float(solver.t)))
            break

    if not interpolants:
        # Failure on the very first step: keep the start state only.
        trajectory = Trajectory(
            params=params,
            a=a,
            config=cfg,
            r=[start.r],
            u=[start.u],
            du=[start.du],
            events=tuple(events),
            termination=termination,
            n_steps=steps,
        )
        return trajectory.with_classification(classify(trajectory, cfg))

    dense = OdeSolution(ts, interpolants)
    r_end = ts[-1]
    grid = np.geomspace(cfg.r0, cfg.r_max, cfg.n_samples)
    grid = grid[grid < r_end]
    grid = np.append(grid, r_end)
    values = np.asarray(dense(grid))
    values[:, 0] = (start.u, start.du)

    bracket = None
    if termination is Termination.U_ZERO:
        h = 1e-6 * r_end
        u_lo = float(dense(r_end - h)[0])
        u_hi = float(dense(r_end + h)[0])
        bracket = (r_end - h, r_end + h, u_lo, u_hi)

    trajectory = Trajectory(
        params=params,
        a=a,
        config=cfg,
        r=grid,
        u=values[0],
        du=values[1],
        events=tuple(events),
        termination=termination,
        crossing_bracket=bracket,
        n_steps=steps,
        dense=dense,
    )
    classification = classify(trajectory, cfg)
    logger.debug(
        "Integrated radial trajectory",
        extra={"a": a, "classification": classification.tag.value, "r_end": r_end, "steps": steps},
    )
    return trajectory.with_classification(classification)


def _event_radius(traj: Trajectory, kind: Termination, i: int) -> float:
    for event in traj.events:
        if event.kind == kind.value:
            return event.r
    return float(traj.r[i])


def classify(traj: Trajectory, cfg: Optional[IntegratorConfig] = None) -> Classification:
    """Shooting outcome of a trajectory, decided on its samples and terminal event."""

    cfg = cfg or traj.config
    u, du = traj.u, traj.du
    size = np.maximum(np.abs(u), np.abs(du))
    blowup = cfg.blowup_threshold_for(traj.a, traj.params)

    def _first(mask) -> Optional[int]:
        hits = np.flatnonzero(mask)
        return int(hits[0]) if hits.size else None

    i_cross = _first(u[1:] <= 0.0)
    i_turn = _first(du[1:] >= 0.0)
    i_blow = _first(~np.isfinite(size[1:]) | (size[1:] >= blowup))
    # The last sample sits on the located root, where u or u' may round to either sign.
    if u.size > 1 and i_cross is None and traj.termination is Termination.U_ZERO:
        i_cross = u.size - 2
    if u.size > 1 and i_turn is None and traj.termination is Termination.DU_ZERO:
        i_turn = u.size - 2
    candidates = [
        (index + 1, tag)
        for index, tag in (
            (i_cross, ClassificationTag.CROSSING),
            (i_turn, ClassificationTag.POSITIVE_MINIMUM),
            (i_blow, ClassificationTag.BLOW_UP),
        )
        if index is not None
    ]

    if not candidates and traj.termination in (Termination.BLOWUP, Termination.NON_FINITE):
        return Classification(ClassificationTag.BLOW_UP, r_event=_event_radius(traj, Termination.BLOWUP, -1))

    if candidates:
        i, tag = min(candidates, key=lambda item: (item[0], item[1] is not ClassificationTag.CROSSING))
        if tag is ClassificationTag.CROSSING:
            return Classification(tag, r_event=_event_radius(traj, Termination.U_ZERO, i))
        if tag is ClassificationTag.BLOW_UP:
            return Classification(tag, r_event=_event_radius(traj, Termination.BLOWUP, i))
        if u[i] > 0.0:
            return Classification(tag, r_event=_event_radius(traj, Termination.DU_ZERO, i), u_event=float(u[i]))
        return Classification(ClassificationTag.UNDETERMINED)

    reached_horizon = traj.termination is Termination.HORIZON or traj.r_end >= cfg.r_max * (1.0 - 1e-12)
    if (
        reached_horizon
        and np.all(u > 0.0)
        and np.all(du[1:] < 0.0)
        and u[-1] < cfg.zero_threshold_for(traj.a)
    ):
        # For M >= 0 the solution is superharmonic, so a positive tail satisfies u >= c r^(2-N).
        tail_slope = -traj.r_end * float(du[-1]) / float(u[-1])
        if traj.params.M >= 0.0 and tail_slope > (traj.params.N - 2.0) + cfg.decay_slack:
            logger.debug(
                "Horizon tail falls too fast for a ground state",
                extra={"a": traj.a, "tail_slope": tail_slope, "r_end": traj.r_end},
            )
            return Classification(ClassificationTag.UNDETERMINED)

        from .shooting import decay_exponent

        try:
            estimate = decay_exponent(traj)
        except DomainError:
            estimate = None
        return Classification(ClassificationTag.GROUND_STATE_CANDIDATE, decay_estimate=estimate)

    return Classification(ClassificationTag.UNDETERMINED)
