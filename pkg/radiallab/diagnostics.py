"""Energy functions, log-variable systems and a priori bound checks along trajectories.

Every pointwise function accepts either a :class:`RadialState` or a whole
:class:`Trajectory`; both expose ``r``, ``u`` and ``du`` and the arithmetic is
vectorised, so a trajectory returns arrays.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, NamedTuple, Optional, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

from .errors import DomainError, NotApplicableError, UnsupportedBoundError
from .params import DEFAULT_EQ_TOL, ProblemParams, critical_constants, exponent_K
from .radial_ode import RadialState, Trajectory


logger = logging.getLogger(__name__)


def _scalar(value):
    value = np.asarray(value)
    return float(value) if value.ndim == 0 else value


def odd_power(y, q: float):
    """|y|^(q-1) y, the continuation of y^q to negative y."""

    y = np.asarray(y, dtype=float)
    return np.abs(y) ** (q - 1.0) * y


def _omega(params: ProblemParams) -> float:
    p, q = params.p, params.q
    return ((p + 1.0) * q - 2.0 * p) / (p - 1.0)


# -- energy ---------------------------------------------------------------


def energy_H(state, params: ProblemParams):
    u = np.asarray(state.u, dtype=float)
    du = np.asarray(state.du, dtype=float)
    return _scalar(np.abs(u) ** (params.p + 1.0) / (params.p + 1.0) + 0.5 * du * du)


def energy_Hprime(state, params: ProblemParams):
    r = np.asarray(state.r, dtype=float)
    if np.any(r <= 0):
        raise DomainError("H' needs r > 0")
    du = np.asarray(state.du, dtype=float)
    return _scalar(params.M * np.abs(du) ** (params.q + 1.0) - (params.N - 1.0) / r * du * du)


class EnergyMonotonicity(NamedTuple):
    max_Hprime: float
    max_H_increase: float
    nonincreasing: bool


def energy_monotonicity(traj: Trajectory, rel_tol: float = 1e-14) -> EnergyMonotonicity:
    """Pointwise sign of H' and sample-to-sample behaviour of H."""

    H = energy_H(traj, traj.params)
    Hp = energy_Hprime(traj, traj.params)
    increase = float(np.max(np.diff(H))) if H.size > 1 else 0.0
    scale = float(np.max(np.abs(H))) if H.size else 1.0
    return EnergyMonotonicity(
        max_Hprime=float(np.max(Hp)),
        max_H_increase=increase,
        nonincreasing=increase <= rel_tol * max(scale, 1.0),
    )


# -- Lane-Emden log variables ---------------------------------------------


@dataclass(frozen=True)
class LogStateXY:
    t: float
    x: float
    y: float


@dataclass(frozen=True)
class LogStateXiEta:
    t: float
    xi: float
    eta: float


def to_log_xy(state, params: ProblemParams) -> LogStateXY:
    r = np.asarray(state.r, dtype=float)
    if np.any(r <= 0):
        raise DomainError("log variables need r > 0")
    p = params.p
    x = r ** (2.0 / (p - 1.0)) * np.asarray(state.u, dtype=float)
    y = -(r ** ((p + 1.0) / (p - 1.0))) * np.asarray(state.du, dtype=float)
    return LogStateXY(t=_scalar(np.log(r)), x=_scalar(x), y=_scalar(y))


def from_log_xy(ls: LogStateXY, params: ProblemParams) -> Tuple[object, object, object]:
    """(r, u, u') recovered from (t, x, y)."""

    p = params.p
    r = np.exp(np.asarray(ls.t, dtype=float))
    u = r ** (-2.0 / (p - 1.0)) * np.asarray(ls.x, dtype=float)
    du = -(r ** (-(p + 1.0) / (p - 1.0))) * np.asarray(ls.y, dtype=float)
    return _scalar(r), _scalar(u), _scalar(du)


def xy_rhs(ls: LogStateXY, t: float, params: ProblemParams) -> Tuple[float, float]:
    """Right-hand side of the perturbed Lane-Emden system; y^q is the odd extension."""

    p = params.p
    K = exponent_K(params.N, p)
    x, y = np.asarray(ls.x, dtype=float), np.asarray(ls.y, dtype=float)
    dx = 2.0 * x / (p - 1.0) - y
    dy = -K * y + odd_power(x, p) + params.M * np.exp(-_omega(params) * t) * odd_power(y, params.q)
    return _scalar(dx), _scalar(dy)


def leighton_N(ls: LogStateXY, t: float, params: ProblemParams):
    p, q, M = params.p, params.q, params.M
    x, y = np.asarray(ls.x, dtype=float), np.asarray(ls.y, dtype=float)
    if np.any(x < 0):
        raise DomainError("the Leighton function needs x >= 0")
    K = exponent_K(params.N, p)
    z = 2.0 * x / (p - 1.0) - y
    value = (
        K / (p - 1.0) * x * x
        - x ** (p + 1.0) / (p + 1.0)
        - (2.0 / (p - 1.0)) ** q * M * np.exp(-_omega(params) * t) * x ** (q + 1.0) / (q + 1.0)
        - 0.5 * z * z
    )
    return _scalar(value)


def leighton_Nprime(ls: LogStateXY, t: float, params: ProblemParams):
    p, q, M = params.p, params.q, params.M
    x, y = np.asarray(ls.x, dtype=float), np.asarray(ls.y, dtype=float)
    if np.any(x < 0):
        raise DomainError("the Leighton function needs x >= 0")
    K = exponent_K(params.N, p)
    L = K - 2.0 / (p - 1.0)
    omega = _omega(params)
    weight = M * np.exp(-omega * t)
    z = 2.0 * x / (p - 1.0) - y
    value = z * (L * z - weight * ((2.0 * x / (p - 1.0)) ** q - odd_power(y, q))) + omega * (
        2.0 / (p - 1.0)
    ) ** q * weight * x ** (q + 1.0) / (q + 1.0)
    return _scalar(value)


def lane_emden_fixed_point(params: ProblemParams) -> Tuple[float, float]:
    """Equilibrium (x*, y*) of the unperturbed log system; needs p > N/(N-2)."""

    p = params.p
    K = exponent_K(params.N, p)
    if K <= 0:
        raise NotApplicableError("the log system has a positive equilibrium only for p > N/(N-2)")
    x_star = (2.0 * K / (p - 1.0)) ** (1.0 / (p - 1.0))
    return x_star, 2.0 * x_star / (p - 1.0)


# -- Riccati log variables --------------------------------------------------


def _check_q_not_two(params: ProblemParams) -> None:
    if abs(params.q - 2.0) <= DEFAULT_EQ_TOL:
        raise NotApplicableError("the (xi, eta) variables degenerate at q = 2")


def to_log_xieta(state, params: ProblemParams) -> LogStateXiEta:
    _check_q_not_two(params)
    r = np.asarray(state.r, dtype=float)
    if np.any(r <= 0):
        raise DomainError("log variables need r > 0")
    q = params.q
    xi = r ** ((2.0 - q) / (q - 1.0)) * np.asarray(state.u, dtype=float)
    eta = -(r ** (1.0 / (q - 1.0))) * np.asarray(state.du, dtype=float)
    return LogStateXiEta(t=_scalar(np.log(r)), xi=_scalar(xi), eta=_scalar(eta))


def from_log_xieta(ls: LogStateXiEta, params: ProblemParams):
    q = params.q
    r = np.exp(np.asarray(ls.t, dtype=float))
    u = r ** (-(2.0 - q) / (q - 1.0)) * np.asarray(ls.xi, dtype=float)
    du = -(r ** (-1.0 / (q - 1.0))) * np.asarray(ls.eta, dtype=float)
    return _scalar(r), _scalar(u), _scalar(du)


def xieta_rhs(ls: LogStateXiEta, t: float, params: ProblemParams) -> Tuple[float, float]:
    _check_q_not_two(params)
    N, p, q = params.N, params.p, params.q
    omega_bar = (p - 1.0) * _omega(params) / (q - 1.0)
    xi, eta = np.asarray(ls.xi, dtype=float), np.asarray(ls.eta, dtype=float)
    dxi = (2.0 - q) / (q - 1.0) * xi - eta
    deta = (
        -((N - 1.0) * q - N) / (q - 1.0) * eta
        + np.exp(omega_bar * t) * odd_power(xi, p)
        + params.M * odd_power(eta, q)
    )
    return _scalar(dxi), _scalar(deta)


def riccati_fixed_point(params: ProblemParams) -> Tuple[float, float]:
    """Equilibrium (xi*, eta*) of the autonomous limit; needs M > 0 and q > N/(N-1)."""

    _check_q_not_two(params)
    N, q, M = params.N, params.q, params.M
    if M <= 0 or (N - 1.0) * q - N <= 0:
        raise NotApplicableError("the Riccati equilibrium needs M > 0 and q > N/(N-1)")
    eta_star = (((N - 1.0) * q - N) / ((q - 1.0) * M)) ** (1.0 / (q - 1.0))
    return eta_star * (q - 1.0) / (2.0 - q), eta_star


@dataclass(frozen=True, eq=False)
class LogSystemRun:
    system: str
    r: np.ndarray
    u: np.ndarray
    du: np.ndarray
    odd_extension_used: bool


def integrate_log_system(
    traj: Trajectory,
    system: str,
    r_start: float,
    r_stop: float,
    rtol: float = 1e-11,
    atol: float = 1e-13,
) -> LogSystemRun:
    """Integrate the log-variable system in t = ln r from the trajectory state at r_start.

    The result is sampled at the trajectory radii inside [r_start, r_stop] and
    mapped back to (u, u').
    """

    params = traj.params
    u0, du0 = traj.evaluate(r_start)
    start = RadialState(r_start, float(u0), float(du0))

    if system == "xy":
        ls = to_log_xy(start, params)
        y0 = [ls.x, ls.y]

        def fun(t, v):
            return list(xy_rhs(LogStateXY(t, v[0], v[1]), t, params))

    elif system == "xieta":
        ls = to_log_xieta(start, params)
        y0 = [ls.xi, ls.eta]

        def fun(t, v):
            return list(xieta_rhs(LogStateXiEta(t, v[0], v[1]), t, params))

    else:
        raise DomainError(f"unknown log system {system!r}")

    radii = traj.r[(traj.r >= r_start) & (traj.r <= r_stop)]
    t_eval = np.log(radii)
    solution = solve_ivp(
        fun,
        (math.log(r_start), math.log(r_stop)),
        y0,
        method="DOP853",
        t_eval=np.clip(t_eval, math.log(r_start), math.log(r_stop)),
        rtol=rtol,
        atol=atol,
    )
    if solution.status < 0:
        raise DomainError(f"log-system integration failed: {solution.message}")

    if system == "xy":
        r, u, du = from_log_xy(LogStateXY(solution.t, solution.y[0], solution.y[1]), params)
    else:
        r, u, du = from_log_xieta(LogStateXiEta(solution.t, solution.y[0], solution.y[1]), params)
    odd = bool(np.any(solution.y[1] < 0))
    if odd:
        logger.warning("Log system left the decreasing regime", extra={"system": system, "M": params.M})
    return LogSystemRun(system, np.atleast_1d(r), np.atleast_1d(u), np.atleast_1d(du), odd)


def log_system_consistency(
    traj: Trajectory,
    system: str,
    r_range: Tuple[float, float] = (0.01, 10.0),
    floor: float = 1e-2,
) -> float:
    """Largest relative difference in u between r- and t-integration.

    Only radii where u >= floor * a enter, so the zero of u does not dominate.
    """

    r_lo = max(r_range[0], float(traj.r[0]))
    r_hi = min(r_range[1], traj.r_end)
    run = integrate_log_system(traj, system, r_lo, r_hi)
    reference, _ = traj.evaluate(run.r)
    mask = reference >= floor * traj.a
    if not np.any(mask):
        raise DomainError("no radii with u above the comparison floor")
    return float(np.max(np.abs(run.u[mask] - reference[mask]) / np.abs(reference[mask])))


# -- Pohozaev-Pucci-Serrin functions ----------------------------------------


@dataclass(frozen=True)
class PPSParams:
    kappa: float
    alpha: float
    gamma: float
    theta: float

    def __post_init__(self) -> None:
        if self.kappa <= 0 or self.alpha <= 0:
            raise DomainError("kappa and alpha must be positive")


def pps_Z(state, pp: PPSParams, params: ProblemParams):
    r = np.asarray(state.r, dtype=float)
    if np.any(r <= 0):
        raise DomainError("Z needs r > 0")
    u = np.asarray(state.u, dtype=float)
    du = np.asarray(state.du, dtype=float)
    p, q = params.p, params.q
    value = r**pp.kappa * (
        0.5 * du * du
        + np.abs(u) ** (p + 1.0) / (p + 1.0)
        + pp.alpha * u * du / r
        - pp.gamma * u * np.abs(du) ** q
    )
    return _scalar(value)


def pps_U(state, pp: PPSParams, params: ProblemParams):
    r = np.asarray(state.r, dtype=float)
    if np.any(r <= 0):
        raise DomainError("U needs r > 0")
    u = np.asarray(state.u, dtype=float)
    du = np.asarray(state.du, dtype=float)
    N, p, q, M = params.N, params.p, params.q, params.M
    kappa, alpha, gamma, theta = pp.kappa, pp.alpha, pp.gamma, pp.theta
    g = np.abs(du)
    up1 = np.abs(u) ** (p + 1.0)
    value = (
        (kappa / 2.0 + alpha + 1.0 - N) * du * du
        + (kappa / (p + 1.0) - alpha) * up1
        + alpha * (kappa - N) * u * du / r
        + (theta / (p + 1.0) - gamma * q) * r * up1 * g ** (q - 1.0)
        + (M + gamma + theta / 2.0) * r * g ** (q + 1.0)
        + (((N - 1.0) * q - kappa) * gamma - alpha * (theta + M)) * u * g**q
        - gamma * (theta + q * M) * r * u * g ** (2.0 * q - 1.0)
    )
    return _scalar(value)


def pps_identity_residual(traj: Trajectory, pp: PPSParams, r_range: Tuple[float, float], h: float) -> float:
    """max |dZ/dr + theta |u'|^(q-1) Z - r^(kappa-1) U| with centred differences of step h."""

    params = traj.params
    r_lo, r_hi = r_range
    grid = np.arange(r_lo, r_hi + 0.5 * h, h)
    if grid.size < 3:
        raise DomainError("the residual window needs at least three grid points")
    u, du = traj.evaluate(grid)
    sampled = _Samples(grid, u, du)
    Z = pps_Z(sampled, pp, params)
    U = pps_U(sampled, pp, params)
    dZ = (Z[2:] - Z[:-2]) / (2.0 * h)
    inner = slice(1, -1)
    residual = dZ + pp.theta * np.abs(du[inner]) ** (params.q - 1.0) * Z[inner] - grid[inner] ** (pp.kappa - 1.0) * U[inner]
    return float(np.max(np.abs(residual)))


class _Samples(NamedTuple):
    r: np.ndarray
    u: np.ndarray
    du: np.ndarray


def pps_convergence_order(traj: Trajectory, pp: PPSParams, r_range: Tuple[float, float], h: float) -> float:
    """Observed order of the identity residual when the step is halved."""

    coarse = pps_identity_residual(traj, pp, r_range, h)
    fine = pps_identity_residual(traj, pp, r_range, h / 2.0)
    return math.log2(coarse / fine)


def theorem54_pps(params: ProblemParams) -> Tuple[PPSParams, float, float, float]:
    """Weights that cancel the u'^2 and u^(p+1) terms of U, with the factor coefficients A, B, C."""

    N, p, q, M = params.N, params.p, params.q, params.M
    kappa = 2.0 * (p + 1.0) * (N - 1.0) / (p + 3.0)
    gamma = -2.0 * M / (q * (p + 1.0) + 2.0)
    pp = PPSParams(kappa=kappa, alpha=kappa / (p + 1.0), gamma=gamma, theta=q * (p + 1.0) * gamma)
    A = (N - 1.0) * (N + 2.0 - (N - 2.0) * p)
    B = 2.0 * (N - 1.0) * (p - q)
    C = q * (q * (p + 1.0) - 2.0 * p)
    return pp, A, B, C


def pps_U_factored(state, params: ProblemParams, *, as_printed: bool = False):
    """Factored U for the theorem54_pps weights on decreasing positive states.

    The quadratic coefficient is C M^2; ``as_printed=True`` uses C M instead.
    States with u <= 0 or u' >= 0 lie outside the derivation regime and give NaN.
    """

    r = np.asarray(state.r, dtype=float)
    u = np.asarray(state.u, dtype=float)
    du = np.asarray(state.du, dtype=float)
    if np.any(r <= 0):
        raise DomainError("U needs r > 0")
    p, q, M = params.p, params.q, params.M
    _, A, B, C = theorem54_pps(params)
    g = np.abs(du)
    chi = (p + 3.0) / (2.0 + q * (p + 1.0)) * r * g ** (q - 1.0)
    quadratic = C * M if as_printed else C * M * M
    value = 2.0 / (p + 3.0) ** 2 * (u * g / r) * (A + B * M * chi + quadratic * chi * chi)
    value = np.where((u > 0) & (du < 0), value, np.nan)
    return _scalar(value)


def in_derivation_regime(state) -> bool:
    return bool(np.all((np.asarray(state.u) > 0) & (np.asarray(state.du) < 0)))


def factored_discrepancy(state, params: ProblemParams, *, as_printed: bool = False):
    """|factored U - U| / (|U| + 1) on the given states."""

    pp, _, _, _ = theorem54_pps(params)
    direct = np.asarray(pps_U(state, pp, params))
    factored = np.asarray(pps_U_factored(state, params, as_printed=as_printed))
    return _scalar(np.abs(factored - direct) / (np.abs(direct) + 1.0))


# -- a priori bounds --------------------------------------------------------


@dataclass(frozen=True)
class BoundReport:
    bound_id: str
    minimal_constant: float
    explicit_constant: Optional[float]
    satisfied_with_explicit_constant: Optional[bool]
    r_range: Tuple[float, float]
    r_at_sup: float
    convention: str = ""

    def as_dict(self) -> Dict[str, object]:
        return {
            "bound_id": self.bound_id,
            "minimal_constant": self.minimal_constant,
            "explicit_constant": self.explicit_constant,
            "satisfied_with_explicit_constant": self.satisfied_with_explicit_constant,
            "r_range": list(self.r_range),
            "r_at_sup": self.r_at_sup,
            "convention": self.convention,
        }


def _gradient_average_constant(params: ProblemParams) -> Optional[float]:
    N, q, M = params.N, params.q, params.M
    base = (q - 1.0) * (N - 1.0) - 1.0
    if M <= 0 or base <= 0:
        return None
    return (base / ((q - 1.0) * M)) ** (1.0 / (q - 1.0))


def _sup(traj: Trajectory, quantity, r_lo: float, r_hi: float) -> Tuple[float, float]:
    """Supremum of quantity(r, u, du) over the samples in [r_lo, r_hi], polished on the dense output."""

    mask = (traj.r >= r_lo) & (traj.r <= r_hi)
    radii = traj.r[mask]
    if radii.size == 0:
        raise DomainError("no samples in the bound window")
    values = quantity(radii, traj.u[mask], traj.du[mask])
    finite = np.where(np.isfinite(values), values, -np.inf)
    i = int(np.argmax(finite))
    best_r, best = float(radii[i]), float(finite[i])
    if traj.dense is not None and 0 < i < radii.size - 1:

        def negated(r):
            u, du = traj.evaluate(r)
            return -float(quantity(np.asarray(r), u, du))

        polish = minimize_scalar(
            negated,
            bounds=(float(radii[i - 1]), float(radii[i + 1])),
            method="bounded",
            options={"xatol": 1e-12 * max(1.0, best_r)},
        )
        if polish.success and -polish.fun > best:
            best_r, best = float(polish.x), float(-polish.fun)
    return best, best_r


SUPPORTED_BOUNDS = ("decay_21", "grad_22", "grad_23", "decay_24", "thmA_121", "thmE_129", "energy_53")


def bound_check(traj: Trajectory, bound_id: str, eq_tol: float = DEFAULT_EQ_TOL) -> BoundReport:
    """Smallest constant making the named a priori inequality hold along the trajectory."""

    params = traj.params
    N, p, q, M = params.N, params.p, params.q, params.M
    r_lo, R = float(traj.r[0]), traj.r_end
    constants = critical_constants(params, eq_tol)
    convention = ""
    explicit_constant: Optional[float] = None

    if bound_id == "decay_21":
        beta = 2.0 / (p - 1.0)
        value, r_at = _sup(traj, lambda r, u, du: u * r**beta, r_lo, R)
        explicit_constant = constants.c0_decay
    elif bound_id == "grad_22":
        beta = (p + 1.0) / (p - 1.0)
        value, r_at = _sup(traj, lambda r, u, du: np.abs(du) * r**beta, r_lo, R)
        explicit_constant = (N - 2.0) * constants.c0_decay if N >= 3 else None
    elif bound_id == "grad_23":
        value, r_at = _sup(traj, lambda r, u, du: np.abs(du) * r ** (1.0 / (q - 1.0)), r_lo, R)
        explicit_constant = _gradient_average_constant(params)
    elif bound_id == "decay_24":
        if q >= 2.0:
            raise NotApplicableError("the averaged decay bound needs q < 2")
        value, r_at = _sup(traj, lambda r, u, du: u * r ** ((2.0 - q) / (q - 1.0)), r_lo, R)
        base = _gradient_average_constant(params)
        explicit_constant = (q - 1.0) / (2.0 - q) * base if base is not None else None
    elif bound_id == "thmA_121":
        if M <= 0:
            raise NotApplicableError("the uniform gradient bound needs M > 0")
        interior = M ** (-(p + 1.0) / ((p + 1.0) * q - 2.0 * p))

        def ratio(r, u, du):
            dist = np.maximum(R - r, 0.0)
            with np.errstate(divide="ignore"):
                boundary = np.where(dist > 0, (M * dist) ** (-1.0 / (q - 1.0)), np.inf)
            return np.abs(du) / (interior + boundary)

        value, r_at = _sup(traj, ratio, r_lo, R)
        convention = f"dist(x, boundary) = R - r on the ball of radius R = {R!r}"
    elif bound_id == "thmE_129":
        beta = 2.0 / (p - 1.0)
        value, r_at = _sup(traj, lambda r, u, du: u * r**beta, r_lo, 0.5 * R)
        convention = f"punctured ball of radius R = {R!r}, evaluated on r <= R/2"
    elif bound_id == "energy_53":
        cap = math.sqrt(2.0 / (p + 1.0)) * traj.a ** ((p + 1.0) / 2.0)
        value, r_at = _sup(traj, lambda r, u, du: np.abs(du) / cap, r_lo, R)
        explicit_constant = 1.0
    else:
        raise UnsupportedBoundError(f"unsupported bound {bound_id!r}; choose one of {', '.join(SUPPORTED_BOUNDS)}")

    satisfied = None if explicit_constant is None else value <= explicit_constant
    return BoundReport(
        bound_id=bound_id,
        minimal_constant=max(value, 0.0),
        explicit_constant=explicit_constant,
        satisfied_with_explicit_constant=satisfied,
        r_range=(r_lo, R),
        r_at_sup=r_at,
        convention=convention,
    )
