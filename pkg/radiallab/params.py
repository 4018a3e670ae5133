"""Problem parameters, closed-form constants and scaling transforms."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, replace
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import DomainError, NotApplicableError, NotReducibleError, SearchExhaustedError


logger = logging.getLogger(__name__)

DEFAULT_EQ_TOL = 1e-12
NOT_APPLICABLE = "n/a"


@dataclass(frozen=True)
class ProblemParams:
    """The quadruple (N, p, q, M) of -Lap u = |u|^(p-1) u + M |grad u|^q."""

    N: int
    p: float
    q: float
    M: float

    def __post_init__(self) -> None:
        if isinstance(self.N, bool) or int(self.N) != self.N or self.N < 1:
            raise DomainError(f"N must be an integer >= 1, got {self.N!r}")
        object.__setattr__(self, "N", int(self.N))
        for name in ("p", "q", "M"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.p <= 1.0:
            raise DomainError(f"p must be > 1, got {self.p}")
        if self.q <= 1.0:
            raise DomainError(f"q must be > 1, got {self.q}")

    @property
    def q_critical(self) -> float:
        return q_critical(self.p)

    def with_M(self, M: float) -> "ProblemParams":
        return replace(self, M=M)

    def at_critical_q(self) -> "ProblemParams":
        """Same (N, p, M) with q moved onto 2p/(p+1)."""

        return replace(self, q=q_critical(self.p))

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


def q_critical(p: float) -> float:
    return 2.0 * p / (p + 1.0)


def exponent_K(N: int, p: float) -> float:
    return ((N - 2) * p - N) / (p - 1.0)


def mu_star(N: int, p: float) -> Optional[float]:
    """Threshold -mu* below which singular separable solutions exist; None when N-(N-2)p < 0."""

    base = N - (N - 2) * p
    if base < 0:
        return None
    return (p + 1.0) * (base / (2.0 * p)) ** (p / (p + 1.0))


@dataclass(frozen=True)
class CriticalConstants:
    """Every closed-form exponent or threshold attached to (N, p, q).

    Partial constants are ``None`` outside their regime; the Serrin and Sobolev
    exponents use ``math.inf`` for N <= 2.
    """

    N: int
    p: float
    q: float
    p_serrin: float
    p_sobolev: float
    p_sphere_sobolev: float
    q_crit: float
    K: float
    L: float
    omega: float
    omega_bar: float
    mu_star: Optional[float]
    m_dagger: float
    Q_Np: float
    q_bar: Optional[float]
    q_bar_ambiguous: bool
    c_thmAprime: Optional[float]
    c0_decay: float
    smallness_ratio: Optional[float]

    def as_dict(self) -> Dict[str, object]:
        """JSON-safe mapping; ``None`` becomes ``"n/a"`` and infinities become ``"inf"``."""

        rendered: Dict[str, object] = {}
        for key, value in asdict(self).items():
            if value is None:
                rendered[key] = NOT_APPLICABLE
            elif isinstance(value, float) and math.isinf(value):
                rendered[key] = "inf"
            else:
                rendered[key] = value
        return rendered


# Human-readable definition of each constant, printed next to its value by the CLI.
CONSTANT_DEFINITIONS: Dict[str, str] = {
    "p_serrin": "N/(N-2) for N>=3, inf otherwise",
    "p_sobolev": "(N+2)/(N-2) for N>=3, inf otherwise",
    "p_sphere_sobolev": "(N+1)/(N-3) for N>=4, inf otherwise",
    "q_crit": "2p/(p+1)",
    "K": "((N-2)p-N)/(p-1)",
    "L": "K-2/(p-1)",
    "omega": "((p+1)q-2p)/(p-1)",
    "omega_bar": "(p-1)*omega/(q-1)",
    "mu_star": "(p+1)*((N-(N-2)p)/(2p))^(p/(p+1)), defined when N-(N-2)p>=0",
    "m_dagger": "((p-1)/(p+1))^((p-1)/(p+1)) * (N(p+1)^2/(4p))^(p/(p+1))",
    "Q_Np": "2(N-1)p/(2N+p+1)",
    "q_bar": "root in (q_crit, p) of (N-1)(X-p)^2-(N+2-(N-2)p)((p+1)X-2p)X, N>=3 and p_serrin<p<p_sobolev",
    "q_bar_ambiguous": "true when both quadratic roots fall in (q_crit, p)",
    "c_thmAprime": "(4^(q'-1) p^q' N^q')^(-(q-1)/(2p-(p+1)q)), q'=q/(q-1), q<q_crit",
    "c0_decay": "(2N/(p-1))^(1/(p-1))",
    "smallness_ratio": "((N-2)p-N-2)/((N-2)p+3N-2), N>=3 and p>p_sobolev",
}


def _q_bar(N: int, p: float) -> Tuple[Optional[float], bool]:
    if N < 3:
        return None, False
    p_serrin = N / (N - 2.0)
    p_sobolev = (N + 2.0) / (N - 2.0)
    if not (p_serrin < p < p_sobolev):
        return None, False

    b = N + 2.0 - (N - 2.0) * p
    a2 = (N - 1.0) - b * (p + 1.0)
    a1 = -2.0 * p * (N - 1.0) + 2.0 * p * b
    a0 = (N - 1.0) * p * p

    if a2 == 0.0:
        roots = [-a0 / a1] if a1 != 0.0 else []
    else:
        disc = a1 * a1 - 4.0 * a2 * a0
        if disc < 0.0:
            return None, False
        sq = math.sqrt(disc)
        # Cancellation-free pair.
        t = -0.5 * (a1 + math.copysign(sq, a1))
        roots = [t / a2]
        if t != 0.0:
            roots.append(a0 / t)

    low = q_critical(p)
    inside = sorted(root for root in roots if low < root < p)
    if not inside:
        return None, False
    if len(inside) > 1:
        logger.warning("Both quadratic roots lie in (q_crit, p)", extra={"N": N, "p": p, "roots": inside})
        return inside[0], True
    return inside[0], False


def q_bar_residual(N: int, p: float, X: float) -> float:
    return (N - 1.0) * (X - p) ** 2 - (N + 2.0 - (N - 2.0) * p) * ((p + 1.0) * X - 2.0 * p) * X


def small_M_existence_bound(N: int, p: float) -> Optional[float]:
    """Explicit bound on M below which small-M ground states are guaranteed (q < 2 branch)."""

    if N < 3 or p <= (N + 2.0) / (N - 2.0):
        return None
    return ((N - 2.0) * p - N - 2.0) / ((N - 2.0) * p + 3.0 * N - 2.0)


def critical_constants(params: ProblemParams, eq_tol: float = DEFAULT_EQ_TOL) -> CriticalConstants:
    N, p, q = params.N, params.p, params.q

    if N >= 3:
        p_serrin = N / (N - 2.0)
        p_sobolev = (N + 2.0) / (N - 2.0)
    else:
        p_serrin = math.inf
        p_sobolev = math.inf
    p_sphere_sobolev = (N + 1.0) / (N - 3.0) if N >= 4 else math.inf

    q_crit = q_critical(p)
    K = exponent_K(N, p)
    omega = ((p + 1.0) * q - 2.0 * p) / (p - 1.0)
    omega_bar = (p - 1.0) * omega / (q - 1.0)

    m_dagger = ((p - 1.0) / (p + 1.0)) ** ((p - 1.0) / (p + 1.0)) * (
        N * (p + 1.0) ** 2 / (4.0 * p)
    ) ** (p / (p + 1.0))

    q_bar, ambiguous = _q_bar(N, p)

    c_thmAprime: Optional[float] = None
    if regime(params, eq_tol) is Regime.SOURCE_DOMINANT:
        q_prime = q / (q - 1.0)
        base = 4.0 ** (q_prime - 1.0) * p**q_prime * N**q_prime
        c_thmAprime = base ** (-(q - 1.0) / (2.0 * p - (p + 1.0) * q))

    return CriticalConstants(
        N=N,
        p=p,
        q=q,
        p_serrin=p_serrin,
        p_sobolev=p_sobolev,
        p_sphere_sobolev=p_sphere_sobolev,
        q_crit=q_crit,
        K=K,
        L=K - 2.0 / (p - 1.0),
        omega=omega,
        omega_bar=omega_bar,
        mu_star=mu_star(N, p),
        m_dagger=m_dagger,
        Q_Np=2.0 * (N - 1.0) * p / (2.0 * N + p + 1.0),
        q_bar=q_bar,
        q_bar_ambiguous=ambiguous,
        c_thmAprime=c_thmAprime,
        c0_decay=(2.0 * N / (p - 1.0)) ** (1.0 / (p - 1.0)),
        smallness_ratio=small_M_existence_bound(N, p),
    )


class Regime(str, Enum):
    GRADIENT_DOMINANT = "GradientDominant"
    BALANCED = "Balanced"
    SOURCE_DOMINANT = "SourceDominant"


def regime(params: ProblemParams, eq_tol: float = DEFAULT_EQ_TOL) -> Regime:
    if eq_tol < 0:
        raise DomainError("eq_tol must be >= 0")
    gap = params.q - q_critical(params.p)
    if abs(gap) <= eq_tol:
        return Regime.BALANCED
    return Regime.GRADIENT_DOMINANT if gap > 0 else Regime.SOURCE_DOMINANT


class ScalingKind(str, Enum):
    TK = "Tk"
    SK = "Sk"
    NORMALIZE_M = "NormalizeM"


@dataclass(frozen=True)
class ScalingMap:
    """u(x) = amplitude_factor * v(length_factor * x).

    u solves the problem ``source_params`` and v solves ``new_params`` (with the
    source term multiplied by ``source_coefficient``).
    """

    kind: ScalingKind
    k: float
    amplitude_factor: float
    length_factor: float
    source_params: ProblemParams
    new_params: ProblemParams
    source_coefficient: float = 1.0

    def inverse(self) -> "ScalingMap":
        return ScalingMap(
            kind=self.kind,
            k=1.0 / self.k,
            amplitude_factor=1.0 / self.amplitude_factor,
            length_factor=1.0 / self.length_factor,
            source_params=self.new_params,
            new_params=self.source_params,
            source_coefficient=1.0 / self.source_coefficient,
        )

    def pull_back(self, s, v, dv):
        """Turn samples (s, v(s), v'(s)) of the mapped problem into (r, u(r), u'(r))."""

        s = np.asarray(s, dtype=float)
        r = s / self.length_factor
        u = self.amplitude_factor * np.asarray(v, dtype=float)
        du = self.amplitude_factor * self.length_factor * np.asarray(dv, dtype=float)
        return r, u, du

    def amplitude_for(self, a: float) -> float:
        """Initial amplitude v(0) matching u(0) = a."""

        return a / self.amplitude_factor


def apply_scaling(
    params: ProblemParams,
    kind: ScalingKind | str,
    k: float = 1.0,
    eq_tol: float = DEFAULT_EQ_TOL,
) -> ScalingMap:
    kind = ScalingKind(kind)
    p, q = params.p, params.q

    if kind is ScalingKind.NORMALIZE_M:
        if params.M == 0.0:
            raise NotReducibleError("M = 0 cannot be normalised to +-1")
        if regime(params, eq_tol) is Regime.BALANCED:
            raise NotReducibleError("q = 2p/(p+1) leaves |M| scale invariant")
        a = abs(params.M) ** (-2.0 / ((p + 1.0) * q - 2.0 * p))
        return ScalingMap(
            kind=kind,
            k=a ** (-(p - 1.0) / 2.0),
            amplitude_factor=a,
            length_factor=a ** ((p - 1.0) / 2.0),
            source_params=params,
            new_params=params.with_M(math.copysign(1.0, params.M)),
        )

    if not (k > 0 and math.isfinite(k)):
        raise DomainError(f"scaling factor k must be positive, got {k!r}")

    if kind is ScalingKind.TK:
        exponent = (2.0 * p - q * (p + 1.0)) / (p - 1.0)
        return ScalingMap(
            kind=kind,
            k=k,
            amplitude_factor=k ** (-2.0 / (p - 1.0)),
            length_factor=1.0 / k,
            source_params=params,
            new_params=params.with_M(params.M * k**exponent),
        )

    if abs(q - 2.0) <= eq_tol:
        raise NotApplicableError("S_k is only defined for q != 2")
    return ScalingMap(
        kind=kind,
        k=k,
        amplitude_factor=k ** (-(2.0 - q) / (q - 1.0)),
        length_factor=1.0 / k,
        source_params=params,
        new_params=params,
        source_coefficient=k ** ((q - p * (2.0 - q)) / (q - 1.0)),
    )


def normalized_amplitude(params: ProblemParams, eq_tol: float = DEFAULT_EQ_TOL) -> float:
    """v(0) of the M = +-1 problem equivalent to u(0) = 1 for the given M."""

    return 1.0 / apply_scaling(params, ScalingKind.NORMALIZE_M, eq_tol=eq_tol).amplitude_factor


def lemma42_constraints(N: int, p: float, m: float, d: float) -> Dict[str, bool]:
    """The four inequalities on (m, d), checked exactly as written."""

    return {
        "i": d != m + 2.0,
        "ii": 2.0 * (N - 1.0) * p / (N + 2.0) < d,
        "iii": max(-2.0, 1.0 - p, ((N - 4.0) * p - N) / 2.0) < m <= 0.0,
        "iv": 2.0 * (N - m) * d - (N - 1.0) * (m * m + d * d) > 0.0,
    }


def _lemma42_score(N: int, p: float, m, d):
    d_lo = 2.0 * (N - 1.0) * p / (N + 2.0)
    m_lo = max(-2.0, 1.0 - p, ((N - 4.0) * p - N) / 2.0)
    quad = (2.0 * (N - m) * d - (N - 1.0) * (m * m + d * d)) / (N - 1.0)
    score = np.minimum.reduce(
        [
            np.asarray(d - d_lo, dtype=float),
            np.asarray(m - m_lo, dtype=float),
            np.asarray(quad, dtype=float),
            np.abs(d - m - 2.0),
        ]
    )
    return np.where(np.asarray(m) <= 0.0, score, -np.inf)


def lemma42_params(N: int, p: float, grid: int = 101, refinements: int = 4) -> Tuple[float, float]:
    """Deterministic witness (m, d) of the four-inequality feasibility problem."""

    if N < 3:
        raise NotApplicableError("the (m, d) feasibility problem needs N >= 3")
    if not (1.0 < p < (N + 2.0) / (N - 2.0)):
        raise NotApplicableError(f"p must lie in (1, (N+2)/(N-2)), got {p}")

    d_lo = 2.0 * (N - 1.0) * p / (N + 2.0)
    m_lo = max(-2.0, 1.0 - p, ((N - 4.0) * p - N) / 2.0)
    # (iv) forces d below the sum of its roots in d.
    d_hi = 2.0 * (N - m_lo) / (N - 1.0)

    m_axis = np.linspace(m_lo, 0.0, grid)
    d_axis = np.linspace(d_lo, d_hi, grid)
    mm, dd = np.meshgrid(m_axis, d_axis, indexing="ij")
    scores = _lemma42_score(N, p, mm, dd)
    idx = np.unravel_index(int(np.argmax(scores)), scores.shape)
    best_m, best_d = float(mm[idx]), float(dd[idx])
    m_step = (0.0 - m_lo) / (grid - 1)
    d_step = (d_hi - d_lo) / (grid - 1)

    for _ in range(refinements):
        m_axis = np.clip(np.linspace(best_m - 2 * m_step, best_m + 2 * m_step, 21), m_lo, 0.0)
        d_axis = np.linspace(best_d - 2 * d_step, best_d + 2 * d_step, 21)
        mm, dd = np.meshgrid(m_axis, d_axis, indexing="ij")
        scores = _lemma42_score(N, p, mm, dd)
        idx = np.unravel_index(int(np.argmax(scores)), scores.shape)
        best_m, best_d = float(mm[idx]), float(dd[idx])
        m_step /= 5.0
        d_step /= 5.0

    checks = lemma42_constraints(N, p, best_m, best_d)
    if not all(checks.values()):
        raise SearchExhaustedError(
            f"no feasible (m, d) found for N={N}, p={p}; failing constraints "
            f"{sorted(k for k, ok in checks.items() if not ok)}"
        )
    logger.debug("lemma42 witness", extra={"N": N, "p": p, "m": best_m, "d": best_d})
    return best_m, best_d
