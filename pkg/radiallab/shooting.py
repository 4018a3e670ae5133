"""Shooting on the initial amplitude, tail-decay fits and ground-state thresholds."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError, NotApplicableError
from .params import (
    DEFAULT_EQ_TOL,
    ProblemParams,
    Regime,
    critical_constants,
    regime,
)
from .radial_ode import (
    DICHOTOMY_TAGS,
    ClassificationTag,
    IntegratorConfig,
    Trajectory,
    integrate,
)


logger = logging.getLogger(__name__)

DEFAULT_WINDOW_FRACTION = 0.4
MIN_FIT_SAMPLES = 10


@dataclass(frozen=True)
class DecayEstimate:
    gamma: float
    window: Tuple[float, float]
    fit_residual: float
    n_samples: int


def decay_exponent(
    traj: Trajectory,
    window_fraction: float = DEFAULT_WINDOW_FRACTION,
    window: Optional[Tuple[float, float]] = None,
) -> DecayEstimate:
    """Fit u ~ C r^(-gamma) on the tail of a positive trajectory.

    The default window is the last ``window_fraction`` of the log-radius range
    between the first radius where u drops to a/2 and the last sample. Starting
    at that half-amplitude radius rather than at r0 keeps the flat core near the
    origin out of the range the 40% rule is taken from.
    """

    r, u = traj.r, traj.u
    if window is not None:
        r_lo, r_hi = window
    else:
        if not 0.0 < window_fraction < 1.0:
            raise DomainError("window_fraction must lie in (0, 1)")
        below_half = np.flatnonzero(u <= 0.5 * traj.a)
        r_start = r[below_half[0]] if below_half.size else r[0]
        r_hi = float(r[-1])
        log_lo = math.log(r_start) + (1.0 - window_fraction) * (math.log(r_hi) - math.log(r_start))
        r_lo = math.exp(log_lo)

    mask = (r >= r_lo) & (r <= r_hi)
    count = int(np.count_nonzero(mask))
    if count < MIN_FIT_SAMPLES:
        raise DomainError(f"only {count} samples in the tail window, need {MIN_FIT_SAMPLES}")
    if np.any(u[mask] <= 0.0):
        raise DomainError("tail window contains non-positive values of u")

    log_r = np.log(r[mask])
    log_u = np.log(u[mask])
    slope, intercept = np.polyfit(log_r, log_u, 1)
    residual = log_u - (slope * log_r + intercept)
    return DecayEstimate(
        gamma=float(-slope),
        window=(float(r[mask][0]), float(r[mask][-1])),
        fit_residual=float(np.sqrt(np.mean(residual**2))),
        n_samples=count,
    )


class Verdict(str, Enum):
    FOUND_CANDIDATE = "FoundCandidate"
    NO_SIGN_CHANGE = "NoSignChangeInBracket"
    BUDGET_EXHAUSTED = "BudgetExhausted"
    UNDETERMINED_MIDPOINT = "UndeterminedMidpoint"
    CONVERGED_WITHOUT_CANDIDATE = "ConvergedWithoutCandidate"


@dataclass(frozen=True)
class BracketRecord:
    a_lo: float
    a_hi: float
    tag_lo: ClassificationTag
    tag_hi: ClassificationTag


@dataclass(frozen=True, eq=False)
class ShootingResult:
    a_star: Optional[float]
    bracket_history: Tuple[BracketRecord, ...]
    final_trajectory: Optional[Trajectory]
    verdict: Verdict
    endpoint_trajectories: Tuple[Trajectory, ...] = ()

    def as_dict(self) -> dict:
        return {
            "a_star": self.a_star,
            "verdict": self.verdict.value,
            "final_classification": (
                self.final_trajectory.classification.tag.value if self.final_trajectory else None
            ),
            "bracket_history": [
                {"a_lo": b.a_lo, "a_hi": b.a_hi, "tag_lo": b.tag_lo.value, "tag_hi": b.tag_hi.value}
                for b in self.bracket_history
            ],
        }


def find_ground_state(
    params: ProblemParams,
    a_lo: float,
    a_hi: float,
    cfg: Optional[IntegratorConfig] = None,
    *,
    a_tol: float = 1e-10,
    max_bisections: int = 200,
) -> ShootingResult:
    """Bisect on u(0) between two amplitudes with different shooting outcomes.

    A ground-state candidate at an endpoint or midpoint ends the search with
    ``FoundCandidate``. An undetermined midpoint stops it with
    ``UndeterminedMidpoint`` and the bracket collapsing to ``a_tol`` without a
    candidate gives ``ConvergedWithoutCandidate``; both keep ``a_star`` as the
    best estimate of the boundary amplitude.
    """

    if not (0.0 < a_lo < a_hi):
        raise DomainError(f"bracket must satisfy 0 < a_lo < a_hi, got [{a_lo}, {a_hi}]")
    cfg = cfg or IntegratorConfig()

    traj_lo = integrate(params, a_lo, cfg)
    traj_hi = integrate(params, a_hi, cfg)
    endpoints = (traj_lo, traj_hi)
    for traj in endpoints:
        if traj.classification.is_candidate:
            return ShootingResult(traj.a, (), traj, Verdict.FOUND_CANDIDATE, endpoints)

    tag_lo = traj_lo.classification.tag
    tag_hi = traj_hi.classification.tag
    if tag_lo == tag_hi or tag_lo not in DICHOTOMY_TAGS or tag_hi not in DICHOTOMY_TAGS:
        logger.info(
            "Shooting bracket has no change of outcome",
            extra={"a_lo": a_lo, "a_hi": a_hi, "tag_lo": tag_lo.value, "tag_hi": tag_hi.value},
        )
        return ShootingResult(None, (), None, Verdict.NO_SIGN_CHANGE, endpoints)

    history: List[BracketRecord] = [BracketRecord(a_lo, a_hi, tag_lo, tag_hi)]
    lo, hi = a_lo, a_hi
    for _ in range(max_bisections):
        mid = 0.5 * (lo + hi)
        if hi - lo <= a_tol * mid:
            final = integrate(params, mid, cfg)
            verdict = (
                Verdict.FOUND_CANDIDATE if final.classification.is_candidate else Verdict.CONVERGED_WITHOUT_CANDIDATE
            )
            return ShootingResult(mid, tuple(history), final, verdict, endpoints)

        traj_mid = integrate(params, mid, cfg)
        tag_mid = traj_mid.classification.tag
        if tag_mid is ClassificationTag.GROUND_STATE_CANDIDATE:
            return ShootingResult(mid, tuple(history), traj_mid, Verdict.FOUND_CANDIDATE, endpoints)
        if tag_mid is ClassificationTag.UNDETERMINED:
            logger.info(
                "Shooting midpoint is undetermined",
                extra={"a_lo": lo, "a_hi": hi, "a_mid": mid, "r_end": traj_mid.r_end},
            )
            return ShootingResult(mid, tuple(history), traj_mid, Verdict.UNDETERMINED_MIDPOINT, endpoints)

        if tag_mid == tag_lo:
            lo = mid
        else:
            hi = mid
            tag_hi = tag_mid
        history.append(BracketRecord(lo, hi, tag_lo, tag_hi))

    mid = 0.5 * (lo + hi)
    logger.warning("Shooting budget exhausted", extra={"a_lo": lo, "a_hi": hi, "bisections": max_bisections})
    return ShootingResult(mid, tuple(history), integrate(params, mid, cfg), Verdict.BUDGET_EXHAUSTED, endpoints)


def amplitude_threshold(params: ProblemParams, eq_tol: float = DEFAULT_EQ_TOL) -> float:
    """Lower bound on u(0) for any ground state when q < 2p/(p+1) and M > 0."""

    if params.M <= 0.0:
        raise NotApplicableError("the amplitude threshold needs M > 0")
    constants = critical_constants(params, eq_tol)
    if constants.c_thmAprime is None:
        raise NotApplicableError("the amplitude threshold needs q < 2p/(p+1)")
    p, q = params.p, params.q
    return constants.c_thmAprime * params.M ** (2.0 / (2.0 * p - (p + 1.0) * q))


class GradientCap(NamedTuple):
    h_cap: float
    thmA_cap: Optional[float]


def gradient_cap(params: ProblemParams, a: float, eq_tol: float = DEFAULT_EQ_TOL) -> GradientCap:
    """Energy cap on |u'| for a ground state of height a, plus the M-shape of the uniform cap.

    ``thmA_cap`` is the factor M^(-(p+1)/((p+1)q-2p)); its constant is measured by
    the thmA_121 bound check.
    """

    if a < 0:
        raise DomainError("amplitude must be >= 0")
    p, q = params.p, params.q
    h_cap = math.sqrt(2.0 / (p + 1.0)) * a ** ((p + 1.0) / 2.0)
    shape = None
    if params.M > 0 and regime(params, eq_tol) is Regime.GRADIENT_DOMINANT:
        shape = params.M ** (-(p + 1.0) / ((p + 1.0) * q - 2.0 * p))
    return GradientCap(h_cap, shape)


@dataclass(frozen=True)
class ScanEntry:
    a: float
    tag: ClassificationTag
    r_event: Optional[float]
    gamma: Optional[float]


@dataclass(frozen=True)
class NonexistenceReport:
    params: ProblemParams
    entries: Tuple[ScanEntry, ...]

    @property
    def candidates(self) -> List[float]:
        return [entry.a for entry in self.entries if entry.tag is ClassificationTag.GROUND_STATE_CANDIDATE]

    @property
    def verdict(self) -> str:
        if self.candidates:
            return "ground-state candidate found"
        return "no ground-state candidate found"

    def counts(self) -> dict:
        totals = {tag.value: 0 for tag in ClassificationTag}
        for entry in self.entries:
            totals[entry.tag.value] += 1
        return totals


def _scan_one(job: Tuple[ProblemParams, float, IntegratorConfig]) -> ScanEntry:
    params, a, cfg = job
    traj = integrate(params, a, cfg)
    estimate = traj.classification.decay_estimate
    return ScanEntry(
        a=a,
        tag=traj.classification.tag,
        r_event=traj.classification.r_event,
        gamma=estimate.gamma if estimate is not None else None,
    )


def run_ordered(function, jobs: Sequence, workers: int = 1) -> list:
    """Apply ``function`` to every job; results come back in job order."""

    if workers <= 1 or len(jobs) <= 1:
        return [function(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(function, jobs))


def nonexistence_scan(
    params: ProblemParams,
    a_grid: Iterable[float],
    cfg: Optional[IntegratorConfig] = None,
    jobs: int = 1,
) -> NonexistenceReport:
    amplitudes = [float(a) for a in a_grid]
    if not amplitudes:
        raise DomainError("a_grid must not be empty")
    cfg = cfg or IntegratorConfig()
    entries = run_ordered(_scan_one, [(params, a, cfg) for a in amplitudes], jobs)
    report = NonexistenceReport(params, tuple(entries))
    logger.info("Amplitude scan finished", extra={"M": params.M, "verdict": report.verdict, "points": len(entries)})
    return report


@dataclass(frozen=True)
class VanishingReport:
    M_vanish: Optional[float]
    candidates_per_M: Tuple[Tuple[float, int], ...]


def candidate_vanishing_M(
    params: ProblemParams,
    M_grid: Iterable[float],
    a_grid: Iterable[float],
    cfg: Optional[IntegratorConfig] = None,
    jobs: int = 1,
) -> VanishingReport:
    """Smallest M of the sweep from which no amplitude yields a ground-state candidate.

    ``M_vanish`` is None when the largest M of the sweep still has candidates.
    """

    amplitudes = [float(a) for a in a_grid]
    counts = []
    for M in sorted(float(value) for value in M_grid):
        report = nonexistence_scan(params.with_M(M), amplitudes, cfg, jobs)
        counts.append((M, len(report.candidates)))

    M_vanish = None
    for M, count in reversed(counts):
        if count:
            break
        M_vanish = M
    return VanishingReport(M_vanish, tuple(counts))


class Prediction(NamedTuple):
    expect: str
    reason: str


def predicted_ground_state(params: ProblemParams, eq_tol: float = 1e-9) -> Prediction:
    """What the known existence and nonexistence results say about radial ground states."""

    c = critical_constants(params, eq_tol)
    N, p, q, M = params.N, params.p, params.q, params.M
    balanced = abs(q - c.q_crit) <= eq_tol
    subserrin = N <= 2 or p <= c.p_serrin + eq_tol

    if M >= 0 and subserrin:
        return Prediction("none", "no positive exterior solution for M >= 0 and p <= N/(N-2)")
    if M > 0 and N >= 3 and q <= N / (N - 1.0) + eq_tol:
        return Prediction("none", "no positive exterior solution for M > 0 and q <= N/(N-1)")
    if M == 0:
        if p >= c.p_sobolev - eq_tol:
            return Prediction("exists", "Lane-Emden ground states exist for p >= (N+2)/(N-2)")
        return Prediction("none", "Lane-Emden has no ground state for p < (N+2)/(N-2)")

    if M > 0:
        if balanced and M > c.m_dagger:
            return Prediction("none", "critical q and M above M_dagger")
        if p < c.p_sobolev and q <= p + eq_tol:
            return Prediction("none", "M > 0, p subcritical and q <= p: weighted energy is monotone")
        if p > c.p_sobolev and q >= c.q_crit - eq_tol:
            bound = c.smallness_ratio
            if bound is not None and q <= 2.0 + eq_tol and M <= bound:
                return Prediction("exists", "M below the explicit small-M existence bound")
            return Prediction("unknown", "existence holds for small M only; bound not explicit here")
        return Prediction("unknown", "no result pins down this (q, M > 0) region")

    # M < 0
    if N >= 3:
        if balanced and subserrin and M > -(c.mu_star or 0.0):
            return Prediction("none", "critical q with M above -mu*: no exterior supersolution")
        if p <= c.p_serrin + eq_tol and q > c.q_crit + eq_tol:
            return Prediction("none", "p <= N/(N-2) and q above critical, any M < 0")
        if c.q_bar is not None and c.q_bar - eq_tol <= q < p:
            return Prediction("none", "q between q_bar and p, any M < 0")
        if abs(p - c.p_sobolev) <= eq_tol:
            if q >= p:
                return Prediction("none", "critical p requires q < p for any M < 0")
            if q <= c.q_crit + eq_tol:
                return Prediction("exists", "critical p, q at most critical: ground states for every M < 0")
        if p > c.p_sobolev and q <= c.Q_Np + eq_tol:
            return Prediction("exists", "supercritical p with q <= Q_Np: ground states for every M < 0")
    elif N == 2 and balanced and M > -(c.mu_star or 0.0):
        return Prediction("none", "critical q with M above -mu*: no exterior supersolution")
    return Prediction("unknown", "no result pins down this (q, M < 0) region")
