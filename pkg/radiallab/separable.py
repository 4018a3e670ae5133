"""Constant separable solutions X r^(-2/(p-1)) at the critical gradient exponent.

All routines here assume q = 2p/(p+1); the (N, p, M) triple comes from a
:class:`ProblemParams` whose q is checked against that value.
"""
from __future__ import annotations

import logging
import math
import sys
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Tuple

from scipy.optimize import brentq

from .errors import DomainError, NotApplicableError
from .params import ProblemParams, exponent_K, mu_star, q_critical


logger = logging.getLogger(__name__)

CRITICAL_Q_TOL = 1e-9
BRACKET_STEPS = 400


def _require_critical(params: ProblemParams) -> None:
    if abs(params.q - q_critical(params.p)) > CRITICAL_Q_TOL * max(1.0, params.q):
        raise NotApplicableError(
            f"separable solutions need q = 2p/(p+1) = {q_critical(params.p)!r}, got q = {params.q!r}"
        )


def _coefficient(p: float) -> float:
    return (2.0 / (p - 1.0)) ** (2.0 * p / (p + 1.0))


def f_M(X: float, params: ProblemParams) -> float:
    """X^(p-1) + M (2/(p-1))^(2p/(p+1)) X^((p-1)/(p+1)) - 2K/(p-1)."""

    _require_critical(params)
    if not X > 0:
        raise DomainError(f"f_M needs X > 0, got {X!r}")
    p = params.p
    return (
        X ** (p - 1.0)
        + params.M * _coefficient(p) * X ** ((p - 1.0) / (p + 1.0))
        - 2.0 * exponent_K(params.N, p) / (p - 1.0)
    )


def f_M_prime(X: float, params: ProblemParams) -> float:
    _require_critical(params)
    if not X > 0:
        raise DomainError(f"f_M needs X > 0, got {X!r}")
    p = params.p
    return (p - 1.0) * X ** (p - 2.0) + params.M * _coefficient(p) * (p - 1.0) / (p + 1.0) * X ** (
        (p - 1.0) / (p + 1.0) - 1.0
    )


def minimizer_X0(params: ProblemParams) -> float:
    """Stationary point of f_M, a minimum when M < 0."""

    _require_critical(params)
    if params.M >= 0:
        raise NotApplicableError("f_M has an interior minimum only for M < 0")
    p = params.p
    return (-params.M / (p + 1.0)) ** ((p + 1.0) / (p * (p - 1.0))) * (2.0 / (p - 1.0)) ** (2.0 / (p - 1.0))


def root_residual(X: float, params: ProblemParams) -> float:
    """|f_M(X)| relative to max(1, X^(p-1))."""

    return abs(f_M(X, params)) / max(1.0, X ** (params.p - 1.0))


class RootCase(str, Enum):
    UNIQUE_ROOT_MPOS = "UniqueRoot_Mpos"
    UNIQUE_ROOT_MNEG = "UniqueRoot_Mneg"
    NO_ROOT = "NoRoot"
    DOUBLE_ROOT = "DoubleRoot"
    TWO_ROOTS = "TwoRoots"


ROOT_COUNT = {
    RootCase.UNIQUE_ROOT_MPOS: 1,
    RootCase.UNIQUE_ROOT_MNEG: 1,
    RootCase.NO_ROOT: 0,
    RootCase.DOUBLE_ROOT: 1,
    RootCase.TWO_ROOTS: 2,
}


@dataclass(frozen=True)
class ConstantSolutionSet:
    params: ProblemParams
    case_tag: RootCase
    roots: Tuple[float, ...] = ()
    X0: Optional[float] = None
    residuals: Tuple[float, ...] = field(default=())

    def as_dict(self) -> Dict[str, object]:
        return {
            "N": self.params.N,
            "p": self.params.p,
            "M": self.params.M,
            "case": self.case_tag.value,
            "roots": list(self.roots),
            "X0": self.X0,
            "residuals": list(self.residuals),
        }


def _log_f(params: ProblemParams):
    def g(s: float) -> float:
        return f_M(math.exp(s), params)

    return g


def _walk(g, start: float, step: float, want_positive: bool) -> float:
    """Move s from start by step until sign(g(s)) matches the request."""

    s = start
    for _ in range(BRACKET_STEPS):
        s += step
        if (g(s) > 0) == want_positive:
            return s
    raise DomainError("could not bracket a root of f_M")


def _polish(params: ProblemParams, s_lo: float, s_hi: float) -> float:
    """Bracketed root in log X, then Newton steps that stay inside the bracket."""

    g = _log_f(params)
    s = brentq(g, s_lo, s_hi, xtol=1e-15, rtol=4.0 * sys.float_info.epsilon, maxiter=500)
    X = math.exp(s)
    lo, hi = math.exp(min(s_lo, s_hi)), math.exp(max(s_lo, s_hi))
    for _ in range(8):
        slope = f_M_prime(X, params)
        if slope == 0.0:
            break
        candidate = X - f_M(X, params) / slope
        if not lo <= candidate <= hi or abs(f_M(candidate, params)) >= abs(f_M(X, params)):
            break
        X = candidate
    return X


def solve_constant_solutions(params: ProblemParams, eq_tol: float = 1e-12) -> ConstantSolutionSet:
    """Classify and compute the positive roots of f_M."""

    _require_critical(params)
    N, p, M = params.N, params.p, params.M
    K = exponent_K(N, p)
    g = _log_f(params)

    if M >= 0:
        if K <= 0:
            return ConstantSolutionSet(params, RootCase.NO_ROOT)
        top = (2.0 * K / (p - 1.0)) ** (1.0 / (p - 1.0))
        if M == 0:
            root = top
        else:
            s_hi = math.log(top + 1.0)
            s_lo = _walk(g, s_hi, -math.log(10.0), want_positive=False)
            root = _polish(params, s_lo, s_hi)
        return ConstantSolutionSet(params, RootCase.UNIQUE_ROOT_MPOS, (root,), None, (root_residual(root, params),))

    X0 = minimizer_X0(params)
    s0 = math.log(X0)
    if K >= 0:
        s_hi = _walk(g, s0, math.log(2.0), want_positive=True)
        root = _polish(params, s0, s_hi)
        return ConstantSolutionSet(params, RootCase.UNIQUE_ROOT_MNEG, (root,), X0, (root_residual(root, params),))

    threshold = mu_star(N, p)
    if abs(M + threshold) <= eq_tol * max(1.0, threshold):
        return ConstantSolutionSet(params, RootCase.DOUBLE_ROOT, (X0,), X0, (root_residual(X0, params),))
    if M > -threshold or f_M(X0, params) >= 0:
        return ConstantSolutionSet(params, RootCase.NO_ROOT, (), X0)

    s_lo = _walk(g, s0, -math.log(2.0), want_positive=True)
    s_hi = _walk(g, s0, math.log(2.0), want_positive=True)
    roots = (_polish(params, s_lo, s0), _polish(params, s0, s_hi))
    return ConstantSolutionSet(
        params, RootCase.TWO_ROOTS, roots, X0, tuple(root_residual(X, params) for X in roots)
    )


def phi_j(M: float, j: int, params: ProblemParams) -> float:
    """M (2/(p-1))^(2p/(p+1)) X_j^((p-1)/(p+1)) through the identity 2K/(p-1) - X_j^(p-1)."""

    solutions = solve_constant_solutions(params.with_M(M))
    if not solutions.roots:
        raise NotApplicableError(f"no constant solution at M = {M!r}")
    if j == 1:
        X = solutions.roots[0]
    elif j == 2 and solutions.case_tag in (RootCase.TWO_ROOTS, RootCase.DOUBLE_ROOT):
        X = solutions.roots[-1]
    else:
        raise NotApplicableError(f"root index {j!r} is not defined for case {solutions.case_tag.value}")
    p = params.p
    return 2.0 * exponent_K(params.N, p) / (p - 1.0) - X ** (p - 1.0)


def phi(M: float, params: ProblemParams) -> float:
    solutions = solve_constant_solutions(params.with_M(M))
    if solutions.case_tag not in (RootCase.UNIQUE_ROOT_MPOS, RootCase.UNIQUE_ROOT_MNEG):
        raise NotApplicableError(f"Phi needs a unique root; case is {solutions.case_tag.value}")
    return phi_j(M, 1, params)


def eigenvalue(k: int, N: int) -> float:
    """k-th nonzero eigenvalue of the Laplace-Beltrami operator on the unit sphere."""

    if k < 1 or N < 2:
        raise DomainError("eigenvalue needs k >= 1 and N >= 2")
    return float(k * (k + N - 2))


@dataclass(frozen=True)
class BifurcationPoint:
    k: int
    lambda_k: float
    M_k: float
    X_at_Mk: float
    root_index: int
    target: float
    residual_constant: float
    residual_bifurcation: float
    below_mu_star: Optional[bool] = None

    def as_dict(self) -> Dict[str, object]:
        return {
            "k": self.k,
            "lambda_k": self.lambda_k,
            "M_k": self.M_k,
            "X_at_Mk": self.X_at_Mk,
            "root_index": self.root_index,
            "target": self.target,
            "residual_constant": self.residual_constant,
            "residual_bifurcation": self.residual_bifurcation,
            "below_mu_star": self.below_mu_star,
        }


def bifurcation_target(k: int, N: int, p: float) -> float:
    return (p + 1.0) * (2.0 * exponent_K(N, p) - eigenvalue(k, N)) / (p * (p - 1.0))


def bifurcation_point(k: int, params: ProblemParams, root: Optional[int] = None) -> Optional[BifurcationPoint]:
    """Coefficient M_k at which the k-th mode of the constant solution becomes critical.

    Phi is inverted in closed form: Phi = T fixes X^(p-1) = 2K/(p-1) - T and then
    M = T / ((2/(p-1))^(2p/(p+1)) X^((p-1)/(p+1))). The result is kept only when X is
    the requested root of f_M at that M. Below the Serrin exponent the default root
    is the larger one; ``root=1`` asks for the smaller one. Returns None when the
    target lies outside the range of the selected branch. On a monotone branch the
    closed-form inversion gives the same M as bisecting Phi_k(M) = 0 would.
    """

    _require_critical(params)
    N, p = params.N, params.p
    K = exponent_K(N, p)
    T = bifurcation_target(k, N, p)
    if root is None:
        root = 2 if K < 0 else 1

    top = 2.0 * K / (p - 1.0) - T
    if top <= 0:
        logger.debug("Bifurcation target outside the Phi range", extra={"k": k, "N": N, "p": p, "target": T})
        return None
    X = top ** (1.0 / (p - 1.0))
    M = T / (_coefficient(p) * X ** ((p - 1.0) / (p + 1.0)))
    if T == 0.0:
        M = 0.0

    located = solve_constant_solutions(params.with_M(M))
    if not located.roots:
        return None
    index = 1
    if located.case_tag is RootCase.TWO_ROOTS:
        index = 1 if abs(X - located.roots[0]) <= abs(X - located.roots[1]) else 2
    elif located.case_tag is RootCase.DOUBLE_ROOT:
        index = root
    if index != root:
        logger.debug("Bifurcation target not on the requested root", extra={"k": k, "root": root, "M": M})
        return None

    at_M = params.with_M(M)
    threshold = mu_star(N, p)
    return BifurcationPoint(
        k=k,
        lambda_k=eigenvalue(k, N),
        M_k=M,
        X_at_Mk=X,
        root_index=index,
        target=T,
        residual_constant=abs(f_M(X, at_M)),
        residual_bifurcation=abs(M * _coefficient(p) * X ** ((p - 1.0) / (p + 1.0)) - T),
        below_mu_star=(M <= -threshold) if K < 0 and threshold is not None else None,
    )


class BranchVerdict(NamedTuple):
    nonnegative_M: bool
    negative_M: bool
    root_index: int
    reason: str


def branch_exists(k: int, params: ProblemParams) -> BranchVerdict:
    """Which sign of M carries a bifurcating branch of nonconstant separable solutions."""

    _require_critical(params)
    N, p = params.N, params.p
    if k < 1:
        raise DomainError("mode index k must be >= 1")
    if exponent_K(N, p) < 0:
        return BranchVerdict(False, True, 2, "below the Serrin exponent every mode bifurcates from the larger root")
    p_sphere = (N + 1.0) / (N - 3.0) if N >= 4 else math.inf
    if k == 1 and p >= p_sphere:
        return BranchVerdict(True, False, 1, "k = 1 and p >= (N+1)/(N-3)")
    if k == 1:
        return BranchVerdict(False, True, 1, "k = 1 and p < (N+1)/(N-3)")
    return BranchVerdict(False, True, 1, "k >= 2")


def exterior_roots(p: float, M: float) -> Optional[Tuple[float, float]]:
    """Smaller and larger positive constants X for the one-dimensional exterior profile X t^(-2/(p-1))."""

    params = ProblemParams(N=1, p=p, q=q_critical(p), M=M)
    solutions = solve_constant_solutions(params)
    if solutions.case_tag is RootCase.DOUBLE_ROOT:
        return solutions.roots[0], solutions.roots[0]
    if solutions.case_tag is RootCase.TWO_ROOTS:
        return solutions.roots[0], solutions.roots[1]
    return None


class Sandwich(NamedTuple):
    lower: float
    upper: float


def lyapunov_sandwich(params: ProblemParams) -> Sandwich:
    """Two-sided bound on the root for M < 0 and p >= N/(N-2)."""

    _require_critical(params)
    N, p, M = params.N, params.p, params.M
    K = exponent_K(N, p)
    if M >= 0 or K < 0:
        raise NotApplicableError("the two-sided root bound needs M < 0 and p >= N/(N-2)")
    first = (2.0 * K / (p - 1.0)) ** (1.0 / (p - 1.0))
    second = (2.0 / (p - 1.0)) ** (2.0 / (p - 1.0)) * abs(M) ** ((p + 1.0) / (p * (p - 1.0)))
    return Sandwich(lower=max(first, second), upper=2.0 ** (2.0 / (p - 1.0)) * (first + second))


@dataclass(frozen=True)
class AsymptoticReport:
    params: ProblemParams
    roots: Tuple[float, ...]
    predictions: Tuple[float, ...]
    ratios: Tuple[float, ...]
    sandwich: Optional[Sandwich] = None
    sandwich_holds: Optional[bool] = None

    def as_dict(self) -> Dict[str, object]:
        return {
            "M": self.params.M,
            "roots": list(self.roots),
            "predictions": list(self.predictions),
            "ratios": list(self.ratios),
            "sandwich": list(self.sandwich) if self.sandwich else None,
            "sandwich_holds": self.sandwich_holds,
        }


def asymptotic_check(params: ProblemParams, M_large: float) -> AsymptoticReport:
    """Compare computed roots at a large |M| with their leading-order forms."""

    if abs(M_large) < 100:
        raise DomainError("asymptotic_check needs |M| >= 100")
    at_M = params.with_M(M_large)
    solutions = solve_constant_solutions(at_M)
    N, p = params.N, params.p
    K = exponent_K(N, p)
    small = (p - 1.0) / 2.0 * (K / M_large) ** ((p + 1.0) / (p - 1.0)) if K / M_large > 0 else math.nan
    large = (2.0 / (p - 1.0)) ** (2.0 / (p - 1.0)) * abs(M_large) ** ((p + 1.0) / (p * (p - 1.0)))

    sandwich = None
    holds = None
    if M_large > 0:
        predictions: Tuple[float, ...] = (small,)
    elif solutions.case_tag is RootCase.TWO_ROOTS:
        predictions = (small, large)
    else:
        predictions = (large,)
        sandwich = lyapunov_sandwich(at_M)
        holds = all(sandwich.lower <= X <= sandwich.upper for X in solutions.roots)

    ratios = tuple(X / pred for X, pred in zip(solutions.roots, predictions))
    return AsymptoticReport(at_M, solutions.roots, predictions, ratios, sandwich, holds)


def root_merge_M(params: ProblemParams) -> float:
    """M at which the two roots of f_M coalesce, located by bracketing on min f_M."""

    _require_critical(params)
    N, p = params.N, params.p
    threshold = mu_star(N, p)
    if exponent_K(N, p) >= 0 or threshold is None:
        raise NotApplicableError("roots merge only below the Serrin exponent")

    def minimum(M: float) -> float:
        at_M = params.with_M(M)
        return f_M(minimizer_X0(at_M), at_M)

    hi = -1e-12 * max(1.0, threshold)
    lo = -2.0 * threshold - 1.0
    while minimum(lo) >= 0:
        lo *= 2.0
    return brentq(minimum, lo, hi, xtol=1e-15, rtol=4.0 * sys.float_info.epsilon, maxiter=500)


def constant_solution_rows(params: ProblemParams, M_values: List[float]) -> List[Dict[str, object]]:
    """One flat row per (M, root) for tabular output; NoRoot gives a row with no X."""

    rows: List[Dict[str, object]] = []
    for M in M_values:
        solutions = solve_constant_solutions(params.with_M(M))
        base = {"N": params.N, "p": params.p, "q": params.q, "M": M, "case": solutions.case_tag.value, "X0": solutions.X0}
        if not solutions.roots:
            rows.append({**base, "root_index": None, "X": None, "residual": None})
        for index, (X, residual) in enumerate(zip(solutions.roots, solutions.residuals), start=1):
            rows.append({**base, "root_index": index, "X": X, "residual": residual})
    return rows
