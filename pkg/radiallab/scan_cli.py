"""Command-line surface: constants, shoot, scan, separable and verify.

Commands are attached to the app CLI at top level, so they run as
``flask --app app.py scan ...``.
"""
from __future__ import annotations

import itertools
import math
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime
from typing import Dict, List, Optional, Sequence, Tuple

import click
import numpy as np
from flask import Blueprint, current_app

from . import apply_config_file, db
from . import reports, separable
from .diagnostics import bound_check, energy_monotonicity
from .errors import ConfigError, DomainError, NotApplicableError, RadialLabError
from .models import LabRun, RunArtifact
from .params import (
    CONSTANT_DEFINITIONS,
    ProblemParams,
    critical_constants,
    q_critical,
    regime,
)
from .radial_ode import ClassificationTag, IntegratorConfig, Trajectory, integrate
from .shooting import find_ground_state, gradient_cap, predicted_ground_state, run_ordered
from .verification import SUITE_NAMES, run_suites


scan_bp = Blueprint("scan", __name__, cli_group=None)

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2
EXIT_IO = 3

AXIS_NAMES = ("p", "q", "M", "a")
PARAM_NAMES = ("N", "p", "q", "M", "a")

SCAN_COLUMNS = [
    "N",
    "p",
    "q",
    "M",
    "a",
    "classification",
    "r_event",
    "decay_gamma",
    "predicted",
    "h_cap",
    "bound_decay_21",
    "bound_energy_53",
    "bound_thmA_121",
]


# -- scan specification ---------------------------------------------------


@dataclass(frozen=True)
class Axis:
    name: str
    min: float
    max: float
    count: int
    spacing: str = "linear"

    def __post_init__(self) -> None:
        if self.name not in AXIS_NAMES:
            raise ConfigError(f"axis must be one of {', '.join(AXIS_NAMES)}, got {self.name!r}")
        if self.count < 1:
            raise ConfigError(f"axis {self.name} needs count >= 1")
        if self.spacing not in ("linear", "log"):
            raise ConfigError(f"axis spacing must be linear or log, got {self.spacing!r}")
        if self.spacing == "log" and (self.min <= 0 or self.max <= 0):
            raise ConfigError(f"log axis {self.name} needs positive bounds")

    def values(self) -> List[float]:
        if self.count == 1:
            return [float(self.min)]
        if self.spacing == "log":
            return [float(v) for v in np.geomspace(self.min, self.max, self.count)]
        return [float(v) for v in np.linspace(self.min, self.max, self.count)]


@dataclass(frozen=True)
class ScanSpec:
    axes: Tuple[Axis, ...]
    fixed: Dict[str, float]
    q_critical: bool = False
    config_overrides: Dict[str, float] = field(default_factory=dict)
    out_dir: Optional[str] = None

    def __post_init__(self) -> None:
        swept = [axis.name for axis in self.axes]
        if len(set(swept)) != len(swept):
            raise ConfigError("an axis name appears twice")
        overlap = set(swept) & set(self.fixed)
        if overlap:
            raise ConfigError(f"swept and fixed parameters overlap: {', '.join(sorted(overlap))}")
        covered = set(swept) | set(self.fixed) | ({"q"} if self.q_critical else set())
        missing = [name for name in PARAM_NAMES if name not in covered]
        if missing:
            raise ConfigError(f"scan does not set {', '.join(missing)}")
        if self.q_critical and ("q" in swept or "q" in self.fixed):
            raise ConfigError("--q-critical sets q; do not also fix or sweep it")

    def points(self) -> List[Dict[str, float]]:
        """Grid points in lexicographic axis order."""

        grids = [axis.values() for axis in self.axes]
        points = []
        for combo in itertools.product(*grids):
            point = dict(self.fixed)
            point.update(zip((axis.name for axis in self.axes), combo))
            if self.q_critical:
                point["q"] = q_critical(point["p"])
            points.append(point)
        return points

    def as_dict(self) -> Dict[str, object]:
        return {
            "axes": [asdict(axis) for axis in self.axes],
            "fixed": dict(self.fixed),
            "q_critical": self.q_critical,
            "config_overrides": dict(self.config_overrides),
        }


@dataclass(frozen=True)
class ScanRecord:
    N: int
    p: float
    q: float
    M: float
    a: float
    classification: str
    r_event: Optional[float]
    decay_gamma: Optional[float]
    predicted: str
    h_cap: float
    bound_decay_21: Optional[float]
    bound_energy_53: Optional[float]
    bound_thmA_121: Optional[float]
    wall_seconds: float = 0.0

    def row(self) -> Dict[str, object]:
        return {column: getattr(self, column) for column in SCAN_COLUMNS}


def _safe_bound(traj: Trajectory, bound_id: str) -> Optional[float]:
    try:
        return bound_check(traj, bound_id).minimal_constant
    except (NotApplicableError, DomainError):
        return None


def scan_point(job: Tuple[Dict[str, float], IntegratorConfig]) -> ScanRecord:
    point, cfg = job
    started = datetime.utcnow()
    params = ProblemParams(N=int(point["N"]), p=point["p"], q=point["q"], M=point["M"])
    a = point["a"]
    traj = integrate(params, a, cfg)
    classification = traj.classification
    estimate = classification.decay_estimate
    return ScanRecord(
        N=params.N,
        p=params.p,
        q=params.q,
        M=params.M,
        a=a,
        classification=classification.tag.value,
        r_event=classification.r_event,
        decay_gamma=estimate.gamma if estimate is not None else None,
        predicted=predicted_ground_state(params).expect,
        h_cap=gradient_cap(params, a).h_cap,
        bound_decay_21=_safe_bound(traj, "decay_21"),
        bound_energy_53=_safe_bound(traj, "energy_53"),
        bound_thmA_121=_safe_bound(traj, "thmA_121") if params.M > 0 else None,
        wall_seconds=(datetime.utcnow() - started).total_seconds(),
    )


def run_scan(spec: ScanSpec, cfg: IntegratorConfig, jobs: int = 1) -> List[ScanRecord]:
    """One record per grid point, in grid order whatever the worker count."""

    return run_ordered(scan_point, [(point, cfg) for point in spec.points()], jobs)


# -- shared plumbing --------------------------------------------------------


def _exit(code: int) -> None:
    click.get_current_context().exit(code)


COMMON_OPTIONS = (
    click.option("--rmax", type=float, default=None, help="Integration horizon."),
    click.option("--rtol", type=float, default=None, help="Relative tolerance."),
    click.option("--atol", type=float, default=None, help="Absolute tolerance."),
    click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None, help="Output directory."),
    click.option(
        "--config", "config_file", type=click.Path(exists=True, dir_okay=False), default=None, help="key = value settings file."
    ),
    click.option("--jobs", type=int, default=None, help="Worker processes."),
)


def common_options(function):
    for option in reversed(COMMON_OPTIONS):
        function = option(function)
    return function


def _settings(rmax, rtol, atol, config_file, jobs) -> Tuple[IntegratorConfig, int]:
    if config_file:
        apply_config_file(current_app, config_file)
    cfg = IntegratorConfig.from_mapping(current_app.config, r_max=rmax, rel_tol=rtol, abs_tol=atol)
    workers = jobs if jobs is not None else int(current_app.config.get("RADIALLAB_JOBS", 1))
    return cfg, max(1, workers)


def _output_dir(out_dir: Optional[str], command: str) -> str:
    path = out_dir or os.path.join(current_app.config["RADIALLAB_OUTPUT_DIR"], command)
    os.makedirs(path, exist_ok=True)
    return path


def _open_run(command: str, parameters: Dict[str, object], out_dir: Optional[str]) -> LabRun:
    run = LabRun(command=command, parameters=parameters, output_dir=out_dir, status="running")
    db.session.add(run)
    db.session.commit()
    return run


def _close_run(run: LabRun, exit_code: int, artifacts: Sequence[reports.Artifact] = (), summary=None) -> None:
    for artifact in artifacts:
        db.session.add(RunArtifact(run_id=run.id, path=artifact.path, sha256=artifact.sha256, rows=artifact.rows))
    run.finish(exit_code, summary)
    db.session.commit()
    current_app.logger.info(
        "Run finished",
        extra={"run_id": run.id, "command": run.command, "exit_code": exit_code, "output_dir": run.output_dir},
    )


def _params(N, p, q, M, use_q_critical) -> ProblemParams:
    if p is None:
        raise click.UsageError("-p is required")
    if use_q_critical or q is None:
        q = q_critical(p)
    return ProblemParams(N=N, p=p, q=q, M=M)


def _fail(run: Optional[LabRun], exc: Exception, code: int) -> None:
    current_app.logger.exception("Command failed", extra={"run_id": run.id if run else None, "error": str(exc)})
    click.echo(f"error: {exc}", err=True)
    if run is not None:
        db.session.rollback()
        _close_run(run, code, summary={"error": str(exc)})
    _exit(code)


def _fmt(value) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, float):
        return "inf" if math.isinf(value) else f"{value:.12g}"
    return str(value)


# -- commands ---------------------------------------------------------------


@scan_bp.cli.command("constants")
@click.option("-N", "N", type=int, required=True, help="Dimension.")
@click.option("-p", "p", type=float, required=True, help="Source exponent.")
@click.option("-q", "q", type=float, default=None, help="Gradient exponent (default 2p/(p+1)).")
@click.option("-M", "M", type=float, default=0.0, show_default=True, help="Gradient coefficient.")
@click.option("--json", "as_json", is_flag=True, help="Print JSON instead of text.")
def constants_command(N, p, q, M, as_json):
    """Print every closed-form constant for (N, p, q)."""

    try:
        params = _params(N, p, q, M, False)
        constants = critical_constants(params, current_app.config["RADIALLAB_EQ_TOL"])
    except RadialLabError as exc:
        _fail(None, exc, EXIT_USAGE)
        return

    rendered = constants.as_dict()
    rendered["regime"] = regime(params).value
    if as_json:
        click.echo(reports.dumps(rendered), nl=False)
        return
    for key, value in rendered.items():
        definition = CONSTANT_DEFINITIONS.get(key, "")
        line = f"{key:18} = {_fmt(value)}"
        click.echo(f"{line:44} # {definition}" if definition else line)


@scan_bp.cli.command("shoot")
@click.option("-N", "N", type=int, required=True)
@click.option("-p", "p", type=float, required=True)
@click.option("-q", "q", type=float, default=None)
@click.option("-M", "M", type=float, default=0.0, show_default=True)
@click.option("-a", "a", type=float, default=None, help="Initial amplitude u(0).")
@click.option("--bracket", type=(float, float), default=None, help="Bisect u(0) between LO and HI.")
@click.option("--q-critical", "use_q_critical", is_flag=True, help="Set q = 2p/(p+1).")
@common_options
def shoot_command(N, p, q, M, a, bracket, use_q_critical, rmax, rtol, atol, out_dir, config_file, jobs):
    """Integrate one amplitude, or bisect on a bracket, and write the trajectory."""

    if (a is None) == (bracket is None):
        raise click.UsageError("pass exactly one of -a or --bracket")

    try:
        params = _params(N, p, q, M, use_q_critical)
        cfg, _ = _settings(rmax, rtol, atol, config_file, jobs)
    except RadialLabError as exc:
        _fail(None, exc, EXIT_USAGE)
        return

    inputs = {**params.as_dict(), "a": a, "bracket": list(bracket) if bracket else None}
    try:
        out = _output_dir(out_dir, "shoot")
    except OSError as exc:
        _fail(None, exc, EXIT_IO)
        return
    run = _open_run("shoot", inputs, out)

    try:
        if bracket is not None:
            result = find_ground_state(params, bracket[0], bracket[1], cfg)
            traj = result.final_trajectory
            verdict = {"shooting": result.as_dict()}
        else:
            result = None
            traj = integrate(params, a, cfg)
            verdict = {}
    except RadialLabError as exc:
        _fail(run, exc, EXIT_USAGE)
        return

    if traj is not None:
        classification = traj.classification
        estimate = classification.decay_estimate
        monotone = energy_monotonicity(traj)
        verdict.update(
            {
                "a": traj.a,
                "classification": classification.tag.value,
                "r_event": classification.r_event,
                "u_event": classification.u_event,
                "termination": traj.termination.value,
                "events": [{"kind": event.kind, "r": event.r} for event in traj.events],
                "decay": None
                if estimate is None
                else {"gamma": estimate.gamma, "window": list(estimate.window), "fit_residual": estimate.fit_residual},
                "energy": {
                    "max_Hprime": monotone.max_Hprime,
                    "max_H_increase": monotone.max_H_increase,
                    "H_nonincreasing": monotone.nonincreasing,
                },
            }
        )
    prediction = predicted_ground_state(params)
    verdict["predicted"] = {"expect": prediction.expect, "reason": prediction.reason}

    try:
        artifacts = []
        if traj is not None:
            artifacts.append(reports.write_trajectory(traj, os.path.join(out, "trajectory.csv"), out))
        artifacts.append(reports.write_json(verdict, os.path.join(out, "verdict.json"), out))
        reports.write_manifest(out, "shoot", inputs, cfg.as_dict(), artifacts, _totals([traj] if traj else []))
        reports.write_timing(out, run.created_at or datetime.utcnow(), datetime.utcnow())
    except OSError as exc:
        _fail(run, exc, EXIT_IO)
        return

    _close_run(run, EXIT_OK, artifacts, summary={"classification": verdict.get("classification")})
    if result is not None:
        click.echo(f"verdict: {result.verdict.value} a* = {_fmt(result.a_star)}")
    click.echo(f"classification: {verdict.get('classification', 'n/a')}")
    if traj is not None and traj.classification.decay_estimate is not None:
        click.echo(f"decay exponent: {traj.classification.decay_estimate.gamma:.6g}")
    click.echo(f"output: {out}")


def _totals(trajectories) -> Dict[str, int]:
    totals = {tag.value: 0 for tag in ClassificationTag}
    for traj in trajectories:
        totals[traj.classification.tag.value] += 1
    return totals


@scan_bp.cli.command("scan")
@click.option("-N", "N", type=int, default=None)
@click.option("-p", "p", type=float, default=None)
@click.option("-q", "q", type=float, default=None)
@click.option("-M", "M", type=float, default=None)
@click.option("-a", "a", type=float, default=None)
@click.option(
    "--axis",
    "axes",
    type=(click.Choice(AXIS_NAMES), float, float, int, click.Choice(["linear", "log"])),
    multiple=True,
    help="NAME MIN MAX COUNT linear|log; repeat for each swept parameter.",
)
@click.option("--q-critical", "use_q_critical", is_flag=True, help="Set q = 2p/(p+1) at every grid point.")
@click.option("--svg", "svg", is_flag=True, help="Also write a region map for the first two axes.")
@common_options
def scan_command(N, p, q, M, a, axes, use_q_critical, svg, rmax, rtol, atol, out_dir, config_file, jobs):
    """Classify every point of a parameter grid."""

    fixed = {name: value for name, value in (("N", N), ("p", p), ("q", q), ("M", M), ("a", a)) if value is not None}
    try:
        spec = ScanSpec(
            axes=tuple(Axis(*axis) for axis in axes),
            fixed=fixed,
            q_critical=use_q_critical,
            config_overrides={
                key: value for key, value in (("r_max", rmax), ("rel_tol", rtol), ("abs_tol", atol)) if value is not None
            },
            out_dir=out_dir,
        )
        cfg, workers = _settings(rmax, rtol, atol, config_file, jobs)
    except RadialLabError as exc:
        _fail(None, exc, EXIT_USAGE)
        return

    try:
        out = _output_dir(out_dir, "scan")
    except OSError as exc:
        _fail(None, exc, EXIT_IO)
        return
    run = _open_run("scan", spec.as_dict(), out)

    try:
        records = run_scan(spec, cfg, workers)
    except RadialLabError as exc:
        _fail(run, exc, EXIT_USAGE)
        return

    totals = {tag.value: 0 for tag in ClassificationTag}
    for record in records:
        totals[record.classification] += 1

    try:
        artifacts = [reports.write_csv([r.row() for r in records], os.path.join(out, "scan.csv"), SCAN_COLUMNS, out)]
        if svg and len(spec.axes) >= 2:
            artifacts.append(
                reports.region_map_svg(
                    [r.row() for r in records],
                    spec.axes[0].name,
                    spec.axes[1].name,
                    os.path.join(out, "region_map.svg"),
                    out,
                    title=f"N={spec.fixed.get('N')}",
                )
            )
        reports.write_manifest(out, "scan", spec.as_dict(), cfg.as_dict(), artifacts, totals)
        reports.write_timing(out, run.created_at or datetime.utcnow(), datetime.utcnow())
    except OSError as exc:
        _fail(run, exc, EXIT_IO)
        return

    _close_run(run, EXIT_OK, artifacts, summary={"totals": totals, "points": len(records)})
    current_app.logger.info("Scan finished", extra={"run_id": run.id, "points": len(records), "workers": workers})
    click.echo(f"points: {len(records)}")
    for tag, count in totals.items():
        click.echo(f"{tag}: {count}")
    click.echo(f"output: {out}")


@scan_bp.cli.command("separable")
@click.option("-N", "N", type=int, required=True)
@click.option("-p", "p", type=float, required=True)
@click.option("-q", "q", type=float, default=None)
@click.option("-M", "M_values", type=float, multiple=True, help="Coefficient value; repeatable.")
@click.option("--m-grid", "M_grid", type=(float, float, int), default=None, help="MIN MAX COUNT, linear.")
@click.option("--bifurcate", is_flag=True, help="Locate bifurcation points.")
@click.option("-k", "modes", type=int, multiple=True, help="Mode index; repeatable (default 1).")
@click.option("--q-critical", "use_q_critical", is_flag=True, help="Set q = 2p/(p+1).")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None)
def separable_command(N, p, q, M_values, M_grid, bifurcate, modes, use_q_critical, out_dir):
    """Constant separable solutions and bifurcation points at q = 2p/(p+1)."""

    if q is not None and not use_q_critical and abs(q - q_critical(p)) > separable.CRITICAL_Q_TOL:
        raise click.UsageError(f"separable solutions need q = 2p/(p+1) = {q_critical(p):.12g}; pass --q-critical")

    values = list(M_values)
    if M_grid is not None:
        values.extend(float(v) for v in np.linspace(M_grid[0], M_grid[1], M_grid[2]))
    if not values and not bifurcate:
        values = [0.0]

    try:
        base = ProblemParams(N=N, p=p, q=q_critical(p), M=0.0)
        rows = separable.constant_solution_rows(base, values)
        bifurcations = []
        if bifurcate:
            for k in modes or (1,):
                point = separable.bifurcation_point(k, base)
                verdict = separable.branch_exists(k, base)
                bifurcations.append(
                    {
                        "k": k,
                        **(point.as_dict() if point else {"M_k": None}),
                        "nonnegative_M_branch": verdict.nonnegative_M,
                        "negative_M_branch": verdict.negative_M,
                        "reason": verdict.reason,
                    }
                )
    except RadialLabError as exc:
        _fail(None, exc, EXIT_USAGE)
        return

    for row in rows:
        click.echo(
            f"M = {_fmt(row['M'])}: {row['case']}"
            + (f"  X{row['root_index']} = {_fmt(row['X'])}  residual = {row['residual']:.3g}" if row["X"] else "")
        )
    for item in bifurcations:
        click.echo(
            f"k = {item['k']}: M_k = {_fmt(item['M_k'])}"
            + (f"  X = {_fmt(item['X_at_Mk'])}  residual = {item['residual_bifurcation']:.3g}" if item["M_k"] is not None else "")
            + f"  ({item['reason']})"
        )

    if out_dir is None:
        return
    inputs = {"N": N, "p": p, "M": values, "modes": list(modes or (1,)) if bifurcate else []}
    try:
        out = _output_dir(out_dir, "separable")
    except OSError as exc:
        _fail(None, exc, EXIT_IO)
        return
    run = _open_run("separable", inputs, out)

    try:
        artifacts = [
            reports.write_csv(
                rows, os.path.join(out, "constant_solutions.csv"), ["N", "p", "q", "M", "case", "X0", "root_index", "X", "residual"], out
            )
        ]
        if bifurcate:
            columns = [
                "k", "lambda_k", "M_k", "X_at_Mk", "root_index", "target", "residual_constant",
                "residual_bifurcation", "below_mu_star", "nonnegative_M_branch", "negative_M_branch", "reason",
            ]
            artifacts.append(reports.write_csv(bifurcations, os.path.join(out, "bifurcation.csv"), columns, out))
        reports.write_manifest(out, "separable", inputs, {}, artifacts)
    except OSError as exc:
        _fail(run, exc, EXIT_IO)
        return
    _close_run(run, EXIT_OK, artifacts)


@scan_bp.cli.command("verify")
@click.argument("suite", type=click.Choice(SUITE_NAMES))
@click.option("--pdf", "pdf_path", type=click.Path(dir_okay=False), default=None, help="Also render a PDF report.")
@common_options
def verify_command(suite, pdf_path, rmax, rtol, atol, out_dir, config_file, jobs):
    """Run a verification suite; exit 1 if any check fails."""

    try:
        cfg, workers = _settings(rmax, rtol, atol, config_file, jobs)
    except RadialLabError as exc:
        _fail(None, exc, EXIT_USAGE)
        return

    try:
        out = _output_dir(out_dir, "verify")
    except OSError as exc:
        _fail(None, exc, EXIT_IO)
        return
    run = _open_run("verify", {"suite": suite}, out)

    report = run_suites(suite, cfg, workers)
    for item in report.checks:
        click.echo(f"[{'pass' if item['passed'] else 'FAIL'}] {item['name']}: {item['value']} (expected {item['expected']})")

    try:
        artifacts = [reports.write_json(report.as_dict(), os.path.join(out, "verification.json"), out)]
        reports.write_manifest(out, "verify", {"suite": suite}, cfg.as_dict(), artifacts)
        if pdf_path:
            reports.build_verification_pdf(f"Verification: {suite}", report.checks, pdf_path)
    except OSError as exc:
        _fail(run, exc, EXIT_IO)
        return

    code = EXIT_OK if report.passed else EXIT_VERIFY_FAILED
    _close_run(run, code, artifacts, summary={"total": len(report.checks), "failed": len(report.failures)})
    click.echo(f"{len(report.checks) - len(report.failures)}/{len(report.checks)} checks passed")
    if code:
        _exit(code)
