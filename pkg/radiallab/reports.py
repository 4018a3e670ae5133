"""File writers for radiallab runs: CSV tables, JSON manifests, SVG region maps and PDF reports."""
from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass
from datetime import datetime
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import pandas as pd
from reportlab.graphics import renderSVG
from reportlab.graphics.shapes import Drawing, Rect, String
from reportlab.lib import colors
from reportlab.lib.pagesizes import letter
from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
from reportlab.lib.units import inch
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from . import __version__
from .diagnostics import energy_H, energy_Hprime
from .radial_ode import Trajectory


logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"

TRAJECTORY_COLUMNS = ["r", "u", "du", "H", "Hprime"]

TAG_COLORS = {
    "Crossing": colors.HexColor("#D9534F"),
    "PositiveMinimum": colors.HexColor("#F0AD4E"),
    "GroundStateCandidate": colors.HexColor("#2A4BFF"),
    "BlowUp": colors.HexColor("#5B2C6F"),
    "Undetermined": colors.HexColor("#B0B0B0"),
}


@dataclass(frozen=True)
class Artifact:
    path: str
    sha256: str
    rows: Optional[int] = None

    def as_dict(self) -> Dict[str, object]:
        return {"path": self.path, "sha256": self.sha256, "rows": self.rows}


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _artifact(out_dir: str, path: str, rows: Optional[int] = None) -> Artifact:
    return Artifact(path=os.path.relpath(path, out_dir), sha256=sha256_file(path), rows=rows)


def write_csv(rows: Sequence[Mapping[str, object]], path: str, columns: Sequence[str], out_dir: str) -> Artifact:
    frame = pd.DataFrame(list(rows), columns=list(columns))
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.debug("Wrote CSV", extra={"path": path, "rows": len(frame)})
    return _artifact(out_dir, path, rows=len(frame))


def dumps(payload: object) -> str:
    return json.dumps(payload, sort_keys=True, indent=2, default=str) + "\n"


def write_json(payload: object, path: str, out_dir: str) -> Artifact:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(dumps(payload))
    return _artifact(out_dir, path)


def trajectory_rows(traj: Trajectory) -> List[Dict[str, float]]:
    H = energy_H(traj, traj.params)
    # H' is undefined at r = 0; the first sample sits at r0 > 0.
    Hp = energy_Hprime(traj, traj.params)
    return [
        {"r": float(r), "u": float(u), "du": float(du), "H": float(h), "Hprime": float(hp)}
        for r, u, du, h, hp in zip(traj.r, traj.u, traj.du, H, Hp)
    ]


def write_trajectory(traj: Trajectory, path: str, out_dir: str) -> Artifact:
    return write_csv(trajectory_rows(traj), path, TRAJECTORY_COLUMNS, out_dir)


def write_manifest(
    out_dir: str,
    command: str,
    inputs: Mapping[str, object],
    config: Mapping[str, object],
    artifacts: Iterable[Artifact],
    totals: Optional[Mapping[str, int]] = None,
) -> str:
    """manifest.json lists every data file with its hash; it carries no timestamps."""

    manifest = {
        "command": command,
        "inputs": dict(inputs),
        "config": dict(config),
        "code_version": __version__,
        "totals": dict(totals or {}),
        "files": [artifact.as_dict() for artifact in sorted(artifacts, key=lambda a: a.path)],
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(dumps(manifest))
    return path


def write_timing(out_dir: str, started_at: datetime, finished_at: datetime) -> str:
    path = os.path.join(out_dir, "timing.json")
    payload = {
        "started_at": started_at.isoformat(),
        "finished_at": finished_at.isoformat(),
        "seconds": (finished_at - started_at).total_seconds(),
    }
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(dumps(payload))
    return path


def region_map_svg(
    records: Sequence[Mapping[str, object]],
    x_key: str,
    y_key: str,
    path: str,
    out_dir: str,
    title: str = "",
) -> Artifact:
    """One coloured cell per (x, y) grid point, keyed on the classification tag."""

    xs = sorted({float(record[x_key]) for record in records})
    ys = sorted({float(record[y_key]) for record in records})
    cell, margin, legend = 18, 60, 150
    width = margin + cell * len(xs) + legend
    height = margin + cell * len(ys) + 40

    drawing = Drawing(width, height)
    if title:
        drawing.add(String(margin, height - 20, title, fontName="Helvetica-Bold", fontSize=11))
    for record in records:
        i = xs.index(float(record[x_key]))
        j = ys.index(float(record[y_key]))
        fill = TAG_COLORS.get(str(record["classification"]), colors.black)
        drawing.add(Rect(margin + i * cell, margin / 2 + j * cell, cell, cell, fillColor=fill, strokeColor=colors.white, strokeWidth=0.5))

    drawing.add(String(margin, 8, f"{x_key}: {xs[0]:.4g} .. {xs[-1]:.4g}", fontName="Helvetica", fontSize=9))
    drawing.add(String(4, margin / 2 - 12, f"{y_key}: {ys[0]:.4g} .. {ys[-1]:.4g}", fontName="Helvetica", fontSize=9))
    for n, (tag, color) in enumerate(TAG_COLORS.items()):
        y = height - 50 - 16 * n
        drawing.add(Rect(width - legend + 10, y, 10, 10, fillColor=color, strokeColor=None))
        drawing.add(String(width - legend + 26, y + 1, tag, fontName="Helvetica", fontSize=9))

    renderSVG.drawToFile(drawing, path)
    return _artifact(out_dir, path)


def build_verification_pdf(title: str, checks: Sequence[Mapping[str, object]], path: str) -> str:
    """Verification report: summary table followed by one row per check."""

    document = SimpleDocTemplate(
        path,
        pagesize=letter,
        title=title,
        leftMargin=0.75 * inch,
        rightMargin=0.75 * inch,
        topMargin=0.75 * inch,
        bottomMargin=0.75 * inch,
    )

    styles = getSampleStyleSheet()
    brand_blue = colors.HexColor("#2A4BFF")
    header_style = ParagraphStyle(
        "ReportHeader",
        parent=styles["Heading1"],
        fontSize=22,
        leading=28,
        textColor=brand_blue,
    )
    subtitle_style = ParagraphStyle(
        "ReportSubtitle",
        parent=styles["Heading2"],
        fontSize=14,
        leading=18,
    )
    cell_style = ParagraphStyle("ReportCell", parent=styles["BodyText"], fontSize=8, leading=10)

    story = [
        Paragraph("radiallab", header_style),
        Paragraph(title, subtitle_style),
        Spacer(1, 0.2 * inch),
    ]

    passed = sum(1 for check in checks if check.get("passed"))
    summary_rows = [
        ["Generated", datetime.utcnow().strftime("%b %d, %Y %I:%M %p UTC")],
        ["Checks", f"{len(checks):,}"],
        ["Passed", f"{passed:,}"],
        ["Failed", f"{len(checks) - passed:,}"],
    ]
    summary_table = Table([["Metric", "Value"], *summary_rows], hAlign="LEFT", colWidths=[2.3 * inch, 4.0 * inch])
    summary_table.setStyle(
        TableStyle(
            [
                ("BACKGROUND", (0, 0), (-1, 0), brand_blue),
                ("TEXTCOLOR", (0, 0), (-1, 0), colors.white),
                ("FONTNAME", (0, 0), (-1, 0), "Helvetica-Bold"),
                ("ALIGN", (0, 0), (-1, 0), "LEFT"),
                ("ALIGN", (1, 1), (1, -1), "RIGHT"),
                ("ROWBACKGROUNDS", (0, 1), (-1, -1), [colors.whitesmoke, colors.white]),
                ("GRID", (0, 0), (-1, -1), 0.25, colors.lightgrey),
                ("FONTSIZE", (0, 0), (-1, 0), 11),
            ]
        )
    )
    story.append(summary_table)
    story.append(Spacer(1, 0.3 * inch))

    rows = [["Check", "Result", "Value", "Expected", "Detail"]]
    for check in checks:
        rows.append(
            [
                Paragraph(str(check.get("name", "")), cell_style),
                "pass" if check.get("passed") else "FAIL",
                _render(check.get("value")),
                _render(check.get("expected")),
                Paragraph(str(check.get("detail") or ""), cell_style),
            ]
        )
    checks_table = Table(rows, repeatRows=1, colWidths=[1.9 * inch, 0.6 * inch, 1.0 * inch, 1.0 * inch, 2.5 * inch])
    style = [
        ("BACKGROUND", (0, 0), (-1, 0), brand_blue),
        ("TEXTCOLOR", (0, 0), (-1, 0), colors.white),
        ("FONTNAME", (0, 0), (-1, 0), "Helvetica-Bold"),
        ("FONTSIZE", (0, 0), (-1, -1), 8),
        ("VALIGN", (0, 0), (-1, -1), "TOP"),
        ("ROWBACKGROUNDS", (0, 1), (-1, -1), [colors.whitesmoke, colors.white]),
        ("GRID", (0, 0), (-1, -1), 0.25, colors.lightgrey),
    ]
    for index, check in enumerate(checks, start=1):
        if not check.get("passed"):
            style.append(("TEXTCOLOR", (1, index), (1, index), colors.red))
    checks_table.setStyle(TableStyle(style))
    story.append(checks_table)

    document.build(story)
    return path


def _render(value: object) -> str:
    if value is None or value == "":
        return "-"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)
