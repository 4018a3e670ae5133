from datetime import datetime

from . import db


RUN_STATUSES = ("running", "succeeded", "failed")


class TimestampMixin:
    created_at = db.Column(db.DateTime, default=datetime.utcnow)
    updated_at = db.Column(db.DateTime, default=datetime.utcnow, onupdate=datetime.utcnow)


class LabRun(TimestampMixin, db.Model):
    __tablename__ = "lab_runs"

    id = db.Column(db.Integer, primary_key=True)
    command = db.Column(db.String(40), nullable=False)
    parameters = db.Column(db.JSON, default=dict)
    output_dir = db.Column(db.String(500))
    status = db.Column(db.String(20), nullable=False, default="running")
    exit_code = db.Column(db.Integer)
    wall_seconds = db.Column(db.Float)
    summary = db.Column(db.JSON, default=dict)

    artifacts = db.relationship("RunArtifact", backref="run", lazy=True, cascade="all, delete-orphan")

    def finish(self, exit_code: int, summary=None) -> None:
        self.exit_code = exit_code
        self.status = "succeeded" if exit_code == 0 else "failed"
        self.wall_seconds = (datetime.utcnow() - self.created_at).total_seconds() if self.created_at else None
        if summary is not None:
            self.summary = summary

    def __repr__(self) -> str:
        return f"<LabRun {self.id} {self.command} {self.status}>"


class RunArtifact(TimestampMixin, db.Model):
    __tablename__ = "run_artifacts"

    id = db.Column(db.Integer, primary_key=True)
    run_id = db.Column(db.Integer, db.ForeignKey("lab_runs.id"), nullable=False)
    path = db.Column(db.String(500), nullable=False)
    sha256 = db.Column(db.String(64), nullable=False)
    rows = db.Column(db.Integer)
