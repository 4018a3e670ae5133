from dotenv import load_dotenv
load_dotenv()
import os

from flask import Flask
from flask_sqlalchemy import SQLAlchemy

from .errors import ConfigError


db = SQLAlchemy()

__version__ = "0.1.0"


# Numeric settings and how to coerce values read from the environment or a config file.
CONFIG_DEFAULTS: dict[str, tuple[type, object]] = {
    "RADIALLAB_RTOL": (float, 1e-9),
    "RADIALLAB_ATOL": (float, 1e-12),
    "RADIALLAB_R0": (float, 1e-4),
    "RADIALLAB_RMAX": (float, 100.0),
    "RADIALLAB_MAX_STEPS": (int, 200000),
    "RADIALLAB_SAMPLES": (int, 2000),
    "RADIALLAB_ZERO_FRACTION": (float, 0.25),
    "RADIALLAB_BLOWUP_FACTOR": (float, 1e8),
    "RADIALLAB_DECAY_SLACK": (float, 0.05),
    "RADIALLAB_JOBS": (int, 1),
    "RADIALLAB_EQ_TOL": (float, 1e-12),
    "RADIALLAB_METHOD": (str, "DOP853"),
}


def _coerce(key: str, value):
    kind, _ = CONFIG_DEFAULTS.get(key, (str, None))
    try:
        return kind(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key} must be a {kind.__name__}, got {value!r}") from exc


def load_key_value_file(handle) -> dict:
    """Parse ``key = value`` lines; blank lines and ``#`` comments are skipped."""

    settings = {}
    for number, raw in enumerate(handle.read().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {number}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.upper()
        if not key.startswith("RADIALLAB_"):
            key = f"RADIALLAB_{key}"
        settings[key] = _coerce(key, value)
    return settings


def apply_config_file(app: Flask, path: str) -> None:
    app.config.from_file(os.path.abspath(path), load=load_key_value_file, text=True)


def create_app(test_config=None):
    app = Flask(__name__, instance_relative_config=True)

    app.config.from_mapping(
        SQLALCHEMY_DATABASE_URI=os.environ.get(
            "RADIALLAB_DATABASE_URL",
            "sqlite:///radiallab.db",
        ),
        SQLALCHEMY_TRACK_MODIFICATIONS=False,
        RADIALLAB_OUTPUT_DIR=os.environ.get("RADIALLAB_OUTPUT_DIR", "results"),
    )

    for key, (_, default) in CONFIG_DEFAULTS.items():
        raw = os.environ.get(key)
        app.config.setdefault(key, _coerce(key, raw) if raw is not None else default)

    config_file = os.environ.get("RADIALLAB_CONFIG_FILE")
    if config_file:
        apply_config_file(app, config_file)

    if test_config:
        app.config.update(test_config)

    # app.logger is the "radiallab" logger; library modules log to its children.
    app.logger.setLevel(os.environ.get("RADIALLAB_LOG_LEVEL", "INFO"))

    try:
        os.makedirs(app.instance_path, exist_ok=True)
    except OSError:
        pass

    db.init_app(app)

    from . import models  # noqa: F401

    with app.app_context():
        db.create_all()

    from .scan_cli import scan_bp

    app.register_blueprint(scan_bp)

    @app.cli.command("init-db")
    def init_db_command():
        """Create the run registry tables."""

        db.create_all()
        print("Database ready.")

    return app
