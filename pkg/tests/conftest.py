import pytest

from radiallab import create_app, db
from radiallab.params import ProblemParams
from radiallab.radial_ode import IntegratorConfig


@pytest.fixture
def app(tmp_path):
    app = create_app(
        {
            "TESTING": True,
            "SQLALCHEMY_DATABASE_URI": "sqlite:///:memory:",
            "RADIALLAB_OUTPUT_DIR": str(tmp_path / "results"),
        }
    )
    with app.app_context():
        db.create_all()
        yield app
        db.session.remove()
        db.drop_all()


@pytest.fixture
def runner(app):
    return app.test_cli_runner()


@pytest.fixture
def cfg():
    return IntegratorConfig()


@pytest.fixture
def aubin_talenti_params():
    return ProblemParams(N=3, p=5.0, q=1.5, M=0.0)

