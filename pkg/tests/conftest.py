import numpy as np
import pytest

from bikebot.model import BikebotParams, LinkParams, RobotModel, default_model
from bikebot.units import DEG


@pytest.fixture(scope="session")
def model():
    return default_model()


@pytest.fixture(scope="session")
def toy_model():
    """Bikebot plus a 2-link arm reaching in the lateral plane."""
    return RobotModel(
        bike=BikebotParams(),
        links=(
            LinkParams(alpha=90 * DEG, a=0.0, d=0.2, m=1.0,
                       inertia=np.diag([2e-3, 2e-3, 1e-3])),
            LinkParams(alpha=0.0, a=0.3, d=0.0, m=0.8,
                       inertia=np.diag([1e-3, 8e-3, 8e-3])),
        ),
    )


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def random_configs(model, count, rng, scale=0.4):
    q = rng.uniform(-scale, scale, size=(count, model.n + 1))
    lo, hi = model.q_lower, model.q_upper
    return np.clip(q, lo + 1e-3, hi - 1e-3)
