import os
import tempfile

# keep test logs out of ./output; must happen before any src module builds its logger
os.environ.setdefault("SUPCRIT_LOG_FILE", os.path.join(tempfile.gettempdir(), "supcrit-tests.log"))

import pytest  # noqa: E402

from model import Constant, InverseSquareAt0, ModelConfig, Punctured, RadialPower, StretchedExp  # noqa: E402


@pytest.fixture
def brownian():
    """A = 1, alpha = 1, beta = 0 in d = 3"""
    return ModelConfig(d=3, p=2.0)


@pytest.fixture
def half_laplacian():
    return RadialPower(m=0.0, C0=2.0, coefficient=0.5)


@pytest.fixture
def punctured_d3(half_laplacian):
    return ModelConfig(d=3, p=2.0, motion=half_laplacian, domain=Punctured())


@pytest.fixture
def punctured_d4(half_laplacian):
    return ModelConfig(d=4, p=2.0, motion=half_laplacian, domain=Punctured())


@pytest.fixture
def punctured_d3_damped(half_laplacian):
    return ModelConfig(d=3, p=2.0, motion=half_laplacian, beta=InverseSquareAt0(-2.0), domain=Punctured())


@pytest.fixture
def fast_decay():
    """alpha = exp(-r^2.5) with A = 1"""
    return ModelConfig(d=3, p=2.0, alpha=StretchedExp(1.0, 1.0, 2.5))


@pytest.fixture
def fast_motion():
    return ModelConfig(d=3, p=2.0, motion=RadialPower(m=3.0), alpha=Constant(1.0))
