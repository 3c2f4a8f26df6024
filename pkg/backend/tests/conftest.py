import sys
from pathlib import Path

import numpy as np
import pytest

BACKEND = Path(__file__).resolve().parent.parent
if str(BACKEND) not in sys.path:
    sys.path.insert(0, str(BACKEND))

from services.funcspec import LimitProfile  # noqa: E402
from services.rates import get_rates_context  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope='session')
def ctx():
    """Shared rates context at alpha = 1.5 (envelope calibration runs once)"""
    return get_rates_context(1.5, 10_000)


@pytest.fixture(scope='session')
def profile():
    return LimitProfile(1.5)
