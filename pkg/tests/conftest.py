import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from planarcda.data import SynthSpec, gen_synthetic

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def random_spd(rng, k, cond=1e3):
    """Random SPD matrix with eigenvalues spread over ``cond``."""
    Q, _ = np.linalg.qr(rng.standard_normal((k, k)))
    w = np.geomspace(1.0, cond, k)
    return (Q * w) @ Q.T


def random_sym(rng, k):
    A = rng.standard_normal((k, k))
    return 0.5 * (A + A.T)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def synth7():
    """The reference seeded set: c=3, 20 per class, separation 5, sigma 0.5, seed 7."""
    return gen_synthetic(SynthSpec(classes=3, per_class=20, class_separation=5.0,
                                   noise_sigma=0.5, seed=7))


@pytest.fixture(scope="session")
def small_set():
    return gen_synthetic(SynthSpec(classes=3, per_class=6, shape=(6, 5, 4, 3),
                                   class_separation=3.0, noise_sigma=0.5, seed=2))


# one line per acceptance criterion, printed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
