import numpy as np
import pytest

from scootsub.core import DistanceBinScheme, ModalTripMatrix, ZoneId, ZoneProfile
from scootsub.synth import ScenarioConfig, generate


def make_profile(zone="z1", **over):
    kw = dict(population=10000.0, area=2.0, median_age=35.0, age_ratio_20_40=0.4, labor_rate=70.0,
              median_income=60000.0, health_insurance_rate=92.0, unemployment_rate=5.0)
    kw.update(over)
    return ZoneProfile(zone=ZoneId(zone, "zip"), **kw)


def small_matrix(counts, modes=("taxi", "transit"), zones=("a", "b"), scheme=None):
    counts = np.asarray(counts, dtype=float)
    scheme = scheme or DistanceBinScheme.uniform(counts.shape[2])
    return ModalTripMatrix(tuple(modes), tuple(ZoneId(z) for z in zones), scheme, counts)


@pytest.fixture(scope="session")
def noiseless_scenario():
    return generate(ScenarioConfig(seed=1))


@pytest.fixture(scope="session")
def small_scenario():
    return generate(ScenarioConfig(n_zones=20, seed=5))


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
