import numpy as np
import pytest

import piglm as pg

# Acceptance-criterion outcomes, registered by tests/test_acceptance.py and
# printed one line per criterion at the end of the run.
ACCEPTANCE_RESULTS = {}


def record_criterion(number, name, checks):
    """checks: list of (description, bool). Registers then returns failures."""
    failed = [desc for desc, ok in checks if not ok]
    ACCEPTANCE_RESULTS[number] = (name, not failed, failed)
    return failed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        name, passed, failed = ACCEPTANCE_RESULTS[number]
        line = f"criterion {number:2d} {name}: {'PASS' if passed else 'FAIL'}"
        if failed:
            line += " [" + "; ".join(failed) + "]"
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def trial_records():
    return pg.parse_trial_csv(pg.bundled_trials_path())


@pytest.fixture(scope="session")
def credence_primary(trial_records):
    data, meta = pg.trial_model_data(trial_records, "CREDENCE", "primary")
    return data, pg.fit_irls("poisson", "log", data)


@pytest.fixture(scope="session")
def dapa_dka(trial_records):
    data, meta = pg.trial_model_data(trial_records, "DAPA-CKD", "dka")
    return data, pg.fit_irls("poisson", "log", data)


@pytest.fixture
def rng():
    return np.random.default_rng(20260824)
