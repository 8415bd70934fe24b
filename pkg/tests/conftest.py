import pytest

from clicksim.study import DEFAULT_STUDY_SEED, run_simulated_study


@pytest.fixture(scope="session")
def study_records():
    """Full simulated study at the default seed, shared across tests."""
    return run_simulated_study(DEFAULT_STUDY_SEED)
