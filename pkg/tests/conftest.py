import pytest

from airsplit.experiment import ExperimentConfig


@pytest.fixture
def small_cfg():
    """Scaled-down experiment that trains in well under a second."""
    return ExperimentConfig(
        agents=[2, 4],
        n_d=8,
        n_a=32,
        snr_db=[-20.0, 20.0],
        cu_budgets=[20_000],
        task_count=100,
        runs=2,
        seed=3,
        train_samples=300,
        test_samples=100,
        epochs=10,
        subcarriers=16,
    )
