import pytest


@pytest.fixture(autouse=True)
def failure_log(tmp_path, monkeypatch):
    """Keeps diverged-trial entries out of the working tree's .tmp/."""
    path = tmp_path / "trial_failures.json"
    monkeypatch.setenv("RECOVERY_FAILURE_LOG", str(path))
    return path
