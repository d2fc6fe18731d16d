import os

import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture(autouse=True)
def _no_seed_override(monkeypatch):
    # a stray FRACSPDE_SEED in the shell must not change test outcomes
    monkeypatch.delenv("FRACSPDE_SEED", raising=False)
    yield
