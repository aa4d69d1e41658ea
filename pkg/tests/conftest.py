import numpy as np
import pytest

from wpimpact.simgen import SimConfig, generate_season
from wpimpact.wpgrid import accumulate_counts, build_grid


@pytest.fixture(scope="session")
def training_grid():
    """Grid trained on 1500 zero-effect simulated games."""
    cfg = SimConfig(n_games=1500, player_scale=0.0, season=2010, seed=101)
    logs, _ = generate_season(cfg)
    return build_grid(accumulate_counts(logs))


@pytest.fixture(scope="session")
def small_season():
    cfg = SimConfig(n_games=40, season=2014, seed=5)
    return generate_season(cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict(request):
    """Record a one-line pass/fail verdict for an acceptance criterion."""

    def record(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
