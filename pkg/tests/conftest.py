import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def stall_runs():
    """Closed-loop ensembles from 25 and 30 degrees, every order, 20 seeds each.

    Shared by the acceptance suite and the ensemble-level property tests.
    """
    import time

    from gpcctl.sim import ORDERS, SimConfig, run_ensemble

    cfg = SimConfig()
    out = {}
    for a0 in (25.0, 30.0):
        t0 = time.perf_counter()
        runs = run_ensemble(cfg, [(o, a0, s) for o in ORDERS for s in range(20)])
        out[a0] = {"runs": runs, "seconds": time.perf_counter() - t0}
    return out


@pytest.fixture(scope="session")
def aircraft_design():
    from gpcctl.sim import SimConfig, design_for

    cfg = SimConfig()
    return design_for(cfg.aircraft, tuple(cfg.Q_weights), float(cfg.R_weight))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one ``PASS``/``FAIL`` line per acceptance criterion."""

    def emit(number: int, ok: bool, text: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {text}"
        print(line)
        ACCEPTANCE_LINES.append(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
