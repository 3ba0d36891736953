import numpy as np
import pytest

from loraisac.phy import ChirpParams

_ACCEPTANCE = []


class AcceptanceLog:
    def record(self, criterion: int, title: str, passed: bool, detail: str) -> None:
        _ACCEPTANCE.append((criterion, title, passed, detail))


@pytest.fixture
def acceptance():
    return AcceptanceLog()


@pytest.fixture
def params():
    return ChirpParams()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    by_criterion = {}
    for criterion, title, passed, detail in _ACCEPTANCE:
        by_criterion.setdefault(criterion, []).append((title, passed, detail))
    for criterion in sorted(by_criterion):
        parts = by_criterion[criterion]
        verdict = "PASS" if all(p for _, p, _ in parts) else "FAIL"
        text = "; ".join(f"{t}: {'ok' if p else 'failed'}, {d}" for t, p, d in parts)
        terminalreporter.write_line(f"ACCEPTANCE {criterion}: {verdict} ({text})")
