import numpy as np
import pytest

from enzrank import synth


@pytest.fixture(scope="session")
def small_corpus():
    return synth.make_corpus(n_classes=3, reactions_per_class=2, enzymes_per_class=4, n_families=5, d_plm=8, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE: list[str] = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL/SKIP line per acceptance criterion."""

    def record(name: str, status, detail: str) -> bool:
        word = status if isinstance(status, str) else ("PASS" if status else "FAIL")
        line = f"{word:<4}  {name}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return word != "FAIL"

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
