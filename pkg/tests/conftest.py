import pytest

from expander_lab.curve import ExpanderParams, integrate_expander_curve
from expander_lab.geometry.charts import product_with_flat


@pytest.fixture(scope="session")
def unit_expander():
    return integrate_expander_curve(ExpanderParams(1.0, 1.0))


@pytest.fixture(scope="session")
def hyperplane(unit_expander):
    return product_with_flat(unit_expander, 1)


@pytest.fixture(scope="session")
def hyperplane3(unit_expander):
    return product_with_flat(unit_expander, 2)


ACCEPTANCE_LINES = {}


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""
    def record(number, ok, detail):
        line = f"AC{number:>2} {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
