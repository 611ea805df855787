import pytest

from nnhm.analysis import AnalysisConfig, run_analysis
from nnhm.effects import ContingencyTable
from nnhm.model import Dataset
from nnhm.priors import EffectPrior, half_normal

CRINS_COUNTS = [
    ("Heffron (2003)", 14, 61, 15, 20),
    ("Gibelli (2004)", 16, 28, 19, 28),
    ("Schuller (2005)", 3, 18, 8, 12),
    ("Ganschow (2005)", 9, 54, 29, 54),
    ("Spada (2006)", 4, 36, 11, 36),
    ("Gras (2008)", 0, 50, 3, 34),
]


def crins_dataset() -> Dataset:
    tables = [ContingencyTable.from_totals(*row[1:]) for row in CRINS_COUNTS]
    return Dataset.from_tables(tables, labels=[row[0] for row in CRINS_COUNTS])


def crins_config(**kw) -> AnalysisConfig:
    return AnalysisConfig(half_normal(0.5), EffectPrior.normal(0.0, 4.0), **kw)


@pytest.fixture(scope="session")
def crins():
    return crins_dataset()


@pytest.fixture(scope="session")
def crins_result(crins):
    return run_analysis(crins, crins_config())


@pytest.fixture(scope="session")
def randomized_result(crins):
    sub = crins.subset(["Heffron (2003)", "Spada (2006)"])
    return run_analysis(sub, crins_config())


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def acceptance(request, capsys):
    """Record and print one PASS/FAIL line for an acceptance criterion."""
    def report(number, title, ok, detail):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        request.config._acceptance_lines.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
