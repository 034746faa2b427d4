import csv

import pytest

from segspat.synthetic import SynthConfig, generate_synthetic

FIELDS = ["region", "date", "population", "new_cases", "cum_cases", "cum_deaths", "fully_vaccinated"]


def write_counts(path, rows, fields=FIELDS, delimiter=","):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter)
        w.writerow(fields)
        w.writerows(rows)
    return path


SMALL = SynthConfig(
    n_regions=5,
    n_dates=40,
    midpoint_range=(12.0, 28.0),
    steepness=3.0,
    true_lag=2,
    trend_df=3,
    seed=1,
)


@pytest.fixture(scope="session")
def small_synth():
    return generate_synthetic(SMALL)


_CRITERIA = {}


@pytest.fixture
def record_criterion():
    """Record one acceptance criterion's outcome for the end-of-run summary."""

    def record(number, title, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {title}  ({detail})"
        _CRITERIA[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
