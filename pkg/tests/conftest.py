from __future__ import annotations

import pytest

from canentropy.evaluation import EvalConfig, build_baseline_template
from canentropy.traffic import default_scenario


@pytest.fixture(scope="session")
def vehicle():
    return default_scenario()


@pytest.fixture(scope="session")
def template(vehicle):
    return build_baseline_template(vehicle, seed=123, cfg=EvalConfig())


# One PASS/FAIL line per acceptance criterion in the terminal summary.
_criteria: list[tuple[str, str, str]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if item.module.__name__.endswith("test_acceptance") and (rep.when == "call" or rep.failed):
        doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "measured")
        _criteria.append(("PASS" if rep.passed else "FAIL", doc, detail))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for status, doc, detail in _criteria:
        terminalreporter.write_line(f"{status}  {doc}" + (f"  [{detail}]" if detail else ""))
