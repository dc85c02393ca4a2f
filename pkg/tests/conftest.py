
CRITERIA = {
    1: "gradient verification",
    2: "cell-equation fidelity",
    3: "attention properties",
    4: "learning sanity",
    5: "metric oracle",
    6: "protocol fidelity",
    7: "end-to-end regression",
    8: "hyperparameter defaults",
}

_outcomes: dict[int, list[bool]] = {}


def _criterion(item_name: str):
    # test_criterion_<n>_...
    parts = item_name.split("_")
    if len(parts) > 2 and parts[0] == "test" and parts[1] == "criterion" and parts[2].isdigit():
        return int(parts[2])
    return None


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    n = _criterion(report.nodeid.split("::")[-1])
    if n is not None:
        _outcomes.setdefault(n, []).append(report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        if n in _outcomes:
            status = "PASS" if all(_outcomes[n]) else "FAIL"
            terminalreporter.write_line(f"criterion {n} ({CRITERIA[n]}): {status}")
