"""Shared pytest hooks: the acceptance tests record one line per criterion,
printed at the end of the run."""

CRITERIA = {}


def record(criterion, passed, detail):
    CRITERIA[criterion] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(CRITERIA, key=int):
        passed, detail = CRITERIA[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if passed else 'FAIL'}  {detail}")
