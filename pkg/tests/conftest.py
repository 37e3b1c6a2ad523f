"""Shared pytest hooks: collect and print the acceptance verdicts."""

ACCEPTANCE = {}


def record(criterion, ok, detail=""):
    line = "CRITERION %2d: %s  %s" % (criterion, "PASS" if ok else "FAIL", detail)
    ACCEPTANCE[criterion] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
