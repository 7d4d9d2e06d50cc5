"""Collects one verdict line per acceptance criterion and prints them at the end of the run."""

VERDICTS: list[tuple[int, str, str, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, verdict, detail in sorted(VERDICTS):
        terminalreporter.write_line(f"criterion {number} {name}: {verdict}  {detail}")
