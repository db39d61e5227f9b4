"""Collects one verdict line per acceptance criterion and prints them at the end of the run."""

VERDICTS: dict[int, str] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    prev = VERDICTS.get(criterion)
    if prev is not None and prev.startswith("FAIL"):
        ok = False
        detail = prev.split(": ", 1)[1] + "; " + detail
    elif prev is not None:
        detail = prev.split(": ", 1)[1] + "; " + detail
    VERDICTS[criterion] = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[k])
