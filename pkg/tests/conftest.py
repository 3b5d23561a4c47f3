"""Shared pytest wiring: the acceptance-verdict summary section."""

_verdicts = []


def record_verdict(criterion: int, ok: bool, detail: str) -> None:
    """Register one pass/fail line for the end-of-run summary."""
    status = "PASS" if ok else "FAIL"
    line = f"[criterion {criterion}] {status} {detail}"
    _verdicts.append((criterion, line))
    print(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_verdicts):
        terminalreporter.write_line(line)
