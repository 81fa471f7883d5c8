"""Shared pytest hooks: acceptance lines are repeated in the final summary."""

ACCEPTANCE_LINES = []


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance: end-to-end criteria (slow; about 45 minutes)")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
        terminalreporter.write_line(line)
