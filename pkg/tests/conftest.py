import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance criteria lines, which capture would otherwise hide."""
    acceptance = sys.modules.get("test_acceptance")
    lines = getattr(acceptance, "RESULT_LINES", None) if acceptance else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
