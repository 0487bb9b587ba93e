import re
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import acceptance_log  # noqa: E402


def _order(item):
    n, suffix = re.match(r"(\d+)(\w*)", item[0]).groups()
    return int(n), suffix


def pytest_terminal_summary(terminalreporter):
    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(acceptance_log.LINES, key=_order):
            terminalreporter.write_line(line)
