import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

FROZEN = Path(__file__).parent / "frozen" / "oracle_values.json"

# lines reported by the acceptance suite, printed in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def frozen():
    return json.loads(FROZEN.read_text())


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
