import pytest

# criterion id -> (passed, detail), filled by the acceptance tests
VERDICTS = {}


@pytest.fixture
def record():
    def _record(cid, passed, detail):
        VERDICTS[cid] = (bool(passed), detail)
        print(f"{cid} {'PASS' if passed else 'FAIL'}  {detail}")
    return _record


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(VERDICTS):
        passed, detail = VERDICTS[cid]
        terminalreporter.write_line(f"{cid} {'PASS' if passed else 'FAIL'}  {detail}")
