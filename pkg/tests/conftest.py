import pytest

# criterion number -> list of (state, detail); filled by the acceptance tests
ACCEPTANCE = {}


def _state(ok):
    return "SKIP" if ok is None else ("PASS" if ok else "FAIL")


@pytest.fixture
def report():
    def _report(cid, ok, detail):
        ACCEPTANCE.setdefault(cid, []).append((_state(ok), detail))
        print(f"criterion {cid}: {_state(ok)} {detail}")
    return _report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE):
        for state, detail in ACCEPTANCE[cid]:
            terminalreporter.write_line(f"criterion {cid}: {state} {detail}")
