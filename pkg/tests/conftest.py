import os

# keep property tests reproducible and single-threaded unless asked otherwise
os.environ.setdefault("VERISYNTH_THREADS", "1")

ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
