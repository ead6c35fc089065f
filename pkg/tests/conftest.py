import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

ACCEPTANCE_RESULTS = {}


def record_criterion(number, passed, detail):
    ACCEPTANCE_RESULTS[number] = (passed, detail)
    print(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
