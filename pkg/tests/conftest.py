import os
import re
import sys

sys.path.insert(0, os.path.dirname(__file__))


def pytest_runtest_logreport(report):
    """One pass/fail line per acceptance criterion, regardless of outcome."""
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    match = re.search(r"test_criterion_(\d+)", report.nodeid)
    if not match:
        return
    status = "PASS" if report.passed else "FAIL"
    line = f"[acceptance criterion {int(match.group(1)):2d}] {status}"
    print(f"\n{line}", flush=True)
