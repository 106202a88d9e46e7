def pytest_runtest_logreport(report):
    # One visible pass/fail line per acceptance criterion, with any metrics
    # the test printed (measured times, rates).
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    outcome = "PASS" if report.passed else ("FAIL" if report.failed else report.outcome.upper())
    print(f"\n[acceptance] {name}: {outcome}")
    captured = getattr(report, "capstdout", "")
    for line in captured.splitlines():
        if line.strip():
            print(f"[acceptance]   {line.strip()}")
